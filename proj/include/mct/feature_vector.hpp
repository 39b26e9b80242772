#pragma once

#include <string>
#include <vector>

#include "mct/common.hpp"

namespace mct::features {

/// Identifies how a feature vector was produced. Vectors are only comparable
/// (distances, classifiers, stores) when provenance matches exactly.
struct Provenance {
    std::string backbone;
    std::string layer;
    std::string encoding;  // "raw" | "pca-<d>" | "vlad-<k>"

    bool operator==(const Provenance&) const = default;

    std::string str() const { return backbone + "/" + layer + "/" + encoding; }
};

struct FeatureVector {
    std::vector<float> values;
    Provenance provenance;

    std::size_t dim() const { return values.size(); }
};

inline void require_same_provenance(const Provenance& a, const Provenance& b,
                                    const std::string& where) {
    require(a == b, where + ": provenance mismatch (" + a.str() + " vs " + b.str() + ")");
}

}  // namespace mct::features
