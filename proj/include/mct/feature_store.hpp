#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mct/common.hpp"
#include "mct/feature_vector.hpp"

namespace mct::dataio {

/// Persistent collection of float32 feature vectors sharing one provenance.
/// On disk: manifest.json (backbone, layer, encoding, dim, ordered id list)
/// plus features.bin (N*D float32, little-endian, record-major). Single
/// writer per directory; concurrent reads are safe.
class FeatureStore {
public:
    FeatureStore() = default;
    FeatureStore(std::string backbone, std::string layer, std::string encoding, std::size_t dim)
        : backbone_(std::move(backbone)), layer_(std::move(layer)), encoding_(std::move(encoding)),
          dim_(dim) {}

    const std::string& backbone() const { return backbone_; }
    const std::string& layer() const { return layer_; }
    const std::string& encoding() const { return encoding_; }
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }

    features::Provenance provenance() const { return {backbone_, layer_, encoding_}; }

    void add(const std::string& id, const std::vector<float>& values) {
        require(!id.empty(), "FeatureStore::add: empty id");
        require(values.size() == dim_, "FeatureStore::add: record \"" + id + "\" has dimension " +
                                           std::to_string(values.size()) + ", store expects " +
                                           std::to_string(dim_));
        require(all_finite(values.data(), values.size()),
                "FeatureStore::add: record \"" + id + "\" contains non-finite values");
        require(index_.find(id) == index_.end(), "FeatureStore::add: duplicate id \"" + id + "\"");
        index_[id] = ids_.size();
        ids_.push_back(id);
        data_.insert(data_.end(), values.begin(), values.end());
    }

    void add(const std::string& id, const features::FeatureVector& v) {
        features::require_same_provenance(v.provenance, provenance(), "FeatureStore::add");
        add(id, v.values);
    }

    bool contains(const std::string& id) const { return index_.count(id) != 0; }

    const float* record(std::size_t i) const { return data_.data() + i * dim_; }

    const float* record(const std::string& id) const {
        const auto it = index_.find(id);
        require(it != index_.end(), "FeatureStore: no record with id \"" + id + "\"");
        return record(it->second);
    }

    features::FeatureVector vector(const std::string& id) const {
        const float* p = record(id);
        return {std::vector<float>(p, p + dim_), provenance()};
    }

    features::FeatureVector vector(std::size_t i) const {
        const float* p = record(i);
        return {std::vector<float>(p, p + dim_), provenance()};
    }

    const std::vector<float>& raw_data() const { return data_; }

private:
    std::string backbone_;
    std::string layer_;
    std::string encoding_ = "raw";
    std::size_t dim_ = 0;
    std::vector<std::string> ids_;
    std::map<std::string, std::size_t> index_;
    std::vector<float> data_;  // size() * dim_, record-major
};

namespace storedetail {

inline void write_f32_le(std::ofstream& out, const float* data, std::size_t n) {
    // host is little-endian on every supported target; keep the explicit
    // encode so the on-disk contract is unambiguous
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, &data[i], 4);
        const char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                           static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
        out.write(b, 4);
    }
}

inline std::vector<float> read_f32_le(std::ifstream& in, std::size_t n) {
    std::vector<float> out(n);
    std::vector<unsigned char> buf(n * 4);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    require(static_cast<std::size_t>(in.gcount()) == buf.size(), "feature payload truncated");
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t bits = std::uint32_t(buf[4 * i]) | (std::uint32_t(buf[4 * i + 1]) << 8) |
                                   (std::uint32_t(buf[4 * i + 2]) << 16) |
                                   (std::uint32_t(buf[4 * i + 3]) << 24);
        std::memcpy(&out[i], &bits, 4);
    }
    return out;
}

}  // namespace storedetail

inline void save_feature_store(const FeatureStore& store, const std::string& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["backbone"] = store.backbone();
    j["layer"] = store.layer();
    j["encoding"] = store.encoding();
    j["dim"] = store.dim();
    j["ids"] = store.ids();
    {
        std::ofstream out(std::filesystem::path(dir) / "manifest.json", std::ios::trunc);
        require(out.good(), "save_feature_store: cannot write manifest in " + dir);
        out << j.dump(2) << "\n";
    }
    std::ofstream bin(std::filesystem::path(dir) / "features.bin", std::ios::binary | std::ios::trunc);
    require(bin.good(), "save_feature_store: cannot write payload in " + dir);
    storedetail::write_f32_le(bin, store.raw_data().data(), store.raw_data().size());
    require(bin.good(), "save_feature_store: payload write failed in " + dir);
}

inline FeatureStore load_feature_store(const std::string& dir) {
    const auto manifest_path = std::filesystem::path(dir) / "manifest.json";
    const auto bin_path = std::filesystem::path(dir) / "features.bin";
    require(std::filesystem::exists(manifest_path), "load_feature_store: missing manifest.json in " + dir);
    require(std::filesystem::exists(bin_path), "load_feature_store: missing features.bin in " + dir);

    std::ifstream in(manifest_path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail("load_feature_store: bad manifest in " + dir + ": " + e.what());
    }
    std::size_t dim = 0;
    std::vector<std::string> ids;
    std::string backbone, layer, encoding;
    try {
        backbone = j.at("backbone").get<std::string>();
        layer = j.at("layer").get<std::string>();
        encoding = j.at("encoding").get<std::string>();
        dim = j.at("dim").get<std::size_t>();
        ids = j.at("ids").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        fail("load_feature_store: bad manifest in " + dir + ": " + e.what());
    }

    const auto payload_bytes = std::filesystem::file_size(bin_path);
    const auto expected_bytes = static_cast<std::uintmax_t>(ids.size()) * dim * 4;
    require(payload_bytes == expected_bytes,
            "load_feature_store: payload holds " + std::to_string(dim ? payload_bytes / 4 / dim : 0) +
                " records of dimension " + std::to_string(dim) + ", manifest lists " +
                std::to_string(ids.size()) + " (" + dir + ")");

    FeatureStore store(backbone, layer, encoding, dim);
    std::ifstream bin(bin_path, std::ios::binary);
    require(bin.good(), "load_feature_store: cannot open payload in " + dir);
    for (const auto& id : ids) {
        const auto values = storedetail::read_f32_le(bin, dim);
        store.add(id, values);
    }
    return store;
}

}  // namespace mct::dataio
