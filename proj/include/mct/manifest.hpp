#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mct/common.hpp"

namespace mct::dataio {

struct ManifestEntry {
    std::string id;
    std::string image;  // path, relative paths resolve against the manifest directory
    std::optional<std::string> label;
    std::optional<std::string> mask;
    std::string split = "unsplit";  // train | val | test | unsplit
};

struct DatasetManifest {
    std::string name;
    std::vector<ManifestEntry> entries;
    std::map<std::string, std::string> metadata;
    std::filesystem::path base_dir;  // directory of the manifest file

    std::filesystem::path resolve(const std::string& rel) const {
        const std::filesystem::path p(rel);
        return p.is_absolute() ? p : base_dir / p;
    }

    const ManifestEntry* find(const std::string& id) const {
        for (const auto& e : entries)
            if (e.id == id) return &e;
        return nullptr;
    }
};

inline bool valid_split_tag(const std::string& s) {
    return s == "train" || s == "val" || s == "test" || s == "unsplit";
}

/// Parses and validates a dataset manifest. Entry order is preserved; ids
/// must be unique, split tags must come from the closed set, and every
/// referenced image/mask path must resolve to an existing file.
inline DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "load_manifest: cannot open " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail("load_manifest: parse failure in " + path + ": " + e.what());
    }

    DatasetManifest m;
    m.base_dir = std::filesystem::path(path).parent_path();
    try {
        m.name = j.value("name", std::string{});
        if (j.contains("metadata"))
            m.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
        require(j.contains("entries") && j.at("entries").is_array(),
                "load_manifest: missing \"entries\" array in " + path);
        for (const auto& je : j.at("entries")) {
            ManifestEntry e;
            e.id = je.at("id").get<std::string>();
            require(!e.id.empty(), "load_manifest: empty entry id in " + path);
            e.image = je.at("image").get<std::string>();
            if (je.contains("label") && !je.at("label").is_null())
                e.label = je.at("label").get<std::string>();
            if (je.contains("mask") && !je.at("mask").is_null())
                e.mask = je.at("mask").get<std::string>();
            if (je.contains("split") && !je.at("split").is_null())
                e.split = je.at("split").get<std::string>();
            require(valid_split_tag(e.split),
                    "load_manifest: entry \"" + e.id + "\" has invalid split tag \"" + e.split + "\"");
            m.entries.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        fail("load_manifest: parse failure in " + path + ": " + e.what());
    }

    std::set<std::string> seen;
    for (const auto& e : m.entries) {
        require(seen.insert(e.id).second, "load_manifest: duplicate id \"" + e.id + "\" in " + path);
        require(std::filesystem::exists(m.resolve(e.image)),
                "load_manifest: entry \"" + e.id + "\": unresolvable image path " + e.image);
        if (e.mask)
            require(std::filesystem::exists(m.resolve(*e.mask)),
                    "load_manifest: entry \"" + e.id + "\": unresolvable mask path " + *e.mask);
    }
    return m;
}

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
    nlohmann::json j;
    j["name"] = m.name;
    j["entries"] = nlohmann::json::array();
    for (const auto& e : m.entries) {
        nlohmann::json je;
        je["id"] = e.id;
        je["image"] = e.image;
        je["label"] = e.label ? nlohmann::json(*e.label) : nlohmann::json(nullptr);
        je["mask"] = e.mask ? nlohmann::json(*e.mask) : nlohmann::json(nullptr);
        je["split"] = e.split;
        j["entries"].push_back(je);
    }
    j["metadata"] = m.metadata;
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), "save_manifest: cannot open " + path);
    out << j.dump(2) << "\n";
}

}  // namespace mct::dataio
