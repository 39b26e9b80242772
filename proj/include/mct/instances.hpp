#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mct/common.hpp"
#include "mct/image.hpp"
#include "mct/mask.hpp"

namespace mct::instances {

struct Instance {
    std::int32_t id = 0;  // 1-based, raster order of first pixel
    int row0 = 0, col0 = 0, row1 = 0, col1 = 0;  // tight bounding box, inclusive
    std::int64_t area = 0;
    double centroid_row = 0.0;
    double centroid_col = 0.0;
};

/// Disjoint labeled objects over one image; labels[i] is 0 for background or
/// the owning instance id.
struct InstanceSet {
    int height = 0;
    int width = 0;
    std::vector<std::int32_t> labels;
    std::vector<Instance> instances;

    std::int32_t at(int r, int c) const { return labels[static_cast<std::size_t>(r) * width + c]; }

    BinaryMask instance_mask(std::int32_t id) const {
        BinaryMask m = BinaryMask::blank(height, width);
        for (std::size_t i = 0; i < labels.size(); ++i) m.data[i] = labels[i] == id ? 1 : 0;
        return m;
    }

    BinaryMask foreground() const {
        BinaryMask m = BinaryMask::blank(height, width);
        for (std::size_t i = 0; i < labels.size(); ++i) m.data[i] = labels[i] != 0 ? 1 : 0;
        return m;
    }
};

namespace detail {

inline InstanceSet from_label_map(int height, int width, std::vector<std::int32_t> labels) {
    InstanceSet set;
    set.height = height;
    set.width = width;
    set.labels = std::move(labels);

    std::map<std::int32_t, Instance> by_id;
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            const auto id = set.labels[static_cast<std::size_t>(r) * width + c];
            if (id == 0) continue;
            auto it = by_id.find(id);
            if (it == by_id.end()) {
                Instance inst;
                inst.id = id;
                inst.row0 = inst.row1 = r;
                inst.col0 = inst.col1 = c;
                it = by_id.emplace(id, inst).first;
            }
            auto& inst = it->second;
            inst.row0 = std::min(inst.row0, r);
            inst.row1 = std::max(inst.row1, r);
            inst.col0 = std::min(inst.col0, c);
            inst.col1 = std::max(inst.col1, c);
            inst.area++;
            inst.centroid_row += r;
            inst.centroid_col += c;
        }
    for (auto& [id, inst] : by_id) {
        inst.centroid_row /= static_cast<double>(inst.area);
        inst.centroid_col /= static_cast<double>(inst.area);
        set.instances.push_back(inst);
    }
    std::sort(set.instances.begin(), set.instances.end(),
              [](const Instance& a, const Instance& b) { return a.id < b.id; });
    return set;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// connected components

inline InstanceSet connected_components(const BinaryMask& mask, int connectivity = 4) {
    require(connectivity == 4 || connectivity == 8, "connected_components: connectivity must be 4 or 8");
    const int h = mask.height, w = mask.width;
    std::vector<std::int32_t> labels(mask.data.size(), 0);
    std::int32_t next = 1;
    const int dr8[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
    const int dc8[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
    const int dr4[4] = {-1, 0, 0, 1};
    const int dc4[4] = {0, -1, 1, 0};
    const int* dr = connectivity == 4 ? dr4 : dr8;
    const int* dc = connectivity == 4 ? dc4 : dc8;
    const int nn = connectivity;

    std::deque<std::size_t> queue;
    for (std::size_t start = 0; start < mask.data.size(); ++start) {
        if (!mask.data[start] || labels[start] != 0) continue;
        labels[start] = next;
        queue.push_back(start);
        while (!queue.empty()) {
            const std::size_t p = queue.front();
            queue.pop_front();
            const int r = static_cast<int>(p) / w, c = static_cast<int>(p) % w;
            for (int k = 0; k < nn; ++k) {
                const int rr = r + dr[k], cc = c + dc[k];
                if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                const std::size_t np = static_cast<std::size_t>(rr) * w + cc;
                if (mask.data[np] && labels[np] == 0) {
                    labels[np] = next;
                    queue.push_back(np);
                }
            }
        }
        ++next;
    }
    return detail::from_label_map(h, w, std::move(labels));
}

// ---------------------------------------------------------------------------
// exact Euclidean distance transform (Felzenszwalb-Huttenlocher)

namespace detail {

inline void edt_1d(const std::vector<double>& f, std::vector<double>& d, int n) {
    std::vector<int> v(static_cast<std::size_t>(n));
    std::vector<double> z(static_cast<std::size_t>(n) + 1);
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            const int p = v[static_cast<std::size_t>(k)];
            s = ((f[static_cast<std::size_t>(q)] + q * q) - (f[static_cast<std::size_t>(p)] + p * p)) /
                (2.0 * q - 2.0 * p);
            if (s <= z[static_cast<std::size_t>(k)]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        z[static_cast<std::size_t>(k)] = s;
        z[static_cast<std::size_t>(k) + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[static_cast<std::size_t>(k) + 1] < q) ++k;
        const int p = v[static_cast<std::size_t>(k)];
        d[static_cast<std::size_t>(q)] =
            (q - p) * (q - p) + f[static_cast<std::size_t>(p)];
    }
}

}  // namespace detail

/// Squared Euclidean distance to the nearest background pixel; the virtual
/// border outside the image counts as background.
inline std::vector<double> distance_transform_squared(const BinaryMask& mask) {
    const int h = mask.height + 2, w = mask.width + 2;  // background ring
    const double inf = 1e18;
    std::vector<double> grid(static_cast<std::size_t>(h) * w, 0.0);
    for (int r = 0; r < mask.height; ++r)
        for (int c = 0; c < mask.width; ++c)
            grid[static_cast<std::size_t>(r + 1) * w + (c + 1)] = mask.at(r, c) ? inf : 0.0;

    std::vector<double> col_in(static_cast<std::size_t>(h)), col_out(static_cast<std::size_t>(h));
    for (int c = 0; c < w; ++c) {
        for (int r = 0; r < h; ++r) col_in[static_cast<std::size_t>(r)] = grid[static_cast<std::size_t>(r) * w + c];
        detail::edt_1d(col_in, col_out, h);
        for (int r = 0; r < h; ++r) grid[static_cast<std::size_t>(r) * w + c] = col_out[static_cast<std::size_t>(r)];
    }
    std::vector<double> row_in(static_cast<std::size_t>(w)), row_out(static_cast<std::size_t>(w));
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) row_in[static_cast<std::size_t>(c)] = grid[static_cast<std::size_t>(r) * w + c];
        detail::edt_1d(row_in, row_out, w);
        for (int c = 0; c < w; ++c) grid[static_cast<std::size_t>(r) * w + c] = row_out[static_cast<std::size_t>(c)];
    }

    std::vector<double> out(mask.data.size());
    for (int r = 0; r < mask.height; ++r)
        for (int c = 0; c < mask.width; ++c)
            out[static_cast<std::size_t>(r) * mask.width + c] =
                grid[static_cast<std::size_t>(r + 1) * w + (c + 1)];
    return out;
}

// ---------------------------------------------------------------------------
// watershed splitting

/// Splits touching convex objects along their necks: distance-transform
/// maxima (greedily suppressed within min_seed_distance, per component) seed
/// a flood that descends the distance map. Basins exactly cover the
/// foreground and never cross distinct 8-connected components.
inline InstanceSet watershed_split(const BinaryMask& mask, double min_seed_distance = 5.0) {
    const int h = mask.height, w = mask.width;
    const auto dist2 = distance_transform_squared(mask);
    const auto comps = connected_components(mask, 8);

    const int dr[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
    const int dc[8] = {-1, 0, 1, -1, 1, -1, 0, 1};

    // candidate maxima: foreground pixels whose distance is not exceeded by
    // any 8-neighbor
    std::vector<std::size_t> candidates;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const std::size_t p = static_cast<std::size_t>(r) * w + c;
            if (!mask.data[p]) continue;
            bool is_max = true;
            for (int k = 0; k < 8 && is_max; ++k) {
                const int rr = r + dr[k], cc = c + dc[k];
                if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                if (dist2[static_cast<std::size_t>(rr) * w + cc] > dist2[p]) is_max = false;
            }
            if (is_max) candidates.push_back(p);
        }
    std::sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
        if (dist2[a] != dist2[b]) return dist2[a] > dist2[b];
        return a < b;
    });

    // greedy suppression within each component
    const double min_d2 = min_seed_distance * min_seed_distance;
    std::vector<std::size_t> seeds;
    std::map<std::int32_t, std::vector<std::size_t>> kept_per_comp;
    for (const auto p : candidates) {
        const int r = static_cast<int>(p) / w, c = static_cast<int>(p) % w;
        const auto comp = comps.labels[p];
        auto& kept = kept_per_comp[comp];
        bool suppressed = false;
        for (const auto s : kept) {
            const double drr = static_cast<double>(r - static_cast<int>(s) / w);
            const double dcc = static_cast<double>(c - static_cast<int>(s) % w);
            if (drr * drr + dcc * dcc < min_d2) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) {
            kept.push_back(p);
            seeds.push_back(p);
        }
    }

    // flood in order of decreasing distance; ties resolve to the lower
    // raster index so the result is deterministic
    struct Entry {
        double dist2;
        std::size_t pixel;
        std::int32_t label;
    };
    auto cmp = [](const Entry& a, const Entry& b) {
        if (a.dist2 != b.dist2) return a.dist2 < b.dist2;  // max-heap on distance
        return a.pixel > b.pixel;
    };
    std::priority_queue<Entry, std::vector<Entry>, decltype(cmp)> heap(cmp);

    std::vector<std::int32_t> basin(mask.data.size(), 0);
    std::int32_t next_seed_id = 1;
    for (const auto p : seeds) {
        basin[p] = next_seed_id++;
        heap.push({dist2[p], p, basin[p]});
    }
    while (!heap.empty()) {
        const Entry e = heap.top();
        heap.pop();
        const int r = static_cast<int>(e.pixel) / w, c = static_cast<int>(e.pixel) % w;
        for (int k = 0; k < 8; ++k) {
            const int rr = r + dr[k], cc = c + dc[k];
            if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
            const std::size_t np = static_cast<std::size_t>(rr) * w + cc;
            if (!mask.data[np] || basin[np] != 0) continue;
            basin[np] = e.label;
            heap.push({dist2[np], np, e.label});
        }
    }

    // relabel basins 1..N by raster order of first pixel
    std::map<std::int32_t, std::int32_t> remap;
    std::int32_t next = 1;
    for (std::size_t p = 0; p < basin.size(); ++p) {
        if (basin[p] == 0) continue;
        if (!remap.count(basin[p])) remap[basin[p]] = next++;
        basin[p] = remap[basin[p]];
    }
    return detail::from_label_map(h, w, std::move(basin));
}

// ---------------------------------------------------------------------------
// patch extraction

/// One patch per instance: bounding box expanded by `padding`, clipped at the
/// image edges, pixels outside the instance mask set to the image median.
inline std::vector<dataio::Micrograph> extract_patches(const dataio::Micrograph& image,
                                                       const InstanceSet& set, int padding = 8) {
    require(image.height == set.height && image.width == set.width,
            "extract_patches: image/instance dimensions differ");
    require(padding >= 0, "extract_patches: negative padding");
    const auto median = image.channel_medians();

    std::vector<dataio::Micrograph> patches;
    patches.reserve(set.instances.size());
    for (const auto& inst : set.instances) {
        const int r0 = std::max(inst.row0 - padding, 0);
        const int r1 = std::min(inst.row1 + padding, image.height - 1);
        const int c0 = std::max(inst.col0 - padding, 0);
        const int c1 = std::min(inst.col1 + padding, image.width - 1);
        auto patch = dataio::Micrograph::blank(image.id + "#" + std::to_string(inst.id),
                                               r1 - r0 + 1, c1 - c0 + 1, image.channels);
        patch.scale = image.scale;
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c) {
                const bool inside = set.at(r, c) == inst.id;
                for (int ch = 0; ch < image.channels; ++ch)
                    patch.at(r - r0, c - c0, ch) =
                        inside ? image.at(r, c, ch) : median[static_cast<std::size_t>(ch)];
            }
        patches.push_back(std::move(patch));
    }
    return patches;
}

// ---------------------------------------------------------------------------
// instance matching

struct MatchReport {
    int true_positives = 0;
    int false_positives = 0;
    int false_negatives = 0;
    double precision = 1.0;  // 0/0 -> 1
    double recall = 1.0;
    double iou_threshold = 0.5;
};

/// Greedy one-to-one matching in descending IoU order; a pair matches iff
/// IoU >= tau.
inline MatchReport match_instances(const InstanceSet& pred, const InstanceSet& truth,
                                   double iou_threshold = 0.5) {
    require(pred.height == truth.height && pred.width == truth.width,
            "match_instances: image dimensions differ");
    require(iou_threshold > 0.0 && iou_threshold <= 1.0,
            "match_instances: IoU threshold must lie in (0, 1]");

    std::map<std::pair<std::int32_t, std::int32_t>, std::int64_t> inter;
    for (std::size_t i = 0; i < pred.labels.size(); ++i)
        if (pred.labels[i] != 0 && truth.labels[i] != 0) inter[{pred.labels[i], truth.labels[i]}]++;

    std::map<std::int32_t, std::int64_t> pred_area, truth_area;
    for (const auto& inst : pred.instances) pred_area[inst.id] = inst.area;
    for (const auto& inst : truth.instances) truth_area[inst.id] = inst.area;

    struct Pair {
        double iou;
        std::int32_t pred_id;
        std::int32_t truth_id;
    };
    std::vector<Pair> pairs;
    for (const auto& [key, count] : inter) {
        const double uni =
            static_cast<double>(pred_area[key.first] + truth_area[key.second] - count);
        pairs.push_back({static_cast<double>(count) / uni, key.first, key.second});
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        if (a.pred_id != b.pred_id) return a.pred_id < b.pred_id;
        return a.truth_id < b.truth_id;
    });

    std::map<std::int32_t, bool> pred_used, truth_used;
    MatchReport rep;
    rep.iou_threshold = iou_threshold;
    for (const auto& p : pairs) {
        if (p.iou < iou_threshold) break;
        if (pred_used[p.pred_id] || truth_used[p.truth_id]) continue;
        pred_used[p.pred_id] = truth_used[p.truth_id] = true;
        rep.true_positives++;
    }
    rep.false_positives = static_cast<int>(pred.instances.size()) - rep.true_positives;
    rep.false_negatives = static_cast<int>(truth.instances.size()) - rep.true_positives;
    if (rep.true_positives + rep.false_positives > 0)
        rep.precision =
            static_cast<double>(rep.true_positives) / (rep.true_positives + rep.false_positives);
    if (rep.true_positives + rep.false_negatives > 0)
        rep.recall =
            static_cast<double>(rep.true_positives) / (rep.true_positives + rep.false_negatives);
    return rep;
}

// ---------------------------------------------------------------------------
// serialization: instances.json + RLE sidecar
// RLE: per instance, row-major alternating (skip, run) uint32 little-endian
// pairs covering exactly height*width pixels

inline void save_instances(const InstanceSet& set, const std::string& json_path,
                           const std::string& rle_path) {
    std::ofstream bin(rle_path, std::ios::binary | std::ios::trunc);
    require(bin.good(), "save_instances: cannot open " + rle_path);
    auto put32 = [&](std::uint32_t v) {
        const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                           static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
        bin.write(b, 4);
    };

    nlohmann::json j;
    j["height"] = set.height;
    j["width"] = set.width;
    j["instances"] = nlohmann::json::array();
    std::size_t offset_pairs = 0;
    for (const auto& inst : set.instances) {
        std::vector<std::pair<std::uint32_t, std::uint32_t>> rle;
        std::size_t i = 0;
        const std::size_t total = set.labels.size();
        while (i < total) {
            std::uint32_t skip = 0, run = 0;
            while (i < total && set.labels[i] != inst.id) {
                ++skip;
                ++i;
            }
            while (i < total && set.labels[i] == inst.id) {
                ++run;
                ++i;
            }
            rle.emplace_back(skip, run);
        }
        for (const auto& [skip, run] : rle) {
            put32(skip);
            put32(run);
        }
        nlohmann::json je;
        je["id"] = inst.id;
        je["bbox"] = {inst.row0, inst.col0, inst.row1, inst.col1};
        je["area"] = inst.area;
        je["centroid"] = {inst.centroid_row, inst.centroid_col};
        je["rle_offset"] = offset_pairs;
        je["rle_pairs"] = rle.size();
        j["instances"].push_back(je);
        offset_pairs += rle.size();
    }
    require(bin.good(), "save_instances: write failed: " + rle_path);

    std::ofstream out(json_path, std::ios::trunc);
    require(out.good(), "save_instances: cannot open " + json_path);
    out << j.dump(2) << "\n";
}

inline InstanceSet load_instances(const std::string& json_path, const std::string& rle_path) {
    std::ifstream in(json_path);
    require(in.good(), "load_instances: cannot open " + json_path);
    std::ifstream bin(rle_path, std::ios::binary);
    require(bin.good(), "load_instances: cannot open " + rle_path);
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(bin)),
                                   std::istreambuf_iterator<char>());
    auto get32 = [&](std::size_t pair_idx, int half) {
        const std::size_t off = pair_idx * 8 + static_cast<std::size_t>(half) * 4;
        require(off + 4 <= raw.size(), "load_instances: RLE sidecar truncated");
        return std::uint32_t(raw[off]) | (std::uint32_t(raw[off + 1]) << 8) |
               (std::uint32_t(raw[off + 2]) << 16) | (std::uint32_t(raw[off + 3]) << 24);
    };

    try {
        const auto j = nlohmann::json::parse(in);
        InstanceSet set;
        set.height = j.at("height").get<int>();
        set.width = j.at("width").get<int>();
        set.labels.assign(static_cast<std::size_t>(set.height) * set.width, 0);
        for (const auto& je : j.at("instances")) {
            const auto id = je.at("id").get<std::int32_t>();
            const auto offset = je.at("rle_offset").get<std::size_t>();
            const auto pairs = je.at("rle_pairs").get<std::size_t>();
            std::size_t pos = 0;
            for (std::size_t p = 0; p < pairs; ++p) {
                pos += get32(offset + p, 0);
                const auto run = get32(offset + p, 1);
                for (std::uint32_t t = 0; t < run; ++t, ++pos) {
                    require(pos < set.labels.size(), "load_instances: RLE overruns the image");
                    set.labels[pos] = id;
                }
            }
        }
        return detail::from_label_map(set.height, set.width, std::move(set.labels));
    } catch (const nlohmann::json::exception& e) {
        fail("load_instances: bad " + json_path + ": " + e.what());
    }
}

}  // namespace mct::instances
