#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mct/common.hpp"
#include "mct/image.hpp"
#include "mct/rng.hpp"

namespace mct::synthgen {

/// Labeled polycrystal grid. After relabel_components each id in 1..N maps to
/// exactly one 4-connected region.
struct GrainMap {
    int height = 0;
    int width = 0;
    std::vector<std::int32_t> labels;

    static GrainMap blank(int h, int w, std::int32_t fill = 1) {
        GrainMap g;
        g.height = h;
        g.width = w;
        g.labels.assign(static_cast<std::size_t>(h) * w, fill);
        return g;
    }

    std::int32_t& at(int r, int c) { return labels[static_cast<std::size_t>(r) * width + c]; }
    std::int32_t at(int r, int c) const { return labels[static_cast<std::size_t>(r) * width + c]; }
    std::size_t cells() const { return labels.size(); }
};

struct GrainStats {
    int grain_count = 0;
    double mean_diameter_px = 0.0;   // mean over grains of 2*sqrt(area/pi)
    double mean_intercept_px = 0.0;  // mean chord length, edge-clipped chords excluded
    std::vector<std::int64_t> areas;
};

struct RenderStyle {
    std::uint8_t matrix_gray = 200;
    std::uint8_t boundary_gray = 40;
    double blur_sigma = 0.8;
    double noise_sigma = 4.0;
    std::uint64_t seed = 0;
};

struct SyntheticSample {
    dataio::Micrograph micrograph;
    GrainMap grain_map;
    GrainStats stats;
    double missing_fraction = 0.0;
    std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Potts-model grain growth

namespace detail {

// 8-neighborhood offsets
constexpr std::array<std::array<int, 2>, 8> kNeigh8 = {
    {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}}};

constexpr std::array<std::array<int, 2>, 4> kNeigh4 = {{{-1, 0}, {0, -1}, {0, 1}, {1, 0}}};

}  // namespace detail

/// One or more zero-temperature Metropolis sweeps over an existing spin
/// grid. Each sweep attempts H*W randomly chosen site updates; a site's
/// trial spin is drawn uniformly from the spins of its unlike 8-neighbors
/// (no attempt when all neighbors agree) and accepted when the count of
/// unlike bonds does not increase. Free boundaries.
inline void potts_sweeps(std::vector<std::int32_t>& spin, int height, int width, int sweeps,
                         Rng& rng) {
    const std::size_t n = static_cast<std::size_t>(height) * width;
    require(spin.size() == n, "potts_sweeps: spin grid size mismatch");
    std::array<std::int32_t, 8> unlike;
    for (int sweep = 0; sweep < sweeps; ++sweep) {
        for (std::size_t attempt = 0; attempt < n; ++attempt) {
            const std::size_t site = rng.index(n);
            const int r = static_cast<int>(site) / width;
            const int c = static_cast<int>(site) % width;
            const std::int32_t s = spin[site];

            int n_unlike = 0;
            int e_old = 0;
            for (const auto& d : detail::kNeigh8) {
                const int rr = r + d[0], cc = c + d[1];
                if (rr < 0 || rr >= height || cc < 0 || cc >= width) continue;
                const std::int32_t t = spin[static_cast<std::size_t>(rr) * width + cc];
                if (t != s) {
                    unlike[static_cast<std::size_t>(n_unlike++)] = t;
                    ++e_old;
                }
            }
            if (n_unlike == 0) continue;

            const std::int32_t trial = unlike[rng.index(static_cast<std::size_t>(n_unlike))];
            int e_new = 0;
            for (const auto& d : detail::kNeigh8) {
                const int rr = r + d[0], cc = c + d[1];
                if (rr < 0 || rr >= height || cc < 0 || cc >= width) continue;
                if (spin[static_cast<std::size_t>(rr) * width + cc] != trial) ++e_new;
            }
            if (e_new <= e_old) spin[site] = trial;
        }
    }
}

/// Evolved raw spins in [1, Q] from an i.i.d. uniform start. Runs with the
/// same seed replay the same stream, so shorter sweep counts are true
/// checkpoints of longer ones.
inline std::vector<std::int32_t> potts_spins(int height, int width, int q, int sweeps,
                                             std::uint64_t seed) {
    require(height >= 32 && width >= 32, "potts_evolve: grid must be at least 32x32");
    require(q >= 2, "potts_evolve: need at least 2 spin states");
    require(sweeps >= 0, "potts_evolve: negative sweep count");

    Rng rng(seed);
    const std::size_t n = static_cast<std::size_t>(height) * width;
    std::vector<std::int32_t> spin(n);
    for (std::size_t i = 0; i < n; ++i)
        spin[i] = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(q))) + 1;
    potts_sweeps(spin, height, width, sweeps, rng);
    return spin;
}

/// Relabels 4-connected regions of equal value to 1..N in raster order of
/// each region's first pixel.
inline GrainMap relabel_components(const std::vector<std::int32_t>& values, int height, int width) {
    GrainMap out = GrainMap::blank(height, width, 0);
    std::int32_t next = 1;
    std::deque<std::size_t> queue;
    for (std::size_t start = 0; start < values.size(); ++start) {
        if (out.labels[start] != 0) continue;
        const std::int32_t v = values[start];
        out.labels[start] = next;
        queue.push_back(start);
        while (!queue.empty()) {
            const std::size_t p = queue.front();
            queue.pop_front();
            const int r = static_cast<int>(p) / width, c = static_cast<int>(p) % width;
            for (const auto& d : detail::kNeigh4) {
                const int rr = r + d[0], cc = c + d[1];
                if (rr < 0 || rr >= height || cc < 0 || cc >= width) continue;
                const std::size_t np = static_cast<std::size_t>(rr) * width + cc;
                if (out.labels[np] == 0 && values[np] == v) {
                    out.labels[np] = next;
                    queue.push_back(np);
                }
            }
        }
        ++next;
    }
    return out;
}

inline GrainMap potts_evolve(int height, int width, int q, int sweeps, std::uint64_t seed) {
    return relabel_components(potts_spins(height, width, q, sweeps, seed), height, width);
}

/// Total count of unlike 8-neighbor bonds; the zero-temperature dynamics
/// never increase it.
inline std::int64_t unlike_bond_count(const std::vector<std::int32_t>& values, int height, int width) {
    std::int64_t e = 0;
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            const std::int32_t s = values[static_cast<std::size_t>(r) * width + c];
            // count each bond once: right/down-ish half of the neighborhood
            static constexpr std::array<std::array<int, 2>, 4> half = {{{0, 1}, {1, -1}, {1, 0}, {1, 1}}};
            for (const auto& d : half) {
                const int rr = r + d[0], cc = c + d[1];
                if (rr < 0 || rr >= height || cc < 0 || cc >= width) continue;
                if (values[static_cast<std::size_t>(rr) * width + cc] != s) ++e;
            }
        }
    return e;
}

// ---------------------------------------------------------------------------
// Rendering

/// A pixel is a boundary pixel iff at least one 4-neighbor has a different
/// grain id.
inline std::vector<std::uint8_t> boundary_mask(const GrainMap& g) {
    std::vector<std::uint8_t> mask(g.cells(), 0);
    for (int r = 0; r < g.height; ++r)
        for (int c = 0; c < g.width; ++c) {
            const std::int32_t s = g.at(r, c);
            for (const auto& d : detail::kNeigh4) {
                const int rr = r + d[0], cc = c + d[1];
                if (rr < 0 || rr >= g.height || cc < 0 || cc >= g.width) continue;
                if (g.at(rr, cc) != s) {
                    mask[static_cast<std::size_t>(r) * g.width + c] = 1;
                    break;
                }
            }
        }
    return mask;
}

namespace detail {

inline void gaussian_blur_inplace(std::vector<double>& img, int height, int width, double sigma) {
    if (sigma <= 0.0) return;
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (i / sigma) * (i / sigma));
        kernel[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (auto& k : kernel) k /= sum;

    std::vector<double> tmp(img.size());
    // horizontal pass, clamp at edges
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int cc = std::clamp(c + i, 0, width - 1);
                acc += kernel[static_cast<std::size_t>(i + radius)] *
                       img[static_cast<std::size_t>(r) * width + cc];
            }
            tmp[static_cast<std::size_t>(r) * width + c] = acc;
        }
    // vertical pass
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int rr = std::clamp(r + i, 0, height - 1);
                acc += kernel[static_cast<std::size_t>(i + radius)] *
                       tmp[static_cast<std::size_t>(rr) * width + c];
            }
            img[static_cast<std::size_t>(r) * width + c] = acc;
        }
}

}  // namespace detail

/// Renders an optical-etch style micrograph from an explicit boundary mask:
/// boundary pixels take the (darker) boundary gray, everything else the
/// matrix gray, then Gaussian blur and additive Gaussian noise.
inline dataio::Micrograph render_with_mask(const GrainMap& g, const std::vector<std::uint8_t>& mask,
                                           const RenderStyle& style) {
    require(style.matrix_gray > style.boundary_gray,
            "render_micrograph: matrix gray must exceed boundary gray");
    require(mask.size() == g.cells(), "render_micrograph: mask size mismatch");

    std::vector<double> img(g.cells());
    for (std::size_t i = 0; i < img.size(); ++i)
        img[i] = mask[i] ? static_cast<double>(style.boundary_gray)
                         : static_cast<double>(style.matrix_gray);
    detail::gaussian_blur_inplace(img, g.height, g.width, style.blur_sigma);

    Rng rng(style.seed);
    dataio::Micrograph m = dataio::Micrograph::blank("render", g.height, g.width, 1);
    for (std::size_t i = 0; i < img.size(); ++i) {
        double v = img[i];
        if (style.noise_sigma > 0.0) v += rng.normal(0.0, style.noise_sigma);
        m.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
    return m;
}

inline dataio::Micrograph render_micrograph(const GrainMap& g, const RenderStyle& style) {
    return render_with_mask(g, boundary_mask(g), style);
}

// ---------------------------------------------------------------------------
// Boundary erasure

/// One maximal run of boundary pixels separating a specific grain pair
/// (8-connected within the pair's boundary-pixel set).
struct BoundarySegment {
    std::int32_t grain_a = 0;
    std::int32_t grain_b = 0;
    std::vector<std::size_t> pixels;
};

inline std::vector<BoundarySegment> enumerate_boundary_segments(const GrainMap& g) {
    // pair -> boundary pixels (pixels of either grain adjacent to the other)
    std::map<std::pair<std::int32_t, std::int32_t>, std::vector<std::size_t>> pair_pixels;
    for (int r = 0; r < g.height; ++r)
        for (int c = 0; c < g.width; ++c) {
            const std::int32_t a = g.at(r, c);
            for (const auto& d : detail::kNeigh4) {
                const int rr = r + d[0], cc = c + d[1];
                if (rr < 0 || rr >= g.height || cc < 0 || cc >= g.width) continue;
                const std::int32_t b = g.at(rr, cc);
                if (b == a) continue;
                const auto key = std::minmax(a, b);
                pair_pixels[{key.first, key.second}].push_back(
                    static_cast<std::size_t>(r) * g.width + c);
            }
        }

    std::vector<BoundarySegment> segments;
    std::vector<std::int32_t> stamp(g.cells(), -1);  // segment index per pixel, per pair reuse
    std::vector<std::uint8_t> member(g.cells(), 0);
    for (auto& [pair, pixels] : pair_pixels) {
        std::sort(pixels.begin(), pixels.end());
        pixels.erase(std::unique(pixels.begin(), pixels.end()), pixels.end());
        for (const auto p : pixels) member[p] = 1;
        for (const auto start : pixels) {
            if (stamp[start] >= 0) continue;
            BoundarySegment seg;
            seg.grain_a = pair.first;
            seg.grain_b = pair.second;
            std::deque<std::size_t> queue{start};
            stamp[start] = static_cast<std::int32_t>(segments.size());
            while (!queue.empty()) {
                const std::size_t p = queue.front();
                queue.pop_front();
                seg.pixels.push_back(p);
                const int r = static_cast<int>(p) / g.width, c = static_cast<int>(p) % g.width;
                for (const auto& d : detail::kNeigh8) {
                    const int rr = r + d[0], cc = c + d[1];
                    if (rr < 0 || rr >= g.height || cc < 0 || cc >= g.width) continue;
                    const std::size_t np = static_cast<std::size_t>(rr) * g.width + cc;
                    if (member[np] && stamp[np] < 0) {
                        stamp[np] = static_cast<std::int32_t>(segments.size());
                        queue.push_back(np);
                    }
                }
            }
            std::sort(seg.pixels.begin(), seg.pixels.end());
            segments.push_back(std::move(seg));
        }
        for (const auto p : pixels) {
            member[p] = 0;
            stamp[p] = -1;
        }
    }
    return segments;
}

/// Removes round(f*S) whole grain-pair segments, chosen uniformly without
/// replacement, from the full boundary mask. A pixel shared by several
/// segments stays visible while any of its segments survives.
inline std::vector<std::uint8_t> erase_boundaries(const GrainMap& g, double f, std::uint64_t seed) {
    require(f >= 0.0 && f <= 1.0, "erase_boundaries: fraction must lie in [0,1]");
    const auto segments = enumerate_boundary_segments(g);
    const std::size_t s_total = segments.size();
    const auto n_erase =
        static_cast<std::size_t>(std::llround(f * static_cast<double>(s_total)));

    std::vector<std::uint8_t> erased(s_total, 0);
    if (n_erase > 0) {
        Rng rng(seed);
        std::vector<std::size_t> chosen;
        rng.sample_without_replacement(s_total, n_erase, std::back_inserter(chosen));
        for (const auto i : chosen) erased[i] = 1;
    }

    std::vector<std::uint8_t> mask(g.cells(), 0);
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (erased[i]) continue;
        for (const auto p : segments[i].pixels) mask[p] = 1;
    }
    return mask;
}

// ---------------------------------------------------------------------------
// Grain metrology

/// Mean equivalent circle diameter over grains plus mean linear intercept
/// over horizontal and vertical scan lines. Chords clipped at the image edge
/// are excluded; if every chord is clipped (very coarse structures) the mean
/// falls back to all chords so the intercept stays defined.
inline GrainStats measure_grain_size(const GrainMap& g) {
    require(g.height > 0 && g.width > 0 && !g.labels.empty(), "measure_grain_size: empty grain map");
    std::int32_t max_label = 0;
    for (const auto v : g.labels) {
        require(v >= 1, "measure_grain_size: labels must be >= 1");
        max_label = std::max(max_label, v);
    }

    GrainStats stats;
    std::vector<std::int64_t> areas(static_cast<std::size_t>(max_label) + 1, 0);
    for (const auto v : g.labels) areas[static_cast<std::size_t>(v)]++;
    double diam_sum = 0.0;
    for (std::int32_t id = 1; id <= max_label; ++id) {
        const auto a = areas[static_cast<std::size_t>(id)];
        if (a == 0) continue;  // ids are contiguous after relabeling, tolerate gaps anyway
        stats.areas.push_back(a);
        diam_sum += 2.0 * std::sqrt(static_cast<double>(a) / 3.14159265358979323846);
        ++stats.grain_count;
    }
    require(stats.grain_count >= 1, "measure_grain_size: no grains");
    stats.mean_diameter_px = diam_sum / stats.grain_count;

    std::int64_t chord_len = 0, chord_count = 0;
    std::int64_t all_len = 0, all_count = 0;
    auto scan = [&](int n_lines, int line_len, auto&& value_at) {
        for (int line = 0; line < n_lines; ++line) {
            int run_start = 0;
            for (int i = 1; i <= line_len; ++i) {
                if (i == line_len || value_at(line, i) != value_at(line, run_start)) {
                    const int len = i - run_start;
                    all_len += len;
                    ++all_count;
                    if (run_start != 0 && i != line_len) {  // not clipped at either edge
                        chord_len += len;
                        ++chord_count;
                    }
                    run_start = i;
                }
            }
        }
    };
    scan(g.height, g.width, [&](int r, int c) { return g.at(r, c); });
    scan(g.width, g.height, [&](int c, int r) { return g.at(r, c); });

    stats.mean_intercept_px = chord_count > 0
                                  ? static_cast<double>(chord_len) / static_cast<double>(chord_count)
                                  : static_cast<double>(all_len) / static_cast<double>(all_count);
    return stats;
}

/// ASTM E112 intercept relation; the mean intercept is in millimeters.
inline double astm_grain_number(double mean_intercept_mm) {
    require(mean_intercept_mm > 0.0, "astm_grain_number: mean intercept must be positive");
    return -6.6438 * std::log10(mean_intercept_mm) - 3.288;
}

// ---------------------------------------------------------------------------
// Dataset generation

struct GenerateParams {
    int count = 1;
    int size = 128;  // square grids
    int q = 64;
    std::vector<int> sweep_schedule = {40, 80, 160, 320};
    std::vector<double> f_list = {0.0};
    std::uint64_t seed = 0;
    RenderStyle style;
    double scale_um_per_px = 1.0;  // used to report ASTM G in the truth table
};

struct TruthRow {
    std::string id;
    double f = 0.0;
    int grain_count = 0;
    double d_px = 0.0;
    double l_px = 0.0;
    double g_number = 0.0;
};

/// Streams samples to the sink. Consecutive |f_list| samples share one
/// evolved structure rendered at each missing-boundary fraction, so error
/// comparisons across f are paired. Everything is a pure function of the
/// seed.
template <typename Sink>
void generate_dataset(const GenerateParams& p, Sink&& sink) {
    require(p.count >= 1, "generate_dataset: count must be >= 1");
    require(!p.sweep_schedule.empty(), "generate_dataset: empty sweep schedule");
    require(!p.f_list.empty(), "generate_dataset: empty f list");
    for (const auto f : p.f_list)
        require(f >= 0.0 && f <= 1.0, "generate_dataset: f must lie in [0,1]");

    const std::uint64_t map_stream = mix_seed(p.seed, 1);
    const std::uint64_t erase_stream = mix_seed(p.seed, 2);
    const std::uint64_t noise_stream = mix_seed(p.seed, 3);

    const std::size_t n_f = p.f_list.size();
    GrainMap current_map;
    GrainStats current_stats;
    std::size_t current_group = static_cast<std::size_t>(-1);

    for (int i = 0; i < p.count; ++i) {
        const std::size_t group = static_cast<std::size_t>(i) / n_f;
        if (group != current_group) {
            const int sweeps = p.sweep_schedule[group % p.sweep_schedule.size()];
            current_map = potts_evolve(p.size, p.size, p.q, sweeps, mix_seed(map_stream, group));
            current_stats = measure_grain_size(current_map);
            current_group = group;
        }
        const double f = p.f_list[static_cast<std::size_t>(i) % n_f];

        const auto mask = erase_boundaries(current_map, f, mix_seed(erase_stream, static_cast<std::uint64_t>(i)));
        RenderStyle style = p.style;
        style.seed = mix_seed(noise_stream, static_cast<std::uint64_t>(i));
        SyntheticSample sample;
        sample.micrograph = render_with_mask(current_map, mask, style);
        std::ostringstream id;
        id << "synth-";
        id.fill('0');
        id.width(6);
        id << i;
        sample.micrograph.id = id.str();
        sample.micrograph.scale = p.scale_um_per_px;
        sample.grain_map = current_map;
        sample.stats = current_stats;
        sample.missing_fraction = f;
        sample.seed = style.seed;

        TruthRow row;
        row.id = sample.micrograph.id;
        row.f = f;
        row.grain_count = current_stats.grain_count;
        row.d_px = current_stats.mean_diameter_px;
        row.l_px = current_stats.mean_intercept_px;
        row.g_number = astm_grain_number(current_stats.mean_intercept_px * p.scale_um_per_px / 1000.0);
        sink(sample, row);
    }
}

inline std::vector<SyntheticSample> generate_dataset(const GenerateParams& p,
                                                     std::vector<TruthRow>* rows = nullptr) {
    std::vector<SyntheticSample> samples;
    generate_dataset(p, [&](SyntheticSample& s, const TruthRow& r) {
        samples.push_back(std::move(s));
        if (rows) rows->push_back(r);
    });
    return samples;
}

inline std::string truth_csv_header() { return "id,f,grain_count,d_px,l_px,G"; }

inline std::string truth_csv_row(const TruthRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%.3f,%d,%.6f,%.6f,%.6f", r.id.c_str(), r.f, r.grain_count,
                  r.d_px, r.l_px, r.g_number);
    return buf;
}

}  // namespace mct::synthgen
