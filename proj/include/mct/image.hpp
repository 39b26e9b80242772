#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mct/common.hpp"

namespace mct::dataio {

/// 8-bit raster micrograph, grayscale (1 channel) or color (3 channels,
/// interleaved RGB), row-major. `scale` is micrometers per pixel; 0 means
/// unknown. Loaded images must be at least 32x32; in-memory crops (e.g.
/// instance patches) may be smaller.
struct Micrograph {
    std::string id;
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<std::uint8_t> pixels;
    double scale = 0.0;
    std::map<std::string, std::string> metadata;

    static Micrograph blank(std::string id, int h, int w, int ch = 1, std::uint8_t fill = 0) {
        require(h > 0 && w > 0 && (ch == 1 || ch == 3), "Micrograph: bad shape");
        Micrograph m;
        m.id = std::move(id);
        m.height = h;
        m.width = w;
        m.channels = ch;
        m.pixels.assign(static_cast<std::size_t>(h) * w * ch, fill);
        return m;
    }

    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }

    std::uint8_t& at(int r, int c, int ch = 0) {
        return pixels[(static_cast<std::size_t>(r) * width + c) * channels + ch];
    }
    std::uint8_t at(int r, int c, int ch = 0) const {
        return pixels[(static_cast<std::size_t>(r) * width + c) * channels + ch];
    }

    bool in_bounds(int r, int c) const { return r >= 0 && r < height && c >= 0 && c < width; }

    /// Per-channel median gray value (lower median).
    std::array<std::uint8_t, 3> channel_medians() const {
        std::array<std::uint8_t, 3> med{0, 0, 0};
        for (int ch = 0; ch < channels; ++ch) {
            std::array<std::size_t, 256> hist{};
            for (std::size_t p = 0; p < pixel_count(); ++p) hist[pixels[p * channels + ch]]++;
            const std::size_t half = (pixel_count() + 1) / 2;
            std::size_t acc = 0;
            for (int v = 0; v < 256; ++v) {
                acc += hist[static_cast<std::size_t>(v)];
                if (acc >= half) {
                    med[static_cast<std::size_t>(ch)] = static_cast<std::uint8_t>(v);
                    break;
                }
            }
        }
        for (int ch = channels; ch < 3; ++ch) med[static_cast<std::size_t>(ch)] = med[0];
        return med;
    }

    std::uint8_t median() const { return channel_medians()[0]; }
};

inline void validate_loaded(const Micrograph& m, const std::string& origin) {
    require(!m.id.empty(), origin + ": micrograph id is empty");
    require(m.height >= 32 && m.width >= 32,
            origin + ": image is " + std::to_string(m.width) + "x" + std::to_string(m.height) +
                ", minimum is 32x32");
    require(m.channels == 1 || m.channels == 3, origin + ": unsupported channel count");
    require(m.scale >= 0.0, origin + ": negative scale");
    require(m.pixels.size() == m.pixel_count() * static_cast<std::size_t>(m.channels),
            origin + ": pixel buffer size mismatch");
}

/// Bilinear resize; used to bring instance patches to a common backbone input
/// size. Sampling positions map corners to corners.
inline Micrograph resize_bilinear(const Micrograph& src, int out_h, int out_w) {
    require(out_h > 0 && out_w > 0, "resize_bilinear: bad target size");
    Micrograph out = Micrograph::blank(src.id, out_h, out_w, src.channels);
    out.scale = src.scale;
    out.metadata = src.metadata;
    const double ry = out_h > 1 ? static_cast<double>(src.height - 1) / (out_h - 1) : 0.0;
    const double rx = out_w > 1 ? static_cast<double>(src.width - 1) / (out_w - 1) : 0.0;
    for (int r = 0; r < out_h; ++r) {
        const double fy = r * ry;
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double wy = fy - y0;
        for (int c = 0; c < out_w; ++c) {
            const double fx = c * rx;
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double wx = fx - x0;
            for (int ch = 0; ch < src.channels; ++ch) {
                const double v = (1 - wy) * ((1 - wx) * src.at(y0, x0, ch) + wx * src.at(y0, x1, ch)) +
                                 wy * ((1 - wx) * src.at(y1, x0, ch) + wx * src.at(y1, x1, ch));
                out.at(r, c, ch) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
            }
        }
    }
    return out;
}

}  // namespace mct::dataio
