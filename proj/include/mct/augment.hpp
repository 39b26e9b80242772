#pragma once

#include <array>
#include <cmath>
#include <sstream>
#include <string>

#include "mct/image.hpp"

namespace mct::dataio {

enum class FillMode {
    kConstant,  // explicit gray value
    kMedian,    // image median (the default for resampled rotations)
    kWrap,      // periodic boundary
};

struct FillPolicy {
    FillMode mode = FillMode::kMedian;
    std::uint8_t value = 0;

    static FillPolicy constant(std::uint8_t v) { return {FillMode::kConstant, v}; }
    static FillPolicy median() { return {FillMode::kMedian, 0}; }
    static FillPolicy wrap() { return {FillMode::kWrap, 0}; }
};

namespace augdetail {

inline int wrap_index(int i, int n) {
    i %= n;
    return i < 0 ? i + n : i;
}

inline double sample_bilinear(const Micrograph& m, double row, double col, int ch,
                              const FillPolicy& fill, std::uint8_t fill_value) {
    if (fill.mode == FillMode::kWrap) {
        const int r0 = static_cast<int>(std::floor(row));
        const int c0 = static_cast<int>(std::floor(col));
        const double wr = row - r0, wc = col - c0;
        const int r0w = wrap_index(r0, m.height), r1w = wrap_index(r0 + 1, m.height);
        const int c0w = wrap_index(c0, m.width), c1w = wrap_index(c0 + 1, m.width);
        return (1 - wr) * ((1 - wc) * m.at(r0w, c0w, ch) + wc * m.at(r0w, c1w, ch)) +
               wr * ((1 - wc) * m.at(r1w, c0w, ch) + wc * m.at(r1w, c1w, ch));
    }
    const int r0 = static_cast<int>(std::floor(row));
    const int c0 = static_cast<int>(std::floor(col));
    const double wr = row - r0, wc = col - c0;
    auto px = [&](int r, int c) -> double {
        return m.in_bounds(r, c) ? m.at(r, c, ch) : fill_value;
    };
    return (1 - wr) * ((1 - wc) * px(r0, c0) + wc * px(r0, c0 + 1)) +
           wr * ((1 - wc) * px(r0 + 1, c0) + wc * px(r0 + 1, c0 + 1));
}

inline std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

inline void append_chain(Micrograph& m, const std::string& op) {
    auto& chain = m.metadata["augment_chain"];
    if (!chain.empty()) chain += ";";
    chain += op;
}

}  // namespace augdetail

/// Rotation about the image center, positive angles counterclockwise.
/// Multiples of 90 degrees are exact pixel permutations (the canvas turns
/// with the content); other angles resample bilinearly onto a same-size
/// canvas with the given fill.
inline Micrograph rotate(const Micrograph& m, double degrees,
                         FillPolicy fill = FillPolicy::median()) {
    const double turns = degrees / 90.0;
    const double nearest = std::round(turns);
    Micrograph out;
    if (std::abs(turns - nearest) < 1e-9) {
        const int k = augdetail::wrap_index(static_cast<int>(nearest), 4);
        const int oh = (k % 2 == 0) ? m.height : m.width;
        const int ow = (k % 2 == 0) ? m.width : m.height;
        out = Micrograph::blank(m.id, oh, ow, m.channels);
        for (int r = 0; r < oh; ++r)
            for (int c = 0; c < ow; ++c) {
                int sr = r, sc = c;
                switch (k) {
                    case 0: break;
                    case 1: sr = c, sc = m.width - 1 - r; break;           // 90 ccw
                    case 2: sr = m.height - 1 - r, sc = m.width - 1 - c; break;
                    case 3: sr = m.height - 1 - c, sc = r; break;          // 270 ccw
                    default: break;
                }
                for (int ch = 0; ch < m.channels; ++ch) out.at(r, c, ch) = m.at(sr, sc, ch);
            }
    } else {
        out = Micrograph::blank(m.id, m.height, m.width, m.channels);
        const double rad = degrees * 3.14159265358979323846 / 180.0;
        const double cs = std::cos(rad), sn = std::sin(rad);
        const double cy = (m.height - 1) / 2.0, cx = (m.width - 1) / 2.0;
        const auto med = m.channel_medians();
        for (int r = 0; r < m.height; ++r)
            for (int c = 0; c < m.width; ++c) {
                // inverse map: rotate the output coordinate by -theta
                const double dy = r - cy, dx = c - cx;
                const double sy = cy + (sn * dx + cs * dy);
                const double sx = cx + (cs * dx - sn * dy);
                for (int ch = 0; ch < m.channels; ++ch) {
                    const std::uint8_t fv = fill.mode == FillMode::kConstant
                                                ? fill.value
                                                : med[static_cast<std::size_t>(ch)];
                    out.at(r, c, ch) =
                        augdetail::quantize(augdetail::sample_bilinear(m, sy, sx, ch, fill, fv));
                }
            }
    }
    out.scale = m.scale;
    out.metadata = m.metadata;
    std::ostringstream op;
    op << "rotate(" << degrees << ")";
    augdetail::append_chain(out, op.str());
    return out;
}

/// Shift by (dx columns, dy rows); integer shifts are exact.
inline Micrograph translate(const Micrograph& m, double dx, double dy,
                            FillPolicy fill = FillPolicy::median()) {
    Micrograph out = Micrograph::blank(m.id, m.height, m.width, m.channels);
    const bool integral = std::abs(dx - std::round(dx)) < 1e-12 && std::abs(dy - std::round(dy)) < 1e-12;
    const auto med = m.channel_medians();
    for (int r = 0; r < m.height; ++r)
        for (int c = 0; c < m.width; ++c) {
            const double sr = r - dy, sc = c - dx;
            for (int ch = 0; ch < m.channels; ++ch) {
                const std::uint8_t fv =
                    fill.mode == FillMode::kConstant ? fill.value : med[static_cast<std::size_t>(ch)];
                if (integral) {
                    int ir = static_cast<int>(std::lround(sr)), ic = static_cast<int>(std::lround(sc));
                    if (fill.mode == FillMode::kWrap) {
                        ir = augdetail::wrap_index(ir, m.height);
                        ic = augdetail::wrap_index(ic, m.width);
                        out.at(r, c, ch) = m.at(ir, ic, ch);
                    } else {
                        out.at(r, c, ch) = m.in_bounds(ir, ic) ? m.at(ir, ic, ch) : fv;
                    }
                } else {
                    out.at(r, c, ch) =
                        augdetail::quantize(augdetail::sample_bilinear(m, sr, sc, ch, fill, fv));
                }
            }
        }
    out.scale = m.scale;
    out.metadata = m.metadata;
    std::ostringstream op;
    op << "translate(" << dx << "," << dy << ")";
    augdetail::append_chain(out, op.str());
    return out;
}

/// Crops the window with top-left (row0, col0); the window must lie within
/// the image.
inline Micrograph subsample(const Micrograph& m, int row0, int col0, int h, int w) {
    require(h > 0 && w > 0, "subsample: window must be non-empty");
    require(row0 >= 0 && col0 >= 0 && row0 + h <= m.height && col0 + w <= m.width,
            "subsample: window out of bounds");
    Micrograph out = Micrograph::blank(m.id, h, w, m.channels);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < m.channels; ++ch) out.at(r, c, ch) = m.at(row0 + r, col0 + c, ch);
    out.scale = m.scale;
    out.metadata = m.metadata;
    std::ostringstream op;
    op << "subsample(" << row0 << "," << col0 << "," << h << "," << w << ")";
    augdetail::append_chain(out, op.str());
    return out;
}

/// Applies the forward map [col' row']^T = A.[col row]^T + t given as the
/// 2x3 matrix {a b tx; c d ty}; the matrix must be invertible.
inline Micrograph affine(const Micrograph& m, const std::array<double, 6>& mat,
                         FillPolicy fill = FillPolicy::median()) {
    const double a = mat[0], b = mat[1], tx = mat[2];
    const double c = mat[3], d = mat[4], ty = mat[5];
    const double det = a * d - b * c;
    require(std::abs(det) > 1e-12, "affine: singular transform matrix");
    const double ia = d / det, ib = -b / det, ic = -c / det, id = a / det;

    Micrograph out = Micrograph::blank(m.id, m.height, m.width, m.channels);
    const auto med = m.channel_medians();
    for (int r = 0; r < m.height; ++r)
        for (int col = 0; col < m.width; ++col) {
            const double x = col - tx, y = r - ty;
            const double sx = ia * x + ib * y;
            const double sy = ic * x + id * y;
            for (int ch = 0; ch < m.channels; ++ch) {
                const std::uint8_t fv =
                    fill.mode == FillMode::kConstant ? fill.value : med[static_cast<std::size_t>(ch)];
                out.at(r, col, ch) =
                    augdetail::quantize(augdetail::sample_bilinear(m, sy, sx, ch, fill, fv));
            }
        }
    out.scale = m.scale;
    out.metadata = m.metadata;
    std::ostringstream op;
    op << "affine(" << a << "," << b << "," << tx << "," << c << "," << d << "," << ty << ")";
    augdetail::append_chain(out, op.str());
    return out;
}

}  // namespace mct::dataio
