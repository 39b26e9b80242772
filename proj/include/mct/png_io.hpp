#pragma once

#include <png.h>

#include <array>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "mct/common.hpp"
#include "mct/raw_image.hpp"

namespace mct::dataio {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline bool host_is_little_endian() {
    const std::uint16_t probe = 1;
    return *reinterpret_cast<const std::uint8_t*>(&probe) == 1;
}

}  // namespace detail

inline bool looks_like_png(const std::string& path) {
    detail::FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) return false;
    unsigned char sig[8] = {};
    const std::size_t n = std::fread(sig, 1, 8, f.get());
    return n == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

/// Reads a PNG as 8- or 16-bit gray/RGB. With expand_palette=false a palette
/// image is returned as raw indices (used for mask files); otherwise palettes
/// expand to RGB and alpha is stripped.
inline RawImage read_png(const std::string& path, bool expand_palette = true) {
    detail::FilePtr f(std::fopen(path.c_str(), "rb"));
    require(f != nullptr, "read_png: cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png != nullptr, "read_png: libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail("read_png: libpng init failed");
    }
    std::vector<png_bytep> row_ptrs;
    std::vector<std::uint8_t> buffer;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("read_png: corrupt or unsupported PNG: " + path);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);

    const png_byte color_type = png_get_color_type(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) {
        if (expand_palette)
            png_set_palette_to_rgb(png);
        else
            png_set_packing(png);  // one index per byte
    }
    if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS) && expand_palette) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_strip_alpha(png);
    if (png_get_bit_depth(png, info) == 16 && detail::host_is_little_endian()) png_set_swap(png);
    png_read_update_info(png, info);

    RawImage out;
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.bit_depth = png_get_bit_depth(png, info);
    const int ch = png_get_channels(png, info);
    out.channels = ch;

    const std::size_t row_bytes = png_get_rowbytes(png, info);
    buffer.resize(row_bytes * static_cast<std::size_t>(out.height));
    row_ptrs.resize(static_cast<std::size_t>(out.height));
    for (int r = 0; r < out.height; ++r)
        row_ptrs[static_cast<std::size_t>(r)] = buffer.data() + row_bytes * static_cast<std::size_t>(r);
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    require(ch == 1 || ch == 3, "read_png: unsupported channel count in " + path);
    require(out.bit_depth == 8 || out.bit_depth == 16, "read_png: unsupported bit depth in " + path);

    out.samples.resize(out.sample_count());
    if (out.bit_depth == 8) {
        for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] = buffer[i];
    } else {
        std::memcpy(out.samples.data(), buffer.data(), out.samples.size() * 2);
    }
    return out;
}

inline void write_png(const std::string& path, const RawImage& img) {
    require(img.channels == 1 || img.channels == 3, "write_png: unsupported channel count");
    require(img.bit_depth == 8 || img.bit_depth == 16, "write_png: unsupported bit depth");
    require(img.samples.size() == img.sample_count(), "write_png: sample buffer size mismatch");

    detail::FilePtr f(std::fopen(path.c_str(), "wb"));
    require(f != nullptr, "write_png: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png != nullptr, "write_png: libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail("write_png: libpng init failed");
    }
    std::vector<png_bytep> row_ptrs;
    std::vector<std::uint8_t> buffer;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail("write_png: write failed: " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
                 img.bit_depth, img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (img.bit_depth == 16 && detail::host_is_little_endian()) png_set_swap(png);

    const std::size_t row_samples = static_cast<std::size_t>(img.width) * img.channels;
    const std::size_t row_bytes = row_samples * (img.bit_depth / 8);
    buffer.resize(row_bytes * static_cast<std::size_t>(img.height));
    if (img.bit_depth == 8) {
        for (std::size_t i = 0; i < img.samples.size(); ++i)
            buffer[i] = static_cast<std::uint8_t>(img.samples[i]);
    } else {
        std::memcpy(buffer.data(), img.samples.data(), img.samples.size() * 2);
    }
    row_ptrs.resize(static_cast<std::size_t>(img.height));
    for (int r = 0; r < img.height; ++r)
        row_ptrs[static_cast<std::size_t>(r)] = buffer.data() + row_bytes * static_cast<std::size_t>(r);
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

/// Writes an 8-bit indexed PNG; `labels` holds palette indices. Used for
/// segmentation masks where pixel values are class ids, not gray levels.
inline void write_indexed_png(const std::string& path, int height, int width,
                              const std::vector<std::uint8_t>& labels,
                              const std::vector<std::array<std::uint8_t, 3>>& palette) {
    require(!palette.empty() && palette.size() <= 256, "write_indexed_png: bad palette size");
    require(labels.size() == static_cast<std::size_t>(height) * width,
            "write_indexed_png: label buffer size mismatch");

    detail::FilePtr f(std::fopen(path.c_str(), "wb"));
    require(f != nullptr, "write_indexed_png: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    require(png != nullptr, "write_indexed_png: libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail("write_indexed_png: libpng init failed");
    }
    std::vector<png_bytep> row_ptrs;
    std::vector<png_color> pal(palette.size());
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail("write_indexed_png: write failed: " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    for (std::size_t i = 0; i < palette.size(); ++i)
        pal[i] = png_color{palette[i][0], palette[i][1], palette[i][2]};
    png_set_PLTE(png, info, pal.data(), static_cast<int>(pal.size()));
    png_write_info(png, info);
    row_ptrs.resize(static_cast<std::size_t>(height));
    for (int r = 0; r < height; ++r)
        row_ptrs[static_cast<std::size_t>(r)] =
            const_cast<png_bytep>(labels.data() + static_cast<std::size_t>(r) * width);
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace mct::dataio
