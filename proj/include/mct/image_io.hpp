#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "mct/image.hpp"
#include "mct/png_io.hpp"
#include "mct/tiff_io.hpp"

namespace mct::dataio {

/// Loads a PNG or TIFF micrograph. 16-bit sources are linearly rescaled to
/// 8-bit; 8-bit pixels are preserved bit-exactly. The micrograph id defaults
/// to the file stem.
inline Micrograph load_image(const std::string& path) {
    require(std::filesystem::exists(path), "load_image: no such file: " + path);
    RawImage raw;
    if (looks_like_png(path))
        raw = read_png(path);
    else if (looks_like_tiff(path))
        raw = read_tiff(path);
    else
        fail("load_image: unsupported format (expected PNG or TIFF): " + path);

    Micrograph m;
    m.id = std::filesystem::path(path).stem().string();
    m.height = raw.height;
    m.width = raw.width;
    m.channels = raw.channels;
    m.pixels.resize(raw.sample_count());
    if (raw.bit_depth == 8) {
        for (std::size_t i = 0; i < raw.samples.size(); ++i)
            m.pixels[i] = static_cast<std::uint8_t>(raw.samples[i]);
    } else {
        for (std::size_t i = 0; i < raw.samples.size(); ++i)
            m.pixels[i] = static_cast<std::uint8_t>(std::lround(raw.samples[i] * 255.0 / 65535.0));
    }
    validate_loaded(m, "load_image(" + path + ")");
    return m;
}

/// Writes an 8-bit micrograph as PNG or TIFF, chosen by file extension.
inline void save_image(const Micrograph& m, const std::string& path) {
    RawImage raw;
    raw.height = m.height;
    raw.width = m.width;
    raw.channels = m.channels;
    raw.bit_depth = 8;
    raw.samples.assign(m.pixels.begin(), m.pixels.end());
    const auto ext = std::filesystem::path(path).extension().string();
    if (ext == ".tif" || ext == ".tiff")
        write_tiff(path, raw);
    else
        write_png(path, raw);
}

/// Label maps (grain ids, class ids) round-trip as 16-bit grayscale PNG.
inline void save_label_map(const std::vector<std::int32_t>& labels, int height, int width,
                           const std::string& path) {
    require(labels.size() == static_cast<std::size_t>(height) * width,
            "save_label_map: label buffer size mismatch");
    RawImage raw;
    raw.height = height;
    raw.width = width;
    raw.channels = 1;
    raw.bit_depth = 16;
    raw.samples.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        require(labels[i] >= 0 && labels[i] <= 65535, "save_label_map: label out of 16-bit range");
        raw.samples[i] = static_cast<std::uint16_t>(labels[i]);
    }
    write_png(path, raw);
}

inline std::vector<std::int32_t> load_label_map(const std::string& path, int& height, int& width) {
    const RawImage raw = looks_like_png(path) ? read_png(path, /*expand_palette=*/false) : read_tiff(path);
    require(raw.channels == 1, "load_label_map: label map must be single channel: " + path);
    height = raw.height;
    width = raw.width;
    std::vector<std::int32_t> labels(raw.samples.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = raw.samples[i];
    return labels;
}

}  // namespace mct::dataio
