#pragma once

#include <cstdint>
#include <vector>

namespace mct::dataio {

/// Decoded raster prior to micrograph conversion. Samples are interleaved,
/// row-major, host byte order; 8-bit values occupy the low byte.
struct RawImage {
    int height = 0;
    int width = 0;
    int channels = 1;   // 1 or 3
    int bit_depth = 8;  // 8 or 16
    std::vector<std::uint16_t> samples;

    std::size_t sample_count() const {
        return static_cast<std::size_t>(height) * width * channels;
    }
};

}  // namespace mct::dataio
