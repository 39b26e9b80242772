#pragma once

#include <cstdint>
#include <vector>

#include "mct/common.hpp"

namespace mct {

/// Dense 0/1 mask shared by the segmentation and instance modules.
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;

    static BinaryMask blank(int h, int w, std::uint8_t fill = 0) {
        BinaryMask m;
        m.height = h;
        m.width = w;
        m.data.assign(static_cast<std::size_t>(h) * w, fill);
        return m;
    }

    std::uint8_t& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
    std::uint8_t at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
    std::size_t count() const {
        std::size_t n = 0;
        for (const auto v : data) n += v ? 1 : 0;
        return n;
    }
};

}  // namespace mct
