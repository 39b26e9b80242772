#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mct/common.hpp"
#include "mct/raw_image.hpp"

// Baseline TIFF, uncompressed, chunky, gray or RGB, 8/16 bit, both byte
// orders on read; writes little-endian single-strip files.

namespace mct::dataio {

namespace tiffdetail {

enum Tag : std::uint16_t {
    kImageWidth = 256,
    kImageLength = 257,
    kBitsPerSample = 258,
    kCompression = 259,
    kPhotometric = 262,
    kStripOffsets = 273,
    kSamplesPerPixel = 277,
    kRowsPerStrip = 278,
    kStripByteCounts = 279,
    kPlanarConfig = 284,
    kSampleFormat = 339,
};

struct Reader {
    const std::vector<std::uint8_t>& buf;
    bool big_endian = false;

    std::uint16_t u16(std::size_t off) const {
        require(off + 2 <= buf.size(), "read_tiff: truncated file");
        return big_endian ? static_cast<std::uint16_t>((buf[off] << 8) | buf[off + 1])
                          : static_cast<std::uint16_t>(buf[off] | (buf[off + 1] << 8));
    }
    std::uint32_t u32(std::size_t off) const {
        require(off + 4 <= buf.size(), "read_tiff: truncated file");
        if (big_endian)
            return (std::uint32_t(buf[off]) << 24) | (std::uint32_t(buf[off + 1]) << 16) |
                   (std::uint32_t(buf[off + 2]) << 8) | std::uint32_t(buf[off + 3]);
        return std::uint32_t(buf[off]) | (std::uint32_t(buf[off + 1]) << 8) |
               (std::uint32_t(buf[off + 2]) << 16) | (std::uint32_t(buf[off + 3]) << 24);
    }
};

struct Entry {
    std::uint16_t tag = 0;
    std::uint16_t type = 0;  // 1=BYTE 3=SHORT 4=LONG
    std::uint32_t count = 0;
    std::uint32_t value_off = 0;  // raw 4-byte field offset in file
};

inline std::vector<std::uint32_t> entry_values(const Reader& rd, const Entry& e) {
    const std::size_t elem = e.type == 3 ? 2 : e.type == 4 ? 4 : 1;
    const std::size_t total = elem * e.count;
    // values fit inline in the 4-byte field, else the field is an offset
    std::size_t base = e.value_off;
    if (total > 4) base = rd.u32(e.value_off);
    std::vector<std::uint32_t> out(e.count);
    for (std::uint32_t i = 0; i < e.count; ++i) {
        if (e.type == 3)
            out[i] = rd.u16(base + 2 * i);
        else if (e.type == 4)
            out[i] = rd.u32(base + 4 * i);
        else
            out[i] = rd.buf[base + i];
    }
    return out;
}

}  // namespace tiffdetail

inline bool looks_like_tiff(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return false;
    char sig[4] = {};
    in.read(sig, 4);
    if (in.gcount() != 4) return false;
    return (sig[0] == 'I' && sig[1] == 'I' && sig[2] == 42 && sig[3] == 0) ||
           (sig[0] == 'M' && sig[1] == 'M' && sig[2] == 0 && sig[3] == 42);
}

inline RawImage read_tiff(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "read_tiff: cannot open " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    require(buf.size() >= 8, "read_tiff: truncated file: " + path);

    tiffdetail::Reader rd{buf};
    if (buf[0] == 'M' && buf[1] == 'M')
        rd.big_endian = true;
    else
        require(buf[0] == 'I' && buf[1] == 'I', "read_tiff: not a TIFF file: " + path);
    require(rd.u16(2) == 42, "read_tiff: bad magic in " + path);

    const std::uint32_t ifd = rd.u32(4);
    const std::uint16_t n_entries = rd.u16(ifd);
    std::vector<tiffdetail::Entry> entries(n_entries);
    for (std::uint16_t i = 0; i < n_entries; ++i) {
        const std::size_t off = ifd + 2 + 12u * i;
        entries[i] = {rd.u16(off), rd.u16(off + 2), rd.u32(off + 4), static_cast<std::uint32_t>(off + 8)};
    }
    auto find = [&](std::uint16_t tag) -> const tiffdetail::Entry* {
        for (const auto& e : entries)
            if (e.tag == tag) return &e;
        return nullptr;
    };
    auto scalar = [&](std::uint16_t tag, std::uint32_t fallback, bool required_tag) -> std::uint32_t {
        const auto* e = find(tag);
        if (!e) {
            require(!required_tag, "read_tiff: missing tag " + std::to_string(tag) + " in " + path);
            return fallback;
        }
        return tiffdetail::entry_values(rd, *e).at(0);
    };

    RawImage out;
    out.width = static_cast<int>(scalar(tiffdetail::kImageWidth, 0, true));
    out.height = static_cast<int>(scalar(tiffdetail::kImageLength, 0, true));
    out.channels = static_cast<int>(scalar(tiffdetail::kSamplesPerPixel, 1, false));
    require(out.channels == 1 || out.channels == 3, "read_tiff: unsupported sample count in " + path);
    require(scalar(tiffdetail::kCompression, 1, false) == 1,
            "read_tiff: only uncompressed TIFF is supported: " + path);
    require(scalar(tiffdetail::kPlanarConfig, 1, false) == 1,
            "read_tiff: only chunky planar configuration is supported: " + path);
    require(scalar(tiffdetail::kSampleFormat, 1, false) == 1,
            "read_tiff: only unsigned integer samples are supported: " + path);

    const auto* bps_entry = find(tiffdetail::kBitsPerSample);
    std::uint32_t bits = 8;
    if (bps_entry) {
        const auto bps = tiffdetail::entry_values(rd, *bps_entry);
        bits = bps.at(0);
        for (const auto b : bps) require(b == bits, "read_tiff: mixed bits per sample in " + path);
    }
    require(bits == 8 || bits == 16, "read_tiff: unsupported bit depth in " + path);
    out.bit_depth = static_cast<int>(bits);

    const auto* so = find(tiffdetail::kStripOffsets);
    const auto* sc = find(tiffdetail::kStripByteCounts);
    require(so && sc, "read_tiff: missing strip layout in " + path);
    const auto offsets = tiffdetail::entry_values(rd, *so);
    const auto counts = tiffdetail::entry_values(rd, *sc);
    require(offsets.size() == counts.size(), "read_tiff: strip table mismatch in " + path);

    std::vector<std::uint8_t> data;
    data.reserve(out.sample_count() * (bits / 8));
    for (std::size_t s = 0; s < offsets.size(); ++s) {
        require(static_cast<std::size_t>(offsets[s]) + counts[s] <= buf.size(),
                "read_tiff: strip out of range in " + path);
        data.insert(data.end(), buf.begin() + offsets[s], buf.begin() + offsets[s] + counts[s]);
    }
    require(data.size() >= out.sample_count() * (bits / 8), "read_tiff: pixel data truncated in " + path);

    out.samples.resize(out.sample_count());
    if (bits == 8) {
        for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] = data[i];
    } else {
        for (std::size_t i = 0; i < out.samples.size(); ++i) {
            const std::uint8_t a = data[2 * i], b = data[2 * i + 1];
            out.samples[i] = rd.big_endian ? static_cast<std::uint16_t>((a << 8) | b)
                                           : static_cast<std::uint16_t>(a | (b << 8));
        }
    }
    return out;
}

inline void write_tiff(const std::string& path, const RawImage& img) {
    require(img.channels == 1 || img.channels == 3, "write_tiff: unsupported channel count");
    require(img.bit_depth == 8 || img.bit_depth == 16, "write_tiff: unsupported bit depth");
    require(img.samples.size() == img.sample_count(), "write_tiff: sample buffer size mismatch");

    std::vector<std::uint8_t> out;
    auto put16 = [&](std::uint16_t v) {
        out.push_back(static_cast<std::uint8_t>(v & 0xff));
        out.push_back(static_cast<std::uint8_t>(v >> 8));
    };
    auto put32 = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
    };

    out.insert(out.end(), {'I', 'I', 42, 0});
    put32(8);  // IFD offset

    const bool rgb = img.channels == 3;
    const std::uint16_t n_entries = 10;
    const std::uint32_t ifd_size = 2 + 12u * n_entries + 4;
    const std::uint32_t bps_extra = rgb ? 6u : 0u;  // 3 shorts when RGB
    const std::uint32_t data_off = 8 + ifd_size + bps_extra;
    const std::uint32_t data_bytes =
        static_cast<std::uint32_t>(img.sample_count() * (img.bit_depth / 8));

    put16(n_entries);
    auto entry = [&](std::uint16_t tag, std::uint16_t type, std::uint32_t count, std::uint32_t value) {
        put16(tag);
        put16(type);
        put32(count);
        if (type == 3 && count == 1) {
            put16(static_cast<std::uint16_t>(value));
            put16(0);
        } else {
            put32(value);
        }
    };
    entry(tiffdetail::kImageWidth, 4, 1, static_cast<std::uint32_t>(img.width));
    entry(tiffdetail::kImageLength, 4, 1, static_cast<std::uint32_t>(img.height));
    if (rgb)
        entry(tiffdetail::kBitsPerSample, 3, 3, 8 + ifd_size);  // offset to the 3 shorts
    else
        entry(tiffdetail::kBitsPerSample, 3, 1, static_cast<std::uint32_t>(img.bit_depth));
    entry(tiffdetail::kCompression, 3, 1, 1);
    entry(tiffdetail::kPhotometric, 3, 1, rgb ? 2 : 1);
    entry(tiffdetail::kStripOffsets, 4, 1, data_off);
    entry(tiffdetail::kSamplesPerPixel, 3, 1, static_cast<std::uint32_t>(img.channels));
    entry(tiffdetail::kRowsPerStrip, 4, 1, static_cast<std::uint32_t>(img.height));
    entry(tiffdetail::kStripByteCounts, 4, 1, data_bytes);
    entry(tiffdetail::kPlanarConfig, 3, 1, 1);
    put32(0);  // no next IFD
    if (rgb)
        for (int i = 0; i < 3; ++i) put16(static_cast<std::uint16_t>(img.bit_depth));

    if (img.bit_depth == 8) {
        for (const auto s : img.samples) out.push_back(static_cast<std::uint8_t>(s));
    } else {
        for (const auto s : img.samples) put16(s);
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(f.good(), "write_tiff: cannot open " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    require(f.good(), "write_tiff: write failed: " + path);
}

}  // namespace mct::dataio
