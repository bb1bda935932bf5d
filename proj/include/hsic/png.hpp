#pragma once

#include <zlib.h>

#include <array>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsic/classify.hpp"

namespace hsic {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
};

// Fixed palette: index 0 (background / unlabeled) is black, classes cycle
// through visually distinct colors.
inline std::vector<Rgb> default_palette(std::size_t num_classes) {
    static const std::array<Rgb, 16> base = {{
        {230, 25, 75},   {60, 180, 75},   {255, 225, 25}, {0, 130, 200},
        {245, 130, 48},  {145, 30, 180},  {70, 240, 240}, {240, 50, 230},
        {210, 245, 60},  {250, 190, 190}, {0, 128, 128},  {170, 110, 40},
        {128, 0, 0},     {128, 128, 0},   {0, 0, 128},    {128, 128, 128},
    }};
    std::vector<Rgb> palette;
    palette.push_back({0, 0, 0});
    for (std::size_t c = 0; c < num_classes; ++c) {
        Rgb col = base[c % base.size()];
        // Later cycles get dimmed so indices stay distinguishable.
        const std::uint8_t shift = static_cast<std::uint8_t>((c / base.size()) * 60);
        col.r = static_cast<std::uint8_t>(col.r > shift ? col.r - shift : col.r + 40);
        palette.push_back(col);
    }
    return palette;
}

namespace detail {

inline void png_chunk(std::ofstream& out, const char type[4], const std::vector<std::uint8_t>& payload) {
    auto be32 = [&](std::uint32_t v) {
        const std::uint8_t b[4] = {static_cast<std::uint8_t>(v >> 24),
                                   static_cast<std::uint8_t>(v >> 16),
                                   static_cast<std::uint8_t>(v >> 8),
                                   static_cast<std::uint8_t>(v)};
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    be32(static_cast<std::uint32_t>(payload.size()));
    out.write(type, 4);
    if (!payload.empty())
        out.write(reinterpret_cast<const char*>(payload.data()),
                  static_cast<std::streamsize>(payload.size()));
    std::uint32_t crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
    if (!payload.empty()) crc = crc32(crc, payload.data(), static_cast<uInt>(payload.size()));
    be32(crc);
}

}  // namespace detail

// Writes an 8-bit indexed (color type 3) PNG of a prediction map. Label 0
// maps to palette entry 0.
inline void export_map_png(const PredictionMap& pred, const std::vector<Rgb>& palette,
                           const std::string& path) {
    if (palette.empty() || palette.size() > 256)
        throw std::invalid_argument("export_map_png: palette must have 1..256 entries");
    for (std::uint16_t lab : pred.labels)
        if (lab >= palette.size())
            throw std::invalid_argument("export_map_png: label " + std::to_string(lab) +
                                        " has no palette entry");

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write image: " + path);
    static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    out.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<std::uint8_t> ihdr(13);
    auto put32 = [](std::vector<std::uint8_t>& v, std::size_t at, std::uint32_t x) {
        v[at] = static_cast<std::uint8_t>(x >> 24);
        v[at + 1] = static_cast<std::uint8_t>(x >> 16);
        v[at + 2] = static_cast<std::uint8_t>(x >> 8);
        v[at + 3] = static_cast<std::uint8_t>(x);
    };
    put32(ihdr, 0, static_cast<std::uint32_t>(pred.width));
    put32(ihdr, 4, static_cast<std::uint32_t>(pred.height));
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 3;   // indexed color
    ihdr[10] = ihdr[11] = ihdr[12] = 0;
    detail::png_chunk(out, "IHDR", ihdr);

    std::vector<std::uint8_t> plte;
    for (const Rgb& c : palette) {
        plte.push_back(c.r);
        plte.push_back(c.g);
        plte.push_back(c.b);
    }
    detail::png_chunk(out, "PLTE", plte);

    // Scanlines with filter byte 0.
    std::vector<std::uint8_t> raw;
    raw.reserve(pred.height * (pred.width + 1));
    for (std::size_t r = 0; r < pred.height; ++r) {
        raw.push_back(0);
        for (std::size_t c = 0; c < pred.width; ++c)
            raw.push_back(static_cast<std::uint8_t>(pred.at(r, c)));
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> idat(bound);
    if (compress2(idat.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
        throw std::runtime_error("export_map_png: zlib compression failed");
    idat.resize(bound);
    detail::png_chunk(out, "IDAT", idat);
    detail::png_chunk(out, "IEND", {});
    out.close();
    if (!out) throw DataError(path + ": close failure");
}

}  // namespace hsic
