#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsic/io.hpp"
#include "hsic/matrix.hpp"

namespace hsic {

// H x W image of L-band spectra, stored pixel-major band-minor so that a
// pixel's spectrum is contiguous.
struct HyperCube {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t bands = 0;
    std::vector<double> values;

    HyperCube() = default;
    HyperCube(std::size_t h, std::size_t w, std::size_t l)
        : height(h), width(w), bands(l), values(h * w * l, 0.0) {}

    std::size_t pixels() const { return height * width; }

    std::span<double> spectrum(std::size_t r, std::size_t c) {
        return {values.data() + (r * width + c) * bands, bands};
    }
    std::span<const double> spectrum(std::size_t r, std::size_t c) const {
        return {values.data() + (r * width + c) * bands, bands};
    }
    std::span<const double> spectrum_at(std::size_t pixel_index) const {
        return {values.data() + pixel_index * bands, bands};
    }
};

struct GroundTruth {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t num_classes = 0;               // K; labels are 0 (unlabeled) .. K
    std::vector<std::uint16_t> labels;         // H x W row-major
    std::vector<std::string> class_names;      // K entries

    std::uint16_t label(std::size_t r, std::size_t c) const { return labels[r * width + c]; }
};

enum class SplitKind : std::uint8_t { Neither = 0, Train = 1, Test = 2 };

struct SplitMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<SplitKind> kinds;  // H x W row-major

    SplitKind at(std::size_t r, std::size_t c) const { return kinds[r * width + c]; }
    SplitKind& at(std::size_t r, std::size_t c) { return kinds[r * width + c]; }
    bool is_train(std::size_t r, std::size_t c) const { return at(r, c) == SplitKind::Train; }
};

// A flat collection of labeled spectra detached from pixel positions.
struct SampleSet {
    Matrix spectra;           // [N x L]
    std::vector<int> labels;  // 1..K

    std::size_t size() const { return spectra.rows; }
};

inline constexpr char kCubeMagic[8] = {'H', 'S', 'I', 'C', 'U', 'B', 'E', '1'};
inline constexpr char kGroundTruthMagic[8] = {'H', 'S', 'I', 'C', 'G', 'T', '0', '1'};
inline constexpr char kMaskMagic[8] = {'H', 'S', 'I', 'C', 'M', 'S', 'K', '1'};

inline void save_cube(const HyperCube& cube, const std::string& path) {
    io::Writer w(path);
    w.magic(kCubeMagic);
    w.u32(static_cast<std::uint32_t>(cube.height));
    w.u32(static_cast<std::uint32_t>(cube.width));
    w.u32(static_cast<std::uint32_t>(cube.bands));
    w.f64_array(cube.values.data(), cube.values.size());
    w.close();
}

inline HyperCube load_cube(const std::string& path) {
    io::Reader r(path);
    r.expect_magic(kCubeMagic);
    const std::uint64_t h = r.u32();
    const std::uint64_t w = r.u32();
    const std::uint64_t l = r.u32();
    if (h == 0 || w == 0 || l == 0) throw DataError(path + ": zero cube dimension");
    if (h * w * l > (std::uint64_t{1} << 34))
        throw DataError(path + ": cube dimensions overflow sanity bound");
    HyperCube cube(h, w, l);
    r.f64_array(cube.values.data(), cube.values.size());
    return cube;
}

inline void save_groundtruth(const GroundTruth& gt, const std::string& path) {
    io::Writer w(path);
    w.magic(kGroundTruthMagic);
    w.u32(static_cast<std::uint32_t>(gt.height));
    w.u32(static_cast<std::uint32_t>(gt.width));
    w.u32(static_cast<std::uint32_t>(gt.num_classes));
    w.u16_array(gt.labels.data(), gt.labels.size());
    for (const std::string& name : gt.class_names) w.line(name);
    w.close();
}

inline GroundTruth load_groundtruth(const std::string& path) {
    io::Reader r(path);
    r.expect_magic(kGroundTruthMagic);
    GroundTruth gt;
    gt.height = r.u32();
    gt.width = r.u32();
    gt.num_classes = r.u32();
    if (gt.height == 0 || gt.width == 0) throw DataError(path + ": zero groundtruth dimension");
    gt.labels.resize(gt.height * gt.width);
    r.u16_array(gt.labels.data(), gt.labels.size());
    for (std::uint16_t lab : gt.labels)
        if (lab > gt.num_classes)
            throw DataError(path + ": label " + std::to_string(lab) + " exceeds K=" +
                            std::to_string(gt.num_classes));
    for (std::size_t k = 0; k < gt.num_classes; ++k) gt.class_names.push_back(r.line());
    return gt;
}

inline void save_mask(const SplitMask& mask, const std::string& path) {
    io::Writer w(path);
    w.magic(kMaskMagic);
    w.u32(static_cast<std::uint32_t>(mask.height));
    w.u32(static_cast<std::uint32_t>(mask.width));
    for (SplitKind k : mask.kinds) w.u8(static_cast<std::uint8_t>(k));
    w.close();
}

inline SplitMask load_mask(const std::string& path) {
    io::Reader r(path);
    r.expect_magic(kMaskMagic);
    SplitMask mask;
    mask.height = r.u32();
    mask.width = r.u32();
    if (mask.height == 0 || mask.width == 0) throw DataError(path + ": zero mask dimension");
    mask.kinds.resize(mask.height * mask.width);
    for (SplitKind& k : mask.kinds) {
        const std::uint8_t v = r.u8();
        if (v > 2) throw DataError(path + ": invalid mask code " + std::to_string(v));
        k = static_cast<SplitKind>(v);
    }
    return mask;
}

// Synthetic fixture: the image is split into K contiguous regions (row-major
// pixel ranges); each class draws spectra from N(separation * u_k, I) with a
// class-specific random unit direction u_k.
inline std::pair<HyperCube, GroundTruth> synth_cube(std::size_t k, std::size_t h, std::size_t w,
                                                    std::size_t l, double separation,
                                                    std::uint64_t seed) {
    if (k == 0 || k > h * w) throw std::invalid_argument("synth_cube: infeasible class count");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Matrix means(k, l);
    for (std::size_t c = 0; c < k; ++c) {
        double norm2 = 0.0;
        for (std::size_t b = 0; b < l; ++b) {
            means(c, b) = gauss(rng);
            norm2 += means(c, b) * means(c, b);
        }
        const double scale = norm2 > 0.0 ? separation / std::sqrt(norm2) : 0.0;
        for (std::size_t b = 0; b < l; ++b) means(c, b) *= scale;
    }

    HyperCube cube(h, w, l);
    GroundTruth gt;
    gt.height = h;
    gt.width = w;
    gt.num_classes = k;
    gt.labels.resize(h * w);
    for (std::size_t c = 0; c < k; ++c) gt.class_names.push_back("class" + std::to_string(c + 1));

    const std::size_t n = h * w;
    for (std::size_t p = 0; p < n; ++p) {
        const std::size_t cls = std::min(p * k / n, k - 1);
        gt.labels[p] = static_cast<std::uint16_t>(cls + 1);
        double* spec = cube.values.data() + p * l;
        for (std::size_t b = 0; b < l; ++b) spec[b] = means(cls, b) + gauss(rng);
    }
    return {std::move(cube), std::move(gt)};
}

}  // namespace hsic
