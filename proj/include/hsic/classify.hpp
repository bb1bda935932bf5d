#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "hsic/data.hpp"
#include "hsic/matrix.hpp"
#include "hsic/nncore.hpp"

namespace hsic {

// Testing-stage class centers: exact per-class means of inference-mode
// features over the real training samples.
struct EstimatedCenters {
    Matrix centers;  // [K x d]

    std::size_t num_classes() const { return centers.rows; }
    std::size_t dim() const { return centers.cols; }
};

// H x W grid of feature vectors for every pixel of the image.
struct FeatureMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t dim = 0;
    std::vector<double> values;  // pixel-major

    FeatureMap() = default;
    FeatureMap(std::size_t h, std::size_t w, std::size_t d)
        : height(h), width(w), dim(d), values(h * w * d, 0.0) {}

    std::span<double> at(std::size_t r, std::size_t c) {
        return {values.data() + (r * width + c) * dim, dim};
    }
    std::span<const double> at(std::size_t r, std::size_t c) const {
        return {values.data() + (r * width + c) * dim, dim};
    }
};

struct ScaleSet {
    std::vector<std::size_t> scales;

    static ScaleSet default_eight() { return ScaleSet{{3, 5, 7, 9, 11, 13, 15, 17}}; }

    void validate() const {
        if (scales.empty()) throw std::invalid_argument("scale set is empty");
        std::size_t prev = 1;
        for (std::size_t s : scales) {
            if (s < 3 || s % 2 == 0)
                throw std::invalid_argument("scale " + std::to_string(s) +
                                            " is not an odd number >= 3");
            if (s <= prev) throw std::invalid_argument("scales must be strictly increasing");
            prev = s;
        }
    }
};

struct ScaleVote {
    std::size_t scale = 0;
    std::vector<double> feature;  // neighborhood-averaged feature
    int label = 0;
    double distance = 0.0;  // Euclidean distance to the predicted center
    double weight = 0.0;
};

struct VoteBreakdown {
    std::vector<ScaleVote> votes;
    std::vector<double> label_weights;  // W_p indexed by label-1
    int winner = 0;
};

struct PredictionMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint16_t> labels;  // 0 = not predicted (train / unlabeled)

    std::uint16_t at(std::size_t r, std::size_t c) const { return labels[r * width + c]; }
};

inline EstimatedCenters estimate_centers(Network& net, const SampleSet& train) {
    if (train.size() == 0) throw std::invalid_argument("estimate_centers: empty sample set");
    int max_label = 0;
    for (int y : train.labels) max_label = std::max(max_label, y);
    const std::size_t k = static_cast<std::size_t>(max_label);

    Batch batch;
    batch.inputs = train.spectra;
    batch.labels = train.labels;
    const ForwardTrace trace = forward(net, batch, Mode::Infer);
    const Matrix& feats = trace.features();

    EstimatedCenters est;
    est.centers = Matrix(k, feats.cols);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < train.size(); ++i) {
        const std::size_t c = static_cast<std::size_t>(train.labels[i] - 1);
        auto f = feats.row(i);
        for (std::size_t j = 0; j < feats.cols; ++j) est.centers(c, j) += f[j];
        ++counts[c];
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0)
            throw std::invalid_argument("estimate_centers: class " + std::to_string(c + 1) +
                                        " has no training samples");
        for (std::size_t j = 0; j < feats.cols; ++j)
            est.centers(c, j) /= static_cast<double>(counts[c]);
    }
    return est;
}

struct NearestCenter {
    int label = 0;
    double distance = 0.0;
};

// Nearest estimated center under Euclidean distance; ties go to the lowest
// class index.
inline NearestCenter nearest_center(std::span<const double> feature,
                                    const EstimatedCenters& centers) {
    if (feature.size() != centers.dim())
        throw std::invalid_argument("nearest_center: feature dimension mismatch");
    NearestCenter best;
    best.distance = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centers.num_classes(); ++c) {
        const double d2 = squared_distance(feature, centers.centers.row(c));
        if (d2 < best.distance) {
            best.distance = d2;
            best.label = static_cast<int>(c + 1);
        }
    }
    best.distance = std::sqrt(best.distance);
    return best;
}

inline int scc_classify(std::span<const double> feature, const EstimatedCenters& centers) {
    return nearest_center(feature, centers).label;
}

inline FeatureMap extract_feature_map(Network& net, const HyperCube& cube) {
    if (cube.bands != net.input_size())
        throw std::invalid_argument("extract_feature_map: band count does not match network");
    FeatureMap fm(cube.height, cube.width, net.feature_size());

    const std::size_t chunk = 1024;
    const std::size_t n = cube.pixels();
    Batch batch;
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t m = std::min(chunk, n - start);
        batch.inputs = Matrix(m, cube.bands);
        batch.labels.assign(m, 1);
        for (std::size_t i = 0; i < m; ++i) {
            auto spec = cube.spectrum_at(start + i);
            std::copy(spec.begin(), spec.end(), batch.inputs.row(i).begin());
        }
        const ForwardTrace trace = forward(net, batch, Mode::Infer);
        const Matrix& feats = trace.features();
        std::copy(feats.data.begin(), feats.data.end(),
                  fm.values.begin() + static_cast<std::ptrdiff_t>(start * fm.dim));
    }
    return fm;
}

// Neighborhood-averaged feature: mean of stored features over the
// scale x scale window centered at (row,col), window clipped to the image,
// training pixels excluded. The center pixel must not be a training pixel,
// so the average is never empty.
inline std::vector<double> spatial_feature(const FeatureMap& fm, const SplitMask& mask,
                                           std::size_t row, std::size_t col, std::size_t scale) {
    if (scale % 2 == 0 || scale < 1) throw std::invalid_argument("spatial_feature: scale must be odd");
    if (fm.height != mask.height || fm.width != mask.width)
        throw std::invalid_argument("spatial_feature: mask shape mismatch");
    if (mask.is_train(row, col))
        throw std::invalid_argument("spatial_feature: center pixel is a training pixel");

    const std::size_t half = scale / 2;
    const std::size_t r0 = row > half ? row - half : 0;
    const std::size_t r1 = std::min(fm.height - 1, row + half);
    const std::size_t c0 = col > half ? col - half : 0;
    const std::size_t c1 = std::min(fm.width - 1, col + half);

    std::vector<double> sum(fm.dim, 0.0);
    std::size_t cnt = 0;
    for (std::size_t r = r0; r <= r1; ++r)
        for (std::size_t c = c0; c <= c1; ++c) {
            if (mask.is_train(r, c)) continue;
            auto f = fm.at(r, c);
            for (std::size_t j = 0; j < fm.dim; ++j) sum[j] += f[j];
            ++cnt;
        }
    for (double& v : sum) v /= static_cast<double>(cnt);
    return sum;
}

// Adaptive multiscale voting: each scale's averaged feature is classified by
// the center rule and weighted by the inverse distance to its predicted
// center; a near-zero distance wins outright.
inline VoteBreakdown asscc_classify(const FeatureMap& fm, const SplitMask& mask,
                                    const EstimatedCenters& centers, std::size_t row,
                                    std::size_t col, const ScaleSet& scales) {
    scales.validate();
    VoteBreakdown breakdown;
    breakdown.label_weights.assign(centers.num_classes(), 0.0);

    for (std::size_t s : scales.scales) {
        ScaleVote vote;
        vote.scale = s;
        vote.feature = spatial_feature(fm, mask, row, col, s);
        const NearestCenter nc = nearest_center(vote.feature, centers);
        vote.label = nc.label;
        vote.distance = nc.distance;
        if (nc.distance < 1e-12) {
            vote.weight = std::numeric_limits<double>::infinity();
            breakdown.votes.push_back(std::move(vote));
            breakdown.winner = nc.label;
            breakdown.label_weights[static_cast<std::size_t>(nc.label - 1)] =
                std::numeric_limits<double>::infinity();
            return breakdown;
        }
        vote.weight = 1.0 / nc.distance;
        breakdown.label_weights[static_cast<std::size_t>(vote.label - 1)] += vote.weight;
        breakdown.votes.push_back(std::move(vote));
    }

    double best = -1.0;
    for (std::size_t p = 0; p < breakdown.label_weights.size(); ++p) {
        if (breakdown.label_weights[p] > best) {
            best = breakdown.label_weights[p];
            breakdown.winner = static_cast<int>(p + 1);
        }
    }
    return breakdown;
}

struct SccMode {};
struct SsccMode { std::size_t scale = 3; };
struct AssccMode { ScaleSet scales = ScaleSet::default_eight(); };
using ClassifyMode = std::variant<SccMode, SsccMode, AssccMode>;

// Labels every Test pixel of the image; Train and unlabeled pixels stay 0.
inline PredictionMap classify_image(const FeatureMap& fm, const SplitMask& mask,
                                    const EstimatedCenters& centers, const ClassifyMode& mode) {
    if (fm.height != mask.height || fm.width != mask.width)
        throw std::invalid_argument("classify_image: shape mismatch");
    PredictionMap pred;
    pred.height = fm.height;
    pred.width = fm.width;
    pred.labels.assign(fm.height * fm.width, 0);

    for (std::size_t r = 0; r < fm.height; ++r)
        for (std::size_t c = 0; c < fm.width; ++c) {
            if (mask.at(r, c) != SplitKind::Test) continue;
            int label = 0;
            if (std::holds_alternative<SccMode>(mode)) {
                label = scc_classify(fm.at(r, c), centers);
            } else if (const auto* sscc = std::get_if<SsccMode>(&mode)) {
                const auto f = spatial_feature(fm, mask, r, c, sscc->scale);
                label = scc_classify(f, centers);
            } else {
                const auto& asscc = std::get<AssccMode>(mode);
                label = asscc_classify(fm, mask, centers, r, c, asscc.scales).winner;
            }
            pred.labels[r * fm.width + c] = static_cast<std::uint16_t>(label);
        }
    return pred;
}

inline constexpr char kPredictionMagic[8] = {'H', 'S', 'I', 'C', 'P', 'R', 'D', '1'};
inline constexpr char kFeatureMapMagic[8] = {'H', 'S', 'I', 'C', 'F', 'M', 'P', '1'};

inline void save_prediction(const PredictionMap& pred, const std::string& path) {
    io::Writer w(path);
    w.magic(kPredictionMagic);
    w.u32(static_cast<std::uint32_t>(pred.height));
    w.u32(static_cast<std::uint32_t>(pred.width));
    w.u16_array(pred.labels.data(), pred.labels.size());
    w.close();
}

inline PredictionMap load_prediction(const std::string& path) {
    io::Reader r(path);
    r.expect_magic(kPredictionMagic);
    PredictionMap pred;
    pred.height = r.u32();
    pred.width = r.u32();
    if (pred.height == 0 || pred.width == 0) throw DataError(path + ": zero dimension");
    pred.labels.resize(pred.height * pred.width);
    r.u16_array(pred.labels.data(), pred.labels.size());
    return pred;
}

inline void save_feature_map(const FeatureMap& fm, const std::string& path) {
    io::Writer w(path);
    w.magic(kFeatureMapMagic);
    w.u32(static_cast<std::uint32_t>(fm.height));
    w.u32(static_cast<std::uint32_t>(fm.width));
    w.u32(static_cast<std::uint32_t>(fm.dim));
    w.f64_array(fm.values.data(), fm.values.size());
    w.close();
}

inline FeatureMap load_feature_map(const std::string& path) {
    io::Reader r(path);
    r.expect_magic(kFeatureMapMagic);
    const std::uint32_t h = r.u32();
    const std::uint32_t w = r.u32();
    const std::uint32_t d = r.u32();
    if (h == 0 || w == 0 || d == 0) throw DataError(path + ": zero dimension");
    FeatureMap fm(h, w, d);
    r.f64_array(fm.values.data(), fm.values.size());
    return fm;
}

// Debug dump of per-scale votes, one CSV row per (pixel, scale).
inline void append_vote_csv(std::ofstream& out, std::size_t row, std::size_t col,
                            const VoteBreakdown& breakdown) {
    for (const ScaleVote& v : breakdown.votes)
        out << row << ',' << col << ',' << v.scale << ',' << v.label << ',' << v.distance << ','
            << v.weight << '\n';
}

}  // namespace hsic
