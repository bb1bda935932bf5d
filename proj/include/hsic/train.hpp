#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsic/data.hpp"
#include "hsic/losses.hpp"
#include "hsic/matrix.hpp"
#include "hsic/nncore.hpp"

namespace hsic {

enum class NormalizeMode { PerBand, Global };

struct TrainConfig {
    std::size_t batch_size = 512;
    double lr0 = 0.01;
    std::size_t decay_every = 20000;
    double decay_multiplier = std::sqrt(0.1);
    std::size_t max_batches = 60000;
    double lambda = 0.01;
    double alpha = 0.5;
    double dropout_ratio = 0.3;
    std::size_t virtual_per_class = 80000;
    std::size_t real_per_class = 200;
    double q_min = -1.0;
    double q_max = 2.0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> hidden_dims = {512, 256, 32};
    NormalizeMode normalize = NormalizeMode::PerBand;
    std::size_t trace_stride = 100;

    void validate() const {
        if (batch_size == 0 || max_batches == 0 || decay_every == 0 || trace_stride == 0)
            throw std::invalid_argument("config: counts must be positive");
        if (lr0 <= 0.0 || decay_multiplier <= 0.0)
            throw std::invalid_argument("config: learning rate fields must be positive");
        if (lambda < 0.0) throw std::invalid_argument("config: lambda must be nonnegative");
        if (alpha <= 0.0 || alpha > 1.0) throw std::invalid_argument("config: alpha in (0,1]");
        if (dropout_ratio < 0.0 || dropout_ratio >= 1.0)
            throw std::invalid_argument("config: dropout ratio in [0,1)");
        if (q_min > q_max) throw std::invalid_argument("config: empty q range");
        if (hidden_dims.empty()) throw std::invalid_argument("config: no hidden layers");
        for (std::size_t d : hidden_dims)
            if (d == 0) throw std::invalid_argument("config: zero hidden layer size");
    }
};

// Flat `key = value` config file; '#' starts a comment. Unknown keys are an
// error so typos do not silently fall back to defaults.
inline TrainConfig parse_config(std::istream& in) {
    TrainConfig cfg;
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const auto hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const auto eq = raw.find('=');
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        if (eq == std::string::npos) {
            if (!trim(raw).empty())
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": expected key = value");
            continue;
        }
        const std::string key = trim(raw.substr(0, eq));
        const std::string val = trim(raw.substr(eq + 1));
        if (key.empty() || val.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": empty key or value");
        try {
            if (key == "batch_size") cfg.batch_size = std::stoull(val);
            else if (key == "lr0") cfg.lr0 = std::stod(val);
            else if (key == "decay_every") cfg.decay_every = std::stoull(val);
            else if (key == "decay_multiplier") cfg.decay_multiplier = std::stod(val);
            else if (key == "max_batches") cfg.max_batches = std::stoull(val);
            else if (key == "lambda") cfg.lambda = std::stod(val);
            else if (key == "alpha") cfg.alpha = std::stod(val);
            else if (key == "dropout_ratio") cfg.dropout_ratio = std::stod(val);
            else if (key == "virtual_per_class") cfg.virtual_per_class = std::stoull(val);
            else if (key == "real_per_class") cfg.real_per_class = std::stoull(val);
            else if (key == "q_min") cfg.q_min = std::stod(val);
            else if (key == "q_max") cfg.q_max = std::stod(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "trace_stride") cfg.trace_stride = std::stoull(val);
            else if (key == "normalize") {
                if (val == "per_band") cfg.normalize = NormalizeMode::PerBand;
                else if (val == "global") cfg.normalize = NormalizeMode::Global;
                else throw std::invalid_argument("normalize must be per_band or global");
            } else if (key == "hidden_dims") {
                cfg.hidden_dims.clear();
                std::stringstream ss(val);
                std::string tok;
                while (std::getline(ss, tok, ',')) cfg.hidden_dims.push_back(std::stoull(tok));
            } else {
                throw std::invalid_argument("unknown key '" + key + "'");
            }
        } catch (const std::invalid_argument&) {
            throw;
        } catch (const std::exception&) {
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": bad value for " + key);
        }
    }
    cfg.validate();
    return cfg;
}

inline TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path);
    return parse_config(in);
}

struct NormalizationStats {
    // One entry per band in per-band mode, a single entry in global mode.
    std::vector<double> means;
    std::vector<double> stds;
};

inline NormalizationStats normalize_cube(HyperCube& cube, NormalizeMode mode = NormalizeMode::PerBand) {
    const std::size_t n = cube.pixels();
    if (n == 0) throw std::invalid_argument("normalize_cube: empty cube");
    NormalizationStats stats;

    const std::size_t groups = mode == NormalizeMode::PerBand ? cube.bands : 1;
    stats.means.assign(groups, 0.0);
    stats.stds.assign(groups, 0.0);

    auto group_of = [&](std::size_t band) { return mode == NormalizeMode::PerBand ? band : 0; };
    std::vector<std::size_t> counts(groups, 0);
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t b = 0; b < cube.bands; ++b) {
            stats.means[group_of(b)] += cube.values[p * cube.bands + b];
            ++counts[group_of(b)];
        }
    for (std::size_t g = 0; g < groups; ++g) stats.means[g] /= static_cast<double>(counts[g]);
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t b = 0; b < cube.bands; ++b) {
            const double d = cube.values[p * cube.bands + b] - stats.means[group_of(b)];
            stats.stds[group_of(b)] += d * d;
        }
    for (std::size_t g = 0; g < groups; ++g) {
        stats.stds[g] = std::sqrt(stats.stds[g] / static_cast<double>(counts[g]));
        if (stats.stds[g] == 0.0)
            throw std::invalid_argument("normalize_cube: zero variance in band " +
                                        std::to_string(g));
    }
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t b = 0; b < cube.bands; ++b) {
            double& v = cube.values[p * cube.bands + b];
            v = (v - stats.means[group_of(b)]) / stats.stds[group_of(b)];
        }
    return stats;
}

inline void denormalize_cube(HyperCube& cube, const NormalizationStats& stats) {
    const bool per_band = stats.means.size() == cube.bands;
    auto group_of = [&](std::size_t band) { return per_band ? band : 0; };
    for (std::size_t p = 0; p < cube.pixels(); ++p)
        for (std::size_t b = 0; b < cube.bands; ++b) {
            double& v = cube.values[p * cube.bands + b];
            v = v * stats.stds[group_of(b)] + stats.means[group_of(b)];
        }
}

// Applies an already computed normalization to another cube of the same band
// count (used for classifying variants of the training scene).
inline void apply_normalization(HyperCube& cube, const NormalizationStats& stats) {
    const bool per_band = stats.means.size() == cube.bands;
    if (!per_band && stats.means.size() != 1)
        throw std::invalid_argument("apply_normalization: stats do not match cube");
    auto group_of = [&](std::size_t band) { return per_band ? band : 0; };
    for (std::size_t p = 0; p < cube.pixels(); ++p)
        for (std::size_t b = 0; b < cube.bands; ++b) {
            double& v = cube.values[p * cube.bands + b];
            v = (v - stats.means[group_of(b)]) / stats.stds[group_of(b)];
        }
}

inline SplitMask split_train_test(const GroundTruth& gt, std::size_t per_class,
                                  std::uint64_t seed) {
    SplitMask mask;
    mask.height = gt.height;
    mask.width = gt.width;
    mask.kinds.assign(gt.height * gt.width, SplitKind::Neither);

    std::vector<std::vector<std::size_t>> by_class(gt.num_classes);
    for (std::size_t p = 0; p < gt.labels.size(); ++p)
        if (gt.labels[p] > 0) by_class[gt.labels[p] - 1].push_back(p);

    std::mt19937_64 rng(seed);
    for (std::size_t c = 0; c < gt.num_classes; ++c) {
        auto& pixels = by_class[c];
        if (pixels.size() < per_class)
            throw std::invalid_argument("split_train_test: class " + std::to_string(c + 1) +
                                        " has only " + std::to_string(pixels.size()) +
                                        " labeled pixels, need " + std::to_string(per_class));
        std::shuffle(pixels.begin(), pixels.end(), rng);
        for (std::size_t i = 0; i < pixels.size(); ++i)
            mask.kinds[pixels[i]] = i < per_class ? SplitKind::Train : SplitKind::Test;
    }
    return mask;
}

// Gathers the real training spectra designated by the mask, in row-major
// pixel order.
inline SampleSet gather_training_samples(const HyperCube& cube, const GroundTruth& gt,
                                         const SplitMask& mask) {
    std::size_t count = 0;
    for (std::size_t p = 0; p < mask.kinds.size(); ++p)
        if (mask.kinds[p] == SplitKind::Train) ++count;
    SampleSet set;
    set.spectra = Matrix(count, cube.bands);
    set.labels.reserve(count);
    std::size_t row = 0;
    for (std::size_t p = 0; p < mask.kinds.size(); ++p) {
        if (mask.kinds[p] != SplitKind::Train) continue;
        auto spec = cube.spectrum_at(p);
        std::copy(spec.begin(), spec.end(), set.spectra.row(row).begin());
        set.labels.push_back(gt.labels[p]);
        ++row;
    }
    return set;
}

// Virtual samples: y = q*x1 + (1-q)*x2 for an ordered pair of distinct real
// samples of one class, q uniform on [q_min, q_max].
inline SampleSet make_virtual_samples(const SampleSet& train, std::size_t count_per_class,
                                      double q_min, double q_max, std::uint64_t seed) {
    if (q_min > q_max) throw std::invalid_argument("make_virtual_samples: empty q range");
    std::vector<std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < train.size(); ++i) {
        const std::size_t c = static_cast<std::size_t>(train.labels[i]);
        if (c >= by_class.size() + 1) by_class.resize(c);
        by_class[c - 1].push_back(i);
    }
    for (std::size_t c = 0; c < by_class.size(); ++c)
        if (by_class[c].size() < 2)
            throw std::invalid_argument("make_virtual_samples: class " + std::to_string(c + 1) +
                                        " has fewer than 2 samples");

    const std::size_t l = train.spectra.cols;
    SampleSet out;
    out.spectra = Matrix(count_per_class * by_class.size(), l);
    out.labels.reserve(out.spectra.rows);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> qdist(q_min, q_max);
    std::size_t row = 0;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        const auto& idx = by_class[c];
        std::uniform_int_distribution<std::size_t> pick(0, idx.size() - 1);
        std::uniform_int_distribution<std::size_t> pick_other(0, idx.size() - 2);
        for (std::size_t v = 0; v < count_per_class; ++v) {
            const std::size_t a = pick(rng);
            std::size_t b = pick_other(rng);
            if (b >= a) ++b;  // uniform over ordered distinct pairs
            const double q = qdist(rng);
            auto x1 = train.spectra.row(idx[a]);
            auto x2 = train.spectra.row(idx[b]);
            auto y = out.spectra.row(row);
            for (std::size_t j = 0; j < l; ++j) y[j] = q * x1[j] + (1.0 - q) * x2[j];
            out.labels.push_back(static_cast<int>(c + 1));
            ++row;
        }
    }
    return out;
}

inline SampleSet concat_samples(const SampleSet& a, const SampleSet& b) {
    if (a.spectra.cols != b.spectra.cols)
        throw std::invalid_argument("concat_samples: band count mismatch");
    SampleSet out;
    out.spectra = Matrix(a.size() + b.size(), a.spectra.cols);
    std::copy(a.spectra.data.begin(), a.spectra.data.end(), out.spectra.data.begin());
    std::copy(b.spectra.data.begin(), b.spectra.data.end(),
              out.spectra.data.begin() + static_cast<std::ptrdiff_t>(a.spectra.data.size()));
    out.labels = a.labels;
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    return out;
}

inline double lr_at(const TrainConfig& cfg, std::size_t batch_index) {
    return cfg.lr0 * std::pow(cfg.decay_multiplier,
                              static_cast<double>(batch_index / cfg.decay_every));
}

// Epoch shuffling without replacement: every sample is consumed exactly once
// per epoch, in a seed-determined order.
class EpochShuffler {
public:
    EpochShuffler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        reshuffle();
    }

    // Returns the next `want` indices (fewer at an epoch boundary, never 0).
    std::vector<std::size_t> next(std::size_t want) {
        std::vector<std::size_t> out;
        out.reserve(want);
        while (out.size() < want && cursor_ < order_.size()) out.push_back(order_[cursor_++]);
        if (cursor_ == order_.size()) {
            reshuffle();
            cursor_ = 0;
        }
        return out;
    }

private:
    void reshuffle() { std::shuffle(order_.begin(), order_.end(), rng_); }

    std::vector<std::size_t> order_;
    std::mt19937_64 rng_;
    std::size_t cursor_ = 0;
};

struct TraceRecord {
    std::size_t iter = 0;  // 1-based batch count
    double ls = 0.0;
    double lc = 0.0;
    double joint = 0.0;
    double acc = 0.0;
    double dmin2 = 0.0;
    double ratio = 0.0;  // 2*L_C / D^2_min
};

struct TrainingTrace {
    std::vector<TraceRecord> records;
};

inline void save_trace_csv(const TrainingTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write trace: " + path);
    out << "iter,ls,lc,joint,acc,dmin2,ratio\n";
    out.precision(17);
    for (const TraceRecord& r : trace.records)
        out << r.iter << ',' << r.ls << ',' << r.lc << ',' << r.joint << ',' << r.acc << ','
            << r.dmin2 << ',' << r.ratio << '\n';
}

struct TrainResult {
    Network net;
    RunningCenters centers;
    TrainingTrace trace;
    bool diverged = false;
};

inline double batch_accuracy(const Matrix& logits, const std::vector<int>& labels) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        auto row = logits.row(i);
        const std::size_t arg =
            static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        if (static_cast<int>(arg + 1) == labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(logits.rows);
}

// Mini-batch training under joint supervision. `train` holds the already
// augmented sample set (real + virtual mixed).
inline TrainResult train_model(const SampleSet& train, std::size_t num_classes,
                               const TrainConfig& cfg) {
    cfg.validate();
    if (train.size() == 0) throw std::invalid_argument("train_model: empty training set");
    const std::size_t l = train.spectra.cols;

    std::vector<std::size_t> dims;
    dims.push_back(l);
    dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
    dims.push_back(num_classes);

    TrainResult result;
    result.net = init_network(dims, cfg.seed, cfg.dropout_ratio);
    result.centers = RunningCenters(num_classes, result.net.feature_size(), cfg.alpha);

    EpochShuffler shuffler(train.size(), cfg.seed ^ 0xb5297a4d3f84d5a3ull);
    Batch batch;
    for (std::size_t bi = 0; bi < cfg.max_batches; ++bi) {
        const std::vector<std::size_t> picks = shuffler.next(cfg.batch_size);
        batch.inputs = Matrix(picks.size(), l);
        batch.labels.resize(picks.size());
        for (std::size_t i = 0; i < picks.size(); ++i) {
            auto src = train.spectra.row(picks[i]);
            std::copy(src.begin(), src.end(), batch.inputs.row(i).begin());
            batch.labels[i] = train.labels[picks[i]];
        }

        JointLossResult loss = [&] {
            if (cfg.lambda > 0.0) {
                // The first appearance of a class adopts this batch's mean as
                // its center before the loss is read.
                ForwardTrace peek = forward(result.net, batch, Mode::Train);
                initialize_missing_centers(result.centers, peek.features(), batch.labels);
                JointLossResult r;
                const Matrix probs = softmax(peek.logits());
                SoftmaxLossResult ls = softmax_loss(probs, batch.labels);
                CenterLossResult lc = center_loss(peek.features(), batch.labels, result.centers);
                r.report.softmax_loss = ls.loss;
                r.report.center_loss = lc.loss;
                r.report.lambda = cfg.lambda;
                r.report.joint = ls.loss + cfg.lambda * lc.loss;
                r.report.clamped = ls.clamped;
                r.dlogits = std::move(ls.dlogits);
                r.dfeatures = std::move(lc.dfeatures);
                for (double& g : r.dfeatures.data) g *= cfg.lambda;
                r.trace = std::move(peek);
                return r;
            }
            JointLossResult r = joint_loss(result.net, batch, result.centers, 0.0, Mode::Train);
            initialize_missing_centers(result.centers, r.trace.features(), batch.labels);
            // Recompute the diagnostic L_C now that every center exists.
            r.report.center_loss =
                center_loss(r.trace.features(), batch.labels, result.centers).loss;
            return r;
        }();

        const bool record = (bi + 1) % cfg.trace_stride == 0 || bi + 1 == cfg.max_batches;
        if (!std::isfinite(loss.report.joint)) {
            result.diverged = true;
            return result;
        }

        Gradients grads = backward(result.net, loss.trace, loss.dlogits, loss.dfeatures);
        try {
            sgd_step(result.net, grads, lr_at(cfg, bi));
        } catch (const DivergenceError&) {
            result.diverged = true;
            return result;
        }
        update_centers(result.centers, loss.trace.features(), batch.labels);

        if (record) {
            TraceRecord rec;
            rec.iter = bi + 1;
            rec.ls = loss.report.softmax_loss;
            rec.lc = loss.report.center_loss;
            rec.joint = loss.report.joint;
            rec.acc = batch_accuracy(loss.trace.logits(), batch.labels);
            rec.dmin2 = min_squared_center_distance(result.centers);
            rec.ratio = rec.dmin2 > 0.0 ? 2.0 * rec.lc / rec.dmin2 : 0.0;
            if (!result.trace.records.empty() && result.trace.records.back().iter == rec.iter)
                result.trace.records.back() = rec;
            else
                result.trace.records.push_back(rec);
        }
    }
    return result;
}

}  // namespace hsic
