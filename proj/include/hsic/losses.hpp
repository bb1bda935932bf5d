#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsic/io.hpp"
#include "hsic/matrix.hpp"
#include "hsic/nncore.hpp"

namespace hsic {

// Per-class feature centers maintained during training with a damped
// mini-batch update. A center is valid only once its class has appeared in
// some batch.
struct RunningCenters {
    Matrix centers;  // [K x d]
    std::vector<bool> initialized;
    double alpha = 0.5;

    RunningCenters() = default;
    RunningCenters(std::size_t k, std::size_t d, double a)
        : centers(k, d), initialized(k, false), alpha(a) {
        if (a <= 0.0 || a > 1.0) throw std::invalid_argument("center alpha must be in (0,1]");
    }

    std::size_t num_classes() const { return centers.rows; }
    std::size_t dim() const { return centers.cols; }

    std::span<const double> center(int label) const {
        if (label < 1 || static_cast<std::size_t>(label) > num_classes())
            throw std::out_of_range("center: label out of range");
        if (!initialized[static_cast<std::size_t>(label - 1)])
            throw std::logic_error("center: class " + std::to_string(label) +
                                   " has no initialized center");
        return centers.row(static_cast<std::size_t>(label - 1));
    }
};

struct JointLossReport {
    double softmax_loss = 0.0;
    double center_loss = 0.0;
    double joint = 0.0;
    double lambda = 0.0;
    bool clamped = false;  // a true-class probability hit the log clamp
};

inline Matrix softmax(const Matrix& logits) {
    if (!all_finite(logits)) throw std::invalid_argument("softmax: non-finite logits");
    Matrix p(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        auto z = logits.row(i);
        const double zmax = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) {
            p(i, j) = std::exp(z[j] - zmax);
            sum += p(i, j);
        }
        for (std::size_t j = 0; j < logits.cols; ++j) p(i, j) /= sum;
    }
    return p;
}

struct SoftmaxLossResult {
    double loss = 0.0;
    Matrix dlogits;  // [M x K], gradient of the mean loss wrt logits
    bool clamped = false;
};

// Multinomial logistic loss over softmax probabilities, averaged over the
// batch. The gradient per sample is (p - onehot(y)) / M.
inline SoftmaxLossResult softmax_loss(const Matrix& probabilities, const std::vector<int>& labels) {
    const std::size_t m = probabilities.rows;
    const std::size_t k = probabilities.cols;
    if (labels.size() != m) throw std::invalid_argument("softmax_loss: label count mismatch");

    SoftmaxLossResult res;
    res.dlogits = Matrix(m, k);
    for (std::size_t i = 0; i < m; ++i) {
        const int y = labels[i];
        if (y < 1 || static_cast<std::size_t>(y) > k)
            throw std::invalid_argument("softmax_loss: label " + std::to_string(y) +
                                        " out of range");
        double p_true = probabilities(i, static_cast<std::size_t>(y - 1));
        if (p_true < 1e-300) {
            p_true = 1e-300;
            res.clamped = true;
        }
        res.loss -= std::log(p_true);
        for (std::size_t j = 0; j < k; ++j)
            res.dlogits(i, j) = (probabilities(i, j) - (j == static_cast<std::size_t>(y - 1)))
                                / static_cast<double>(m);
    }
    res.loss /= static_cast<double>(m);
    return res;
}

struct CenterLossResult {
    double loss = 0.0;
    Matrix dfeatures;  // [M x d]
};

// L_C = (1/2M) sum ||x_i - c_{y_i}||^2. Centers are constants here; they are
// updated separately by update_centers.
inline CenterLossResult center_loss(const Matrix& features, const std::vector<int>& labels,
                                    const RunningCenters& centers) {
    const std::size_t m = features.rows;
    if (labels.size() != m) throw std::invalid_argument("center_loss: label count mismatch");
    if (features.cols != centers.dim())
        throw std::invalid_argument("center_loss: feature dimension mismatch");

    CenterLossResult res;
    res.dfeatures = Matrix(m, features.cols);
    for (std::size_t i = 0; i < m; ++i) {
        auto c = centers.center(labels[i]);  // throws on uninitialized center
        auto f = features.row(i);
        for (std::size_t j = 0; j < features.cols; ++j) {
            const double diff = f[j] - c[j];
            res.loss += 0.5 * diff * diff;
            res.dfeatures(i, j) = diff / static_cast<double>(m);
        }
    }
    res.loss /= static_cast<double>(m);
    return res;
}

// Damped center update: for each class present in the batch,
// c <- c + alpha * (batch_mean - c); a first appearance adopts the batch
// mean outright. Absent classes are untouched.
inline void update_centers(RunningCenters& centers, const Matrix& features,
                           const std::vector<int>& labels) {
    const std::size_t m = features.rows;
    if (labels.size() != m) throw std::invalid_argument("update_centers: label count mismatch");
    const std::size_t k = centers.num_classes();
    const std::size_t d = centers.dim();

    Matrix sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < m; ++i) {
        const int y = labels[i];
        if (y < 1 || static_cast<std::size_t>(y) > k)
            throw std::invalid_argument("update_centers: label out of range");
        auto f = features.row(i);
        double* srow = sums.data.data() + static_cast<std::size_t>(y - 1) * d;
        for (std::size_t j = 0; j < d; ++j) srow[j] += f[j];
        ++counts[static_cast<std::size_t>(y - 1)];
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) continue;
        for (std::size_t j = 0; j < d; ++j) {
            const double mean = sums(c, j) / static_cast<double>(counts[c]);
            if (!centers.initialized[c])
                centers.centers(c, j) = mean;
            else
                centers.centers(c, j) += centers.alpha * (mean - centers.centers(c, j));
        }
        centers.initialized[c] = true;
    }
}

// Initializes centers for classes whose flag is unset, from this batch's
// features; leaves established centers alone. Realizes the first-round rule.
inline void initialize_missing_centers(RunningCenters& centers, const Matrix& features,
                                       const std::vector<int>& labels) {
    RunningCenters fresh(centers.num_classes(), centers.dim(), centers.alpha);
    update_centers(fresh, features, labels);
    for (std::size_t c = 0; c < centers.num_classes(); ++c) {
        if (centers.initialized[c] || !fresh.initialized[c]) continue;
        for (std::size_t j = 0; j < centers.dim(); ++j)
            centers.centers(c, j) = fresh.centers(c, j);
        centers.initialized[c] = true;
    }
}

struct JointLossResult {
    JointLossReport report;
    Matrix dlogits;    // gradient of the joint loss wrt logits
    Matrix dfeatures;  // gradient of the joint loss wrt pre-dropout features
    ForwardTrace trace;
};

// Joint supervision L = L_S + lambda * L_C evaluated on one batch. The
// center-loss term reads the pre-dropout features.
inline JointLossResult joint_loss(Network& net, const Batch& batch, const RunningCenters& centers,
                                  double lambda, Mode mode = Mode::Train) {
    if (lambda < 0.0) throw std::invalid_argument("joint_loss: lambda must be nonnegative");
    JointLossResult res;
    res.trace = forward(net, batch, mode);

    const Matrix probs = softmax(res.trace.logits());
    SoftmaxLossResult ls = softmax_loss(probs, batch.labels);
    res.report.softmax_loss = ls.loss;
    res.report.clamped = ls.clamped;
    res.dlogits = std::move(ls.dlogits);

    if (lambda > 0.0) {
        CenterLossResult lc = center_loss(res.trace.features(), batch.labels, centers);
        res.report.center_loss = lc.loss;
        res.dfeatures = std::move(lc.dfeatures);
        for (double& g : res.dfeatures.data) g *= lambda;
    } else {
        // Still report L_C when computable; the gradient stays zero.
        res.dfeatures = Matrix(batch.size(), net.feature_size());
        bool all_init = true;
        for (int y : batch.labels)
            if (!centers.initialized[static_cast<std::size_t>(y - 1)]) all_init = false;
        if (all_init && centers.dim() == net.feature_size())
            res.report.center_loss =
                center_loss(res.trace.features(), batch.labels, centers).loss;
    }
    res.report.lambda = lambda;
    res.report.joint = res.report.softmax_loss + lambda * res.report.center_loss;
    return res;
}

// Minimum squared distance between any two initialized centers; a dispersion
// diagnostic. Returns +inf when fewer than two centers exist.
inline double min_squared_center_distance(const RunningCenters& centers) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < centers.num_classes(); ++a) {
        if (!centers.initialized[a]) continue;
        for (std::size_t b = a + 1; b < centers.num_classes(); ++b) {
            if (!centers.initialized[b]) continue;
            best = std::min(best, squared_distance(centers.centers.row(a), centers.centers.row(b)));
        }
    }
    return best;
}

// Centers checkpoint: magic "HSICCTR1", u32 K, u32 d, then K x d f64 values,
// one row per class.
inline constexpr char kCentersMagic[8] = {'H', 'S', 'I', 'C', 'C', 'T', 'R', '1'};

inline void save_centers(const Matrix& centers, const std::string& path) {
    io::Writer w(path);
    w.magic(kCentersMagic);
    w.u32(static_cast<std::uint32_t>(centers.rows));
    w.u32(static_cast<std::uint32_t>(centers.cols));
    w.f64_array(centers.data.data(), centers.data.size());
    w.close();
}

inline Matrix load_centers(const std::string& path) {
    io::Reader r(path);
    r.expect_magic(kCentersMagic);
    const std::uint32_t k = r.u32();
    const std::uint32_t d = r.u32();
    if (k == 0 || d == 0) throw DataError(path + ": empty centers");
    Matrix centers(k, d);
    r.f64_array(centers.data.data(), centers.data.size());
    return centers;
}

}  // namespace hsic
