#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsic/classify.hpp"
#include "hsic/data.hpp"

namespace hsic {

struct ConfusionMatrix {
    std::size_t num_classes = 0;
    std::vector<std::uint64_t> counts;  // K x K row-major, rows = truth

    explicit ConfusionMatrix(std::size_t k = 0) : num_classes(k), counts(k * k, 0) {}

    std::uint64_t& at(std::size_t truth, std::size_t pred) {
        return counts[truth * num_classes + pred];
    }
    std::uint64_t at(std::size_t truth, std::size_t pred) const {
        return counts[truth * num_classes + pred];
    }

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (std::uint64_t c : counts) t += c;
        return t;
    }
};

// Counts test pixels only; a test pixel without a prediction is an error.
inline ConfusionMatrix confusion(const PredictionMap& pred, const GroundTruth& gt,
                                 const SplitMask& mask) {
    if (pred.height != gt.height || pred.width != gt.width || mask.height != gt.height ||
        mask.width != gt.width)
        throw std::invalid_argument("confusion: shape mismatch");
    ConfusionMatrix cm(gt.num_classes);
    for (std::size_t p = 0; p < gt.labels.size(); ++p) {
        if (mask.kinds[p] != SplitKind::Test) continue;
        const std::uint16_t truth = gt.labels[p];
        const std::uint16_t guess = pred.labels[p];
        if (truth == 0) throw std::invalid_argument("confusion: test pixel with no groundtruth");
        if (guess == 0)
            throw std::invalid_argument("confusion: unpredicted test pixel at index " +
                                        std::to_string(p));
        if (guess > gt.num_classes)
            throw std::invalid_argument("confusion: prediction out of range");
        cm.at(truth - 1, guess - 1) += 1;
    }
    return cm;
}

struct MetricsReport {
    double oa = 0.0;
    double aa = 0.0;
    double kappa = 0.0;
    std::vector<double> per_class;         // recall per class; NaN for empty rows
    std::vector<std::size_t> empty_classes;  // classes with no test pixels
};

// OA = trace/total, AA = mean per-class recall, kappa = (p_o - p_e)/(1 - p_e)
// with p_e from row/column marginals (Cohen).
inline MetricsReport oa_aa_kappa(const ConfusionMatrix& cm) {
    const std::uint64_t total = cm.total();
    if (total == 0) throw std::invalid_argument("oa_aa_kappa: empty confusion matrix");
    const std::size_t k = cm.num_classes;

    MetricsReport rep;
    std::vector<std::uint64_t> row_sums(k, 0), col_sums(k, 0);
    std::uint64_t diag = 0;
    for (std::size_t t = 0; t < k; ++t)
        for (std::size_t p = 0; p < k; ++p) {
            row_sums[t] += cm.at(t, p);
            col_sums[p] += cm.at(t, p);
            if (t == p) diag += cm.at(t, p);
        }

    rep.oa = static_cast<double>(diag) / static_cast<double>(total);

    double recall_sum = 0.0;
    std::size_t nonempty = 0;
    rep.per_class.assign(k, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t t = 0; t < k; ++t) {
        if (row_sums[t] == 0) {
            rep.empty_classes.push_back(t + 1);
            continue;
        }
        rep.per_class[t] = static_cast<double>(cm.at(t, t)) / static_cast<double>(row_sums[t]);
        recall_sum += rep.per_class[t];
        ++nonempty;
    }
    if (nonempty == 0) throw std::invalid_argument("oa_aa_kappa: no class has test pixels");
    rep.aa = recall_sum / static_cast<double>(nonempty);

    double pe = 0.0;
    const double dtotal = static_cast<double>(total);
    for (std::size_t c = 0; c < k; ++c)
        pe += static_cast<double>(row_sums[c]) * static_cast<double>(col_sums[c]) /
              (dtotal * dtotal);
    rep.kappa = pe >= 1.0 ? 1.0 : (rep.oa - pe) / (1.0 - pe);
    return rep;
}

// CSV layout: one per-class accuracy row per class, then OA/AA/kappa rows.
inline void save_metrics_csv(const MetricsReport& rep, const std::vector<std::string>& class_names,
                             const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write metrics: " + path);
    out.precision(10);
    out << "name,value\n";
    for (std::size_t c = 0; c < rep.per_class.size(); ++c) {
        const std::string name =
            c < class_names.size() ? class_names[c] : "class" + std::to_string(c + 1);
        out << name << ',';
        if (std::isnan(rep.per_class[c]))
            out << "no_test_pixels";
        else
            out << rep.per_class[c];
        out << '\n';
    }
    out << "OA," << rep.oa << '\n';
    out << "AA," << rep.aa << '\n';
    out << "kappa," << rep.kappa << '\n';
}

}  // namespace hsic
