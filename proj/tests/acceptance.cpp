// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion. Exits nonzero if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "hsic/classify.hpp"
#include "hsic/data.hpp"
#include "hsic/losses.hpp"
#include "hsic/metrics.hpp"
#include "hsic/nncore.hpp"
#include "hsic/train.hpp"

using namespace hsic;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int index, const std::string& name, bool pass, const std::string& detail) {
    std::printf("%s  criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", index, name.c_str(),
                detail.c_str());
    if (!pass) ++failures;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0).count() /
           1000.0;
}

// ---- criterion 1: gradient correctness ------------------------------------

void criterion_gradients() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20240001);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double lambda = 0.01;
    const double step = 1e-5;

    double worst = 0.0;
    int done = 0;
    std::uint64_t seed = 0;
    while (done < 20) {
        Network net = init_network({6, 8, 6, 4, 3}, 5000 + seed++);
        for (DenseLayer& l : net.layers) {
            for (double& w : l.weights.data) w = 0.5 * gauss(rng);
            for (double& b : l.biases) b = 0.3 * gauss(rng);
        }
        Batch batch;
        batch.inputs = Matrix(5, 6);
        for (double& v : batch.inputs.data) v = gauss(rng);
        batch.labels = {1, 2, 3, 1, 2};

        RunningCenters centers(3, net.feature_size(), 0.5);
        for (double& v : centers.centers.data) v = gauss(rng);
        centers.initialized.assign(3, true);

        JointLossResult base = joint_loss(net, batch, centers, lambda, Mode::Infer);
        bool near_kink = false;
        for (const Matrix& z : base.trace.pre_activations)
            for (double v : z.data)
                if (std::abs(v) < 1e-3) near_kink = true;
        if (near_kink) continue;  // resample away from ReLU kinks

        Gradients analytic = backward(net, base.trace, base.dlogits, base.dfeatures);
        auto eval = [&] {
            return joint_loss(net, batch, centers, lambda, Mode::Infer).report.joint;
        };
        for (std::size_t li = 0; li < net.layers.size(); ++li) {
            auto probe = [&](double& param, double grad) {
                const double saved = param;
                param = saved + step;
                const double up = eval();
                param = saved - step;
                const double down = eval();
                param = saved;
                const double fd = (up - down) / (2.0 * step);
                const double denom = std::max({std::abs(fd), std::abs(grad), 1e-8});
                worst = std::max(worst, std::abs(fd - grad) / denom);
            };
            for (double& w : net.layers[li].weights.data)
                probe(w, analytic.weights[li].data[&w - net.layers[li].weights.data.data()]);
            for (std::size_t j = 0; j < net.layers[li].biases.size(); ++j)
                probe(net.layers[li].biases[j], analytic.biases[li][j]);
        }
        ++done;
    }
    const double secs = seconds_since(t0);
    const bool pass = worst < 1e-4 && secs < 5.0;
    char detail[128];
    std::snprintf(detail, sizeof(detail), "max rel err %.2e over 20 nets, %.2fs", worst, secs);
    report(1, "joint-loss gradients match central finite differences", pass, detail);
}

// ---- criterion 2: center-update exactness ----------------------------------

void criterion_center_updates() {
    RunningCenters centers(2, 2, 0.5);

    auto batch_features = [](std::initializer_list<std::initializer_list<double>> rows) {
        Matrix m(rows.size(), rows.begin()->size());
        std::size_t i = 0;
        for (const auto& r : rows) {
            std::copy(r.begin(), r.end(), m.row(i).begin());
            ++i;
        }
        return m;
    };

    // Batch 1: class 1 features (1,1),(3,3) -> mean (2,2); class 2 (0,4).
    update_centers(centers, batch_features({{1, 1}, {3, 3}, {0, 4}}), {1, 1, 2});
    // Batch 2: class 1 only, mean (4,0): c1 = (2,2) + 0.5*((4,0)-(2,2)) = (3,1).
    update_centers(centers, batch_features({{4, 0}}), {1});
    // Batch 3: class 2 only, mean (2,2): c2 = (0,4) + 0.5*((2,2)-(0,4)) = (1,3).
    update_centers(centers, batch_features({{2, 2}, {4, 4}, {0, 0}}), {2, 2, 2});

    const double expected[2][2] = {{3.0, 1.0}, {1.0, 3.0}};
    double worst = 0.0;
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t j = 0; j < 2; ++j)
            worst = std::max(worst, std::abs(centers.centers(c, j) - expected[c][j]));

    char detail[96];
    std::snprintf(detail, sizeof(detail), "max abs deviation %.2e", worst);
    report(2, "damped center updates reproduce the hand-computed sequence", worst < 1e-12,
           detail);
}

// ---- criterion 3: voting oracle equivalence --------------------------------

// Independent brute-force transcription of the multiscale voting rule.
int voting_oracle(const FeatureMap& fm, const SplitMask& mask, const EstimatedCenters& centers,
                  std::size_t row, std::size_t col, const std::vector<std::size_t>& scales) {
    std::vector<double> weights(centers.num_classes(), 0.0);
    for (std::size_t scale : scales) {
        const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(scale / 2);
        std::vector<double> sum(fm.dim, 0.0);
        std::size_t cnt = 0;
        for (std::ptrdiff_t dr = -half; dr <= half; ++dr)
            for (std::ptrdiff_t dc = -half; dc <= half; ++dc) {
                const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(row) + dr;
                const std::ptrdiff_t c = static_cast<std::ptrdiff_t>(col) + dc;
                if (r < 0 || c < 0 || r >= static_cast<std::ptrdiff_t>(fm.height) ||
                    c >= static_cast<std::ptrdiff_t>(fm.width))
                    continue;
                if (mask.is_train(static_cast<std::size_t>(r), static_cast<std::size_t>(c)))
                    continue;
                auto f = fm.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
                for (std::size_t j = 0; j < fm.dim; ++j) sum[j] += f[j];
                ++cnt;
            }
        for (double& v : sum) v /= static_cast<double>(cnt);

        int label = 0;
        double best = 1e300;
        for (std::size_t cc = 0; cc < centers.num_classes(); ++cc) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < fm.dim; ++j) {
                const double diff = sum[j] - centers.centers(cc, j);
                d2 += diff * diff;
            }
            const double d = std::sqrt(d2);
            if (d < best) {
                best = d;
                label = static_cast<int>(cc + 1);
            }
        }
        if (best < 1e-12) return label;
        weights[static_cast<std::size_t>(label - 1)] += 1.0 / best;
    }
    int winner = 0;
    double best = -1.0;
    for (std::size_t p = 0; p < weights.size(); ++p)
        if (weights[p] > best) {
            best = weights[p];
            winner = static_cast<int>(p + 1);
        }
    return winner;
}

void criterion_voting_oracle() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20240003);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> kdist(2, 4);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::vector<std::size_t> scales = {3, 5, 7, 9, 11, 13, 15, 17};
    const ScaleSet set{scales};

    int mismatches = 0;
    for (int instance = 0; instance < 1000; ++instance) {
        const std::size_t k = kdist(rng);
        FeatureMap fm(19, 19, 3);
        for (double& v : fm.values) v = gauss(rng);
        EstimatedCenters centers;
        centers.centers = Matrix(k, 3);
        for (double& v : centers.centers.data) v = gauss(rng);
        SplitMask mask;
        mask.height = 19;
        mask.width = 19;
        mask.kinds.assign(19 * 19, SplitKind::Test);
        for (SplitKind& kind : mask.kinds)
            if (unit(rng) < 0.25) kind = SplitKind::Train;
        std::size_t row = 9, col = 9;
        while (mask.is_train(row, col)) col = (col + 1) % 19;

        const int got = asscc_classify(fm, mask, centers, row, col, set).winner;
        if (got != voting_oracle(fm, mask, centers, row, col, scales)) ++mismatches;
    }
    const double secs = seconds_since(t0);
    char detail[96];
    std::snprintf(detail, sizeof(detail), "%d/1000 mismatches, %.2fs", mismatches, secs);
    report(3, "multiscale voting matches the brute-force oracle", mismatches == 0 && secs < 10.0,
           detail);
}

// ---- criterion 4: training-pixel exclusion ---------------------------------

void criterion_exclusion() {
    std::mt19937_64 rng(20240004);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    bool identical = true;
    for (int trial = 0; trial < 20; ++trial) {
        FeatureMap fm(12, 12, 4);
        for (double& v : fm.values) v = gauss(rng);
        SplitMask mask;
        mask.height = 12;
        mask.width = 12;
        mask.kinds.assign(144, SplitKind::Test);
        for (SplitKind& k : mask.kinds)
            if (unit(rng) < 0.35) k = SplitKind::Train;

        FeatureMap poisoned = fm;
        for (std::size_t r = 0; r < 12; ++r)
            for (std::size_t c = 0; c < 12; ++c)
                if (mask.is_train(r, c))
                    for (std::size_t j = 0; j < 4; ++j) poisoned.at(r, c)[j] = 1e9;

        for (std::size_t r = 0; r < 12 && identical; ++r)
            for (std::size_t c = 0; c < 12 && identical; ++c) {
                if (mask.is_train(r, c)) continue;
                for (std::size_t scale : {3, 5, 7, 9, 11, 13, 15, 17}) {
                    if (spatial_feature(fm, mask, r, c, scale) !=
                        spatial_feature(poisoned, mask, r, c, scale)) {
                        identical = false;
                        break;
                    }
                }
            }
    }
    report(4, "poisoned training features never change spatial averages", identical,
           identical ? "bitwise identical across 20 random maps, 8 scales"
                     : "output changed under poisoning");
}

// ---- criterion 5: metric exactness -----------------------------------------

void criterion_metrics() {
    ConfusionMatrix cm(2);
    cm.at(0, 0) = 50;
    cm.at(0, 1) = 10;
    cm.at(1, 0) = 5;
    cm.at(1, 1) = 35;
    const MetricsReport rep = oa_aa_kappa(cm);
    const double aa_expected = (50.0 / 60.0 + 35.0 / 40.0) / 2.0;      // ~0.854167
    const double kappa_expected = (0.85 - 0.51) / (1.0 - 0.51);        // ~0.693878
    const bool hand = std::abs(rep.oa - 0.85) < 1e-9 &&
                      std::abs(rep.aa - aa_expected) < 1e-9 &&
                      std::abs(rep.kappa - kappa_expected) < 1e-9;

    ConfusionMatrix chance(2);
    chance.at(0, 0) = 1;
    chance.at(0, 1) = 1;
    chance.at(1, 0) = 1;
    chance.at(1, 1) = 1;
    const bool chance_ok = oa_aa_kappa(chance).kappa == 0.0;

    char detail[160];
    std::snprintf(detail, sizeof(detail), "OA %.6f AA %.6f kappa %.6f, chance kappa %s", rep.oa,
                  rep.aa, rep.kappa, chance_ok ? "exactly 0" : "nonzero");
    report(5, "OA/AA/kappa reproduce the hand-computed example", hand && chance_ok, detail);
}

// ---- criterion 6: desk-scale end-to-end ------------------------------------

struct FixtureRun {
    Network net;
    EstimatedCenters centers;
    SplitMask mask;
    GroundTruth gt;
    NormalizationStats stats;
    HyperCube raw;  // unnormalized copy for making variants
    TrainingTrace trace;
};

FixtureRun train_fixture(double lambda, std::uint64_t seed, std::size_t max_batches) {
    auto [cube, gt] = synth_cube(3, 32, 32, 8, 6.0, 1234);
    FixtureRun run;
    run.raw = cube;
    run.gt = gt;
    run.stats = normalize_cube(cube, NormalizeMode::PerBand);
    run.mask = split_train_test(gt, 200, seed);
    SampleSet real = gather_training_samples(cube, gt, run.mask);

    TrainConfig cfg;
    cfg.batch_size = 512;
    cfg.hidden_dims = {32, 16, 8};
    cfg.max_batches = max_batches;
    cfg.virtual_per_class = 2000;
    cfg.real_per_class = 200;
    cfg.lambda = lambda;
    cfg.lr0 = 1.0;  // the tiny Gaussian init needs an aggressive rate at this budget
    cfg.seed = seed;
    cfg.trace_stride = 100;

    SampleSet virt = make_virtual_samples(real, cfg.virtual_per_class, cfg.q_min, cfg.q_max, seed);
    TrainResult result = train_model(concat_samples(real, virt), 3, cfg);
    run.net = std::move(result.net);
    run.trace = std::move(result.trace);
    run.centers = estimate_centers(run.net, real);
    return run;
}

double oa_of(const PredictionMap& pred, const GroundTruth& gt, const SplitMask& mask) {
    return oa_aa_kappa(confusion(pred, gt, mask)).oa;
}

void criterion_end_to_end() {
    const auto t0 = Clock::now();
    FixtureRun run = train_fixture(0.01, 7, 2000);

    HyperCube clean = run.raw;
    apply_normalization(clean, run.stats);
    FeatureMap fm_clean = extract_feature_map(run.net, clean);
    const double scc_clean = oa_of(classify_image(fm_clean, run.mask, run.centers, SccMode{}),
                                   run.gt, run.mask);

    // Speckle-noised variant: multiplicative noise on the raw reflectances,
    // normalized with the training statistics.
    HyperCube noisy = run.raw;
    std::mt19937_64 rng(555);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& v : noisy.values) v *= 1.0 + 1.5 * gauss(rng);
    apply_normalization(noisy, run.stats);
    FeatureMap fm_noisy = extract_feature_map(run.net, noisy);
    const double scc_noisy = oa_of(classify_image(fm_noisy, run.mask, run.centers, SccMode{}),
                                   run.gt, run.mask);
    const double asscc_noisy = oa_of(
        classify_image(fm_noisy, run.mask, run.centers, AssccMode{ScaleSet::default_eight()}),
        run.gt, run.mask);

    const double secs = seconds_since(t0);
    const bool pass = scc_clean >= 0.99 && asscc_noisy >= scc_noisy && secs < 120.0;
    char detail[160];
    std::snprintf(detail, sizeof(detail),
                  "clean SCC OA %.4f, noisy SCC OA %.4f, noisy ASSCC OA %.4f, %.1fs", scc_clean,
                  scc_noisy, asscc_noisy, secs);
    report(6, "desk-scale end-to-end SCC >= 0.99 and ASSCC >= SCC under speckle", pass, detail);
}

// ---- criterion 7: discriminativity trend -----------------------------------

void criterion_discriminativity() {
    int wins = 0;
    char detail[192];
    std::string ratios;
    for (std::uint64_t seed : {11, 22, 33}) {
        FixtureRun with = train_fixture(0.01, seed, 2000);
        FixtureRun without = train_fixture(0.0, seed, 2000);
        const double r_with = with.trace.records.back().ratio;
        const double r_without = without.trace.records.back().ratio;
        if (r_with < r_without) ++wins;
        char buf[64];
        std::snprintf(buf, sizeof(buf), " [%.3g vs %.3g]", r_with, r_without);
        ratios += buf;
    }
    std::snprintf(detail, sizeof(detail), "%d/3 seeds with smaller final 2Lc/D2min:%s", wins,
                  ratios.c_str());
    report(7, "center loss shrinks the compactness/separation ratio", wins == 3, detail);
}

}  // namespace

int main() {
    criterion_gradients();
    criterion_center_updates();
    criterion_voting_oracle();
    criterion_exclusion();
    criterion_metrics();
    criterion_end_to_end();
    criterion_discriminativity();
    if (failures > 0) {
        std::printf("%d criterion(s) FAILED\n", failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
