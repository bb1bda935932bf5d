#include <catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <random>

#include "hsic/metrics.hpp"
#include "hsic/train.hpp"

using namespace hsic;

TEST_CASE("confusion of a perfect prediction is diagonal") {
    GroundTruth gt;
    gt.height = 2;
    gt.width = 3;
    gt.num_classes = 2;
    gt.labels = {1, 1, 2, 2, 1, 2};
    SplitMask mask;
    mask.height = 2;
    mask.width = 3;
    mask.kinds.assign(6, SplitKind::Test);
    PredictionMap pred;
    pred.height = 2;
    pred.width = 3;
    pred.labels = {1, 1, 2, 2, 1, 2};

    ConfusionMatrix cm = confusion(pred, gt, mask);
    CHECK(cm.at(0, 0) == 3);
    CHECK(cm.at(1, 1) == 3);
    CHECK(cm.at(0, 1) == 0);
    CHECK(cm.at(1, 0) == 0);
}

TEST_CASE("confusion counts a single mislabeled pixel") {
    GroundTruth gt;
    gt.height = 1;
    gt.width = 1;
    gt.num_classes = 2;
    gt.labels = {2};
    SplitMask mask;
    mask.height = 1;
    mask.width = 1;
    mask.kinds = {SplitKind::Test};
    PredictionMap pred;
    pred.height = 1;
    pred.width = 1;
    pred.labels = {1};
    ConfusionMatrix cm = confusion(pred, gt, mask);
    CHECK(cm.at(1, 0) == 1);
    CHECK(cm.total() == 1);
}

TEST_CASE("confusion ignores train pixels and rejects unpredicted test pixels") {
    GroundTruth gt;
    gt.height = 1;
    gt.width = 2;
    gt.num_classes = 2;
    gt.labels = {1, 2};
    SplitMask mask;
    mask.height = 1;
    mask.width = 2;
    mask.kinds = {SplitKind::Train, SplitKind::Test};
    PredictionMap pred;
    pred.height = 1;
    pred.width = 2;
    pred.labels = {0, 2};

    ConfusionMatrix cm = confusion(pred, gt, mask);
    CHECK(cm.total() == 1);  // the train pixel is not counted

    mask.kinds = {SplitKind::Test, SplitKind::Test};
    CHECK_THROWS_AS(confusion(pred, gt, mask), std::invalid_argument);
}

TEST_CASE("confusion totals match the split counts") {
    auto [cube, gt] = synth_cube(3, 20, 20, 4, 3.0, 5);
    SplitMask mask = split_train_test(gt, 40, 5);
    PredictionMap pred;
    pred.height = 20;
    pred.width = 20;
    pred.labels.assign(400, 0);
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<int> lab(1, 3);
    for (std::size_t p = 0; p < 400; ++p)
        if (mask.kinds[p] == SplitKind::Test)
            pred.labels[p] = static_cast<std::uint16_t>(lab(rng));

    ConfusionMatrix cm = confusion(pred, gt, mask);
    std::vector<std::uint64_t> expected(3, 0);
    for (std::size_t p = 0; p < 400; ++p)
        if (mask.kinds[p] == SplitKind::Test) ++expected[gt.labels[p] - 1];
    for (std::size_t t = 0; t < 3; ++t) {
        std::uint64_t row = 0;
        for (std::size_t c = 0; c < 3; ++c) row += cm.at(t, c);
        CHECK(row == expected[t]);
    }
}

TEST_CASE("oa_aa_kappa of a diagonal matrix is all ones") {
    ConfusionMatrix cm(3);
    cm.at(0, 0) = 10;
    cm.at(1, 1) = 20;
    cm.at(2, 2) = 30;
    MetricsReport rep = oa_aa_kappa(cm);
    CHECK(rep.oa == 1.0);
    CHECK(rep.aa == 1.0);
    CHECK(rep.kappa == 1.0);
}

TEST_CASE("oa_aa_kappa chance-level case gives kappa zero") {
    ConfusionMatrix cm(2);
    cm.at(0, 0) = 1;
    cm.at(0, 1) = 1;
    cm.at(1, 0) = 1;
    cm.at(1, 1) = 1;
    MetricsReport rep = oa_aa_kappa(cm);
    CHECK(rep.oa == 0.5);
    CHECK(rep.kappa == 0.0);
}

TEST_CASE("oa_aa_kappa hand-computed example") {
    ConfusionMatrix cm(2);
    cm.at(0, 0) = 50;
    cm.at(0, 1) = 10;
    cm.at(1, 0) = 5;
    cm.at(1, 1) = 35;
    MetricsReport rep = oa_aa_kappa(cm);
    CHECK(rep.oa == Catch::Approx(0.85).margin(1e-12));
    CHECK(rep.aa == Catch::Approx((50.0 / 60.0 + 35.0 / 40.0) / 2.0).margin(1e-9));
    // p_e = (60*55 + 40*45) / 100^2 = 0.51, kappa = (0.85 - 0.51) / 0.49.
    CHECK(rep.kappa == Catch::Approx((0.85 - 0.51) / 0.49).margin(1e-9));
    CHECK(rep.kappa == Catch::Approx(0.693878).margin(1e-6));
}

TEST_CASE("empty class rows are reported and excluded from AA") {
    ConfusionMatrix cm(3);
    cm.at(0, 0) = 4;
    cm.at(2, 2) = 2;
    cm.at(2, 0) = 2;
    MetricsReport rep = oa_aa_kappa(cm);
    REQUIRE(rep.empty_classes.size() == 1);
    CHECK(rep.empty_classes[0] == 2);
    CHECK(std::isnan(rep.per_class[1]));
    CHECK(rep.aa == Catch::Approx((1.0 + 0.5) / 2.0).margin(1e-12));
}

TEST_CASE("metrics are invariant under consistent class permutation") {
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> count(0, 30);
    ConfusionMatrix cm(4);
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t p = 0; p < 4; ++p) cm.at(t, p) = static_cast<std::uint64_t>(count(rng) + 1);
    MetricsReport a = oa_aa_kappa(cm);

    const std::size_t perm[4] = {2, 0, 3, 1};
    ConfusionMatrix permuted(4);
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t p = 0; p < 4; ++p) permuted.at(perm[t], perm[p]) = cm.at(t, p);
    MetricsReport b = oa_aa_kappa(permuted);
    CHECK(a.oa == Catch::Approx(b.oa).margin(1e-12));
    CHECK(a.aa == Catch::Approx(b.aa).margin(1e-12));
    CHECK(a.kappa == Catch::Approx(b.kappa).margin(1e-12));
}

TEST_CASE("metric ranges and kappa bound") {
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<int> count(0, 50);
    for (int trial = 0; trial < 50; ++trial) {
        ConfusionMatrix cm(3);
        for (std::size_t t = 0; t < 3; ++t)
            for (std::size_t p = 0; p < 3; ++p) cm.at(t, p) = static_cast<std::uint64_t>(count(rng));
        if (cm.total() == 0) continue;
        bool has_rows = true;
        for (std::size_t t = 0; t < 3; ++t) {
            std::uint64_t row = 0;
            for (std::size_t p = 0; p < 3; ++p) row += cm.at(t, p);
            if (row == 0) has_rows = false;
        }
        if (!has_rows) continue;
        MetricsReport rep = oa_aa_kappa(cm);
        CHECK(rep.oa >= 0.0);
        CHECK(rep.oa <= 1.0);
        CHECK(rep.aa >= 0.0);
        CHECK(rep.aa <= 1.0);
        CHECK(rep.kappa >= -1.0);
        CHECK(rep.kappa <= 1.0);
        if (rep.oa < 1.0) CHECK(rep.kappa <= rep.oa + 1e-12);
    }
}

TEST_CASE("metrics CSV layout") {
    ConfusionMatrix cm(2);
    cm.at(0, 0) = 50;
    cm.at(0, 1) = 10;
    cm.at(1, 0) = 5;
    cm.at(1, 1) = 35;
    MetricsReport rep = oa_aa_kappa(cm);
    save_metrics_csv(rep, {"asphalt", "meadows"}, "metrics_test.csv");
    std::ifstream in("metrics_test.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "name,value");
    std::getline(in, line);
    CHECK(line.rfind("asphalt,", 0) == 0);
    std::getline(in, line);
    CHECK(line.rfind("meadows,", 0) == 0);
    std::getline(in, line);
    CHECK(line.rfind("OA,", 0) == 0);
    std::getline(in, line);
    CHECK(line.rfind("AA,", 0) == 0);
    std::getline(in, line);
    CHECK(line.rfind("kappa,", 0) == 0);
    std::remove("metrics_test.csv");
}
