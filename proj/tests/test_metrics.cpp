#include <doctest.h>

#include <cmath>
#include <random>

#include "kneeseg/errors.hpp"
#include "kneeseg/metrics.hpp"

using namespace kneeseg;

namespace {

// 1D strip volumes keep the counting obvious.
LabelVolume strip(const std::vector<int>& fg_voxels, int len, int classes = 2) {
    LabelVolume v(len, 1, 1, classes);
    for (int p : fg_voxels) v.labels[p] = 1;
    return v;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("identical non-empty masks") {
    const LabelVolume v = strip({0, 1, 2}, 16);
    const MetricsReport r = evaluate(v, v);
    REQUIRE(r.per_class.size() == 1);
    CHECK(r.per_class[0].dice == 1.0);
    CHECK(r.per_class[0].precision == 1.0);
    CHECK(r.per_class[0].recall == 1.0);
    CHECK(r.per_class[0].voe_percent == 0.0);
    CHECK(r.per_class[0].vd_percent == 0.0);
}

TEST_CASE("disjoint non-empty masks") {
    const MetricsReport r = evaluate(strip({0, 1}, 16), strip({5, 6}, 16));
    CHECK(r.per_class[0].dice == 0.0);
    CHECK(r.per_class[0].voe_percent == 100.0);
}

TEST_CASE("hand-enumerated counts |A|=4, |B|=6, |AnB|=3") {
    const LabelVolume pred = strip({0, 1, 2, 3}, 16);
    const LabelVolume ref = strip({0, 1, 2, 10, 11, 12}, 16);
    const MetricsReport r = evaluate(pred, ref);
    const ClassMetrics& m = r.per_class[0];
    CHECK(m.dice == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(m.precision == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(m.recall == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(m.voe_percent == doctest::Approx(57.142857).epsilon(1e-6));
    CHECK(m.vd_percent == doctest::Approx(-33.333333).epsilon(1e-6));
}

TEST_CASE("dice symmetry; precision and recall swap") {
    std::mt19937_64 rng(3);
    LabelVolume a(8, 8, 4, 3), b(8, 8, 4, 3);
    for (size_t p = 0; p < a.size(); ++p) {
        a.labels[p] = static_cast<std::uint8_t>(rng() % 3);
        b.labels[p] = static_cast<std::uint8_t>(rng() % 3);
    }
    const MetricsReport ab = evaluate(a, b), ba = evaluate(b, a);
    for (size_t c = 0; c < ab.per_class.size(); ++c) {
        CHECK(ab.per_class[c].dice == ba.per_class[c].dice);
        CHECK(ab.per_class[c].precision == ba.per_class[c].recall);
        CHECK(ab.per_class[c].recall == ba.per_class[c].precision);
    }
}

TEST_CASE("dice and voe derive from the same counts") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        LabelVolume a(6, 6, 3, 2), b(6, 6, 3, 2);
        for (size_t p = 0; p < a.size(); ++p) {
            a.labels[p] = rng() % 4 == 0;
            b.labels[p] = rng() % 4 == 0;
        }
        const MetricsReport r = evaluate(a, b);
        const double voe = r.per_class[0].voe_percent / 100.0;
        const double dice_from_voe = 2.0 * (1.0 - voe) / (2.0 - voe);
        CHECK(std::abs(r.per_class[0].dice - dice_from_voe) <= 1e-9);
    }
}

TEST_CASE("empty-set conventions") {
    const LabelVolume empty = strip({}, 8);
    const LabelVolume full = strip({0, 1}, 8);
    const MetricsReport both = evaluate(empty, empty);
    CHECK(both.per_class[0].dice == 1.0);
    CHECK(both.per_class[0].voe_percent == 0.0);
    CHECK(both.per_class[0].vd_percent == 0.0);

    const MetricsReport pred_only = evaluate(full, empty);
    CHECK(pred_only.per_class[0].dice == 0.0);
    CHECK(pred_only.per_class[0].voe_percent == 100.0);
    CHECK(std::isnan(pred_only.per_class[0].vd_percent));  // |B| = 0

    const MetricsReport ref_only = evaluate(empty, full);
    CHECK(ref_only.per_class[0].dice == 0.0);
    CHECK(ref_only.per_class[0].vd_percent == -100.0);
}

TEST_CASE("mismatched shapes are usage errors") {
    CHECK_THROWS_AS((void)evaluate(strip({}, 8), strip({}, 9)), usage_error);
    CHECK_THROWS_AS((void)evaluate(strip({}, 8, 2), strip({}, 8, 3)), usage_error);
}

}  // TEST_SUITE

TEST_SUITE("wce") {

TEST_CASE("perfect prediction has zero loss") {
    LabelVolume labels = strip({0, 3}, 8);
    ProbVolume probs(8, 1, 1, 2);
    for (int p = 0; p < 8; ++p) {
        probs.at(labels.labels[p], p, 0, 0) = 1.0;
    }
    CHECK(wce_loss(probs, labels, ClassWeights{{1.0, 5.0}}) == 0.0);
}

TEST_CASE("uniform binary prediction costs ln 2") {
    LabelVolume labels = strip({1, 2, 5}, 8);
    ProbVolume probs(8, 1, 1, 2);
    for (int p = 0; p < 8; ++p) {
        probs.at(0, p, 0, 0) = 0.5;
        probs.at(1, p, 0, 0) = 0.5;
    }
    CHECK(wce_loss(probs, labels, ClassWeights{{1.0, 1.0}}) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("two-voxel weighted case") {
    LabelVolume labels(2, 1, 1, 2);
    labels.labels = {0, 1};
    ProbVolume probs(2, 1, 1, 2);
    probs.at(0, 0, 0, 0) = 0.9;
    probs.at(1, 0, 0, 0) = 0.1;
    probs.at(0, 1, 0, 0) = 0.2;
    probs.at(1, 1, 0, 0) = 0.8;
    const double expected = (-std::log(0.9) * 1.0 - std::log(0.8) * 2.0) / 2.0;
    CHECK(wce_loss(probs, labels, ClassWeights{{1.0, 2.0}}) ==
          doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(0.275824).epsilon(1e-5));
}

TEST_CASE("loss decreases when mass moves to the true class") {
    LabelVolume labels = strip({0, 1, 2, 3}, 8);
    ProbVolume worse(8, 1, 1, 2), better(8, 1, 1, 2);
    for (int p = 0; p < 8; ++p) {
        const int t = labels.labels[p];
        worse.at(t, p, 0, 0) = 0.6;
        worse.at(1 - t, p, 0, 0) = 0.4;
        better.at(t, p, 0, 0) = 0.8;
        better.at(1 - t, p, 0, 0) = 0.2;
    }
    const ClassWeights w{{1.0, 3.0}};
    CHECK(wce_loss(better, labels, w) < wce_loss(worse, labels, w));
    CHECK(wce_loss(better, labels, w) >= 0.0);
}

TEST_CASE("hard zeros are floored instead of diverging") {
    LabelVolume labels = strip({0}, 4);
    ProbVolume probs(4, 1, 1, 2);
    for (int p = 0; p < 4; ++p) probs.at(1 - labels.labels[p], p, 0, 0) = 1.0;
    const double loss = wce_loss(probs, labels, ClassWeights{{1.0, 1.0}});
    CHECK(std::isfinite(loss));
    CHECK(loss == doctest::Approx(-std::log(1e-12)).epsilon(1e-9));
}

TEST_CASE("weight validation") {
    LabelVolume labels = strip({}, 4);
    ProbVolume probs(4, 1, 1, 2);
    for (int p = 0; p < 4; ++p) probs.at(0, p, 0, 0) = 1.0;
    CHECK_THROWS_AS((void)wce_loss(probs, labels, ClassWeights{{1.0}}), usage_error);
    CHECK_THROWS_AS((void)wce_loss(probs, labels, ClassWeights{{1.0, 0.0}}), usage_error);
}

TEST_CASE("label ids beyond the class count are rejected") {
    LabelVolume labels = strip({}, 4);
    labels.labels[2] = 7;
    ProbVolume probs(4, 1, 1, 2);
    for (int p = 0; p < 4; ++p) probs.at(0, p, 0, 0) = 1.0;
    CHECK_THROWS_AS((void)wce_loss(probs, labels, ClassWeights{{1.0, 1.0}}), usage_error);
    CHECK_THROWS_AS((void)evaluate(labels, strip({}, 4)), usage_error);
}

}  // TEST_SUITE

TEST_SUITE("report") {

TEST_CASE("serialized rows follow class<TAB>metric<TAB>value") {
    const MetricsReport r =
        evaluate(strip({0, 1, 2, 3}, 16), strip({0, 1, 2, 10, 11, 12}, 16));
    const std::string text = serialize_report(r);
    CHECK(text.find("1\tdice\t0.600000000\n") != std::string::npos);
    CHECK(text.find("1\tvoe_percent\t57.142857143\n") != std::string::npos);
    CHECK(text.find("mean\tdice\t0.600000000\n") != std::string::npos);
}

TEST_CASE("undefined vd serializes as nan") {
    const MetricsReport r = evaluate(strip({0}, 8), strip({}, 8));
    const std::string text = serialize_report(r);
    CHECK(text.find("1\tvd_percent\tnan\n") != std::string::npos);
}

}  // TEST_SUITE
