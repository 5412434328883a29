#include <doctest.h>

#include <cmath>

#include "kneeseg/errors.hpp"
#include "kneeseg/metrics.hpp"
#include "kneeseg/phantom.hpp"
#include "oracles.hpp"

using namespace kneeseg;

namespace {

LabelVolume collapse_binary(LabelVolume v) {
    for (auto& l : v.labels) l = l > 0 ? 1 : 0;
    v.class_count = 2;
    return v;
}

}  // namespace

TEST_SUITE("phantom") {

TEST_CASE("same spec twice is bit-identical") {
    PhantomSpec spec;
    spec.dims = {20, 20, 10};
    auto [v1, l1] = make_phantom(spec);
    auto [v2, l2] = make_phantom(spec);
    CHECK(v1.data == v2.data);
    CHECK(l1.labels == l2.labels);
}

TEST_CASE("different seeds differ") {
    PhantomSpec a, b;
    a.dims = b.dims = {20, 20, 10};
    b.rng_seed = a.rng_seed + 1;
    CHECK(make_phantom(a).first.data != make_phantom(b).first.data);
}

TEST_CASE("zero noise pins every voxel to its class mean") {
    PhantomSpec spec;
    spec.dims = {20, 20, 10};
    spec.noise_sigma = 0.0;
    auto [vol, labels] = make_phantom(spec);
    for (size_t p = 0; p < vol.data.size(); ++p) {
        const double expected =
            labels.labels[p] > 0 ? spec.foreground_mean : spec.background_mean;
        CHECK(vol.data[p] == expected);
    }
}

TEST_CASE("a single thin sheet is one 26-connected component") {
    PhantomSpec spec;
    spec.dims = {32, 32, 16};
    spec.sheet_count = 1;
    spec.thickness_min = 2.0;
    spec.thickness_max = 3.0;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        spec.rng_seed = seed;
        auto [vol, labels] = make_phantom(spec);
        std::vector<std::uint8_t> mask(labels.labels.size());
        size_t fg = 0;
        for (size_t p = 0; p < mask.size(); ++p) {
            mask[p] = labels.labels[p] > 0;
            fg += mask[p];
        }
        REQUIRE(fg > 0);
        CHECK(oracles::count_components_26(mask, 32, 32, 16) == 1);
    }
}

TEST_CASE("labels persist across adjacent slices") {
    PhantomSpec spec;
    spec.dims = {24, 24, 12};
    spec.sheet_count = 1;
    auto [vol, labels] = make_phantom(spec);
    // Overlap between consecutive slices should dominate the sheet area.
    size_t overlap = 0, area = 0;
    const size_t npx = 24 * 24;
    for (int z = 0; z + 1 < 12; ++z)
        for (size_t p = 0; p < npx; ++p) {
            const bool a = labels.labels[npx * z + p] > 0;
            const bool b = labels.labels[npx * (z + 1) + p] > 0;
            area += a;
            overlap += a && b;
        }
    CHECK(overlap > area * 3 / 4);
}

TEST_CASE("dims below the minimum are usage errors") {
    PhantomSpec spec;
    spec.dims = {8, 8, 4};
    CHECK_THROWS_AS((void)make_phantom(spec), usage_error);
    spec.dims = {20, 20, 10};
    spec.thickness_min = 0.5;
    CHECK_THROWS_AS((void)make_phantom(spec), usage_error);
}

}  // TEST_SUITE

TEST_SUITE("stub") {

TEST_CASE("volume at the window center is foreground everywhere") {
    DenseTensor3 v(16, 16, 8, 0.5);
    StubParams p;
    p.window_lo = 0.4;
    p.window_hi = 0.6;
    const ProbVolume probs = stub_segment(v, p);
    for (size_t i = 0; i < v.size(); ++i) CHECK(probs.data[v.size() + i] > 0.5);
}

TEST_CASE("volume far below the window is background everywhere") {
    DenseTensor3 v(16, 16, 8, 0.0);
    StubParams p;
    p.window_lo = 0.4;
    p.window_hi = 0.6;
    const ProbVolume probs = stub_segment(v, p);
    for (size_t i = 0; i < v.size(); ++i) CHECK(probs.data[i] > 0.5);
}

TEST_CASE("per-voxel probabilities sum to one exactly") {
    PhantomSpec spec;
    spec.dims = {20, 20, 10};
    auto [vol, labels] = make_phantom(spec);
    const ProbVolume probs = stub_segment(vol, StubParams{});
    const size_t n = probs.voxels();
    for (size_t i = 0; i < n; ++i) CHECK(probs.data[i] + probs.data[n + i] == 1.0);
}

TEST_CASE("erosion strictly lowers foreground recall on a clean phantom") {
    PhantomSpec spec;
    spec.dims = {32, 32, 12};
    spec.sheet_count = 1;
    spec.noise_sigma = 0.0;
    auto [vol, labels] = make_phantom(spec);
    const LabelVolume ref = collapse_binary(labels);

    StubParams sharp;  // default window brackets the phantom foreground mean
    StubParams eroded = sharp;
    eroded.erosion_depth = 1;

    const MetricsReport r0 = evaluate(stub_segment(vol, sharp).argmax_labels(), ref);
    const MetricsReport r1 = evaluate(stub_segment(vol, eroded).argmax_labels(), ref);
    CHECK(r1.per_class[0].recall < r0.per_class[0].recall);
}

TEST_CASE("deterministic for a fixed input") {
    PhantomSpec spec;
    spec.dims = {20, 20, 10};
    auto [vol, labels] = make_phantom(spec);
    const ProbVolume a = stub_segment(vol, StubParams{});
    const ProbVolume b = stub_segment(vol, StubParams{});
    CHECK(a.data == b.data);
}

TEST_CASE("out-of-range volumes are rescaled before windowing") {
    PhantomSpec spec;
    spec.dims = {20, 20, 10};
    auto [vol, labels] = make_phantom(spec);
    vol.data[0] = 0.0;  // pin the range to exactly [0,1]
    vol.data[1] = 1.0;
    DenseTensor3 shifted = vol;
    for (double& v : shifted.data) v = v * 3.0 - 1.0;  // affine map onto [-1, 2]
    const ProbVolume a = stub_segment(vol, StubParams{});
    const ProbVolume b = stub_segment(shifted, StubParams{});
    // the rescale inverts the affine map, so predictions agree
    const size_t n = a.voxels();
    for (size_t i = 0; i < n; ++i)
        CHECK(a.data[n + i] == doctest::Approx(b.data[n + i]).epsilon(1e-9));
}

TEST_CASE("invalid window is a usage error") {
    DenseTensor3 v(16, 16, 8, 0.5);
    StubParams p;
    p.window_lo = 0.7;
    p.window_hi = 0.6;
    CHECK_THROWS_AS((void)stub_segment(v, p), usage_error);
    p.window_lo = 0.4;
    p.window_hi = 0.6;
    p.temperature = 0.0;
    CHECK_THROWS_AS((void)stub_segment(v, p), usage_error);
}

}  // TEST_SUITE
