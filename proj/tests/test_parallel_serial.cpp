// The OpenMP kernels must reproduce the serial reference implementations.

#include <doctest.h>

#include <cmath>

#include "kneeseg/matting.hpp"
#include "kneeseg/phantom.hpp"
#include "kneeseg/serial_ref.hpp"
#include "kneeseg/threading.hpp"
#include "oracles.hpp"

using namespace kneeseg;

namespace {

struct ThreadGuard {
    explicit ThreadGuard(int n) { set_max_threads(n); }
    ~ThreadGuard() { set_max_threads(0); }
};

}  // namespace

TEST_SUITE("parallel-vs-serial") {

TEST_CASE("blockwise_lowrank is bit-identical to the serial loop") {
    const DenseTensor3 v = oracles::random_tensor(10, 10, 23, 3);
    LowRankConfig cfg;
    cfg.block_depth = 5;
    cfg.slice_rank = 2;
    const DenseTensor3 ref = serial::blockwise_lowrank(v, cfg);
    for (int threads : {1, 2, 4}) {
        ThreadGuard guard(threads);
        CHECK(blockwise_lowrank(v, cfg).data == ref.data);
    }
}

TEST_CASE("laplacian gather form agrees with the scatter reference") {
    GrayImage2D img(9, 8);
    img.pixels = oracles::random_unit01(img.size(), 44);
    const MattingLaplacian a = build_laplacian(img, MatteParams{});
    const MattingLaplacian b = serial::build_laplacian(img, MatteParams{});
    REQUIRE(a.m.n == b.m.n);
    REQUIRE(a.m.row_ptr == b.m.row_ptr);
    REQUIRE(a.m.cols == b.m.cols);
    for (size_t k = 0; k < a.m.vals.size(); ++k)
        CHECK(a.m.vals[k] == doctest::Approx(b.m.vals[k]).epsilon(1e-12));
}

TEST_CASE("spmv is bit-identical to the serial row loop") {
    GrayImage2D img(10, 10);
    img.pixels = oracles::random_unit01(img.size(), 5);
    const MattingLaplacian lap = build_laplacian(img, MatteParams{});
    const std::vector<double> x = oracles::random_unit01(lap.n(), 6);
    std::vector<double> ys, yp;
    serial::spmv(lap.m, x, ys);
    for (int threads : {1, 2, 4}) {
        ThreadGuard guard(threads);
        spmv(lap.m, x, yp);
        CHECK(ys == yp);
    }
}

TEST_CASE("matte_volume labels match the serial slice loop for any thread count") {
    PhantomSpec spec;
    spec.dims = {20, 20, 8};
    spec.sheet_count = 1;
    auto [vol, labels] = make_phantom(spec);
    StubParams degraded;
    degraded.erosion_depth = 1;
    const ProbVolume ps = stub_segment(vol, degraded);
    const ProbVolume pt = stub_segment(vol, StubParams{});
    const LabelVolume ref = serial::matte_volume(vol, ps, pt, MatteParams{});
    for (int threads : {1, 4}) {
        ThreadGuard guard(threads);
        CHECK(matte_volume(vol, ps, pt, MatteParams{}).labels == ref.labels);
    }
}

TEST_CASE("evaluate tallies are exact under threading") {
    PhantomSpec spec;
    spec.dims = {20, 20, 10};
    spec.sheet_count = 2;
    auto [vol, labels] = make_phantom(spec);
    PhantomSpec spec2 = spec;
    spec2.rng_seed = 9;
    auto [vol2, labels2] = make_phantom(spec2);
    const MetricsReport ref = serial::evaluate(labels, labels2);
    for (int threads : {1, 4}) {
        ThreadGuard guard(threads);
        const MetricsReport par = evaluate(labels, labels2);
        for (size_t c = 0; c < ref.per_class.size(); ++c) {
            CHECK(par.per_class[c].pred_voxels == ref.per_class[c].pred_voxels);
            CHECK(par.per_class[c].ref_voxels == ref.per_class[c].ref_voxels);
            CHECK(par.per_class[c].intersection == ref.per_class[c].intersection);
            CHECK(par.per_class[c].dice == ref.per_class[c].dice);
        }
    }
}

TEST_CASE("wce_loss chunked reduction stays within 1e-9 of the compensated sum") {
    PhantomSpec spec;
    spec.dims = {24, 24, 12};
    auto [vol, labels] = make_phantom(spec);
    LabelVolume binary = labels;
    for (auto& l : binary.labels) l = l > 0 ? 1 : 0;
    binary.class_count = 2;
    const ProbVolume probs = stub_segment(vol, StubParams{});
    const ClassWeights w{{1.0, 2.5}};
    const double ref = serial::wce_loss(probs, binary, w);
    double first = 0.0;
    for (int threads : {1, 2, 4}) {
        ThreadGuard guard(threads);
        const double loss = wce_loss(probs, binary, w);
        CHECK(std::abs(loss - ref) <= 1e-9 * (1.0 + std::abs(ref)));
        if (threads == 1)
            first = loss;
        else
            CHECK(loss == first);  // chunked order is thread-count invariant
    }
}

TEST_CASE("stub_segment is bit-identical across thread counts") {
    PhantomSpec spec;
    spec.dims = {20, 20, 10};
    auto [vol, labels] = make_phantom(spec);
    StubParams params;
    params.erosion_depth = 1;
    ThreadGuard g1(1);
    const ProbVolume a = stub_segment(vol, params);
    set_max_threads(4);
    const ProbVolume b = stub_segment(vol, params);
    CHECK(a.data == b.data);
}

}  // TEST_SUITE
