// Benchmark comparing the serial reference kernels against the OpenMP
// implementations. Results must agree; only the wall time differs.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kneeseg/matting.hpp"
#include "kneeseg/phantom.hpp"
#include "kneeseg/serial_ref.hpp"
#include "kneeseg/threading.hpp"
#include "kneeseg/tucker.hpp"

namespace {

using namespace kneeseg;

template <typename F>
double time_s(F&& f, int reps = 1) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) f();
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    return dt.count() / reps;
}

void report(const char* name, double serial, double parallel) {
    std::printf("%-20s %10.4f s %10.4f s %8.2fx\n", name, serial, parallel,
                serial / parallel);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"serial vs OpenMP kernel benchmark"};
    int threads = 0;
    int dim = 64, depth = 48;
    app.add_option("--threads", threads, "thread cap for the parallel runs");
    app.add_option("--dim", dim, "in-plane phantom size");
    app.add_option("--slices", depth, "phantom slice count");
    CLI11_PARSE(app, argc, argv);

    PhantomSpec spec;
    spec.dims = {dim, dim, depth};
    spec.sheet_count = 2;
    auto [volume, labels] = make_phantom(spec);

    StubParams stub;
    LowRankConfig lr;
    MatteParams matte;

    set_max_threads(threads);
    std::printf("volume %dx%dx%d, %d thread(s) for parallel runs\n", dim, dim, depth,
                max_threads());
    std::printf("%-20s %12s %12s %9s\n", "kernel", "serial", "parallel", "speedup");

    {
        DenseTensor3 out_s, out_p;
        const double ts = time_s([&] { out_s = serial::blockwise_lowrank(volume, lr); });
        const double tp = time_s([&] { out_p = blockwise_lowrank(volume, lr); });
        report("blockwise_lowrank", ts, tp);
        if (out_s.data != out_p.data) std::printf("  MISMATCH\n");
    }

    const ProbVolume probs_src = stub_segment(volume, stub);
    StubParams degraded = stub;
    degraded.erosion_depth = 1;
    const ProbVolume probs_lr = stub_segment(volume, degraded);

    {
        const GrayImage2D img = slice_image(volume, depth / 2);
        MattingLaplacian lap_s, lap_p;
        const double ts = time_s([&] { lap_s = serial::build_laplacian(img, matte); }, 3);
        const double tp = time_s([&] { lap_p = build_laplacian(img, matte); }, 3);
        report("build_laplacian", ts, tp);

        std::vector<double> x(lap_p.n()), y;
        for (size_t i = 0; i < x.size(); ++i) x[i] = 0.01 * static_cast<double>(i % 97);
        const double ss = time_s([&] { serial::spmv(lap_p.m, x, y); }, 200);
        const double sp = time_s([&] { spmv(lap_p.m, x, y); }, 200);
        report("spmv", ss, sp);
    }

    {
        LabelVolume out_s, out_p;
        const double ts =
            time_s([&] { out_s = serial::matte_volume(volume, probs_src, probs_lr, matte); });
        const double tp = time_s([&] { out_p = matte_volume(volume, probs_src, probs_lr, matte); });
        report("matte_volume", ts, tp);
        if (out_s.labels != out_p.labels) std::printf("  MISMATCH\n");
    }

    {
        LabelVolume binary = labels;
        for (auto& l : binary.labels) l = l > 0 ? 1 : 0;
        binary.class_count = 2;
        const ClassWeights w{{1.0, 2.0}};
        double a = 0, b = 0;
        const double ts = time_s([&] { a = serial::wce_loss(probs_src, binary, w); }, 20);
        const double tp = time_s([&] { b = wce_loss(probs_src, binary, w); }, 20);
        report("wce_loss", ts, tp);
        if (std::abs(a - b) > 1e-9 * (1.0 + std::abs(a))) std::printf("  MISMATCH\n");
    }
    return 0;
}
