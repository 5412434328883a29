#include "kneeseg/tucker.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <exception>

#include "kneeseg/errors.hpp"
#include "kneeseg/threading.hpp"

namespace kneeseg {

namespace {

void check_ranks(const DenseTensor3& t, const TuckerRank& ranks) {
    const int r[3] = {ranks.r1, ranks.r2, ranks.r3};
    for (int n = 0; n < 3; ++n) {
        if (r[n] < 1) throw usage_error("tucker rank must be >= 1");
        if (r[n] > t.dims[n]) throw usage_error("tucker rank exceeds tensor dimension");
    }
}

// Leading `rank` left singular vectors. JacobiSVD for small problems,
// BDCSVD above its crossover. A rank beyond the minor dimension of m needs
// the full U so the basis extends past the thin factor (the tail columns
// complete the range orthonormally).
Eigen::MatrixXd leading_left_singular_vectors(const Eigen::MatrixXd& m, int rank) {
    const bool full = rank > std::min(m.rows(), m.cols());
    const unsigned options = full ? Eigen::ComputeFullU : Eigen::ComputeThinU;
    if (std::min(m.rows(), m.cols()) <= 16) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, options);
        if (svd.info() != Eigen::Success)
            throw numeric_error("SVD failed to converge on a mode unfolding");
        return svd.matrixU().leftCols(rank);
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(m, options);
    if (svd.info() != Eigen::Success)
        throw numeric_error("SVD failed to converge on a mode unfolding");
    return svd.matrixU().leftCols(rank);
}

Eigen::MatrixXd standard_basis(int n, int r) {
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(n, r);
    for (int i = 0; i < r; ++i) u(i, i) = 1.0;
    return u;
}

DenseTensor3 project_core(const DenseTensor3& t, const std::array<Eigen::MatrixXd, 3>& u) {
    DenseTensor3 c = mode_product(t, u[0].transpose(), 1);
    c = mode_product(c, u[1].transpose(), 2);
    c = mode_product(c, u[2].transpose(), 3);
    return c;
}

}  // namespace

double TuckerFactors::orthonormality_defect() const {
    double worst = 0.0;
    for (const auto& u : factors) {
        Eigen::MatrixXd g = u.transpose() * u;
        g -= Eigen::MatrixXd::Identity(g.rows(), g.cols());
        worst = std::max(worst, g.cwiseAbs().maxCoeff());
    }
    return worst;
}

TuckerFactors hosvd(const DenseTensor3& t, const TuckerRank& ranks) {
    check_ranks(t, ranks);
    const int r[3] = {ranks.r1, ranks.r2, ranks.r3};

    TuckerFactors out;
    if (t.frobenius_norm() == 0.0) {
        for (int n = 0; n < 3; ++n) out.factors[n] = standard_basis(t.dims[n], r[n]);
        out.core = DenseTensor3(r[0], r[1], r[2]);
        return out;
    }
    for (int n = 0; n < 3; ++n)
        out.factors[n] = leading_left_singular_vectors(unfold(t, n + 1), r[n]);
    out.core = project_core(t, out.factors);
    return out;
}

HooiResult hooi(const DenseTensor3& t, const TuckerRank& ranks, const LowRankConfig& cfg) {
    check_ranks(t, ranks);
    if (cfg.hooi_max_iter < 1) throw usage_error("hooi_max_iter must be >= 1");
    if (cfg.hooi_tol <= 0) throw usage_error("hooi_tol must be > 0");

    HooiResult res;
    const double t_norm = t.frobenius_norm();
    if (t_norm == 0.0) {
        res.tucker = hosvd(t, ranks);
        res.iterations = 1;
        res.fit_history.push_back(1.0);
        return res;
    }

    res.tucker = hosvd(t, ranks);
    auto& u = res.tucker.factors;
    double prev_fit = res.tucker.core.frobenius_norm() / t_norm;

    const int r[3] = {ranks.r1, ranks.r2, ranks.r3};
    for (int sweep = 1; sweep <= cfg.hooi_max_iter; ++sweep) {
        for (int n = 0; n < 3; ++n) {
            // Project on the other two factors, then refresh mode n.
            DenseTensor3 g = t;
            for (int m = 0; m < 3; ++m)
                if (m != n) g = mode_product(g, u[m].transpose(), m + 1);
            u[n] = leading_left_singular_vectors(unfold(g, n + 1), r[n]);
        }
        res.tucker.core = project_core(t, u);
        const double fit = res.tucker.core.frobenius_norm() / t_norm;
        res.fit_history.push_back(fit);
        res.iterations = sweep;
        if (fit - prev_fit <= cfg.hooi_tol) break;
        prev_fit = fit;
    }
    return res;
}

DenseTensor3 tucker_reconstruct(const TuckerFactors& f) {
    const auto& core = f.core;
    for (int n = 0; n < 3; ++n)
        if (f.factors[n].cols() != core.dims[n])
            throw usage_error("tucker_reconstruct: factor/core shape mismatch");
    DenseTensor3 x = mode_product(core, f.factors[0], 1);
    x = mode_product(x, f.factors[1], 2);
    x = mode_product(x, f.factors[2], 3);
    return x;
}

std::vector<std::pair<int, int>> slice_blocks(int total, int block_depth) {
    if (block_depth < 1) throw usage_error("block_depth must be >= 1");
    if (total < 1) throw usage_error("slice count must be >= 1");
    std::vector<std::pair<int, int>> blocks;
    for (int b = 0; b < total; b += block_depth)
        blocks.emplace_back(b, std::min(b + block_depth, total));
    return blocks;
}

DenseTensor3 blockwise_lowrank(const DenseTensor3& volume, const LowRankConfig& cfg) {
    if (cfg.block_depth < 1) throw usage_error("block_depth must be >= 1");
    if (cfg.slice_rank < 1) throw usage_error("slice_rank must be >= 1");
    const int I1 = volume.dims[0], I2 = volume.dims[1], S = volume.dims[2];
    const auto blocks = slice_blocks(S, cfg.block_depth);

    DenseTensor3 out(I1, I2, S);
    const auto nblocks = static_cast<std::ptrdiff_t>(blocks.size());
    const size_t slice_px = static_cast<size_t>(I1) * I2;
    std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic) num_threads(max_threads())
    for (std::ptrdiff_t b = 0; b < nblocks; ++b) {
        try {
            const auto [begin, end] = blocks[b];
            const int depth = end - begin;
            DenseTensor3 block(I1, I2, depth);
            std::copy_n(volume.data.begin() + static_cast<std::ptrdiff_t>(begin) * slice_px,
                        slice_px * depth, block.data.begin());

            // Spatial modes keep full rank; only the slice mode is truncated.
            TuckerRank ranks{I1, I2, std::min(cfg.slice_rank, depth)};
            HooiResult h = hooi(block, ranks, cfg);
            DenseTensor3 rec = tucker_reconstruct(h.tucker);

            std::copy_n(rec.data.begin(), slice_px * depth,
                        out.data.begin() + static_cast<std::ptrdiff_t>(begin) * slice_px);
        } catch (...) {
#pragma omp critical(kneeseg_blockwise_err)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

}  // namespace kneeseg
