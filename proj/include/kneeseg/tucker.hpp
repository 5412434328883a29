#pragma once

#include <array>
#include <utility>
#include <vector>

#include "kneeseg/tensor.hpp"

namespace kneeseg {

struct TuckerRank {
    int r1 = 1, r2 = 1, r3 = 1;
};

/// Core tensor plus one column-orthonormal factor per mode.
/// factors[n] has shape (I_{n+1} x R_{n+1}).
struct TuckerFactors {
    DenseTensor3 core;
    std::array<Eigen::MatrixXd, 3> factors;

    /// max |U^T U - I| over the three factors.
    double orthonormality_defect() const;
};

struct LowRankConfig {
    int block_depth = 10;
    int slice_rank = 3;
    double hooi_tol = 1e-7;
    int hooi_max_iter = 50;
};

struct HooiResult {
    TuckerFactors tucker;
    int iterations = 0;
    std::vector<double> fit_history;  // ||core||_F / ||t||_F after each sweep
};

/// Truncated higher-order SVD: factor n holds the leading ranks.r_n left
/// singular vectors of the mode-n unfolding; the core is the projection of
/// t onto those bases. A zero tensor yields standard-basis factors and a
/// zero core.
TuckerFactors hosvd(const DenseTensor3& t, const TuckerRank& ranks);

/// Higher-order orthogonal iteration, initialized from hosvd. Each sweep
/// re-solves every factor against the tensor projected on the other two;
/// stops once the fit gain drops to cfg.hooi_tol or after hooi_max_iter
/// sweeps. The fit of a zero tensor is 1.0 by convention.
HooiResult hooi(const DenseTensor3& t, const TuckerRank& ranks, const LowRankConfig& cfg);

DenseTensor3 tucker_reconstruct(const TuckerFactors& f);

/// Consecutive [begin, end) slice ranges covering depth `total`; the final
/// block may be shorter when block_depth does not divide total.
std::vector<std::pair<int, int>> slice_blocks(int total, int block_depth);

/// Block-wise low-rank reconstruction of a volume along the slice axis.
/// Every block keeps full spatial rank and truncates the slice mode to
/// min(cfg.slice_rank, block depth). Blocks are processed independently
/// (in parallel) and reassembled in order; dims never change.
DenseTensor3 blockwise_lowrank(const DenseTensor3& volume, const LowRankConfig& cfg);

}  // namespace kneeseg
