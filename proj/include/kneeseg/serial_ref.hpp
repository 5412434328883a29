#pragma once

#include "kneeseg/matting.hpp"
#include "kneeseg/metrics.hpp"
#include "kneeseg/sparse.hpp"
#include "kneeseg/tucker.hpp"

// Plain single-threaded counterparts of the OpenMP kernels. Kept for
// testing (the parallel kernels must reproduce them) and as the baseline
// of the benchmark tool. build_laplacian additionally switches to the
// window-scatter accumulation order, which cross-checks the gather form
// used by the parallel implementation.
namespace kneeseg::serial {

DenseTensor3 blockwise_lowrank(const DenseTensor3& volume, const LowRankConfig& cfg);

void spmv(const CsrMatrix& a, const std::vector<double>& x, std::vector<double>& y);

MattingLaplacian build_laplacian(const GrayImage2D& img, const MatteParams& params);

LabelVolume matte_volume(const DenseTensor3& volume, const ProbVolume& probs_source,
                         const ProbVolume& probs_lowrank, const MatteParams& params);

MetricsReport evaluate(const LabelVolume& pred, const LabelVolume& ref);

double wce_loss(const ProbVolume& probs, const LabelVolume& labels, const ClassWeights& weights);

}  // namespace kneeseg::serial
