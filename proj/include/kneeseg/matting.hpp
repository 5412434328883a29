#pragma once

#include <vector>

#include "kneeseg/image.hpp"
#include "kneeseg/metrics.hpp"
#include "kneeseg/sparse.hpp"
#include "kneeseg/tensor.hpp"

namespace kneeseg {

struct MatteParams {
    int window_radius = 1;      // 1 -> 3x3 local windows
    double eps = 1e-5;          // covariance regularizer, > 0
    double lambda = 100.0;      // constraint weight
    double solver_tol = 1e-7;   // CG relative residual
    int solver_max_iter = 2000;
    double alpha_threshold = 0.5;  // in (0,1)
};

/// Matting Laplacian over the pixel grid: symmetric, zero row sums,
/// positive semidefinite. Off-diagonals are the negated pairwise
/// affinities accumulated over all full interior windows; each diagonal
/// is the sum of its off-diagonal affinities.
struct MattingLaplacian {
    int width = 0, height = 0;
    CsrMatrix m;

    int n() const { return m.n; }
};

/// Builds the Laplacian from local window statistics: within each full
/// window of radius params.window_radius, the affinity of pixels i,j is
///   (1/|N|) * (1 + (I_i - mu)(I_j - mu) / (var + eps/|N|)).
/// Windows touching the border are skipped; border pixels still pick up
/// affinities from interior windows that contain them.
MattingLaplacian build_laplacian(const GrayImage2D& img, const MatteParams& params);

struct AlphaSolveResult {
    AlphaMatte2D matte;          // clamped to [0,1]
    std::vector<double> raw;     // pre-clamp solution of the linear system
    int iterations = 0;
    double relative_residual = 0.0;
    double pre_clamp_min = 0.0;
    double pre_clamp_max = 0.0;
    double max_constraint_deviation = 0.0;  // max |raw - b| over constrained pixels
};

/// Solves (L + lambda*D_S) alpha = lambda*b_S, where D_S marks the
/// trimap-constrained pixels and b_S is 1 on foreground, 0 elsewhere.
/// Throws usage_error when the trimap has no constrained pixel and
/// numeric_error when CG fails to reach solver_tol.
AlphaSolveResult solve_alpha(const MattingLaplacian& L, const Trimap2D& trimap,
                             const MatteParams& params);

/// bit set iff alpha > threshold (strict).
BinaryMask2D alpha_to_mask(const AlphaMatte2D& alpha, double threshold);

/// Per-class probability slices for one 2D slice; class varies slowest:
/// value(c, x, y) = values[x + width*(y + height*c)].
struct ProbSliceStack {
    int width = 0, height = 0, class_count = 0;
    std::vector<double> values;

    ProbSliceStack() = default;
    ProbSliceStack(int w, int h, int c)
        : width(w), height(h), class_count(c),
          values(static_cast<size_t>(w) * h * c, 0.0) {}

    double at(int c, int x, int y) const {
        return values[x + static_cast<size_t>(width) * (y + static_cast<size_t>(height) * c)];
    }
    double& at(int c, int x, int y) {
        return values[x + static_cast<size_t>(width) * (y + static_cast<size_t>(height) * c)];
    }

    /// argmax over classes; ties resolve to the lowest class index.
    int argmax(int x, int y) const;
};

struct SliceMatteStats {
    double pre_clamp_min = 1.0;
    double pre_clamp_max = 0.0;
    double max_constraint_deviation = 0.0;
    long long solver_iterations = 0;
    long long unknown_pixels = 0;
};

/// One-vs-rest matting per foreground class followed by argmax fusion.
/// Classes whose trimap has no unknown pixel skip the solve and take the
/// agreed mask directly. Pixels where every class alpha stays at or below
/// params.alpha_threshold become background.
LabelSlice matte_slice_multiclass(const GrayImage2D& img, const ProbSliceStack& probs_source,
                                  const ProbSliceStack& probs_lowrank,
                                  const MatteParams& params,
                                  SliceMatteStats* stats = nullptr,
                                  std::vector<Trimap2D>* trimaps_out = nullptr,
                                  std::vector<AlphaMatte2D>* alphas_out = nullptr);

GrayImage2D slice_image(const DenseTensor3& volume, int i3);
ProbSliceStack slice_probs(const ProbVolume& probs, int i3);

struct VolumeMatteStats {
    double pre_clamp_min = 1.0;
    double pre_clamp_max = 0.0;
    double max_constraint_deviation = 0.0;
    long long solver_iterations = 0;
    long long unknown_pixels = 0;
};

/// Optional per-class artifacts of a volume matte. Trimap volumes hold
/// the raw labels 0/1/2 (background/unknown/foreground), class_count 3.
struct VolumeMatteArtifacts {
    std::vector<LabelVolume> trimaps;   // one per foreground class
    std::vector<DenseTensor3> alphas;   // one per foreground class
};

/// Mattes every slice independently (parallel across slices) and stacks
/// the per-slice labels. volume pixel values must already lie in [0,1].
LabelVolume matte_volume(const DenseTensor3& volume, const ProbVolume& probs_source,
                         const ProbVolume& probs_lowrank, const MatteParams& params,
                         VolumeMatteStats* stats = nullptr,
                         VolumeMatteArtifacts* artifacts = nullptr);

}  // namespace kneeseg
