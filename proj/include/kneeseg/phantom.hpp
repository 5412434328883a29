#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "kneeseg/metrics.hpp"
#include "kneeseg/tensor.hpp"

namespace kneeseg {

/// Synthetic volume: thin curved sheets that persist across slices, so the
/// slice axis is genuinely low rank. Deterministic for a fixed seed.
struct PhantomSpec {
    std::array<int, 3> dims{48, 48, 32};
    int sheet_count = 2;
    double thickness_min = 2.0;  // voxels, >= 1
    double thickness_max = 3.0;
    double foreground_mean = 0.75;
    double background_mean = 0.25;
    double noise_sigma = 0.03;
    std::uint64_t rng_seed = 1;
};

/// Volume plus ground-truth labels (sheet s carries class id s, classes
/// 0..sheet_count). Geometry parameters come from an mt19937_64 stream;
/// voxel noise uses a splitmix64 hash of (seed, voxel index) with
/// Box-Muller, so generation is order-independent and portable.
std::pair<DenseTensor3, LabelVolume> make_phantom(const PhantomSpec& spec);

/// Intensity-window segmenter standing in for a trained network. The
/// default window brackets the phantom foreground mean with enough slack
/// that box-smoothed boundary voxels of thin sheets still score inside it.
struct StubParams {
    double window_lo = 0.45;
    double window_hi = 0.95;
    int smoothing_radius = 1;   // 3D box half-width, 0 disables smoothing
    int erosion_depth = 0;      // in-plane erosions applied to the predicted mask
    double temperature = 0.05;  // logistic steepness, > 0
};

/// Binary probability volume (class 0 background, class 1 tissue).
/// Foreground probability is a logistic in the distance between the
/// box-smoothed intensity and the window center; with erosion_depth > 0
/// the probability is suppressed on the erosion_depth-wide inner rim of
/// the predicted mask, emulating a segmenter that misses thin boundaries.
ProbVolume stub_segment(const DenseTensor3& volume, const StubParams& params);

}  // namespace kneeseg
