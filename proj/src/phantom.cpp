#include "kneeseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "kneeseg/errors.hpp"
#include "kneeseg/threading.hpp"

namespace kneeseg {

namespace {

// splitmix64; the canonical finalizer, stable across platforms.
std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

double to_unit(std::uint64_t x) {
    // 53-bit mantissa, result in (0,1].
    return ((x >> 11) + 1) * 0x1.0p-53;
}

// One standard normal per (seed, index); Box-Muller on two hashed uniforms.
double gaussian_at(std::uint64_t seed, std::uint64_t index) {
    const std::uint64_t h1 = splitmix64(seed ^ splitmix64(index));
    const std::uint64_t h2 = splitmix64(h1);
    const double u1 = to_unit(h1);
    const double u2 = to_unit(h2);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
    // Portable: draws bits directly instead of std::uniform_real_distribution.
    return lo + (hi - lo) * to_unit(rng());
}

struct Sheet {
    double center;      // base height of the mid-surface
    double amp_x;       // in-plane wave amplitude
    double freq_x;      // in-plane wave frequency (cycles over the width)
    double phase_x;
    double drift_z;     // slow displacement along the slice axis
    double thick_base;  // thickness at phase 0
    double thick_amp;
};

}  // namespace

std::pair<DenseTensor3, LabelVolume> make_phantom(const PhantomSpec& spec) {
    const int I1 = spec.dims[0], I2 = spec.dims[1], I3 = spec.dims[2];
    if (I1 < 16 || I2 < 16 || I3 < 8)
        throw usage_error("make_phantom: dims must be at least (16,16,8)");
    if (spec.sheet_count < 1) throw usage_error("make_phantom: sheet_count must be >= 1");
    if (spec.thickness_min < 1.0 || spec.thickness_max < spec.thickness_min)
        throw usage_error("make_phantom: thickness range invalid (min >= 1)");
    if (spec.foreground_mean < 0.0 || spec.foreground_mean > 1.0 ||
        spec.background_mean < 0.0 || spec.background_mean > 1.0)
        throw usage_error("make_phantom: mean intensities must lie in [0,1]");
    if (spec.noise_sigma < 0.0) throw usage_error("make_phantom: noise_sigma must be >= 0");

    std::mt19937_64 rng(spec.rng_seed);
    const int S = spec.sheet_count;
    std::vector<Sheet> sheets(S);
    const double margin = spec.thickness_max / 2.0 + 2.0;
    // Amplitude capped so adjacent columns stay 26-connected for thin sheets.
    const double amp_cap = std::min(I2 * 0.12, I1 / 8.0);
    for (int s = 0; s < S; ++s) {
        Sheet& sh = sheets[s];
        const double lane = I2 * (s + 1.0) / (S + 1.0);
        sh.center = std::clamp(lane + uniform(rng, -0.05, 0.05) * I2, margin, I2 - margin);
        sh.amp_x = uniform(rng, 0.5, 1.0) * amp_cap;
        sh.freq_x = uniform(rng, 0.75, 1.25);
        sh.phase_x = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        sh.drift_z = uniform(rng, 0.5, 1.5);
        sh.thick_base = spec.thickness_min;
        sh.thick_amp = spec.thickness_max - spec.thickness_min;
    }

    DenseTensor3 vol(I1, I2, I3);
    LabelVolume labels(I1, I2, I3, S + 1);

#pragma omp parallel for schedule(static) num_threads(max_threads())
    for (int i3 = 0; i3 < I3; ++i3) {
        const double z = static_cast<double>(i3);
        for (int i2 = 0; i2 < I2; ++i2) {
            for (int i1 = 0; i1 < I1; ++i1) {
                int label = 0;
                for (int s = 0; s < S && label == 0; ++s) {
                    const Sheet& sh = sheets[s];
                    const double mid =
                        sh.center +
                        sh.amp_x * std::sin(2.0 * std::numbers::pi * sh.freq_x * i1 / I1 +
                                            sh.phase_x) +
                        sh.drift_z * std::sin(std::numbers::pi * z / I3);
                    const double thick =
                        sh.thick_base +
                        sh.thick_amp * 0.5 *
                            (1.0 + std::sin(2.0 * std::numbers::pi * i1 / I1 + sh.phase_x +
                                            0.5 * z / I3));
                    if (std::abs(i2 + 0.5 - mid) <= thick / 2.0) label = s + 1;
                }
                const size_t flat = static_cast<size_t>(i1) +
                                    static_cast<size_t>(I1) *
                                        (i2 + static_cast<size_t>(I2) * i3);
                labels.labels[flat] = static_cast<std::uint8_t>(label);
                double v = label > 0 ? spec.foreground_mean : spec.background_mean;
                if (spec.noise_sigma > 0.0)
                    v += spec.noise_sigma * gaussian_at(spec.rng_seed, flat);
                vol.data[flat] = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return {std::move(vol), std::move(labels)};
}

namespace {

// Separable 3D box mean with borders truncated to the volume.
DenseTensor3 box_smooth(const DenseTensor3& v, int radius) {
    if (radius <= 0) return v;
    const int I1 = v.dims[0], I2 = v.dims[1], I3 = v.dims[2];
    DenseTensor3 a = v, b(I1, I2, I3);

    auto pass = [&](const DenseTensor3& src, DenseTensor3& dst, int axis) {
        const int len = src.dims[axis];
#pragma omp parallel for schedule(static) num_threads(max_threads())
        for (int i3 = 0; i3 < I3; ++i3)
            for (int i2 = 0; i2 < I2; ++i2)
                for (int i1 = 0; i1 < I1; ++i1) {
                    int idx[3] = {i1, i2, i3};
                    const int c = idx[axis];
                    const int lo = std::max(0, c - radius);
                    const int hi = std::min(len - 1, c + radius);
                    double s = 0.0;
                    for (int k = lo; k <= hi; ++k) {
                        idx[axis] = k;
                        s += src.at(idx[0], idx[1], idx[2]);
                    }
                    dst.at(i1, i2, i3) = s / (hi - lo + 1);
                }
    };

    pass(a, b, 0);
    pass(b, a, 1);
    pass(a, b, 2);
    return b;
}

// In-plane 4-neighbour erosion; outside the image counts as background.
void erode_inplane(std::vector<std::uint8_t>& mask, int I1, int I2, int I3) {
    std::vector<std::uint8_t> src = mask;
    auto at = [&](int x, int y, int z) -> bool {
        if (x < 0 || x >= I1 || y < 0 || y >= I2) return false;
        return src[static_cast<size_t>(x) +
                   static_cast<size_t>(I1) * (y + static_cast<size_t>(I2) * z)] != 0;
    };
#pragma omp parallel for schedule(static) num_threads(max_threads())
    for (int z = 0; z < I3; ++z)
        for (int y = 0; y < I2; ++y)
            for (int x = 0; x < I1; ++x) {
                const size_t p = static_cast<size_t>(x) +
                                 static_cast<size_t>(I1) * (y + static_cast<size_t>(I2) * z);
                if (!src[p]) continue;
                const bool keep = at(x - 1, y, z) && at(x + 1, y, z) &&
                                  at(x, y - 1, z) && at(x, y + 1, z);
                if (!keep) mask[p] = 0;
            }
}

}  // namespace

ProbVolume stub_segment(const DenseTensor3& volume, const StubParams& params) {
    if (!(params.window_lo >= 0.0 && params.window_lo < params.window_hi &&
          params.window_hi <= 1.0))
        throw usage_error("stub_segment: window must satisfy 0 <= lo < hi <= 1");
    if (params.temperature <= 0.0) throw usage_error("stub_segment: temperature must be > 0");
    if (params.smoothing_radius < 0 || params.erosion_depth < 0)
        throw usage_error("stub_segment: radii must be >= 0");

    const int I1 = volume.dims[0], I2 = volume.dims[1], I3 = volume.dims[2];
    const size_t n = volume.size();

    // Rescale to [0,1] only when intensities leave that range; a volume
    // already in range passes through untouched.
    double lo = volume.data[0], hi = volume.data[0];
    for (double v : volume.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    DenseTensor3 norm = volume;
    if (lo < 0.0 || hi > 1.0) {
        const double span = hi - lo;
        for (size_t p = 0; p < n; ++p)
            norm.data[p] = span > 0.0 ? (volume.data[p] - lo) / span : 0.0;
    }

    const DenseTensor3 smooth = box_smooth(norm, params.smoothing_radius);

    const double center = 0.5 * (params.window_lo + params.window_hi);
    const double halfwidth = 0.5 * (params.window_hi - params.window_lo);

    ProbVolume probs(I1, I2, I3, 2);
    std::vector<std::uint8_t> mask(n, 0);
#pragma omp parallel for schedule(static) num_threads(max_threads())
    for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(n); ++p) {
        const double s = smooth.data[p];
        const double t = (halfwidth - std::abs(s - center)) / params.temperature;
        const double fg = 1.0 / (1.0 + std::exp(-t));
        probs.data[n + p] = fg;  // class 1 plane
        mask[p] = fg > 0.5 ? 1 : 0;
    }

    if (params.erosion_depth > 0) {
        std::vector<std::uint8_t> eroded = mask;
        for (int k = 0; k < params.erosion_depth; ++k) erode_inplane(eroded, I1, I2, I3);
#pragma omp parallel for schedule(static) num_threads(max_threads())
        for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(n); ++p) {
            if (mask[p] && !eroded[p]) {
                const double fg = probs.data[n + p];
                probs.data[n + p] = std::min(fg, 1.0 - fg);
            }
        }
    }

    // Pairing bg = 1-fg, fg = 1-bg makes the per-voxel sum exactly 1.0
    // (the inner subtraction is exact by Sterbenz whenever it matters).
#pragma omp parallel for schedule(static) num_threads(max_threads())
    for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(n); ++p) {
        const double bg = 1.0 - probs.data[n + p];
        probs.data[p] = bg;
        probs.data[n + p] = 1.0 - bg;
    }
    return probs;
}

}  // namespace kneeseg
