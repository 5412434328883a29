#include "kneeseg/matting.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <string>
#include <utility>

#include "kneeseg/errors.hpp"
#include "kneeseg/threading.hpp"

namespace kneeseg {

namespace {

void check_params(const MatteParams& p) {
    if (p.window_radius < 1) throw usage_error("window_radius must be >= 1");
    if (p.eps <= 0.0) throw usage_error("eps must be > 0");
    if (p.lambda <= 0.0) throw usage_error("lambda must be > 0");
    if (p.alpha_threshold <= 0.0 || p.alpha_threshold >= 1.0)
        throw usage_error("alpha_threshold must lie in (0,1)");
    if (p.solver_max_iter < 1) throw usage_error("solver_max_iter must be >= 1");
}

}  // namespace

MattingLaplacian build_laplacian(const GrayImage2D& img, const MatteParams& params) {
    check_params(params);
    const int W = img.width, H = img.height, r = params.window_radius;
    const int win = 2 * r + 1;
    if (W < win || H < win)
        throw usage_error("build_laplacian: image smaller than the window");

    const int wn = win * win;          // |N_k|, full windows only
    const double inv_wn = 1.0 / wn;

    // Window statistics, indexed by the window center. Interior centers are
    // x in [r, W-1-r], y in [r, H-1-r].
    const int cx0 = r, cx1 = W - 1 - r, cy0 = r, cy1 = H - 1 - r;
    const int ncx = cx1 - cx0 + 1, ncy = cy1 - cy0 + 1;
    std::vector<double> mean(static_cast<size_t>(ncx) * ncy);
    std::vector<double> inv_var(static_cast<size_t>(ncx) * ncy);

#pragma omp parallel for schedule(static) num_threads(max_threads())
    for (int cy = cy0; cy <= cy1; ++cy) {
        for (int cx = cx0; cx <= cx1; ++cx) {
            double s = 0.0, s2 = 0.0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const double v = img.at(cx + dx, cy + dy);
                    s += v;
                    s2 += v * v;
                }
            const double mu = s * inv_wn;
            const double var = s2 * inv_wn - mu * mu;
            const size_t k = (cx - cx0) + static_cast<size_t>(ncx) * (cy - cy0);
            mean[k] = mu;
            inv_var[k] = 1.0 / (var + params.eps * inv_wn);
        }
    }

    // Pairwise affinities, gathered per pixel pair so the accumulation
    // order is fixed regardless of threading. Two pixels interact iff some
    // full window contains both, so offsets are bounded by 2r.
    const int d = 2 * r;
    std::vector<std::pair<int, int>> offsets;  // canonical: (dy > 0) or (dy == 0 && dx > 0)
    for (int dy = 0; dy <= d; ++dy)
        for (int dx = (dy == 0 ? 1 : -d); dx <= d; ++dx)
            offsets.emplace_back(dx, dy);
    const int noff = static_cast<int>(offsets.size());

    const size_t npx = static_cast<size_t>(W) * H;
    // w_half[p*noff + o] = affinity between p and p+offset(o); NaN when the
    // pair shares no window.
    std::vector<double> w_half(npx * noff, std::numeric_limits<double>::quiet_NaN());

#pragma omp parallel for schedule(static) num_threads(max_threads())
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const size_t p = x + static_cast<size_t>(W) * y;
            const double vi = img.pixels[p];
            for (int o = 0; o < noff; ++o) {
                const int qx = x + offsets[o].first;
                const int qy = y + offsets[o].second;
                if (qx < 0 || qx >= W || qy < 0 || qy >= H) continue;
                const double vj = img.at(qx, qy);
                // Centers of windows containing both endpoints.
                const int ax0 = std::max({x - r, qx - r, cx0});
                const int ax1 = std::min({x + r, qx + r, cx1});
                const int ay0 = std::max({y - r, qy - r, cy0});
                const int ay1 = std::min({y + r, qy + r, cy1});
                if (ax0 > ax1 || ay0 > ay1) continue;
                double acc = 0.0;
                for (int cy = ay0; cy <= ay1; ++cy)
                    for (int cx = ax0; cx <= ax1; ++cx) {
                        const size_t k = (cx - cx0) + static_cast<size_t>(ncx) * (cy - cy0);
                        acc += inv_wn * (1.0 + (vi - mean[k]) * (vj - mean[k]) * inv_var[k]);
                    }
                w_half[p * noff + o] = acc;
            }
        }
    }

    // CSR assembly: row p sees the canonical offsets forward and their
    // mirrors backward; both directions read the same stored affinity, so
    // symmetry is exact.
    MattingLaplacian lap;
    lap.width = W;
    lap.height = H;
    CsrMatrix& a = lap.m;
    a.n = static_cast<int>(npx);
    a.row_ptr.assign(npx + 1, 0);

    auto pair_value = [&](size_t p, int dx, int dy) -> double {
        // Looks up the affinity of (p, p+(dx,dy)) from the canonical side.
        size_t base = p;
        if (dy < 0 || (dy == 0 && dx < 0)) {
            base = p + dx + static_cast<std::ptrdiff_t>(W) * dy;
            dx = -dx;
            dy = -dy;
        }
        const int o = dy == 0 ? dx - 1 : d + (dy - 1) * (2 * d + 1) + (dx + d);
        return w_half[base * static_cast<size_t>(noff) + o];
    };

    std::vector<int> row_cols;
    std::vector<double> row_vals;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const size_t p = x + static_cast<size_t>(W) * y;
            row_cols.clear();
            row_vals.clear();
            double diag = 0.0;
            for (int dy = -d; dy <= d; ++dy) {
                const int qy = y + dy;
                if (qy < 0 || qy >= H) continue;
                for (int dx = -d; dx <= d; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    const int qx = x + dx;
                    if (qx < 0 || qx >= W) continue;
                    const double w = pair_value(p, dx, dy);
                    if (std::isnan(w)) continue;
                    row_cols.push_back(qx + W * qy);
                    row_vals.push_back(-w);
                    diag += w;
                }
            }
            // Insert the diagonal keeping columns sorted.
            const int self = static_cast<int>(p);
            const auto pos = std::lower_bound(row_cols.begin(), row_cols.end(), self);
            const auto idx = pos - row_cols.begin();
            row_cols.insert(pos, self);
            row_vals.insert(row_vals.begin() + idx, diag);

            a.cols.insert(a.cols.end(), row_cols.begin(), row_cols.end());
            a.vals.insert(a.vals.end(), row_vals.begin(), row_vals.end());
            a.row_ptr[p + 1] = static_cast<std::ptrdiff_t>(a.cols.size());
        }
    }
    return lap;
}

AlphaSolveResult solve_alpha(const MattingLaplacian& L, const Trimap2D& trimap,
                             const MatteParams& params) {
    check_params(params);
    if (trimap.width != L.width || trimap.height != L.height)
        throw usage_error("solve_alpha: trimap dimensions do not match the Laplacian");

    const int n = L.n();
    std::vector<double> diag_shift(n, 0.0), b(n, 0.0), x(n, 0.0);
    long long constrained = 0;
    for (int p = 0; p < n; ++p) {
        const TriLabel l = trimap.labels[p];
        if (l == TriLabel::Unknown) continue;
        ++constrained;
        diag_shift[p] = params.lambda;
        if (l == TriLabel::Foreground) b[p] = params.lambda;
    }
    if (constrained == 0)
        throw usage_error("solve_alpha: infeasible trimap, no constrained pixels");

    // Start from the constraint values; exact already for all-known trimaps.
    for (int p = 0; p < n; ++p)
        x[p] = trimap.labels[p] == TriLabel::Foreground ? 1.0 : 0.0;

    const CgResult cg = cg_solve(L.m, diag_shift, b, x, params.solver_tol,
                                 params.solver_max_iter);
    if (!cg.converged)
        throw numeric_error("solve_alpha: CG stalled at relative residual " +
                            std::to_string(cg.relative_residual) + " after " +
                            std::to_string(cg.iterations) + " iterations");

    AlphaSolveResult res;
    res.raw = x;
    res.iterations = cg.iterations;
    res.relative_residual = cg.relative_residual;
    res.matte.width = L.width;
    res.matte.height = L.height;
    res.matte.alpha.resize(n);
    double lo = x.empty() ? 0.0 : x[0], hi = lo, dev = 0.0;
    for (int p = 0; p < n; ++p) {
        lo = std::min(lo, x[p]);
        hi = std::max(hi, x[p]);
        if (trimap.labels[p] != TriLabel::Unknown) {
            const double target = trimap.labels[p] == TriLabel::Foreground ? 1.0 : 0.0;
            dev = std::max(dev, std::abs(x[p] - target));
        }
        res.matte.alpha[p] = std::clamp(x[p], 0.0, 1.0);
    }
    res.pre_clamp_min = lo;
    res.pre_clamp_max = hi;
    res.max_constraint_deviation = dev;
    return res;
}

BinaryMask2D alpha_to_mask(const AlphaMatte2D& alpha, double threshold) {
    if (threshold <= 0.0 || threshold >= 1.0)
        throw usage_error("alpha_to_mask: threshold must lie in (0,1)");
    BinaryMask2D mask(alpha.width, alpha.height);
    for (size_t p = 0; p < alpha.alpha.size(); ++p)
        mask.bits[p] = alpha.alpha[p] > threshold ? 1 : 0;
    return mask;
}

int ProbSliceStack::argmax(int x, int y) const {
    int best = 0;
    double best_v = at(0, x, y);
    for (int c = 1; c < class_count; ++c) {
        const double v = at(c, x, y);
        if (v > best_v) {
            best_v = v;
            best = c;
        }
    }
    return best;
}

namespace {

void check_stack(const ProbSliceStack& s, const GrayImage2D& img, const char* name) {
    if (s.width != img.width || s.height != img.height)
        throw usage_error(std::string("matte_slice_multiclass: ") + name +
                          " dimensions do not match the image");
    for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x) {
            double sum = 0.0;
            for (int c = 0; c < s.class_count; ++c) sum += s.at(c, x, y);
            if (std::abs(sum - 1.0) > 1e-5)
                throw usage_error(std::string("matte_slice_multiclass: ") + name +
                                  " probabilities do not sum to 1");
        }
}

}  // namespace

LabelSlice matte_slice_multiclass(const GrayImage2D& img, const ProbSliceStack& probs_source,
                                  const ProbSliceStack& probs_lowrank,
                                  const MatteParams& params, SliceMatteStats* stats,
                                  std::vector<Trimap2D>* trimaps_out,
                                  std::vector<AlphaMatte2D>* alphas_out) {
    if (probs_source.class_count != probs_lowrank.class_count)
        throw usage_error("matte_slice_multiclass: class counts differ");
    if (probs_source.class_count < 2)
        throw usage_error("matte_slice_multiclass: need at least 2 classes");
    check_stack(probs_source, img, "probs_source");
    check_stack(probs_lowrank, img, "probs_lowrank");

    const int W = img.width, H = img.height, C = probs_source.class_count;
    const size_t npx = static_cast<size_t>(W) * H;

    BinaryMask2D arg_s(W, H), arg_t(W, H);
    std::vector<int> amax_s(npx), amax_t(npx);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            amax_s[x + static_cast<size_t>(W) * y] = probs_source.argmax(x, y);
            amax_t[x + static_cast<size_t>(W) * y] = probs_lowrank.argmax(x, y);
        }

    SliceMatteStats st;
    MattingLaplacian lap;  // built on first use, shared by all classes
    bool have_lap = false;

    std::vector<std::vector<double>> alphas(C - 1);
    for (int c = 1; c < C; ++c) {
        for (size_t p = 0; p < npx; ++p) {
            arg_s.bits[p] = amax_s[p] == c ? 1 : 0;
            arg_t.bits[p] = amax_t[p] == c ? 1 : 0;
        }
        Trimap2D tri = generate_trimap(arg_s, arg_t);
        if (trimaps_out) trimaps_out->push_back(tri);
        const size_t unknown = tri.count(TriLabel::Unknown);
        st.unknown_pixels += static_cast<long long>(unknown);

        std::vector<double>& a = alphas[c - 1];
        a.resize(npx);
        if (unknown == 0) {
            // Paths agree everywhere; the system degenerates to the constraints.
            for (size_t p = 0; p < npx; ++p)
                a[p] = tri.labels[p] == TriLabel::Foreground ? 1.0 : 0.0;
            if (alphas_out) {
                AlphaMatte2D m(W, H);
                m.alpha = a;
                alphas_out->push_back(std::move(m));
            }
            continue;
        }
        if (!have_lap) {
            lap = build_laplacian(img, params);
            have_lap = true;
        }
        AlphaSolveResult sol = solve_alpha(lap, tri, params);
        a = sol.matte.alpha;
        st.pre_clamp_min = std::min(st.pre_clamp_min, sol.pre_clamp_min);
        st.pre_clamp_max = std::max(st.pre_clamp_max, sol.pre_clamp_max);
        st.max_constraint_deviation =
            std::max(st.max_constraint_deviation, sol.max_constraint_deviation);
        st.solver_iterations += sol.iterations;
        if (alphas_out) alphas_out->push_back(std::move(sol.matte));
    }

    LabelSlice out(W, H);
    for (size_t p = 0; p < npx; ++p) {
        int label = 0;
        double best = params.alpha_threshold;
        for (int c = 1; c < C; ++c) {
            if (alphas[c - 1][p] > best) {  // strict: ties keep the lower class
                best = alphas[c - 1][p];
                label = c;
            }
        }
        out.labels[p] = static_cast<std::uint8_t>(label);
    }
    if (stats) *stats = st;
    return out;
}

GrayImage2D slice_image(const DenseTensor3& volume, int i3) {
    if (i3 < 0 || i3 >= volume.dims[2]) throw usage_error("slice_image: slice out of range");
    GrayImage2D img(volume.dims[0], volume.dims[1]);
    const size_t npx = img.size();
    std::copy_n(volume.data.begin() + static_cast<std::ptrdiff_t>(npx) * i3, npx,
                img.pixels.begin());
    return img;
}

ProbSliceStack slice_probs(const ProbVolume& probs, int i3) {
    if (i3 < 0 || i3 >= probs.dims[2]) throw usage_error("slice_probs: slice out of range");
    ProbSliceStack s(probs.dims[0], probs.dims[1], probs.class_count);
    const size_t npx = static_cast<size_t>(probs.dims[0]) * probs.dims[1];
    const size_t nvox = probs.voxels();
    for (int c = 0; c < probs.class_count; ++c)
        std::copy_n(probs.data.begin() + static_cast<std::ptrdiff_t>(nvox) * c +
                        static_cast<std::ptrdiff_t>(npx) * i3,
                    npx, s.values.begin() + static_cast<std::ptrdiff_t>(npx) * c);
    return s;
}

LabelVolume matte_volume(const DenseTensor3& volume, const ProbVolume& probs_source,
                         const ProbVolume& probs_lowrank, const MatteParams& params,
                         VolumeMatteStats* stats, VolumeMatteArtifacts* artifacts) {
    if (probs_source.dims != volume.dims || probs_lowrank.dims != volume.dims)
        throw usage_error("matte_volume: probability volumes must match the image volume");
    if (probs_source.class_count != probs_lowrank.class_count)
        throw usage_error("matte_volume: class counts differ");
    for (double v : volume.data)
        if (!(v >= 0.0 && v <= 1.0))
            throw usage_error("matte_volume: volume intensities must lie in [0,1]");

    const int I1 = volume.dims[0], I2 = volume.dims[1], I3 = volume.dims[2];
    const int C = probs_source.class_count;
    const size_t npx = static_cast<size_t>(I1) * I2;

    LabelVolume out(I1, I2, I3, C);
    if (artifacts) {
        artifacts->trimaps.assign(C - 1, LabelVolume(I1, I2, I3, 3));
        artifacts->alphas.assign(C - 1, DenseTensor3(I1, I2, I3));
    }
    VolumeMatteStats vstats;
    std::exception_ptr failure;

#pragma omp parallel num_threads(max_threads())
    {
        VolumeMatteStats local;
#pragma omp for schedule(dynamic) nowait
        for (int i3 = 0; i3 < I3; ++i3) {
            try {
                SliceMatteStats st;
                std::vector<Trimap2D> tris;
                std::vector<AlphaMatte2D> alphas;
                const LabelSlice ls = matte_slice_multiclass(
                    slice_image(volume, i3), slice_probs(probs_source, i3),
                    slice_probs(probs_lowrank, i3), params, &st,
                    artifacts ? &tris : nullptr, artifacts ? &alphas : nullptr);
                std::copy_n(ls.labels.begin(), npx,
                            out.labels.begin() + static_cast<std::ptrdiff_t>(npx) * i3);
                if (artifacts)
                    for (int c = 0; c + 1 < C; ++c) {
                        auto& tv = artifacts->trimaps[c].labels;
                        for (size_t p = 0; p < npx; ++p)
                            tv[npx * i3 + p] = static_cast<std::uint8_t>(tris[c].labels[p]);
                        std::copy_n(alphas[c].alpha.begin(), npx,
                                    artifacts->alphas[c].data.begin() +
                                        static_cast<std::ptrdiff_t>(npx) * i3);
                    }
                local.pre_clamp_min = std::min(local.pre_clamp_min, st.pre_clamp_min);
                local.pre_clamp_max = std::max(local.pre_clamp_max, st.pre_clamp_max);
                local.max_constraint_deviation =
                    std::max(local.max_constraint_deviation, st.max_constraint_deviation);
                local.solver_iterations += st.solver_iterations;
                local.unknown_pixels += st.unknown_pixels;
            } catch (...) {
#pragma omp critical(kneeseg_matte_err)
                if (!failure) failure = std::current_exception();
            }
        }
#pragma omp critical(kneeseg_matte_stats)
        {
            vstats.pre_clamp_min = std::min(vstats.pre_clamp_min, local.pre_clamp_min);
            vstats.pre_clamp_max = std::max(vstats.pre_clamp_max, local.pre_clamp_max);
            vstats.max_constraint_deviation =
                std::max(vstats.max_constraint_deviation, local.max_constraint_deviation);
            vstats.solver_iterations += local.solver_iterations;
            vstats.unknown_pixels += local.unknown_pixels;
        }
    }
    if (failure) std::rethrow_exception(failure);
    if (stats) *stats = vstats;
    return out;
}

}  // namespace kneeseg
