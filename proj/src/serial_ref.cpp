#include "kneeseg/serial_ref.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "kneeseg/errors.hpp"

namespace kneeseg::serial {

DenseTensor3 blockwise_lowrank(const DenseTensor3& volume, const LowRankConfig& cfg) {
    if (cfg.block_depth < 1) throw usage_error("block_depth must be >= 1");
    const int I1 = volume.dims[0], I2 = volume.dims[1], S = volume.dims[2];
    const size_t slice_px = static_cast<size_t>(I1) * I2;

    DenseTensor3 out(I1, I2, S);
    for (const auto& [begin, end] : slice_blocks(S, cfg.block_depth)) {
        const int depth = end - begin;
        DenseTensor3 block(I1, I2, depth);
        std::copy_n(volume.data.begin() + static_cast<std::ptrdiff_t>(begin) * slice_px,
                    slice_px * depth, block.data.begin());
        TuckerRank ranks{I1, I2, std::min(cfg.slice_rank, depth)};
        DenseTensor3 rec = tucker_reconstruct(hooi(block, ranks, cfg).tucker);
        std::copy_n(rec.data.begin(), slice_px * depth,
                    out.data.begin() + static_cast<std::ptrdiff_t>(begin) * slice_px);
    }
    return out;
}

void spmv(const CsrMatrix& a, const std::vector<double>& x, std::vector<double>& y) {
    y.resize(a.n);
    for (int i = 0; i < a.n; ++i) {
        double s = 0.0;
        for (std::ptrdiff_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k)
            s += a.vals[k] * x[a.cols[k]];
        y[i] = s;
    }
}

MattingLaplacian build_laplacian(const GrayImage2D& img, const MatteParams& params) {
    const int W = img.width, H = img.height, r = params.window_radius;
    const int win = 2 * r + 1;
    if (r < 1) throw usage_error("window_radius must be >= 1");
    if (params.eps <= 0.0) throw usage_error("eps must be > 0");
    if (W < win || H < win) throw usage_error("build_laplacian: image smaller than the window");

    const int wn = win * win;
    const double inv_wn = 1.0 / wn;

    // Scatter form: walk the windows, accumulate each unordered pair once.
    std::map<std::pair<int, int>, double> w;
    for (int cy = r; cy <= H - 1 - r; ++cy)
        for (int cx = r; cx <= W - 1 - r; ++cx) {
            double s = 0.0, s2 = 0.0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const double v = img.at(cx + dx, cy + dy);
                    s += v;
                    s2 += v * v;
                }
            const double mu = s * inv_wn;
            const double inv_var = 1.0 / (s2 * inv_wn - mu * mu + params.eps * inv_wn);

            for (int ay = -r; ay <= r; ++ay)
                for (int ax = -r; ax <= r; ++ax) {
                    const int i = (cx + ax) + W * (cy + ay);
                    const double di = img.pixels[i] - mu;
                    for (int by = -r; by <= r; ++by)
                        for (int bx = -r; bx <= r; ++bx) {
                            const int j = (cx + bx) + W * (cy + by);
                            if (j <= i) continue;
                            const double dj = img.pixels[j] - mu;
                            w[{i, j}] += inv_wn * (1.0 + di * dj * inv_var);
                        }
                }
        }

    const int n = W * H;
    std::vector<std::map<int, double>> rows(n);
    for (const auto& [pair, val] : w) {
        rows[pair.first][pair.second] = -val;
        rows[pair.second][pair.first] = -val;
    }
    MattingLaplacian lap;
    lap.width = W;
    lap.height = H;
    lap.m.n = n;
    lap.m.row_ptr.assign(n + 1, 0);
    for (int i = 0; i < n; ++i) {
        double diag = 0.0;
        for (const auto& [j, val] : rows[i]) diag -= val;
        rows[i][i] = diag;
        for (const auto& [j, val] : rows[i]) {
            lap.m.cols.push_back(j);
            lap.m.vals.push_back(val);
        }
        lap.m.row_ptr[i + 1] = static_cast<std::ptrdiff_t>(lap.m.cols.size());
    }
    return lap;
}

LabelVolume matte_volume(const DenseTensor3& volume, const ProbVolume& probs_source,
                         const ProbVolume& probs_lowrank, const MatteParams& params) {
    if (probs_source.dims != volume.dims || probs_lowrank.dims != volume.dims)
        throw usage_error("matte_volume: probability volumes must match the image volume");
    const int I1 = volume.dims[0], I2 = volume.dims[1], I3 = volume.dims[2];
    const size_t npx = static_cast<size_t>(I1) * I2;
    LabelVolume out(I1, I2, I3, probs_source.class_count);
    for (int i3 = 0; i3 < I3; ++i3) {
        const LabelSlice ls =
            matte_slice_multiclass(slice_image(volume, i3), slice_probs(probs_source, i3),
                                   slice_probs(probs_lowrank, i3), params);
        std::copy_n(ls.labels.begin(), npx,
                    out.labels.begin() + static_cast<std::ptrdiff_t>(npx) * i3);
    }
    return out;
}

MetricsReport evaluate(const LabelVolume& pred, const LabelVolume& ref) {
    if (pred.dims != ref.dims) throw usage_error("evaluate: volume dims differ");
    if (pred.class_count != ref.class_count) throw usage_error("evaluate: class counts differ");
    const int C = pred.class_count;
    std::vector<long long> a(C, 0), b(C, 0), both(C, 0);
    for (size_t v = 0; v < pred.size(); ++v) {
        const int pc = pred.labels[v];
        const int rc = ref.labels[v];
        if (pc >= C || rc >= C) throw usage_error("evaluate: label id out of range");
        ++a[pc];
        ++b[rc];
        if (pc == rc) ++both[pc];
    }
    MetricsReport rep;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    double sd = 0, sp = 0, sr = 0, sv = 0, svd = 0;
    int vd_defined = 0;
    for (int c = 1; c < C; ++c) {
        ClassMetrics m;
        m.class_id = c;
        m.pred_voxels = a[c];
        m.ref_voxels = b[c];
        m.intersection = both[c];
        if (a[c] == 0 && b[c] == 0) {
            m.dice = m.precision = m.recall = 1.0;
        } else {
            m.dice = 2.0 * both[c] / static_cast<double>(a[c] + b[c]);
            m.precision = a[c] == 0 ? 0.0 : both[c] / static_cast<double>(a[c]);
            m.recall = b[c] == 0 ? 0.0 : both[c] / static_cast<double>(b[c]);
            m.voe_percent = 100.0 * (1.0 - both[c] / static_cast<double>(a[c] + b[c] - both[c]));
            m.vd_percent = b[c] == 0 ? nan : 100.0 * (a[c] - b[c]) / static_cast<double>(b[c]);
        }
        sd += m.dice;
        sp += m.precision;
        sr += m.recall;
        sv += m.voe_percent;
        if (!std::isnan(m.vd_percent)) {
            svd += m.vd_percent;
            ++vd_defined;
        }
        rep.per_class.push_back(m);
    }
    rep.mean_dice = sd / (C - 1);
    rep.mean_precision = sp / (C - 1);
    rep.mean_recall = sr / (C - 1);
    rep.mean_voe_percent = sv / (C - 1);
    rep.mean_vd_percent = vd_defined > 0 ? svd / vd_defined : nan;
    return rep;
}

double wce_loss(const ProbVolume& probs, const LabelVolume& labels,
                const ClassWeights& weights) {
    if (probs.dims != labels.dims) throw usage_error("wce_loss: volume dims differ");
    for (std::uint8_t l : labels.labels)
        if (l >= labels.class_count) throw usage_error("wce_loss: label id out of range");
    const size_t n = probs.voxels();
    // Kahan compensation; the parallel version must agree to 1e-9.
    double sum = 0.0, comp = 0.0;
    for (size_t v = 0; v < n; ++v) {
        const int t = labels.labels[v];
        const double p = std::max(probs.data[v + n * t], 1e-12);
        const double term = -std::log(p) * weights.w[t] - comp;
        const double next = sum + term;
        comp = (next - sum) - term;
        sum = next;
    }
    return sum / static_cast<double>(n);
}

}  // namespace kneeseg::serial
