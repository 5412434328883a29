#include "kneeseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "kneeseg/errors.hpp"
#include "kneeseg/threading.hpp"

namespace kneeseg {

int ProbVolume::argmax(int i1, int i2, int i3) const {
    int best = 0;
    double best_v = at(0, i1, i2, i3);
    for (int c = 1; c < class_count; ++c) {
        const double v = at(c, i1, i2, i3);
        if (v > best_v) {
            best_v = v;
            best = c;
        }
    }
    return best;
}

LabelVolume ProbVolume::argmax_labels() const {
    LabelVolume out(dims[0], dims[1], dims[2], class_count);
    const size_t n = voxels();
#pragma omp parallel for schedule(static) num_threads(max_threads())
    for (std::ptrdiff_t v = 0; v < static_cast<std::ptrdiff_t>(n); ++v) {
        int best = 0;
        double best_v = data[v];
        for (int c = 1; c < class_count; ++c) {
            const double p = data[v + n * c];
            if (p > best_v) {
                best_v = p;
                best = c;
            }
        }
        out.labels[v] = static_cast<std::uint8_t>(best);
    }
    return out;
}

MetricsReport evaluate(const LabelVolume& pred, const LabelVolume& ref) {
    if (pred.dims != ref.dims) throw usage_error("evaluate: volume dims differ");
    if (pred.class_count != ref.class_count)
        throw usage_error("evaluate: class counts differ");
    const int C = pred.class_count;
    if (C < 2) throw usage_error("evaluate: need at least 2 classes");

    // Integer tallies; merged per thread, so the totals are exact for any
    // thread count.
    std::vector<long long> a(C, 0), b(C, 0), both(C, 0);
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(pred.size());
#pragma omp parallel num_threads(max_threads())
    {
        std::vector<long long> la(C, 0), lb(C, 0), lboth(C, 0);
#pragma omp for schedule(static) nowait
        for (std::ptrdiff_t v = 0; v < n; ++v) {
            const int pc = pred.labels[v];
            const int rc = ref.labels[v];
            if (pc >= C || rc >= C) continue;  // validated below
            ++la[pc];
            ++lb[rc];
            if (pc == rc) ++lboth[pc];
        }
#pragma omp critical(kneeseg_eval_merge)
        for (int c = 0; c < C; ++c) {
            a[c] += la[c];
            b[c] += lb[c];
            both[c] += lboth[c];
        }
    }
    long long tallied = 0;
    for (int c = 0; c < C; ++c) tallied += a[c];
    if (tallied != n) throw usage_error("evaluate: label id out of range");

    MetricsReport rep;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    double sum_dice = 0, sum_prec = 0, sum_rec = 0, sum_voe = 0, sum_vd = 0;
    int vd_defined = 0;
    for (int c = 1; c < C; ++c) {
        ClassMetrics m;
        m.class_id = c;
        m.pred_voxels = a[c];
        m.ref_voxels = b[c];
        m.intersection = both[c];
        const long long uni = a[c] + b[c] - both[c];
        if (a[c] == 0 && b[c] == 0) {
            m.dice = 1.0;
            m.precision = 1.0;
            m.recall = 1.0;
            m.voe_percent = 0.0;
            m.vd_percent = 0.0;
        } else {
            m.dice = 2.0 * both[c] / static_cast<double>(a[c] + b[c]);
            m.precision = a[c] == 0 ? 0.0 : both[c] / static_cast<double>(a[c]);
            m.recall = b[c] == 0 ? 0.0 : both[c] / static_cast<double>(b[c]);
            m.voe_percent = 100.0 * (1.0 - both[c] / static_cast<double>(uni));
            m.vd_percent = b[c] == 0 ? nan : 100.0 * (a[c] - b[c]) / static_cast<double>(b[c]);
        }
        sum_dice += m.dice;
        sum_prec += m.precision;
        sum_rec += m.recall;
        sum_voe += m.voe_percent;
        if (!std::isnan(m.vd_percent)) {
            sum_vd += m.vd_percent;
            ++vd_defined;
        }
        rep.per_class.push_back(m);
    }
    const int fg = C - 1;
    rep.mean_dice = sum_dice / fg;
    rep.mean_precision = sum_prec / fg;
    rep.mean_recall = sum_rec / fg;
    rep.mean_voe_percent = sum_voe / fg;
    rep.mean_vd_percent = vd_defined > 0 ? sum_vd / vd_defined : nan;
    return rep;
}

double wce_loss(const ProbVolume& probs, const LabelVolume& labels, const ClassWeights& weights) {
    if (probs.dims != labels.dims) throw usage_error("wce_loss: volume dims differ");
    if (probs.class_count != labels.class_count)
        throw usage_error("wce_loss: class counts differ");
    if (static_cast<int>(weights.w.size()) != probs.class_count)
        throw usage_error("wce_loss: weight count must equal class count");
    for (double w : weights.w)
        if (!(w > 0.0)) throw usage_error("wce_loss: weights must be positive");
    for (std::uint8_t l : labels.labels)
        if (l >= labels.class_count) throw usage_error("wce_loss: label id out of range");

    const size_t n = probs.voxels();
    constexpr size_t kChunk = 4096;  // fixed chunking keeps the sum order stable
    const size_t nchunks = (n + kChunk - 1) / kChunk;
    std::vector<double> partial(nchunks, 0.0);

#pragma omp parallel for schedule(static) num_threads(max_threads())
    for (std::ptrdiff_t ch = 0; ch < static_cast<std::ptrdiff_t>(nchunks); ++ch) {
        const size_t begin = ch * kChunk;
        const size_t end = std::min(begin + kChunk, n);
        double s = 0.0;
        for (size_t v = begin; v < end; ++v) {
            const int t = labels.labels[v];
            const double p = std::max(probs.data[v + n * t], 1e-12);
            s += -std::log(p) * weights.w[t];
        }
        partial[ch] = s;
    }
    double total = 0.0;
    for (double s : partial) total += s;
    return total / static_cast<double>(n);
}

namespace {

std::string fmt_value(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9f", v);
    return buf;
}

void append_row(std::string& out, const std::string& cls, const char* metric, double v) {
    out += cls;
    out += '\t';
    out += metric;
    out += '\t';
    out += fmt_value(v);
    out += '\n';
}

}  // namespace

std::string serialize_report(const MetricsReport& report) {
    std::string out;
    for (const ClassMetrics& m : report.per_class) {
        const std::string cls = std::to_string(m.class_id);
        append_row(out, cls, "dice", m.dice);
        append_row(out, cls, "precision", m.precision);
        append_row(out, cls, "recall", m.recall);
        append_row(out, cls, "voe_percent", m.voe_percent);
        append_row(out, cls, "vd_percent", m.vd_percent);
    }
    append_row(out, "mean", "dice", report.mean_dice);
    append_row(out, "mean", "precision", report.mean_precision);
    append_row(out, "mean", "recall", report.mean_recall);
    append_row(out, "mean", "voe_percent", report.mean_voe_percent);
    append_row(out, "mean", "vd_percent", report.mean_vd_percent);
    return out;
}

}  // namespace kneeseg
