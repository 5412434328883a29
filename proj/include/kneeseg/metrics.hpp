#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace kneeseg {

/// Per-voxel class ids; class 0 is background. Same i1-fastest layout as
/// DenseTensor3.
struct LabelVolume {
    std::array<int, 3> dims{0, 0, 0};
    int class_count = 2;
    std::vector<std::uint8_t> labels;

    LabelVolume() = default;
    LabelVolume(int i1, int i2, int i3, int classes)
        : dims{i1, i2, i3}, class_count(classes),
          labels(static_cast<size_t>(i1) * i2 * i3, 0) {}

    std::uint8_t at(int i1, int i2, int i3) const {
        return labels[static_cast<size_t>(i1) +
                      static_cast<size_t>(dims[0]) * (i2 + static_cast<size_t>(dims[1]) * i3)];
    }
    std::uint8_t& at(int i1, int i2, int i3) {
        return labels[static_cast<size_t>(i1) +
                      static_cast<size_t>(dims[0]) * (i2 + static_cast<size_t>(dims[1]) * i3)];
    }
    std::size_t size() const { return labels.size(); }
};

/// Per-voxel class probabilities, class varying slowest:
/// value = data[i1 + I1*(i2 + I2*(i3 + I3*c))].
struct ProbVolume {
    std::array<int, 3> dims{0, 0, 0};
    int class_count = 2;
    std::vector<double> data;

    ProbVolume() = default;
    ProbVolume(int i1, int i2, int i3, int classes)
        : dims{i1, i2, i3}, class_count(classes),
          data(static_cast<size_t>(i1) * i2 * i3 * classes, 0.0) {}

    std::size_t voxels() const {
        return static_cast<size_t>(dims[0]) * dims[1] * dims[2];
    }
    double at(int c, int i1, int i2, int i3) const {
        return data[static_cast<size_t>(i1) +
                    static_cast<size_t>(dims[0]) *
                        (i2 + static_cast<size_t>(dims[1]) *
                                  (i3 + static_cast<size_t>(dims[2]) * c))];
    }
    double& at(int c, int i1, int i2, int i3) {
        return data[static_cast<size_t>(i1) +
                    static_cast<size_t>(dims[0]) *
                        (i2 + static_cast<size_t>(dims[1]) *
                                  (i3 + static_cast<size_t>(dims[2]) * c))];
    }

    /// argmax over classes at one voxel; ties go to the lowest class.
    int argmax(int i1, int i2, int i3) const;

    /// Collapse to per-voxel argmax labels.
    LabelVolume argmax_labels() const;
};

struct ClassWeights {
    std::vector<double> w;  // one positive weight per class
};

struct ClassMetrics {
    int class_id = 0;
    long long pred_voxels = 0;   // |A|
    long long ref_voxels = 0;    // |B|
    long long intersection = 0;  // |A n B|
    double dice = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double voe_percent = 0.0;
    double vd_percent = 0.0;  // signed; NaN when the reference class is empty
};

struct MetricsReport {
    std::vector<ClassMetrics> per_class;  // foreground classes 1..C-1
    double mean_dice = 0.0;
    double mean_precision = 0.0;
    double mean_recall = 0.0;
    double mean_voe_percent = 0.0;
    double mean_vd_percent = 0.0;  // over classes where vd is defined
};

/// Voxel-overlap metrics per foreground class.
/// Empty-set conventions: both sets empty -> dice/precision/recall 1,
/// voe 0, vd 0; exactly one empty -> dice 0, voe 100, and vd is NaN when
/// the reference is the empty one.
MetricsReport evaluate(const LabelVolume& pred, const LabelVolume& ref);

/// Mean weighted negative log-likelihood of the true class:
/// (1/N) * sum_x -log(max(p_t(x), 1e-12)) * w(t(x)).
/// The reduction is chunked in a fixed order, so the result does not
/// depend on the thread count.
double wce_loss(const ProbVolume& probs, const LabelVolume& labels, const ClassWeights& weights);

/// One "class<TAB>metric<TAB>value" row per entry, means last under the
/// pseudo-class "mean". Values printed with 9 decimals; undefined vd as
/// "nan".
std::string serialize_report(const MetricsReport& report);

}  // namespace kneeseg
