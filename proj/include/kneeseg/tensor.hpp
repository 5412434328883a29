#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

namespace kneeseg {

/// Dense 3-mode tensor of doubles. Storage order is i1-fastest:
/// flat index = i1 + I1*(i2 + I2*i3), matching the on-disk KVOL layout.
struct DenseTensor3 {
    std::array<int, 3> dims{0, 0, 0};
    std::vector<double> data;

    DenseTensor3() = default;
    DenseTensor3(int i1, int i2, int i3, double fill = 0.0)
        : dims{i1, i2, i3},
          data(static_cast<size_t>(i1) * i2 * i3, fill) {}

    std::size_t size() const { return data.size(); }

    double& at(int i1, int i2, int i3) {
        return data[static_cast<size_t>(i1) +
                    static_cast<size_t>(dims[0]) * (i2 + static_cast<size_t>(dims[1]) * i3)];
    }
    double at(int i1, int i2, int i3) const {
        return data[static_cast<size_t>(i1) +
                    static_cast<size_t>(dims[0]) * (i2 + static_cast<size_t>(dims[1]) * i3)];
    }

    double frobenius_norm() const;

    /// True when every element is finite and the length matches the dims.
    bool valid() const;
};

/// Mode-n unfolding, modes numbered 1..3. Rows index the unfolded mode;
/// among the remaining modes the lower-numbered one varies fastest along
/// the columns (Kolda-Bader ordering).
Eigen::MatrixXd unfold(const DenseTensor3& t, int mode);

/// Inverse of unfold under the same column ordering.
DenseTensor3 fold(const Eigen::MatrixXd& m, int mode, const std::array<int, 3>& dims);

/// Tensor-times-matrix along `mode`: result = fold(m * unfold(t, mode)).
/// m must have as many columns as t has entries along `mode`.
DenseTensor3 mode_product(const DenseTensor3& t, const Eigen::MatrixXd& m, int mode);

}  // namespace kneeseg
