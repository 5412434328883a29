#include "kneeseg/tensor.hpp"

#include <cmath>

#include "kneeseg/errors.hpp"

namespace kneeseg {

double DenseTensor3::frobenius_norm() const {
    double s = 0.0;
    for (double v : data) s += v * v;
    return std::sqrt(s);
}

bool DenseTensor3::valid() const {
    if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0) return false;
    if (data.size() != static_cast<size_t>(dims[0]) * dims[1] * dims[2]) return false;
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

namespace {

void check_mode(int mode) {
    if (mode < 1 || mode > 3) throw usage_error("tensor mode must be 1, 2 or 3");
}

}  // namespace

Eigen::MatrixXd unfold(const DenseTensor3& t, int mode) {
    check_mode(mode);
    const int I1 = t.dims[0], I2 = t.dims[1], I3 = t.dims[2];
    Eigen::MatrixXd m;
    switch (mode) {
        case 1:
            // Column index i2 + I2*i3; contiguous with the flat layout.
            m.resize(I1, static_cast<Eigen::Index>(I2) * I3);
            for (int i3 = 0; i3 < I3; ++i3)
                for (int i2 = 0; i2 < I2; ++i2)
                    for (int i1 = 0; i1 < I1; ++i1)
                        m(i1, i2 + static_cast<Eigen::Index>(I2) * i3) = t.at(i1, i2, i3);
            break;
        case 2:
            m.resize(I2, static_cast<Eigen::Index>(I1) * I3);
            for (int i3 = 0; i3 < I3; ++i3)
                for (int i2 = 0; i2 < I2; ++i2)
                    for (int i1 = 0; i1 < I1; ++i1)
                        m(i2, i1 + static_cast<Eigen::Index>(I1) * i3) = t.at(i1, i2, i3);
            break;
        default:
            m.resize(I3, static_cast<Eigen::Index>(I1) * I2);
            for (int i3 = 0; i3 < I3; ++i3)
                for (int i2 = 0; i2 < I2; ++i2)
                    for (int i1 = 0; i1 < I1; ++i1)
                        m(i3, i1 + static_cast<Eigen::Index>(I1) * i2) = t.at(i1, i2, i3);
            break;
    }
    return m;
}

DenseTensor3 fold(const Eigen::MatrixXd& m, int mode, const std::array<int, 3>& dims) {
    check_mode(mode);
    const int I1 = dims[0], I2 = dims[1], I3 = dims[2];
    if (I1 <= 0 || I2 <= 0 || I3 <= 0) throw usage_error("fold: dims must be positive");
    const Eigen::Index rows = dims[mode - 1];
    const Eigen::Index cols =
        static_cast<Eigen::Index>(I1) * I2 * I3 / dims[mode - 1];
    if (m.rows() != rows || m.cols() != cols)
        throw usage_error("fold: matrix shape inconsistent with dims and mode");

    DenseTensor3 t(I1, I2, I3);
    switch (mode) {
        case 1:
            for (int i3 = 0; i3 < I3; ++i3)
                for (int i2 = 0; i2 < I2; ++i2)
                    for (int i1 = 0; i1 < I1; ++i1)
                        t.at(i1, i2, i3) = m(i1, i2 + static_cast<Eigen::Index>(I2) * i3);
            break;
        case 2:
            for (int i3 = 0; i3 < I3; ++i3)
                for (int i2 = 0; i2 < I2; ++i2)
                    for (int i1 = 0; i1 < I1; ++i1)
                        t.at(i1, i2, i3) = m(i2, i1 + static_cast<Eigen::Index>(I1) * i3);
            break;
        default:
            for (int i3 = 0; i3 < I3; ++i3)
                for (int i2 = 0; i2 < I2; ++i2)
                    for (int i1 = 0; i1 < I1; ++i1)
                        t.at(i1, i2, i3) = m(i3, i1 + static_cast<Eigen::Index>(I1) * i2);
            break;
    }
    return t;
}

DenseTensor3 mode_product(const DenseTensor3& t, const Eigen::MatrixXd& m, int mode) {
    check_mode(mode);
    if (m.cols() != t.dims[mode - 1])
        throw usage_error("mode_product: matrix columns must match tensor dim of the mode");
    std::array<int, 3> out_dims = t.dims;
    out_dims[mode - 1] = static_cast<int>(m.rows());
    Eigen::MatrixXd prod = m * unfold(t, mode);
    return fold(prod, mode, out_dims);
}

}  // namespace kneeseg
