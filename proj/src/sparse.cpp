#include "kneeseg/sparse.hpp"

#include <algorithm>
#include <cmath>

#include "kneeseg/errors.hpp"
#include "kneeseg/threading.hpp"

namespace kneeseg {

double CsrMatrix::at(int i, int j) const {
    const auto b = cols.begin() + row_ptr[i];
    const auto e = cols.begin() + row_ptr[i + 1];
    const auto it = std::lower_bound(b, e, j);
    if (it == e || *it != j) return 0.0;
    return vals[static_cast<size_t>(it - cols.begin())];
}

void spmv(const CsrMatrix& a, const std::vector<double>& x, std::vector<double>& y) {
    y.resize(a.n);
#pragma omp parallel for schedule(static) num_threads(max_threads())
    for (int i = 0; i < a.n; ++i) {
        double s = 0.0;
        for (std::ptrdiff_t k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k)
            s += a.vals[k] * x[a.cols[k]];
        y[i] = s;
    }
}

namespace {

// Serial dot: CG scalars must not depend on the thread count.
double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace

CgResult cg_solve(const CsrMatrix& a, const std::vector<double>& diag_shift,
                  const std::vector<double>& b, std::vector<double>& x,
                  double tol, int max_iter) {
    const int n = a.n;
    if (static_cast<int>(b.size()) != n || static_cast<int>(diag_shift.size()) != n)
        throw usage_error("cg_solve: size mismatch");
    x.resize(n, 0.0);

    std::vector<double> inv_diag(n);
    for (int i = 0; i < n; ++i) {
        double d = a.at(i, i) + diag_shift[i];
        inv_diag[i] = d > 0.0 ? 1.0 / d : 1.0;
    }

    const double b_norm = norm2(b);
    CgResult res;
    if (b_norm == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        res.converged = true;
        return res;
    }

    std::vector<double> r(n), z(n), p(n), q(n);
    spmv(a, x, q);
    for (int i = 0; i < n; ++i) r[i] = b[i] - (q[i] + diag_shift[i] * x[i]);

    for (int i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    p = z;
    double rho = dot(r, z);
    double r_norm = norm2(r);

    int it = 0;
    while (r_norm > tol * b_norm && it < max_iter) {
        spmv(a, p, q);
        for (int i = 0; i < n; ++i) q[i] += diag_shift[i] * p[i];
        const double alpha = rho / dot(p, q);
        for (int i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        for (int i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
        const double rho_next = dot(r, z);
        const double beta = rho_next / rho;
        rho = rho_next;
        for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
        r_norm = norm2(r);
        ++it;
    }

    res.iterations = it;
    res.relative_residual = r_norm / b_norm;
    res.converged = r_norm <= tol * b_norm;
    return res;
}

}  // namespace kneeseg
