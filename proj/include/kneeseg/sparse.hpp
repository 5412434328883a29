#pragma once

#include <cstddef>
#include <vector>

namespace kneeseg {

/// Compressed-sparse-row matrix. Column indices are strictly increasing
/// within each row.
struct CsrMatrix {
    int n = 0;
    std::vector<std::ptrdiff_t> row_ptr;  // size n+1
    std::vector<int> cols;
    std::vector<double> vals;

    double at(int i, int j) const;  // 0 when absent; binary search per row
};

/// y = A*x, rows computed independently (parallel, bit-identical for any
/// thread count).
void spmv(const CsrMatrix& a, const std::vector<double>& x, std::vector<double>& y);

struct CgResult {
    int iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
};

/// Jacobi-preconditioned conjugate gradient for SPD systems.
/// `diag_shift` adds a per-row diagonal term without touching the CSR
/// storage (the solve operates on A + diag(diag_shift)). Stops at
/// ||b - Ax|| <= tol*||b||; a zero rhs converges to x unchanged-residual
/// semantics immediately.
CgResult cg_solve(const CsrMatrix& a, const std::vector<double>& diag_shift,
                  const std::vector<double>& b, std::vector<double>& x,
                  double tol, int max_iter);

}  // namespace kneeseg
