#pragma once

#include "adm/matrix.hpp"

namespace adm {

/// Symmetric real matrix. Construction checks symmetry (absolute tolerance
/// 1e-9) and finiteness; instances are immutable afterwards.
class SymMatrix {
public:
    explicit SymMatrix(Mat m);

    static SymMatrix identity(int dim) { return SymMatrix(Mat::identity(dim)); }

    /// Wrap (m + m^T)/2. For products that are symmetric in exact arithmetic
    /// but carry roundoff skew.
    static SymMatrix symmetrized(const Mat& m);

    int dim() const { return m_.rows(); }
    double operator()(int i, int j) const { return m_(i, j); }
    const Mat& mat() const { return m_; }

    double trace() const { return adm::trace(m_); }
    double frobenius_norm() const { return adm::frobenius_norm(m_); }

private:
    Mat m_;
};

/// Lower-triangular Cholesky factor: strictly-upper entries zero, diagonal
/// strictly positive.
class LowerTriangular {
public:
    explicit LowerTriangular(Mat m);

    int dim() const { return m_.rows(); }
    double operator()(int i, int j) const { return m_(i, j); }
    const Mat& mat() const { return m_; }

private:
    Mat m_;
};

/// Cholesky factorization a = L L^T. Throws NotPositiveDefiniteError when a
/// pivot falls at or below dim * 1e-12 * max(diag(a)); callers are expected
/// to regularize and retry.
LowerTriangular cholesky(const SymMatrix& a);

/// 2 * sum_i ln L(i,i) == ln det(L L^T).
double log_det(const LowerTriangular& l);

/// Solve (L L^T) x = b.
Vec spd_solve(const LowerTriangular& l, const Vec& b);
Mat spd_solve(const LowerTriangular& l, const Mat& b);

/// trace((L L^T)^{-1} b).
double trace_solve(const LowerTriangular& l, const SymMatrix& b);

struct EighResult {
    Vec eigenvalues;   // ascending
    Mat eigenvectors;  // orthonormal columns, column j pairs with eigenvalues[j]
};

/// Symmetric eigendecomposition by cyclic Jacobi rotations. Throws
/// NoConvergenceError after 100 sweeps (does not happen for well-formed
/// input at the dimensions this library targets).
EighResult eigh(const SymMatrix& a);

/// Principal PSD square root via eigh. Eigenvalues in [-1e-10 * ||a||_F, 0)
/// are clamped to zero; anything below that band throws NotPsdError.
SymMatrix sqrtm_psd(const SymMatrix& a);

}  // namespace adm
