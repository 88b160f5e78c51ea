#include "adm/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace adm {

namespace {
constexpr double kSymTol = 1e-9;
constexpr int kMaxJacobiSweeps = 100;
}  // namespace

SymMatrix::SymMatrix(Mat m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw DimensionMismatchError("SymMatrix: not square");
    if (m_.rows() < 1) throw InvalidSpecError("SymMatrix: dim must be positive");
    if (!all_finite(m_)) throw NonFiniteError("SymMatrix: non-finite entry");
    for (int i = 0; i < m_.rows(); ++i)
        for (int j = i + 1; j < m_.cols(); ++j)
            if (std::abs(m_(i, j) - m_(j, i)) > kSymTol)
                throw InvalidSpecError("SymMatrix: asymmetry exceeds tolerance at (" +
                                       std::to_string(i) + "," + std::to_string(j) + ")");
}

SymMatrix SymMatrix::symmetrized(const Mat& m) {
    if (m.rows() != m.cols()) throw DimensionMismatchError("symmetrized: not square");
    Mat s(m.rows(), m.cols());
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) s(i, j) = 0.5 * (m(i, j) + m(j, i));
    return SymMatrix(std::move(s));
}

LowerTriangular::LowerTriangular(Mat m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols()) throw DimensionMismatchError("LowerTriangular: not square");
    if (m_.rows() < 1) throw InvalidSpecError("LowerTriangular: dim must be positive");
    for (int i = 0; i < m_.rows(); ++i) {
        if (!(m_(i, i) > 0.0))
            throw NotPositiveDefiniteError("LowerTriangular: non-positive diagonal");
        for (int j = i + 1; j < m_.cols(); ++j)
            if (m_(i, j) != 0.0)
                throw InvalidSpecError("LowerTriangular: non-zero strict upper entry");
    }
}

LowerTriangular cholesky(const SymMatrix& a) {
    const int n = a.dim();
    double max_diag = a(0, 0);
    for (int i = 1; i < n; ++i) max_diag = std::max(max_diag, a(i, i));
    const double pivot_floor = n * 1e-12 * max_diag;

    Mat l(n, n);
    for (int j = 0; j < n; ++j) {
        double pivot = a(j, j);
        for (int k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
        if (pivot <= pivot_floor)
            throw NotPositiveDefiniteError("cholesky: pivot " + std::to_string(pivot) +
                                           " at column " + std::to_string(j));
        const double ljj = std::sqrt(pivot);
        l(j, j) = ljj;
        for (int i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }
    return LowerTriangular(std::move(l));
}

double log_det(const LowerTriangular& l) {
    double s = 0.0;
    for (int i = 0; i < l.dim(); ++i) s += std::log(l(i, i));
    return 2.0 * s;
}

Vec spd_solve(const LowerTriangular& l, const Vec& b) {
    const int n = l.dim();
    if (static_cast<int>(b.size()) != n)
        throw DimensionMismatchError("spd_solve: rhs length != dim");
    // forward: L y = b
    Vec y(n);
    for (int i = 0; i < n; ++i) {
        double s = b[i];
        for (int k = 0; k < i; ++k) s -= l(i, k) * y[k];
        y[i] = s / l(i, i);
    }
    // backward: L^T x = y
    Vec x(n);
    for (int i = n - 1; i >= 0; --i) {
        double s = y[i];
        for (int k = i + 1; k < n; ++k) s -= l(k, i) * x[k];
        x[i] = s / l(i, i);
    }
    return x;
}

Mat spd_solve(const LowerTriangular& l, const Mat& b) {
    const int n = l.dim();
    if (b.rows() != n) throw DimensionMismatchError("spd_solve: rhs rows != dim");
    Mat x(n, b.cols());
    Vec col(n);
    for (int j = 0; j < b.cols(); ++j) {
        for (int i = 0; i < n; ++i) col[i] = b(i, j);
        Vec sol = spd_solve(l, col);
        for (int i = 0; i < n; ++i) x(i, j) = sol[i];
    }
    return x;
}

double trace_solve(const LowerTriangular& l, const SymMatrix& b) {
    if (b.dim() != l.dim()) throw DimensionMismatchError("trace_solve: dims differ");
    return trace(spd_solve(l, b.mat()));
}

EighResult eigh(const SymMatrix& input) {
    const int n = input.dim();
    Mat a = input.mat();
    Mat v = Mat::identity(n);

    auto off_diag_sq = [&]() {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) s += 2.0 * a(i, j) * a(i, j);
        return s;
    };

    const double total_sq = [&]() {
        double s = 0.0;
        for (double x : a.data()) s += x * x;
        return s;
    }();
    const double stop = 1e-28 * (1.0 + total_sq);

    bool converged = off_diag_sq() <= stop;
    for (int sweep = 0; sweep < kMaxJacobiSweeps && !converged; ++sweep) {
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (tau >= 0.0) ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                              : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;

                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
        converged = off_diag_sq() <= stop;
    }
    if (!converged) throw NoConvergenceError("eigh: Jacobi sweep cap exceeded");

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int i, int j) { return a(i, i) < a(j, j); });

    EighResult r;
    r.eigenvalues.resize(n);
    r.eigenvectors = Mat(n, n);
    for (int j = 0; j < n; ++j) {
        r.eigenvalues[j] = a(order[j], order[j]);
        for (int i = 0; i < n; ++i) r.eigenvectors(i, j) = v(i, order[j]);
    }
    return r;
}

SymMatrix sqrtm_psd(const SymMatrix& a) {
    EighResult e = eigh(a);
    const double band = 1e-10 * a.frobenius_norm();
    Vec roots(e.eigenvalues.size());
    for (size_t i = 0; i < e.eigenvalues.size(); ++i) {
        double lam = e.eigenvalues[i];
        if (lam < -band)
            throw NotPsdError("sqrtm_psd: eigenvalue " + std::to_string(lam) +
                              " below clamp band");
        roots[i] = std::sqrt(std::max(lam, 0.0));
    }
    // V diag(sqrt(lam)) V^T
    const int n = a.dim();
    Mat scaled(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) scaled(i, j) = e.eigenvectors(i, j) * roots[j];
    Mat r = matmul(scaled, transpose(e.eigenvectors));
    return SymMatrix::symmetrized(r);
}

}  // namespace adm
