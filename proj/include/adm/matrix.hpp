#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "adm/errors.hpp"

namespace adm {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles. Deliberately minimal; only the
/// operations the measure pipeline needs.
class Mat {
public:
    Mat() = default;
    Mat(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {
        if (rows < 0 || cols < 0) throw InvalidSpecError("Mat: negative dimensions");
    }

    static Mat identity(int n) {
        Mat m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    double operator()(int i, int j) const { return data_[static_cast<size_t>(i) * cols_ + j]; }
    double& operator()(int i, int j) { return data_[static_cast<size_t>(i) * cols_ + j]; }

    const double* row(int i) const { return data_.data() + static_cast<size_t>(i) * cols_; }
    double* row(int i) { return data_.data() + static_cast<size_t>(i) * cols_; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

inline Mat transpose(const Mat& a) {
    Mat t(a.cols(), a.rows());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

inline Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols() != b.rows()) throw DimensionMismatchError("matmul: inner dimensions differ");
    Mat c(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        for (int k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.row(k);
            double* crow = c.row(i);
            for (int j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

inline Vec matvec(const Mat& a, const Vec& x) {
    if (a.cols() != static_cast<int>(x.size()))
        throw DimensionMismatchError("matvec: dimensions differ");
    Vec y(a.rows(), 0.0);
    for (int i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        const double* arow = a.row(i);
        for (int j = 0; j < a.cols(); ++j) s += arow[j] * x[j];
        y[i] = s;
    }
    return y;
}

inline double trace(const Mat& a) {
    double t = 0.0;
    for (int i = 0; i < a.rows() && i < a.cols(); ++i) t += a(i, i);
    return t;
}

inline double frobenius_norm(const Mat& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

inline bool all_finite(const Mat& a) {
    for (double v : a.data())
        if (!std::isfinite(v)) return false;
    return true;
}

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw DimensionMismatchError("dot: lengths differ");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2_sq(const Vec& a) { return dot(a, a); }

inline Vec vsub(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw DimensionMismatchError("vsub: lengths differ");
    Vec r(a.size());
    for (size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

/// Compensated (Kahan) accumulator; keeps reductions stable under
/// permutations of the input order.
struct KahanSum {
    double sum = 0.0;
    double comp = 0.0;

    void add(double x) {
        double y = x - comp;
        double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    double value() const { return sum; }
};

}  // namespace adm
