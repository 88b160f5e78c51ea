#include "adm/measures.hpp"

#include <algorithm>
#include <cmath>

namespace adm {

namespace {

double clamp_nonnegative(double v, double band, const char* what) {
    if (v >= 0.0) return v;
    if (v >= -band) return 0.0;
    throw NumericalError(std::string(what) + ": negative result " + std::to_string(v));
}

void check_dims(const GaussianStats& q, const GaussianStats& s, const char* what) {
    if (q.dim() != s.dim()) throw DimensionMismatchError(std::string(what) + ": dims differ");
}

}  // namespace

MeasureKind parse_measure_kind(const std::string& name) {
    if (name == "kl") return MeasureKind::KL;
    if (name == "wass-approx") return MeasureKind::WassersteinApprox;
    if (name == "wass-exact") return MeasureKind::WassersteinExact;
    if (name == "i2c") return MeasureKind::I2C;
    throw InvalidSpecError("unknown measure: " + name);
}

std::string measure_kind_name(MeasureKind k) {
    switch (k) {
        case MeasureKind::KL: return "kl";
        case MeasureKind::WassersteinApprox: return "wass-approx";
        case MeasureKind::WassersteinExact: return "wass-exact";
        case MeasureKind::I2C: return "i2c";
    }
    return "?";
}

double kl_divergence(const GaussianStats& q, const GaussianStats& s) {
    check_dims(q, s, "kl_divergence");
    const int c = q.dim();
    const double trace_term = trace_solve(s.cov_factor, q.cov);
    const double log_det_term = s.log_det_cov - q.log_det_cov;
    const Vec delta = vsub(s.mean, q.mean);
    const double maha = dot(delta, spd_solve(s.cov_factor, delta));
    const double v = 0.5 * (trace_term + log_det_term + maha - c);
    return clamp_nonnegative(v, 1e-9, "kl_divergence");
}

double wasserstein2_approx(const GaussianStats& q, const GaussianStats& s) {
    check_dims(q, s, "wasserstein2_approx");
    double cov_term = 0.0;
    const int c = q.dim();
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < c; ++j) {
            const double d = q.cov(i, j) - s.cov(i, j);
            cov_term += d * d;
        }
    return norm2_sq(vsub(q.mean, s.mean)) + cov_term;
}

double wasserstein2_exact(const GaussianStats& q, const GaussianStats& s) {
    check_dims(q, s, "wasserstein2_exact");
    const SymMatrix root_q = sqrtm_psd(q.cov);
    const Mat inner = matmul(matmul(root_q.mat(), s.cov.mat()), root_q.mat());
    const SymMatrix cross = sqrtm_psd(SymMatrix::symmetrized(inner));
    const double trace_term = q.cov.trace() + s.cov.trace() - 2.0 * cross.trace();
    const double v = norm2_sq(vsub(q.mean, s.mean)) + trace_term;
    return clamp_nonnegative(v, 1e-8, "wasserstein2_exact");
}

namespace {

// Row-normalized copy; zero-norm rows become zero rows (their cosines vanish).
Mat normalize_rows(const Mat& m) {
    Mat out(m.rows(), m.cols());
    for (int i = 0; i < m.rows(); ++i) {
        const double* src = m.row(i);
        double nsq = 0.0;
        for (int j = 0; j < m.cols(); ++j) nsq += src[j] * src[j];
        double* dst = out.row(i);
        if (nsq > 0.0) {
            const double inv = 1.0 / std::sqrt(nsq);
            for (int j = 0; j < m.cols(); ++j) dst[j] = src[j] * inv;
        }
    }
    return out;
}

}  // namespace

I2cDetail i2c_similarity_detail(const Mat& query, const Mat& class_pool, int k) {
    if (query.cols() != class_pool.cols())
        throw DimensionMismatchError("i2c_similarity: dims differ");
    if (k < 1) throw InvalidSpecError("i2c_similarity: k must be >= 1");
    if (k > class_pool.rows())
        throw KTooLargeError("i2c_similarity: k exceeds class pool size");
    if (!all_finite(query) || !all_finite(class_pool))
        throw NonFiniteError("i2c_similarity: non-finite descriptor");

    const Mat qn = normalize_rows(query);
    const Mat pn = normalize_rows(class_pool);
    const int pool_n = pn.rows();

    I2cDetail out;
    out.selected.reserve(static_cast<size_t>(query.rows()) * k);
    std::vector<double> row_totals(qn.rows());
    std::vector<std::pair<double, int>> row(pool_n);
    for (int i = 0; i < qn.rows(); ++i) {
        const double* qrow = qn.row(i);
        for (int t = 0; t < pool_n; ++t) {
            const double* prow = pn.row(t);
            double cosv = 0.0;
            for (int j = 0; j < qn.cols(); ++j) cosv += qrow[j] * prow[j];
            row[t] = {cosv, t};
        }
        // k largest; ties resolved toward the lower pool index
        std::partial_sort(row.begin(), row.begin() + k, row.end(),
                          [](const auto& a, const auto& b) {
                              if (a.first != b.first) return a.first > b.first;
                              return a.second < b.second;
                          });
        double row_sum = 0.0;
        for (int t = 0; t < k; ++t) {
            row_sum += row[t].first;
            out.selected.push_back(row[t].second);
        }
        row_totals[i] = row_sum;
    }
    // Order-free reduction: summing sorted contributions makes the result
    // exactly invariant under row permutations of either argument.
    std::vector<double> sorted_totals = row_totals;
    std::sort(sorted_totals.begin(), sorted_totals.end());
    KahanSum total;
    for (double v : sorted_totals) total.add(v);
    out.value = total.value();
    return out;
}

double i2c_similarity(const Mat& query, const Mat& class_pool, int k) {
    return i2c_similarity_detail(query, class_pool, k).value;
}

double i2c_similarity(const DescriptorSet& query, const DescriptorSet& class_pool, int k) {
    return i2c_similarity(to_mat(query), to_mat(class_pool), k);
}

double distribution_measure(MeasureKind kind, const GaussianStats& q, const GaussianStats& s) {
    switch (kind) {
        case MeasureKind::KL: return kl_divergence(q, s);
        case MeasureKind::WassersteinApprox: return wasserstein2_approx(q, s);
        case MeasureKind::WassersteinExact: return wasserstein2_exact(q, s);
        case MeasureKind::I2C: break;
    }
    throw InvalidSpecError("distribution_measure: not a distribution-level measure");
}

double contrastive(MeasureKind kind, const GaussianStats& q, const GaussianStats& s_i,
                   const GaussianStats& s_complement) {
    return distribution_measure(kind, q, s_i) - distribution_measure(kind, q, s_complement);
}

}  // namespace adm
