#pragma once

#include <string>
#include <vector>

#include "adm/distributions.hpp"

namespace adm {

/// Scoring functions between a query and a support class. KL and both
/// Wasserstein variants are distances (lower is closer); I2C is a similarity
/// (higher is closer).
enum class MeasureKind { KL, WassersteinApprox, WassersteinExact, I2C };

inline bool lower_is_closer(MeasureKind k) { return k != MeasureKind::I2C; }

MeasureKind parse_measure_kind(const std::string& name);
std::string measure_kind_name(MeasureKind k);

/// KL(q || s) for multivariate Gaussians:
///   1/2 ( trace(S^-1 Q) + ln det S - ln det Q + d^T S^-1 d - c ),  d = mu_S - mu_Q.
/// Tiny negative results from cancellation are clamped to zero inside
/// [-1e-9, 0); anything more negative raises NumericalError.
double kl_divergence(const GaussianStats& q, const GaussianStats& s);

/// Squared 2-Wasserstein approximation: ||mu_Q - mu_S||^2 + ||cov_Q - cov_S||_F^2.
double wasserstein2_approx(const GaussianStats& q, const GaussianStats& s);

/// Squared 2-Wasserstein, exact Gaussian form:
///   ||mu_Q - mu_S||^2 + trace(cov_Q + cov_S - 2 (cov_Q^1/2 cov_S cov_Q^1/2)^1/2).
/// Clamp band [-1e-8, 0).
double wasserstein2_exact(const GaussianStats& q, const GaussianStats& s);

/// Image-to-class similarity: rows of the query are L2-normalized against the
/// L2-normalized class pool; each row contributes the sum of its k largest
/// cosines. Zero-norm descriptors contribute zero to every cosine. Throws
/// KTooLargeError when k exceeds the pool size.
double i2c_similarity(const Mat& query, const Mat& class_pool, int k);
double i2c_similarity(const DescriptorSet& query, const DescriptorSet& class_pool, int k);

/// i2c with the selected pool indices recorded per query row (row-major,
/// k entries per row, ties broken toward the lower pool index).
struct I2cDetail {
    double value = 0.0;
    std::vector<int> selected;
};
I2cDetail i2c_similarity_detail(const Mat& query, const Mat& class_pool, int k);

/// Dispatch for the distribution-level distances (everything but I2C).
double distribution_measure(MeasureKind kind, const GaussianStats& q, const GaussianStats& s);

/// Contrastive wrapper: measure(q, s_i) - measure(q, s_complement). Applies
/// to any distribution-level distance.
double contrastive(MeasureKind kind, const GaussianStats& q, const GaussianStats& s_i,
                   const GaussianStats& s_complement);

}  // namespace adm
