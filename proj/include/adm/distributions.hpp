#pragma once

#include <cstdint>
#include <span>

#include "adm/descriptors.hpp"
#include "adm/linalg.hpp"

namespace adm {

/// Multivariate Gaussian summary of a descriptor population. The covariance
/// is the shrinkage-regularized estimate, guaranteed positive definite; its
/// Cholesky factor and log-determinant are cached because each class summary
/// is scored against every query of an episode.
struct GaussianStats {
    Vec mean;
    SymMatrix cov;
    int64_t count;
    LowerTriangular cov_factor;
    double log_det_cov;

    int dim() const { return static_cast<int>(mean.size()); }
};

/// mean = arithmetic mean; S = (1/n) sum (x-mean)(x-mean)^T (MLE normalization);
/// cov = (1-lambda) S + lambda (trace(S)/c) I + 1e-6 I.
/// Accumulation is compensated, so descriptor order does not matter beyond
/// 1e-9. Throws NonFiniteError on NaN/Inf input, InvalidSpecError for lambda
/// outside [0, 1].
GaussianStats estimate_stats(const Mat& descriptors, double shrinkage);
GaussianStats estimate_stats(const DescriptorSet& d, double shrinkage);

/// Multi-part estimation over the concatenation of the given descriptor
/// matrices, identical to estimate_stats on the stacked matrix.
GaussianStats estimate_stats_pooled(std::span<const Mat* const> parts, double shrinkage);

/// All descriptors of all images of one class pooled together.
GaussianStats pool_class_stats(const std::vector<DescriptorSet>& images, double shrinkage);
GaussianStats pool_class_stats(const std::vector<Mat>& images, double shrinkage);

/// Pooled stats of every class except `exclude`; classes kept in index order.
/// Throws TooFewClassesError when fewer than two classes are given.
GaussianStats pool_complement_stats(const std::vector<std::vector<DescriptorSet>>& classes,
                                    int exclude, double shrinkage);
GaussianStats pool_complement_stats(const std::vector<std::vector<Mat>>& classes, int exclude,
                                    double shrinkage);

inline constexpr double kCovarianceFloor = 1e-6;

}  // namespace adm
