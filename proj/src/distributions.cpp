#include "adm/distributions.hpp"

#include <cmath>

namespace adm {

GaussianStats estimate_stats_pooled(std::span<const Mat* const> parts, double shrinkage) {
    if (parts.empty()) throw InvalidSpecError("estimate_stats: no descriptor sets");
    if (!(shrinkage >= 0.0 && shrinkage <= 1.0))
        throw InvalidSpecError("estimate_stats: shrinkage outside [0,1]");

    const int c = parts.front()->cols();
    int64_t n = 0;
    for (const Mat* p : parts) {
        if (p->cols() != c) throw DimensionMismatchError("estimate_stats: mixed dims");
        if (!all_finite(*p)) throw NonFiniteError("estimate_stats: non-finite descriptor");
        n += p->rows();
    }
    if (n < 1) throw InvalidSpecError("estimate_stats: no descriptors");

    Vec mean(c, 0.0);
    {
        std::vector<KahanSum> acc(c);
        for (const Mat* p : parts)
            for (int t = 0; t < p->rows(); ++t) {
                const double* row = p->row(t);
                for (int j = 0; j < c; ++j) acc[j].add(row[j]);
            }
        for (int j = 0; j < c; ++j) mean[j] = acc[j].value() / static_cast<double>(n);
    }

    Mat scatter(c, c);
    {
        std::vector<KahanSum> acc(static_cast<size_t>(c) * c);
        Vec centered(c);
        for (const Mat* p : parts)
            for (int t = 0; t < p->rows(); ++t) {
                const double* row = p->row(t);
                for (int j = 0; j < c; ++j) centered[j] = row[j] - mean[j];
                for (int i = 0; i < c; ++i) {
                    const double ci = centered[i];
                    for (int j = 0; j < c; ++j) acc[static_cast<size_t>(i) * c + j].add(ci * centered[j]);
                }
            }
        for (int i = 0; i < c; ++i)
            for (int j = 0; j < c; ++j)
                scatter(i, j) = acc[static_cast<size_t>(i) * c + j].value() / static_cast<double>(n);
    }

    const double trace_over_c = trace(scatter) / c;
    Mat cov(c, c);
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < c; ++j) {
            double v = (1.0 - shrinkage) * scatter(i, j);
            if (i == j) v += shrinkage * trace_over_c + kCovarianceFloor;
            cov(i, j) = v;
        }

    SymMatrix sym(std::move(cov));
    LowerTriangular factor = cholesky(sym);
    const double ld = log_det(factor);
    return GaussianStats{std::move(mean), std::move(sym), n, std::move(factor), ld};
}

GaussianStats estimate_stats(const Mat& descriptors, double shrinkage) {
    const Mat* p = &descriptors;
    return estimate_stats_pooled(std::span<const Mat* const>(&p, 1), shrinkage);
}

GaussianStats estimate_stats(const DescriptorSet& d, double shrinkage) {
    return estimate_stats(to_mat(d), shrinkage);
}

GaussianStats pool_class_stats(const std::vector<Mat>& images, double shrinkage) {
    std::vector<const Mat*> parts;
    parts.reserve(images.size());
    for (const auto& m : images) parts.push_back(&m);
    return estimate_stats_pooled(parts, shrinkage);
}

GaussianStats pool_class_stats(const std::vector<DescriptorSet>& images, double shrinkage) {
    std::vector<Mat> mats;
    mats.reserve(images.size());
    for (const auto& img : images) mats.push_back(to_mat(img));
    return pool_class_stats(mats, shrinkage);
}

GaussianStats pool_complement_stats(const std::vector<std::vector<Mat>>& classes, int exclude,
                                    double shrinkage) {
    if (classes.size() < 2) throw TooFewClassesError("pool_complement_stats: need >= 2 classes");
    if (exclude < 0 || exclude >= static_cast<int>(classes.size()))
        throw InvalidSpecError("pool_complement_stats: exclude index out of range");
    std::vector<const Mat*> parts;
    for (int i = 0; i < static_cast<int>(classes.size()); ++i) {
        if (i == exclude) continue;
        for (const auto& m : classes[i]) parts.push_back(&m);
    }
    return estimate_stats_pooled(parts, shrinkage);
}

GaussianStats pool_complement_stats(const std::vector<std::vector<DescriptorSet>>& classes,
                                    int exclude, double shrinkage) {
    std::vector<std::vector<Mat>> mats(classes.size());
    for (size_t i = 0; i < classes.size(); ++i)
        for (const auto& img : classes[i]) mats[i].push_back(to_mat(img));
    return pool_complement_stats(mats, exclude, shrinkage);
}

}  // namespace adm
