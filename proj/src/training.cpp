#include "adm/training.hpp"

#include <cmath>

namespace adm {

TrainableSet parse_trainable_set(const std::string& name) {
    if (name == "fusion") return TrainableSet::FusionOnly;
    if (name == "fusion+embedding") return TrainableSet::FusionAndEmbedding;
    throw InvalidSpecError("unknown trainable set: " + name);
}

std::string trainable_set_name(TrainableSet t) {
    return t == TrainableSet::FusionOnly ? "fusion" : "fusion+embedding";
}

void TrainConfig::validate() const {
    if (epochs < 0 || episodes_per_epoch < 1) throw InvalidSpecError("TrainConfig: bad schedule");
    if (!(lr > 0.0)) throw InvalidSpecError("TrainConfig: lr must be positive");
    if (!(lr_decay > 0.0) || decay_every < 1) throw InvalidSpecError("TrainConfig: bad decay");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw InvalidSpecError("TrainConfig: Adam betas must lie in [0,1)");
    if (!(eps_adam > 0.0)) throw InvalidSpecError("TrainConfig: eps_adam must be positive");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidSpecError("TrainConfig: lambda outside [0,1]");
    if (topk < 1) throw InvalidSpecError("TrainConfig: topk must be >= 1");
    spec.validate();
}

double softmax_cross_entropy(const Vec& scores, int label) {
    if (scores.empty() || label < 0 || label >= static_cast<int>(scores.size()))
        throw InvalidSpecError("softmax_cross_entropy: bad label");
    double m = scores[0];
    for (double s : scores) m = std::max(m, s);
    double sum = 0.0;
    for (double s : scores) sum += std::exp(s - m);
    return m + std::log(sum) - scores[label];
}

Vec softmax(const Vec& scores) {
    double m = scores[0];
    for (double s : scores) m = std::max(m, s);
    double sum = 0.0;
    Vec out(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - m);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

namespace {

struct ForwardPass {
    EpisodeTensors raw;
    EpisodeTensors embedded;
    EpisodeSummaries summaries;
    std::vector<std::vector<I2cDetail>> i2c_details;  // [Q][C]
    Mat kl_raw, i2c_raw;                              // Q x C, CMS folded into kl_raw
    Mat kl_z, i2c_z;                                  // z-scores (standardizing modes)
    Mat kl_n, i2c_n;                                  // fuse inputs
    BranchBatchStats batch;                           // stats of the raw branch values
    std::vector<Vec> fused;
    double loss = 0.0;
};

ForwardPass run_forward(const LabeledDataset& dataset, const Episode& episode,
                        const ModelParams& params, const TrainConfig& config) {
    ForwardPass fp;
    fp.raw = episode_tensors(dataset, episode);
    fp.embedded = apply_embedding(fp.raw, params.embedding);
    fp.summaries =
        build_summaries(fp.embedded, config.lambda, SummaryNeeds{true, config.cms, true});

    const int ways = fp.embedded.ways;
    const int num_queries = static_cast<int>(fp.embedded.query.size());
    fp.kl_raw = Mat(num_queries, ways);
    fp.i2c_raw = Mat(num_queries, ways);
    fp.i2c_details.resize(num_queries);
    for (int q = 0; q < num_queries; ++q) {
        fp.i2c_details[q].reserve(ways);
        for (int i = 0; i < ways; ++i) {
            double kl = kl_divergence(fp.summaries.query_stats[q], fp.summaries.class_stats[i]);
            if (config.cms)
                kl -= kl_divergence(fp.summaries.query_stats[q], fp.summaries.complement_stats[i]);
            fp.kl_raw(q, i) = kl;
            fp.i2c_details[q].push_back(i2c_similarity_detail(
                fp.embedded.query[q], fp.summaries.class_pools[i], config.topk));
            fp.i2c_raw(q, i) = fp.i2c_details[q][i].value;
        }
    }

    EpisodeContext ctx(num_queries);
    for (int q = 0; q < num_queries; ++q) {
        ctx[q].kl.assign(fp.kl_raw.row(q), fp.kl_raw.row(q) + ways);
        ctx[q].i2c.assign(fp.i2c_raw.row(q), fp.i2c_raw.row(q) + ways);
    }
    fp.batch = episode_batch_stats(ctx);

    const FusionHead& head = params.head;
    fp.kl_z = Mat(num_queries, ways);
    fp.i2c_z = Mat(num_queries, ways);
    fp.kl_n = Mat(num_queries, ways);
    fp.i2c_n = Mat(num_queries, ways);
    for (int q = 0; q < num_queries; ++q)
        for (int i = 0; i < ways; ++i) {
            const double kl = fp.kl_raw(q, i), i2c = fp.i2c_raw(q, i);
            switch (head.mode) {
                case StandardizeMode::Off:
                    fp.kl_n(q, i) = kl;
                    fp.i2c_n(q, i) = i2c;
                    break;
                case StandardizeMode::RunningStats: {
                    fp.kl_z(q, i) = (kl - head.running_mean[kKlBranch]) /
                                    std::sqrt(head.running_var[kKlBranch] + kStandardizeEpsilon);
                    fp.i2c_z(q, i) = (i2c - head.running_mean[kI2cBranch]) /
                                     std::sqrt(head.running_var[kI2cBranch] + kStandardizeEpsilon);
                    fp.kl_n(q, i) = head.gamma[kKlBranch] * fp.kl_z(q, i) + head.beta[kKlBranch];
                    fp.i2c_n(q, i) = head.gamma[kI2cBranch] * fp.i2c_z(q, i) + head.beta[kI2cBranch];
                    break;
                }
                case StandardizeMode::EpisodeStats: {
                    fp.kl_z(q, i) = (kl - fp.batch.mean[kKlBranch]) /
                                    std::sqrt(fp.batch.var[kKlBranch] + kStandardizeEpsilon);
                    fp.i2c_z(q, i) = (i2c - fp.batch.mean[kI2cBranch]) /
                                     std::sqrt(fp.batch.var[kI2cBranch] + kStandardizeEpsilon);
                    fp.kl_n(q, i) = head.gamma[kKlBranch] * fp.kl_z(q, i) + head.beta[kKlBranch];
                    fp.i2c_n(q, i) = head.gamma[kI2cBranch] * fp.i2c_z(q, i) + head.beta[kI2cBranch];
                    break;
                }
            }
        }

    fp.fused.resize(num_queries);
    KahanSum loss;
    for (int q = 0; q < num_queries; ++q) {
        Vec& f = fp.fused[q];
        f.resize(ways);
        for (int i = 0; i < ways; ++i)
            f[i] = -head.w[0] * fp.kl_n(q, i) + head.w[1] * fp.i2c_n(q, i);
        loss.add(softmax_cross_entropy(f, fp.embedded.labels[q]));
    }
    fp.loss = loss.value() / num_queries;
    return fp;
}

// Full-entry sensitivities of the loss w.r.t. one Gaussian summary.
struct StatsGrad {
    Vec gmu;
    Mat gcov;
    bool active = false;

    void ensure(int c) {
        if (!active) {
            gmu.assign(c, 0.0);
            gcov = Mat(c, c);
            active = true;
        }
    }
};

// u * d KL(q||s), accumulated into the sensitivities of both sides.
// q_inv and s_inv are the precomputed covariance inverses.
void kl_backward_pair(const GaussianStats& q, const Mat& q_inv, const GaussianStats& s,
                      const Mat& s_inv, double u, StatsGrad& gq, StatsGrad& gs) {
    const int c = q.dim();
    gq.ensure(c);
    gs.ensure(c);
    const Vec delta = vsub(s.mean, q.mean);
    const Vec a = matvec(s_inv, delta);
    for (int i = 0; i < c; ++i) {
        gq.gmu[i] -= u * a[i];
        gs.gmu[i] += u * a[i];
    }
    const Mat m = matmul(s_inv, matmul(q.cov.mat(), s_inv));
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < c; ++j) {
            gq.gcov(i, j) += 0.5 * u * (s_inv(i, j) - q_inv(i, j));
            gs.gcov(i, j) += 0.5 * u * (s_inv(i, j) - m(i, j) - a[i] * a[j]);
        }
}

// Chain from a summary's (mu, cov) sensitivities to its member descriptors:
// through the shrinkage map and the MLE estimators.
void stats_backward_into(const GaussianStats& st, const StatsGrad& g, double lambda,
                         const std::vector<const Mat*>& member_values,
                         const std::vector<Mat*>& member_grads) {
    if (!g.active) return;
    const int c = st.dim();
    const double inv_n = 1.0 / static_cast<double>(st.count);
    const double tr_h = trace(g.gcov);
    Mat sym(c, c);
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < c; ++j) {
            const double hij = (1.0 - lambda) * g.gcov(i, j) + (i == j ? lambda * tr_h / c : 0.0);
            const double hji = (1.0 - lambda) * g.gcov(j, i) + (i == j ? lambda * tr_h / c : 0.0);
            sym(i, j) = hij + hji;
        }
    Vec centered(c);
    for (size_t mi = 0; mi < member_values.size(); ++mi) {
        const Mat& y = *member_values[mi];
        Mat& gy = *member_grads[mi];
        for (int t = 0; t < y.rows(); ++t) {
            const double* row = y.row(t);
            double* grow = gy.row(t);
            for (int j = 0; j < c; ++j) centered[j] = row[j] - st.mean[j];
            for (int i = 0; i < c; ++i) {
                double s = g.gmu[i];
                const double* srow = sym.row(i);
                for (int j = 0; j < c; ++j) s += srow[j] * centered[j];
                grow[i] += inv_n * s;
            }
        }
    }
}

// u * d i2c(query, pool) with the top-k selection fixed; cosine values are
// differentiated through both unnormalized descriptors.
void i2c_backward(const Mat& query, const Mat& pool, const std::vector<int>& selected, int k,
                  double u, Mat& g_query, Mat& g_pool) {
    const int c = query.cols();
    for (int r = 0; r < query.rows(); ++r) {
        const double* y = query.row(r);
        double ny_sq = 0.0;
        for (int j = 0; j < c; ++j) ny_sq += y[j] * y[j];
        if (ny_sq == 0.0) continue;
        const double ny = std::sqrt(ny_sq);
        for (int t = 0; t < k; ++t) {
            const int s = selected[static_cast<size_t>(r) * k + t];
            const double* z = pool.row(s);
            double nz_sq = 0.0;
            for (int j = 0; j < c; ++j) nz_sq += z[j] * z[j];
            if (nz_sq == 0.0) continue;
            const double nz = std::sqrt(nz_sq);
            double cosv = 0.0;
            for (int j = 0; j < c; ++j) cosv += (y[j] / ny) * (z[j] / nz);
            double* gq = g_query.row(r);
            double* gp = g_pool.row(s);
            for (int j = 0; j < c; ++j) {
                const double uh = y[j] / ny, vh = z[j] / nz;
                gq[j] += u * (vh - cosv * uh) / ny;
                gp[j] += u * (uh - cosv * vh) / nz;
            }
        }
    }
}

ParamGrads run_backward(const ForwardPass& fp, const ModelParams& params,
                        const TrainConfig& config) {
    const FusionHead& head = params.head;
    const int ways = fp.embedded.ways;
    const int num_queries = static_cast<int>(fp.embedded.query.size());
    ParamGrads grads;

    // loss -> fused scores
    Mat dfused(num_queries, ways);
    for (int q = 0; q < num_queries; ++q) {
        const Vec p = softmax(fp.fused[q]);
        for (int i = 0; i < ways; ++i)
            dfused(q, i) = (p[i] - (i == fp.embedded.labels[q] ? 1.0 : 0.0)) / num_queries;
    }

    // fused -> branch inputs and w
    Mat g_kl_n(num_queries, ways), g_i2c_n(num_queries, ways);
    for (int q = 0; q < num_queries; ++q)
        for (int i = 0; i < ways; ++i) {
            const double d = dfused(q, i);
            grads.w[0] += d * (-fp.kl_n(q, i));
            grads.w[1] += d * fp.i2c_n(q, i);
            g_kl_n(q, i) = -head.w[0] * d;
            g_i2c_n(q, i) = head.w[1] * d;
        }

    // standardization backward per branch
    Mat g_kl_raw(num_queries, ways), g_i2c_raw(num_queries, ways);
    auto branch_backward = [&](int b, const Mat& g_n, const Mat& z, Mat& g_raw) {
        if (head.mode == StandardizeMode::Off) {
            g_raw = g_n;
            return;
        }
        double dgamma = 0.0, dbeta = 0.0;
        for (int q = 0; q < num_queries; ++q)
            for (int i = 0; i < ways; ++i) {
                dgamma += g_n(q, i) * z(q, i);
                dbeta += g_n(q, i);
            }
        grads.gamma[b] += dgamma;
        grads.beta[b] += dbeta;

        if (head.mode == StandardizeMode::RunningStats) {
            const double s = std::sqrt(head.running_var[b] + kStandardizeEpsilon);
            for (int q = 0; q < num_queries; ++q)
                for (int i = 0; i < ways; ++i) g_raw(q, i) = head.gamma[b] * g_n(q, i) / s;
            return;
        }
        // episode-stats: gradients flow through the batch mean and variance
        const double s = std::sqrt(fp.batch.var[b] + kStandardizeEpsilon);
        const double n = static_cast<double>(num_queries) * ways;
        double mean_g = 0.0, mean_gz = 0.0;
        for (int q = 0; q < num_queries; ++q)
            for (int i = 0; i < ways; ++i) {
                const double gz = head.gamma[b] * g_n(q, i);
                mean_g += gz;
                mean_gz += gz * z(q, i);
            }
        mean_g /= n;
        mean_gz /= n;
        for (int q = 0; q < num_queries; ++q)
            for (int i = 0; i < ways; ++i) {
                const double gz = head.gamma[b] * g_n(q, i);
                g_raw(q, i) = (gz - mean_g - z(q, i) * mean_gz) / s;
            }
    };
    branch_backward(kKlBranch, g_kl_n, fp.kl_z, g_kl_raw);
    branch_backward(kI2cBranch, g_i2c_n, fp.i2c_z, g_i2c_raw);

    if (config.trainable == TrainableSet::FusionOnly) return grads;

    // ---- descriptor-level backward (embedding training) ----
    const auto& summaries = fp.summaries;

    std::vector<Mat> query_inv(num_queries);
    for (int q = 0; q < num_queries; ++q)
        query_inv[q] = spd_solve(summaries.query_stats[q].cov_factor, Mat::identity(fp.embedded.query[q].cols()));
    std::vector<Mat> class_inv(ways), comp_inv;
    for (int i = 0; i < ways; ++i)
        class_inv[i] = spd_solve(summaries.class_stats[i].cov_factor,
                                 Mat::identity(summaries.class_stats[i].dim()));
    if (config.cms) {
        comp_inv.resize(ways);
        for (int i = 0; i < ways; ++i)
            comp_inv[i] = spd_solve(summaries.complement_stats[i].cov_factor,
                                    Mat::identity(summaries.complement_stats[i].dim()));
    }

    std::vector<StatsGrad> g_query_stats(num_queries), g_class_stats(ways), g_comp_stats(ways);
    for (int q = 0; q < num_queries; ++q)
        for (int i = 0; i < ways; ++i) {
            const double u = g_kl_raw(q, i);
            if (u == 0.0) continue;
            kl_backward_pair(summaries.query_stats[q], query_inv[q], summaries.class_stats[i],
                             class_inv[i], u, g_query_stats[q], g_class_stats[i]);
            if (config.cms)
                kl_backward_pair(summaries.query_stats[q], query_inv[q],
                                 summaries.complement_stats[i], comp_inv[i], -u, g_query_stats[q],
                                 g_comp_stats[i]);
        }

    // descriptor gradient buffers mirroring the embedded tensors
    std::vector<std::vector<Mat>> g_support(ways);
    for (int i = 0; i < ways; ++i)
        for (const auto& m : fp.embedded.support[i]) g_support[i].emplace_back(m.rows(), m.cols());
    std::vector<Mat> g_query(num_queries);
    for (int q = 0; q < num_queries; ++q)
        g_query[q] = Mat(fp.embedded.query[q].rows(), fp.embedded.query[q].cols());

    // i2c: pools are the support matrices stacked in shot order
    for (int q = 0; q < num_queries; ++q)
        for (int i = 0; i < ways; ++i) {
            const double u = g_i2c_raw(q, i);
            if (u == 0.0) continue;
            Mat g_pool(summaries.class_pools[i].rows(), summaries.class_pools[i].cols());
            i2c_backward(fp.embedded.query[q], summaries.class_pools[i],
                         fp.i2c_details[q][i].selected, config.topk, u, g_query[q], g_pool);
            int at = 0;
            for (auto& gm : g_support[i]) {
                for (int r = 0; r < gm.rows(); ++r)
                    for (int j = 0; j < gm.cols(); ++j) gm(r, j) += g_pool(at + r, j);
                at += gm.rows();
            }
        }

    // stats objects -> their member descriptors
    for (int q = 0; q < num_queries; ++q)
        stats_backward_into(summaries.query_stats[q], g_query_stats[q], config.lambda,
                            {&fp.embedded.query[q]}, {&g_query[q]});
    for (int i = 0; i < ways; ++i) {
        std::vector<const Mat*> values;
        std::vector<Mat*> buffers;
        for (size_t k = 0; k < fp.embedded.support[i].size(); ++k) {
            values.push_back(&fp.embedded.support[i][k]);
            buffers.push_back(&g_support[i][k]);
        }
        stats_backward_into(summaries.class_stats[i], g_class_stats[i], config.lambda, values,
                            buffers);
    }
    if (config.cms)
        for (int i = 0; i < ways; ++i) {
            std::vector<const Mat*> values;
            std::vector<Mat*> buffers;
            for (int j = 0; j < ways; ++j) {
                if (j == i) continue;
                for (size_t k = 0; k < fp.embedded.support[j].size(); ++k) {
                    values.push_back(&fp.embedded.support[j][k]);
                    buffers.push_back(&g_support[j][k]);
                }
            }
            stats_backward_into(summaries.complement_stats[i], g_comp_stats[i], config.lambda,
                                values, buffers);
        }

    // embedded descriptor gradients -> embedding matrix: y = x A^T, dA = g_y^T x
    const Mat& a = params.embedding.matrix;
    grads.embedding = Mat(a.rows(), a.cols());
    auto accumulate_embedding = [&](const Mat& g_y, const Mat& x) {
        for (int t = 0; t < x.rows(); ++t) {
            const double* grow = g_y.row(t);
            const double* xrow = x.row(t);
            for (int i = 0; i < a.rows(); ++i) {
                const double gi = grow[i];
                if (gi == 0.0) continue;
                double* arow = grads.embedding.row(i);
                for (int j = 0; j < a.cols(); ++j) arow[j] += gi * xrow[j];
            }
        }
    };
    for (int i = 0; i < ways; ++i)
        for (size_t k = 0; k < fp.raw.support[i].size(); ++k)
            accumulate_embedding(g_support[i][k], fp.raw.support[i][k]);
    for (int q = 0; q < num_queries; ++q) accumulate_embedding(g_query[q], fp.raw.query[q]);

    return grads;
}

}  // namespace

LossResult episode_loss(const LabeledDataset& dataset, const Episode& episode,
                        const ModelParams& params, const TrainConfig& config) {
    config.validate();
    ForwardPass fp = run_forward(dataset, episode, params, config);
    return {fp.loss, std::move(fp.fused)};
}

ParamGrads grad(const LabeledDataset& dataset, const Episode& episode, const ModelParams& params,
                const TrainConfig& config) {
    config.validate();
    if (config.trainable == TrainableSet::FusionAndEmbedding &&
        params.embedding.kind != EmbeddingKind::Linear)
        throw InvalidSpecError("grad: embedding training requires a linear embedding");
    const ForwardPass fp = run_forward(dataset, episode, params, config);
    ParamGrads g = run_backward(fp, params, config);
    for (double v : {g.w[0], g.w[1], g.gamma[0], g.gamma[1], g.beta[0], g.beta[1]})
        if (!std::isfinite(v)) throw NonFiniteGradientError("grad: non-finite fusion gradient");
    if (config.trainable == TrainableSet::FusionAndEmbedding && !all_finite(g.embedding))
        throw NonFiniteGradientError("grad: non-finite embedding gradient");
    return g;
}

Vec flatten_params(const ModelParams& params, TrainableSet trainable) {
    Vec flat{params.head.w[0],     params.head.w[1],    params.head.gamma[0],
             params.head.gamma[1], params.head.beta[0], params.head.beta[1]};
    if (trainable == TrainableSet::FusionAndEmbedding) {
        if (params.embedding.kind != EmbeddingKind::Linear)
            throw InvalidSpecError("flatten_params: embedding training requires a linear embedding");
        const auto& d = params.embedding.matrix.data();
        flat.insert(flat.end(), d.begin(), d.end());
    }
    return flat;
}

void apply_flat_params(ModelParams& params, const Vec& flat, TrainableSet trainable) {
    size_t expect = 6;
    if (trainable == TrainableSet::FusionAndEmbedding)
        expect += params.embedding.matrix.data().size();
    if (flat.size() != expect) throw DimensionMismatchError("apply_flat_params: size mismatch");
    params.head.w = {flat[0], flat[1]};
    params.head.gamma = {flat[2], flat[3]};
    params.head.beta = {flat[4], flat[5]};
    if (trainable == TrainableSet::FusionAndEmbedding)
        std::copy(flat.begin() + 6, flat.end(), params.embedding.matrix.data().begin());
}

Vec flatten_grads(const ParamGrads& grads, TrainableSet trainable) {
    Vec flat{grads.w[0], grads.w[1], grads.gamma[0], grads.gamma[1], grads.beta[0], grads.beta[1]};
    if (trainable == TrainableSet::FusionAndEmbedding) {
        const auto& d = grads.embedding.data();
        flat.insert(flat.end(), d.begin(), d.end());
    }
    return flat;
}

void adam_step(Vec& params, const Vec& grads, AdamState& state, double lr,
               const TrainConfig& config) {
    if (params.size() != grads.size() || params.size() != state.m.size() ||
        params.size() != state.v.size())
        throw DimensionMismatchError("adam_step: shape mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * grads[i];
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + config.eps_adam);
    }
}

TrainResult train(const LabeledDataset& dataset, const std::vector<uint32_t>& split_class_ids,
                  const TrainConfig& config, ModelParams init, uint64_t seed) {
    config.validate();
    dataset.validate();
    if (config.trainable == TrainableSet::FusionAndEmbedding &&
        init.embedding.kind != EmbeddingKind::Linear)
        throw InvalidSpecError("train: embedding training requires a linear embedding");

    TrainResult result;
    result.params = std::move(init);
    Vec flat = flatten_params(result.params, config.trainable);
    AdamState state(flat.size());

    constexpr double kRunningMomentum = 0.1;
    constexpr double kGammaFloor = 1e-6;

    uint64_t episode_index = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr_e = config.lr * std::pow(config.lr_decay, epoch / config.decay_every);
        KahanSum epoch_loss;
        for (int t = 0; t < config.episodes_per_epoch; ++t) {
            Rng stream = episode_stream(seed, episode_index++);
            const Episode ep = sample_episode(dataset, split_class_ids, config.spec, stream);
            const ForwardPass fp = run_forward(dataset, ep, result.params, config);
            epoch_loss.add(fp.loss);
            const ParamGrads g = run_backward(fp, result.params, config);
            const Vec gflat = flatten_grads(g, config.trainable);
            for (double v : gflat)
                if (!std::isfinite(v)) throw NonFiniteGradientError("train: non-finite gradient");
            adam_step(flat, gflat, state, lr_e, config);
            // gamma must stay positive; project after the step
            flat[2] = std::max(flat[2], kGammaFloor);
            flat[3] = std::max(flat[3], kGammaFloor);
            apply_flat_params(result.params, flat, config.trainable);
            for (int b = 0; b < 2; ++b) {
                result.params.head.running_mean[b] =
                    (1.0 - kRunningMomentum) * result.params.head.running_mean[b] +
                    kRunningMomentum * fp.batch.mean[b];
                result.params.head.running_var[b] =
                    (1.0 - kRunningMomentum) * result.params.head.running_var[b] +
                    kRunningMomentum * fp.batch.var[b];
            }
        }
        result.epoch_mean_loss.push_back(epoch_loss.value() / config.episodes_per_epoch);
    }
    return result;
}

}  // namespace adm
