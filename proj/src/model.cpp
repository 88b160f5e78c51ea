#include "adm/model.hpp"

#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <thread>

namespace adm {

// ---- embedding ----------------------------------------------------------------

Embedding Embedding::linear(Mat m) {
    if (m.rows() < 1 || m.cols() < 1)
        throw InvalidSpecError("Embedding::linear: matrix must be non-empty");
    if (!all_finite(m)) throw NonFiniteError("Embedding::linear: non-finite entry");
    return Embedding{EmbeddingKind::Linear, std::move(m)};
}

Mat Embedding::apply(const Mat& descriptors) const {
    if (kind == EmbeddingKind::Identity) return descriptors;
    if (matrix.cols() != descriptors.cols())
        throw DimensionMismatchError("Embedding::apply: descriptor dim != in_dim");
    return matmul(descriptors, transpose(matrix));
}

// ---- fusion head ----------------------------------------------------------------

StandardizeMode parse_standardize_mode(const std::string& name) {
    if (name == "episode-stats") return StandardizeMode::EpisodeStats;
    if (name == "running-stats") return StandardizeMode::RunningStats;
    if (name == "off") return StandardizeMode::Off;
    throw InvalidSpecError("unknown standardization mode: " + name);
}

std::string standardize_mode_name(StandardizeMode m) {
    switch (m) {
        case StandardizeMode::EpisodeStats: return "episode-stats";
        case StandardizeMode::RunningStats: return "running-stats";
        case StandardizeMode::Off: return "off";
    }
    return "?";
}

nlohmann::ordered_json params_to_json(const ModelParams& params) {
    nlohmann::ordered_json j;
    if (params.embedding.kind == EmbeddingKind::Identity) {
        j["embedding"] = {{"kind", "identity"}};
    } else {
        j["embedding"] = {{"kind", "linear"},
                          {"out_dim", params.embedding.matrix.rows()},
                          {"in_dim", params.embedding.matrix.cols()},
                          {"matrix", params.embedding.matrix.data()}};
    }
    j["w"] = params.head.w;
    j["gamma"] = params.head.gamma;
    j["beta"] = params.head.beta;
    j["std_mode"] = standardize_mode_name(params.head.mode);
    j["running_mean"] = params.head.running_mean;
    j["running_var"] = params.head.running_var;
    return j;
}

ModelParams params_from_json(const nlohmann::json& j) {
    ModelParams p;
    try {
        const auto& e = j.at("embedding");
        const std::string kind = e.at("kind");
        if (kind == "linear") {
            const int out_dim = e.at("out_dim");
            const int in_dim = e.at("in_dim");
            const std::vector<double> values = e.at("matrix");
            if (static_cast<int>(values.size()) != out_dim * in_dim)
                throw FormatError("params: embedding matrix size mismatch");
            Mat m(out_dim, in_dim);
            m.data() = values;
            p.embedding = Embedding::linear(std::move(m));
        } else if (kind != "identity") {
            throw FormatError("params: unknown embedding kind " + kind);
        }
        p.head.w = j.at("w");
        p.head.gamma = j.at("gamma");
        p.head.beta = j.at("beta");
        p.head.mode = parse_standardize_mode(j.at("std_mode"));
        if (j.contains("running_mean")) p.head.running_mean = j.at("running_mean");
        if (j.contains("running_var")) p.head.running_var = j.at("running_var");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("params JSON: " + std::string(e.what()));
    }
    for (double g : p.head.gamma)
        if (!(g > 0.0)) throw InvalidSpecError("params: gamma must be positive");
    return p;
}

BranchBatchStats episode_batch_stats(const EpisodeContext& context) {
    BranchBatchStats out;
    std::array<KahanSum, 2> sum, sum_sq;
    size_t n = 0;
    for (const auto& q : context) {
        if (q.kl.size() != q.i2c.size())
            throw DimensionMismatchError("episode_batch_stats: branch lengths differ");
        for (size_t i = 0; i < q.kl.size(); ++i) {
            sum[kKlBranch].add(q.kl[i]);
            sum[kI2cBranch].add(q.i2c[i]);
            sum_sq[kKlBranch].add(q.kl[i] * q.kl[i]);
            sum_sq[kI2cBranch].add(q.i2c[i] * q.i2c[i]);
            ++n;
        }
    }
    if (n == 0) throw MissingContextError("episode_batch_stats: empty context");
    for (int b = 0; b < 2; ++b) {
        const double mean = sum[b].value() / static_cast<double>(n);
        out.mean[b] = mean;
        out.var[b] = std::max(0.0, sum_sq[b].value() / static_cast<double>(n) - mean * mean);
    }
    return out;
}

namespace {

// Standardized + affine branch value under the head's mode.
double standardize_value(double x, int branch, const FusionHead& head,
                         const BranchBatchStats* batch) {
    switch (head.mode) {
        case StandardizeMode::Off:
            return x;
        case StandardizeMode::RunningStats: {
            const double z = (x - head.running_mean[branch]) /
                             std::sqrt(head.running_var[branch] + kStandardizeEpsilon);
            return head.gamma[branch] * z + head.beta[branch];
        }
        case StandardizeMode::EpisodeStats: {
            const double z =
                (x - batch->mean[branch]) / std::sqrt(batch->var[branch] + kStandardizeEpsilon);
            return head.gamma[branch] * z + head.beta[branch];
        }
    }
    throw InvalidSpecError("standardize_value: bad mode");
}

Vec fuse_with_stats(const Vec& kl_vec, const Vec& i2c_vec, const FusionHead& head,
                    const BranchBatchStats* batch) {
    if (kl_vec.size() != i2c_vec.size())
        throw DimensionMismatchError("fuse: branch vectors differ in length");
    Vec out(kl_vec.size());
    for (size_t i = 0; i < kl_vec.size(); ++i) {
        const double kl_n = standardize_value(kl_vec[i], kKlBranch, head, batch);
        const double i2c_n = standardize_value(i2c_vec[i], kI2cBranch, head, batch);
        out[i] = -head.w[0] * kl_n + head.w[1] * i2c_n;
    }
    return out;
}

}  // namespace

Vec fuse(const Vec& kl_vec, const Vec& i2c_vec, const FusionHead& head,
         const EpisodeContext* context) {
    if (head.mode == StandardizeMode::EpisodeStats) {
        if (context == nullptr)
            throw MissingContextError("fuse: episode-stats mode requires the episode context");
        const BranchBatchStats batch = episode_batch_stats(*context);
        return fuse_with_stats(kl_vec, i2c_vec, head, &batch);
    }
    return fuse_with_stats(kl_vec, i2c_vec, head, nullptr);
}

std::vector<Vec> fuse_batch(const EpisodeContext& context, const FusionHead& head) {
    std::optional<BranchBatchStats> batch;
    if (head.mode == StandardizeMode::EpisodeStats) batch = episode_batch_stats(context);
    std::vector<Vec> out;
    out.reserve(context.size());
    for (const auto& q : context)
        out.push_back(fuse_with_stats(q.kl, q.i2c, head, batch ? &*batch : nullptr));
    return out;
}

int classify(const Vec& fused) {
    if (fused.empty()) throw InvalidSpecError("classify: empty score vector");
    int best = 0;
    for (int i = 1; i < static_cast<int>(fused.size()); ++i)
        if (fused[i] > fused[best]) best = i;
    return best;
}

// ---- episode materialization ------------------------------------------------------

EpisodeTensors episode_tensors(const LabeledDataset& dataset, const Episode& episode) {
    EpisodeTensors t;
    t.ways = static_cast<int>(episode.support.size());
    t.support.resize(t.ways);
    for (int i = 0; i < t.ways; ++i) {
        const auto& sc = episode.support[i];
        for (int img : sc.image_indices)
            t.support[i].push_back(to_mat(dataset.classes[sc.class_index].images[img]));
    }
    for (const auto& q : episode.queries) {
        t.query.push_back(to_mat(dataset.classes[q.class_index].images[q.image_index]));
        t.labels.push_back(q.label);
    }
    return t;
}

EpisodeTensors apply_embedding(const EpisodeTensors& tensors, const Embedding& embedding) {
    if (embedding.kind == EmbeddingKind::Identity) return tensors;
    EpisodeTensors out;
    out.ways = tensors.ways;
    out.labels = tensors.labels;
    out.support.resize(tensors.support.size());
    for (size_t i = 0; i < tensors.support.size(); ++i)
        for (const auto& m : tensors.support[i]) out.support[i].push_back(embedding.apply(m));
    for (const auto& m : tensors.query) out.query.push_back(embedding.apply(m));
    return out;
}

EpisodeSummaries build_summaries(const EpisodeTensors& tensors, double lambda,
                                 const SummaryNeeds& needs) {
    EpisodeSummaries s;
    const int ways = tensors.ways;
    if (needs.dist_stats) {
        s.class_stats.reserve(ways);
        for (int i = 0; i < ways; ++i)
            s.class_stats.push_back(pool_class_stats(tensors.support[i], lambda));
        s.query_stats.reserve(tensors.query.size());
        for (const auto& q : tensors.query) s.query_stats.push_back(estimate_stats(q, lambda));
    }
    if (needs.complements) {
        s.complement_stats.reserve(ways);
        for (int i = 0; i < ways; ++i)
            s.complement_stats.push_back(pool_complement_stats(tensors.support, i, lambda));
    }
    if (needs.pools) {
        s.class_pools.reserve(ways);
        for (int i = 0; i < ways; ++i) {
            const auto& mats = tensors.support[i];
            int rows = 0;
            for (const auto& m : mats) rows += m.rows();
            Mat pool(rows, mats.front().cols());
            int at = 0;
            for (const auto& m : mats) {
                for (int r = 0; r < m.rows(); ++r)
                    for (int c = 0; c < m.cols(); ++c) pool(at + r, c) = m(r, c);
                at += m.rows();
            }
            s.class_pools.push_back(std::move(pool));
        }
    }
    return s;
}

EpisodeContext branch_scores(const EpisodeTensors& tensors, const EpisodeSummaries& summaries,
                             int topk, bool cms) {
    EpisodeContext ctx(tensors.query.size());
    for (size_t q = 0; q < tensors.query.size(); ++q) {
        auto& entry = ctx[q];
        entry.kl.resize(tensors.ways);
        entry.i2c.resize(tensors.ways);
        for (int i = 0; i < tensors.ways; ++i) {
            double kl = kl_divergence(summaries.query_stats[q], summaries.class_stats[i]);
            if (cms) kl -= kl_divergence(summaries.query_stats[q], summaries.complement_stats[i]);
            entry.kl[i] = kl;
            entry.i2c[i] = i2c_similarity(tensors.query[q], summaries.class_pools[i], topk);
        }
    }
    return ctx;
}

EpisodeContext branch_scores(const LabeledDataset& dataset, const Episode& episode,
                             const Embedding& embedding, double lambda, int topk, bool cms) {
    const EpisodeTensors tensors = apply_embedding(episode_tensors(dataset, episode), embedding);
    const EpisodeSummaries summaries =
        build_summaries(tensors, lambda, SummaryNeeds{true, cms, true});
    return branch_scores(tensors, summaries, topk, cms);
}

// ---- evaluation harness -------------------------------------------------------------

RowSpec parse_row_spec(const std::string& name) {
    RowSpec r;
    r.name = name;
    std::string base = name;
    if (base.size() > 4 && base.ends_with("-cms")) {
        r.cms = true;
        base = base.substr(0, base.size() - 4);
    }
    if (base == "adm") {
        r.adm = true;
        return r;
    }
    r.kind = parse_measure_kind(base);
    if (r.cms && r.kind == MeasureKind::I2C)
        throw InvalidSpecError("row " + name + ": contrastive wrapper needs a distribution measure");
    return r;
}

std::vector<RowSpec> default_ablation_rows() {
    std::vector<RowSpec> rows;
    for (const char* n : {"wass-approx", "wass-approx-cms", "kl", "kl-cms", "i2c", "adm"})
        rows.push_back(parse_row_spec(n));
    return rows;
}

namespace {

int argmin_index(const Vec& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[i] < v[best]) best = i;
    return best;
}

struct EpisodeScoreTable {
    // Q x C distance matrices per distribution kind, plus complements and i2c.
    std::array<std::optional<Mat>, 3> dist;
    std::array<std::optional<Mat>, 3> dist_comp;
    std::optional<Mat> i2c;
};

int dist_slot(MeasureKind k) {
    switch (k) {
        case MeasureKind::KL: return 0;
        case MeasureKind::WassersteinApprox: return 1;
        case MeasureKind::WassersteinExact: return 2;
        case MeasureKind::I2C: break;
    }
    throw InvalidSpecError("dist_slot: not a distribution measure");
}

/// Scores one embedded episode under every row; returns per-row accuracy.
std::vector<double> score_episode_rows(const EpisodeTensors& tensors,
                                       const std::vector<RowSpec>& rows, double lambda, int topk,
                                       const FusionHead& head) {
    SummaryNeeds needs;
    std::array<bool, 3> want_dist{false, false, false};
    std::array<bool, 3> want_comp{false, false, false};
    bool want_i2c = false;
    for (const auto& row : rows) {
        if (row.adm) {
            want_dist[dist_slot(MeasureKind::KL)] = true;
            want_i2c = true;
            if (row.cms) want_comp[dist_slot(MeasureKind::KL)] = true;
        } else if (row.kind == MeasureKind::I2C) {
            want_i2c = true;
        } else {
            want_dist[dist_slot(row.kind)] = true;
            if (row.cms) want_comp[dist_slot(row.kind)] = true;
        }
    }
    needs.dist_stats = want_dist[0] || want_dist[1] || want_dist[2];
    needs.complements = want_comp[0] || want_comp[1] || want_comp[2];
    needs.pools = want_i2c;

    const EpisodeSummaries summaries = build_summaries(tensors, lambda, needs);
    const int ways = tensors.ways;
    const int num_queries = static_cast<int>(tensors.query.size());

    EpisodeScoreTable table;
    static constexpr std::array<MeasureKind, 3> kinds{
        MeasureKind::KL, MeasureKind::WassersteinApprox, MeasureKind::WassersteinExact};
    for (int slot = 0; slot < 3; ++slot) {
        if (want_dist[slot]) {
            Mat d(num_queries, ways);
            for (int q = 0; q < num_queries; ++q)
                for (int i = 0; i < ways; ++i)
                    d(q, i) = distribution_measure(kinds[slot], summaries.query_stats[q],
                                                   summaries.class_stats[i]);
            table.dist[slot] = std::move(d);
        }
        if (want_comp[slot]) {
            Mat d(num_queries, ways);
            for (int q = 0; q < num_queries; ++q)
                for (int i = 0; i < ways; ++i)
                    d(q, i) = distribution_measure(kinds[slot], summaries.query_stats[q],
                                                   summaries.complement_stats[i]);
            table.dist_comp[slot] = std::move(d);
        }
    }
    if (want_i2c) {
        Mat d(num_queries, ways);
        for (int q = 0; q < num_queries; ++q)
            for (int i = 0; i < ways; ++i)
                d(q, i) = i2c_similarity(tensors.query[q], summaries.class_pools[i], topk);
        table.i2c = std::move(d);
    }

    std::vector<double> accs;
    accs.reserve(rows.size());
    Vec scores(ways);
    for (const auto& row : rows) {
        int correct = 0;
        if (row.adm) {
            EpisodeContext ctx(num_queries);
            const Mat& kl = *table.dist[0];
            const Mat* klc = row.cms ? &*table.dist_comp[0] : nullptr;
            for (int q = 0; q < num_queries; ++q) {
                ctx[q].kl.resize(ways);
                ctx[q].i2c.resize(ways);
                for (int i = 0; i < ways; ++i) {
                    ctx[q].kl[i] = klc ? kl(q, i) - (*klc)(q, i) : kl(q, i);
                    ctx[q].i2c[i] = (*table.i2c)(q, i);
                }
            }
            const std::vector<Vec> fused = fuse_batch(ctx, head);
            for (int q = 0; q < num_queries; ++q)
                if (classify(fused[q]) == tensors.labels[q]) ++correct;
        } else if (row.kind == MeasureKind::I2C) {
            for (int q = 0; q < num_queries; ++q) {
                for (int i = 0; i < ways; ++i) scores[i] = (*table.i2c)(q, i);
                if (classify(scores) == tensors.labels[q]) ++correct;
            }
        } else {
            const int slot = dist_slot(row.kind);
            const Mat& d = *table.dist[slot];
            const Mat* dc = row.cms ? &*table.dist_comp[slot] : nullptr;
            for (int q = 0; q < num_queries; ++q) {
                for (int i = 0; i < ways; ++i)
                    scores[i] = dc ? d(q, i) - (*dc)(q, i) : d(q, i);
                if (argmin_index(scores) == tensors.labels[q]) ++correct;
            }
        }
        accs.push_back(static_cast<double>(correct) / num_queries);
    }
    return accs;
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
    if (workers <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    const int count = std::min(workers, n);
    pool.reserve(count);
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    for (int w = 0; w < count; ++w)
        pool.emplace_back([&] {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n || failed.load()) break;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    failed.store(true);
                    break;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace

std::vector<RowResult> evaluate_rows(const LabeledDataset& dataset,
                                     const std::vector<uint32_t>& split_class_ids,
                                     const std::vector<RowSpec>& rows, const EvalOptions& options,
                                     const ModelParams& params) {
    dataset.validate();
    options.spec.validate();
    if (rows.empty()) throw InvalidSpecError("evaluate_rows: no rows");
    if (options.tasks < 1 || options.reps < 1)
        throw InvalidSpecError("evaluate_rows: tasks and reps must be >= 1");

    const int total = options.tasks * options.reps;
    std::vector<std::vector<double>> accs(rows.size(), std::vector<double>(total, 0.0));

    parallel_for(total, options.workers, [&](int idx) {
        Rng stream = episode_stream(options.seed, static_cast<uint64_t>(idx));
        const Episode ep = sample_episode(dataset, split_class_ids, options.spec, stream);
        const EpisodeTensors tensors =
            apply_embedding(episode_tensors(dataset, ep), params.embedding);
        const std::vector<double> row_accs =
            score_episode_rows(tensors, rows, options.lambda, options.topk, params.head);
        for (size_t r = 0; r < rows.size(); ++r) accs[r][idx] = row_accs[r];
    });

    std::vector<RowResult> results;
    results.reserve(rows.size());
    for (size_t r = 0; r < rows.size(); ++r) {
        ReportConfig cfg;  // only mean/ci are needed here
        const EvalReport rep = make_report(accs[r], options.tasks, options.reps, cfg);
        results.push_back({rows[r].name, rep.mean_acc, rep.ci95, std::move(accs[r])});
    }
    return results;
}

EvalReport make_report(const std::vector<double>& task_accs, int tasks, int reps,
                       ReportConfig config) {
    if (task_accs.empty()) throw InvalidSpecError("make_report: no task accuracies");
    const int n = static_cast<int>(task_accs.size());
    double sum = 0.0;
    for (double a : task_accs) sum += a;
    const double mean = sum / n;
    double ci = 0.0;
    if (n > 1) {
        double ss = 0.0;
        for (double a : task_accs) ss += (a - mean) * (a - mean);
        const double sd = std::sqrt(ss / (n - 1));
        ci = 1.96 * sd / std::sqrt(static_cast<double>(n));
    }
    EvalReport rep;
    rep.mean_acc = mean;
    rep.ci95 = ci;
    rep.tasks = tasks;
    rep.reps = reps;
    rep.config = std::move(config);
    return rep;
}

nlohmann::ordered_json report_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["mean_acc"] = report.mean_acc;
    j["ci95"] = report.ci95;
    j["tasks"] = report.tasks;
    j["reps"] = report.reps;
    j["config"] = {{"measure", report.config.measure}, {"cms", report.config.cms},
                   {"way", report.config.way},         {"shot", report.config.shot},
                   {"query", report.config.query},     {"lambda", report.config.lambda},
                   {"k", report.config.topk},          {"seed", report.config.seed},
                   {"std_mode", report.config.std_mode}};
    return j;
}

EvalReport evaluate(const LabeledDataset& dataset, const std::vector<uint32_t>& split_class_ids,
                    const RowSpec& row, const EvalOptions& options, const ModelParams& params) {
    const std::vector<RowResult> rr =
        evaluate_rows(dataset, split_class_ids, {row}, options, params);
    ReportConfig cfg;
    cfg.measure = row.adm ? "adm" : measure_kind_name(row.kind);
    cfg.cms = row.cms;
    cfg.way = options.spec.ways;
    cfg.shot = options.spec.shots;
    cfg.query = options.spec.queries_per_class;
    cfg.lambda = options.lambda;
    cfg.topk = options.topk;
    cfg.seed = options.seed;
    cfg.std_mode = standardize_mode_name(params.head.mode);
    return make_report(rr.front().task_accs, options.tasks, options.reps, std::move(cfg));
}

}  // namespace adm
