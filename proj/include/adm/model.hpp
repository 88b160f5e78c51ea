#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "adm/episodes.hpp"
#include "adm/measures.hpp"

namespace adm {

// ---- embedding ---------------------------------------------------------------

enum class EmbeddingKind { Identity, Linear };

/// Stand-in for a learned feature extractor: identity, or a linear map applied
/// to each descriptor independently.
struct Embedding {
    EmbeddingKind kind = EmbeddingKind::Identity;
    Mat matrix;  // out_dim x in_dim, Linear only

    static Embedding identity() { return {}; }
    static Embedding linear(Mat m);

    /// n x in -> n x out.
    Mat apply(const Mat& descriptors) const;
};

// ---- fusion head ---------------------------------------------------------------

enum class StandardizeMode { EpisodeStats, RunningStats, Off };

StandardizeMode parse_standardize_mode(const std::string& name);
std::string standardize_mode_name(StandardizeMode m);

inline constexpr int kKlBranch = 0;
inline constexpr int kI2cBranch = 1;
inline constexpr double kStandardizeEpsilon = 1e-8;

/// Learnable fusion of the two branch scores: per-branch standardization
/// (scale gamma, offset beta after z-scoring) followed by -w1*kl + w2*i2c.
struct FusionHead {
    std::array<double, 2> w{1.0, 1.0};
    std::array<double, 2> gamma{1.0, 1.0};
    std::array<double, 2> beta{0.0, 0.0};
    StandardizeMode mode = StandardizeMode::EpisodeStats;
    std::array<double, 2> running_mean{0.0, 0.0};
    std::array<double, 2> running_var{1.0, 1.0};
};

struct ModelParams {
    Embedding embedding;
    FusionHead head;
};

nlohmann::ordered_json params_to_json(const ModelParams& params);
ModelParams params_from_json(const nlohmann::json& j);

/// Raw (pre-standardization) branch scores of one query against all C classes.
struct QueryBranchScores {
    Vec kl;
    Vec i2c;
};
using EpisodeContext = std::vector<QueryBranchScores>;

struct BranchBatchStats {
    std::array<double, 2> mean{0.0, 0.0};
    std::array<double, 2> var{0.0, 0.0};  // population (1/N) variance
};
BranchBatchStats episode_batch_stats(const EpisodeContext& context);

/// Fused class scores for one query. In episode-stats mode the full episode
/// context must be supplied (MissingContextError otherwise).
Vec fuse(const Vec& kl_vec, const Vec& i2c_vec, const FusionHead& head,
         const EpisodeContext* context);

/// Fused scores for every query of an episode, sharing one batch-stats pass.
std::vector<Vec> fuse_batch(const EpisodeContext& context, const FusionHead& head);

/// argmax; ties break toward the lowest index.
int classify(const Vec& fused);

// ---- episode materialization ---------------------------------------------------

/// Episode descriptor matrices in double precision.
struct EpisodeTensors {
    int ways = 0;
    std::vector<std::vector<Mat>> support;  // [C][K]
    std::vector<Mat> query;                 // C*q entries
    std::vector<int> labels;                // per query
};

EpisodeTensors episode_tensors(const LabeledDataset& dataset, const Episode& episode);
EpisodeTensors apply_embedding(const EpisodeTensors& tensors, const Embedding& embedding);

/// Per-episode summaries shared by every measure: pooled class stats, CMS
/// complements, pooled descriptor matrices and per-query stats.
struct EpisodeSummaries {
    std::vector<GaussianStats> class_stats;
    std::vector<GaussianStats> complement_stats;
    std::vector<Mat> class_pools;
    std::vector<GaussianStats> query_stats;
};

struct SummaryNeeds {
    bool dist_stats = false;
    bool complements = false;
    bool pools = false;
};

EpisodeSummaries build_summaries(const EpisodeTensors& tensors, double lambda,
                                 const SummaryNeeds& needs);

/// Raw branch scores for the fusion head (KL branch optionally contrastive).
EpisodeContext branch_scores(const EpisodeTensors& tensors, const EpisodeSummaries& summaries,
                             int topk, bool cms);
EpisodeContext branch_scores(const LabeledDataset& dataset, const Episode& episode,
                             const Embedding& embedding, double lambda, int topk,
                             bool cms = false);

// ---- evaluation harness ----------------------------------------------------------

/// One row of the measure matrix: a standalone measure or the fused head,
/// optionally with the contrastive wrapper on the distribution branch.
struct RowSpec {
    std::string name;
    bool adm = false;
    MeasureKind kind = MeasureKind::KL;
    bool cms = false;
};

RowSpec parse_row_spec(const std::string& name);
std::vector<RowSpec> default_ablation_rows();

struct EvalOptions {
    EpisodeSpec spec;
    double lambda = 0.1;
    int topk = 1;
    int tasks = 1000;
    int reps = 5;
    uint64_t seed = 0;
    int workers = 1;
};

struct RowResult {
    std::string name;
    double mean_acc = 0.0;
    double ci95 = 0.0;
    std::vector<double> task_accs;
};

/// Scores every row on the same episode stream: per-episode samples are shared
/// across rows, so row differences come from the measures alone. Episode
/// `idx` always comes from episode_stream(seed, idx); results are identical
/// for any worker count.
std::vector<RowResult> evaluate_rows(const LabeledDataset& dataset,
                                     const std::vector<uint32_t>& split_class_ids,
                                     const std::vector<RowSpec>& rows, const EvalOptions& options,
                                     const ModelParams& params);

struct ReportConfig {
    std::string measure;
    bool cms = false;
    int way = 5, shot = 1, query = 15;
    double lambda = 0.1;
    int topk = 1;
    uint64_t seed = 0;
    std::string std_mode = "episode-stats";
};

/// Mean top-1 accuracy with ci95 = 1.96 * sd / sqrt(T), sd the sample standard
/// deviation (n-1) of per-task accuracies; ci95 = 0 for a single task.
struct EvalReport {
    double mean_acc = 0.0;
    double ci95 = 0.0;
    int tasks = 0;
    int reps = 0;
    ReportConfig config;
};

EvalReport make_report(const std::vector<double>& task_accs, int tasks, int reps,
                       ReportConfig config);
nlohmann::ordered_json report_to_json(const EvalReport& report);

EvalReport evaluate(const LabeledDataset& dataset, const std::vector<uint32_t>& split_class_ids,
                    const RowSpec& row, const EvalOptions& options, const ModelParams& params);

}  // namespace adm
