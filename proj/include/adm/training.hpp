#pragma once

#include "adm/model.hpp"

namespace adm {

enum class TrainableSet { FusionOnly, FusionAndEmbedding };

TrainableSet parse_trainable_set(const std::string& name);
std::string trainable_set_name(TrainableSet t);

struct TrainConfig {
    int epochs = 10;
    int episodes_per_epoch = 200;
    double lr = 1e-3;
    double lr_decay = 0.5;
    int decay_every = 10;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_adam = 1e-8;
    TrainableSet trainable = TrainableSet::FusionOnly;
    EpisodeSpec spec;
    double lambda = 0.1;
    int topk = 1;
    bool cms = false;

    void validate() const;
};

/// Numerically stable -ln softmax(scores)[label].
double softmax_cross_entropy(const Vec& scores, int label);
Vec softmax(const Vec& scores);

struct LossResult {
    double loss = 0.0;
    std::vector<Vec> fused;  // per query
};

/// Mean cross-entropy of the fused scores over the episode's queries.
LossResult episode_loss(const LabeledDataset& dataset, const Episode& episode,
                        const ModelParams& params, const TrainConfig& config);

/// Gradients of episode_loss. Fusion parameters (w, gamma, beta) are always
/// covered; with FusionAndEmbedding the linear embedding is differentiated
/// through the KL mean/covariance path and the I2C cosine path, the top-k
/// selection held fixed at its forward-pass indices.
struct ParamGrads {
    std::array<double, 2> w{0.0, 0.0};
    std::array<double, 2> gamma{0.0, 0.0};
    std::array<double, 2> beta{0.0, 0.0};
    Mat embedding;  // empty unless the embedding is trainable
};

ParamGrads grad(const LabeledDataset& dataset, const Episode& episode, const ModelParams& params,
                const TrainConfig& config);

// ---- flat parameter views (fixed order: w0 w1 gamma0 gamma1 beta0 beta1,
// then the embedding row-major when trainable) ----------------------------------

Vec flatten_params(const ModelParams& params, TrainableSet trainable);
void apply_flat_params(ModelParams& params, const Vec& flat, TrainableSet trainable);
Vec flatten_grads(const ParamGrads& grads, TrainableSet trainable);

struct AdamState {
    Vec m, v;
    int64_t step = 0;

    explicit AdamState(size_t size = 0) : m(size, 0.0), v(size, 0.0) {}
};

/// Bias-corrected Adam update, in place.
void adam_step(Vec& params, const Vec& grads, AdamState& state, double lr,
               const TrainConfig& config);

struct TrainResult {
    ModelParams params;
    Vec epoch_mean_loss;
};

/// Episodic training: epochs x episodes_per_epoch tasks, one Adam step each,
/// lr multiplied by lr_decay every decay_every epochs. Episode t of the whole
/// run uses episode_stream(seed, t). Deterministic for a fixed seed. Batch
/// standardization statistics are tracked as an EMA (momentum 0.1) into the
/// head's running stats.
TrainResult train(const LabeledDataset& dataset, const std::vector<uint32_t>& split_class_ids,
                  const TrainConfig& config, ModelParams init, uint64_t seed);

}  // namespace adm
