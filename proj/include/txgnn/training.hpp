#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "txgnn/graph.hpp"
#include "txgnn/metrics.hpp"
#include "txgnn/model.hpp"
#include "txgnn/sampler.hpp"
#include "txgnn/tensor.hpp"

namespace txgnn {

struct TrainConfig {
    double lr = 1e-3;
    double l2 = 1e-5; // L2 regularization strength
    std::int32_t batch = 128;
    std::int32_t epochs = 100;
    std::int32_t patience = 10;
    bool class_weights = false; // inverse-frequency weighting of the loss
    std::uint64_t seed = 1;
    Fanout fanout;

    void check() const; // ConfigError on out-of-range fields
};

/// Sum of squared entries of every weight matrix (biases and scalars are not
/// penalized), scaled by strength. Invalid tensor when strength is zero.
ad::Tensor l2_penalty(const ModelParams& params, double strength);

/// Mean cross entropy plus the L2 penalty. With strength 0 this is exactly the
/// plain cross entropy.
ad::Tensor training_loss(const ad::Tensor& logits, std::span<const std::int32_t> labels,
                         const ModelParams& params, double l2_strength,
                         std::span<const double> class_weights = {});

/// Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8). Missing
/// gradients count as zero; non-finite gradients abort with a GradientError
/// naming the tensor.
class Adam {
public:
    Adam(const ModelParams& params, double lr);
    void step();
    std::int64_t steps() const { return t_; }

private:
    struct Slot {
        std::string name;
        ad::Tensor tensor;
        std::vector<double> m, v;
    };
    std::vector<Slot> slots_;
    double lr_;
    std::int64_t t_ = 0;
};

/// Stops once the monitored metric has not improved for `patience` epochs.
/// Improvement is a strict increase.
class EarlyStopper {
public:
    explicit EarlyStopper(std::int32_t patience);
    /// Feed one epoch's metric; returns true when it sets a new best.
    bool observe(double metric);
    bool should_stop() const { return since_best_ >= patience_; }
    std::int32_t best_epoch() const { return best_epoch_; } // 1-based, 0 = none
    double best_metric() const { return best_metric_; }

private:
    std::int32_t patience_;
    std::int32_t epoch_ = 0;
    std::int32_t best_epoch_ = 0;
    std::int32_t since_best_ = 0;
    double best_metric_ = 0.0;
};

struct EpochRow {
    std::int32_t epoch = 0; // 1-based
    double train_loss = 0.0;
    double val_f1_min = 0.0;
    double val_macro_f1 = 0.0;
    double val_pr_auc = 0.0;
};

struct Checkpoint {
    ModelParams params;
    ModelConfig config; // time_scale and pna_delta resolved at training time
    Fanout fanout;
    FeatureStats stats; // normalization applied to the raw features
    std::int32_t epoch = 0;
    double val_f1_min = 0.0;
};

struct TrainResult {
    Checkpoint best;
    std::vector<EpochRow> trace;
    std::int32_t stopped_epoch = 0;
};

/// Value-copy of a parameter set (checkpoints must not alias live training
/// tensors).
ModelParams clone_params(const ModelParams& src, const ModelConfig& cfg);

/// Softmax-scale for the temporal weights: train timestamp range divided by
/// tau, 1.0 when the training split has no spread.
double derive_time_scale(const TransactionGraph& g, const SplitMasks& splits, double tau);

/// PNA degree normalizer: mean of log(1 + incident pair count) over training
/// nodes, 1.0 when degenerate.
double derive_pna_delta(const TransactionGraph& g, const SplitMasks& splits);

/// Full training run: temporal 60/20/20 split, train-statistics normalization,
/// minibatched two-hop sampling, Adam, per-epoch validation, early stopping on
/// validation minority-class F1. Returns the best checkpoint, not the last.
TrainResult train(const TransactionGraph& g, const ModelConfig& model_cfg,
                  const TrainConfig& train_cfg);

/// Deterministic chunked evaluation of one split (0 train, 1 val, 2 test) on
/// an already-normalized graph. Sampling streams depend only on the split and
/// chunk index, so stored validation scores reproduce exactly.
metrics::EvalReport evaluate_split(const TransactionGraph& g, const SplitMasks& splits,
                                   int split_id, const ModelParams& params,
                                   const ModelConfig& cfg, Fanout fanout);

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace txgnn
