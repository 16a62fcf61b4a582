#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "txgnn/graph.hpp"
#include "txgnn/sampler.hpp"
#include "txgnn/tensor.hpp"

namespace txgnn {

/// Whether parallel edges between a node pair are merged into one carrier
/// before message passing (with_agg) or passed through individually
/// (without_agg).
enum class Mode { with_agg, without_agg };

/// Neighborhood aggregation backend.
enum class Backend { gin, pna };

/// What the temporal weight multiplies: the whole message or only the
/// edge-embedding part of its input.
enum class AlphaScope { full_message, edge_only };

const char* mode_name(Mode m);
Mode mode_from_name(const std::string& s);
const char* backend_name(Backend b);
Backend backend_from_name(const std::string& s);
const char* alpha_scope_name(AlphaScope s);
AlphaScope alpha_scope_from_name(const std::string& s);

struct ModelConfig {
    std::int32_t layers = 2;
    std::int32_t node_in = 1;
    std::int32_t edge_in = 1;
    std::int32_t node_hidden = 64;
    std::int32_t edge_hidden = 64;
    Mode mode = Mode::with_agg;
    Backend backend = Backend::gin;
    ad::Reduce timestamp_reducer = ad::Reduce::max;
    bool temporal = true;
    AlphaScope alpha_scope = AlphaScope::full_message;
    Task task = Task::edge;
    std::int32_t classes = 2;
    /// Softmax span: the training pipeline divides timestamps by
    /// time_scale = (train timestamp range) / tau before weighting.
    double tau = 5.0;
    double time_scale = 1.0;
    /// Mean of log(degree+1) over training nodes, used by the PNA scalers.
    double pna_delta = 1.0;

    void check() const; // throws ConfigError on out-of-range fields
    std::int32_t head_input_dim() const;
};

/// One message-passing round's trainable tensors. Backend-specific slots are
/// left invalid for the other backend so parameter enumeration stays exact.
struct LayerParams {
    ad::Tensor msg_W, msg_b;  // message projection
    ad::Tensor eps;           // gin self-weight, scalar
    ad::Tensor pna_W, pna_b;  // pna post-aggregation projection
    ad::Tensor upd_W, upd_b;  // node update
    ad::Tensor eupd_W, eupd_b; // edge update
};

struct ModelParams {
    ad::Tensor x_in_W, x_in_b; // node input embedding
    ad::Tensor z_in_W, z_in_b; // edge input embedding
    std::vector<LayerParams> layers;
    ad::Tensor head1_W, head1_b; // prediction head, hidden layer
    ad::Tensor head2_W, head2_b; // prediction head, output layer

    /// Glorot-uniform weights, zero biases and eps.
    static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);

    /// Stable name → tensor enumeration (tensors alias the stored ones).
    std::vector<std::pair<std::string, ad::Tensor>> named() const;
    void zero_grad() const;
};

/// Time-softmax weights for one receiving neighborhood: given the carriers'
/// timestamps, returns one weight per carrier,
///   alpha_k = 1 + exp((t_k - max_t) / time_scale) / sum_r exp((t_r - max_t) / time_scale).
/// Each weight lies in (1, 2] and the weights minus one sum to exactly one.
/// Works for both the merged-pair form (one timestamp per pair) and the
/// per-edge form (one timestamp per incident edge).
std::vector<double> temporal_weights(const std::vector<double>& timestamps, double time_scale);

/// Reducer over a pair's member-edge timestamps (max by default upstream).
double effective_timestamp(const std::vector<double>& timestamps, ad::Reduce reducer);

/// Mean of the member-edge embedding rows for every pair, members visited in
/// ascending transaction order so the result is independent of edge storage
/// order. edge_z holds one row per subgraph edge position.
ad::Tensor merge_parallel_edges(const ad::Tensor& edge_z, const std::vector<LocalPair>& pairs);

struct ForwardResult {
    ad::Tensor node_x;  // [local nodes × node_hidden] after the final round
    ad::Tensor carrier_z; // [carriers × edge_hidden]: pairs in with_agg, edges otherwise
    ad::Tensor edge_z0; // [subgraph edges × edge_hidden] input embeddings
    std::vector<std::int32_t> carrier_of_edge; // edge position → carrier row
};

/// L rounds of {merge (with_agg only) → temporal weights → aggregate →
/// node update → edge update} over a sampled subgraph. Node and edge features
/// are read from the graph (already normalized by the caller).
ForwardResult forward(const TransactionGraph& g, const SampledSubgraph& sub,
                      const ModelParams& params, const ModelConfig& cfg);

/// Head logits for the subgraph's seed rows, in seed order. Node task: MLP on
/// the seed node's final embedding. Edge task: MLP on
/// concat(x_src, x_dst, edge z⁰, carrier z^L) so parallel edges score
/// distinctly even when pairs were merged.
ad::Tensor predict_logits(const TransactionGraph& g, const SampledSubgraph& sub,
                          const ForwardResult& fwd, const ModelParams& params,
                          const ModelConfig& cfg);

/// forward + predict_logits.
ad::Tensor predict(const TransactionGraph& g, const SampledSubgraph& sub,
                   const ModelParams& params, const ModelConfig& cfg);

} // namespace txgnn
