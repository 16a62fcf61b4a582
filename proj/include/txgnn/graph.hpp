#pragma once

// Transaction multigraph: directed, timestamped, parallel-edge aware.  Nodes
// and edges carry dense feature rows; parallel edges between an unordered
// endpoint pair form a pair group whose members are ranked k = 1..K by
// ascending timestamp (stable on input order).  Graphs are immutable after
// finalize_graph(); samplers and trainers share them read-only.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace txgnn {

enum class Task { node, edge };

const char* task_name(Task t);
Task task_from_name(const std::string& s);

struct Edge {
    std::int32_t src = 0;
    std::int32_t dst = 0;
    std::int32_t pair = -1; // pair-group index, assigned by finalize_graph
    std::int32_t k = 0;     // 1-based rank within the pair group
    double timestamp = 0.0; // seconds since dataset epoch
};

struct PairGroup {
    std::int32_t a = 0, b = 0;         // unordered endpoints, a <= b
    std::vector<std::int32_t> members; // edge indices in k order
};

struct TransactionGraph {
    std::int64_t node_count = 0;
    std::int64_t node_dim = 0;
    std::int64_t edge_dim = 0;
    std::vector<double> node_features; // row-major [node_count x node_dim]
    std::vector<double> edge_features; // row-major [edge_count x edge_dim]
    std::vector<Edge> edges;
    std::vector<PairGroup> pairs;
    // Pair ids incident to each node, ascending; self-loop pairs appear once.
    std::vector<std::vector<std::int32_t>> incident_pairs;

    Task task = Task::edge;
    bool has_labels = false;
    std::vector<std::int32_t> labels; // per node (node task) or per edge (edge task)

    std::vector<std::string> node_ids; // external ids in dense-id order
    std::vector<std::string> node_feature_names;
    std::vector<std::string> edge_feature_names;

    std::int64_t edge_count() const { return static_cast<std::int64_t>(edges.size()); }
    std::int64_t pair_count() const { return static_cast<std::int64_t>(pairs.size()); }

    // Distinct neighbor ids of i (either direction), ascending.
    std::vector<std::int32_t> neighbours(std::int64_t i) const;
};

// Builds pair groups (first-encounter order), assigns k by ascending
// (timestamp, input index) unless every edge arrives with k preset (then the
// preset ranks are verified and used), builds adjacency, and validates.
TransactionGraph finalize_graph(TransactionGraph g);

// Checks every structural invariant; throws IntegrityError on violation.
void validate_graph(const TransactionGraph& g);

// ---- temporal split ---------------------------------------------------------

struct SplitMasks {
    // 0 = train, 1 = val, 2 = test.
    std::vector<std::int8_t> edge_split;
    // Split of each node's latest incident edge; isolated nodes go to train.
    std::vector<std::int8_t> node_split;
    // Per split: true when the split holds no label-1 example (only meaningful
    // when the graph has labels).
    std::array<bool, 3> missing_positive{false, false, false};
};

// Stable positional split: edges ordered by (timestamp, input index), then cut
// at round(n * fraction) boundaries, so sizes are exact even under ties and
// tied edges earlier in input order land in the earlier split.
SplitMasks temporal_split(const TransactionGraph& g, double train_frac = 0.6,
                          double val_frac = 0.2, double test_frac = 0.2);

// ---- feature normalization ----------------------------------------------------

struct FeatureStats {
    std::vector<double> node_mean, node_sd;
    std::vector<std::uint8_t> node_constant;
    std::vector<double> edge_mean, edge_sd;
    std::vector<std::uint8_t> edge_constant;
};

// Per-column mean and population standard deviation over the training split
// only (train edges for edge features, train nodes for node features).
FeatureStats compute_feature_stats(const TransactionGraph& g, const SplitMasks& splits);

// z-scores all features with the given stats; constant columns map to 0.
// Timestamps are untouched (temporal weighting owns its own normalization).
TransactionGraph normalize_features(TransactionGraph g, const FeatureStats& stats);

// ---- dataset files ------------------------------------------------------------

struct DatasetSchema {
    Task task = Task::edge;
    std::vector<std::string> edge_features; // empty -> infer from header
    std::vector<std::string> node_features; // empty -> infer from header
    std::string label_column = "label";
};

// Edge CSV: header `src,dst,timestamp[,k],<feature columns...>[,label]`.
// External ids are remapped to dense integers in first-appearance order.
// The result is finalized; node features default to a single constant column
// until a node table is merged.
TransactionGraph load_edge_csv(const std::string& path, const DatasetSchema& schema);

// Directory layout: manifest.txt (key=value), edges.csv, optional nodes.csv
// (`node_id,<feature columns...>[,label]`; must cover every endpoint).
TransactionGraph load_dataset(const std::string& dir);
void save_dataset(const TransactionGraph& g, const std::string& dir);

} // namespace txgnn
