#pragma once

// Two-hop neighborhood sampling for minibatch training.  Each frontier node
// keeps min(fanout, degree) distinct neighbor pairs, chosen uniformly without
// replacement by a per-(node, hop) generator stream so results do not depend
// on traversal order.  Parallel edges are never subsampled: once a node pair
// is retained, all K member edges come along, because the multigraph merge is
// what handles multiplicity and subsampling would bias its reducer.

#include <cstdint>
#include <span>
#include <vector>

#include "txgnn/graph.hpp"
#include "txgnn/rng.hpp"

namespace txgnn {

struct Fanout {
    std::int32_t hop1 = 100;
    std::int32_t hop2 = 100;
};

struct LocalPair {
    std::int32_t a = 0, b = 0;        // local node ids, a/b preserve the global a<=b order
    std::int32_t global_pair = -1;    // index into graph.pairs
    std::vector<std::int32_t> members; // positions in edge_ids, k order
};

struct SampledSubgraph {
    std::vector<std::int32_t> nodes;   // global node ids; local id = position
    std::vector<std::int8_t> hop;      // per local node: 0, 1, or 2
    std::vector<std::int32_t> edge_ids; // global edge indices of retained edges
    std::vector<std::int32_t> edge_src, edge_dst; // local endpoints per retained edge
    std::vector<LocalPair> pairs;
    std::vector<std::int32_t> seed_nodes;  // local ids (node task)
    std::vector<std::int32_t> seed_edges;  // positions in edge_ids (edge task)

    std::int64_t node_count() const { return static_cast<std::int64_t>(nodes.size()); }
    std::int64_t edge_count() const { return static_cast<std::int64_t>(edge_ids.size()); }
};

// Seeds are node ids (node task) or edge ids (edge task).  Seed nodes (both
// endpoints of a seed edge) enter at hop 0, and a seed edge's pair is retained
// outright, before any fanout draw.
SampledSubgraph sample_two_hop(const TransactionGraph& g, std::span<const std::int32_t> seeds,
                               Fanout fanout, std::uint64_t rng_seed);

// Seeded permutation of a seed pool, chunked into batches; each epoch draws a
// fresh permutation by advancing the same generator.
class SeedBatcher {
  public:
    SeedBatcher(std::vector<std::int32_t> pool, std::int64_t batch_size, std::uint64_t seed);
    std::vector<std::vector<std::int32_t>> next_epoch();

  private:
    std::vector<std::int32_t> pool_;
    std::int64_t batch_size_;
    Rng rng_;
};

} // namespace txgnn
