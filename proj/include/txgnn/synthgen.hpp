#pragma once

// Synthetic transaction-multigraph generator.  Background activity is evenly
// spaced parallel-edge traffic between random account pairs; illicit activity
// arrives as motifs (repeated-pair bursts, fan-in, fan-out, cycles) packed
// into a short window near the end of a participant's history.  Every illicit
// motif is planted alongside a licit "twin" with the same shape, node marker,
// and amount distribution whose transactions are spread over a long window,
// so static features alone cannot separate the classes: the timing is the
// signal.

#include <cstdint>

#include "txgnn/graph.hpp"

namespace txgnn {

struct MotifMix {
    double burst = 1.0;   // many transfers between one pair
    double fan_in = 1.0;  // many senders into one account
    double fan_out = 1.0; // one account paying out to many
    double cycle = 1.0;   // funds moving around a ring
};

struct GenSpec {
    std::int64_t nodes = 2000;
    double target_edges = 20000.0;
    double horizon = 2.0e6;       // seconds covered by the dataset
    double illicit_ratio = 0.02;  // target fraction of illicit edges
    MotifMix mix;
    double burst_window = 3600.0; // width of the illicit packing window
    double intensity = 17.92;     // target mean parallel edges per pair
    // Lean defaults on purpose: unique per-node or per-edge noise columns act
    // as fingerprints that let a classifier memorize the training split
    // instead of learning anything transferable.
    std::int64_t node_dim = 1;
    std::int64_t edge_dim = 1;
    Task task = Task::edge;
    std::uint64_t seed = 1;

    void check() const; // throws SpecError
};

struct GenStats {
    std::int64_t nodes = 0;
    std::int64_t edges = 0;
    std::int64_t pairs = 0;
    double illicit_ratio = 0.0; // fraction of label-1 entries
    double mean_parallel = 0.0; // edges per pair group
    double edges_per_node = 0.0;
};

// Deterministic per seed; labels mark motif edges (edge task) or motif
// participants (node task).
TransactionGraph generate(const GenSpec& spec);

GenStats stats(const TransactionGraph& g);

} // namespace txgnn
