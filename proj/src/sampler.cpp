#include "txgnn/sampler.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "txgnn/errors.hpp"

namespace txgnn {

SampledSubgraph sample_two_hop(const TransactionGraph& g, std::span<const std::int32_t> seeds,
                               Fanout fanout, std::uint64_t rng_seed) {
    if (seeds.empty()) throw ContractError("sample_two_hop: empty seed set");
    if (fanout.hop1 < 1 || fanout.hop2 < 1)
        throw ConfigError("sample_two_hop: fanouts must be >= 1");

    SampledSubgraph sub;
    std::vector<std::int32_t> local_of(g.node_count, -1);
    auto add_node = [&](std::int32_t global, std::int8_t hop) {
        if (local_of[global] >= 0) return local_of[global];
        const auto local = static_cast<std::int32_t>(sub.nodes.size());
        local_of[global] = local;
        sub.nodes.push_back(global);
        sub.hop.push_back(hop);
        return local;
    };

    std::vector<std::uint8_t> pair_retained(g.pair_count(), 0);
    std::vector<std::int32_t> retained; // pair ids, retention order
    auto retain_pair = [&](std::int32_t p) {
        if (!pair_retained[p]) {
            pair_retained[p] = 1;
            retained.push_back(p);
        }
    };

    std::unordered_set<std::int32_t> seed_edge_ids;
    if (g.task == Task::edge) {
        for (auto e : seeds) {
            if (e < 0 || e >= g.edge_count())
                throw IndexError("sample_two_hop: seed edge " + std::to_string(e) +
                                 " out of range");
            seed_edge_ids.insert(e);
            add_node(g.edges[e].src, 0);
            add_node(g.edges[e].dst, 0);
            retain_pair(g.edges[e].pair);
        }
    } else {
        for (auto v : seeds) {
            if (v < 0 || v >= g.node_count)
                throw IndexError("sample_two_hop: seed node " + std::to_string(v) +
                                 " out of range");
            add_node(v, 0);
        }
    }

    // Expand hop-0 nodes with the first fanout, then the hop-1 arrivals with
    // the second.  Each frontier node draws from its own generator stream so
    // the choice is independent of traversal order.
    std::size_t frontier_begin = 0;
    for (int hop = 0; hop < 2; ++hop) {
        const std::int32_t budget = hop == 0 ? fanout.hop1 : fanout.hop2;
        const std::size_t frontier_end = sub.nodes.size();
        for (std::size_t idx = frontier_begin; idx < frontier_end; ++idx) {
            const std::int32_t u = sub.nodes[idx];
            std::vector<std::int32_t> candidates = g.incident_pairs[u];
            const auto take = std::min<std::size_t>(budget, candidates.size());
            if (take < candidates.size()) {
                Rng rng(derive_seed(rng_seed, static_cast<std::uint64_t>(u),
                                    static_cast<std::uint64_t>(hop)));
                rng.partial_shuffle(candidates, take);
                candidates.resize(take);
                std::sort(candidates.begin(), candidates.end());
            }
            for (auto p : candidates) {
                retain_pair(p);
                const auto& pg = g.pairs[p];
                const std::int32_t other = pg.a == u ? pg.b : pg.a;
                add_node(other, static_cast<std::int8_t>(hop + 1));
            }
        }
        frontier_begin = frontier_end;
    }

    std::unordered_map<std::int32_t, std::int32_t> seed_edge_pos;
    for (auto p : retained) {
        const auto& pg = g.pairs[p];
        LocalPair lp;
        lp.global_pair = p;
        lp.a = local_of[pg.a];
        lp.b = local_of[pg.b];
        for (auto e : pg.members) {
            const auto pos = static_cast<std::int32_t>(sub.edge_ids.size());
            sub.edge_ids.push_back(e);
            sub.edge_src.push_back(local_of[g.edges[e].src]);
            sub.edge_dst.push_back(local_of[g.edges[e].dst]);
            lp.members.push_back(pos);
            if (seed_edge_ids.count(e)) seed_edge_pos.emplace(e, pos);
        }
        sub.pairs.push_back(std::move(lp));
    }
    // Seed rows align with the incoming seed order so callers can pair model
    // outputs with labels positionally.
    if (g.task == Task::edge)
        for (auto e : seeds) sub.seed_edges.push_back(seed_edge_pos.at(e));
    else
        for (auto v : seeds) sub.seed_nodes.push_back(local_of[v]);
    return sub;
}

SeedBatcher::SeedBatcher(std::vector<std::int32_t> pool, std::int64_t batch_size,
                         std::uint64_t seed)
    : pool_(std::move(pool)), batch_size_(batch_size), rng_(seed) {
    if (pool_.empty()) throw ContractError("SeedBatcher: empty seed pool");
    if (batch_size_ < 1) throw ContractError("SeedBatcher: batch size must be >= 1");
}

std::vector<std::vector<std::int32_t>> SeedBatcher::next_epoch() {
    std::vector<std::int32_t> order = pool_;
    rng_.shuffle(order);
    std::vector<std::vector<std::int32_t>> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size_) {
        const auto end = std::min(order.size(), start + static_cast<std::size_t>(batch_size_));
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    return batches;
}

} // namespace txgnn
