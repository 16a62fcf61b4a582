#include "txgnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "txgnn/errors.hpp"

namespace txgnn {

const char* task_name(Task t) { return t == Task::node ? "node" : "edge"; }

Task task_from_name(const std::string& s) {
    if (s == "node") return Task::node;
    if (s == "edge") return Task::edge;
    throw ConfigError("unknown task '" + s + "' (expected node|edge)");
}

std::vector<std::int32_t> TransactionGraph::neighbours(std::int64_t i) const {
    if (i < 0 || i >= node_count)
        throw IndexError("neighbours: node " + std::to_string(i) + " out of range [0," +
                         std::to_string(node_count) + ")");
    std::vector<std::int32_t> out;
    out.reserve(incident_pairs[i].size());
    for (auto p : incident_pairs[i]) {
        const auto& pg = pairs[p];
        out.push_back(pg.a == static_cast<std::int32_t>(i) ? pg.b : pg.a);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

TransactionGraph finalize_graph(TransactionGraph g) {
    if (g.node_count < 0) throw IntegrityError("negative node count");
    if (g.node_dim < 0 || g.edge_dim < 0) throw IntegrityError("negative feature dim");
    if (static_cast<std::int64_t>(g.node_features.size()) != g.node_count * g.node_dim)
        throw DimensionError("node feature matrix size does not match node_count x node_dim");
    if (static_cast<std::int64_t>(g.edge_features.size()) != g.edge_count() * g.edge_dim)
        throw DimensionError("edge feature matrix size does not match edge_count x edge_dim");

    // Group edges by unordered endpoint pair, first-encounter order.
    g.pairs.clear();
    std::unordered_map<std::uint64_t, std::int32_t> pair_of;
    pair_of.reserve(g.edges.size());
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        auto& ed = g.edges[e];
        if (ed.src < 0 || ed.src >= g.node_count || ed.dst < 0 || ed.dst >= g.node_count)
            throw IntegrityError("edge " + std::to_string(e) + " references node outside [0," +
                                 std::to_string(g.node_count) + ")");
        const std::uint64_t lo = static_cast<std::uint32_t>(std::min(ed.src, ed.dst));
        const std::uint64_t hi = static_cast<std::uint32_t>(std::max(ed.src, ed.dst));
        const std::uint64_t key = (hi << 32) | lo;
        auto [it, fresh] = pair_of.try_emplace(key, static_cast<std::int32_t>(g.pairs.size()));
        if (fresh) {
            PairGroup pg;
            pg.a = static_cast<std::int32_t>(lo);
            pg.b = static_cast<std::int32_t>(hi);
            g.pairs.push_back(std::move(pg));
        }
        ed.pair = it->second;
        g.pairs[it->second].members.push_back(static_cast<std::int32_t>(e));
    }

    // Rank parallel edges.  Preset ranks (every edge has k >= 1, e.g. from a
    // serialized file) are verified for 1..K contiguity; otherwise k follows
    // ascending (timestamp, input index).
    const bool preset =
        !g.edges.empty() && std::all_of(g.edges.begin(), g.edges.end(),
                                        [](const Edge& e) { return e.k >= 1; });
    for (auto& pg : g.pairs) {
        if (preset) {
            std::sort(pg.members.begin(), pg.members.end(), [&](std::int32_t x, std::int32_t y) {
                if (g.edges[x].k != g.edges[y].k) return g.edges[x].k < g.edges[y].k;
                return x < y;
            });
            for (std::size_t r = 0; r < pg.members.size(); ++r) {
                const std::int32_t want = static_cast<std::int32_t>(r) + 1;
                const std::int32_t got = g.edges[pg.members[r]].k;
                if (got != want)
                    throw IntegrityError("pair (" + std::to_string(pg.a) + "," +
                                         std::to_string(pg.b) + "): " +
                                         (r > 0 && got == g.edges[pg.members[r - 1]].k
                                              ? "duplicate k=" + std::to_string(got)
                                              : "k=" + std::to_string(got) + " where " +
                                                    std::to_string(want) + " expected"));
            }
        } else {
            std::stable_sort(pg.members.begin(), pg.members.end(),
                             [&](std::int32_t x, std::int32_t y) {
                                 return g.edges[x].timestamp < g.edges[y].timestamp;
                             });
            for (std::size_t r = 0; r < pg.members.size(); ++r)
                g.edges[pg.members[r]].k = static_cast<std::int32_t>(r) + 1;
        }
    }

    g.incident_pairs.assign(g.node_count, {});
    for (std::size_t p = 0; p < g.pairs.size(); ++p) {
        const auto& pg = g.pairs[p];
        g.incident_pairs[pg.a].push_back(static_cast<std::int32_t>(p));
        if (pg.b != pg.a) g.incident_pairs[pg.b].push_back(static_cast<std::int32_t>(p));
    }

    if (g.node_ids.empty()) {
        g.node_ids.resize(g.node_count);
        for (std::int64_t i = 0; i < g.node_count; ++i) g.node_ids[i] = std::to_string(i);
    }
    validate_graph(g);
    return g;
}

void validate_graph(const TransactionGraph& g) {
    if (static_cast<std::int64_t>(g.node_ids.size()) != g.node_count)
        throw IntegrityError("node id table size mismatch");
    if (static_cast<std::int64_t>(g.incident_pairs.size()) != g.node_count)
        throw IntegrityError("adjacency size mismatch");

    std::vector<std::int32_t> seen(g.edges.size(), 0);
    std::int64_t member_total = 0;
    for (std::size_t p = 0; p < g.pairs.size(); ++p) {
        const auto& pg = g.pairs[p];
        if (pg.members.empty()) throw IntegrityError("empty pair group " + std::to_string(p));
        if (pg.a > pg.b) throw IntegrityError("pair endpoints not in canonical order");
        member_total += static_cast<std::int64_t>(pg.members.size());
        for (std::size_t r = 0; r < pg.members.size(); ++r) {
            const std::int32_t e = pg.members[r];
            if (e < 0 || e >= static_cast<std::int32_t>(g.edges.size()))
                throw IntegrityError("pair member out of range");
            ++seen[e];
            const auto& ed = g.edges[e];
            if (ed.pair != static_cast<std::int32_t>(p))
                throw IntegrityError("edge " + std::to_string(e) + " pair index mismatch");
            if (std::min(ed.src, ed.dst) != pg.a || std::max(ed.src, ed.dst) != pg.b)
                throw IntegrityError("edge " + std::to_string(e) + " endpoints disagree with pair");
            if (ed.k != static_cast<std::int32_t>(r) + 1)
                throw IntegrityError("edge " + std::to_string(e) + " has k=" +
                                     std::to_string(ed.k) + ", expected " + std::to_string(r + 1));
        }
    }
    if (member_total != g.edge_count())
        throw IntegrityError("pair groups do not partition the edge list");
    for (std::size_t e = 0; e < seen.size(); ++e)
        if (seen[e] != 1)
            throw IntegrityError("edge " + std::to_string(e) + " appears in " +
                                 std::to_string(seen[e]) + " pair groups");

    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        const double t = g.edges[e].timestamp;
        if (!std::isfinite(t) || t < 0.0)
            throw IntegrityError("edge " + std::to_string(e) + " has invalid timestamp " +
                                 std::to_string(t));
    }

    if (g.has_labels) {
        const std::int64_t want = g.task == Task::node ? g.node_count : g.edge_count();
        if (static_cast<std::int64_t>(g.labels.size()) != want)
            throw IntegrityError("label count " + std::to_string(g.labels.size()) +
                                 " does not match " + task_name(g.task) + " task (" +
                                 std::to_string(want) + ")");
        for (std::size_t i = 0; i < g.labels.size(); ++i)
            if (g.labels[i] != 0 && g.labels[i] != 1)
                throw IntegrityError("label at index " + std::to_string(i) +
                                     " is not binary: " + std::to_string(g.labels[i]));
    } else if (!g.labels.empty()) {
        throw IntegrityError("labels present but has_labels is false");
    }
}

SplitMasks temporal_split(const TransactionGraph& g, double train_frac, double val_frac,
                          double test_frac) {
    if (train_frac < 0 || val_frac < 0 || test_frac < 0 ||
        std::fabs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
        throw ConfigError("split fractions must be non-negative and sum to 1");
    const std::int64_t n = g.edge_count();

    std::vector<std::int32_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::int32_t x, std::int32_t y) {
        return g.edges[x].timestamp < g.edges[y].timestamp;
    });

    const std::int64_t c1 = std::llround(static_cast<double>(n) * train_frac);
    const std::int64_t c2 = std::llround(static_cast<double>(n) * (train_frac + val_frac));

    SplitMasks m;
    m.edge_split.assign(n, 0);
    for (std::int64_t r = 0; r < n; ++r)
        m.edge_split[order[r]] = r < c1 ? 0 : (r < c2 ? 1 : 2);

    // Latest incident edge = max (timestamp, input index); isolated -> train.
    m.node_split.assign(g.node_count, 0);
    std::vector<std::int32_t> latest(g.node_count, -1);
    auto later = [&](std::int32_t e, std::int32_t best) {
        if (best < 0) return true;
        if (g.edges[e].timestamp != g.edges[best].timestamp)
            return g.edges[e].timestamp > g.edges[best].timestamp;
        return e > best;
    };
    for (std::int32_t e = 0; e < n; ++e) {
        for (std::int32_t end : {g.edges[e].src, g.edges[e].dst}) {
            if (later(e, latest[end])) latest[end] = e;
        }
    }
    for (std::int64_t v = 0; v < g.node_count; ++v)
        if (latest[v] >= 0) m.node_split[v] = m.edge_split[latest[v]];

    if (g.has_labels) {
        const auto& split = g.task == Task::node ? m.node_split : m.edge_split;
        std::array<bool, 3> any_positive{false, false, false};
        for (std::size_t i = 0; i < g.labels.size(); ++i)
            if (g.labels[i] == 1) any_positive[split[i]] = true;
        for (int s = 0; s < 3; ++s) m.missing_positive[s] = !any_positive[s];
    }
    return m;
}

namespace {

// Population mean/sd per column over the selected rows.  A column is flagged
// constant when its sd vanishes relative to its mean, which also absorbs the
// rounding dust a truly constant column can leave behind.
void column_stats(const std::vector<double>& data, std::int64_t dim,
                  const std::vector<std::int8_t>& mask, std::int8_t keep,
                  std::vector<double>& mean, std::vector<double>& sd,
                  std::vector<std::uint8_t>& constant, const char* what) {
    const std::int64_t rows = dim == 0 ? 0 : static_cast<std::int64_t>(data.size()) / dim;
    std::int64_t n = 0;
    for (std::int64_t r = 0; r < rows; ++r) n += mask[r] == keep;
    if (n == 0) throw ContractError(std::string(what) + ": training split selects no rows");

    mean.assign(dim, 0.0);
    sd.assign(dim, 0.0);
    constant.assign(dim, 0);
    for (std::int64_t r = 0; r < rows; ++r) {
        if (mask[r] != keep) continue;
        for (std::int64_t c = 0; c < dim; ++c) mean[c] += data[r * dim + c];
    }
    for (std::int64_t c = 0; c < dim; ++c) mean[c] /= static_cast<double>(n);
    for (std::int64_t r = 0; r < rows; ++r) {
        if (mask[r] != keep) continue;
        for (std::int64_t c = 0; c < dim; ++c) {
            const double d = data[r * dim + c] - mean[c];
            sd[c] += d * d;
        }
    }
    for (std::int64_t c = 0; c < dim; ++c) {
        sd[c] = std::sqrt(sd[c] / static_cast<double>(n));
        if (sd[c] <= 1e-12 * std::max(1.0, std::fabs(mean[c]))) {
            constant[c] = 1;
            sd[c] = 0.0;
        }
    }
}

} // namespace

FeatureStats compute_feature_stats(const TransactionGraph& g, const SplitMasks& splits) {
    if (static_cast<std::int64_t>(splits.edge_split.size()) != g.edge_count() ||
        static_cast<std::int64_t>(splits.node_split.size()) != g.node_count)
        throw DimensionError("compute_feature_stats: masks do not match the graph");
    FeatureStats s;
    column_stats(g.node_features, g.node_dim, splits.node_split, 0, s.node_mean, s.node_sd,
                 s.node_constant, "node features");
    column_stats(g.edge_features, g.edge_dim, splits.edge_split, 0, s.edge_mean, s.edge_sd,
                 s.edge_constant, "edge features");
    return s;
}

namespace {

void apply_stats(std::vector<double>& data, std::int64_t dim, const std::vector<double>& mean,
                 const std::vector<double>& sd, const std::vector<std::uint8_t>& constant,
                 const char* what) {
    if (static_cast<std::int64_t>(mean.size()) != dim ||
        static_cast<std::int64_t>(sd.size()) != dim ||
        static_cast<std::int64_t>(constant.size()) != dim)
        throw DimensionError(std::string(what) + ": stats dimension mismatch (" +
                             std::to_string(mean.size()) + " vs " + std::to_string(dim) + ")");
    const std::int64_t rows = dim == 0 ? 0 : static_cast<std::int64_t>(data.size()) / dim;
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < dim; ++c) {
            double& v = data[r * dim + c];
            v = constant[c] ? 0.0 : (v - mean[c]) / sd[c];
        }
}

} // namespace

TransactionGraph normalize_features(TransactionGraph g, const FeatureStats& stats) {
    apply_stats(g.node_features, g.node_dim, stats.node_mean, stats.node_sd, stats.node_constant,
                "node features");
    apply_stats(g.edge_features, g.edge_dim, stats.edge_mean, stats.edge_sd, stats.edge_constant,
                "edge features");
    return g;
}

} // namespace txgnn
