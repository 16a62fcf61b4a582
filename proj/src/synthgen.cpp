#include "txgnn/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "txgnn/errors.hpp"
#include "txgnn/rng.hpp"

namespace txgnn {

namespace {

constexpr double kLogAmountMean = 4.6; // exp(4.6) ~ a hundred units
constexpr double kLogAmountSd = 1.0;
constexpr double kMotifAmountShift = 0.35; // weak: distributions overlap ~86%
// Fraction of the horizon separating a participant's routine activity from
// its burst, and the width over which a twin spreads the same transactions:
// wide enough that a twin is routine traffic, narrow enough that twin edges
// land in the same temporal band as their center.
constexpr double kQuietFraction = 0.20;
constexpr double kTwinSpreadFraction = 0.08;
// Motifs land throughout [kBandLo, kBandHi] x horizon so that every temporal
// split carries positives.
constexpr double kBandLo = 0.25;
constexpr double kBandHi = 0.95;

enum class MotifKind { burst, fan_in, fan_out, cycle };

// Shape drawn once per motif and shared by the illicit copy and its twin.
struct MotifShape {
    MotifKind kind;
    int arms = 0;                // senders / receivers / ring length
    std::vector<int> arm_edges; // transactions per arm (burst: one arm)
    int total_edges() const {
        int n = 0;
        for (int k : arm_edges) n += k;
        return n;
    }
    int node_need() const { return kind == MotifKind::burst ? 2 : arms + (kind != MotifKind::cycle); }
};

struct Builder {
    const GenSpec& spec;
    Rng rng;
    std::vector<Edge> edges;
    std::vector<double> edge_feats;
    std::vector<std::int8_t> edge_illicit;
    std::vector<std::int8_t> node_marker;
    std::vector<std::int8_t> node_illicit;
    std::vector<double> node_cap; // latest allowed background timestamp
    std::vector<std::int8_t> used_by_motif;
    std::vector<std::int64_t> participants;
    std::unordered_set<std::int64_t> seen_pairs;
    std::int64_t planted_pairs = 0;

    explicit Builder(const GenSpec& s)
        : spec(s), rng(derive_seed(s.seed, 0x73796e7467656eULL, 0)) {
        node_marker.assign(s.nodes, 0);
        node_illicit.assign(s.nodes, 0);
        node_cap.assign(s.nodes, s.horizon);
        used_by_motif.assign(s.nodes, 0);
    }

    bool claim_pair(std::int64_t a, std::int64_t b) {
        return seen_pairs.insert(std::min(a, b) * spec.nodes + std::max(a, b)).second;
    }

    // Amounts repeat per relationship (standing orders, structured transfers)
    // and sit on round numbers, so no single transaction is a fingerprint.
    double draw_amount(bool motif) {
        const double shift = motif ? kMotifAmountShift : 0.0;
        const double raw = std::exp(rng.gaussian(kLogAmountMean + shift, kLogAmountSd));
        const double unit = std::pow(10.0, std::floor(std::log10(raw)) - 1.0);
        return std::round(raw / unit) * unit;
    }

    void push_edge(std::int64_t src, std::int64_t dst, double ts, double amount,
                   bool illicit) {
        Edge e;
        e.src = static_cast<std::int32_t>(src);
        e.dst = static_cast<std::int32_t>(dst);
        e.timestamp = std::floor(ts); // transaction logs carry whole seconds
        edges.push_back(e);
        edge_illicit.push_back(illicit ? 1 : 0);
        edge_feats.push_back(amount);
        for (std::int64_t c = 1; c < spec.edge_dim; ++c) edge_feats.push_back(rng.gaussian());
    }

    MotifShape draw_shape(MotifKind kind) {
        MotifShape s;
        s.kind = kind;
        switch (kind) {
        case MotifKind::burst:
            s.arms = 1;
            s.arm_edges = {rng.uniform_int(8, 14)};
            break;
        case MotifKind::fan_in:
        case MotifKind::fan_out:
            s.arms = rng.uniform_int(5, 8);
            for (int a = 0; a < s.arms; ++a) s.arm_edges.push_back(rng.uniform_int(1, 3));
            break;
        case MotifKind::cycle:
            s.arms = rng.uniform_int(4, 6);
            for (int a = 0; a < s.arms; ++a) s.arm_edges.push_back(rng.uniform_int(1, 2));
            break;
        }
        return s;
    }

    // Draws distinct, previously unused accounts for one motif.
    std::vector<std::int64_t> draw_nodes(int need) {
        std::vector<std::int64_t> out;
        int attempts = 0;
        while (static_cast<int>(out.size()) < need) {
            if (++attempts > 200 * need)
                throw SpecError("illicit ratio needs more motif accounts than the graph has");
            const auto v = static_cast<std::int64_t>(rng.uniform_u64(spec.nodes));
            if (used_by_motif[v]) continue;
            used_by_motif[v] = 1;
            out.push_back(v);
        }
        return out;
    }

    // Plants one motif instance.  Illicit copies pack every transaction into
    // [center - burst_window, center] and silence the participants' later
    // background; twins spread the same shape over a long window.
    void plant(const MotifShape& shape, double center, bool illicit) {
        const auto members = draw_nodes(shape.node_need());
        const double width = illicit ? spec.burst_window : kTwinSpreadFraction * spec.horizon;
        auto stamp = [&] { return std::max(1.0, rng.uniform(center - width, center)); };

        switch (shape.kind) {
        case MotifKind::burst: {
            claim_pair(members[0], members[1]);
            const double amt = draw_amount(true);
            for (int i = 0; i < shape.arm_edges[0]; ++i)
                push_edge(members[0], members[1], stamp(), amt, illicit);
            break;
        }
        case MotifKind::fan_in:
            for (int a = 0; a < shape.arms; ++a) {
                claim_pair(members[a + 1], members[0]);
                const double amt = draw_amount(true);
                for (int i = 0; i < shape.arm_edges[a]; ++i)
                    push_edge(members[a + 1], members[0], stamp(), amt, illicit);
            }
            break;
        case MotifKind::fan_out:
            for (int a = 0; a < shape.arms; ++a) {
                claim_pair(members[0], members[a + 1]);
                const double amt = draw_amount(true);
                for (int i = 0; i < shape.arm_edges[a]; ++i)
                    push_edge(members[0], members[a + 1], stamp(), amt, illicit);
            }
            break;
        case MotifKind::cycle:
            for (int a = 0; a < shape.arms; ++a) {
                claim_pair(members[a], members[(a + 1) % shape.arms]);
                const double amt = draw_amount(true);
                for (int i = 0; i < shape.arm_edges[a]; ++i)
                    push_edge(members[a], members[(a + 1) % shape.arms], stamp(), amt,
                              illicit);
            }
            break;
        }
        planted_pairs += shape.kind == MotifKind::burst ? 1 : shape.arms;

        for (auto v : members) {
            node_marker[v] = 1;
            participants.push_back(v);
            if (illicit) {
                node_illicit[v] = 1;
                node_cap[v] = std::min(node_cap[v], center - kQuietFraction * spec.horizon);
            }
        }
    }

    MotifKind pick_kind() {
        const double total =
            spec.mix.burst + spec.mix.fan_in + spec.mix.fan_out + spec.mix.cycle;
        double u = rng.uniform() * total;
        if ((u -= spec.mix.burst) < 0.0) return MotifKind::burst;
        if ((u -= spec.mix.fan_in) < 0.0) return MotifKind::fan_in;
        if ((u -= spec.mix.fan_out) < 0.0) return MotifKind::fan_out;
        return MotifKind::cycle;
    }

    void plant_motifs() {
        const double mix_total =
            spec.mix.burst + spec.mix.fan_in + spec.mix.fan_out + spec.mix.cycle;
        const auto target =
            static_cast<std::int64_t>(std::llround(spec.target_edges * spec.illicit_ratio));
        if (target <= 0 || mix_total <= 0.0) return;

        // Centers follow a golden-ratio sequence with a random phase: bursts
        // and twins alike cover the whole band evenly, so each temporal split
        // holds a steady share of both.
        const double lo = kBandLo * spec.horizon;
        const double hi = kBandHi * spec.horizon;
        double cursor = rng.uniform();
        auto next_center = [&] {
            cursor += 0.6180339887498949;
            cursor -= std::floor(cursor);
            return lo + cursor * (hi - lo);
        };

        std::int64_t planted = 0;
        while (planted < target) {
            const MotifShape shape = draw_shape(pick_kind());
            plant(shape, next_center(), true);
            plant(shape, next_center(), false);
            planted += shape.total_edges();
        }
    }

    // Every motif participant gets one routine trading partner, so its burst
    // (or the twin's spread copy) always has ordinary traffic to contrast
    // with: for illicit members the routine pair goes quiet well before the
    // burst, for twins it keeps running to the end of the horizon.
    void attach_partners() {
        const double mean_k = spec.intensity;
        for (auto v : participants) {
            std::int64_t w;
            int attempts = 0;
            do {
                if (++attempts > 400)
                    throw SpecError("illicit ratio needs more motif accounts than the graph has");
                w = static_cast<std::int64_t>(rng.uniform_u64(spec.nodes));
            } while (w == v || used_by_motif[w] || !claim_pair(v, w));
            ++planted_pairs;

            const int k = 1 + rng.poisson(mean_k - 1.0);
            const double amt = draw_amount(false);
            const double cap = std::min(node_cap[v], node_cap[w]);
            const auto step =
                std::max<std::int64_t>(1, static_cast<std::int64_t>(cap / (k + 1)));
            const auto phase = 1 + static_cast<std::int64_t>(rng.uniform_u64(step));
            for (int i = 0; i < k; ++i)
                push_edge(v, w, static_cast<double>(phase + i * step), amt, false);
        }
    }

    void lay_background() {
        const auto want_pairs = static_cast<std::int64_t>(
            std::llround(spec.target_edges / spec.intensity));
        const std::int64_t n_pairs = std::max<std::int64_t>(1, want_pairs - planted_pairs);
        const double budget = spec.target_edges - static_cast<double>(edges.size());
        const double mean_k = std::max(1.0, budget / static_cast<double>(n_pairs));

        for (std::int64_t p = 0; p < n_pairs; ++p) {
            std::int64_t a, b;
            do {
                a = static_cast<std::int64_t>(rng.uniform_u64(spec.nodes));
                b = static_cast<std::int64_t>(rng.uniform_u64(spec.nodes));
            } while (a == b || !claim_pair(a, b));

            const int k = 1 + rng.poisson(mean_k - 1.0);
            const double amt = draw_amount(false);
            // Routine traffic: exactly evenly spaced whole-second stamps,
            // ending before any burst the endpoints participate in.
            const double cap = std::min(node_cap[a], node_cap[b]);
            const auto step = std::max<std::int64_t>(
                1, static_cast<std::int64_t>(cap / (k + 1)));
            const auto phase = 1 + static_cast<std::int64_t>(rng.uniform_u64(step));
            for (int i = 0; i < k; ++i)
                push_edge(a, b, static_cast<double>(phase + i * step), amt, false);
        }
    }

    TransactionGraph build() {
        plant_motifs();
        attach_partners();
        lay_background();

        TransactionGraph g;
        g.node_count = spec.nodes;
        g.node_dim = spec.node_dim;
        g.edge_dim = spec.edge_dim;
        g.edges = std::move(edges);
        g.edge_features = std::move(edge_feats);
        g.node_features.resize(spec.nodes * spec.node_dim);
        for (std::int64_t v = 0; v < spec.nodes; ++v) {
            g.node_features[v * spec.node_dim] = node_marker[v] ? 1.0 : 0.0;
            for (std::int64_t c = 1; c < spec.node_dim; ++c)
                g.node_features[v * spec.node_dim + c] = rng.gaussian();
        }
        g.node_ids.resize(spec.nodes);
        for (std::int64_t v = 0; v < spec.nodes; ++v) g.node_ids[v] = std::to_string(v);
        g.node_feature_names = {"marker"};
        for (std::int64_t c = 1; c < spec.node_dim; ++c)
            g.node_feature_names.push_back("noise" + std::to_string(c));
        g.edge_feature_names = {"amount"};
        for (std::int64_t c = 1; c < spec.edge_dim; ++c)
            g.edge_feature_names.push_back("noise" + std::to_string(c));

        g.task = spec.task;
        g.has_labels = true;
        if (spec.task == Task::edge) {
            g.labels.assign(edge_illicit.begin(), edge_illicit.end());
        } else {
            g.labels.assign(node_illicit.begin(), node_illicit.end());
        }
        return finalize_graph(std::move(g));
    }
};

} // namespace

void GenSpec::check() const {
    if (nodes < 2) throw SpecError("need at least two accounts");
    if (target_edges < 1.0) throw SpecError("target_edges must be positive");
    if (horizon <= burst_window)
        throw SpecError("horizon must exceed the burst window");
    if (burst_window <= 0.0) throw SpecError("burst_window must be positive");
    if (illicit_ratio < 0.0 || illicit_ratio >= 1.0)
        throw SpecError("illicit_ratio must lie in [0, 1)");
    if (intensity < 1.0) throw SpecError("intensity must be at least 1");
    if (node_dim < 1 || edge_dim < 1) throw SpecError("feature dims must be positive");
    if (mix.burst < 0.0 || mix.fan_in < 0.0 || mix.fan_out < 0.0 || mix.cycle < 0.0)
        throw SpecError("motif mix weights must be non-negative");
}

TransactionGraph generate(const GenSpec& spec) {
    spec.check();
    Builder b(spec);
    return b.build();
}

GenStats stats(const TransactionGraph& g) {
    GenStats s;
    s.nodes = g.node_count;
    s.edges = g.edge_count();
    s.pairs = g.pair_count();
    if (g.has_labels && !g.labels.empty()) {
        std::int64_t pos = 0;
        for (auto l : g.labels) pos += l == 1;
        s.illicit_ratio = static_cast<double>(pos) / static_cast<double>(g.labels.size());
    }
    if (s.pairs > 0) s.mean_parallel = static_cast<double>(s.edges) / static_cast<double>(s.pairs);
    if (s.nodes > 0) s.edges_per_node = static_cast<double>(s.edges) / static_cast<double>(s.nodes);
    return s;
}

} // namespace txgnn
