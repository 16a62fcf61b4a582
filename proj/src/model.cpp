#include "txgnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>
#include <vector>

#include "txgnn/errors.hpp"
#include "txgnn/rng.hpp"

namespace txgnn {

using ad::Reduce;
using ad::Tensor;

const char* mode_name(Mode m) { return m == Mode::with_agg ? "with_agg" : "without_agg"; }

Mode mode_from_name(const std::string& s) {
    if (s == "with_agg") return Mode::with_agg;
    if (s == "without_agg") return Mode::without_agg;
    throw ConfigError("unknown mode '" + s + "' (expected with_agg or without_agg)");
}

const char* backend_name(Backend b) { return b == Backend::gin ? "gin" : "pna"; }

Backend backend_from_name(const std::string& s) {
    if (s == "gin") return Backend::gin;
    if (s == "pna") return Backend::pna;
    throw ConfigError("unknown backend '" + s + "' (expected gin or pna)");
}

const char* alpha_scope_name(AlphaScope s) {
    return s == AlphaScope::full_message ? "full_message" : "edge_only";
}

AlphaScope alpha_scope_from_name(const std::string& s) {
    if (s == "full_message") return AlphaScope::full_message;
    if (s == "edge_only") return AlphaScope::edge_only;
    throw ConfigError("unknown alpha scope '" + s + "' (expected full_message or edge_only)");
}

void ModelConfig::check() const {
    if (layers < 1) throw ConfigError("layers must be at least 1");
    if (node_in < 1 || edge_in < 1) throw ConfigError("input dims must be at least 1");
    if (node_hidden < 1 || edge_hidden < 1) throw ConfigError("hidden dims must be at least 1");
    if (classes < 2) throw ConfigError("class count must be at least 2");
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be positive and finite");
    if (!(time_scale > 0.0) || !std::isfinite(time_scale))
        throw ConfigError("time_scale must be positive and finite");
    if (!(pna_delta > 0.0) || !std::isfinite(pna_delta))
        throw ConfigError("pna_delta must be positive and finite");
}

std::int32_t ModelConfig::head_input_dim() const {
    return task == Task::node ? node_hidden : 2 * node_hidden + 2 * edge_hidden;
}

namespace {

Tensor glorot(Rng& rng, std::int64_t rows, std::int64_t cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::vector<double> v(static_cast<std::size_t>(rows * cols));
    for (auto& x : v) x = (2.0 * rng.uniform() - 1.0) * limit;
    return Tensor::param({rows, cols}, std::move(v));
}

Tensor zero_bias(std::int64_t n) {
    return Tensor::param({n}, std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

Tensor affine(const Tensor& x, const Tensor& W, const Tensor& b) {
    return ad::add_row_bias(ad::matmul(x, W), b);
}

void push_named(std::vector<std::pair<std::string, Tensor>>& out, const std::string& name,
                const Tensor& t) {
    if (t.valid()) out.emplace_back(name, t);
}

} // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.check();
    Rng rng(derive_seed(seed, 0x7061726d, 0));
    ModelParams p;
    p.x_in_W = glorot(rng, cfg.node_in, cfg.node_hidden);
    p.x_in_b = zero_bias(cfg.node_hidden);
    p.z_in_W = glorot(rng, cfg.edge_in, cfg.edge_hidden);
    p.z_in_b = zero_bias(cfg.edge_hidden);
    p.layers.resize(static_cast<std::size_t>(cfg.layers));
    for (auto& lp : p.layers) {
        if (cfg.backend == Backend::gin) {
            lp.msg_W = glorot(rng, cfg.edge_hidden + 1, cfg.node_hidden);
            lp.msg_b = zero_bias(cfg.node_hidden);
            lp.eps = Tensor::param({1}, {0.0});
            lp.upd_W = glorot(rng, cfg.node_hidden, cfg.node_hidden);
            lp.upd_b = zero_bias(cfg.node_hidden);
        } else {
            lp.msg_W = glorot(rng, cfg.node_hidden + cfg.edge_hidden + 1, cfg.node_hidden);
            lp.msg_b = zero_bias(cfg.node_hidden);
            lp.pna_W = glorot(rng, 12 * cfg.node_hidden, cfg.node_hidden);
            lp.pna_b = zero_bias(cfg.node_hidden);
            lp.upd_W = glorot(rng, 2 * cfg.node_hidden, cfg.node_hidden);
            lp.upd_b = zero_bias(cfg.node_hidden);
        }
        lp.eupd_W = glorot(rng, 2 * cfg.node_hidden + cfg.edge_hidden, cfg.edge_hidden);
        lp.eupd_b = zero_bias(cfg.edge_hidden);
    }
    p.head1_W = glorot(rng, cfg.head_input_dim(), cfg.node_hidden);
    p.head1_b = zero_bias(cfg.node_hidden);
    p.head2_W = glorot(rng, cfg.node_hidden, cfg.classes);
    p.head2_b = zero_bias(cfg.classes);
    return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
    std::vector<std::pair<std::string, Tensor>> out;
    push_named(out, "x_in_W", x_in_W);
    push_named(out, "x_in_b", x_in_b);
    push_named(out, "z_in_W", z_in_W);
    push_named(out, "z_in_b", z_in_b);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string base = "layer" + std::to_string(l + 1) + ".";
        push_named(out, base + "msg_W", layers[l].msg_W);
        push_named(out, base + "msg_b", layers[l].msg_b);
        push_named(out, base + "eps", layers[l].eps);
        push_named(out, base + "pna_W", layers[l].pna_W);
        push_named(out, base + "pna_b", layers[l].pna_b);
        push_named(out, base + "upd_W", layers[l].upd_W);
        push_named(out, base + "upd_b", layers[l].upd_b);
        push_named(out, base + "eupd_W", layers[l].eupd_W);
        push_named(out, base + "eupd_b", layers[l].eupd_b);
    }
    push_named(out, "head1_W", head1_W);
    push_named(out, "head1_b", head1_b);
    push_named(out, "head2_W", head2_W);
    push_named(out, "head2_b", head2_b);
    return out;
}

void ModelParams::zero_grad() const {
    for (auto& [name, t] : named()) {
        (void)name;
        t.zero_grad();
    }
}

std::vector<double> temporal_weights(const std::vector<double>& timestamps, double time_scale) {
    if (timestamps.empty())
        throw ContractError("temporal weights need at least one carrier timestamp");
    if (!(time_scale > 0.0) || !std::isfinite(time_scale))
        throw ConfigError("time_scale must be positive and finite");
    double t_max = timestamps[0];
    for (double t : timestamps) {
        if (!std::isfinite(t)) throw ContractError("carrier timestamps must be finite");
        t_max = std::max(t_max, t);
    }
    std::vector<double> w(timestamps.size());
    double denom = 0.0;
    for (std::size_t i = 0; i < timestamps.size(); ++i) {
        w[i] = std::exp((timestamps[i] - t_max) / time_scale);
        denom += w[i];
    }
    for (auto& v : w) v = 1.0 + v / denom;
    return w;
}

double effective_timestamp(const std::vector<double>& timestamps, Reduce reducer) {
    if (timestamps.empty())
        throw ContractError("effective timestamp needs at least one member timestamp");
    double acc = reducer == Reduce::min || reducer == Reduce::max ? timestamps[0] : 0.0;
    for (std::size_t i = 0; i < timestamps.size(); ++i) {
        const double t = timestamps[i];
        switch (reducer) {
        case Reduce::sum:
        case Reduce::mean: acc += t; break;
        case Reduce::max: acc = std::max(acc, t); break;
        case Reduce::min: acc = std::min(acc, t); break;
        }
    }
    if (reducer == Reduce::mean) acc /= static_cast<double>(timestamps.size());
    return acc;
}

Tensor merge_parallel_edges(const Tensor& edge_z, const std::vector<LocalPair>& pairs) {
    if (pairs.empty()) return Tensor::zeros({0, edge_z.cols()});
    std::vector<std::int32_t> gather_idx;
    std::vector<std::int32_t> segment_ids;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        if (pairs[p].members.empty())
            throw ContractError("pair " + std::to_string(p) + " has no member edges");
        for (auto pos : pairs[p].members) {
            gather_idx.push_back(pos);
            segment_ids.push_back(static_cast<std::int32_t>(p));
        }
    }
    const Tensor gathered = ad::gather_rows(edge_z, gather_idx);
    return ad::segment_aggregate(gathered, segment_ids, static_cast<std::int64_t>(pairs.size()),
                                 Reduce::mean)
        .values;
}

namespace {

/// One (receiver, carrier) slot of the message structure. Carriers are merged
/// pairs in with_agg mode and individual edges in without_agg mode.
struct Wiring {
    std::vector<std::int32_t> receiver, sender, carrier; // per incidence
    std::vector<double> dir, timestamp, alpha;           // per incidence
    std::vector<std::int32_t> carrier_a, carrier_b;      // per carrier (oriented endpoints)
    std::vector<std::int32_t> carrier_of_edge;           // per subgraph edge position
    std::vector<double> scale_id, scale_amp, scale_att;  // per node (pna degree scalers)
    std::int64_t carriers = 0;
    std::vector<std::uint8_t> node_has_messages;         // per node
};

struct RawIncidence {
    std::int32_t receiver, sender, carrier;
    double dir, timestamp;
};

Wiring build_wiring(const TransactionGraph& g, const SampledSubgraph& sub,
                    const ModelConfig& cfg) {
    Wiring w;
    std::vector<RawIncidence> inc;
    const auto push = [&inc](std::int32_t recv, std::int32_t send, std::int32_t carrier,
                             double dir, double ts) {
        inc.push_back({recv, send, carrier, dir, ts});
    };

    if (cfg.mode == Mode::with_agg) {
        w.carriers = static_cast<std::int64_t>(sub.pairs.size());
        w.carrier_of_edge.resize(sub.edge_count(), -1);
        for (std::size_t c = 0; c < sub.pairs.size(); ++c) {
            const auto& lp = sub.pairs[c];
            std::vector<double> ts;
            ts.reserve(lp.members.size());
            std::int64_t into_a = 0;
            for (auto pos : lp.members) {
                ts.push_back(g.edges[static_cast<std::size_t>(sub.edge_ids[pos])].timestamp);
                if (sub.edge_dst[pos] == lp.a) ++into_a;
                w.carrier_of_edge[pos] = static_cast<std::int32_t>(c);
            }
            const double t_eff = effective_timestamp(ts, cfg.timestamp_reducer);
            // Orient the merged carrier along its earliest transaction (ties
            // broken by endpoint ids) so the orientation depends neither on
            // node numbering nor on edge storage order.
            auto anchor = lp.members[0];
            for (auto pos : lp.members) {
                const auto& cand = g.edges[static_cast<std::size_t>(sub.edge_ids[pos])];
                const auto& best = g.edges[static_cast<std::size_t>(sub.edge_ids[anchor])];
                const auto key = std::tuple(cand.timestamp, cand.src, cand.dst);
                if (key < std::tuple(best.timestamp, best.src, best.dst)) anchor = pos;
            }
            w.carrier_a.push_back(sub.edge_src[anchor]);
            w.carrier_b.push_back(sub.edge_dst[anchor]);
            const auto ci = static_cast<std::int32_t>(c);
            const double k = static_cast<double>(lp.members.size());
            if (lp.a == lp.b) {
                push(lp.a, lp.b, ci, 1.0, t_eff);
            } else {
                push(lp.a, lp.b, ci, static_cast<double>(into_a) / k, t_eff);
                push(lp.b, lp.a, ci, 1.0 - static_cast<double>(into_a) / k, t_eff);
            }
        }
    } else {
        w.carriers = sub.edge_count();
        w.carrier_a = sub.edge_src;
        w.carrier_b = sub.edge_dst;
        w.carrier_of_edge.resize(sub.edge_count());
        for (std::int64_t e = 0; e < sub.edge_count(); ++e) {
            w.carrier_of_edge[static_cast<std::size_t>(e)] = static_cast<std::int32_t>(e);
            const auto s = sub.edge_src[static_cast<std::size_t>(e)];
            const auto d = sub.edge_dst[static_cast<std::size_t>(e)];
            const double ts = g.edges[static_cast<std::size_t>(sub.edge_ids[static_cast<std::size_t>(e)])].timestamp;
            const auto ci = static_cast<std::int32_t>(e);
            if (s == d) {
                push(d, s, ci, 1.0, ts);
            } else {
                push(d, s, ci, 1.0, ts);
                push(s, d, ci, 0.0, ts);
            }
        }
    }

    // Receiver-major, ascending carrier: fixes the accumulation order so that
    // results do not depend on pair or edge storage order.
    std::sort(inc.begin(), inc.end(), [](const RawIncidence& x, const RawIncidence& y) {
        return x.receiver != y.receiver ? x.receiver < y.receiver : x.carrier < y.carrier;
    });

    const std::size_t n = inc.size();
    w.receiver.reserve(n);
    w.sender.reserve(n);
    w.carrier.reserve(n);
    w.dir.reserve(n);
    w.timestamp.reserve(n);
    for (const auto& i : inc) {
        w.receiver.push_back(i.receiver);
        w.sender.push_back(i.sender);
        w.carrier.push_back(i.carrier);
        w.dir.push_back(i.dir);
        w.timestamp.push_back(i.timestamp);
    }

    // Temporal weights act per receiving neighborhood (contiguous after the
    // sort). With temporal weighting off every carrier weighs the same.
    w.alpha.assign(n, 1.0);
    if (cfg.temporal) {
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j < n && w.receiver[j] == w.receiver[i]) ++j;
            const std::vector<double> ts(w.timestamp.begin() + static_cast<std::ptrdiff_t>(i),
                                         w.timestamp.begin() + static_cast<std::ptrdiff_t>(j));
            const auto a = temporal_weights(ts, cfg.time_scale);
            std::copy(a.begin(), a.end(), w.alpha.begin() + static_cast<std::ptrdiff_t>(i));
            i = j;
        }
    }

    const auto nodes = static_cast<std::size_t>(sub.node_count());
    w.node_has_messages.assign(nodes, 0);
    for (auto r : w.receiver) w.node_has_messages[static_cast<std::size_t>(r)] = 1;

    if (cfg.backend == Backend::pna) {
        std::vector<std::int64_t> degree(nodes, 0);
        for (auto r : w.receiver) ++degree[static_cast<std::size_t>(r)];
        w.scale_id.assign(nodes, 0.0);
        w.scale_amp.assign(nodes, 0.0);
        w.scale_att.assign(nodes, 0.0);
        for (std::size_t v = 0; v < nodes; ++v) {
            if (degree[v] == 0) continue; // masked out downstream
            const double ld = std::log(static_cast<double>(degree[v]) + 1.0);
            w.scale_id[v] = 1.0;
            w.scale_amp[v] = ld / cfg.pna_delta;
            w.scale_att[v] = cfg.pna_delta / ld;
        }
    }
    return w;
}

Tensor aggregate_messages(const Tensor& x, const Tensor& carrier_z, const Wiring& w,
                          const LayerParams& lp, const ModelConfig& cfg, std::int64_t nodes) {
    if (w.receiver.empty()) return Tensor::zeros({nodes, cfg.node_hidden});

    Tensor gz = ad::gather_rows(carrier_z, w.carrier);
    if (cfg.temporal && cfg.alpha_scope == AlphaScope::edge_only)
        gz = ad::scale_rows(gz, w.alpha);
    const Tensor dir =
        Tensor::constant({static_cast<std::int64_t>(w.dir.size()), 1}, w.dir);
    const Tensor gx = ad::gather_rows(x, w.sender);

    if (cfg.backend == Backend::gin) {
        const Tensor proj = affine(ad::concat_cols({gz, dir}), lp.msg_W, lp.msg_b);
        Tensor phi = ad::relu(ad::add(gx, proj));
        if (cfg.temporal && cfg.alpha_scope == AlphaScope::full_message)
            phi = ad::scale_rows(phi, w.alpha);
        return ad::segment_aggregate(phi, w.receiver, nodes, Reduce::sum).values;
    }

    Tensor phi = ad::relu(affine(ad::concat_cols({gx, gz, dir}), lp.msg_W, lp.msg_b));
    if (cfg.temporal && cfg.alpha_scope == AlphaScope::full_message)
        phi = ad::scale_rows(phi, w.alpha);
    const Tensor mean = ad::segment_aggregate(phi, w.receiver, nodes, Reduce::mean).values;
    const Tensor mx = ad::segment_aggregate(phi, w.receiver, nodes, Reduce::max).values;
    const Tensor mn = ad::segment_aggregate(phi, w.receiver, nodes, Reduce::min).values;
    const Tensor mean_sq =
        ad::segment_aggregate(ad::mul(phi, phi), w.receiver, nodes, Reduce::mean).values;
    const Tensor variance = ad::relu(ad::sub(mean_sq, ad::mul(mean, mean)));
    const Tensor sd = ad::sqrt(ad::add_const(variance, 1e-12));

    std::vector<Tensor> blocks;
    blocks.reserve(12);
    for (const Tensor& agg : {mean, mx, mn, sd}) {
        blocks.push_back(ad::scale_rows(agg, w.scale_id));
        blocks.push_back(ad::scale_rows(agg, w.scale_amp));
        blocks.push_back(ad::scale_rows(agg, w.scale_att));
    }
    Tensor m = affine(ad::concat_cols(blocks), lp.pna_W, lp.pna_b);
    // Nodes that received nothing get a zero message rather than the bias.
    std::vector<double> mask(static_cast<std::size_t>(nodes), 0.0);
    for (std::size_t v = 0; v < mask.size(); ++v)
        if (w.node_has_messages[v]) mask[v] = 1.0;
    return ad::scale_rows(m, mask);
}

Tensor update_nodes(const Tensor& x, const Tensor& m, const LayerParams& lp,
                    const ModelConfig& cfg) {
    if (cfg.backend == Backend::gin) {
        const Tensor self = ad::scale_by_scalar(x, ad::add_const(lp.eps, 1.0));
        return affine(ad::add(self, m), lp.upd_W, lp.upd_b);
    }
    return ad::add(affine(ad::concat_cols({x, m}), lp.upd_W, lp.upd_b), x);
}

Tensor update_edges(const Tensor& x, const Tensor& carrier_z, const Wiring& w,
                    const LayerParams& lp) {
    const Tensor xa = ad::gather_rows(x, w.carrier_a);
    const Tensor xb = ad::gather_rows(x, w.carrier_b);
    return affine(ad::concat_cols({xa, xb, carrier_z}), lp.eupd_W, lp.eupd_b);
}

Tensor head(const Tensor& input, const ModelParams& p) {
    const Tensor h = ad::relu(affine(input, p.head1_W, p.head1_b));
    return affine(h, p.head2_W, p.head2_b);
}

Tensor gather_feature_rows(const std::vector<double>& features, std::int64_t dim,
                           const std::vector<std::int32_t>& rows) {
    std::vector<double> buf;
    buf.reserve(rows.size() * static_cast<std::size_t>(dim));
    for (auto r : rows) {
        const auto base = static_cast<std::size_t>(r) * static_cast<std::size_t>(dim);
        buf.insert(buf.end(), features.begin() + static_cast<std::ptrdiff_t>(base),
                   features.begin() + static_cast<std::ptrdiff_t>(base + static_cast<std::size_t>(dim)));
    }
    return Tensor::constant({static_cast<std::int64_t>(rows.size()), dim}, std::move(buf));
}

} // namespace

ForwardResult forward(const TransactionGraph& g, const SampledSubgraph& sub,
                      const ModelParams& params, const ModelConfig& cfg) {
    cfg.check();
    if (g.node_dim != cfg.node_in)
        throw DimensionError("node feature width " + std::to_string(g.node_dim) +
                             " does not match the configured input width " +
                             std::to_string(cfg.node_in));
    if (g.edge_dim != cfg.edge_in)
        throw DimensionError("edge feature width " + std::to_string(g.edge_dim) +
                             " does not match the configured input width " +
                             std::to_string(cfg.edge_in));
    if (static_cast<std::int32_t>(params.layers.size()) != cfg.layers)
        throw DimensionError("parameter set has " + std::to_string(params.layers.size()) +
                             " layers, config wants " + std::to_string(cfg.layers));

    const Tensor node_feats = gather_feature_rows(g.node_features, g.node_dim, sub.nodes);
    Tensor x = affine(node_feats, params.x_in_W, params.x_in_b);

    ForwardResult out;
    if (sub.edge_count() > 0) {
        const Tensor edge_feats = gather_feature_rows(g.edge_features, g.edge_dim, sub.edge_ids);
        out.edge_z0 = affine(edge_feats, params.z_in_W, params.z_in_b);
    } else {
        out.edge_z0 = Tensor::zeros({0, cfg.edge_hidden});
    }

    const Wiring w = build_wiring(g, sub, cfg);
    out.carrier_of_edge = w.carrier_of_edge;

    Tensor carrier_z = cfg.mode == Mode::with_agg
                           ? merge_parallel_edges(out.edge_z0, sub.pairs)
                           : out.edge_z0;

    for (const auto& lp : params.layers) {
        const Tensor m = aggregate_messages(x, carrier_z, w, lp, cfg, sub.node_count());
        x = update_nodes(x, m, lp, cfg);
        if (w.carriers > 0) carrier_z = update_edges(x, carrier_z, w, lp);
    }

    out.node_x = x;
    out.carrier_z = carrier_z;
    return out;
}

Tensor predict_logits(const TransactionGraph& g, const SampledSubgraph& sub,
                      const ForwardResult& fwd, const ModelParams& params,
                      const ModelConfig& cfg) {
    (void)g;
    if (cfg.task == Task::node) {
        if (sub.seed_nodes.empty())
            throw ConfigError("node prediction needs a subgraph sampled from node seeds");
        return head(ad::gather_rows(fwd.node_x, sub.seed_nodes), params);
    }
    if (sub.seed_edges.empty())
        throw ConfigError("edge prediction needs a subgraph sampled from edge seeds");
    std::vector<std::int32_t> srcs, dsts, carriers;
    srcs.reserve(sub.seed_edges.size());
    dsts.reserve(sub.seed_edges.size());
    carriers.reserve(sub.seed_edges.size());
    for (auto pos : sub.seed_edges) {
        srcs.push_back(sub.edge_src[pos]);
        dsts.push_back(sub.edge_dst[pos]);
        carriers.push_back(fwd.carrier_of_edge[static_cast<std::size_t>(pos)]);
    }
    const Tensor input = ad::concat_cols({ad::gather_rows(fwd.node_x, srcs),
                                          ad::gather_rows(fwd.node_x, dsts),
                                          ad::gather_rows(fwd.edge_z0, sub.seed_edges),
                                          ad::gather_rows(fwd.carrier_z, carriers)});
    return head(input, params);
}

Tensor predict(const TransactionGraph& g, const SampledSubgraph& sub, const ModelParams& params,
               const ModelConfig& cfg) {
    const ForwardResult fwd = forward(g, sub, params, cfg);
    return predict_logits(g, sub, fwd, params, cfg);
}

} // namespace txgnn
