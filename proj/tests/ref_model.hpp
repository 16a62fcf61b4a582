#pragma once

// A deliberately plain, loop-based re-implementation of the message-passing
// forward pass with temporal weighting disabled. It shares no code with the
// engine (scalar loops instead of tensor ops, per-node incidence lists instead
// of sorted segment reductions) and serves as the oracle the engine's
// temporal-off ("ablation") path is compared against.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "txgnn/graph.hpp"
#include "txgnn/model.hpp"
#include "txgnn/sampler.hpp"

namespace refmodel {

using Mat = std::vector<std::vector<double>>;
using Vec = std::vector<double>;

inline Mat to_mat(const txgnn::ad::Tensor& t) {
    Mat m(static_cast<std::size_t>(t.rows()), Vec(static_cast<std::size_t>(t.cols())));
    auto v = t.values();
    for (std::size_t r = 0; r < m.size(); ++r)
        for (std::size_t c = 0; c < m[r].size(); ++c)
            m[r][c] = v[r * m[r].size() + c];
    return m;
}

inline Vec to_vec(const txgnn::ad::Tensor& t) {
    return Vec(t.values().begin(), t.values().end());
}

inline Vec affine(const Vec& in, const Mat& W, const Vec& b) {
    if (in.size() != W.size()) throw std::runtime_error("ref affine: width mismatch");
    Vec out(b);
    for (std::size_t i = 0; i < in.size(); ++i)
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += in[i] * W[i][j];
    return out;
}

inline Vec relu(Vec v) {
    for (auto& x : v) x = x > 0.0 ? x : 0.0;
    return v;
}

inline Vec concat(std::initializer_list<const Vec*> parts) {
    Vec out;
    for (const Vec* p : parts) out.insert(out.end(), p->begin(), p->end());
    return out;
}

struct RefOut {
    Mat x;      // final node embeddings, one row per local node
    Mat z;      // final carrier embeddings (pairs or edges)
    Mat z0;     // per-edge input embeddings
    Mat logits; // head outputs for the seed rows
};

inline RefOut ref_run(const txgnn::TransactionGraph& g, const txgnn::SampledSubgraph& sub,
                      const txgnn::ModelParams& p, const txgnn::ModelConfig& cfg) {
    if (cfg.temporal) throw std::runtime_error("reference covers the temporal-off path only");

    const Mat Wx = to_mat(p.x_in_W);
    const Vec bx = to_vec(p.x_in_b);
    const Mat Wz = to_mat(p.z_in_W);
    const Vec bz = to_vec(p.z_in_b);

    const auto n_nodes = static_cast<std::size_t>(sub.node_count());
    const auto n_edges = static_cast<std::size_t>(sub.edge_count());

    RefOut out;
    out.x.resize(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i) {
        Vec feats(static_cast<std::size_t>(g.node_dim));
        const auto base = static_cast<std::size_t>(sub.nodes[i]) * feats.size();
        for (std::size_t c = 0; c < feats.size(); ++c) feats[c] = g.node_features[base + c];
        out.x[i] = affine(feats, Wx, bx);
    }
    out.z0.resize(n_edges);
    for (std::size_t e = 0; e < n_edges; ++e) {
        Vec feats(static_cast<std::size_t>(g.edge_dim));
        const auto base = static_cast<std::size_t>(sub.edge_ids[e]) * feats.size();
        for (std::size_t c = 0; c < feats.size(); ++c) feats[c] = g.edge_features[base + c];
        out.z0[e] = affine(feats, Wz, bz);
    }

    // Carriers: merged pairs in with_agg mode, individual edges otherwise.
    struct Carrier {
        std::int32_t a, b;          // oriented local endpoints
        std::vector<std::int32_t> recv, send; // one entry per incidence
        std::vector<double> dir;
    };
    std::vector<Carrier> carriers;
    std::vector<std::int32_t> carrier_of_edge(n_edges);
    Mat z;
    if (cfg.mode == txgnn::Mode::with_agg) {
        for (std::size_t c = 0; c < sub.pairs.size(); ++c) {
            const auto& lp = sub.pairs[c];
            Carrier car;
            Vec merged(static_cast<std::size_t>(cfg.edge_hidden), 0.0);
            std::int64_t into_a = 0;
            auto anchor = lp.members[0];
            for (auto pos : lp.members) {
                carrier_of_edge[static_cast<std::size_t>(pos)] = static_cast<std::int32_t>(c);
                for (std::size_t d = 0; d < merged.size(); ++d)
                    merged[d] += out.z0[static_cast<std::size_t>(pos)][d];
                if (sub.edge_dst[pos] == lp.a) ++into_a;
                const auto& cand = g.edges[static_cast<std::size_t>(sub.edge_ids[pos])];
                const auto& best = g.edges[static_cast<std::size_t>(sub.edge_ids[anchor])];
                if (std::tuple(cand.timestamp, cand.src, cand.dst) <
                    std::tuple(best.timestamp, best.src, best.dst))
                    anchor = pos;
            }
            for (auto& d : merged) d /= static_cast<double>(lp.members.size());
            car.a = sub.edge_src[anchor];
            car.b = sub.edge_dst[anchor];
            const double k = static_cast<double>(lp.members.size());
            if (lp.a == lp.b) {
                car.recv = {lp.a};
                car.send = {lp.b};
                car.dir = {1.0};
            } else {
                car.recv = {lp.a, lp.b};
                car.send = {lp.b, lp.a};
                car.dir = {static_cast<double>(into_a) / k, 1.0 - static_cast<double>(into_a) / k};
            }
            carriers.push_back(std::move(car));
            z.push_back(std::move(merged));
        }
    } else {
        for (std::size_t e = 0; e < n_edges; ++e) {
            Carrier car;
            car.a = sub.edge_src[e];
            car.b = sub.edge_dst[e];
            carrier_of_edge[e] = static_cast<std::int32_t>(e);
            if (car.a == car.b) {
                car.recv = {car.b};
                car.send = {car.a};
                car.dir = {1.0};
            } else {
                car.recv = {car.b, car.a};
                car.send = {car.a, car.b};
                car.dir = {1.0, 0.0};
            }
            carriers.push_back(std::move(car));
            z.push_back(out.z0[e]);
        }
    }

    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const auto& lp = p.layers[l];
        const Mat Wm = to_mat(lp.msg_W);
        const Vec bm = to_vec(lp.msg_b);
        const Mat Wu = to_mat(lp.upd_W);
        const Vec bu = to_vec(lp.upd_b);
        const Mat We = to_mat(lp.eupd_W);
        const Vec be = to_vec(lp.eupd_b);

        // Per-node incidence lists, carriers visited in ascending index.
        std::vector<std::vector<std::tuple<std::size_t, std::int32_t, double>>> incoming(n_nodes);
        for (std::size_t c = 0; c < carriers.size(); ++c)
            for (std::size_t i = 0; i < carriers[c].recv.size(); ++i)
                incoming[static_cast<std::size_t>(carriers[c].recv[i])].emplace_back(
                    c, carriers[c].send[i], carriers[c].dir[i]);

        Mat msg(n_nodes);
        for (std::size_t v = 0; v < n_nodes; ++v) {
            const auto& inc = incoming[v];
            if (cfg.backend == txgnn::Backend::gin) {
                Vec m(static_cast<std::size_t>(cfg.node_hidden), 0.0);
                for (const auto& [c, s, dir] : inc) {
                    Vec in = z[c];
                    in.push_back(dir);
                    Vec proj = affine(in, Wm, bm);
                    for (std::size_t d = 0; d < proj.size(); ++d)
                        proj[d] += out.x[static_cast<std::size_t>(s)][d];
                    proj = relu(std::move(proj));
                    for (std::size_t d = 0; d < m.size(); ++d) m[d] += proj[d];
                }
                msg[v] = std::move(m);
            } else {
                if (inc.empty()) {
                    msg[v] = Vec(static_cast<std::size_t>(cfg.node_hidden), 0.0);
                    continue;
                }
                Mat phis;
                for (const auto& [c, s, dir] : inc) {
                    Vec zc = z[c];
                    zc.push_back(dir);
                    const Vec in = concat({&out.x[static_cast<std::size_t>(s)], &zc});
                    phis.push_back(relu(affine(in, Wm, bm)));
                }
                const auto h = static_cast<std::size_t>(cfg.node_hidden);
                Vec mean(h, 0.0), mx(h), mn(h), meansq(h, 0.0);
                for (std::size_t d = 0; d < h; ++d) {
                    mx[d] = phis[0][d];
                    mn[d] = phis[0][d];
                }
                for (const auto& phi : phis)
                    for (std::size_t d = 0; d < h; ++d) {
                        mean[d] += phi[d];
                        meansq[d] += phi[d] * phi[d];
                        mx[d] = std::max(mx[d], phi[d]);
                        mn[d] = std::min(mn[d], phi[d]);
                    }
                Vec sd(h);
                for (std::size_t d = 0; d < h; ++d) {
                    mean[d] /= static_cast<double>(phis.size());
                    meansq[d] /= static_cast<double>(phis.size());
                    const double var = std::max(0.0, meansq[d] - mean[d] * mean[d]);
                    sd[d] = std::sqrt(var + 1e-12);
                }
                const double ld = std::log(static_cast<double>(phis.size()) + 1.0);
                Vec all;
                for (const Vec* agg : {&mean, &mx, &mn, &sd}) {
                    for (double x : *agg) all.push_back(x);
                    for (double x : *agg) all.push_back(x * ld / cfg.pna_delta);
                    for (double x : *agg) all.push_back(x * cfg.pna_delta / ld);
                }
                msg[v] = affine(all, to_mat(lp.pna_W), to_vec(lp.pna_b));
            }
        }

        Mat xn(n_nodes);
        for (std::size_t v = 0; v < n_nodes; ++v) {
            if (cfg.backend == txgnn::Backend::gin) {
                const double eps = lp.eps.values()[0];
                Vec in(static_cast<std::size_t>(cfg.node_hidden));
                for (std::size_t d = 0; d < in.size(); ++d)
                    in[d] = (1.0 + eps) * out.x[v][d] + msg[v][d];
                xn[v] = affine(in, Wu, bu);
            } else {
                const Vec in = concat({&out.x[v], &msg[v]});
                xn[v] = affine(in, Wu, bu);
                for (std::size_t d = 0; d < xn[v].size(); ++d) xn[v][d] += out.x[v][d];
            }
        }
        out.x = std::move(xn);

        Mat zn(carriers.size());
        for (std::size_t c = 0; c < carriers.size(); ++c) {
            const Vec in = concat({&out.x[static_cast<std::size_t>(carriers[c].a)],
                                   &out.x[static_cast<std::size_t>(carriers[c].b)], &z[c]});
            zn[c] = affine(in, We, be);
        }
        z = std::move(zn);
    }
    out.z = z;

    const Mat W1 = to_mat(p.head1_W);
    const Vec b1 = to_vec(p.head1_b);
    const Mat W2 = to_mat(p.head2_W);
    const Vec b2 = to_vec(p.head2_b);
    const auto head = [&](const Vec& in) { return affine(relu(affine(in, W1, b1)), W2, b2); };

    if (cfg.task == txgnn::Task::node) {
        for (auto v : sub.seed_nodes) out.logits.push_back(head(out.x[static_cast<std::size_t>(v)]));
    } else {
        for (auto pos : sub.seed_edges) {
            const auto e = static_cast<std::size_t>(pos);
            const auto c = static_cast<std::size_t>(carrier_of_edge[e]);
            const Vec in = concat({&out.x[static_cast<std::size_t>(sub.edge_src[pos])],
                                   &out.x[static_cast<std::size_t>(sub.edge_dst[pos])],
                                   &out.z0[e], &z[c]});
            out.logits.push_back(head(in));
        }
    }
    return out;
}

} // namespace refmodel
