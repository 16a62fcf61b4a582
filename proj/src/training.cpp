#include "txgnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "txgnn/errors.hpp"
#include "txgnn/rng.hpp"

namespace txgnn {

using ad::Tensor;
using json = nlohmann::json;

namespace {

constexpr std::uint64_t kEvalSeedBase = 0x65766c31; // evaluation sampling stream
constexpr std::int64_t kEvalChunk = 2048;

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

} // namespace

void TrainConfig::check() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
    if (l2 < 0.0 || !std::isfinite(l2)) throw ConfigError("l2 strength must be non-negative");
    if (batch < 1) throw ConfigError("batch size must be at least 1");
    if (epochs < 1) throw ConfigError("epoch limit must be at least 1");
    if (patience < 1) throw ConfigError("patience must be at least 1");
    if (fanout.hop1 < 1 || fanout.hop2 < 1) throw ConfigError("fanout must be at least 1");
}

Tensor l2_penalty(const ModelParams& params, double strength) {
    if (strength == 0.0) return {};
    Tensor sum;
    for (auto& [name, t] : params.named()) {
        (void)name;
        if (t.rank() != 2) continue; // weight matrices only: no biases, no scalars
        const Tensor term = ad::reduce_all(ad::mul(t, t), ad::Reduce::sum);
        sum = sum.valid() ? ad::add(sum, term) : term;
    }
    if (!sum.valid()) return {};
    return ad::scale(sum, strength);
}

Tensor training_loss(const Tensor& logits, std::span<const std::int32_t> labels,
                     const ModelParams& params, double l2_strength,
                     std::span<const double> class_weights) {
    const Tensor ce = ad::cross_entropy_with_logits(logits, labels, class_weights);
    const Tensor penalty = l2_penalty(params, l2_strength);
    return penalty.valid() ? ad::add(ce, penalty) : ce;
}

Adam::Adam(const ModelParams& params, double lr) : lr_(lr) {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
    for (auto& [name, t] : params.named()) {
        Slot s;
        s.name = name;
        s.tensor = t;
        s.m.assign(static_cast<std::size_t>(t.size()), 0.0);
        s.v.assign(static_cast<std::size_t>(t.size()), 0.0);
        slots_.push_back(std::move(s));
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (auto& slot : slots_) {
        auto vals = slot.tensor.values_mut();
        const bool has = slot.tensor.has_grad();
        std::span<const double> grad;
        if (has) grad = slot.tensor.grad();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double g = has ? grad[i] : 0.0;
            if (!std::isfinite(g))
                throw GradientError("non-finite gradient in " + slot.name + " entry " +
                                    std::to_string(i));
            slot.m[i] = kBeta1 * slot.m[i] + (1.0 - kBeta1) * g;
            slot.v[i] = kBeta2 * slot.v[i] + (1.0 - kBeta2) * g * g;
            const double mhat = slot.m[i] / bc1;
            const double vhat = slot.v[i] / bc2;
            vals[i] -= lr_ * mhat / (std::sqrt(vhat) + kAdamEps);
        }
    }
}

EarlyStopper::EarlyStopper(std::int32_t patience) : patience_(patience) {
    if (patience < 1) throw ConfigError("patience must be at least 1");
}

bool EarlyStopper::observe(double metric) {
    ++epoch_;
    if (best_epoch_ == 0 || metric > best_metric_) {
        best_metric_ = metric;
        best_epoch_ = epoch_;
        since_best_ = 0;
        return true;
    }
    ++since_best_;
    return false;
}

ModelParams clone_params(const ModelParams& src, const ModelConfig& cfg) {
    ModelParams dst = ModelParams::init(cfg, 0);
    const auto from = src.named();
    const auto to = dst.named();
    if (from.size() != to.size())
        throw ContractError("parameter sets disagree with the configuration");
    for (std::size_t i = 0; i < from.size(); ++i) {
        if (from[i].first != to[i].first || from[i].second.size() != to[i].second.size())
            throw ContractError("parameter layout mismatch at " + from[i].first);
        auto out = to[i].second;
        std::copy(from[i].second.values().begin(), from[i].second.values().end(),
                  out.values_mut().begin());
    }
    return dst;
}

double derive_time_scale(const TransactionGraph& g, const SplitMasks& splits, double tau) {
    double lo = 0.0, hi = 0.0;
    bool seen = false;
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        if (splits.edge_split[e] != 0) continue;
        const double t = g.edges[e].timestamp;
        lo = seen ? std::min(lo, t) : t;
        hi = seen ? std::max(hi, t) : t;
        seen = true;
    }
    const double range = hi - lo;
    if (!seen || !(range > 0.0)) return 1.0;
    return range / tau;
}

double derive_pna_delta(const TransactionGraph& g, const SplitMasks& splits) {
    double sum = 0.0;
    std::int64_t n = 0;
    for (std::int64_t v = 0; v < g.node_count; ++v) {
        if (splits.node_split[static_cast<std::size_t>(v)] != 0) continue;
        sum += std::log(1.0 + static_cast<double>(g.incident_pairs[static_cast<std::size_t>(v)].size()));
        ++n;
    }
    if (n == 0) return 1.0;
    const double delta = sum / static_cast<double>(n);
    return delta > 0.0 ? delta : 1.0;
}

namespace {

std::vector<std::int32_t> split_members(const TransactionGraph& g, const SplitMasks& splits,
                                        int split_id) {
    const auto& mask = g.task == Task::edge ? splits.edge_split : splits.node_split;
    std::vector<std::int32_t> out;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i] == split_id) out.push_back(static_cast<std::int32_t>(i));
    return out;
}

std::array<std::int64_t, 2> class_counts(const TransactionGraph& g,
                                         const std::vector<std::int32_t>& ids) {
    std::array<std::int64_t, 2> counts{0, 0};
    for (auto i : ids) {
        const auto y = g.labels[static_cast<std::size_t>(i)];
        if (y == 0 || y == 1) ++counts[static_cast<std::size_t>(y)];
    }
    return counts;
}

} // namespace

metrics::EvalReport evaluate_split(const TransactionGraph& g, const SplitMasks& splits,
                                   int split_id, const ModelParams& params,
                                   const ModelConfig& cfg, Fanout fanout) {
    if (!g.has_labels) throw ConfigError("evaluation needs labels");
    const auto seeds = split_members(g, splits, split_id);
    if (seeds.empty())
        throw ConfigError("split " + std::to_string(split_id) + " has no examples");

    std::vector<double> logits;
    std::vector<std::int32_t> labels;
    logits.reserve(seeds.size() * 2);
    labels.reserve(seeds.size());
    std::int64_t chunk_idx = 0;
    for (std::size_t at = 0; at < seeds.size(); at += kEvalChunk, ++chunk_idx) {
        const auto end = std::min(seeds.size(), at + static_cast<std::size_t>(kEvalChunk));
        const std::vector<std::int32_t> chunk(seeds.begin() + static_cast<std::ptrdiff_t>(at),
                                              seeds.begin() + static_cast<std::ptrdiff_t>(end));
        const auto sub = sample_two_hop(
            g, chunk, fanout,
            derive_seed(kEvalSeedBase, static_cast<std::uint64_t>(split_id),
                        static_cast<std::uint64_t>(chunk_idx)));
        const Tensor out = predict(g, sub, params, cfg);
        logits.insert(logits.end(), out.values().begin(), out.values().end());
        for (auto s : chunk) labels.push_back(g.labels[static_cast<std::size_t>(s)]);
    }
    return metrics::evaluate(logits, labels);
}

TrainResult train(const TransactionGraph& g, const ModelConfig& model_cfg,
                  const TrainConfig& train_cfg) {
    train_cfg.check();
    if (!g.has_labels) throw ConfigError("training needs labels");

    const SplitMasks splits = temporal_split(g);
    const FeatureStats stats = compute_feature_stats(g, splits);
    const TransactionGraph gn = normalize_features(g, stats);

    ModelConfig cfg = model_cfg;
    cfg.task = g.task;
    cfg.node_in = static_cast<std::int32_t>(g.node_dim);
    cfg.edge_in = static_cast<std::int32_t>(g.edge_dim);
    cfg.time_scale = derive_time_scale(g, splits, cfg.tau);
    if (cfg.backend == Backend::pna) cfg.pna_delta = derive_pna_delta(g, splits);
    cfg.check();

    const auto pool = split_members(g, splits, 0);
    if (pool.empty()) throw ConfigError("training split is empty");
    const auto train_counts = class_counts(g, pool);
    if (train_counts[0] == 0 || train_counts[1] == 0)
        throw ConfigError("training split lacks examples of class " +
                          std::string(train_counts[0] == 0 ? "0" : "1"));
    const auto val_pool = split_members(g, splits, 1);
    const auto val_counts = class_counts(g, val_pool);
    if (val_pool.empty() || val_counts[0] == 0 || val_counts[1] == 0)
        throw ConfigError("validation split lacks examples of both classes");

    std::vector<double> class_weights;
    if (train_cfg.class_weights) {
        const double total = static_cast<double>(train_counts[0] + train_counts[1]);
        class_weights = {total / (2.0 * static_cast<double>(train_counts[0])),
                         total / (2.0 * static_cast<double>(train_counts[1]))};
    }

    ModelParams params = ModelParams::init(cfg, derive_seed(train_cfg.seed, 0x696e6974, 0));
    Adam opt(params, train_cfg.lr);
    SeedBatcher batcher(pool, train_cfg.batch, derive_seed(train_cfg.seed, 0x62617463, 0));
    EarlyStopper stopper(train_cfg.patience);

    TrainResult result;
    for (std::int32_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
        const auto batches = batcher.next_epoch();
        double loss_sum = 0.0;
        std::int64_t seen = 0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto& batch = batches[b];
            const auto sub = sample_two_hop(
                gn, batch, train_cfg.fanout,
                derive_seed(train_cfg.seed, static_cast<std::uint64_t>(epoch),
                            static_cast<std::uint64_t>(b)));
            const Tensor logits = predict(gn, sub, params, cfg);
            std::vector<std::int32_t> labels;
            labels.reserve(batch.size());
            for (auto s : batch) labels.push_back(g.labels[static_cast<std::size_t>(s)]);
            const Tensor loss = training_loss(logits, labels, params, train_cfg.l2, class_weights);
            params.zero_grad();
            ad::backward(loss);
            opt.step();
            loss_sum += loss.item() * static_cast<double>(batch.size());
            seen += static_cast<std::int64_t>(batch.size());
        }

        const auto val = evaluate_split(gn, splits, 1, params, cfg, train_cfg.fanout);
        EpochRow row;
        row.epoch = epoch;
        row.train_loss = loss_sum / static_cast<double>(seen);
        row.val_f1_min = val.f1_min;
        row.val_macro_f1 = val.macro_f1;
        row.val_pr_auc = val.pr_auc;
        result.trace.push_back(row);
        result.stopped_epoch = epoch;

        if (stopper.observe(val.f1_min)) {
            result.best.params = clone_params(params, cfg);
            result.best.epoch = epoch;
            result.best.val_f1_min = val.f1_min;
        }
        if (stopper.should_stop()) break;
    }

    result.best.config = cfg;
    result.best.fanout = train_cfg.fanout;
    result.best.stats = stats;
    return result;
}

namespace {

json stats_to_json(const FeatureStats& s) {
    return json{{"node_mean", s.node_mean},     {"node_sd", s.node_sd},
                {"node_constant", s.node_constant}, {"edge_mean", s.edge_mean},
                {"edge_sd", s.edge_sd},         {"edge_constant", s.edge_constant}};
}

FeatureStats stats_from_json(const json& j) {
    FeatureStats s;
    s.node_mean = j.at("node_mean").get<std::vector<double>>();
    s.node_sd = j.at("node_sd").get<std::vector<double>>();
    s.node_constant = j.at("node_constant").get<std::vector<std::uint8_t>>();
    s.edge_mean = j.at("edge_mean").get<std::vector<double>>();
    s.edge_sd = j.at("edge_sd").get<std::vector<double>>();
    s.edge_constant = j.at("edge_constant").get<std::vector<std::uint8_t>>();
    return s;
}

json config_to_json(const ModelConfig& c) {
    return json{{"layers", c.layers},
                {"node_in", c.node_in},
                {"edge_in", c.edge_in},
                {"node_hidden", c.node_hidden},
                {"edge_hidden", c.edge_hidden},
                {"mode", mode_name(c.mode)},
                {"backend", backend_name(c.backend)},
                {"timestamp_reducer", ad::reduce_name(c.timestamp_reducer)},
                {"temporal", c.temporal},
                {"alpha_scope", alpha_scope_name(c.alpha_scope)},
                {"task", task_name(c.task)},
                {"classes", c.classes},
                {"tau", c.tau},
                {"time_scale", c.time_scale},
                {"pna_delta", c.pna_delta}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.layers = j.at("layers").get<std::int32_t>();
    c.node_in = j.at("node_in").get<std::int32_t>();
    c.edge_in = j.at("edge_in").get<std::int32_t>();
    c.node_hidden = j.at("node_hidden").get<std::int32_t>();
    c.edge_hidden = j.at("edge_hidden").get<std::int32_t>();
    c.mode = mode_from_name(j.at("mode").get<std::string>());
    c.backend = backend_from_name(j.at("backend").get<std::string>());
    c.timestamp_reducer = ad::reduce_from_name(j.at("timestamp_reducer").get<std::string>());
    c.temporal = j.at("temporal").get<bool>();
    c.alpha_scope = alpha_scope_from_name(j.at("alpha_scope").get<std::string>());
    c.task = task_from_name(j.at("task").get<std::string>());
    c.classes = j.at("classes").get<std::int32_t>();
    c.tau = j.at("tau").get<double>();
    c.time_scale = j.at("time_scale").get<double>();
    c.pna_delta = j.at("pna_delta").get<double>();
    return c;
}

} // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    json j;
    j["format"] = "txgnn-checkpoint-v1";
    j["epoch"] = ck.epoch;
    j["val_f1_min"] = ck.val_f1_min;
    j["fanout"] = {{"hop1", ck.fanout.hop1}, {"hop2", ck.fanout.hop2}};
    j["model"] = config_to_json(ck.config);
    j["stats"] = stats_to_json(ck.stats);
    json tensors = json::array();
    for (auto& [name, t] : ck.params.named()) {
        json entry;
        entry["name"] = name;
        entry["shape"] = t.shape();
        entry["values"] = std::vector<double>(t.values().begin(), t.values().end());
        tensors.push_back(std::move(entry));
    }
    j["params"] = std::move(tensors);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write checkpoint file " + path);
    out << j.dump(1) << '\n';
    if (!out.good()) throw ParseError("failed writing checkpoint file " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open checkpoint file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("checkpoint " + path + ": " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "txgnn-checkpoint-v1")
            throw ParseError("checkpoint " + path + ": unrecognized format tag");
        Checkpoint ck;
        ck.epoch = j.at("epoch").get<std::int32_t>();
        ck.val_f1_min = j.at("val_f1_min").get<double>();
        ck.fanout.hop1 = j.at("fanout").at("hop1").get<std::int32_t>();
        ck.fanout.hop2 = j.at("fanout").at("hop2").get<std::int32_t>();
        ck.config = config_from_json(j.at("model"));
        ck.stats = stats_from_json(j.at("stats"));
        ck.params = ModelParams::init(ck.config, 0);
        const auto live = ck.params.named();
        const auto& tensors = j.at("params");
        if (tensors.size() != live.size())
            throw IntegrityError("checkpoint " + path + ": expected " +
                                 std::to_string(live.size()) + " tensors, found " +
                                 std::to_string(tensors.size()));
        for (std::size_t i = 0; i < live.size(); ++i) {
            const auto& entry = tensors.at(i);
            if (entry.at("name").get<std::string>() != live[i].first)
                throw IntegrityError("checkpoint " + path + ": tensor order mismatch at " +
                                     live[i].first);
            const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
            if (shape != live[i].second.shape())
                throw IntegrityError("checkpoint " + path + ": shape mismatch at " +
                                     live[i].first);
            const auto values = entry.at("values").get<std::vector<double>>();
            auto t = live[i].second;
            if (values.size() != t.values_mut().size())
                throw IntegrityError("checkpoint " + path + ": value count mismatch at " +
                                     live[i].first);
            std::copy(values.begin(), values.end(), t.values_mut().begin());
        }
        return ck;
    } catch (const json::exception& e) {
        throw ParseError("checkpoint " + path + ": " + e.what());
    }
}

} // namespace txgnn
