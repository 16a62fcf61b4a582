#include "txgnn/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "txgnn/errors.hpp"
#include "txgnn/format.hpp"
#include "txgnn/graph.hpp"
#include "txgnn/metrics.hpp"
#include "txgnn/model.hpp"
#include "txgnn/sampler.hpp"
#include "txgnn/synthgen.hpp"
#include "txgnn/training.hpp"

namespace txgnn {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ParseError before this point means a broken input (exit 2); afterwards it is
// a runtime failure (exit 1).
bool g_inputs_resolved = false;

// --------------------------------------------------------------------------
// content hashing (FNV-1a, 64 bit) and small file helpers

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return std::move(os).str();
}

std::string content_hash(const std::string& path) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx",
                  static_cast<unsigned long long>(fnv1a64(read_file(path))));
    return buf;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out.good()) throw ParseError("failed writing " + path);
}

fs::path ensure_out_dir(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw ConfigError("cannot create output directory " + out + ": " + ec.message());
    return fs::path(out);
}

// Dataset directory files in a fixed hashing order.
std::vector<std::string> dataset_files(const std::string& dir) {
    std::vector<std::string> files = {(fs::path(dir) / "manifest.txt").string(),
                                      (fs::path(dir) / "edges.csv").string()};
    const auto nodes = (fs::path(dir) / "nodes.csv").string();
    if (fs::exists(nodes)) files.push_back(nodes);
    return files;
}

// --------------------------------------------------------------------------
// resolved per-command settings; each round-trips through the run manifest

struct GenerateSettings {
    GenSpec spec;
    std::string out = "dataset";
};

json to_json(const GenerateSettings& s) {
    return {{"nodes", s.spec.nodes},
            {"target_edges", s.spec.target_edges},
            {"horizon", s.spec.horizon},
            {"illicit_ratio", s.spec.illicit_ratio},
            {"mix_burst", s.spec.mix.burst},
            {"mix_fan_in", s.spec.mix.fan_in},
            {"mix_fan_out", s.spec.mix.fan_out},
            {"mix_cycle", s.spec.mix.cycle},
            {"burst_window", s.spec.burst_window},
            {"intensity", s.spec.intensity},
            {"node_dim", s.spec.node_dim},
            {"edge_dim", s.spec.edge_dim},
            {"task", task_name(s.spec.task)},
            {"seed", s.spec.seed},
            {"out", s.out}};
}

GenerateSettings generate_from_json(const json& j) {
    GenerateSettings s;
    s.spec.nodes = j.at("nodes").get<std::int64_t>();
    s.spec.target_edges = j.at("target_edges").get<double>();
    s.spec.horizon = j.at("horizon").get<double>();
    s.spec.illicit_ratio = j.at("illicit_ratio").get<double>();
    s.spec.mix.burst = j.at("mix_burst").get<double>();
    s.spec.mix.fan_in = j.at("mix_fan_in").get<double>();
    s.spec.mix.fan_out = j.at("mix_fan_out").get<double>();
    s.spec.mix.cycle = j.at("mix_cycle").get<double>();
    s.spec.burst_window = j.at("burst_window").get<double>();
    s.spec.intensity = j.at("intensity").get<double>();
    s.spec.node_dim = j.at("node_dim").get<std::int64_t>();
    s.spec.edge_dim = j.at("edge_dim").get<std::int64_t>();
    s.spec.task = task_from_name(j.at("task").get<std::string>());
    s.spec.seed = j.at("seed").get<std::uint64_t>();
    s.out = j.at("out").get<std::string>();
    return s;
}

// Shared by train, ablate-timestamps and fanout-sweep.
struct TrainSettings {
    std::string data;
    std::string task; // empty = follow the dataset
    std::string mode = mode_name(Mode::with_agg);
    std::string backend = backend_name(Backend::gin);
    std::string timestamp_reducer = ad::reduce_name(ad::Reduce::max);
    bool temporal = true;
    std::string alpha_scope = alpha_scope_name(AlphaScope::full_message);
    std::int32_t layers = 2;
    std::int32_t node_hidden = 64;
    std::int32_t edge_hidden = 64;
    double tau = 5.0;
    double lr = 1e-3;
    double l2 = 1e-5;
    std::int32_t batch = 128;
    std::int32_t epochs = 100;
    std::int32_t patience = 10;
    bool class_weights = false;
    std::uint64_t seed = 1;
    std::int32_t fanout1 = 100;
    std::int32_t fanout2 = 100;
    std::string out = "run";
    // fanout-sweep / ablate-timestamps extras
    std::vector<std::string> sweep_fanouts;
    bool parallel = false;
};

json to_json(const TrainSettings& s) {
    return {{"data", s.data},
            {"task", s.task},
            {"mode", s.mode},
            {"backend", s.backend},
            {"timestamp_reducer", s.timestamp_reducer},
            {"temporal", s.temporal},
            {"alpha_scope", s.alpha_scope},
            {"layers", s.layers},
            {"node_hidden", s.node_hidden},
            {"edge_hidden", s.edge_hidden},
            {"tau", s.tau},
            {"lr", s.lr},
            {"l2", s.l2},
            {"batch", s.batch},
            {"epochs", s.epochs},
            {"patience", s.patience},
            {"class_weights", s.class_weights},
            {"seed", s.seed},
            {"fanout1", s.fanout1},
            {"fanout2", s.fanout2},
            {"out", s.out},
            {"sweep_fanouts", s.sweep_fanouts},
            {"parallel", s.parallel}};
}

TrainSettings train_from_json(const json& j) {
    TrainSettings s;
    s.data = j.at("data").get<std::string>();
    s.task = j.at("task").get<std::string>();
    s.mode = j.at("mode").get<std::string>();
    s.backend = j.at("backend").get<std::string>();
    s.timestamp_reducer = j.at("timestamp_reducer").get<std::string>();
    s.temporal = j.at("temporal").get<bool>();
    s.alpha_scope = j.at("alpha_scope").get<std::string>();
    s.layers = j.at("layers").get<std::int32_t>();
    s.node_hidden = j.at("node_hidden").get<std::int32_t>();
    s.edge_hidden = j.at("edge_hidden").get<std::int32_t>();
    s.tau = j.at("tau").get<double>();
    s.lr = j.at("lr").get<double>();
    s.l2 = j.at("l2").get<double>();
    s.batch = j.at("batch").get<std::int32_t>();
    s.epochs = j.at("epochs").get<std::int32_t>();
    s.patience = j.at("patience").get<std::int32_t>();
    s.class_weights = j.at("class_weights").get<bool>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.fanout1 = j.at("fanout1").get<std::int32_t>();
    s.fanout2 = j.at("fanout2").get<std::int32_t>();
    s.out = j.at("out").get<std::string>();
    s.sweep_fanouts = j.at("sweep_fanouts").get<std::vector<std::string>>();
    s.parallel = j.at("parallel").get<bool>();
    return s;
}

struct EvaluateSettings {
    std::string checkpoint;
    std::string data;
    std::string split = "test";
    std::string out = "eval";
};

json to_json(const EvaluateSettings& s) {
    return {{"checkpoint", s.checkpoint}, {"data", s.data}, {"split", s.split}, {"out", s.out}};
}

EvaluateSettings evaluate_from_json(const json& j) {
    EvaluateSettings s;
    s.checkpoint = j.at("checkpoint").get<std::string>();
    s.data = j.at("data").get<std::string>();
    s.split = j.at("split").get<std::string>();
    s.out = j.at("out").get<std::string>();
    return s;
}

// --------------------------------------------------------------------------
// run manifest

void write_manifest(const std::string& command, const json& settings,
                    const std::vector<std::string>& input_files,
                    const std::vector<std::string>& output_files, const fs::path& out_dir) {
    json m;
    m["format"] = "txgnn-run-v1";
    m["command"] = command;
    m["settings"] = settings;
    json inputs = json::object();
    for (const auto& f : input_files) inputs[f] = content_hash(f);
    m["inputs"] = std::move(inputs);
    json outputs = json::object();
    for (const auto& f : output_files)
        outputs[fs::path(f).filename().string()] = content_hash(f);
    m["outputs"] = std::move(outputs);
    write_file((out_dir / "manifest.json").string(), m.dump(1) + "\n");
}

// --------------------------------------------------------------------------
// shared pipeline pieces

int split_id_from_name(const std::string& name) {
    if (name == "train") return 0;
    if (name == "val") return 1;
    if (name == "test") return 2;
    throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

Task resolve_task(const TransactionGraph& g, const std::string& requested) {
    if (requested.empty()) return g.task;
    const Task t = task_from_name(requested);
    if (t != g.task)
        throw ConfigError(std::string("dataset provides ") + task_name(g.task) +
                          " labels but --task " + requested + " was requested");
    return t;
}

ModelConfig model_config(const TrainSettings& s, const TransactionGraph& g) {
    ModelConfig mc;
    mc.layers = s.layers;
    mc.node_in = static_cast<std::int32_t>(g.node_dim);
    mc.edge_in = static_cast<std::int32_t>(g.edge_dim);
    mc.node_hidden = s.node_hidden;
    mc.edge_hidden = s.edge_hidden;
    mc.mode = mode_from_name(s.mode);
    mc.backend = backend_from_name(s.backend);
    mc.timestamp_reducer = ad::reduce_from_name(s.timestamp_reducer);
    mc.temporal = s.temporal;
    mc.alpha_scope = alpha_scope_from_name(s.alpha_scope);
    mc.task = resolve_task(g, s.task);
    mc.tau = s.tau;
    return mc;
}

TrainConfig train_config(const TrainSettings& s) {
    TrainConfig tc;
    tc.lr = s.lr;
    tc.l2 = s.l2;
    tc.batch = s.batch;
    tc.epochs = s.epochs;
    tc.patience = s.patience;
    tc.class_weights = s.class_weights;
    tc.seed = s.seed;
    tc.fanout = {s.fanout1, s.fanout2};
    return tc;
}

std::string trace_csv(const std::vector<EpochRow>& trace) {
    std::string text = "epoch,train_loss,val_f1_min,val_macro_f1,val_pr_auc\n";
    for (const auto& row : trace) {
        text += std::to_string(row.epoch) + ',' + format_double(row.train_loss) + ',' +
                format_double(row.val_f1_min) + ',' + format_double(row.val_macro_f1) + ',' +
                format_double(row.val_pr_auc) + '\n';
    }
    return text;
}

struct ExperimentRow {
    metrics::EvalReport report;
    double wall_seconds = 0.0;
};

// One full training run followed by a deterministic test-split evaluation.
ExperimentRow run_experiment(const TransactionGraph& g, const ModelConfig& mc,
                             const TrainConfig& tc) {
    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult r = train(g, mc, tc);
    const SplitMasks splits = temporal_split(g);
    const TransactionGraph gn = normalize_features(g, r.best.stats);
    ExperimentRow row;
    row.report = evaluate_split(gn, splits, 2, r.best.params, r.best.config, r.best.fanout);
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return row;
}

// Runs the experiments in order, sequentially or via one async task each.
std::vector<ExperimentRow> run_all(const TransactionGraph& g,
                                   const std::vector<std::pair<ModelConfig, TrainConfig>>& jobs,
                                   bool parallel) {
    std::vector<ExperimentRow> rows(jobs.size());
    if (parallel) {
        std::vector<std::future<ExperimentRow>> futs;
        futs.reserve(jobs.size());
        for (const auto& [mc, tc] : jobs)
            futs.push_back(std::async(std::launch::async,
                                      [&g, &mc, &tc] { return run_experiment(g, mc, tc); }));
        for (std::size_t i = 0; i < futs.size(); ++i) rows[i] = futs[i].get();
    } else {
        for (std::size_t i = 0; i < jobs.size(); ++i)
            rows[i] = run_experiment(g, jobs[i].first, jobs[i].second);
    }
    return rows;
}

Fanout parse_fanout(const std::string& text) {
    const auto slash = text.find('/');
    if (slash == std::string::npos)
        throw ConfigError("fanout '" + text + "' must look like 20/10");
    Fanout f;
    f.hop1 = static_cast<std::int32_t>(parse_int(text.substr(0, slash), "fanout hop 1"));
    f.hop2 = static_cast<std::int32_t>(parse_int(text.substr(slash + 1), "fanout hop 2"));
    if (f.hop1 < 1 || f.hop2 < 1) throw ConfigError("fanout '" + text + "' must be positive");
    return f;
}

// --------------------------------------------------------------------------
// commands

int cmd_generate(const GenerateSettings& s) {
    g_inputs_resolved = true; // no file inputs
    const TransactionGraph g = generate(s.spec);
    const fs::path out_dir = ensure_out_dir(s.out);
    save_dataset(g, s.out);

    std::vector<std::string> outputs = dataset_files(s.out);
    write_manifest("generate", to_json(s), {}, outputs, out_dir);

    const GenStats st = stats(g);
    std::cout << "nodes=" << st.nodes << " edges=" << st.edges << " pairs=" << st.pairs
              << " illicit_ratio=" << format_double(st.illicit_ratio)
              << " mean_parallel=" << format_double(st.mean_parallel)
              << " edges_per_node=" << format_double(st.edges_per_node) << "\n";
    return 0;
}

int cmd_train(const TrainSettings& s) {
    const TransactionGraph g = load_dataset(s.data);
    const ModelConfig mc = model_config(s, g);
    const TrainConfig tc = train_config(s);
    mc.check();
    tc.check();
    g_inputs_resolved = true;

    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult r = train(g, mc, tc);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const fs::path out_dir = ensure_out_dir(s.out);
    const std::string ckpt = (out_dir / "checkpoint.json").string();
    const std::string trace = (out_dir / "trace.csv").string();
    save_checkpoint(r.best, ckpt);
    write_file(trace, trace_csv(r.trace));
    write_manifest("train", to_json(s), dataset_files(s.data), {ckpt, trace}, out_dir);

    const EpochRow& best = r.trace.at(static_cast<std::size_t>(r.best.epoch) - 1);
    std::cout << "best_epoch=" << r.best.epoch << " stopped_epoch=" << r.stopped_epoch
              << " val_f1_min=" << format_double(best.val_f1_min)
              << " val_macro_f1=" << format_double(best.val_macro_f1)
              << " val_pr_auc=" << format_double(best.val_pr_auc) << "\n";
    std::cerr << "wall_seconds=" << format_double(wall) << "\n";
    return 0;
}

int cmd_evaluate(const EvaluateSettings& s) {
    const int split_id = split_id_from_name(s.split);
    const Checkpoint ck = load_checkpoint(s.checkpoint);
    const TransactionGraph g = load_dataset(s.data);
    if (ck.config.task != g.task)
        throw ConfigError(std::string("checkpoint was trained for the ") +
                          task_name(ck.config.task) + " task but the dataset provides " +
                          task_name(g.task) + " labels");
    g_inputs_resolved = true;

    const SplitMasks splits = temporal_split(g);
    const TransactionGraph gn = normalize_features(g, ck.stats);
    const metrics::EvalReport rep =
        evaluate_split(gn, splits, split_id, ck.params, ck.config, ck.fanout);

    const fs::path out_dir = ensure_out_dir(s.out);
    const std::string table = (out_dir / "eval.csv").string();
    write_file(table, "split," + metrics::EvalReport::csv_header() + "\n" + s.split + "," +
                          rep.csv_row() + "\n");
    std::vector<std::string> inputs = {s.checkpoint};
    for (auto& f : dataset_files(s.data)) inputs.push_back(f);
    write_manifest("evaluate", to_json(s), inputs, {table}, out_dir);

    std::cout << rep.to_json() << "\n";
    return 0;
}

int cmd_ablate(const TrainSettings& s) {
    const TransactionGraph g = load_dataset(s.data);
    static const std::vector<ad::Reduce> reducers = {ad::Reduce::sum, ad::Reduce::mean,
                                                     ad::Reduce::min, ad::Reduce::max};
    std::vector<std::pair<ModelConfig, TrainConfig>> jobs;
    for (ad::Reduce r : reducers) {
        ModelConfig mc = model_config(s, g);
        mc.timestamp_reducer = r;
        mc.check();
        TrainConfig tc = train_config(s); // shared seed: identical initialization
        tc.check();
        jobs.emplace_back(mc, tc);
    }
    g_inputs_resolved = true;

    const auto rows = run_all(g, jobs, s.parallel);
    std::string table = "reducer,f1_min,macro_f1,pr_auc\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& rep = rows[i].report;
        table += std::string(ad::reduce_name(reducers[i])) + ',' + format_double(rep.f1_min) +
                 ',' + format_double(rep.macro_f1) + ',' + format_double(rep.pr_auc) + '\n';
        std::cerr << ad::reduce_name(reducers[i])
                  << " wall_seconds=" << format_double(rows[i].wall_seconds) << "\n";
    }

    const fs::path out_dir = ensure_out_dir(s.out);
    const std::string path = (out_dir / "ablate_timestamps.csv").string();
    write_file(path, table);
    write_manifest("ablate-timestamps", to_json(s), dataset_files(s.data), {path}, out_dir);
    std::cout << table;
    return 0;
}

int cmd_sweep(const TrainSettings& s) {
    const TransactionGraph g = load_dataset(s.data);
    std::vector<Fanout> fanouts;
    for (const auto& text : s.sweep_fanouts) fanouts.push_back(parse_fanout(text));
    if (fanouts.empty()) throw ConfigError("fanout-sweep needs at least one --fanout");

    std::vector<std::pair<ModelConfig, TrainConfig>> jobs;
    for (const Fanout& f : fanouts) {
        ModelConfig mc = model_config(s, g);
        mc.check();
        TrainConfig tc = train_config(s);
        tc.fanout = f;
        tc.check();
        jobs.emplace_back(mc, tc);
    }
    g_inputs_resolved = true;

    const auto rows = run_all(g, jobs, s.parallel);
    std::string table = "fanout1,fanout2,f1_min,macro_f1,pr_auc\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& rep = rows[i].report;
        table += std::to_string(fanouts[i].hop1) + ',' + std::to_string(fanouts[i].hop2) +
                 ',' + format_double(rep.f1_min) + ',' + format_double(rep.macro_f1) + ',' +
                 format_double(rep.pr_auc) + '\n';
        // Report-only sanity signal: wall time should grow with the fanout.
        std::cerr << fanouts[i].hop1 << '/' << fanouts[i].hop2
                  << " wall_seconds=" << format_double(rows[i].wall_seconds) << "\n";
    }

    const fs::path out_dir = ensure_out_dir(s.out);
    const std::string path = (out_dir / "fanout_sweep.csv").string();
    write_file(path, table);
    write_manifest("fanout-sweep", to_json(s), dataset_files(s.data), {path}, out_dir);
    std::cout << table;
    return 0;
}

int cmd_rerun(const std::string& manifest_path, const std::string& out_override) {
    json m;
    try {
        m = json::parse(read_file(manifest_path));
    } catch (const json::exception& e) {
        throw ParseError("manifest " + manifest_path + ": " + e.what());
    }
    std::string command;
    json settings;
    json inputs;
    try {
        if (m.at("format").get<std::string>() != "txgnn-run-v1")
            throw ParseError("manifest " + manifest_path + ": unrecognized format tag");
        command = m.at("command").get<std::string>();
        settings = m.at("settings");
        inputs = m.at("inputs");
    } catch (const json::exception& e) {
        throw ParseError("manifest " + manifest_path + ": " + e.what());
    }
    // Reproducibility holds only over the recorded inputs.
    for (const auto& [path, hash] : inputs.items())
        if (content_hash(path) != hash.get<std::string>())
            throw IntegrityError("input " + path + " changed since the manifest was written");

    try {
        if (command == "generate") {
            GenerateSettings s = generate_from_json(settings);
            if (!out_override.empty()) s.out = out_override;
            return cmd_generate(s);
        }
        if (command == "train" || command == "ablate-timestamps" || command == "fanout-sweep") {
            TrainSettings s = train_from_json(settings);
            if (!out_override.empty()) s.out = out_override;
            if (command == "train") return cmd_train(s);
            if (command == "ablate-timestamps") return cmd_ablate(s);
            return cmd_sweep(s);
        }
        if (command == "evaluate") {
            EvaluateSettings s = evaluate_from_json(settings);
            if (!out_override.empty()) s.out = out_override;
            return cmd_evaluate(s);
        }
    } catch (const json::exception& e) {
        throw ParseError("manifest " + manifest_path + ": " + e.what());
    }
    throw ParseError("manifest " + manifest_path + ": unknown command '" + command + "'");
}

// --------------------------------------------------------------------------
// flag wiring

void add_train_flags(CLI::App* cmd, TrainSettings& s) {
    cmd->add_option("--data", s.data, "Dataset directory (manifest.txt + CSVs)")->required();
    cmd->add_option("--task", s.task, "Prediction target; defaults to the dataset's task")
        ->check(CLI::IsMember({"node", "edge"}));
    cmd->add_option("--mode", s.mode, "Parallel-edge handling")
        ->check(CLI::IsMember({"with_agg", "without_agg"}))
        ->capture_default_str();
    cmd->add_option("--backend", s.backend, "Neighborhood aggregation backend")
        ->check(CLI::IsMember({"gin", "pna"}))
        ->capture_default_str();
    cmd->add_option("--temporal", s.temporal, "Temporal weighting of messages")
        ->transform(CLI::CheckedTransformer(std::map<std::string, bool>{{"on", true},
                                                                        {"off", false}}))
        ->default_str("on");
    cmd->add_option("--alpha-scope", s.alpha_scope,
                    "What the temporal weight multiplies")
        ->check(CLI::IsMember({"full_message", "edge_only"}))
        ->capture_default_str();
    cmd->add_option("--layers", s.layers, "Message-passing rounds")->capture_default_str();
    cmd->add_option("--node-hidden", s.node_hidden, "Node embedding width")
        ->capture_default_str();
    cmd->add_option("--edge-hidden", s.edge_hidden, "Edge embedding width")
        ->capture_default_str();
    cmd->add_option("--tau", s.tau, "Temporal softmax span")->capture_default_str();
    cmd->add_option("--lr", s.lr, "Adam learning rate")->capture_default_str();
    cmd->add_option("--l2", s.l2, "L2 penalty strength")->capture_default_str();
    cmd->add_option("--batch", s.batch, "Minibatch size")->capture_default_str();
    cmd->add_option("--epochs", s.epochs, "Maximum epochs")->capture_default_str();
    cmd->add_option("--patience", s.patience, "Early-stopping patience")
        ->capture_default_str();
    cmd->add_flag("--class-weights", s.class_weights,
                  "Weight the loss by inverse class frequency");
    cmd->add_option("--seed", s.seed, "RNG seed")->capture_default_str();
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Temporal multigraph message-passing engine for transaction graphs"};
    app.require_subcommand(1);
    // Give the config before the command; its options live in a section named
    // after the command, e.g. `[train]`.  Flags win over config values.
    app.set_config("--config", "", "Read options from a TOML/INI file; flags win on conflict");

    GenerateSettings gen;
    auto* g = app.add_subcommand("generate", "Write a synthetic labeled transaction dataset");
    g->add_option("--nodes", gen.spec.nodes, "Account count")->capture_default_str();
    g->add_option("--edges", gen.spec.target_edges, "Approximate transaction count")
        ->capture_default_str();
    g->add_option("--horizon", gen.spec.horizon, "Time horizon in seconds")
        ->capture_default_str();
    g->add_option("--illicit-ratio", gen.spec.illicit_ratio,
                  "Target share of illicit transactions")
        ->capture_default_str();
    g->add_option("--mix-burst", gen.spec.mix.burst, "Burst motif weight")
        ->capture_default_str();
    g->add_option("--mix-fan-in", gen.spec.mix.fan_in, "Fan-in motif weight")
        ->capture_default_str();
    g->add_option("--mix-fan-out", gen.spec.mix.fan_out, "Fan-out motif weight")
        ->capture_default_str();
    g->add_option("--mix-cycle", gen.spec.mix.cycle, "Cycle motif weight")
        ->capture_default_str();
    g->add_option("--burst-window", gen.spec.burst_window, "Burst width in seconds")
        ->capture_default_str();
    g->add_option("--intensity", gen.spec.intensity, "Target mean transactions per pair")
        ->capture_default_str();
    g->add_option("--node-dim", gen.spec.node_dim, "Node feature columns")
        ->capture_default_str();
    g->add_option("--edge-dim", gen.spec.edge_dim, "Edge feature columns")
        ->capture_default_str();
    std::string gen_task = task_name(gen.spec.task);
    g->add_option("--task", gen_task, "Which labels to write")
        ->check(CLI::IsMember({"node", "edge"}))
        ->capture_default_str();
    g->add_option("--seed", gen.spec.seed, "RNG seed")->capture_default_str();
    g->add_option("--out", gen.out, "Output dataset directory")->capture_default_str();

    TrainSettings tr;
    auto* t = app.add_subcommand("train", "Train a model and write checkpoint + trace");
    add_train_flags(t, tr);
    t->add_option("--timestamp-reducer", tr.timestamp_reducer,
                  "Reducer over parallel-edge timestamps")
        ->check(CLI::IsMember({"sum", "mean", "min", "max"}))
        ->capture_default_str();
    t->add_option("--fanout1", tr.fanout1, "First-hop neighbor cap")->capture_default_str();
    t->add_option("--fanout2", tr.fanout2, "Second-hop neighbor cap")->capture_default_str();
    t->add_option("--out", tr.out, "Output run directory")->capture_default_str();

    EvaluateSettings ev;
    auto* e = app.add_subcommand("evaluate", "Score a checkpoint on one split");
    e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
    e->add_option("--data", ev.data, "Dataset directory")->required();
    e->add_option("--split", ev.split, "Split to score")
        ->check(CLI::IsMember({"train", "val", "test"}))
        ->capture_default_str();
    e->add_option("--out", ev.out, "Output directory")->capture_default_str();

    TrainSettings ab;
    ab.out = "ablate";
    auto* a = app.add_subcommand("ablate-timestamps",
                                 "Train once per timestamp reducer (sum, mean, min, max)");
    add_train_flags(a, ab);
    a->add_option("--fanout1", ab.fanout1, "First-hop neighbor cap")->capture_default_str();
    a->add_option("--fanout2", ab.fanout2, "Second-hop neighbor cap")->capture_default_str();
    a->add_flag("--parallel", ab.parallel, "Run the four trainings concurrently");
    a->add_option("--out", ab.out, "Output directory")->capture_default_str();

    TrainSettings sw;
    sw.out = "sweep";
    sw.sweep_fanouts = {"5/5", "20/20", "50/50", "100/100"};
    auto* w = app.add_subcommand("fanout-sweep", "Train once per fanout pair");
    add_train_flags(w, sw);
    w->add_option("--fanout", sw.sweep_fanouts, "Fanout pairs, e.g. --fanout 20/10")
        ->capture_default_str();
    w->add_flag("--parallel", sw.parallel, "Run the trainings concurrently");
    w->add_option("--out", sw.out, "Output directory")->capture_default_str();

    std::string rerun_manifest, rerun_out;
    auto* r = app.add_subcommand("rerun", "Re-execute a command from its run manifest");
    r->add_option("manifest", rerun_manifest, "manifest.json written by a previous run")
        ->required();
    r->add_option("--out", rerun_out, "Redirect outputs to a different directory");

    g_inputs_resolved = false;
    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::ParseError& err) {
            const int code = app.exit(err); // prints help or the error message
            return code == 0 ? 0 : 2;
        }
        if (g->parsed()) {
            gen.spec.task = task_from_name(gen_task);
            return cmd_generate(gen);
        }
        if (t->parsed()) return cmd_train(tr);
        if (e->parsed()) return cmd_evaluate(ev);
        if (a->parsed()) return cmd_ablate(ab);
        if (w->parsed()) return cmd_sweep(sw);
        return cmd_rerun(rerun_manifest, rerun_out);
    } catch (const ConfigError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 2;
    } catch (const SpecError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 2;
    } catch (const ParseError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return g_inputs_resolved ? 1 : 2;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
}

} // namespace txgnn
