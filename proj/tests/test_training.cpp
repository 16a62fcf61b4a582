#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "testutil.hpp"
#include "txgnn/errors.hpp"
#include "txgnn/graph.hpp"
#include "txgnn/model.hpp"
#include "txgnn/training.hpp"

using namespace txgnn;
using ad::Tensor;
using testutil::close;
using testutil::EdgeSpec;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("txgnn_train_" + std::to_string(getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

// A linearly separable instance: the first edge feature encodes the label.
TransactionGraph separable_graph(std::uint64_t seed, bool train_single_class = false) {
    Rng rng(seed);
    std::vector<EdgeSpec> specs;
    // Node activity follows time so every temporal split keeps some nodes.
    for (int e = 0; e < 120; ++e) {
        const int src = e / 3;
        const int dst = (src + 1 + e % 3) % 40;
        specs.push_back({static_cast<double>(src), static_cast<double>(dst),
                         static_cast<double>(e)});
    }
    auto g = testutil::build_test_graph(rng, 40, specs, 1, 2, Task::edge);
    g.has_labels = true;
    g.labels.resize(specs.size());
    for (std::size_t e = 0; e < specs.size(); ++e) {
        const bool positive = train_single_class ? e >= 100 : e % 3 == 0;
        g.labels[e] = positive ? 1 : 0;
        g.edge_features[e * 2] = (positive ? 1.0 : -1.0) + 0.1 * (rng.uniform() - 0.5);
        g.edge_features[e * 2 + 1] = rng.uniform() - 0.5;
    }
    validate_graph(g);
    return g;
}

ModelConfig tiny_model() {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.node_hidden = 8;
    cfg.edge_hidden = 8;
    cfg.mode = Mode::with_agg;
    cfg.backend = Backend::gin;
    cfg.task = Task::edge;
    return cfg;
}

TrainConfig quick_train(std::int32_t epochs) {
    TrainConfig tc;
    tc.lr = 0.02;
    tc.batch = 1024; // single full batch per epoch
    tc.epochs = epochs;
    tc.patience = 50;
    tc.seed = 3;
    tc.fanout = {20, 20};
    return tc;
}

double weight_norm_sq(const ModelParams& p) {
    double s = 0.0;
    for (auto& [name, t] : p.named()) {
        (void)name;
        if (t.rank() != 2) continue;
        for (double v : t.values()) s += v * v;
    }
    return s;
}

} // namespace

TEST_CASE("loss worked examples") {
    ModelParams none; // no parameters registered: pure cross entropy
    const std::vector<std::int32_t> zero{0};

    const Tensor perfect = Tensor::constant({1, 2}, {1000.0, -1000.0});
    CHECK(training_loss(perfect, zero, none, 0.0).item() == 0.0);

    const Tensor uniform = Tensor::constant({1, 2}, {0.0, 0.0});
    CHECK(close(training_loss(uniform, zero, none, 0.0).item(), std::log(2.0)));

    // A lone 1x2 weight matrix [[1,2]] under strength 0.1 adds 0.1*(1+4).
    ModelParams one;
    one.x_in_W = Tensor::param({1, 2}, {1.0, 2.0});
    CHECK(l2_penalty(one, 0.1).item() == 0.5);
    CHECK(close(training_loss(uniform, zero, one, 0.1).item(), std::log(2.0) + 0.5));

    // Strength zero leaves the plain cross entropy bit-identical.
    CHECK(training_loss(uniform, zero, one, 0.0).item() ==
          ad::cross_entropy_with_logits(uniform, zero).item());
    CHECK(!l2_penalty(one, 0.0).valid());

    const std::vector<std::int32_t> bad{7};
    CHECK_THROWS_AS((void)training_loss(uniform, bad, none, 0.0), ContractError);
}

TEST_CASE("the regularization gradient is exactly twice the scaled weight") {
    ModelParams p;
    p.x_in_W = Tensor::param({2, 2}, {1.0, 2.0, 3.0, -4.0});
    p.x_in_b = Tensor::param({2}, {5.0, 6.0}); // biases stay out of the penalty
    const double strength = 0.3;
    const Tensor pen = l2_penalty(p, strength);
    CHECK(pen.item() == strength * 30.0);
    ad::backward(pen);
    auto w = p.x_in_W.values();
    auto gr = p.x_in_W.grad();
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(gr[i] == 2.0 * strength * w[i]);
    CHECK(!p.x_in_b.has_grad());
}

TEST_CASE("adam leaves parameters alone under zero gradients") {
    auto cfg = tiny_model();
    cfg.node_in = 1;
    cfg.edge_in = 2;
    const auto params = ModelParams::init(cfg, 9);
    std::vector<double> before;
    for (auto& [n, t] : params.named()) {
        (void)n;
        before.insert(before.end(), t.values().begin(), t.values().end());
    }
    Adam opt(params, 1e-3);
    opt.step(); // nothing backpropagated yet
    std::vector<double> after;
    for (auto& [n, t] : params.named()) {
        (void)n;
        after.insert(after.end(), t.values().begin(), t.values().end());
    }
    CHECK(before == after);
}

TEST_CASE("the first adam step moves each coordinate by about the learning rate") {
    ModelParams p;
    p.x_in_W = Tensor::param({1, 4}, {0.7, -0.3, 1.2, -0.9});
    p.x_in_b = Tensor::param({4}, {0.1, 0.1, 0.1, 0.1});
    const std::vector<double> w0(p.x_in_W.values().begin(), p.x_in_W.values().end());
    const double lr = 1e-3;
    Adam opt(p, lr);

    const Tensor pen = l2_penalty(p, 1.0); // gradient 2w, well above adam's epsilon
    ad::backward(pen);
    opt.step();

    auto w1 = p.x_in_W.values();
    for (std::size_t i = 0; i < w1.size(); ++i) {
        const double step = w0[i] - w1[i];
        CHECK(step * w0[i] > 0.0); // moves against the gradient's sign
        CHECK(std::fabs(step) <= lr);
        CHECK(std::fabs(step) > 0.999 * lr);
    }
    auto b = p.x_in_b.values();
    for (double v : b) CHECK(v == 0.1); // no gradient, no movement
}

TEST_CASE("adam aborts on non-finite gradients naming the tensor") {
    ModelParams p;
    p.x_in_W = Tensor::param({1, 2}, {1e-320, 0.5}); // log gradient 1/x overflows
    Adam opt(p, 1e-3);
    const Tensor loss = ad::reduce_all(ad::log(p.x_in_W), ad::Reduce::sum);
    ad::backward(loss);
    try {
        opt.step();
        FAIL("expected a GradientError");
    } catch (const GradientError& e) {
        CHECK(std::string(e.what()).find("x_in_W") != std::string::npos);
    }
}

TEST_CASE("early stopping returns the best epoch, not the last") {
    EarlyStopper stop(2);
    CHECK(stop.observe(0.3));
    CHECK(!stop.should_stop());
    CHECK(stop.observe(0.5));
    CHECK(!stop.should_stop());
    CHECK(!stop.observe(0.4));
    CHECK(!stop.should_stop());
    CHECK(!stop.observe(0.4)); // a tie is not an improvement
    CHECK(stop.should_stop()); // stop after epoch 4...
    CHECK(stop.best_epoch() == 2); // ...returning epoch 2
    CHECK(stop.best_metric() == 0.5);
    CHECK_THROWS_AS(EarlyStopper(0), ConfigError);
}

TEST_CASE("the loss converges on a separable instance") {
    const auto g = separable_graph(41);
    auto tc = quick_train(40);
    tc.lr = 3e-3;
    tc.batch = 24;
    const auto result = train(g, tiny_model(), tc);
    REQUIRE(result.trace.size() == 40);
    std::string shape;
    for (const auto& row : result.trace) shape += std::to_string(row.train_loss) + " ";
    INFO("trace: " << shape);
    CHECK(result.trace.back().train_loss < 0.5 * result.trace.front().train_loss);
    CHECK(result.trace.back().train_loss < 0.35);

    double best = 0.0;
    for (const auto& row : result.trace) best = std::max(best, row.val_f1_min);
    CHECK(result.best.val_f1_min == best);
    CHECK(result.best.epoch >= 1);
    CHECK(result.stopped_epoch == 40);
}

TEST_CASE("full-batch loss decreases through each of the first five epochs") {
    const auto g = separable_graph(49);
    auto tc = quick_train(5);
    tc.lr = 1e-4; // one small exact full-batch step per epoch
    const auto result = train(g, tiny_model(), tc);
    REQUIRE(result.trace.size() == 5);
    std::string shape;
    for (const auto& row : result.trace) shape += std::to_string(row.train_loss) + " ";
    INFO("trace: " << shape);
    for (std::size_t e = 0; e + 1 < result.trace.size(); ++e)
        CHECK(result.trace[e + 1].train_loss < result.trace[e].train_loss);
}

TEST_CASE("training is deterministic end to end") {
    const auto g = separable_graph(42);
    const auto a = train(g, tiny_model(), quick_train(4));
    const auto b = train(g, tiny_model(), quick_train(4));
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t e = 0; e < a.trace.size(); ++e) {
        CHECK(a.trace[e].train_loss == b.trace[e].train_loss);
        CHECK(a.trace[e].val_f1_min == b.trace[e].val_f1_min);
        CHECK(a.trace[e].val_macro_f1 == b.trace[e].val_macro_f1);
        CHECK(a.trace[e].val_pr_auc == b.trace[e].val_pr_auc);
    }
    const auto pa = a.best.params.named();
    const auto pb = b.best.params.named();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        auto va = pa[i].second.values();
        auto vb = pb[i].second.values();
        REQUIRE(va.size() == vb.size());
        for (std::size_t k = 0; k < va.size(); ++k) CHECK(va[k] == vb[k]);
    }
}

TEST_CASE("strong regularization shrinks the weights") {
    const auto g = separable_graph(43);
    auto light = quick_train(3);
    auto heavy = quick_train(3);
    heavy.l2 = 10.0;
    light.l2 = 0.0;
    const auto small = train(g, tiny_model(), heavy);
    const auto large = train(g, tiny_model(), light);
    CHECK(weight_norm_sq(small.best.params) < weight_norm_sq(large.best.params));
}

TEST_CASE("checkpoints round-trip and reproduce their validation score") {
    const auto g = separable_graph(44);
    const auto result = train(g, tiny_model(), quick_train(4));

    TempDir dir;
    const auto path = (dir.path / "model.json").string();
    save_checkpoint(result.best, path);
    const auto loaded = load_checkpoint(path);

    CHECK(loaded.epoch == result.best.epoch);
    CHECK(loaded.val_f1_min == result.best.val_f1_min);
    CHECK(loaded.fanout.hop1 == result.best.fanout.hop1);
    CHECK(loaded.fanout.hop2 == result.best.fanout.hop2);
    CHECK(loaded.config.time_scale == result.best.config.time_scale);
    CHECK(loaded.config.mode == result.best.config.mode);
    CHECK(loaded.stats.edge_mean == result.best.stats.edge_mean);
    CHECK(loaded.stats.edge_sd == result.best.stats.edge_sd);

    const auto want = result.best.params.named();
    const auto got = loaded.params.named();
    REQUIRE(want.size() == got.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(want[i].first == got[i].first);
        auto a = want[i].second.values();
        auto b = got[i].second.values();
        REQUIRE(a.size() == b.size());
        for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == b[k]);
    }

    // Re-deriving the splits and normalization reproduces the stored
    // validation score exactly: evaluation sampling is content-addressed.
    const auto splits = temporal_split(g);
    const auto gn = normalize_features(g, loaded.stats);
    const auto rerun =
        evaluate_split(gn, splits, 1, loaded.params, loaded.config, loaded.fanout);
    CHECK(rerun.f1_min == loaded.val_f1_min);

    // Corruption and malformed files surface as typed errors.
    {
        std::ofstream bad((dir.path / "garbage.json").string());
        bad << "{\"format\": \"nope\"}";
    }
    CHECK_THROWS_AS((void)load_checkpoint((dir.path / "garbage.json").string()), ParseError);
    {
        std::ofstream bad((dir.path / "broken.json").string());
        bad << "not json";
    }
    CHECK_THROWS_AS((void)load_checkpoint((dir.path / "broken.json").string()), ParseError);
    CHECK_THROWS_AS((void)load_checkpoint((dir.path / "missing.json").string()), ParseError);
}

TEST_CASE("class weighting trains and changes the fit") {
    const auto g = separable_graph(45);
    auto tc = quick_train(3);
    tc.class_weights = true;
    const auto weighted = train(g, tiny_model(), tc);
    REQUIRE(weighted.trace.size() == 3);
    for (const auto& row : weighted.trace) CHECK(std::isfinite(row.train_loss));
    tc.class_weights = false;
    const auto plain = train(g, tiny_model(), tc);
    CHECK(weighted.trace[0].train_loss != plain.trace[0].train_loss);
}

TEST_CASE("training rejects degenerate inputs") {
    auto tc = quick_train(2);
    tc.lr = 0.0;
    CHECK_THROWS_AS(tc.check(), ConfigError);
    tc = quick_train(2);
    tc.l2 = -1.0;
    CHECK_THROWS_AS(tc.check(), ConfigError);
    tc = quick_train(2);
    tc.batch = 0;
    CHECK_THROWS_AS(tc.check(), ConfigError);
    tc = quick_train(2);
    tc.patience = 0;
    CHECK_THROWS_AS(tc.check(), ConfigError);

    auto unlabeled = separable_graph(46);
    unlabeled.has_labels = false;
    unlabeled.labels.clear();
    CHECK_THROWS_AS((void)train(unlabeled, tiny_model(), quick_train(2)), ConfigError);

    // All training-split labels in one class: the loss cannot rank anything.
    const auto lopsided = separable_graph(47, true);
    CHECK_THROWS_AS((void)train(lopsided, tiny_model(), quick_train(2)), ConfigError);
}

TEST_CASE("split evaluation validates its inputs") {
    const auto g = separable_graph(48);
    const auto splits = temporal_split(g);
    auto cfg = tiny_model();
    cfg.node_in = 1;
    cfg.edge_in = 2;
    const auto params = ModelParams::init(cfg, 12);
    CHECK_THROWS_AS((void)evaluate_split(g, splits, 7, params, cfg, {20, 20}), ConfigError);

    auto unlabeled = g;
    unlabeled.has_labels = false;
    unlabeled.labels.clear();
    CHECK_THROWS_AS((void)evaluate_split(unlabeled, splits, 1, params, cfg, {20, 20}),
                    ConfigError);

    const auto rep = evaluate_split(g, splits, 1, params, cfg, {20, 20});
    CHECK(rep.tp + rep.fp + rep.tn + rep.fn == 24); // the middle fifth of 120 edges
}
