#include <cmath>

#include "doctest.h"
#include "sarc/synthgen.hpp"
#include "sarc/trainer.hpp"

using namespace sarc;

namespace {

DSarcNetConfig tiny_config() {
    DSarcNetConfig cfg;
    cfg.channels = {4, 8, 16, 32};
    cfg.depths_a = {1, 1, 1, 1};
    cfg.depths_b = {1, 1, 1, 1};
    cfg.heads = {1, 1, 2, 2};
    cfg.head_widths = {16, 8};
    return cfg;
}

PatchNetConfig tiny_patch_config() {
    PatchNetConfig cfg;
    cfg.backbone.in_channels = 1;
    cfg.backbone.channels = {4, 8, 16, 32};
    cfg.backbone.depths = {1, 1, 1, 1};
    return cfg;
}

// Random-but-labeled samples: the raw image's overall brightness carries the
// label so there is signal to fit.
std::vector<TrainSample> make_samples(int n, uint64_t seed) {
    Rng rng(seed);
    std::vector<TrainSample> out(n);
    for (int i = 0; i < n; ++i) {
        out[i].id = "s" + std::to_string(i);
        const float label = 1.0f + 4.0f * (float)(i % 5) / 4.0f;
        out[i].label = label;
        out[i].raw = Tensor<float>({3, 224, 224});
        out[i].stack = Tensor<float>({3, 224, 224});
        const float base = (label - 1.0f) / 4.0f;
        for (auto& v : out[i].raw.v) v = base + 0.05f * (float)rng.uniform();
        for (auto& v : out[i].stack.v) v = base + 0.05f * (float)rng.uniform();
    }
    return out;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("config validation catches nonsense settings") {
    TrainConfig c;
    CHECK_NOTHROW(validate_train_config(c));
    c.lr = 0;
    CHECK_THROWS_AS(validate_train_config(c), ConfigError);
    c = TrainConfig{};
    c.batch = 0;
    CHECK_THROWS_AS(validate_train_config(c), ConfigError);
    c = TrainConfig{};
    c.epochs = -1;
    CHECK_THROWS_AS(validate_train_config(c), ConfigError);
    c = TrainConfig{};
    c.lr_schedule = "cosine";
    CHECK_THROWS_AS(validate_train_config(c), ConfigError);
}

TEST_CASE("plain mse helper") {
    CHECK(mse_loss({2.0, 4.0}, {1.0, 2.0}) == doctest::Approx(2.5));
    CHECK_THROWS_AS((void)mse_loss({}, {}), ValidationError);
    CHECK_THROWS_AS((void)mse_loss({1.0}, {1.0, 2.0}), ShapeError);
}

TEST_CASE("adam walks a parameter to its target") {
    Tensor<float> w0({3});
    w0.v = {0.0f, 10.0f, -4.0f};
    auto w = ad::Var<float>::leaf(w0, true);
    Tensor<float> target({3});
    target.v = {3.0f, 1.0f, 2.0f};

    nn::Adam<float> opt({w}, 0.1);
    for (int it = 0; it < 400; ++it) {
        opt.zero_grad();
        ad::backward(ad::mse_loss(w, target));
        opt.step();
    }
    for (int i = 0; i < 3; ++i)
        CHECK(w.val().v[i] == doctest::Approx(target.v[i]).epsilon(1e-3));
}

TEST_CASE("adam skips parameters that were never touched by backward") {
    auto used = ad::Var<float>::leaf(Tensor<float>({1}, 5.0f), true);
    auto unused = ad::Var<float>::leaf(Tensor<float>({1}, 7.0f), true);
    Tensor<float> t({1}, 0.0f);
    nn::Adam<float> opt({used, unused}, 0.1);
    ad::backward(ad::mse_loss(used, t));
    opt.step();
    CHECK(used.val().v[0] != 5.0f);
    CHECK(unused.val().v[0] == 7.0f);
}

TEST_CASE("weight snapshots restore parameters and buffers") {
    nn::DualStreamModel<float> model(tiny_config(), 3);
    auto pm = model.named_params();
    auto snap = detail::WeightSnapshot<float>::take(pm);

    for (auto& [name, p] : pm.params) p.val().v[0] += 1.0f;
    for (auto& [name, b] : pm.buffers) b->v[0] += 1.0f;
    snap.restore(pm);

    auto again = detail::WeightSnapshot<float>::take(pm);
    for (size_t i = 0; i < snap.params.size(); ++i)
        CHECK(again.params[i].v == snap.params[i].v);
    for (size_t i = 0; i < snap.buffers.size(); ++i)
        CHECK(again.buffers[i].v == snap.buffers[i].v);
}

TEST_CASE("dual-stream training keeps the best validation epoch") {
    auto train = make_samples(8, 1);
    auto val = make_samples(4, 2);
    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.batch = 4;
    cfg.epochs = 3;
    cfg.seed = 5;

    nn::DualStreamModel<float> model(tiny_config(), 5);
    int cb_calls = 0;
    auto h = train_dualstream(model, train, val, cfg,
                              [&](int, const TrainHistory&) { ++cb_calls; });

    CHECK(cb_calls == 3);
    REQUIRE(h.train_loss.size() == 3);
    REQUIRE(h.val_metric.size() == 3);
    REQUIRE(h.seconds.size() == 3);
    CHECK(h.val_metric_name == "val_mse");
    for (double s : h.seconds) CHECK(s > 0);
    for (double l : h.train_loss) CHECK(std::isfinite(l));

    REQUIRE(h.selected_epoch >= 0);
    double best = h.val_metric[0];
    for (double v : h.val_metric) best = std::min(best, v);
    CHECK(h.val_metric[h.selected_epoch] == best);

    // The restored weights must reproduce the selected epoch's val MSE.
    // Same batch layout as the trainer's validation pass, so the comparison
    // is exact rather than within fp noise.
    const int nb = (int)val.size();
    Tensor<float> raw({nb, 3, 224, 224}), stack({nb, 3, 224, 224});
    const size_t plane = (size_t)3 * 224 * 224;
    std::vector<double> preds, labels;
    for (int b = 0; b < nb; ++b) {
        std::copy(val[b].raw.v.begin(), val[b].raw.v.end(), raw.v.begin() + (size_t)b * plane);
        std::copy(val[b].stack.v.begin(), val[b].stack.v.end(),
                  stack.v.begin() + (size_t)b * plane);
        labels.push_back(val[b].label);
    }
    for (const auto& p : model.predict(raw, stack)) preds.push_back(p.clamped);
    CHECK(mse_loss(preds, labels) == doctest::Approx(best).epsilon(1e-9));
}

TEST_CASE("training is deterministic for a fixed seed") {
    auto train = make_samples(6, 3);
    auto val = make_samples(3, 4);
    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.batch = 3;
    cfg.epochs = 2;
    cfg.seed = 9;

    nn::DualStreamModel<float> m1(tiny_config(), 11), m2(tiny_config(), 11);
    auto h1 = train_dualstream(m1, train, val, cfg);
    auto h2 = train_dualstream(m2, train, val, cfg);
    CHECK(h1.train_loss == h2.train_loss);
    CHECK(h1.val_metric == h2.val_metric);
    CHECK(h1.selected_epoch == h2.selected_epoch);
}

TEST_CASE("zero epochs returns the initial weights and an empty history") {
    auto train = make_samples(4, 5);
    auto val = make_samples(2, 6);
    TrainConfig cfg;
    cfg.epochs = 0;

    nn::DualStreamModel<float> model(tiny_config(), 13);
    auto pm = model.named_params();
    auto before = detail::WeightSnapshot<float>::take(pm);
    auto h = train_dualstream(model, train, val, cfg);
    CHECK(h.train_loss.empty());
    CHECK(h.selected_epoch == -1);
    auto after = detail::WeightSnapshot<float>::take(pm);
    for (size_t i = 0; i < before.params.size(); ++i)
        CHECK(after.params[i].v == before.params[i].v);
}

TEST_CASE("a diverging run aborts with a training error") {
    auto train = make_samples(6, 7);
    auto val = make_samples(2, 8);
    TrainConfig cfg;
    cfg.lr = 1e30;  // guarantees an overflow within the first epochs
    cfg.batch = 2;
    cfg.epochs = 4;

    nn::DualStreamModel<float> model(tiny_config(), 15);
    CHECK_THROWS_AS((void)train_dualstream(model, train, val, cfg), TrainError);
}

TEST_CASE("empty datasets are rejected") {
    auto some = make_samples(2, 9);
    TrainConfig cfg;
    nn::DualStreamModel<float> model(tiny_config(), 17);
    CHECK_THROWS_AS((void)train_dualstream(model, {}, some, cfg), ValidationError);
    CHECK_THROWS_AS((void)train_dualstream(model, some, {}, cfg), ValidationError);
}

TEST_CASE("patch classifier training loop runs and validates") {
    auto patches = generate_patches(4, 21);  // 20 patches, 4 per class
    std::vector<PatchExample> train, val;
    for (size_t i = 0; i < patches.size(); ++i)
        (i % 4 == 3 ? val : train).push_back(patches[i]);

    TrainConfig cfg;
    cfg.lr = 3e-4;
    cfg.batch = 5;
    cfg.epochs = 2;
    nn::PatchNet<float> net(tiny_patch_config(), 23);
    auto h = train_patchnet(net, train, val, cfg);
    REQUIRE(h.train_loss.size() == 2);
    CHECK(h.val_metric_name == "val_cross_entropy");
    for (double v : h.val_metric) CHECK(std::isfinite(v));
    CHECK(h.selected_epoch >= 0);

    std::vector<PatchExample> bad = train;
    bad[0].class_id = 9;
    CHECK_THROWS_AS((void)train_patchnet(net, bad, val, cfg), ValidationError);
}

}  // TEST_SUITE
