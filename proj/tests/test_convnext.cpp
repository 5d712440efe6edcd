#include <set>

#include "doctest.h"
#include "sarc/convnext.hpp"
#include "sarc/rng.hpp"

using namespace sarc;
using nn::ConvNeXtSpec;
using nn::ConvNeXtStream;

namespace {

// Small spec so shape/grad tests stay cheap; geometry identical to the
// default, only thinner.
ConvNeXtSpec tiny_spec() {
    ConvNeXtSpec s;
    s.channels = {4, 8, 16, 32};
    s.depths = {1, 1, 1, 1};
    return s;
}

Tensor<float> random_input(int n, int c, int hw, uint64_t seed) {
    Rng rng(seed);
    Tensor<float> t({n, c, hw, hw});
    for (auto& v : t.v) v = (float)rng.uniform();
    return t;
}

}  // namespace

TEST_SUITE("convnext") {

TEST_CASE("spec validation rejects non-doubling channels and bad depths") {
    ConvNeXtSpec s = tiny_spec();
    CHECK_NOTHROW(nn::validate_convnext_spec(s));
    s.channels = {8, 4, 16, 32};
    CHECK_THROWS_AS(nn::validate_convnext_spec(s), ConfigError);
    s = tiny_spec();
    s.depths = {0, 1, 1, 1};
    CHECK_THROWS_AS(nn::validate_convnext_spec(s), ConfigError);
    s = tiny_spec();
    s.in_channels = 0;
    CHECK_THROWS_AS(nn::validate_convnext_spec(s), ConfigError);
}

TEST_CASE("stages emit the 56/28/14/7 pyramid on a 224 input") {
    Rng rng(1);
    ConvNeXtStream<float> stream(tiny_spec(), rng);
    auto x = ad::Var<float>::leaf(random_input(1, 3, 224, 2));
    auto stages = stream.forward(x);
    const int sizes[4] = {56, 28, 14, 7};
    for (int i = 0; i < 4; ++i) {
        REQUIRE(stages[i].val().ndim() == 4);
        CHECK(stages[i].val().dim(0) == 1);
        CHECK(stages[i].val().dim(1) == tiny_spec().channels[i]);
        CHECK(stages[i].val().dim(2) == sizes[i]);
        CHECK(stages[i].val().dim(3) == sizes[i]);
        for (float v : stages[i].val().v) CHECK(std::isfinite(v));
    }
}

TEST_CASE("blocks preserve shape and the residual path") {
    Rng rng(2);
    nn::ConvNeXtBlock<float> blk(6, 1e-6f, rng);
    auto x = ad::Var<float>::leaf(random_input(2, 6, 8, 3));
    auto y = blk.forward(x);
    CHECK(y.val().same_shape(x.val()));

    // layerscale starts near zero, so a fresh block is close to the identity.
    double diff = 0, mag = 0;
    for (size_t i = 0; i < y.val().v.size(); ++i) {
        diff += std::abs((double)y.val().v[i] - x.val().v[i]);
        mag += std::abs((double)x.val().v[i]);
    }
    CHECK(diff / mag < 1e-3);
}

TEST_CASE("one backward pass reaches every parameter") {
    Rng rng(4);
    ConvNeXtStream<float> stream(tiny_spec(), rng);
    auto x = ad::Var<float>::leaf(random_input(1, 3, 224, 5));
    auto stages = stream.forward(x);

    // Scalar from the last stage only: every stage feeds it.
    Tensor<float> target({1, 32});
    ad::backward(ad::mse_loss(ad::global_avg_pool(stages[3]), target));

    nn::ParamMap<float> pm;
    stream.collect("s", pm);
    CHECK(pm.params.size() > 0);
    for (auto& [name, p] : pm.params) {
        INFO("param ", name);
        CHECK(p.has_grad());
    }
}

TEST_CASE("parameter names are unique and dotted") {
    Rng rng(5);
    ConvNeXtStream<float> stream(tiny_spec(), rng);
    nn::ParamMap<float> pm;
    stream.collect("stream_a", pm);
    std::set<std::string> names;
    for (auto& [name, p] : pm.params) {
        CHECK(names.insert(name).second);
        CHECK(name.rfind("stream_a.", 0) == 0);
    }
    CHECK(names.count("stream_a.stem.weight") == 1);
    CHECK(names.count("stream_a.stage1.block0.dw.weight") == 1);
}

TEST_CASE("same seed builds identical streams") {
    Rng r1(7), r2(7);
    ConvNeXtStream<float> a(tiny_spec(), r1), b(tiny_spec(), r2);
    nn::ParamMap<float> pa, pb;
    a.collect("s", pa);
    b.collect("s", pb);
    REQUIRE(pa.params.size() == pb.params.size());
    for (size_t i = 0; i < pa.params.size(); ++i) {
        CHECK(pa.params[i].first == pb.params[i].first);
        CHECK(pa.params[i].second.val().v == pb.params[i].second.val().v);
    }
}

}  // TEST_SUITE
