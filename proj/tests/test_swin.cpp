#include <set>

#include "doctest.h"
#include "sarc/rng.hpp"
#include "sarc/swin.hpp"

using namespace sarc;
using nn::SwinSpec;
using nn::SwinStream;

namespace {

SwinSpec tiny_spec() {
    SwinSpec s;
    s.channels = {4, 8, 16, 32};
    s.depths = {1, 1, 1, 1};
    s.heads = {1, 1, 2, 2};
    return s;
}

Tensor<float> random_input(int n, int c, int hw, uint64_t seed) {
    Rng rng(seed);
    Tensor<float> t({n, c, hw, hw});
    for (auto& v : t.v) v = (float)rng.uniform();
    return t;
}

}  // namespace

TEST_SUITE("swin") {

TEST_CASE("spec validation enforces the merge geometry") {
    SwinSpec s = tiny_spec();
    CHECK_NOTHROW(nn::validate_swin_spec(s));
    s.channels = {4, 8, 15, 30};  // not doubling
    CHECK_THROWS_AS(nn::validate_swin_spec(s), ConfigError);
    s = tiny_spec();
    s.heads = {3, 1, 1, 1};  // 4 % 3 != 0
    CHECK_THROWS_AS(nn::validate_swin_spec(s), ConfigError);
    s = tiny_spec();
    s.window = 5;  // 56 % 5 != 0
    CHECK_THROWS_AS(nn::validate_swin_spec(s), ConfigError);
}

TEST_CASE("relative position index ranges over the (2w-1)^2 table") {
    const int win = 3;
    auto idx = nn::relative_position_index(win);
    const int L = win * win;
    REQUIRE((int)idx->size() == L * L);
    const int table = (2 * win - 1) * (2 * win - 1);
    for (int v : *idx) {
        CHECK(v >= 0);
        CHECK(v < table);
    }
    // Self-offsets all map to the central entry; equal offsets share an index.
    const int center = (*idx)[0];
    for (int t = 0; t < L; ++t) CHECK((*idx)[(size_t)t * L + t] == center);
    // Token (0,0) vs (0,1) and token (1,0) vs (1,1) have the same offset.
    CHECK((*idx)[0 * L + 1] == (*idx)[3 * L + 4]);
}

TEST_CASE("shift mask separates wrapped regions within a window") {
    auto mask = nn::make_shift_mask<float>(4, 4, 2, 1);
    REQUIRE(mask->dim(0) == 4);  // 2x2 windows
    REQUIRE(mask->dim(1) == 4);
    REQUIRE(mask->dim(2) == 4);
    for (float v : mask->v) CHECK((v == 0.0f || v == -100.0f));
    // The top-left window holds tokens from one region only: all zeros.
    for (int i = 0; i < 16; ++i) CHECK(mask->v[i] == 0.0f);
    // The bottom-right window mixes four wrapped regions; its diagonal stays
    // zero and it must contain blocked pairs.
    const float* br = mask->data() + 3 * 16;
    int blocked = 0;
    for (int i = 0; i < 4; ++i) {
        CHECK(br[i * 4 + i] == 0.0f);
        for (int j = 0; j < 4; ++j) blocked += br[i * 4 + j] == -100.0f;
    }
    CHECK(blocked == 12);  // 4 singleton regions: everything off-diagonal
}

TEST_CASE("stages emit the 56/28/14/7 pyramid on a 224 input") {
    Rng rng(1);
    SwinStream<float> stream(tiny_spec(), rng);
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

TEST_CASE("one backward pass reaches every parameter") {
    Rng rng(3);
    SwinStream<float> stream(tiny_spec(), rng);
    auto x = ad::Var<float>::leaf(random_input(1, 3, 224, 4));
    auto stages = stream.forward(x);
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

TEST_CASE("attention output is permutation-consistent across windows") {
    // Two identical windows of tokens must produce identical outputs: the
    // attention is windowed, so there is no cross-window leakage.
    Rng rng(5);
    nn::WindowAttention<float> attn(8, 2, 2, rng);
    const int L = 4;
    Tensor<float> rows({2 * L, 8});
    Rng rr(6);
    for (int i = 0; i < L; ++i) {
        for (int c = 0; c < 8; ++c) {
            const float v = (float)rr.normal();
            rows.v[(size_t)i * 8 + c] = v;
            rows.v[(size_t)(L + i) * 8 + c] = v;  // window 2 copies window 1
        }
    }
    auto y = attn.forward(ad::Var<float>::leaf(rows), 2, nullptr);
    for (int i = 0; i < L; ++i) {
        for (int c = 0; c < 8; ++c) {
            CHECK(y.val().v[(size_t)i * 8 + c] == y.val().v[(size_t)(L + i) * 8 + c]);
        }
    }
}

TEST_CASE("same seed builds identical streams") {
    Rng r1(9), r2(9);
    SwinStream<float> a(tiny_spec(), r1), b(tiny_spec(), r2);
    nn::ParamMap<float> pa, pb;
    a.collect("s", pa);
    b.collect("s", pb);
    REQUIRE(pa.params.size() == pb.params.size());
    for (size_t i = 0; i < pa.params.size(); ++i) {
        CHECK(pa.params[i].first == pb.params[i].first);
        CHECK(pa.params[i].second.val().v == pb.params[i].second.val().v);
    }
    std::set<std::string> names;
    for (auto& [name, p] : pa.params) CHECK(names.insert(name).second);
}

}  // TEST_SUITE
