#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "cgf/error.hpp"
#include "cgf/model.hpp"
#include "cgf/random.hpp"
#include "gradcheck.hpp"

using namespace cgf;
using namespace cgf::model;
using nn::Tape;
using nn::Tensor;
using nn::Var;
using cgf::testing::check_gradients;
using cgf::testing::random_tensor;

namespace {

ModelConfig tiny_config(std::uint64_t seed = 7) {
    ModelConfig c;
    c.d_model = 8;
    c.n_heads = 2;
    c.n_layers = 3;
    c.ffn_hidden = 16;
    c.seed = seed;
    return c;
}

std::vector<double> random_windows(const ModelConfig& c, std::size_t n, std::uint64_t seed) {
    const auto t = random_tensor({n * c.seq_len, c.in_features}, seed, -1.0, 1.0);
    return {t.values().begin(), t.values().end()};
}

double batch_loss(const ModelConfig& c, const ModelParams& p, const std::vector<double>& x,
                  const std::vector<double>& y) {
    Tape t;
    const auto b = bind(t, c, p, false);
    const auto pred = forward_graph(c, b, t.constant(Tensor({y.size() * c.seq_len, c.in_features}, x)));
    return nn::mse_loss(pred, t.constant(Tensor({y.size(), 1}, y))).value()[0];
}

// The hand-built 3x4 single-head instance; expected values from a direct
// numpy evaluation of x + softmax(x Wq (x Wk)^T / 2) x Wv Wo.
struct ToyAttention {
    Tensor x = Tensor::matrix(3, 4, {0.5, -1.0, 0.25, 2.0, 1.5, 0.0, -0.5, -1.0, -0.75, 0.5, 1.0, 0.0});
    Tensor wq = Tensor::matrix(4, 4, {0.1, 0.2, -0.1, 0.0, 0.0, 0.3, 0.1, -0.2, 0.2, -0.1, 0.0, 0.1, -0.3, 0.0, 0.2, 0.1});
    Tensor wk = Tensor::matrix(4, 4, {0.2, 0.0, 0.1, -0.1, 0.1, -0.2, 0.0, 0.3, 0.0, 0.1, 0.2, 0.0, 0.1, 0.1, -0.1, 0.2});
    Tensor wv = Tensor::matrix(4, 4, {0.3, -0.2, 0.0, 0.1, 0.0, 0.1, 0.2, 0.0, -0.1, 0.0, 0.1, 0.2, 0.2, 0.1, 0.0, -0.3});
    Tensor wo = Tensor::matrix(4, 4, {0.5, 0.0, -0.5, 0.1, 0.0, 0.4, 0.1, 0.0, 0.2, 0.0, 0.3, -0.1, 0.0, -0.2, 0.0, 0.6});
    Tensor expected = Tensor::matrix(
        3, 4,
        {0.5687337823070747, -1.0205548985613617, 0.17866312221079617, 2.0139377862795564, 1.5916461693345907,
         -0.02169353681974391, -0.6082094533606999, -0.9973140282183232, -0.6685824568480047, 0.4723985947145641,
         0.9076600326195912, 0.015999760514621937});
    Tensor expected_probs = Tensor::matrix(
        3, 3,
        {0.3107537665896591, 0.31417129143121536, 0.37507494197912544, 0.36660710225367443, 0.3269854611268746,
         0.3064074366194509, 0.3265759633469288, 0.34139411802122005, 0.3320299186318511});

    LayerVars bind(Tape& t) const {
        LayerVars lv;
        lv.wq = t.constant(wq);
        lv.wk = t.constant(wk);
        lv.wv = t.constant(wv);
        lv.wo = t.constant(wo);
        return lv;
    }
};

LayerVars random_layer(Tape& t, std::size_t d, std::size_t hidden, bool norm, std::uint64_t seed, bool grad = false) {
    auto mk = [&](std::vector<std::size_t> shape, double lo, double hi) {
        auto v = random_tensor(std::move(shape), seed++, lo, hi);
        return grad ? t.parameter(v) : t.constant(v);
    };
    LayerVars lv;
    lv.wq = mk({d, d}, -0.5, 0.5);
    lv.wk = mk({d, d}, -0.5, 0.5);
    lv.wv = mk({d, d}, -0.5, 0.5);
    lv.wo = mk({d, d}, -0.5, 0.5);
    lv.ffn_w1 = mk({d, hidden}, -0.5, 0.5);
    lv.ffn_b1 = mk({hidden}, -0.1, 0.1);
    lv.ffn_w2 = mk({hidden, d}, -0.5, 0.5);
    lv.ffn_b2 = mk({d}, -0.1, 0.1);
    if (norm) {
        lv.norm1_gain = mk({d}, 0.8, 1.2);
        lv.norm1_bias = mk({d}, -0.1, 0.1);
        lv.norm2_gain = mk({d}, 0.8, 1.2);
        lv.norm2_bias = mk({d}, -0.1, 0.1);
    }
    return lv;
}

}  // namespace

TEST(ModelConfig, Validation) {
    EXPECT_NO_THROW(ModelConfig{}.validate());
    auto c = ModelConfig{};
    c.n_heads = 5;
    EXPECT_THROW(c.validate(), ConfigError);
    c = ModelConfig{};
    c.n_layers = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_THROW(init_params(c), ConfigError);
}

TEST(ParameterCount, FormulaMatchesTensors) {
    // defaults by hand: 5*32+32 + 3*(4*32*32 + 32*64+64 + 64*32+32 + 4*32) + 32*12+12 + 12+1
    EXPECT_EQ(parameter_count(ModelConfig{}), 25849u);
    for (bool ln : {true, false}) {
        for (std::size_t layers : {1u, 3u}) {
            auto c = tiny_config();
            c.use_layer_norm = ln;
            c.n_layers = layers;
            const auto p = init_params(c);
            std::size_t n = 0;
            for (const auto& e : p.entries) n += e.trainable ? e.value.size() : 0;
            EXPECT_EQ(n, parameter_count(c));
            EXPECT_EQ(p.trainable_count(), parameter_count(c));
        }
    }
}

TEST(InitParams, DeterministicBoundedAndSeeded) {
    const auto c = ModelConfig{};
    const auto a = init_params(c);
    EXPECT_TRUE(a == init_params(c));
    auto other = c;
    other.seed = 8;
    EXPECT_FALSE(a == init_params(other));
    for (const auto& e : a.entries) {
        ASSERT_TRUE(e.value.all_finite());
        if (e.value.rank() == 2 && e.trainable) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(e.value.rows()));
            for (double v : e.value.values()) ASSERT_LE(std::abs(v), bound) << e.name;
        }
        if (e.name.ends_with("bias") || e.name.ends_with(".b1") || e.name.ends_with(".b2")) {
            for (double v : e.value.values()) ASSERT_EQ(v, 0.0) << e.name;
        }
    }
    EXPECT_FALSE(a.entries[2].trainable);
    EXPECT_EQ(a.entries[2].name, "positions");
}

TEST(InitParams, PositionalTableIsSinusoidal) {
    const auto p = init_params(ModelConfig{});
    const auto& pe = p.get("positions");
    ASSERT_EQ(pe.shape(), (std::vector<std::size_t>{12, 32}));
    for (std::size_t pos = 0; pos < 12; ++pos) {
        for (std::size_t i = 0; i < 16; ++i) {
            const double angle = static_cast<double>(pos) / std::pow(10000.0, 2.0 * static_cast<double>(i) / 32.0);
            EXPECT_NEAR(pe.at(pos, 2 * i), std::sin(angle), 1e-12);
            EXPECT_NEAR(pe.at(pos, 2 * i + 1), std::cos(angle), 1e-12);
        }
    }
}

TEST(Attention, ToyInstanceMatchesDenseOracle) {
    const ToyAttention toy;
    for (auto path : {AttentionPath::fused, AttentionPath::reference}) {
        Tape t;
        Tensor probs;
        const auto y = multi_head_attention(t.constant(toy.x), toy.bind(t), 3, 1, path, &probs);
        for (std::size_t i = 0; i < toy.expected.size(); ++i) EXPECT_NEAR(y.value()[i], toy.expected[i], 1e-14);
        for (std::size_t i = 0; i < toy.expected_probs.size(); ++i) {
            EXPECT_NEAR(probs[i], toy.expected_probs[i], 1e-14);
        }
    }
}

TEST(Attention, RowsSumToOne) {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        Tape t;
        Tensor probs;
        const auto lv = random_layer(t, 8, 16, false, 100 + trial);
        multi_head_attention(t.constant(random_tensor({24, 8}, 500 + trial, -3.0, 3.0)), lv, 12, 2,
                             AttentionPath::fused, &probs);
        ASSERT_EQ(probs.size(), 2u * 2u * 12u * 12u);
        for (std::size_t r = 0; r < probs.size() / 12; ++r) {
            double s = 0.0;
            for (std::size_t j = 0; j < 12; ++j) s += probs[r * 12 + j];
            ASSERT_NEAR(s, 1.0, 1e-9);
        }
    }
}

TEST(Attention, ZeroValueProjectionLeavesResidual) {
    Tape t;
    auto lv = random_layer(t, 8, 16, false, 1);
    lv.wv = t.constant(Tensor({8, 8}, 0.0));
    const auto x = random_tensor({12, 8}, 2);
    EXPECT_EQ(multi_head_attention(t.constant(x), lv, 12, 2).value(), x);
    lv = random_layer(t, 8, 16, false, 3);
    lv.wo = t.constant(Tensor({8, 8}, 0.0));
    EXPECT_EQ(multi_head_attention(t.constant(x), lv, 12, 2).value(), x);
}

TEST(Attention, FusedAndReferencePathsAgree) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto x = random_tensor({36, 8}, 40 + seed);
        Tensor out[2];
        std::vector<Tensor> grads[2];
        for (int path = 0; path < 2; ++path) {
            Tape t;
            const auto lv = random_layer(t, 8, 16, false, 10 * seed, true);
            const auto xin = t.parameter(x);
            const auto y = multi_head_attention(xin, lv, 12, 4, path == 0 ? AttentionPath::fused : AttentionPath::reference);
            out[path] = y.value();
            t.backward(nn::mse_loss(y, t.constant(random_tensor({36, 8}, 77))));
            for (Var v : {xin, lv.wq, lv.wk, lv.wv, lv.wo}) grads[path].push_back(t.grad(v));
        }
        for (std::size_t i = 0; i < out[0].size(); ++i) ASSERT_NEAR(out[0][i], out[1][i], 1e-12);
        for (std::size_t g = 0; g < grads[0].size(); ++g) {
            for (std::size_t i = 0; i < grads[0][g].size(); ++i) ASSERT_NEAR(grads[0][g][i], grads[1][g][i], 1e-12);
        }
    }
}

TEST(Attention, GradientMatchesFiniteDifferences) {
    const auto r = check_gradients(
        [](Tape& t, std::span<const Var> v) {
            LayerVars lv;
            lv.wq = v[1];
            lv.wk = v[2];
            lv.wv = v[3];
            lv.wo = v[4];
            const auto y = multi_head_attention(v[0], lv, 6, 2);
            return nn::mse_loss(y, t.constant(random_tensor({12, 4}, 9)));
        },
        {random_tensor({12, 4}, 1), random_tensor({4, 4}, 2, -0.7, 0.7), random_tensor({4, 4}, 3, -0.7, 0.7),
         random_tensor({4, 4}, 4, -0.7, 0.7), random_tensor({4, 4}, 5, -0.7, 0.7)});
    EXPECT_LT(r.max_rel, 1e-4);
}

TEST(EncoderLayer, ShapeAndIdentityWithZeroWeights) {
    auto c = tiny_config();
    c.use_layer_norm = false;
    Tape t;
    LayerVars lv;
    const auto zero = [&](std::vector<std::size_t> s) { return t.constant(Tensor(std::move(s), 0.0)); };
    lv.wq = zero({8, 8});
    lv.wk = zero({8, 8});
    lv.wv = zero({8, 8});
    lv.wo = zero({8, 8});
    lv.ffn_w1 = zero({8, 16});
    lv.ffn_b1 = zero({16});
    lv.ffn_w2 = zero({16, 8});
    lv.ffn_b2 = zero({8});
    const auto x = random_tensor({24, 8}, 8);
    const auto y = encoder_layer(t.constant(x), lv, c);
    EXPECT_EQ(y.value(), x);

    c.use_layer_norm = true;
    const auto full = encoder_layer(t.constant(x), random_layer(t, 8, 16, true, 5), c);
    EXPECT_EQ(full.value().shape(), x.shape());
}

TEST(EncoderLayer, InputGradientMatchesFiniteDifferences) {
    for (bool norm : {false, true}) {
        auto c = tiny_config();
        c.use_layer_norm = norm;
        const auto r = check_gradients(
            [&](Tape& t, std::span<const Var> v) {
                const auto lv = random_layer(t, 8, 16, norm, 31);
                return nn::mse_loss(encoder_layer(v[0], lv, c), t.constant(random_tensor({24, 8}, 32)));
            },
            {random_tensor({24, 8}, 33)});
        EXPECT_LT(r.max_rel, 1e-4) << "norm=" << norm;
    }
}

TEST(Forward, BoundedDeterministicAndBatchConsistent) {
    const Model m(ModelConfig{});
    const auto x = random_windows(m.config(), 10000, 1);
    const auto ys = m.forward_batch(x, 10000);
    ASSERT_EQ(ys.size(), 10000u);
    for (double y : ys) {
        ASSERT_GE(y, -1.0);
        ASSERT_LE(y, 1.0);
    }
    EXPECT_EQ(m.forward_batch(x, 10000), ys);
    const std::size_t per = 60;
    for (std::size_t k : {0u, 1u, 4567u, 9999u}) {
        const std::span<const double> w(x.data() + k * per, per);
        EXPECT_NEAR(m.forward(w), ys[k], 1e-12);
    }
    EXPECT_EQ(m.forward_batch(std::span<const double>(x.data(), per), 1)[0], m.forward(std::span(x.data(), per)));
    EXPECT_TRUE(m.forward_batch({}, 0).empty());
    EXPECT_THROW(m.forward_batch(std::span<const double>(x.data(), 59), 1), ShapeError);
}

TEST(Forward, RowOrderMatters) {
    const Model m(ModelConfig{});
    auto x = random_windows(m.config(), 1, 2);
    const double before = m.forward(x);
    std::vector<double> permuted(x.size());
    for (std::size_t r = 0; r < 12; ++r) {
        std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(((r + 5) % 12) * 5), 5,
                    permuted.begin() + static_cast<std::ptrdiff_t>(r * 5));
    }
    EXPECT_NE(m.forward(permuted), before);
}

TEST(Forward, RejectsNonFiniteInput) {
    const Model m(ModelConfig{});
    auto x = random_windows(m.config(), 1, 3);
    x[7] = std::nan("");
    EXPECT_THROW(m.forward(x), NumericError);
}

TEST(Forward, ReducesToHeadOfPooledEmbeddingWithoutSublayers) {
    auto c = tiny_config();
    c.use_layer_norm = false;
    auto p = init_params(c);
    for (auto& e : p.entries) {
        if (e.name.starts_with("layers.")) e.value = Tensor(e.value.shape(), 0.0);
    }
    p.get("embed.bias") = random_tensor({8}, 4);
    p.get("head.b1") = random_tensor({12}, 5);
    const Model m(c, p);
    const auto x = random_windows(c, 3, 6);

    Tape t;
    auto h = nn::add_bias(nn::matmul(t.constant(Tensor({36, 5}, x)), t.constant(p.get("embed.weight"))),
                          t.constant(p.get("embed.bias")));
    h = nn::add_tiled(h, t.constant(p.get("positions")));
    const auto pooled = nn::mean_pool(h, 12);
    const auto hidden =
        nn::relu(nn::add_bias(nn::matmul(pooled, t.constant(p.get("head.w1"))), t.constant(p.get("head.b1"))));
    const auto out =
        nn::tanh(nn::add_bias(nn::matmul(hidden, t.constant(p.get("head.w2"))), t.constant(p.get("head.b2"))));
    const auto got = m.forward_batch(x, 3);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(got[i], out.value()[i], 1e-14);
}

TEST(EndToEnd, LossGradientMatchesFiniteDifferencesOverSeeds) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto c = tiny_config(seed);
        const auto p = init_params(c);
        const auto x = random_windows(c, 3, 100 + seed);
        const auto yt = random_tensor({3}, 200 + seed, -0.8, 0.8);
        const std::vector<double> y(yt.values().begin(), yt.values().end());

        Tape t;
        const auto b = bind(t, c, p, true);
        const auto pred = forward_graph(c, b, t.constant(Tensor({36, 5}, x)));
        t.backward(nn::mse_loss(pred, t.constant(Tensor({3, 1}, y))));

        double max_rel = 0.0;
        auto work = p;
        for (std::size_t e = 0; e < p.entries.size(); ++e) {
            if (!p.entries[e].trainable) continue;
            const auto analytic = t.grad(b.vars[e]);
            for (std::size_t j = 0; j < p.entries[e].value.size(); ++j) {
                const double keep = work.entries[e].value[j];
                work.entries[e].value[j] = keep + 1e-5;
                const double up = batch_loss(c, work, x, y);
                work.entries[e].value[j] = keep - 1e-5;
                const double down = batch_loss(c, work, x, y);
                work.entries[e].value[j] = keep;
                const double numeric = (up - down) / 2e-5;
                const double a = analytic[j];
                max_rel = std::max(max_rel, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-4}));
            }
        }
        EXPECT_LT(max_rel, 1e-4) << "seed " << seed;
    }
}

TEST(Model, RejectsMismatchedParameters) {
    const auto c = tiny_config();
    auto p = init_params(c);
    p.get("head.w1") = Tensor({8, 11});
    EXPECT_THROW(Model(c, p), ConfigError);
    auto q = init_params(c);
    q.entries.pop_back();
    EXPECT_THROW(Model(c, q), ConfigError);
}
