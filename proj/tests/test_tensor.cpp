#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "etd/domain.hpp"
#include "etd/grad_check.hpp"
#include "etd/layers.hpp"

using namespace etd;
using namespace etd::tensor;

namespace {

Array randn(Shape shape, std::uint64_t seed, double sd = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sd);
    Array a(std::move(shape));
    for (double& v : a.values()) v = n(rng);
    return a;
}

// f = sum(out * R) with R fixed by the seed.
Var project(Tape& t, Var out, std::uint64_t seed) {
    return sum(t, mul(t, out, t.constant(randn(t.value(out).shape(), seed))));
}

Array eval1(const std::function<Var(Tape&)>& f) {
    Tape t;
    return t.value(f(t));
}

}  // namespace

TEST(Linear, Examples) {
    const Array x({1, 2}, {1, 0});
    const Array eye({2, 2}, {1, 0, 0, 1});
    const Array out = eval1([&](Tape& t) { return linear(t, t.constant(x), t.constant(eye), t.constant(Array({2}))); });
    EXPECT_EQ(out, Array({1, 2}, {1, 0}));

    const Array y = eval1([](Tape& t) {
        return linear(t, t.constant(Array({1, 2}, {1, 2})), t.constant(Array({2, 1}, {1, 1})),
                      t.constant(Array({1}, {0.5})));
    });
    EXPECT_EQ(y[0], 3.5);
}

TEST(Linear, ShapeMismatchNamesBothShapes) {
    Tape t;
    try {
        linear(t, t.constant(Array({2, 3})), t.constant(Array({4, 2})), t.constant(Array({2})));
        FAIL();
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("(2,3)"), std::string::npos) << msg;
        EXPECT_NE(msg.find("(4,2)"), std::string::npos) << msg;
    }
}

TEST(Linear, GradientMatchesFiniteDifferences) {
    const auto r = grad_check(
        [](Tape& t, const std::vector<Var>& v) { return project(t, linear(t, v[0], v[1], v[2]), 99); },
        {randn({3, 5}, 1), randn({5, 2}, 2), randn({2}, 3)});
    EXPECT_EQ(r.coords_checked, 27u);
    EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Conv2d, ZeroInputGivesBias) {
    const Array out = eval1([](Tape& t) {
        return conv2d_valid(t, t.constant(Array({1, 4, 24})), t.constant(randn({3, 1, 2, 4}, 4)),
                            t.constant(Array({3}, {0.5, -1.0, 2.0})));
    });
    ASSERT_EQ(out.shape(), (Shape{3, 3, 21}));
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], (std::vector<double>{0.5, -1.0, 2.0})[i / 63]);
}

TEST(Conv2d, MovingAverageOfConstant) {
    const Array out = eval1([](Tape& t) {
        return conv2d_valid(t, t.constant(Array({1, 1, 24}, 2.0)), t.constant(Array({1, 1, 1, 4}, 0.25)),
                            t.constant(Array({1})));
    });
    ASSERT_EQ(out.shape(), (Shape{1, 1, 21}));
    for (double v : out.values()) EXPECT_EQ(v, 2.0);
}

TEST(Conv2d, DetectorBranchShapesAndGradients) {
    for (std::size_t kh : {1u, 2u}) {
        const Array x = randn({1, 4, 24}, 5), k = randn({8, 1, kh, 4}, 6 + kh), b = randn({8}, 8);
        const Array out = eval1([&](Tape& t) { return conv2d_valid(t, t.constant(x), t.constant(k), t.constant(b)); });
        EXPECT_EQ(out.shape(), (Shape{8, 5 - kh, 21}));
        const auto r = grad_check(
            [](Tape& t, const std::vector<Var>& v) { return project(t, conv2d_valid(t, v[0], v[1], v[2]), 10); },
            {x, k, b});
        EXPECT_LT(r.max_rel_error, 1e-6);
    }
}

TEST(Conv2d, OutputShapeArithmetic) {
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<std::size_t> d(1, 6);
    for (int i = 0; i < 50; ++i) {
        const std::size_t cin = d(rng), cout = d(rng), H = d(rng), W = d(rng) + 3;
        const std::size_t kh = std::uniform_int_distribution<std::size_t>(1, H)(rng);
        const std::size_t kw = std::uniform_int_distribution<std::size_t>(1, W)(rng);
        const Array out = eval1([&](Tape& t) {
            return conv2d_valid(t, t.constant(Array({cin, H, W})), t.constant(Array({cout, cin, kh, kw})),
                                t.constant(Array({cout})));
        });
        EXPECT_EQ(out.shape(), (Shape{cout, H - kh + 1, W - kw + 1}));
    }
}

TEST(Conv2d, KernelLargerThanInputIsRejected) {
    Tape t;
    EXPECT_THROW(conv2d_valid(t, t.constant(Array({1, 1, 24})), t.constant(Array({1, 1, 2, 4})), t.constant(Array({1}))),
                 ShapeError);
}

TEST(MaxPool, HandExample) {
    Tape t;
    const Pooled p = maxpool_time(t, t.constant(Array({1, 1, 4}, {1, 3, 2, 5})), 2, 2);
    EXPECT_EQ(t.value(p.out), Array({1, 1, 2}, {3, 5}));
    EXPECT_EQ(p.argmax, (std::vector<std::size_t>{1, 3}));
}

TEST(MaxPool, TiesRouteGradientToFirstIndex) {
    Tape t;
    const Var x = t.input(Array({1, 1, 6}, 1.0));
    const Pooled p = maxpool_time(t, x, 3, 3);
    t.backward(sum(t, p.out));
    EXPECT_EQ(t.grad(x), Array({1, 1, 6}, {1, 0, 0, 1, 0, 0}));
}

TEST(MaxPool, DetectorShapeAndGradient) {
    // Shuffled distinct values keep every window free of ties.
    Array x({8, 4, 21});
    std::vector<double> vals(x.size());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.01 * static_cast<double>(i);
    std::shuffle(vals.begin(), vals.end(), std::mt19937_64(13));
    std::copy(vals.begin(), vals.end(), x.values().begin());

    const Array out = eval1([&](Tape& t) { return maxpool_time(t, t.constant(x), 3, 3).out; });
    EXPECT_EQ(out.shape(), (Shape{8, 4, 7}));
    const auto r = grad_check(
        [](Tape& t, const std::vector<Var>& v) { return project(t, maxpool_time(t, v[0], 3, 3).out, 14); }, {x});
    EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(MaxPool, EmptyOutputIsRejected) {
    Tape t;
    EXPECT_THROW(maxpool_time(t, t.constant(Array({1, 1, 2})), 3, 3), ShapeError);
}

TEST(Lstm, ZeroWeightsGiveZeroStates) {
    const Array h = eval1([](Tape& t) {
        return lstm_forward(t, t.constant(Array({7, 3})),
                            {t.constant(Array({3, 16})), t.constant(Array({4, 16})), t.constant(Array({16}))});
    });
    EXPECT_EQ(h, Array({7, 4}));
}

TEST(Lstm, SingleScalarCellByHand) {
    // x = 0.5, w_ih = [0.1, 0.2, 0.3, 0.4], biases 0.
    const Array h = eval1([](Tape& t) {
        return lstm_forward(t, t.constant(Array({1, 1}, 0.5)),
                            {t.constant(Array({1, 4}, {0.1, 0.2, 0.3, 0.4})), t.constant(Array({1, 4})),
                             t.constant(Array({4}))});
    });
    auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    const double c = sig(0.05) * std::tanh(0.15);
    EXPECT_NEAR(h[0], sig(0.2) * std::tanh(c), 1e-15);

    const Array zero = eval1([](Tape& t) {
        return lstm_forward(t, t.constant(Array({1, 1})),
                            {t.constant(Array({1, 4})), t.constant(Array({1, 4})), t.constant(Array({4}))});
    });
    EXPECT_EQ(zero[0], 0.0);
}

TEST(Lstm, DetectorShapeAndGradient) {
    const std::vector<Array> in{randn({7, 56}, 15), randn({56, 256}, 16, 0.1), randn({64, 256}, 17, 0.1),
                                randn({256}, 18, 0.1)};
    const Array h = eval1([&](Tape& t) {
        return lstm_forward(t, t.constant(in[0]), {t.constant(in[1]), t.constant(in[2]), t.constant(in[3])});
    });
    EXPECT_EQ(h.shape(), (Shape{7, 64}));
    GradCheckOptions opts;
    opts.max_coords_per_input = 200;
    opts.seed = 19;
    const auto r = grad_check(
        [](Tape& t, const std::vector<Var>& v) { return project(t, lstm_forward(t, v[0], {v[1], v[2], v[3]}), 20); },
        in, opts);
    EXPECT_GE(r.coords_checked, 600u);
    EXPECT_LT(r.max_rel_error, 1e-5);
}

TEST(Lstm, MismatchedWeightsAreRejected) {
    Tape t;
    EXPECT_THROW(lstm_forward(t, t.constant(Array({2, 3})),
                              {t.constant(Array({4, 8})), t.constant(Array({2, 8})), t.constant(Array({8}))}),
                 ShapeError);
}

namespace {

struct AttentionFixture {
    std::vector<Array> p;  // wq bq wk bk wv bv wo bo
    explicit AttentionFixture(std::size_t d, std::uint64_t seed) {
        for (int k = 0; k < 4; ++k) {
            p.push_back(randn({d, d}, seed + 2 * k, 0.3));
            p.push_back(randn({d}, seed + 2 * k + 1, 0.3));
        }
    }
    AttentionVars bind(Tape& t) const {
        return {t.constant(p[0]), t.constant(p[1]), t.constant(p[2]), t.constant(p[3]),
                t.constant(p[4]), t.constant(p[5]), t.constant(p[6]), t.constant(p[7])};
    }
};

}  // namespace

TEST(Attention, SingleStepIsOutputProjectionOfValue) {
    const AttentionFixture f(4, 21);
    const Array h = randn({1, 4}, 22);
    std::vector<Array> w;
    const Array out = eval1([&](Tape& t) { return multihead_self_attention(t, t.constant(h), 2, f.bind(t), &w); });
    const Array expect = eval1([&](Tape& t) {
        const Var v = linear(t, t.constant(h), t.constant(f.p[4]), t.constant(f.p[5]));
        return linear(t, v, t.constant(f.p[6]), t.constant(f.p[7]));
    });
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out[i], expect[i], 1e-14);
    ASSERT_EQ(w.size(), 2u);
    EXPECT_EQ(w[0][0], 1.0);
}

TEST(Attention, IdenticalRowsGiveIdenticalWeights) {
    const AttentionFixture f(6, 23);
    Array h({5, 6});
    const Array row = randn({6}, 24);
    for (std::size_t i = 0; i < 5; ++i) std::copy(row.values().begin(), row.values().end(), h.values().begin() + 6 * i);
    std::vector<Array> w;
    eval1([&](Tape& t) { return multihead_self_attention(t, t.constant(h), 3, f.bind(t), &w); });
    for (const Array& a : w) {
        for (std::size_t i = 1; i < 5; ++i) {
            for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(a.at(i, j), a.at(0, j));
        }
    }
}

TEST(Attention, DetectorWeightsAreDistributions) {
    const AttentionFixture f(64, 25);
    std::vector<Array> w;
    const Array out =
        eval1([&](Tape& t) { return multihead_self_attention(t, t.constant(randn({7, 64}, 26)), 4, f.bind(t), &w); });
    EXPECT_EQ(out.shape(), (Shape{7, 64}));
    ASSERT_EQ(w.size(), 4u);
    for (const Array& a : w) {
        for (std::size_t i = 0; i < 7; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < 7; ++j) s += a.at(i, j);
            EXPECT_NEAR(s, 1.0, 1e-9);
        }
    }
}

TEST(Attention, DetectorGradient) {
    const AttentionFixture f(64, 27);
    std::vector<Array> in{randn({7, 64}, 28)};
    for (std::size_t k = 0; k < 8; ++k) {
        if (k != 3) in.push_back(f.p[k]);
    }
    const Array bk = f.p[3];
    GradCheckOptions opts;
    opts.max_coords_per_input = 40;
    opts.seed = 29;
    const auto r = grad_check(
        [&bk](Tape& t, const std::vector<Var>& v) {
            const AttentionVars p{v[1], v[2], v[3], t.borrow(bk, false), v[4], v[5], v[6], v[7]};
            return project(t, multihead_self_attention(t, v[0], 4, p), 30);
        },
        in, opts);
    EXPECT_LT(r.max_rel_error, 1e-5);
}

TEST(Attention, KeyBiasGradientIsZero) {
    // Softmax is shift invariant per row, and the key bias shifts a whole row.
    const AttentionFixture f(8, 31);
    Tape t;
    AttentionVars p = f.bind(t);
    p.bk = t.input(f.p[3]);
    t.backward(project(t, multihead_self_attention(t, t.constant(randn({5, 8}, 32)), 2, p), 33));
    for (double g : t.grad(p.bk).values()) EXPECT_LT(std::abs(g), 1e-12);
}

TEST(Attention, HeadsMustDivideWidth) {
    const AttentionFixture f(6, 34);
    Tape t;
    EXPECT_THROW(multihead_self_attention(t, t.constant(Array({2, 6})), 4, f.bind(t)), ShapeError);
}

TEST(Softmax, Examples) {
    const Array half = eval1([](Tape& t) { return softmax(t, t.constant(Array({2}, {0, 0}))); });
    EXPECT_EQ(half, Array({2}, {0.5, 0.5}));
    const Array big = eval1([](Tape& t) { return softmax(t, t.constant(Array({2}, {1000, 0}))); });
    EXPECT_TRUE(big.all_finite());
    EXPECT_NEAR(big[0], 1.0, 1e-15);
    EXPECT_NEAR(big[1], 0.0, 1e-15);
}

TEST(Softmax, ShiftInvariantAndNormalized) {
    std::mt19937_64 rng(35);
    std::uniform_real_distribution<double> u(-5, 5);
    for (int i = 0; i < 50; ++i) {
        std::vector<double> z(5);
        for (double& v : z) v = u(rng);
        std::vector<double> shifted = z;
        const double c = u(rng);
        for (double& v : shifted) v += c;
        const auto a = softmax_values(z), b = softmax_values(shifted);
        double s = 0.0;
        for (std::size_t j = 0; j < 5; ++j) {
            EXPECT_NEAR(a[j], b[j], 1e-12);
            s += a[j];
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
}

TEST(Softmax, Gradient) {
    const auto r =
        grad_check([](Tape& t, const std::vector<Var>& v) { return project(t, softmax(t, v[0]), 36); }, {randn({3, 5}, 37)});
    EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(CrossEntropy, Examples) {
    const int one[1] = {1};
    const Array perfect = eval1([&](Tape& t) { return cross_entropy(t, t.constant(Array({1, 2}, {0, 1})), one); });
    EXPECT_LT(perfect[0], 1e-11);
    const int labels[4] = {0, 1, 1, 0};
    const Array half = eval1([&](Tape& t) { return cross_entropy(t, t.constant(Array({4, 2}, 0.5)), labels); });
    EXPECT_NEAR(half[0], std::log(2.0), 1e-15);
}

TEST(CrossEntropy, GradientThroughSoftmax) {
    std::vector<int> labels(16);
    for (std::size_t i = 0; i < 16; ++i) labels[i] = static_cast<int>(i % 3 == 0);
    const auto r = grad_check(
        [&labels](Tape& t, const std::vector<Var>& v) { return cross_entropy(t, softmax(t, v[0]), labels); },
        {randn({16, 2}, 38, 2.0)});
    EXPECT_EQ(r.coords_checked, 32u);
    EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(CrossEntropy, ClampedProbabilitiesHaveNoGradient) {
    Tape t;
    const Var p = t.input(Array({1, 2}, {0.0, 1.0}));
    const int one[1] = {1};
    t.backward(cross_entropy(t, p, one));
    EXPECT_EQ(t.grad(p), Array({1, 2}));
}

TEST(LayerNorm, RowsAreStandardized) {
    const Array out = eval1([](Tape& t) {
        return layer_norm(t, t.constant(randn({3, 8}, 39, 4.0)), t.constant(Array({8}, 1.0)), t.constant(Array({8})));
    });
    for (std::size_t i = 0; i < 3; ++i) {
        double m = 0, v = 0;
        for (std::size_t j = 0; j < 8; ++j) m += out.at(i, j) / 8;
        for (std::size_t j = 0; j < 8; ++j) v += (out.at(i, j) - m) * (out.at(i, j) - m) / 8;
        EXPECT_NEAR(m, 0.0, 1e-12);
        EXPECT_NEAR(v, 1.0, 1e-5);
    }
}

TEST(LayerNorm, Gradient) {
    const auto r = grad_check(
        [](Tape& t, const std::vector<Var>& v) { return project(t, layer_norm(t, v[0], v[1], v[2]), 40); },
        {randn({4, 6}, 41), randn({6}, 42), randn({6}, 43)});
    EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(EncoderLayer, Gradient) {
    const std::size_t d = 8, ffn = 12;
    std::vector<Array> in{randn({5, d}, 44)};
    for (int k = 0; k < 4; ++k) {
        in.push_back(randn({d, d}, 45 + k, 0.3));
        if (k != 1) in.push_back(randn({d}, 55 + k, 0.3));
    }
    const Array bk = randn({d}, 60, 0.3);
    in.push_back(Array({d}, 1.0));
    in.push_back(Array({d}));
    in.push_back(randn({d, ffn}, 61, 0.3));
    in.push_back(randn({ffn}, 62, 0.3));
    in.push_back(randn({ffn, d}, 63, 0.3));
    in.push_back(randn({d}, 64, 0.3));
    in.push_back(Array({d}, 1.0));
    in.push_back(Array({d}));
    const auto r = grad_check(
        [&bk](Tape& t, const std::vector<Var>& v) {
            const EncoderVars p{{v[1], v[2], v[3], t.borrow(bk, false), v[4], v[5], v[6], v[7]},
                                v[8],
                                v[9],
                                v[10],
                                v[11],
                                v[12],
                                v[13],
                                v[14],
                                v[15]};
            return project(t, encoder_layer(t, v[0], 2, p), 65);
        },
        in);
    EXPECT_LT(r.max_rel_error, 1e-5);
}

TEST(GradCheck, SumOfSquaresIsExact) {
    const auto r = grad_check([](Tape& t, const std::vector<Var>& v) { return sum(t, mul(t, v[0], v[0])); },
                              {randn({4, 3}, 66)});
    EXPECT_LT(r.max_rel_error, 1e-9);
}

TEST(GradCheck, FivePointStencilOnQuartic) {
    // x^4: central differences carry h^2 * 4x error, the five-point stencil none.
    const ScalarFn quartic = [](Tape& t, const std::vector<Var>& v) {
        const Var sq = mul(t, v[0], v[0]);
        return sum(t, mul(t, sq, sq));
    };
    const std::vector<Array> x{Array({3}, {0.7, -1.3, 2.1})};
    GradCheckOptions opts;
    opts.step = 1e-3;
    const double central = grad_check(quartic, x, opts).max_rel_error;
    opts.five_point = true;
    const double five = grad_check(quartic, x, opts).max_rel_error;
    EXPECT_GT(central, 1e-7);
    EXPECT_LT(five, 1e-9);
}

TEST(GradCheck, CatchesBrokenBackward) {
    // Doubling: backward deliberately returns the gradient of tripling.
    const auto broken = [](Tape& t, const std::vector<Var>& v) {
        Array out = t.value(v[0]);
        for (double& x : out.values()) x *= 2.0;
        const Var x = v[0];
        const Var y = t.record("broken_double", {x}, std::move(out), [x](Tape& tp, const Array& g) {
            if (Array* gx = tp.grad_target(x)) {
                for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += 3.0 * g[i];
            }
        });
        return sum(t, y);
    };
    EXPECT_GT(grad_check(broken, {randn({5}, 67)}).max_rel_error, 1e-2);
}

TEST(GradCheck, RejectsNonFiniteInput) {
    Array a({2}, {1.0, std::nan("")});
    EXPECT_THROW(grad_check([](Tape& t, const std::vector<Var>& v) { return sum(t, v[0]); }, {a}), NumericError);
}

TEST(Tape, NonFiniteValueNamesOpAndStage) {
    Tape t;
    t.set_stage("lstm");
    const Var big = t.constant(Array({1}, 1e308));
    try {
        scale(t, big, 10.0);
        FAIL();
    } catch (const NumericError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("scale"), std::string::npos) << msg;
        EXPECT_NE(msg.find("lstm"), std::string::npos) << msg;
    }
}

TEST(Tape, ForwardIsBitwiseDeterministic) {
    const AttentionFixture f(16, 68);
    const Array h = randn({7, 16}, 69);
    const Array a = eval1([&](Tape& t) { return multihead_self_attention(t, t.constant(h), 4, f.bind(t)); });
    const Array b = eval1([&](Tape& t) { return multihead_self_attention(t, t.constant(h), 4, f.bind(t)); });
    EXPECT_EQ(a, b);
}

TEST(Tape, GradientsAccumulateOverReuse) {
    Tape t;
    const Var x = t.input(Array({3}, {1, 2, 3}));
    t.backward(sum(t, add(t, x, mul(t, x, x))));
    EXPECT_EQ(t.grad(x), Array({3}, {3, 5, 7}));
}

TEST(Positions, SinusoidalTable) {
    const Array p = sinusoidal_positions(7, 64);
    EXPECT_EQ(p.shape(), (Shape{7, 64}));
    EXPECT_EQ(p.at(0, 0), 0.0);
    EXPECT_EQ(p.at(0, 1), 1.0);
    EXPECT_NEAR(p.at(3, 0), std::sin(3.0), 1e-15);
    EXPECT_NEAR(p.at(3, 1), std::cos(3.0), 1e-15);
}
