#include "etd/verify.hpp"

#include <algorithm>
#include <functional>
#include <memory>
#include <numeric>
#include <random>

#include "etd/grad_check.hpp"
#include "etd/layers.hpp"
#include "etd/model.hpp"

namespace etd::verify {

using namespace etd::tensor;

namespace {

using Rng = std::mt19937_64;

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Array normal(Rng& rng, Shape shape, double sd = 1.0) {
    Array a(std::move(shape));
    std::normal_distribution<double> n(0.0, sd);
    for (double& v : a.values()) v = n(rng);
    return a;
}

// sum(out * R) for a fixed pseudo-random R, so every output coordinate matters.
Var weighted_sum(Tape& t, Var out, std::uint64_t seed) {
    Rng rng(seed);
    Array r(t.value(out).shape());
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& v : r.values()) v = u(rng);
    return sum(t, mul(t, out, t.constant(std::move(r))));
}

struct Case {
    ScalarFn f;
    std::vector<Array> inputs;
    std::size_t max_coords = 0;
    double step = 1e-5;
    bool five_point = false;
};

using CaseFactory = std::function<Case(Rng&, std::uint64_t)>;

Case linear_case(Rng& rng, std::uint64_t seed) {
    const std::size_t n = pick(rng, 1, 4), din = pick(rng, 1, 6), dout = pick(rng, 1, 5);
    return {[seed](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, linear(t, v[0], v[1], v[2]), seed); },
            {normal(rng, {n, din}), normal(rng, {din, dout}), normal(rng, {dout})}};
}

Case conv_case(Rng& rng, std::uint64_t seed) {
    const std::size_t cin = pick(rng, 1, 2), H = pick(rng, 2, 4), W = pick(rng, 4, 10);
    const std::size_t cout = pick(rng, 1, 3), kh = pick(rng, 1, std::min<std::size_t>(2, H)), kw = pick(rng, 1, 4);
    return {[seed](Tape& t, const std::vector<Var>& v) {
                return weighted_sum(t, conv2d_valid(t, v[0], v[1], v[2]), seed);
            },
            {normal(rng, {cin, H, W}), normal(rng, {cout, cin, kh, kw}), normal(rng, {cout})}};
}

Case maxpool_case(Rng& rng, std::uint64_t seed) {
    const std::size_t C = pick(rng, 1, 3), R = pick(rng, 1, 3), T = pick(rng, 4, 12);
    const std::size_t window = pick(rng, 1, 3), stride = pick(rng, 1, 3);
    // Distinct values at least 0.01 apart keep every window's maximum away from a tie.
    Array x({C, R, T});
    std::vector<std::size_t> rank(x.size());
    std::iota(rank.begin(), rank.end(), std::size_t{0});
    std::shuffle(rank.begin(), rank.end(), rng);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.01 * static_cast<double>(rank[i]) - 0.5;
    return {[seed, window, stride](Tape& t, const std::vector<Var>& v) {
                return weighted_sum(t, maxpool_time(t, v[0], window, stride).out, seed);
            },
            {x}};
}

Case lstm_case(Rng& rng, std::uint64_t seed) {
    const std::size_t T = pick(rng, 1, 4), din = pick(rng, 1, 5), dh = pick(rng, 1, 4);
    return {[seed](Tape& t, const std::vector<Var>& v) {
                return weighted_sum(t, lstm_forward(t, v[0], {v[1], v[2], v[3]}, v[4], v[5]), seed);
            },
            {normal(rng, {T, din}), normal(rng, {din, 4 * dh}, 0.5), normal(rng, {dh, 4 * dh}, 0.5),
             normal(rng, {4 * dh}, 0.5), normal(rng, {1, dh}, 0.5), normal(rng, {1, dh}, 0.5)}};
}

Case attention_case(Rng& rng, std::uint64_t seed) {
    const std::size_t T = pick(rng, 2, 5), heads = pick(rng, 1, 2), d = heads * pick(rng, 1, 3);
    // The key bias adds the same amount to every score in a row, so its
    // gradient is identically zero; it is held fixed rather than compared as noise.
    auto bk = std::make_shared<Array>(normal(rng, {d}, 0.5));
    std::vector<Array> in{normal(rng, {T, d})};
    for (int k = 0; k < 4; ++k) {
        in.push_back(normal(rng, {d, d}, 0.5));
        if (k != 1) in.push_back(normal(rng, {d}, 0.5));
    }
    return {[seed, heads, bk](Tape& t, const std::vector<Var>& v) {
                const AttentionVars p{v[1], v[2], v[3], t.borrow(*bk, false), v[4], v[5], v[6], v[7]};
                return weighted_sum(t, multihead_self_attention(t, v[0], heads, p), seed);
            },
            in};
}

Case softmax_case(Rng& rng, std::uint64_t seed) {
    const std::size_t rows = pick(rng, 1, 3), k = pick(rng, 1, 6);
    return {[seed](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, softmax(t, v[0]), seed); },
            {normal(rng, {rows, k}, 2.0)}};
}

Case cross_entropy_case(Rng& rng, std::uint64_t) {
    const std::size_t n = pick(rng, 1, 16);
    std::vector<int> labels(n);
    for (int& y : labels) y = static_cast<int>(pick(rng, 0, 1));
    return {[labels](Tape& t, const std::vector<Var>& v) { return cross_entropy(t, softmax(t, v[0]), labels); },
            {normal(rng, {n, 2}, 2.0)}};
}

Case layer_norm_case(Rng& rng, std::uint64_t seed) {
    const std::size_t n = pick(rng, 1, 4), d = pick(rng, 3, 6);
    return {[seed](Tape& t, const std::vector<Var>& v) {
                return weighted_sum(t, layer_norm(t, v[0], v[1], v[2]), seed);
            },
            {normal(rng, {n, d}), normal(rng, {d}), normal(rng, {d})}};
}

model::ModelConfig small_config(Rng& rng) {
    model::ModelConfig c;
    c.conv_channels = pick(rng, 1, 3);
    c.lstm_hidden = 4 * pick(rng, 1, 2);
    c.tx_heads = pick(rng, 1, 2);
    c.tx_ffn = pick(rng, 2, 6);
    c.temp_hidden = pick(rng, 2, 5);
    c.temp_embed_dim = pick(rng, 2, 4);
    c.head_hidden = pick(rng, 2, 6);
    c.seed = rng();
    return c;
}

Case temp_embedding_case(Rng& rng, std::uint64_t seed) {
    const model::ModelConfig cfg = small_config(rng);
    auto layout = std::make_shared<model::ModelParams>(model::init_params(cfg));
    std::vector<Array> in{normal(rng, {1, model::kTempFeatures})};
    for (const auto& e : layout->entries()) in.push_back(e.second);
    return {[seed, layout](Tape& t, const std::vector<Var>& v) {
                const model::BoundParams p(*layout, std::vector<Var>(v.begin() + 1, v.end()));
                return weighted_sum(t, model::embed_temperature(t, p, v[0]), seed);
            },
            in};
}

// Smallest relu/max-pool margin of one forward pass.
double forward_margin(const model::ModelConfig& cfg, const model::ModelParams& params, const Array& x,
                      const Array& temp) {
    Tape t;
    const model::BoundParams p(t, params, false);
    model::forward(t, cfg, p, t.borrow(x, false), t.borrow(temp, false));
    return t.kink_margin();
}

Case end_to_end_case(Rng& rng, std::uint64_t) {
    // Redraw until no relu input or pooling gap lies within reach of the
    // finite-difference step; a kink inside [x-h, x+h] breaks the comparison.
    constexpr double kStep = 1e-4;
    constexpr double kMinMargin = 1e-3;
    constexpr int kMaxDraws = 2000;
    model::ModelConfig cfg;
    std::shared_ptr<model::ModelParams> layout;
    std::shared_ptr<Array> x, temp;
    for (int draw = 0;; ++draw) {
        cfg.seed = rng();
        layout = std::make_shared<model::ModelParams>(model::init_params(cfg));
        x = std::make_shared<Array>(normal(rng, {1, model::kInputRows, kHoursPerDay}));
        temp = std::make_shared<Array>(normal(rng, {1, model::kTempFeatures}));
        if (forward_margin(cfg, *layout, *x, *temp) > kMinMargin) break;
        if (draw + 1 == kMaxDraws) throw NumericError("grad-check: no kink-free sample found");
    }
    const int label = static_cast<int>(pick(rng, 0, 1));
    // Key biases have an identically zero gradient (see attention_case) and stay fixed.
    std::vector<Array> in;
    std::vector<bool> held;
    for (const auto& e : layout->entries()) {
        held.push_back(e.first.ends_with(".attn.bk"));
        if (!held.back()) in.push_back(e.second);
    }
    return {[cfg, layout, x, temp, label, held](Tape& t, const std::vector<Var>& v) {
                std::vector<Var> vars;
                std::size_t next = 0;
                for (std::size_t i = 0; i < held.size(); ++i) {
                    vars.push_back(held[i] ? t.borrow(layout->entries()[i].second, false) : v[next++]);
                }
                const model::BoundParams p(*layout, std::move(vars));
                const Var probs = model::forward(t, cfg, p, t.borrow(*x, false), t.borrow(*temp, false));
                const int y[1] = {label};
                return cross_entropy(t, probs, y);
            },
            in, 8, kStep, true};
}

OpCheck run_case(const std::string& name, double threshold, const CaseFactory& make, std::size_t n_seeds,
                 std::uint64_t base_seed) {
    OpCheck out{name, 0.0, threshold, n_seeds, 0};
    for (std::size_t s = 0; s < n_seeds; ++s) {
        const std::uint64_t seed = base_seed + s;
        Rng rng(seed * 7919 + std::hash<std::string>{}(name));
        Case c = make(rng, seed);
        GradCheckOptions opts;
        opts.step = c.step;
        opts.five_point = c.five_point;
        opts.max_coords_per_input = c.max_coords;
        opts.seed = seed;
        const GradCheckResult r = grad_check(c.f, c.inputs, opts);
        if (r.max_rel_error >= out.max_rel_error) {
            out.max_rel_error = r.max_rel_error;
            out.worst_analytic = r.worst_analytic;
            out.worst_numeric = r.worst_numeric;
        }
        out.coords += r.coords_checked;
    }
    return out;
}

}  // namespace

std::vector<OpCheck> run_gradient_suite(std::size_t n_seeds, std::uint64_t base_seed) {
    std::vector<OpCheck> out;
    out.push_back(run_case("linear", 1e-6, linear_case, n_seeds, base_seed));
    out.push_back(run_case("conv2d_valid", 1e-6, conv_case, n_seeds, base_seed));
    out.push_back(run_case("maxpool_time", 1e-6, maxpool_case, n_seeds, base_seed));
    out.push_back(run_case("softmax", 1e-6, softmax_case, n_seeds, base_seed));
    out.push_back(run_case("cross_entropy", 1e-6, cross_entropy_case, n_seeds, base_seed));
    out.push_back(run_case("layer_norm", 1e-6, layer_norm_case, n_seeds, base_seed));
    out.push_back(run_case("lstm_forward", 1e-5, lstm_case, n_seeds, base_seed));
    out.push_back(run_case("multihead_self_attention", 1e-5, attention_case, n_seeds, base_seed));
    out.push_back(run_case("embed_temperature", 1e-6, temp_embedding_case, n_seeds, base_seed));
    out.push_back(run_case("end_to_end_loss", 1e-4, end_to_end_case, n_seeds, base_seed));
    return out;
}

}  // namespace etd::verify
