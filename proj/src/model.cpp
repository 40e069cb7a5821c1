#include "etd/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace etd::model {

using namespace etd::tensor;

// ModelConfig ---------------------------------------------------------------

void ModelConfig::validate() const {
    if (conv_channels == 0) throw ConfigError("model.conv_channels must be >= 1");
    if (pool_window == 0 || pool_stride == 0) throw ConfigError("model.pool_window and pool_stride must be >= 1");
    if (pool_window > kHoursPerDay - kKernelHours + 1) throw ConfigError("model.pool_window longer than the conv output");
    if (lstm_hidden == 0 || tx_heads == 0 || tx_ffn == 0) throw ConfigError("model widths must be >= 1");
    if (lstm_hidden % tx_heads != 0) throw ConfigError("model.lstm_hidden must be divisible by model.tx_heads");
    if (temp_hidden == 0 || temp_embed_dim == 0 || head_hidden == 0) throw ConfigError("model widths must be >= 1");
}

std::size_t ModelConfig::pooled_steps() const {
    const std::size_t conv_steps = kHoursPerDay - kKernelHours + 1;
    return (conv_steps - pool_window) / pool_stride + 1;
}

std::size_t ModelConfig::cnn_features() const {
    // Branch A keeps all four rows, branch B (two-row kernel) keeps three.
    return conv_channels * (kInputRows + kInputRows - 1);
}

// ModelParams ---------------------------------------------------------------

void ModelParams::add(std::string path, Array value) {
    if (contains(path)) throw std::invalid_argument("duplicate parameter path " + path);
    entries_.emplace_back(std::move(path), std::move(value));
}

bool ModelParams::contains(std::string_view path) const {
    for (const auto& e : entries_) {
        if (e.first == path) return true;
    }
    return false;
}

std::size_t ModelParams::index_of(std::string_view path) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].first == path) return i;
    }
    throw std::out_of_range("unknown parameter path " + std::string(path));
}

Array& ModelParams::at(std::string_view path) { return entries_[index_of(path)].second; }
const Array& ModelParams::at(std::string_view path) const { return entries_[index_of(path)].second; }

std::size_t ModelParams::scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.size();
    return n;
}

ModelParams ModelParams::zeros_like() const {
    ModelParams out;
    for (const auto& e : entries_) out.entries_.emplace_back(e.first, Array(e.second.shape()));
    return out;
}

// Initialization -------------------------------------------------------------

namespace {

struct ParamSpec {
    std::string path;
    Shape shape;
    std::size_t fan_in;  // 0 marks layer-norm parameters
    double constant = 0.0;
};

std::vector<ParamSpec> param_specs(const ModelConfig& c) {
    const std::size_t C = c.conv_channels, H = c.lstm_hidden, F = c.cnn_features();
    std::vector<ParamSpec> s;
    s.push_back({"conv_a.kernels", {C, 1, 1, kKernelHours}, kKernelHours});
    s.push_back({"conv_a.bias", {C}, kKernelHours});
    s.push_back({"conv_b.kernels", {C, 1, 2, kKernelHours}, 2 * kKernelHours});
    s.push_back({"conv_b.bias", {C}, 2 * kKernelHours});
    s.push_back({"lstm.w_ih", {F, 4 * H}, F});
    s.push_back({"lstm.w_hh", {H, 4 * H}, H});
    s.push_back({"lstm.bias", {4 * H}, H});
    for (std::size_t l = 0; l < c.tx_layers; ++l) {
        const std::string pre = "encoder." + std::to_string(l) + ".";
        for (const char* m : {"q", "k", "v", "o"}) {
            s.push_back({pre + "attn.w" + m, {H, H}, H});
            s.push_back({pre + "attn.b" + m, {H}, H});
        }
        s.push_back({pre + "ln1.gamma", {H}, 0, 1.0});
        s.push_back({pre + "ln1.beta", {H}, 0, 0.0});
        s.push_back({pre + "ff1.w", {H, c.tx_ffn}, H});
        s.push_back({pre + "ff1.b", {c.tx_ffn}, H});
        s.push_back({pre + "ff2.w", {c.tx_ffn, H}, c.tx_ffn});
        s.push_back({pre + "ff2.b", {H}, c.tx_ffn});
        s.push_back({pre + "ln2.gamma", {H}, 0, 1.0});
        s.push_back({pre + "ln2.beta", {H}, 0, 0.0});
    }
    s.push_back({"temp.fc1.w", {kTempFeatures, c.temp_hidden}, kTempFeatures});
    s.push_back({"temp.fc1.b", {c.temp_hidden}, kTempFeatures});
    s.push_back({"temp.fc2.w", {c.temp_hidden, c.temp_embed_dim}, c.temp_hidden});
    s.push_back({"temp.fc2.b", {c.temp_embed_dim}, c.temp_hidden});
    const std::size_t fused = H + c.temp_embed_dim;
    s.push_back({"head.fc1.w", {fused, c.head_hidden}, fused});
    s.push_back({"head.fc1.b", {c.head_hidden}, fused});
    s.push_back({"head.fc2.w", {c.head_hidden, 2}, c.head_hidden});
    s.push_back({"head.fc2.b", {2}, c.head_hidden});
    return s;
}

}  // namespace

std::size_t fan_in(const ModelConfig& cfg, std::string_view path) {
    for (const auto& s : param_specs(cfg)) {
        if (s.path == path) return s.fan_in;
    }
    throw std::out_of_range("unknown parameter path " + std::string(path));
}

ModelParams init_params(const ModelConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    ModelParams params;
    for (const ParamSpec& s : param_specs(cfg)) {
        Array a(s.shape, s.constant);
        if (s.fan_in > 0) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(s.fan_in));
            std::uniform_real_distribution<double> u(-bound, bound);
            for (double& v : a.values()) v = u(rng);
        }
        params.add(s.path, std::move(a));
    }
    // Forget-gate block of the LSTM bias.
    Array& bias = params.at("lstm.bias");
    const std::size_t H = cfg.lstm_hidden;
    for (std::size_t j = H; j < 2 * H; ++j) bias[j] = 1.0;
    return params;
}

// Inputs ---------------------------------------------------------------------

std::array<const HourlySeries*, kInputRows> input_series(const DayRecord& r) {
    return {&r.load_pattern, &r.load, &r.reported_gen, &r.reported_gen_pattern};
}

namespace {

std::array<double, 4> temp_values(const TempStats& t) { return {t.high, t.low, t.median, t.std_dev}; }

double safe_std(double var) {
    const double s = std::sqrt(var);
    return s > 1e-12 ? s : 1.0;
}

}  // namespace

NormStats compute_norm_stats(std::span<const DayRecord> train) {
    if (train.empty()) throw DataError("cannot compute normalization statistics from an empty training split");
    NormStats ns;
    const double n_series = static_cast<double>(train.size() * kHoursPerDay);
    for (std::size_t row = 0; row < kInputRows; ++row) {
        double s = 0.0;
        for (const DayRecord& r : train) {
            for (double v : *input_series(r)[row]) s += v;
        }
        const double mean = s / n_series;
        double ss = 0.0;
        for (const DayRecord& r : train) {
            for (double v : *input_series(r)[row]) ss += (v - mean) * (v - mean);
        }
        ns.series_mean[row] = mean;
        ns.series_std[row] = safe_std(ss / n_series);
    }
    const double n = static_cast<double>(train.size());
    for (std::size_t k = 0; k < 4; ++k) {
        double s = 0.0;
        for (const DayRecord& r : train) s += temp_values(r.temp)[k];
        const double mean = s / n;
        double ss = 0.0;
        for (const DayRecord& r : train) {
            const double d = temp_values(r.temp)[k] - mean;
            ss += d * d;
        }
        ns.temp_mean[k] = mean;
        ns.temp_std[k] = safe_std(ss / n);
    }
    return ns;
}

Array assemble_input(const DayRecord& r, const NormStats& norm) {
    Array x({1, kInputRows, kHoursPerDay});
    const auto rows = input_series(r);
    static constexpr std::array<const char*, kInputRows> names{"load_pattern", "load", "reported_gen",
                                                               "reported_gen_pattern"};
    for (std::size_t row = 0; row < kInputRows; ++row) {
        const HourlySeries& s = *rows[row];
        if (s.size() != kHoursPerDay) {
            throw DataError(std::string("input series ") + names[row] + " has " + std::to_string(s.size()) +
                            " values, expected 24");
        }
        for (std::size_t h = 0; h < kHoursPerDay; ++h) {
            x[row * kHoursPerDay + h] = (s[h] - norm.series_mean[row]) / norm.series_std[row];
        }
    }
    return x;
}

HourlySeries denormalize_row(const Array& x, std::size_t row, const NormStats& norm) {
    HourlySeries s;
    for (std::size_t h = 0; h < kHoursPerDay; ++h) {
        s[h] = x[row * kHoursPerDay + h] * norm.series_std[row] + norm.series_mean[row];
    }
    return s;
}

Array temperature_features(const TempStats& t, const NormStats& norm) {
    Array f({1, kTempFeatures});
    const auto v = temp_values(t);
    for (std::size_t k = 0; k < 4; ++k) f[k] = (v[k] - norm.temp_mean[k]) / norm.temp_std[k];
    f[4] = static_cast<double>(static_cast<int>(t.season)) / 3.0;
    return f;
}

std::vector<ModelInput> prepare_inputs(std::span<const DayRecord> records, const NormStats& norm) {
    std::vector<ModelInput> out;
    out.reserve(records.size());
    for (const DayRecord& r : records) {
        out.push_back({assemble_input(r, norm), temperature_features(r.temp, norm), r.label});
    }
    return out;
}

// Forward --------------------------------------------------------------------

BoundParams::BoundParams(Tape& tape, const ModelParams& params, bool requires_grad) : params_(&params) {
    vars_.reserve(params.size());
    for (const auto& e : params.entries()) vars_.push_back(tape.borrow(e.second, requires_grad));
}

BoundParams::BoundParams(const ModelParams& layout, std::vector<Var> vars) : params_(&layout), vars_(std::move(vars)) {
    if (vars_.size() != layout.size()) {
        throw std::invalid_argument("BoundParams: " + std::to_string(vars_.size()) + " variables for " +
                                    std::to_string(layout.size()) + " parameters");
    }
}

Var BoundParams::operator[](std::string_view path) const { return vars_[params_->index_of(path)]; }

const Shape& ShapeTrace::at(std::string_view stage) const {
    for (const auto& s : stages) {
        if (s.first == stage) return s.second;
    }
    throw std::out_of_range("no stage " + std::string(stage) + " in shape trace");
}

Var embed_temperature(Tape& t, const BoundParams& p, Var temp_features) {
    const Var hidden = relu(t, linear(t, temp_features, p["temp.fc1.w"], p["temp.fc1.b"]));
    return linear(t, hidden, p["temp.fc2.w"], p["temp.fc2.b"]);
}

namespace {

// [C,R,T] pooled maps -> [T, C*R] with feature index c*R + r.
Var per_step_features(Tape& t, Var pooled) {
    const Shape& s = t.value(pooled).shape();
    return transpose(t, reshape(t, pooled, {s[0] * s[1], s[2]}));
}

}  // namespace

Var forward(Tape& t, const ModelConfig& cfg, const BoundParams& p, Var x, Var temp_features, ShapeTrace* trace) {
    auto note = [&](const char* stage, Var v) {
        if (trace) trace->stages.emplace_back(stage, t.value(v).shape());
    };
    if (trace) trace->stages.clear();
    note("input", x);

    t.set_stage("cnn");
    const Var conv_a = relu(t, conv2d_valid(t, x, p["conv_a.kernels"], p["conv_a.bias"]));
    const Var conv_b = relu(t, conv2d_valid(t, x, p["conv_b.kernels"], p["conv_b.bias"]));
    note("conv_a", conv_a);
    note("conv_b", conv_b);
    const Var pool_a = maxpool_time(t, conv_a, cfg.pool_window, cfg.pool_stride).out;
    const Var pool_b = maxpool_time(t, conv_b, cfg.pool_window, cfg.pool_stride).out;
    note("pool_a", pool_a);
    note("pool_b", pool_b);
    const Var features = concat_cols(t, {per_step_features(t, pool_a), per_step_features(t, pool_b)});
    note("cnn_features", features);

    t.set_stage("lstm");
    const Var hidden = lstm_forward(t, features, {p["lstm.w_ih"], p["lstm.w_hh"], p["lstm.bias"]});
    note("lstm", hidden);

    t.set_stage("transformer");
    Var seq = hidden;
    if (cfg.positional_encoding) {
        const Shape& hs = t.value(hidden).shape();
        seq = add(t, seq, t.constant(sinusoidal_positions(hs[0], hs[1])));
    }
    for (std::size_t l = 0; l < cfg.tx_layers; ++l) {
        const std::string pre = "encoder." + std::to_string(l) + ".";
        EncoderVars ev;
        ev.attn = {p[pre + "attn.wq"], p[pre + "attn.bq"], p[pre + "attn.wk"], p[pre + "attn.bk"],
                   p[pre + "attn.wv"], p[pre + "attn.bv"], p[pre + "attn.wo"], p[pre + "attn.bo"]};
        ev.ln1_gamma = p[pre + "ln1.gamma"];
        ev.ln1_beta = p[pre + "ln1.beta"];
        ev.ff1_w = p[pre + "ff1.w"];
        ev.ff1_b = p[pre + "ff1.b"];
        ev.ff2_w = p[pre + "ff2.w"];
        ev.ff2_b = p[pre + "ff2.b"];
        ev.ln2_gamma = p[pre + "ln2.gamma"];
        ev.ln2_beta = p[pre + "ln2.beta"];
        seq = encoder_layer(t, seq, cfg.tx_heads, ev);
    }
    note("transformer", seq);
    const Var pooled = mean_rows(t, seq);
    note("pooled", pooled);

    t.set_stage("temperature");
    const Var embedding = embed_temperature(t, p, temp_features);

    t.set_stage("head");
    const std::size_t width = t.value(pooled).size();
    const Var fused = reshape(t, concat_cols(t, {reshape(t, pooled, {1, width}), embedding}),
                              {width + t.value(embedding).size()});
    note("fused", fused);
    const std::size_t fw = t.value(fused).size();
    const Var h1 = relu(t, linear(t, reshape(t, fused, {1, fw}), p["head.fc1.w"], p["head.fc1.b"]));
    const Var probs = softmax(t, linear(t, h1, p["head.fc2.w"], p["head.fc2.b"]));
    if (trace) trace->stages.emplace_back("probs", Shape{t.value(probs).size()});
    t.set_stage("");
    return probs;
}

Array embed_temperature(const Detector& d, const TempStats& temp) {
    Tape t;
    const BoundParams p(t, d.params, false);
    const Var e = embed_temperature(t, p, t.constant(temperature_features(temp, d.norm)));
    const Array& v = t.value(e);
    return Array({v.size()}, v.vec());
}

std::array<double, 2> predict(const Detector& d, const ModelInput& in) {
    Tape t;
    const BoundParams p(t, d.params, false);
    const Var probs = forward(t, d.config, p, t.borrow(in.x, false), t.borrow(in.temp, false));
    const Array& v = t.value(probs);
    return {v[0], v[1]};
}

std::array<double, 2> predict(const Detector& d, const DayRecord& r) {
    return predict(d, ModelInput{assemble_input(r, d.norm), temperature_features(r.temp, d.norm), r.label});
}

}  // namespace etd::model
