#include "etd/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace etd::train {

using namespace etd::tensor;

std::string_view to_string(Optimizer o) { return o == Optimizer::Sgd ? "sgd" : "adam"; }

std::optional<Optimizer> parse_optimizer(std::string_view s) {
    if (s == "sgd") return Optimizer::Sgd;
    if (s == "adam") return Optimizer::Adam;
    return std::nullopt;
}

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("train.epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train.learning_rate must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("train.beta1 and train.beta2 must lie in [0,1)");
    }
    if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be positive");
    if (early_stop_patience == 0 || early_stop_patience > epochs) {
        throw ConfigError("train.early_stop_patience must lie in [1, epochs]");
    }
    if (!(grad_clip_norm > 0.0)) throw ConfigError("train.grad_clip_norm must be positive");
}

namespace {

// Samples per tape when no gradient is needed.
constexpr std::size_t kEvalChunk = 64;

Var batch_probs(Tape& t, const Detector& d, const model::BoundParams& p, std::span<const ModelInput> batch) {
    std::vector<Var> rows;
    rows.reserve(batch.size());
    for (const ModelInput& in : batch) {
        rows.push_back(model::forward(t, d.config, p, t.borrow(in.x, false), t.borrow(in.temp, false)));
    }
    return concat_rows(t, rows);
}

std::vector<int> labels_of(std::span<const ModelInput> batch) {
    std::vector<int> y;
    y.reserve(batch.size());
    for (const ModelInput& in : batch) y.push_back(in.label);
    return y;
}

}  // namespace

double loss_batch(const Detector& d, std::span<const ModelInput> batch) {
    if (batch.empty()) throw DataError("loss_batch: empty batch");
    Tape t;
    const model::BoundParams p(t, d.params, false);
    const std::vector<int> y = labels_of(batch);
    return t.value(cross_entropy(t, batch_probs(t, d, p, batch), y))[0];
}

BatchGradient loss_and_grad(const Detector& d, std::span<const ModelInput> batch) {
    if (batch.empty()) throw DataError("loss_and_grad: empty batch");
    Tape t;
    const model::BoundParams p(t, d.params, true);
    const std::vector<int> y = labels_of(batch);
    const Var probs = batch_probs(t, d, p, batch);
    const Var loss = cross_entropy(t, probs, y);
    t.backward(loss);

    BatchGradient out;
    out.loss = t.value(loss)[0];
    out.grad = d.params.zeros_like();
    for (std::size_t i = 0; i < p.vars().size(); ++i) out.grad.entries()[i].second = t.grad(p.vars()[i]);
    const Array& pv = t.value(probs);
    for (std::size_t i = 0; i < batch.size(); ++i) out.scores.push_back(pv[i * 2 + 1]);
    return out;
}

LossAccuracy evaluate_loss(const Detector& d, std::span<const ModelInput> inputs) {
    if (inputs.empty()) throw DataError("evaluate_loss: no inputs");
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < inputs.size(); start += kEvalChunk) {
        const auto chunk = inputs.subspan(start, std::min(kEvalChunk, inputs.size() - start));
        Tape t;
        const model::BoundParams p(t, d.params, false);
        const std::vector<int> y = labels_of(chunk);
        const Var probs = batch_probs(t, d, p, chunk);
        loss_sum += t.value(cross_entropy(t, probs, y))[0] * static_cast<double>(chunk.size());
        const Array& pv = t.value(probs);
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            correct += static_cast<std::size_t>((pv[i * 2 + 1] >= 0.5 ? 1 : 0) == y[i]);
        }
    }
    const double n = static_cast<double>(inputs.size());
    return {loss_sum / n, static_cast<double>(correct) / n};
}

double global_norm(const ModelParams& grad) {
    double ss = 0.0;
    for (const auto& e : grad.entries()) {
        for (double v : e.second.values()) ss += v * v;
    }
    return std::sqrt(ss);
}

double clip_global_norm(ModelParams& grad, double max_norm) {
    const double norm = global_norm(grad);
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& e : grad.entries()) {
            for (double& v : e.second.values()) v *= s;
        }
    }
    return norm;
}

Stepper::Stepper(const TrainConfig& cfg, const ModelParams& shape_like)
    : cfg_(cfg), m_(shape_like.zeros_like()), v_(shape_like.zeros_like()) {}

void Stepper::step(ModelParams& params, const ModelParams& grad) {
    ++t_;
    const double lr = cfg_.learning_rate;
    if (cfg_.optimizer == Optimizer::Sgd) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto p = params.entries()[i].second.values();
            const auto g = grad.entries()[i].second.values();
            for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr * g[k];
        }
        return;
    }
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params.entries()[i].second.values();
        const auto g = grad.entries()[i].second.values();
        auto m = m_.entries()[i].second.values();
        auto v = v_.entries()[i].second.values();
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.adam_eps);
        }
    }
}

FitResult fit_inputs(const Detector& init, std::span<const ModelInput> train_set, std::span<const ModelInput> val_set,
                     const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    if (train_set.empty() || val_set.empty()) throw DataError("fit: train and validation splits must be non-empty");

    Detector current = init;
    Stepper stepper(cfg, current.params);
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    FitResult result;
    result.params = current.params;
    result.best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<ModelInput> batch;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        std::size_t batch_no = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_no) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(train_set[order[i]]);
            BatchGradient bg;
            try {
                bg = loss_and_grad(current, batch);
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_no) + ": " +
                                   e.what());
            }
            if (!std::isfinite(bg.loss)) {
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_no));
            }
            loss_sum += bg.loss * static_cast<double>(batch.size());
            for (std::size_t i = 0; i < batch.size(); ++i) {
                correct += static_cast<std::size_t>((bg.scores[i] >= 0.5 ? 1 : 0) == batch[i].label);
            }
            clip_global_norm(bg.grad, cfg.grad_clip_norm);
            stepper.step(current.params, bg.grad);
        }

        const LossAccuracy val = evaluate_loss(current, val_set);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(train_set.size());
        rec.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size());
        rec.val_loss = val.loss;
        rec.val_acc = val.accuracy;
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (val.loss < result.best_val_loss) {
            result.best_val_loss = val.loss;
            result.best_epoch = epoch;
            result.params = current.params;
        } else if (epoch - result.best_epoch >= cfg.early_stop_patience) {
            break;
        }
    }
    return result;
}

FitResult fit(const Detector& init, const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    const auto train_records = data.subset(SplitName::Train);
    const auto val_records = data.subset(SplitName::Val);
    const auto train_set = model::prepare_inputs(train_records, init.norm);
    const auto val_set = model::prepare_inputs(val_records, init.norm);
    return fit_inputs(init, train_set, val_set, cfg, on_epoch);
}

Detector make_detector(const model::ModelConfig& cfg, const Dataset& data) {
    const auto train_records = data.subset(SplitName::Train);
    return Detector{cfg, model::init_params(cfg), model::compute_norm_stats(train_records)};
}

}  // namespace etd::train
