#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "etd/domain.hpp"
#include "etd/model.hpp"

namespace etd::train {

using model::Detector;
using model::ModelInput;
using model::ModelParams;

enum class Optimizer { Sgd, Adam };

std::string_view to_string(Optimizer o);
std::optional<Optimizer> parse_optimizer(std::string_view s);

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    Optimizer optimizer = Optimizer::Adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 11;
    std::size_t early_stop_patience = 5;
    double grad_clip_norm = 5.0;

    /// Throws ConfigError.
    void validate() const;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;

    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct FitResult {
    ModelParams params;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
};

/// Mean cross-entropy of a batch.
double loss_batch(const Detector& d, std::span<const ModelInput> batch);

struct BatchGradient {
    double loss = 0.0;
    ModelParams grad;
    // Class-1 probability per sample.
    std::vector<double> scores;
};

/// Loss, parameter gradients and scores for one batch on a single tape.
BatchGradient loss_and_grad(const Detector& d, std::span<const ModelInput> batch);

struct LossAccuracy {
    double loss = 0.0;
    double accuracy = 0.0;
};

/// Forward-only loss and 0.5-threshold accuracy over a set of inputs.
LossAccuracy evaluate_loss(const Detector& d, std::span<const ModelInput> inputs);

double global_norm(const ModelParams& grad);

/// Rescales grad to at most max_norm; returns the norm before clipping.
double clip_global_norm(ModelParams& grad, double max_norm);

/// Optimizer with per-parameter state.
class Stepper {
public:
    Stepper(const TrainConfig& cfg, const ModelParams& shape_like);
    void step(ModelParams& params, const ModelParams& grad);
    void set_learning_rate(double lr) { cfg_.learning_rate = lr; }

private:
    TrainConfig cfg_;
    ModelParams m_;
    ModelParams v_;
    std::size_t t_ = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch training on explicit train/validation inputs.
FitResult fit_inputs(const Detector& init, std::span<const ModelInput> train_set,
                     std::span<const ModelInput> val_set, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Trains on the dataset's train split and selects the best validation-loss epoch.
FitResult fit(const Detector& init, const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Normalization from the train split plus freshly initialized weights.
Detector make_detector(const model::ModelConfig& cfg, const Dataset& data);

}  // namespace etd::train
