#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "etd/domain.hpp"
#include "etd/layers.hpp"
#include "etd/tensor.hpp"

namespace etd::model {

using tensor::Array;
using tensor::Shape;
using tensor::Tape;
using tensor::Var;

/// Number of input series stacked into the detector's input matrix.
inline constexpr std::size_t kInputRows = 4;
/// Hours covered by each convolution kernel.
inline constexpr std::size_t kKernelHours = 4;
/// Temperature feature vector: high, low, median, std_dev, season index / 3.
inline constexpr std::size_t kTempFeatures = 5;

struct ModelConfig {
    std::size_t conv_channels = 8;
    std::size_t pool_window = 3;
    std::size_t pool_stride = 3;
    std::size_t lstm_hidden = 64;
    std::size_t tx_layers = 1;
    std::size_t tx_heads = 4;
    std::size_t tx_ffn = 128;
    std::size_t temp_hidden = 16;
    std::size_t temp_embed_dim = 16;
    std::size_t head_hidden = 32;
    bool positional_encoding = true;
    std::uint64_t seed = 7;

    /// Throws ConfigError.
    void validate() const;
    /// Number of time steps left after pooling the 21-step convolution output.
    std::size_t pooled_steps() const;
    /// Width of the per-step CNN feature vector fed to the LSTM.
    std::size_t cnn_features() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Every learnable array of the detector, keyed by a stable path.
class ModelParams {
public:
    using Entry = std::pair<std::string, Array>;

    void add(std::string path, Array value);
    bool contains(std::string_view path) const;
    Array& at(std::string_view path);
    const Array& at(std::string_view path) const;
    std::size_t index_of(std::string_view path) const;

    std::size_t size() const { return entries_.size(); }
    std::size_t scalar_count() const;
    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }

    /// Same paths and shapes, all values zero.
    ModelParams zeros_like() const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;

private:
    std::vector<Entry> entries_;
};

/// Uniform(+-1/sqrt(fan_in)) weights, LSTM forget bias 1, layer norms at identity.
ModelParams init_params(const ModelConfig& cfg);

/// Fan-in used to scale the initial range of a parameter path.
std::size_t fan_in(const ModelConfig& cfg, std::string_view path);

/// Training-split z-score statistics.
struct NormStats {
    // Rows in input order: load_pattern, load, reported_gen, reported_gen_pattern.
    std::array<double, kInputRows> series_mean{0, 0, 0, 0};
    std::array<double, kInputRows> series_std{1, 1, 1, 1};
    // high, low, median, std_dev.
    std::array<double, 4> temp_mean{0, 0, 0, 0};
    std::array<double, 4> temp_std{1, 1, 1, 1};

    friend bool operator==(const NormStats&, const NormStats&) = default;
};

NormStats compute_norm_stats(std::span<const DayRecord> train);

/// The series of a record in input-row order.
std::array<const HourlySeries*, kInputRows> input_series(const DayRecord& r);

/// Normalized input matrix [1,4,24] with rows [P^L, L, reported, P^reported].
Array assemble_input(const DayRecord& r, const NormStats& norm);

/// Undoes the z-score of one input row.
HourlySeries denormalize_row(const Array& x, std::size_t row, const NormStats& norm);

/// Temperature features [1,5].
Array temperature_features(const TempStats& t, const NormStats& norm);

struct ModelInput {
    Array x;
    Array temp;
    int label = 0;
};

std::vector<ModelInput> prepare_inputs(std::span<const DayRecord> records, const NormStats& norm);

/// Parameters registered on a tape, aligned with ModelParams::entries().
class BoundParams {
public:
    BoundParams(Tape& tape, const ModelParams& params, bool requires_grad);
    /// Uses already-registered variables, one per entry of `layout`.
    BoundParams(const ModelParams& layout, std::vector<Var> vars);

    Var operator[](std::string_view path) const;
    const std::vector<Var>& vars() const { return vars_; }

private:
    const ModelParams* params_;
    std::vector<Var> vars_;
};

/// Per-stage output shapes of one forward pass.
struct ShapeTrace {
    std::vector<std::pair<std::string, Shape>> stages;

    const Shape& at(std::string_view stage) const;
};

/// E^Temp [1,temp_embed_dim] from temperature features [1,5].
Var embed_temperature(Tape& t, const BoundParams& p, Var temp_features);

/// Class probabilities [1,2] for one input.
Var forward(Tape& t, const ModelConfig& cfg, const BoundParams& p, Var x, Var temp_features,
            ShapeTrace* trace = nullptr);

/// A trained detector: architecture, weights and the normalization it was trained with.
struct Detector {
    ModelConfig config;
    ModelParams params;
    NormStats norm;

    friend bool operator==(const Detector&, const Detector&) = default;
};

/// Temperature embedding of a record without building a training graph.
Array embed_temperature(const Detector& d, const TempStats& t);

/// [P(benign), P(theft)] for prepared input.
std::array<double, 2> predict(const Detector& d, const ModelInput& in);
std::array<double, 2> predict(const Detector& d, const DayRecord& r);

}  // namespace etd::model
