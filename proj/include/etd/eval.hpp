#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "etd/domain.hpp"
#include "etd/model.hpp"
#include "etd/synth.hpp"
#include "etd/train.hpp"

namespace etd::eval {

inline constexpr double kDefaultThreshold = 0.5;

struct Confusion {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
    friend bool operator==(const Confusion&, const Confusion&) = default;
};

/// Predicts positive when score >= threshold.
Confusion confusion(std::span<const double> scores, std::span<const int> labels,
                    double threshold = kDefaultThreshold);

double accuracy(const Confusion& c);

/// F1 of the positive (theft) class; zero denominators give 0.
double f1_score(std::size_t tp, std::size_t fp, std::size_t fn);

/// Rank-statistic ROC AUC with half credit for ties. Throws DataError("AUC undefined")
/// unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

struct Metrics {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;
    double accuracy = 0.0;
    double f1 = 0.0;
    double auc = 0.0;

    std::size_t total() const { return tp + fp + tn + fn; }
    friend bool operator==(const Metrics&, const Metrics&) = default;
};

Metrics compute_metrics(std::span<const double> scores, std::span<const int> labels,
                        double threshold = kDefaultThreshold);

/// Per-record class-1 probabilities.
struct ScoredRecords {
    std::vector<std::int64_t> prosumer_ids;
    std::vector<std::int64_t> day_indices;
    std::vector<int> labels;
    std::vector<double> scores;
};

ScoredRecords score_records(const model::Detector& d, std::span<const DayRecord> records);

/// Scores one split and fills Metrics; `scored` receives the per-record scores when given.
Metrics evaluate(const model::Detector& d, const Dataset& data, SplitName split, ScoredRecords* scored = nullptr);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

struct SeedRun {
    std::uint64_t seed = 0;
    Metrics metrics;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
    double cpu_seconds = 0.0;
};

struct MultiSeedReport {
    std::vector<SeedRun> runs;
    MeanStd accuracy;
    MeanStd f1;
    MeanStd auc;
};

/// Mean and population standard deviation of each metric over the runs.
void summarize(MultiSeedReport& report);

/// Trains and tests k times on one dataset. Run i reseeds model and optimizer with
/// seed + i (or seed for every run when same_seed is set).
MultiSeedReport multi_seed_report(const Dataset& data, const model::ModelConfig& model_cfg,
                                  const train::TrainConfig& train_cfg, std::size_t k, bool same_seed = false);

/// Synthesizes the dataset from synth_cfg, then runs the k-seed protocol.
MultiSeedReport multi_seed_report(const synth::SynthConfig& synth_cfg, const model::ModelConfig& model_cfg,
                                  const train::TrainConfig& train_cfg, std::size_t k, bool same_seed = false);

}  // namespace etd::eval
