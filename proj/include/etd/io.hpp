#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "etd/domain.hpp"
#include "etd/eval.hpp"
#include "etd/model.hpp"
#include "etd/synth.hpp"
#include "etd/train.hpp"

namespace etd::io {

namespace fs = std::filesystem;

inline constexpr int kCheckpointFormat = 1;
inline constexpr int kGeneratorVersion = 1;

struct Paths {
    std::string out_dir = "run";
    // Empty means <out_dir>/dataset.csv and <out_dir>/checkpoint.json.
    std::string dataset;
    std::string checkpoint;

    friend bool operator==(const Paths&, const Paths&) = default;
};

struct RunConfig {
    synth::SynthConfig synth;
    model::ModelConfig model;
    train::TrainConfig train;
    Paths paths;

    /// Throws ConfigError.
    void validate() const;
    fs::path dataset_path() const;
    fs::path checkpoint_path() const;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Strict parse: unknown keys and wrong types are ConfigError. Missing keys keep defaults.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const fs::path& path);
/// Every field, pretty-printed.
std::string run_config_json(const RunConfig& cfg);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Writes `content` to a sibling temp file, then renames it over `path`.
void write_file_atomic(const fs::path& path, std::string_view content);
std::string read_file(const fs::path& path);

// Dataset CSV --------------------------------------------------------------

/// Header of the wide dataset CSV.
std::vector<std::string> dataset_columns();

std::string dataset_csv(const std::vector<DayRecord>& records);
/// Parses a full dataset CSV. `source` prefixes error messages.
std::vector<DayRecord> parse_dataset_csv(std::string_view text, std::string_view source = "dataset");

/// Rows holding only what the detector reads: season, temperature fields and the
/// load, reported_gen, load_pattern and reported_gen_pattern hours. Any other
/// columns are accepted and, where they match the dataset schema, parsed.
std::vector<DayRecord> parse_detect_csv(std::string_view text, std::string_view source = "input");

/// Sidecar path for a dataset file: dataset.csv -> dataset.meta.json.
fs::path meta_path(const fs::path& dataset);

std::string dataset_meta_json(const Dataset& data, const synth::SynthConfig& cfg);

/// Writes the CSV and its sidecar.
void save_dataset(const fs::path& path, const Dataset& data, const synth::SynthConfig& cfg);
/// Reads the CSV and, when present, the sidecar's seed, epsilon and split. Without a
/// sidecar the split is recomputed with default fractions and seed 0.
Dataset load_dataset(const fs::path& path);

// Checkpoints --------------------------------------------------------------

struct Checkpoint {
    model::Detector detector;
    double best_val_loss = 0.0;
    std::size_t best_epoch = 0;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string checkpoint_json(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view json_text);
void save_checkpoint(const fs::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const fs::path& path);

// Reports ------------------------------------------------------------------

std::string history_csv(const std::vector<train::EpochRecord>& history);
std::string scores_csv(const eval::ScoredRecords& scored);
/// 2x2 table with actual classes as rows.
std::string confusion_csv(const eval::Metrics& m);
std::string metrics_report_json(const eval::Metrics& m, SplitName split, double threshold);
std::string multi_seed_json(const eval::MultiSeedReport& report);

/// Mean actual generation per season and hour: header season,h01..h24 and one row per season.
std::string seasonal_patterns_csv(const Dataset& data);
/// One benign day and its theft1/theft2 versions: header kind,param,h01..h24.
std::string theft_examples_csv(const Dataset& data, const synth::Interval& range = {0.1, 0.8});

}  // namespace etd::io
