#include <gtest/gtest.h>

#include <filesystem>
#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include <json.hpp>

#include "etd/cli.hpp"
#include "etd/eval.hpp"
#include "etd/io.hpp"

using namespace etd;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    explicit TempDir(const std::string& tag = "") {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        path_ = fs::temp_directory_path() /
                (std::string("etd_") + info->test_suite_name() + "_" + info->name() + tag);
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

io::RunConfig small_config(const fs::path& out_dir) {
    io::RunConfig c;
    c.synth.n_prosumers = 10;
    c.synth.n_days = 20;
    c.model.conv_channels = 2;
    c.model.lstm_hidden = 8;
    c.model.tx_heads = 2;
    c.model.tx_ffn = 8;
    c.model.temp_hidden = 4;
    c.model.temp_embed_dim = 4;
    c.model.head_hidden = 8;
    c.train.epochs = 2;
    c.train.early_stop_patience = 1;
    c.train.batch_size = 32;
    c.paths.out_dir = out_dir.string();
    return c;
}

fs::path write_config(const TempDir& dir) {
    const fs::path p = dir / "config.in.json";
    io::write_file_atomic(p, io::run_config_json(small_config(dir.path())));
    return p;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(io::read_file(p));
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

std::string printed_value(const std::string& out, const std::string& key) {
    std::istringstream in(out);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind(key + " ", 0) == 0) {
            std::istringstream ls(line.substr(key.size()));
            std::string v;
            ls >> v;
            return v;
        }
    }
    return {};
}

}  // namespace

// Config ---------------------------------------------------------------------

TEST(RunConfig, EmptyObjectGivesDefaults) {
    EXPECT_EQ(io::parse_run_config("{}"), io::RunConfig{});
}

TEST(RunConfig, UnknownKeysAreRejectedByName) {
    try {
        io::parse_run_config(R"({"trian": {}})");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("trian"), std::string::npos);
    }
    try {
        io::parse_run_config(R"({"train": {"epochz": 3}})");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("epochz"), std::string::npos);
    }
}

TEST(RunConfig, WrongTypesAndBadValuesAreConfigErrors) {
    EXPECT_THROW(io::parse_run_config(R"({"train": {"epochs": "ten"}})"), ConfigError);
    EXPECT_THROW(io::parse_run_config(R"({"train": {"optimizer": "rmsprop"}})"), ConfigError);
    EXPECT_THROW(io::parse_run_config(R"({"synth": {"alpha_range": [0.9, 0.2]}})"), ConfigError);
    EXPECT_THROW(io::parse_run_config("not json"), ConfigError);
}

TEST(RunConfig, RoundTripsThroughJson) {
    io::RunConfig c = small_config("somewhere");
    c.synth.epsilon = 1.07;
    c.synth.alpha_range = {0.2, 0.6};
    c.synth.seed = 99;
    c.train.learning_rate = 3e-4;
    c.train.optimizer = train::Optimizer::Sgd;
    c.model.positional_encoding = false;
    c.paths.dataset = "data.csv";
    EXPECT_EQ(io::parse_run_config(io::run_config_json(c)), c);
}

TEST(FormatDouble, ParsesBackExactly) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
        const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
        EXPECT_EQ(std::stod(io::format_double(v)), v);
    }
    EXPECT_EQ(io::format_double(0.5), "0.5");
}

// Dataset files --------------------------------------------------------------

TEST(DatasetCsv, RoundTripIsByteIdentical) {
    synth::SynthConfig c;
    c.n_prosumers = 6;
    c.n_days = 12;
    const Dataset d = synth::build_dataset(c);
    const std::string text = io::dataset_csv(d.records);
    const std::vector<DayRecord> back = io::parse_dataset_csv(text);
    EXPECT_EQ(back, d.records);
    EXPECT_EQ(io::dataset_csv(back), text);
}

TEST(DatasetCsv, HeaderHasAllSeries) {
    const auto cols = io::dataset_columns();
    for (const char* name : {"prosumer_id", "day_index", "season", "label", "attack_kind", "load_h01",
                             "actual_gen_h24", "reported_gen_h12", "load_pattern_h01", "reported_gen_pattern_h24"}) {
        EXPECT_NE(std::find(cols.begin(), cols.end(), name), cols.end()) << name;
    }
}

TEST(DatasetCsv, MalformedInputIsDataError) {
    synth::SynthConfig c;
    c.n_prosumers = 2;
    c.n_days = 2;
    std::string text = io::dataset_csv(synth::build_dataset(c).records);
    EXPECT_THROW(io::parse_dataset_csv(text.substr(0, text.size() / 2)), DataError);
    EXPECT_THROW(io::parse_dataset_csv("prosumer_id,day_index\n1,2\n"), DataError);
    const auto pos = text.find(",summer,");
    if (pos != std::string::npos) {
        text.replace(pos, 8, ",sumer,");
        EXPECT_THROW(io::parse_dataset_csv(text), DataError);
    }
}

TEST(DatasetFile, SaveAndLoadKeepSplit) {
    TempDir dir;
    synth::SynthConfig c;
    c.n_prosumers = 8;
    c.n_days = 10;
    c.seed = 5;
    const Dataset d = synth::build_dataset(c);
    io::save_dataset(dir / "d.csv", d, c);
    EXPECT_TRUE(fs::exists(dir / "d.meta.json"));
    const Dataset back = io::load_dataset(dir / "d.csv");
    EXPECT_EQ(back.records, d.records);
    EXPECT_EQ(back.split, d.split);
    EXPECT_THROW(io::load_dataset(dir / "missing.csv"), DataError);
}

// Checkpoints ----------------------------------------------------------------

TEST(CheckpointFile, RoundTripIsBitwise) {
    synth::SynthConfig sc;
    sc.n_prosumers = 6;
    sc.n_days = 8;
    const Dataset d = synth::build_dataset(sc);
    io::Checkpoint ck{train::make_detector(small_config("x").model, d), 0.123456789012345678, 4};
    const std::string text = io::checkpoint_json(ck);
    EXPECT_EQ(io::parse_checkpoint(text), ck);
    EXPECT_EQ(io::checkpoint_json(io::parse_checkpoint(text)), text);
}

TEST(CheckpointFile, ShapeMismatchIsDataError) {
    synth::SynthConfig sc;
    sc.n_prosumers = 4;
    sc.n_days = 4;
    const Dataset d = synth::build_dataset(sc);
    io::Checkpoint ck{train::make_detector(small_config("x").model, d), 1.0, 1};
    auto j = nlohmann::json::parse(io::checkpoint_json(ck));
    j["model_config"]["lstm_hidden"] = 12;
    EXPECT_THROW(io::parse_checkpoint(j.dump()), DataError);
    EXPECT_THROW(io::parse_checkpoint("{"), DataError);
}

// CLI ------------------------------------------------------------------------

TEST(Cli, UsageErrorsExitOne) {
    EXPECT_EQ(run_cli({"frobnicate"}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"eval", "--split", "holdout"}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"detect"}).code, cli::kExitUsage);
    EXPECT_EQ(run_cli({"--help"}).code, cli::kExitOk);
}

TEST(Cli, BadConfigExitsOneAndNamesKey) {
    TempDir dir;
    io::write_file_atomic(dir / "c.json", R"({"trian": {"epochs": 3}})");
    const CliResult r = run_cli({"train", "--config", (dir / "c.json").string()});
    EXPECT_EQ(r.code, cli::kExitUsage);
    EXPECT_NE(r.err.find("trian"), std::string::npos);
    EXPECT_EQ(run_cli({"synth", "--config", (dir / "absent.json").string()}).code, cli::kExitUsage);
}

TEST(Cli, MissingDatasetExitsTwo) {
    TempDir dir;
    const CliResult r = run_cli({"train", "--config", write_config(dir).string()});
    EXPECT_EQ(r.code, cli::kExitData);
    EXPECT_NE(r.err.find("dataset not found"), std::string::npos);
}

TEST(Cli, SynthIsByteIdenticalAcrossRuns) {
    TempDir a("a"), b("b");
    ASSERT_EQ(run_cli({"synth", "--config", write_config(a).string()}).code, 0);
    ASSERT_EQ(run_cli({"synth", "--config", write_config(b).string()}).code, 0);
    EXPECT_EQ(io::read_file(a / "dataset.csv"), io::read_file(b / "dataset.csv"));
    const std::size_t lines = read_csv(a / "dataset.csv").size();
    EXPECT_EQ(lines, 201u);

    ASSERT_EQ(run_cli({"synth", "--config", write_config(b).string(), "--seed", "8"}).code, 0);
    EXPECT_TRUE(io::read_file(a / "dataset.csv") != io::read_file(b / "dataset.csv"));
}

TEST(Cli, TrainEvalAndSeedOverride) {
    TempDir dir;
    const std::string cfg = write_config(dir).string();
    ASSERT_EQ(run_cli({"synth", "--config", cfg}).code, 0);
    ASSERT_EQ(run_cli({"train", "--config", cfg}).code, 0);
    const std::string history = io::read_file(dir / "history.csv");
    const std::string ckpt = io::read_file(dir / "checkpoint.json");
    EXPECT_EQ(read_csv(dir / "history.csv").size(), 3u);

    ASSERT_EQ(run_cli({"train", "--config", cfg}).code, 0);
    EXPECT_EQ(io::read_file(dir / "history.csv"), history);
    EXPECT_EQ(io::read_file(dir / "checkpoint.json"), ckpt);

    ASSERT_EQ(run_cli({"train", "--config", cfg, "--seed", "77"}).code, 0);
    EXPECT_NE(io::read_file(dir / "history.csv"), history);
    ASSERT_EQ(run_cli({"train", "--config", cfg}).code, 0);

    const Dataset d = io::load_dataset(dir / "dataset.csv");
    for (const char* split : {"train", "val", "test"}) {
        const CliResult r = run_cli({"eval", "--config", cfg, "--split", split});
        ASSERT_EQ(r.code, 0) << r.err;
        const auto report = nlohmann::json::parse(io::read_file(dir / (std::string("report_") + split + ".json")));
        EXPECT_EQ(report["n_records"].get<std::size_t>(), d.subset(*parse_split(split)).size());
        EXPECT_EQ(printed_value(r.out, "accuracy"), io::format_double(report["accuracy"].get<double>()));
        EXPECT_EQ(printed_value(r.out, "auc"), io::format_double(report["auc"].get<double>()));

        // Metrics recomputed from the written scores agree with the report.
        const auto rows = read_csv(dir / (std::string("scores_") + split + ".csv"));
        std::vector<double> scores;
        std::vector<int> labels;
        for (std::size_t i = 1; i < rows.size(); ++i) {
            labels.push_back(std::stoi(rows[i][2]));
            scores.push_back(std::stod(rows[i][3]));
        }
        const eval::Metrics m = eval::compute_metrics(scores, labels);
        EXPECT_EQ(m.accuracy, report["accuracy"].get<double>());
        EXPECT_EQ(m.f1, report["f1"].get<double>());
        EXPECT_EQ(m.auc, report["auc"].get<double>());
        EXPECT_EQ(m.tp, report["confusion"]["tp"].get<std::size_t>());

        const auto conf = read_csv(dir / (std::string("confusion_") + split + ".csv"));
        ASSERT_EQ(conf.size(), 3u);
        EXPECT_EQ(conf[1][1], std::to_string(m.tn));
        EXPECT_EQ(conf[2][2], std::to_string(m.tp));
    }
}

TEST(Cli, DetectScoresRowsAndNamesMissingColumn) {
    TempDir dir;
    const std::string cfg = write_config(dir).string();
    ASSERT_EQ(run_cli({"synth", "--config", cfg}).code, 0);
    ASSERT_EQ(run_cli({"train", "--config", cfg}).code, 0);

    const CliResult ok = run_cli({"detect", "--config", cfg, "--input", (dir / "dataset.csv").string()});
    ASSERT_EQ(ok.code, 0) << ok.err;
    EXPECT_EQ(std::count(ok.out.begin(), ok.out.end(), '\n'), 200);

    // Drop reported_gen_h24 from every row.
    auto rows = read_csv(dir / "dataset.csv");
    const auto col = std::find(rows[0].begin(), rows[0].end(), "reported_gen_h24") - rows[0].begin();
    ASSERT_LT(static_cast<std::size_t>(col), rows[0].size());
    std::string text;
    for (auto& row : rows) {
        row.erase(row.begin() + col);
        for (std::size_t i = 0; i < row.size(); ++i) text += (i ? "," : "") + row[i];
        text += "\n";
    }
    io::write_file_atomic(dir / "short.csv", text);
    const CliResult bad = run_cli({"detect", "--config", cfg, "--input", (dir / "short.csv").string()});
    EXPECT_EQ(bad.code, cli::kExitData);
    EXPECT_NE(bad.err.find("reported_gen_h24"), std::string::npos) << bad.err;
}

TEST(Cli, ExportPatterns) {
    TempDir dir;
    io::RunConfig c = small_config(dir.path());
    c.synth.n_days = 40;
    io::write_file_atomic(dir / "c.json", io::run_config_json(c));
    const std::string cfg = (dir / "c.json").string();
    ASSERT_EQ(run_cli({"synth", "--config", cfg}).code, 0);
    ASSERT_EQ(run_cli({"export-patterns", "--config", cfg}).code, 0);

    const auto seasonal = read_csv(dir / "seasonal_patterns.csv");
    ASSERT_EQ(seasonal.size(), 5u);
    std::map<std::string, std::vector<double>> by_season;
    for (std::size_t i = 1; i < seasonal.size(); ++i) {
        ASSERT_EQ(seasonal[i].size(), 25u);
        for (std::size_t h = 1; h <= 24; ++h) by_season[seasonal[i][0]].push_back(std::stod(seasonal[i][h]));
    }
    ASSERT_EQ(by_season.size(), 4u);
    EXPECT_GT(by_season[std::string(to_string(Season::Summer))][11],
              by_season[std::string(to_string(Season::Winter))][11]);

    const auto examples = read_csv(dir / "theft_examples.csv");
    ASSERT_EQ(examples.size(), 4u);
    EXPECT_EQ(examples[1][0], "benign");
    for (std::size_t r = 2; r <= 3; ++r) {
        for (std::size_t h = 2; h < 26; ++h) EXPECT_GE(std::stod(examples[r][h]), std::stod(examples[1][h]));
    }
}

TEST(Cli, GradCheckPasses) {
    const CliResult r = run_cli({"grad-check", "--seeds", "2"});
    EXPECT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("end_to_end_loss"), std::string::npos);
    EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}
