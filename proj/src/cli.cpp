#include "etd/cli.hpp"

#include <chrono>
#include <cstdio>
#include <iomanip>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "etd/eval.hpp"
#include "etd/io.hpp"
#include "etd/train.hpp"
#include "etd/verify.hpp"

namespace etd::cli {

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string split = "test";
    std::string out_dir;
    std::string dataset;
    std::string checkpoint;
    std::string input;
    std::optional<std::size_t> seeds;
};

io::RunConfig resolve(const Options& o) {
    io::RunConfig cfg = o.config.empty() ? io::RunConfig{} : io::load_run_config(o.config);
    if (!o.out_dir.empty()) cfg.paths.out_dir = o.out_dir;
    if (!o.dataset.empty()) cfg.paths.dataset = o.dataset;
    if (!o.checkpoint.empty()) cfg.paths.checkpoint = o.checkpoint;
    cfg.validate();
    return cfg;
}

SplitName resolve_split(const std::string& s) {
    const auto split = parse_split(s);
    if (!split) throw ConfigError("--split must be train, val or test, got '" + s + "'");
    return *split;
}

io::fs::path out_file(const io::RunConfig& cfg, const std::string& name) {
    return io::fs::path(cfg.paths.out_dir) / name;
}

void print_metrics(std::ostream& out, const eval::Metrics& m, SplitName split) {
    out << "split     " << to_string(split) << "\n";
    out << "records   " << m.total() << "\n";
    out << "accuracy  " << io::format_double(m.accuracy) << "\n";
    out << "f1        " << io::format_double(m.f1) << "\n";
    out << "auc       " << io::format_double(m.auc) << "\n";
    out << "tp " << m.tp << "  fp " << m.fp << "  tn " << m.tn << "  fn " << m.fn << "\n";
}

int cmd_synth(const Options& o, std::ostream& out) {
    io::RunConfig cfg = resolve(o);
    if (o.seed) cfg.synth.seed = *o.seed;
    const Dataset data = synth::build_dataset(cfg.synth);
    const io::fs::path path = cfg.dataset_path();
    io::save_dataset(path, data, cfg.synth);

    std::size_t counts[3] = {0, 0, 0};
    for (const DayRecord& r : data.records) ++counts[static_cast<int>(r.attack_kind)];
    out << "wrote " << data.records.size() << " records to " << path.string() << " (benign " << counts[0]
        << ", theft1 " << counts[1] << ", theft2 " << counts[2] << "; train " << data.split.train.size() << ", val "
        << data.split.val.size() << ", test " << data.split.test.size() << ")\n";
    return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
    io::RunConfig cfg = resolve(o);
    if (o.seed) {
        cfg.model.seed = *o.seed;
        cfg.train.seed = *o.seed;
    }
    const Dataset data = io::load_dataset(cfg.dataset_path());
    const model::Detector init = train::make_detector(cfg.model, data);
    const train::FitResult fit = train::fit(init, data, cfg.train, [&](const train::EpochRecord& e) {
        char line[160];
        std::snprintf(line, sizeof line, "epoch %3zu  train_loss %.5f  val_loss %.5f  train_acc %.4f  val_acc %.4f\n",
                      e.epoch, e.train_loss, e.val_loss, e.train_acc, e.val_acc);
        out << line << std::flush;
    });

    const io::Checkpoint ckpt{{cfg.model, fit.params, init.norm}, fit.best_val_loss, fit.best_epoch};
    io::save_checkpoint(cfg.checkpoint_path(), ckpt);
    io::write_file_atomic(out_file(cfg, "history.csv"), io::history_csv(fit.history));
    io::write_file_atomic(out_file(cfg, "config.json"), io::run_config_json(cfg));
    out << "best epoch " << fit.best_epoch << ", val loss " << io::format_double(fit.best_val_loss) << "\n";
    out << "checkpoint " << cfg.checkpoint_path().string() << "\n";
    return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
    const io::RunConfig cfg = resolve(o);
    const SplitName split = resolve_split(o.split);
    const io::Checkpoint ckpt = io::load_checkpoint(cfg.checkpoint_path());
    const Dataset data = io::load_dataset(cfg.dataset_path());
    eval::ScoredRecords scored;
    const eval::Metrics m = eval::evaluate(ckpt.detector, data, split, &scored);

    const std::string suffix = "_" + std::string(to_string(split));
    io::write_file_atomic(out_file(cfg, "report" + suffix + ".json"),
                          io::metrics_report_json(m, split, eval::kDefaultThreshold));
    io::write_file_atomic(out_file(cfg, "scores" + suffix + ".csv"), io::scores_csv(scored));
    io::write_file_atomic(out_file(cfg, "confusion" + suffix + ".csv"), io::confusion_csv(m));
    print_metrics(out, m, split);
    return kExitOk;
}

int cmd_detect(const Options& o, std::ostream& out) {
    const io::RunConfig cfg = resolve(o);
    if (o.input.empty()) throw ConfigError("detect needs --input");
    const io::Checkpoint ckpt = io::load_checkpoint(cfg.checkpoint_path());
    const auto rows = io::parse_detect_csv(io::read_file(o.input), o.input);
    for (const DayRecord& r : rows) {
        const double p = model::predict(ckpt.detector, r)[1];
        out << "prosumer " << r.prosumer_id << " day " << r.day_index << "  p_theft " << io::format_double(p)
            << "  verdict " << (p >= eval::kDefaultThreshold ? "theft" : "benign") << "\n";
    }
    return kExitOk;
}

int cmd_export_patterns(const Options& o, std::ostream& out) {
    const io::RunConfig cfg = resolve(o);
    const Dataset data = io::load_dataset(cfg.dataset_path());
    const auto seasonal = out_file(cfg, "seasonal_patterns.csv");
    const auto examples = out_file(cfg, "theft_examples.csv");
    io::write_file_atomic(seasonal, io::seasonal_patterns_csv(data));
    io::write_file_atomic(examples, io::theft_examples_csv(data, cfg.synth.alpha_range));
    out << "wrote " << seasonal.string() << " and " << examples.string() << "\n";
    return kExitOk;
}

int cmd_grad_check(const Options& o, std::ostream& out) {
    const std::size_t n = o.seeds.value_or(20);
    if (n == 0) throw ConfigError("--seeds must be at least 1");
    const auto t0 = std::chrono::steady_clock::now();
    const auto checks = verify::run_gradient_suite(n, o.seed.value_or(1));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    bool ok = true;
    out << std::left << std::setw(28) << "op" << std::setw(14) << "max_rel_err" << std::setw(11) << "threshold"
        << std::setw(9) << "coords" << "result\n";
    for (const verify::OpCheck& c : checks) {
        char err[32], thr[32];
        std::snprintf(err, sizeof err, "%.3e", c.max_rel_error);
        std::snprintf(thr, sizeof thr, "%.0e", c.threshold);
        out << std::setw(28) << c.op << std::setw(14) << err << std::setw(11) << thr << std::setw(9) << c.coords
            << (c.passed() ? "ok" : "FAIL") << "\n";
        ok = ok && c.passed();
    }
    char line[64];
    std::snprintf(line, sizeof line, "%zu seeds, %.1f s\n", n, secs);
    out << line;
    return ok ? kExitOk : kExitNumeric;
}

int cmd_multi_seed(const Options& o, std::ostream& out) {
    io::RunConfig cfg = resolve(o);
    if (o.seed) {
        cfg.model.seed = *o.seed;
        cfg.train.seed = *o.seed;
    }
    const std::size_t k = o.seeds.value_or(5);
    const Dataset data = io::load_dataset(cfg.dataset_path());
    const eval::MultiSeedReport report = eval::multi_seed_report(data, cfg.model, cfg.train, k);
    for (const eval::SeedRun& r : report.runs) {
        char line[160];
        std::snprintf(line, sizeof line, "seed %llu  accuracy %.4f  f1 %.4f  auc %.4f  best_epoch %zu  cpu %.1fs\n",
                      static_cast<unsigned long long>(r.seed), r.metrics.accuracy, r.metrics.f1, r.metrics.auc,
                      r.best_epoch, r.cpu_seconds);
        out << line;
    }
    char line[160];
    std::snprintf(line, sizeof line, "mean  accuracy %.4f +- %.4f  f1 %.4f +- %.4f  auc %.4f +- %.4f\n",
                  report.accuracy.mean, report.accuracy.std, report.f1.mean, report.f1.std, report.auc.mean,
                  report.auc.std);
    out << line;
    io::write_file_atomic(out_file(cfg, "multi_seed.json"), io::multi_seed_json(report));
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Electricity theft detection for PV prosumers", "etd"};
    app.require_subcommand(1);
    Options o;

    auto add_config = [&](CLI::App* c) {
        c->add_option("--config", o.config, "JSON run configuration");
        c->add_option("--out", o.out_dir, "Output directory");
    };
    auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Override the configured seed"); };
    auto add_dataset = [&](CLI::App* c) { c->add_option("--dataset", o.dataset, "Dataset CSV"); };
    auto add_checkpoint = [&](CLI::App* c) { c->add_option("--checkpoint", o.checkpoint, "Checkpoint JSON"); };

    CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a labelled synthetic dataset");
    add_config(synth_cmd);
    add_seed(synth_cmd);
    add_dataset(synth_cmd);

    CLI::App* train_cmd = app.add_subcommand("train", "Train the detector");
    add_config(train_cmd);
    add_seed(train_cmd);
    add_dataset(train_cmd);
    add_checkpoint(train_cmd);

    CLI::App* eval_cmd = app.add_subcommand("eval", "Score a split and write metrics");
    add_config(eval_cmd);
    add_dataset(eval_cmd);
    add_checkpoint(eval_cmd);
    eval_cmd->add_option("--split", o.split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));

    CLI::App* detect_cmd = app.add_subcommand("detect", "Score single-day rows");
    add_config(detect_cmd);
    add_checkpoint(detect_cmd);
    detect_cmd->add_option("--input", o.input, "CSV with one day per row")->required();

    CLI::App* export_cmd = app.add_subcommand("export-patterns", "Write seasonal and theft-example CSVs");
    add_config(export_cmd);
    add_dataset(export_cmd);

    CLI::App* grad_cmd = app.add_subcommand("grad-check", "Finite-difference check of every kernel");
    grad_cmd->add_option("--seeds", o.seeds, "Random draws per kernel (default 20)");
    add_seed(grad_cmd);

    CLI::App* multi_cmd = app.add_subcommand("multi-seed", "Train and test with several seeds");
    add_config(multi_cmd);
    add_seed(multi_cmd);
    add_dataset(multi_cmd);
    multi_cmd->add_option("--seeds", o.seeds, "Number of runs (default 5)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (synth_cmd->parsed()) return cmd_synth(o, out);
        if (train_cmd->parsed()) return cmd_train(o, out);
        if (eval_cmd->parsed()) return cmd_eval(o, out);
        if (detect_cmd->parsed()) return cmd_detect(o, out);
        if (export_cmd->parsed()) return cmd_export_patterns(o, out);
        if (grad_cmd->parsed()) return cmd_grad_check(o, out);
        if (multi_cmd->parsed()) return cmd_multi_seed(o, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "data error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}

}  // namespace etd::cli
