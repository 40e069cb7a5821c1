#include "etd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <numeric>

namespace etd::eval {

Confusion confusion(std::span<const double> scores, std::span<const int> labels, double threshold) {
    if (scores.size() != labels.size()) throw DataError("confusion: scores and labels differ in length");
    Confusion c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        const bool pos = labels[i] != 0;
        if (pred && pos) ++c.tp;
        else if (pred) ++c.fp;
        else if (pos) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double accuracy(const Confusion& c) {
    const std::size_t n = c.total();
    return n == 0 ? 0.0 : static_cast<double>(c.tp + c.tn) / static_cast<double>(n);
}

double f1_score(std::size_t tp, std::size_t fp, std::size_t fn) {
    if (tp + fp == 0 || tp + fn == 0) return 0.0;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw DataError("auc: scores and labels differ in length");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Sum of 1-based average ranks of the positives.
    double pos_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] != 0) {
                pos_rank_sum += avg_rank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DataError("AUC undefined: need both positive and negative labels");
    const double np = static_cast<double>(n_pos);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

Metrics compute_metrics(std::span<const double> scores, std::span<const int> labels, double threshold) {
    const Confusion c = confusion(scores, labels, threshold);
    Metrics m;
    m.tp = c.tp;
    m.fp = c.fp;
    m.tn = c.tn;
    m.fn = c.fn;
    m.accuracy = accuracy(c);
    m.f1 = f1_score(c.tp, c.fp, c.fn);
    m.auc = auc(scores, labels);
    return m;
}

ScoredRecords score_records(const model::Detector& d, std::span<const DayRecord> records) {
    ScoredRecords out;
    for (const DayRecord& r : records) {
        out.prosumer_ids.push_back(r.prosumer_id);
        out.day_indices.push_back(r.day_index);
        out.labels.push_back(r.label);
        out.scores.push_back(model::predict(d, r)[1]);
    }
    return out;
}

Metrics evaluate(const model::Detector& d, const Dataset& data, SplitName split, ScoredRecords* scored) {
    const auto records = data.subset(split);
    if (records.empty()) throw DataError("split '" + std::string(to_string(split)) + "' is empty");
    ScoredRecords s = score_records(d, records);
    const Metrics m = compute_metrics(s.scores, s.labels);
    if (scored) *scored = std::move(s);
    return m;
}

void summarize(MultiSeedReport& report) {
    auto stat = [&](auto get) {
        MeanStd ms;
        const double k = static_cast<double>(report.runs.size());
        if (report.runs.empty()) return ms;
        for (const SeedRun& r : report.runs) ms.mean += get(r.metrics);
        ms.mean /= k;
        double ss = 0.0;
        for (const SeedRun& r : report.runs) ss += (get(r.metrics) - ms.mean) * (get(r.metrics) - ms.mean);
        ms.std = std::sqrt(ss / k);
        return ms;
    };
    report.accuracy = stat([](const Metrics& m) { return m.accuracy; });
    report.f1 = stat([](const Metrics& m) { return m.f1; });
    report.auc = stat([](const Metrics& m) { return m.auc; });
}

namespace {

double thread_cpu_seconds() {
    timespec ts{};
    clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
    return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

}  // namespace

MultiSeedReport multi_seed_report(const Dataset& data, const model::ModelConfig& model_cfg,
                                  const train::TrainConfig& train_cfg, std::size_t k, bool same_seed) {
    if (k == 0) throw ConfigError("multi-seed report needs k >= 1");
    MultiSeedReport report;
    for (std::size_t i = 0; i < k; ++i) {
        const std::uint64_t offset = same_seed ? 0 : i;
        model::ModelConfig mc = model_cfg;
        train::TrainConfig tc = train_cfg;
        mc.seed += offset;
        tc.seed += offset;

        const double t0 = thread_cpu_seconds();
        const model::Detector init = train::make_detector(mc, data);
        const train::FitResult fit = train::fit(init, data, tc);
        const model::Detector trained{mc, fit.params, init.norm};
        SeedRun run;
        run.seed = mc.seed;
        run.metrics = evaluate(trained, data, SplitName::Test);
        run.best_epoch = fit.best_epoch;
        run.best_val_loss = fit.best_val_loss;
        run.cpu_seconds = thread_cpu_seconds() - t0;
        report.runs.push_back(run);
    }
    summarize(report);
    return report;
}

MultiSeedReport multi_seed_report(const synth::SynthConfig& synth_cfg, const model::ModelConfig& model_cfg,
                                  const train::TrainConfig& train_cfg, std::size_t k, bool same_seed) {
    return multi_seed_report(synth::build_dataset(synth_cfg), model_cfg, train_cfg, k, same_seed);
}

}  // namespace etd::eval
