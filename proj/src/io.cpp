#include "etd/io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <system_error>

#include <json.hpp>

namespace etd::io {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Strict JSON config reading ------------------------------------------------

[[noreturn]] void type_error(const std::string& where, const char* expected) {
    throw ConfigError(where + ": expected " + expected);
}

void read_value(const json& j, const std::string& where, double& out) {
    if (!j.is_number()) type_error(where, "number");
    out = j.get<double>();
}

void read_value(const json& j, const std::string& where, bool& out) {
    if (!j.is_boolean()) type_error(where, "boolean");
    out = j.get<bool>();
}

void read_value(const json& j, const std::string& where, std::string& out) {
    if (!j.is_string()) type_error(where, "string");
    out = j.get<std::string>();
}

void read_value(const json& j, const std::string& where, int& out) {
    if (!j.is_number_integer()) type_error(where, "integer");
    out = j.get<int>();
}

void read_value(const json& j, const std::string& where, std::uint64_t& out) {
    if (!j.is_number_unsigned()) type_error(where, "non-negative integer");
    out = j.get<std::uint64_t>();
}

void read_value(const json& j, const std::string& where, synth::Interval& out) {
    if (!j.is_array() || j.size() != 2) type_error(where, "[lo, hi]");
    read_value(j[0], where + "[0]", out.lo);
    read_value(j[1], where + "[1]", out.hi);
}

void read_value(const json& j, const std::string& where, Season& out) {
    if (!j.is_string()) type_error(where, "season name");
    const auto s = parse_season(j.get<std::string>());
    if (!s) throw ConfigError(where + ": unknown season '" + j.get<std::string>() + "'");
    out = *s;
}

void read_value(const json& j, const std::string& where, train::Optimizer& out) {
    if (!j.is_string()) type_error(where, "\"sgd\" or \"adam\"");
    const auto o = train::parse_optimizer(j.get<std::string>());
    if (!o) throw ConfigError(where + ": unknown optimizer '" + j.get<std::string>() + "'");
    out = *o;
}

template <class T>
void read_value(const json& j, const std::string& where, std::vector<T>& out) {
    if (!j.is_array()) type_error(where, "array");
    out.assign(j.size(), T{});
    for (std::size_t i = 0; i < j.size(); ++i) read_value(j[i], where + "[" + std::to_string(i) + "]", out[i]);
}

/// Reads the keys of one object and rejects any it was not asked about.
class Section {
public:
    Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) type_error(where_.empty() ? "config" : where_, "object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (auto it = j_.find(key); it != j_.end()) read_value(*it, name(key), out);
    }

    /// Nested object, or nullptr when absent.
    const json* child(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string name(const char* key) const { return where_.empty() ? key : where_ + "." + key; }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.contains(key)) throw ConfigError("unknown config key '" + name(key.c_str()) + "'");
        }
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

void read_profile(const json& j, const std::string& where, synth::SeasonProfile& p) {
    Section s(j, where);
    s.get("first_light", p.first_light);
    s.get("last_light", p.last_light);
    s.get("peak_yield", p.peak_yield);
    s.get("clearness", p.clearness);
    s.get("temp_median", p.temp_median);
    s.get("load_factor", p.load_factor);
    s.finish();
}

void read_generator(const json& j, const std::string& where, synth::GeneratorParams& g) {
    Section s(j, where);
    if (const json* seasons = s.child("seasons")) {
        Section ss(*seasons, s.name("seasons"));
        for (Season season : {Season::Spring, Season::Summer, Season::Autumn, Season::Winter}) {
            const std::string key(to_string(season));
            if (const json* p = ss.child(key.c_str())) {
                read_profile(*p, ss.name(key.c_str()), g.seasons[static_cast<std::size_t>(season)]);
            }
        }
        ss.finish();
    }
    s.get("capacity_kwp", g.capacity_kwp);
    s.get("local_spread", g.local_spread);
    s.get("hourly_noise", g.hourly_noise);
    s.get("load_scale", g.load_scale);
    s.get("load_noise", g.load_noise);
    s.finish();
}

void read_synth(const json& j, synth::SynthConfig& c) {
    Section s(j, "synth");
    s.get("n_prosumers", c.n_prosumers);
    s.get("n_days", c.n_days);
    if (const json* mix = s.child("mix")) {
        Section m(*mix, "synth.mix");
        m.get("benign", c.mix.benign);
        m.get("theft1", c.mix.theft1);
        m.get("theft2", c.mix.theft2);
        m.finish();
    }
    s.get("alpha_range", c.alpha_range);
    s.get("beta_range", c.beta_range);
    s.get("epsilon", c.epsilon);
    s.get("seed", c.seed);
    s.get("season_calendar", c.season_calendar);
    if (const json* split = s.child("split")) {
        Section m(*split, "synth.split");
        m.get("train", c.split.train);
        m.get("val", c.split.val);
        m.get("test", c.split.test);
        m.finish();
    }
    if (const json* g = s.child("generator")) read_generator(*g, "synth.generator", c.generator);
    s.finish();
}

void read_model(const json& j, const std::string& where, model::ModelConfig& c) {
    Section s(j, where);
    s.get("conv_channels", c.conv_channels);
    s.get("pool_window", c.pool_window);
    s.get("pool_stride", c.pool_stride);
    s.get("lstm_hidden", c.lstm_hidden);
    s.get("tx_layers", c.tx_layers);
    s.get("tx_heads", c.tx_heads);
    s.get("tx_ffn", c.tx_ffn);
    s.get("temp_hidden", c.temp_hidden);
    s.get("temp_embed_dim", c.temp_embed_dim);
    s.get("head_hidden", c.head_hidden);
    s.get("positional_encoding", c.positional_encoding);
    s.get("seed", c.seed);
    s.finish();
}

void read_train(const json& j, train::TrainConfig& c) {
    Section s(j, "train");
    s.get("epochs", c.epochs);
    s.get("batch_size", c.batch_size);
    s.get("learning_rate", c.learning_rate);
    s.get("optimizer", c.optimizer);
    s.get("beta1", c.beta1);
    s.get("beta2", c.beta2);
    s.get("adam_eps", c.adam_eps);
    s.get("seed", c.seed);
    s.get("early_stop_patience", c.early_stop_patience);
    s.get("grad_clip_norm", c.grad_clip_norm);
    s.finish();
}

void read_paths(const json& j, Paths& p) {
    Section s(j, "paths");
    s.get("out_dir", p.out_dir);
    s.get("dataset", p.dataset);
    s.get("checkpoint", p.checkpoint);
    s.finish();
}

// JSON writing ------------------------------------------------------------------

ordered_json interval_json(const synth::Interval& i) { return ordered_json::array({i.lo, i.hi}); }

ordered_json model_json(const model::ModelConfig& c) {
    ordered_json j;
    j["conv_channels"] = c.conv_channels;
    j["pool_window"] = c.pool_window;
    j["pool_stride"] = c.pool_stride;
    j["lstm_hidden"] = c.lstm_hidden;
    j["tx_layers"] = c.tx_layers;
    j["tx_heads"] = c.tx_heads;
    j["tx_ffn"] = c.tx_ffn;
    j["temp_hidden"] = c.temp_hidden;
    j["temp_embed_dim"] = c.temp_embed_dim;
    j["head_hidden"] = c.head_hidden;
    j["positional_encoding"] = c.positional_encoding;
    j["seed"] = c.seed;
    return j;
}

ordered_json mix_json(const synth::Mix& m) {
    return ordered_json{{"benign", m.benign}, {"theft1", m.theft1}, {"theft2", m.theft2}};
}

ordered_json synth_json(const synth::SynthConfig& c) {
    ordered_json j;
    j["n_prosumers"] = c.n_prosumers;
    j["n_days"] = c.n_days;
    j["mix"] = mix_json(c.mix);
    j["alpha_range"] = interval_json(c.alpha_range);
    j["beta_range"] = interval_json(c.beta_range);
    j["epsilon"] = c.epsilon;
    j["seed"] = c.seed;
    j["season_calendar"] = ordered_json::array();
    for (Season s : c.season_calendar) j["season_calendar"].push_back(std::string(to_string(s)));
    j["split"] = {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}};
    ordered_json seasons;
    for (Season s : {Season::Spring, Season::Summer, Season::Autumn, Season::Winter}) {
        const synth::SeasonProfile& p = c.generator.profile(s);
        seasons[std::string(to_string(s))] = {{"first_light", p.first_light},
                                              {"last_light", p.last_light},
                                              {"peak_yield", p.peak_yield},
                                              {"clearness", interval_json(p.clearness)},
                                              {"temp_median", interval_json(p.temp_median)},
                                              {"load_factor", p.load_factor}};
    }
    j["generator"] = {{"seasons", seasons},
                      {"capacity_kwp", interval_json(c.generator.capacity_kwp)},
                      {"local_spread", c.generator.local_spread},
                      {"hourly_noise", c.generator.hourly_noise},
                      {"load_scale", interval_json(c.generator.load_scale)},
                      {"load_noise", c.generator.load_noise}};
    return j;
}

ordered_json train_json(const train::TrainConfig& c) {
    ordered_json j;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.learning_rate;
    j["optimizer"] = std::string(train::to_string(c.optimizer));
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["adam_eps"] = c.adam_eps;
    j["seed"] = c.seed;
    j["early_stop_patience"] = c.early_stop_patience;
    j["grad_clip_norm"] = c.grad_clip_norm;
    return j;
}

json parse_json(std::string_view text, std::string_view what) {
    try {
        return json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string(what) + ": invalid JSON: " + e.what());
    }
}

// CSV ----------------------------------------------------------------------

constexpr const char* kSeriesNames[] = {"load",         "actual_gen",           "reported_gen",
                                        "load_pattern", "reported_gen_pattern", "actual_gen_pattern"};
constexpr const char* kDetectSeries[] = {"load", "reported_gen", "load_pattern", "reported_gen_pattern"};
constexpr const char* kTempColumns[] = {"temp_high", "temp_low", "temp_median", "temp_std"};

HourlySeries DayRecord::*series_member(std::string_view name) {
    if (name == "load") return &DayRecord::load;
    if (name == "actual_gen") return &DayRecord::actual_gen;
    if (name == "reported_gen") return &DayRecord::reported_gen;
    if (name == "load_pattern") return &DayRecord::load_pattern;
    if (name == "reported_gen_pattern") return &DayRecord::reported_gen_pattern;
    return &DayRecord::actual_gen_pattern;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

struct CsvTable {
    std::map<std::string, std::size_t, std::less<>> columns;
    std::vector<std::vector<std::string_view>> rows;
    std::vector<std::size_t> line_numbers;
};

CsvTable parse_csv(std::string_view text, std::string_view source) {
    CsvTable t;
    std::size_t pos = 0, line_no = 0;
    bool header = true;
    std::size_t width = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        auto fields = split_fields(line);
        if (header) {
            for (std::size_t i = 0; i < fields.size(); ++i) {
                if (!t.columns.emplace(std::string(fields[i]), i).second) {
                    throw DataError(std::string(source) + ": duplicate column '" + std::string(fields[i]) + "'");
                }
            }
            width = fields.size();
            header = false;
            continue;
        }
        if (fields.size() != width) {
            throw DataError(std::string(source) + " line " + std::to_string(line_no) + ": expected " +
                            std::to_string(width) + " fields, got " + std::to_string(fields.size()));
        }
        t.rows.push_back(std::move(fields));
        t.line_numbers.push_back(line_no);
    }
    if (header) throw DataError(std::string(source) + ": empty file");
    return t;
}

class RowReader {
public:
    RowReader(const CsvTable& t, std::size_t row, std::string_view source)
        : t_(t), row_(row), source_(source) {}

    bool has(std::string_view col) const { return t_.columns.contains(col); }

    std::string_view field(std::string_view col) const {
        auto it = t_.columns.find(col);
        if (it == t_.columns.end()) throw DataError(std::string(source_) + ": missing column '" + std::string(col) + "'");
        return t_.rows[row_][it->second];
    }

    template <class T>
    T number(std::string_view col) const {
        const std::string_view f = field(col);
        T v{};
        const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
        if (ec != std::errc() || ptr != f.data() + f.size()) bad(col, f);
        return v;
    }

    [[noreturn]] void bad(std::string_view col, std::string_view value) const {
        throw DataError(std::string(source_) + " line " + std::to_string(t_.line_numbers[row_]) + ": column '" +
                        std::string(col) + "': cannot parse '" + std::string(value) + "'");
    }

private:
    const CsvTable& t_;
    std::size_t row_;
    std::string_view source_;
};

HourlySeries read_series(const RowReader& r, std::string_view name) {
    std::vector<double> v(kHoursPerDay);
    for (std::size_t h = 0; h < kHoursPerDay; ++h) v[h] = r.number<double>(std::string(name) + "_" + hour_label(h));
    return HourlySeries(std::move(v));
}

void read_core(const RowReader& r, DayRecord& rec) {
    const std::string_view season = r.field("season");
    const auto s = parse_season(season);
    if (!s) r.bad("season", season);
    rec.temp.season = *s;
    rec.temp.high = r.number<double>("temp_high");
    rec.temp.low = r.number<double>("temp_low");
    rec.temp.median = r.number<double>("temp_median");
    rec.temp.std_dev = r.number<double>("temp_std");
}

void append_double(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

template <class Int>
void append_int(std::string& out, Int v) {
    char buf[24];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

void append_row(std::string& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += fields[i];
    }
    out += '\n';
}

std::string hour_header(std::string first) {
    std::string out = std::move(first);
    for (std::size_t h = 0; h < kHoursPerDay; ++h) out += "," + hour_label(h);
    return out + "\n";
}

void append_series(std::string& out, const HourlySeries& s) {
    for (double v : s) {
        out += ',';
        append_double(out, v);
    }
}

}  // namespace

// RunConfig ------------------------------------------------------------------

void RunConfig::validate() const {
    synth.validate();
    model.validate();
    train.validate();
    if (paths.out_dir.empty()) throw ConfigError("paths.out_dir must not be empty");
}

fs::path RunConfig::dataset_path() const {
    return paths.dataset.empty() ? fs::path(paths.out_dir) / "dataset.csv" : fs::path(paths.dataset);
}

fs::path RunConfig::checkpoint_path() const {
    return paths.checkpoint.empty() ? fs::path(paths.out_dir) / "checkpoint.json" : fs::path(paths.checkpoint);
}

RunConfig parse_run_config(std::string_view json_text) {
    const json j = parse_json(json_text, "config");
    RunConfig cfg;
    Section root(j, "");
    if (const json* s = root.child("synth")) read_synth(*s, cfg.synth);
    if (const json* m = root.child("model")) read_model(*m, "model", cfg.model);
    if (const json* t = root.child("train")) read_train(*t, cfg.train);
    if (const json* p = root.child("paths")) read_paths(*p, cfg.paths);
    root.finish();
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const fs::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    return parse_run_config(text);
}

std::string run_config_json(const RunConfig& cfg) {
    ordered_json j;
    j["synth"] = synth_json(cfg.synth);
    j["model"] = model_json(cfg.model);
    j["train"] = train_json(cfg.train);
    j["paths"] = {{"out_dir", cfg.paths.out_dir}, {"dataset", cfg.paths.dataset}, {"checkpoint", cfg.paths.checkpoint}};
    return j.dump(2) + "\n";
}

// Files ----------------------------------------------------------------------

std::string format_double(double v) {
    std::string s;
    append_double(s, v);
    return s;
}

void write_file_atomic(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot write " + tmp.string());
        f.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!f) throw DataError("cannot write " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw DataError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// Dataset ----------------------------------------------------------------------

std::vector<std::string> dataset_columns() {
    std::vector<std::string> cols{"prosumer_id", "day_index", "season",      "label",   "attack_kind",
                                  "temp_high",   "temp_low",  "temp_median", "temp_std"};
    for (const char* s : kSeriesNames) {
        for (std::size_t h = 0; h < kHoursPerDay; ++h) cols.push_back(std::string(s) + "_" + hour_label(h));
    }
    return cols;
}

std::string dataset_csv(const std::vector<DayRecord>& records) {
    std::string out;
    append_row(out, dataset_columns());
    for (const DayRecord& r : records) {
        append_int(out, r.prosumer_id);
        out += ',';
        append_int(out, r.day_index);
        out += ',';
        out += to_string(r.temp.season);
        out += ',';
        append_int(out, r.label);
        out += ',';
        out += to_string(r.attack_kind);
        for (double v : {r.temp.high, r.temp.low, r.temp.median, r.temp.std_dev}) {
            out += ',';
            append_double(out, v);
        }
        for (const char* s : kSeriesNames) append_series(out, r.*series_member(s));
        out += '\n';
    }
    return out;
}

std::vector<DayRecord> parse_dataset_csv(std::string_view text, std::string_view source) {
    const CsvTable t = parse_csv(text, source);
    for (const std::string& col : dataset_columns()) {
        if (!t.columns.contains(col)) throw DataError(std::string(source) + ": missing column '" + col + "'");
    }
    std::vector<DayRecord> out;
    out.reserve(t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const RowReader r(t, i, source);
        DayRecord rec;
        rec.prosumer_id = r.number<std::int64_t>("prosumer_id");
        rec.day_index = r.number<std::int64_t>("day_index");
        rec.label = r.number<int>("label");
        const std::string_view kind = r.field("attack_kind");
        const auto k = parse_attack_kind(kind);
        if (!k) r.bad("attack_kind", kind);
        rec.attack_kind = *k;
        read_core(r, rec);
        for (const char* s : kSeriesNames) rec.*series_member(s) = read_series(r, s);
        if (const auto problems = validate_record(rec); !problems.empty()) {
            throw DataError(std::string(source) + " line " + std::to_string(t.line_numbers[i]) + ": " + problems.front());
        }
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<DayRecord> parse_detect_csv(std::string_view text, std::string_view source) {
    const CsvTable t = parse_csv(text, source);
    std::vector<std::string> required{"season"};
    for (const char* c : kTempColumns) required.emplace_back(c);
    for (const char* s : kDetectSeries) {
        for (std::size_t h = 0; h < kHoursPerDay; ++h) required.push_back(std::string(s) + "_" + hour_label(h));
    }
    for (const std::string& col : required) {
        if (!t.columns.contains(col)) throw DataError(std::string(source) + ": missing column '" + col + "'");
    }
    if (t.rows.empty()) throw DataError(std::string(source) + ": no data rows");
    std::vector<DayRecord> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const RowReader r(t, i, source);
        DayRecord rec;
        if (r.has("prosumer_id")) rec.prosumer_id = r.number<std::int64_t>("prosumer_id");
        if (r.has("day_index")) rec.day_index = r.number<std::int64_t>("day_index");
        if (r.has("label")) rec.label = r.number<int>("label");
        read_core(r, rec);
        for (const char* s : kDetectSeries) rec.*series_member(s) = read_series(r, s);
        out.push_back(std::move(rec));
    }
    return out;
}

fs::path meta_path(const fs::path& dataset) {
    fs::path p = dataset;
    p.replace_extension(".meta.json");
    return p;
}

std::string dataset_meta_json(const Dataset& data, const synth::SynthConfig& cfg) {
    ordered_json j;
    j["generator_version"] = kGeneratorVersion;
    j["seed"] = data.seed;
    j["epsilon"] = data.epsilon;
    j["mix"] = mix_json(cfg.mix);
    j["n_records"] = data.records.size();
    j["split"] = {{"train", data.split.train}, {"val", data.split.val}, {"test", data.split.test}};
    return j.dump(2) + "\n";
}

void save_dataset(const fs::path& path, const Dataset& data, const synth::SynthConfig& cfg) {
    write_file_atomic(path, dataset_csv(data.records));
    write_file_atomic(meta_path(path), dataset_meta_json(data, cfg));
}

Dataset load_dataset(const fs::path& path) {
    if (!fs::exists(path)) throw DataError("dataset not found: " + path.string());
    Dataset data;
    data.records = parse_dataset_csv(read_file(path), path.string());
    const fs::path meta = meta_path(path);
    if (!fs::exists(meta)) {
        data.split = synth::stratified_split(data.records, synth::SplitFractions{}, data.seed);
        return data;
    }
    json j;
    try {
        j = json::parse(read_file(meta));
        data.seed = j.at("seed").get<std::uint64_t>();
        data.epsilon = j.at("epsilon").get<double>();
        const json& s = j.at("split");
        data.split.train = s.at("train").get<std::vector<std::size_t>>();
        data.split.val = s.at("val").get<std::vector<std::size_t>>();
        data.split.test = s.at("test").get<std::vector<std::size_t>>();
    } catch (const json::exception& e) {
        throw DataError(meta.string() + ": " + e.what());
    }
    if (!split_is_partition(data.split, data.records.size())) {
        throw DataError(meta.string() + ": split does not partition the " + std::to_string(data.records.size()) +
                        " records");
    }
    return data;
}

// Checkpoints --------------------------------------------------------------------

std::string checkpoint_json(const Checkpoint& ckpt) {
    const model::Detector& d = ckpt.detector;
    ordered_json j;
    j["format_version"] = kCheckpointFormat;
    j["model_config"] = model_json(d.config);
    j["norm_stats"] = {{"series_mean", d.norm.series_mean},
                       {"series_std", d.norm.series_std},
                       {"temp_mean", d.norm.temp_mean},
                       {"temp_std", d.norm.temp_std}};
    j["best_val_loss"] = ckpt.best_val_loss;
    j["best_epoch"] = ckpt.best_epoch;
    ordered_json params = ordered_json::array();
    for (const auto& [path, value] : d.params.entries()) {
        ordered_json p;
        p["path"] = path;
        p["shape"] = value.shape();
        p["data"] = value.vec();
        params.push_back(std::move(p));
    }
    j["params"] = std::move(params);
    return j.dump(1) + "\n";
}

Checkpoint parse_checkpoint(std::string_view json_text) {
    json j;
    try {
        j = json::parse(json_text.begin(), json_text.end());
    } catch (const json::parse_error& e) {
        throw DataError(std::string("checkpoint: invalid JSON: ") + e.what());
    }
    Checkpoint ckpt;
    try {
        const int version = j.at("format_version").get<int>();
        if (version != kCheckpointFormat) {
            throw DataError("checkpoint: unsupported format_version " + std::to_string(version));
        }
        try {
            read_model(j.at("model_config"), "model_config", ckpt.detector.config);
            ckpt.detector.config.validate();
        } catch (const ConfigError& e) {
            throw DataError(std::string("checkpoint: ") + e.what());
        }
        const json& n = j.at("norm_stats");
        n.at("series_mean").get_to(ckpt.detector.norm.series_mean);
        n.at("series_std").get_to(ckpt.detector.norm.series_std);
        n.at("temp_mean").get_to(ckpt.detector.norm.temp_mean);
        n.at("temp_std").get_to(ckpt.detector.norm.temp_std);
        ckpt.best_val_loss = j.at("best_val_loss").get<double>();
        ckpt.best_epoch = j.at("best_epoch").get<std::size_t>();

        model::ModelParams params = model::init_params(ckpt.detector.config);
        const json& ps = j.at("params");
        if (ps.size() != params.size()) {
            throw DataError("checkpoint: expected " + std::to_string(params.size()) + " parameter arrays, found " +
                            std::to_string(ps.size()));
        }
        for (std::size_t i = 0; i < ps.size(); ++i) {
            auto& [path, value] = params.entries()[i];
            const std::string got = ps[i].at("path").get<std::string>();
            if (got != path) throw DataError("checkpoint: expected parameter '" + path + "', found '" + got + "'");
            const auto shape = ps[i].at("shape").get<tensor::Shape>();
            if (shape != value.shape()) {
                throw DataError("checkpoint: '" + path + "' has shape " + tensor::shape_string(shape) + ", expected " +
                                tensor::shape_string(value.shape()));
            }
            auto data = ps[i].at("data").get<std::vector<double>>();
            if (data.size() != value.size()) throw DataError("checkpoint: '" + path + "' has the wrong number of values");
            std::copy(data.begin(), data.end(), value.values().begin());
        }
        ckpt.detector.params = std::move(params);
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: ") + e.what());
    }
    return ckpt;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) { write_file_atomic(path, checkpoint_json(ckpt)); }

Checkpoint load_checkpoint(const fs::path& path) {
    if (!fs::exists(path)) throw DataError("checkpoint not found: " + path.string());
    return parse_checkpoint(read_file(path));
}

// Reports --------------------------------------------------------------------------

std::string history_csv(const std::vector<train::EpochRecord>& history) {
    std::string out = "epoch,train_loss,val_loss,train_acc,val_acc\n";
    for (const train::EpochRecord& e : history) {
        append_row(out, {std::to_string(e.epoch), format_double(e.train_loss), format_double(e.val_loss),
                         format_double(e.train_acc), format_double(e.val_acc)});
    }
    return out;
}

std::string scores_csv(const eval::ScoredRecords& s) {
    std::string out = "prosumer_id,day_index,label,score\n";
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
        append_row(out, {std::to_string(s.prosumer_ids[i]), std::to_string(s.day_indices[i]),
                         std::to_string(s.labels[i]), format_double(s.scores[i])});
    }
    return out;
}

std::string confusion_csv(const eval::Metrics& m) {
    std::string out = "actual,predicted_benign,predicted_theft\n";
    append_row(out, {"benign", std::to_string(m.tn), std::to_string(m.fp)});
    append_row(out, {"theft", std::to_string(m.fn), std::to_string(m.tp)});
    return out;
}

std::string metrics_report_json(const eval::Metrics& m, SplitName split, double threshold) {
    ordered_json j;
    j["split"] = std::string(to_string(split));
    j["n_records"] = m.total();
    j["threshold"] = threshold;
    j["accuracy"] = m.accuracy;
    j["f1"] = m.f1;
    j["auc"] = m.auc;
    j["confusion"] = {{"tp", m.tp}, {"fp", m.fp}, {"tn", m.tn}, {"fn", m.fn}};
    return j.dump(2) + "\n";
}

std::string multi_seed_json(const eval::MultiSeedReport& report) {
    ordered_json j;
    ordered_json runs = ordered_json::array();
    for (const eval::SeedRun& r : report.runs) {
        runs.push_back({{"seed", r.seed},
                        {"accuracy", r.metrics.accuracy},
                        {"f1", r.metrics.f1},
                        {"auc", r.metrics.auc},
                        {"best_epoch", r.best_epoch},
                        {"best_val_loss", r.best_val_loss}});
    }
    j["runs"] = std::move(runs);
    auto ms = [](const eval::MeanStd& m) { return ordered_json{{"mean", m.mean}, {"std", m.std}}; };
    j["accuracy"] = ms(report.accuracy);
    j["f1"] = ms(report.f1);
    j["auc"] = ms(report.auc);
    return j.dump(2) + "\n";
}

std::string seasonal_patterns_csv(const Dataset& data) {
    std::string out = hour_header("season");
    for (Season s : {Season::Spring, Season::Summer, Season::Autumn, Season::Winter}) {
        std::vector<double> sum(kHoursPerDay, 0.0);
        std::size_t n = 0;
        for (const DayRecord& r : data.records) {
            if (r.temp.season != s) continue;
            for (std::size_t h = 0; h < kHoursPerDay; ++h) sum[h] += r.actual_gen[h];
            ++n;
        }
        out += to_string(s);
        for (double v : sum) {
            out += ',';
            append_double(out, n == 0 ? 0.0 : v / static_cast<double>(n));
        }
        out += '\n';
    }
    return out;
}

std::string theft_examples_csv(const Dataset& data, const synth::Interval& range) {
    // Prefer a summer day, where the attacks are easiest to see.
    const DayRecord* day = nullptr;
    for (const DayRecord& r : data.records) {
        if (r.label != 0 || r.actual_gen.total() <= 0.0) continue;
        if (!day) day = &r;
        if (r.temp.season == Season::Summer) {
            day = &r;
            break;
        }
    }
    if (!day) throw DataError("no benign day with generation to export");

    synth::Rng rng = synth::substream(data.seed, static_cast<std::uint64_t>(day->day_index), 0xE7);
    std::uniform_real_distribution<double> u(range.lo, range.hi);
    const double alpha = u(rng);
    std::vector<double> betas(kHoursPerDay);
    for (double& b : betas) b = u(rng);

    std::string out = hour_header("kind,param");
    out += "benign,";
    append_series(out, day->actual_gen);
    out += "\ntheft1,";
    append_double(out, alpha);
    append_series(out, synth::theft1(day->actual_gen, alpha, range));
    out += "\ntheft2,";
    append_series(out, synth::theft2(day->actual_gen, betas, range));
    out += '\n';
    return out;
}

}  // namespace etd::io
