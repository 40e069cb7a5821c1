#include "etd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace etd::synth {

namespace {

constexpr std::uint64_t kPurposeDay = 1;
constexpr std::uint64_t kPurposeProsumer = 2;
constexpr std::uint64_t kPurposeClasses = 3;
constexpr std::uint64_t kPurposeSplit = 4;

double uniform(Rng& rng, Interval r) { return std::uniform_real_distribution<double>(r.lo, r.hi)(rng); }

double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

// Mean-one log-normal factor with the given log-scale spread.
double lognormal_factor(Rng& rng, double sigma) {
    if (sigma <= 0.0) return 1.0;
    return std::exp(sigma * standard_normal(rng) - 0.5 * sigma * sigma);
}

void check_interval(const char* name, Interval r) {
    if (!(r.lo > 0.0) || !(r.lo < r.hi) || !std::isfinite(r.hi)) {
        std::ostringstream os;
        os << name << " must satisfy 0 < lo < hi, got [" << r.lo << ", " << r.hi << "]";
        throw ConfigError(os.str());
    }
}

}  // namespace

Season season_of_day_of_year(int doy) {
    doy = ((doy % 365) + 365) % 365;
    if (doy < 59) return Season::Winter;
    if (doy < 151) return Season::Spring;
    if (doy < 243) return Season::Summer;
    if (doy < 334) return Season::Autumn;
    return Season::Winter;
}

void SynthConfig::validate() const {
    if (n_prosumers < 1) throw ConfigError("n_prosumers must be >= 1");
    if (n_days < 1) throw ConfigError("n_days must be >= 1");
    if (mix.benign < 0.0 || mix.theft1 < 0.0 || mix.theft2 < 0.0) {
        throw ConfigError("mix proportions must be non-negative");
    }
    if (std::abs(mix.benign + mix.theft1 + mix.theft2 - 1.0) > 1e-9) {
        throw ConfigError("mix proportions must sum to 1");
    }
    check_interval("alpha_range", alpha_range);
    check_interval("beta_range", beta_range);
    if (!(epsilon >= 1.0)) throw ConfigError("epsilon must be >= 1");
    if (!season_calendar.empty() && season_calendar.size() != static_cast<std::size_t>(n_days)) {
        throw ConfigError("season_calendar must list one season per day (" + std::to_string(n_days) + ")");
    }
    if (split.train <= 0.0 || split.val <= 0.0 || split.test < 0.0 ||
        std::abs(split.train + split.val + split.test - 1.0) > 1e-9) {
        throw ConfigError("split fractions must be positive and sum to 1");
    }
    for (const auto& p : generator.seasons) {
        if (p.first_light < 1 || p.last_light > 24 || p.first_light > p.last_light) {
            throw ConfigError("daylight window must satisfy 1 <= first_light <= last_light <= 24");
        }
        if (p.peak_yield <= 0.0 || p.clearness.lo <= 0.0 || p.clearness.lo > p.clearness.hi) {
            throw ConfigError("peak_yield and clearness must be positive");
        }
        if (p.temp_median.lo > p.temp_median.hi) throw ConfigError("temp_median range is inverted");
    }
    if (generator.capacity_kwp.lo <= 0.0 || generator.capacity_kwp.lo > generator.capacity_kwp.hi) {
        throw ConfigError("capacity_kwp must be a positive range");
    }
    if (generator.load_scale.lo <= 0.0 || generator.load_scale.lo > generator.load_scale.hi) {
        throw ConfigError("load_scale must be a positive range");
    }
    if (generator.local_spread < 0.0 || generator.hourly_noise < 0.0 || generator.load_noise < 0.0) {
        throw ConfigError("noise scales must be non-negative");
    }
    const ClassCounts c = class_counts(mix, static_cast<std::size_t>(n_days) * n_prosumers);
    if ((mix.benign > 0.0 && c.benign == 0) || (mix.theft1 > 0.0 && c.theft1 == 0) ||
        (mix.theft2 > 0.0 && c.theft2 == 0)) {
        throw ConfigError("mix yields zero records for a requested class at this dataset size");
    }
}

Season SynthConfig::season_of(std::int64_t day_index) const {
    if (!season_calendar.empty()) return season_calendar.at(static_cast<std::size_t>(day_index));
    const double doy = (static_cast<double>(day_index) + 0.5) * 365.0 / n_days;
    return season_of_day_of_year(static_cast<int>(std::floor(doy)));
}

Rng substream(std::uint64_t seed, std::uint64_t index, std::uint64_t purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      static_cast<std::uint32_t>(purpose)};
    return Rng(seq);
}

DayWeather draw_weather(Season season, Rng& rng, const GeneratorParams& params) {
    const SeasonProfile& p = params.profile(season);
    DayWeather w;
    w.season = season;
    w.clearness = uniform(rng, p.clearness);

    // Clear days swing further between night and afternoon.
    const double median = uniform(rng, p.temp_median);
    const double range = std::max(0.5, 3.0 + 9.0 * w.clearness + uniform(rng, {-1.0, 1.0}));
    const double upper_share = uniform(rng, {0.45, 0.60});
    w.temp.high = median + range * upper_share;
    w.temp.low = w.temp.high - range;
    w.temp.median = median;
    w.temp.std_dev = range * uniform(rng, {0.28, 0.36});
    w.temp.season = season;
    return w;
}

ProsumerProfile draw_profile(Rng& rng, const GeneratorParams& params) {
    ProsumerProfile p;
    p.capacity_kwp = uniform(rng, params.capacity_kwp);
    p.load_scale = uniform(rng, params.load_scale);
    return p;
}

HourlySeries clear_sky_shape(const SeasonProfile& p) {
    HourlySeries out;
    const std::size_t first = hour_index(p.first_light);
    const std::size_t last = hour_index(p.last_light);
    const double span = static_cast<double>(last - first + 1);
    for (std::size_t h = first; h <= last; ++h) {
        const double x = (static_cast<double>(h - first) + 0.5) / span;
        out[h] = p.peak_yield * std::sin(std::numbers::pi * x);
    }
    return out;
}

BenignDay gen_prosumer_day(const DayWeather& weather, const ProsumerProfile& profile, Rng& rng,
                           const GeneratorParams& params) {
    const SeasonProfile& sp = params.profile(weather.season);
    BenignDay day;
    day.temp = weather.temp;

    const HourlySeries shape = clear_sky_shape(sp);
    const double daily = profile.capacity_kwp * weather.clearness * lognormal_factor(rng, params.local_spread);
    for (std::size_t h = 0; h < kHoursPerDay; ++h) {
        const double noise = lognormal_factor(rng, params.hourly_noise);
        day.actual_gen[h] = shape[h] > 0.0 ? daily * shape[h] * noise : 0.0;
    }

    // Morning and evening household peaks over a base load, kWh per hour.
    for (std::size_t h = 0; h < kHoursPerDay; ++h) {
        const double x = static_cast<double>(h) + 0.5;
        const double morning = 0.55 * std::exp(-(x - 7.5) * (x - 7.5) / (2.0 * 1.5 * 1.5));
        const double evening = 0.90 * std::exp(-(x - 19.0) * (x - 19.0) / (2.0 * 2.0 * 2.0));
        const double base = 0.25 + morning + evening;
        day.load[h] = base * profile.load_scale * sp.load_factor * lognormal_factor(rng, params.load_noise);
    }
    return day;
}

BenignDay gen_benign_day(Season season, Rng& rng, const GeneratorParams& params) {
    const DayWeather weather = draw_weather(season, rng, params);
    const ProsumerProfile profile = draw_profile(rng, params);
    return gen_prosumer_day(weather, profile, rng, params);
}

HourlySeries theft1(const HourlySeries& gen, double alpha, Interval range) {
    if (!range.contains(alpha)) {
        throw std::invalid_argument("theft1: alpha " + std::to_string(alpha) + " outside allowed range");
    }
    HourlySeries out(std::vector<double>(gen.size()));
    for (std::size_t t = 0; t < gen.size(); ++t) out[t] = (1.0 + alpha) * gen[t];
    return out;
}

HourlySeries theft2(const HourlySeries& gen, std::span<const double> betas, Interval range) {
    if (betas.size() != gen.size()) {
        throw std::invalid_argument("theft2: expected " + std::to_string(gen.size()) + " betas, got " +
                                    std::to_string(betas.size()));
    }
    HourlySeries out(std::vector<double>(gen.size()));
    for (std::size_t t = 0; t < gen.size(); ++t) {
        if (!range.contains(betas[t])) {
            throw std::invalid_argument("theft2: beta at index " + std::to_string(t) + " outside allowed range");
        }
        out[t] = (1.0 + betas[t]) * gen[t];
    }
    return out;
}

HourlySeries aggregate_pattern(std::span<const HourlySeries> fleet) {
    if (fleet.empty()) throw DataError("empty fleet");
    HourlySeries out;
    for (const HourlySeries& s : fleet) {
        if (s.size() != kHoursPerDay) throw DataError("fleet series length " + std::to_string(s.size()) + " ≠ 24");
        for (std::size_t t = 0; t < kHoursPerDay; ++t) out[t] += s[t];
    }
    const double n = static_cast<double>(fleet.size());
    for (std::size_t t = 0; t < kHoursPerDay; ++t) out[t] /= n;
    return out;
}

int label_oracle(const HourlySeries& reported, const HourlySeries& actual, double epsilon,
                 double absolute_floor) {
    const std::size_t n = std::min(reported.size(), actual.size());
    for (std::size_t t = 0; t < n; ++t) {
        if (actual[t] <= 0.0) {
            if (reported[t] > absolute_floor) return 1;
            continue;
        }
        if (reported[t] / actual[t] > epsilon) return 1;
    }
    return 0;
}

ClassCounts class_counts(const Mix& mix, std::size_t n) {
    ClassCounts c;
    c.theft1 = static_cast<std::size_t>(std::llround(mix.theft1 * static_cast<double>(n)));
    c.theft2 = static_cast<std::size_t>(std::llround(mix.theft2 * static_cast<double>(n)));
    if (c.theft1 + c.theft2 > n) throw ConfigError("mix over-allocates attacked records");
    c.benign = n - c.theft1 - c.theft2;
    return c;
}

Split stratified_split(const std::vector<DayRecord>& records, const SplitFractions& fractions,
                       std::uint64_t seed) {
    Split split;
    for (AttackKind kind : {AttackKind::None, AttackKind::Theft1, AttackKind::Theft2}) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (records[i].attack_kind == kind) members.push_back(i);
        }
        Rng rng = substream(seed, static_cast<std::uint64_t>(kind), kPurposeSplit);
        std::shuffle(members.begin(), members.end(), rng);
        const double n = static_cast<double>(members.size());
        const auto n_train = static_cast<std::size_t>(std::llround(fractions.train * n));
        const auto n_val = std::min(members.size() - n_train,
                                    static_cast<std::size_t>(std::llround(fractions.val * n)));
        split.train.insert(split.train.end(), members.begin(), members.begin() + n_train);
        split.val.insert(split.val.end(), members.begin() + n_train, members.begin() + n_train + n_val);
        split.test.insert(split.test.end(), members.begin() + n_train + n_val, members.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.val.begin(), split.val.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

Dataset build_dataset(const SynthConfig& cfg) {
    cfg.validate();
    const auto n_pro = static_cast<std::size_t>(cfg.n_prosumers);
    const auto n_days = static_cast<std::size_t>(cfg.n_days);
    const std::size_t total = n_pro * n_days;

    std::vector<ProsumerProfile> profiles;
    profiles.reserve(n_pro);
    for (std::size_t n = 0; n < n_pro; ++n) {
        Rng rng = substream(cfg.seed, n, kPurposeProsumer);
        profiles.push_back(draw_profile(rng, cfg.generator));
    }

    // Record r = day * n_prosumers + prosumer.
    const ClassCounts counts = class_counts(cfg.mix, total);
    std::vector<AttackKind> kinds(total, AttackKind::None);
    std::fill_n(kinds.begin(), counts.theft1, AttackKind::Theft1);
    std::fill_n(kinds.begin() + static_cast<std::ptrdiff_t>(counts.theft1), counts.theft2, AttackKind::Theft2);
    {
        Rng rng = substream(cfg.seed, 0, kPurposeClasses);
        std::shuffle(kinds.begin(), kinds.end(), rng);
    }

    Dataset ds;
    ds.seed = cfg.seed;
    ds.epsilon = cfg.epsilon;
    ds.records.resize(total);

    std::vector<HourlySeries> loads(n_pro), actual(n_pro), reported(n_pro);
    std::vector<double> betas(kHoursPerDay);
    for (std::size_t d = 0; d < n_days; ++d) {
        Rng rng = substream(cfg.seed, d, kPurposeDay);
        const DayWeather weather = draw_weather(cfg.season_of(static_cast<std::int64_t>(d)), rng, cfg.generator);
        for (std::size_t n = 0; n < n_pro; ++n) {
            BenignDay day = gen_prosumer_day(weather, profiles[n], rng, cfg.generator);
            loads[n] = std::move(day.load);
            actual[n] = std::move(day.actual_gen);
        }
        for (std::size_t n = 0; n < n_pro; ++n) {
            switch (kinds[d * n_pro + n]) {
                case AttackKind::None:
                    reported[n] = actual[n];
                    break;
                case AttackKind::Theft1:
                    reported[n] = theft1(actual[n], uniform(rng, cfg.alpha_range), cfg.alpha_range);
                    break;
                case AttackKind::Theft2:
                    for (double& b : betas) b = uniform(rng, cfg.beta_range);
                    reported[n] = theft2(actual[n], betas, cfg.beta_range);
                    break;
            }
        }
        const HourlySeries load_pattern = aggregate_pattern(loads);
        const HourlySeries reported_pattern = aggregate_pattern(reported);
        const HourlySeries actual_pattern = aggregate_pattern(actual);

        for (std::size_t n = 0; n < n_pro; ++n) {
            DayRecord& r = ds.records[d * n_pro + n];
            r.prosumer_id = static_cast<std::int64_t>(n);
            r.day_index = static_cast<std::int64_t>(d);
            r.load = loads[n];
            r.actual_gen = actual[n];
            r.reported_gen = reported[n];
            r.load_pattern = load_pattern;
            r.reported_gen_pattern = reported_pattern;
            r.actual_gen_pattern = actual_pattern;
            r.temp = weather.temp;
            r.attack_kind = kinds[d * n_pro + n];
            r.label = r.attack_kind == AttackKind::None ? 0 : 1;
            if (label_oracle(r.reported_gen, r.actual_gen, cfg.epsilon) != r.label) {
                throw DataError("synthesized record (prosumer " + std::to_string(n) + ", day " +
                                std::to_string(d) + ") disagrees with the label oracle");
            }
        }
    }
    ds.split = stratified_split(ds.records, cfg.split, cfg.seed);
    return ds;
}

}  // namespace etd::synth
