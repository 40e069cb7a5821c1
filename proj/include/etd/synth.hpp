#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "etd/domain.hpp"

namespace etd::synth {

using Rng = std::mt19937_64;

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double v) const { return v >= lo && v <= hi; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

/// Fraction of records per class.
struct Mix {
    double benign = 0.50;
    double theft1 = 0.25;
    double theft2 = 0.25;

    friend bool operator==(const Mix&, const Mix&) = default;
};

struct SplitFractions {
    double train = 0.70;
    double val = 0.15;
    double test = 0.15;

    friend bool operator==(const SplitFractions&, const SplitFractions&) = default;
};

/// Per-season shape of a synthetic day.
struct SeasonProfile {
    // Lit hours, 1-based inclusive; generation is exactly zero outside.
    int first_light = 8;
    int last_light = 17;
    // Clear-sky peak output per installed kWp, kWh per hour.
    double peak_yield = 0.2;
    Interval clearness{0.3, 0.9};
    Interval temp_median{-3.0, 5.0};
    double load_factor = 1.0;

    friend bool operator==(const SeasonProfile&, const SeasonProfile&) = default;
};

struct GeneratorParams {
    // Indexed by Season.
    std::array<SeasonProfile, 4> seasons{{
        {6, 19, 0.55, {0.40, 1.00}, {5.0, 14.0}, 1.00},    // spring
        {5, 21, 0.70, {0.50, 1.00}, {14.0, 22.0}, 0.90},   // summer
        {7, 18, 0.40, {0.35, 0.95}, {6.0, 14.0}, 1.10},    // autumn
        {8, 17, 0.22, {0.25, 0.90}, {-3.0, 5.0}, 1.30},    // winter
    }};
    Interval capacity_kwp{4.6, 5.4};
    // Log-scale spread of a prosumer's daily output around the fleet weather.
    double local_spread = 0.03;
    // Log-scale spread of hourly generation noise.
    double hourly_noise = 0.03;
    Interval load_scale{0.8, 1.2};
    double load_noise = 0.10;

    const SeasonProfile& profile(Season s) const { return seasons[static_cast<std::size_t>(s)]; }

    friend bool operator==(const GeneratorParams&, const GeneratorParams&) = default;
};

struct SynthConfig {
    int n_prosumers = 20;
    int n_days = 50;
    Mix mix;
    Interval alpha_range{0.1, 0.8};
    Interval beta_range{0.1, 0.8};
    double epsilon = 1.05;
    std::uint64_t seed = 1;
    // Season per day index; empty spreads the days evenly over one calendar year.
    std::vector<Season> season_calendar;
    SplitFractions split;
    GeneratorParams generator;

    /// Throws ConfigError describing the first violated constraint.
    void validate() const;
    Season season_of(std::int64_t day_index) const;

    friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

inline constexpr double kAbsoluteFloor = 0.01;

/// Season of a day of the year (0-based, northern hemisphere meteorological seasons).
Season season_of_day_of_year(int doy);

/// Independent stream for (seed, index, purpose); identical regardless of call order.
Rng substream(std::uint64_t seed, std::uint64_t index, std::uint64_t purpose);

/// Weather shared by every prosumer of the fleet on one day.
struct DayWeather {
    Season season = Season::Spring;
    double clearness = 1.0;
    TempStats temp;
};

struct ProsumerProfile {
    double capacity_kwp = 5.0;
    double load_scale = 1.0;
};

struct BenignDay {
    HourlySeries actual_gen;
    HourlySeries load;
    TempStats temp;
};

DayWeather draw_weather(Season season, Rng& rng, const GeneratorParams& params = {});
ProsumerProfile draw_profile(Rng& rng, const GeneratorParams& params = {});

/// Clear-sky bell curve for one kWp, before weather and noise.
HourlySeries clear_sky_shape(const SeasonProfile& p);

BenignDay gen_prosumer_day(const DayWeather& weather, const ProsumerProfile& profile, Rng& rng,
                           const GeneratorParams& params = {});

/// One honest prosumer-day with freshly drawn weather and prosumer profile.
BenignDay gen_benign_day(Season season, Rng& rng, const GeneratorParams& params = {});

/// Fixed-percentage inflation: (1 + alpha) * gen(t). Throws std::invalid_argument for alpha outside range.
HourlySeries theft1(const HourlySeries& gen, double alpha, Interval range = {0.1, 0.8});

/// Per-hour inflation: (1 + beta_t) * gen(t). Throws std::invalid_argument on any beta outside range.
HourlySeries theft2(const HourlySeries& gen, std::span<const double> betas, Interval range = {0.1, 0.8});

/// Per-hour fleet mean. Throws DataError("empty fleet") for an empty fleet.
HourlySeries aggregate_pattern(std::span<const HourlySeries> fleet);

/// 1 when any hour's reported/actual ratio exceeds epsilon.
int label_oracle(const HourlySeries& reported, const HourlySeries& actual, double epsilon,
                 double absolute_floor = kAbsoluteFloor);

struct ClassCounts {
    std::size_t benign = 0;
    std::size_t theft1 = 0;
    std::size_t theft2 = 0;
};

/// Class sizes for a dataset of n records; benign takes the rounding remainder.
ClassCounts class_counts(const Mix& mix, std::size_t n);

/// Per-attack-kind stratified split, each class shuffled with a seed-derived stream.
Split stratified_split(const std::vector<DayRecord>& records, const SplitFractions& fractions,
                       std::uint64_t seed);

Dataset build_dataset(const SynthConfig& cfg);

}  // namespace etd::synth
