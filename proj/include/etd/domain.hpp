#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace etd {

/// Raised for malformed configuration or command-line usage.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised for malformed or inconsistent input data.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a computation produces a non-finite value.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kHoursPerDay = 24;

/// Storage index (0..23) for a 1-based hour of day (1..24).
std::size_t hour_index(int hour);

/// 1-based hour of day for a storage index.
int hour_of_index(std::size_t index);

/// Column suffix for a storage index, "h01".."h24".
std::string hour_label(std::size_t index);

/// Hourly energy values in kWh for one day.
///
/// Holds any number of values so that malformed input can be represented and
/// reported by validate_record(); everything produced by this library has
/// exactly kHoursPerDay entries.
class HourlySeries {
public:
    HourlySeries() : values_(kHoursPerDay, 0.0) {}
    explicit HourlySeries(std::vector<double> values) : values_(std::move(values)) {}

    static HourlySeries constant(double v) { return HourlySeries(std::vector<double>(kHoursPerDay, v)); }

    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double at_hour(int hour) const { return values_.at(hour_index(hour)); }
    double total() const;

    const std::vector<double>& values() const { return values_; }
    auto begin() const { return values_.begin(); }
    auto end() const { return values_.end(); }

    friend bool operator==(const HourlySeries&, const HourlySeries&) = default;

private:
    std::vector<double> values_;
};

enum class Season : std::uint8_t { Spring = 0, Summer = 1, Autumn = 2, Winter = 3 };

std::string_view to_string(Season s);
std::optional<Season> parse_season(std::string_view s);

struct TempStats {
    double high = 0.0;
    double low = 0.0;
    double median = 0.0;
    double std_dev = 0.0;
    Season season = Season::Spring;

    friend bool operator==(const TempStats&, const TempStats&) = default;
};

enum class AttackKind : std::uint8_t { None = 0, Theft1 = 1, Theft2 = 2 };

std::string_view to_string(AttackKind k);
std::optional<AttackKind> parse_attack_kind(std::string_view s);

/// One prosumer-day.
struct DayRecord {
    std::int64_t prosumer_id = 0;
    std::int64_t day_index = 0;
    HourlySeries load;
    HourlySeries actual_gen;
    HourlySeries reported_gen;
    HourlySeries load_pattern;
    HourlySeries reported_gen_pattern;
    // Fleet mean of actual generation; kept for completeness, never a model input.
    HourlySeries actual_gen_pattern;
    TempStats temp;
    int label = 0;
    AttackKind attack_kind = AttackKind::None;

    friend bool operator==(const DayRecord&, const DayRecord&) = default;
};

/// Human-readable invariant violations; empty when the record is well formed.
std::vector<std::string> validate_record(const DayRecord& r);

enum class SplitName : std::uint8_t { Train, Val, Test };

std::string_view to_string(SplitName s);
std::optional<SplitName> parse_split(std::string_view s);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;

    const std::vector<std::size_t>& get(SplitName s) const;

    friend bool operator==(const Split&, const Split&) = default;
};

struct Dataset {
    std::vector<DayRecord> records;
    Split split;
    std::uint64_t seed = 0;
    double epsilon = 1.05;

    std::vector<DayRecord> subset(SplitName s) const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Checks that the split lists are disjoint and cover every record exactly once.
bool split_is_partition(const Split& split, std::size_t n_records);

}  // namespace etd
