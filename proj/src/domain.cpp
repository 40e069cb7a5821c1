#include "etd/domain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace etd {

std::size_t hour_index(int hour) {
    if (hour < 1 || hour > static_cast<int>(kHoursPerDay)) {
        throw std::out_of_range("hour " + std::to_string(hour) + " outside 1..24");
    }
    return static_cast<std::size_t>(hour - 1);
}

int hour_of_index(std::size_t index) {
    if (index >= kHoursPerDay) {
        throw std::out_of_range("hour index " + std::to_string(index) + " outside 0..23");
    }
    return static_cast<int>(index) + 1;
}

std::string hour_label(std::size_t index) {
    const int h = hour_of_index(index);
    std::string s = "h";
    if (h < 10) s += '0';
    s += std::to_string(h);
    return s;
}

double HourlySeries::total() const {
    return std::accumulate(values_.begin(), values_.end(), 0.0);
}

std::string_view to_string(Season s) {
    switch (s) {
        case Season::Spring: return "spring";
        case Season::Summer: return "summer";
        case Season::Autumn: return "autumn";
        case Season::Winter: return "winter";
    }
    return "?";
}

std::optional<Season> parse_season(std::string_view s) {
    for (Season v : {Season::Spring, Season::Summer, Season::Autumn, Season::Winter}) {
        if (s == to_string(v)) return v;
    }
    return std::nullopt;
}

std::string_view to_string(AttackKind k) {
    switch (k) {
        case AttackKind::None: return "none";
        case AttackKind::Theft1: return "theft1";
        case AttackKind::Theft2: return "theft2";
    }
    return "?";
}

std::optional<AttackKind> parse_attack_kind(std::string_view s) {
    for (AttackKind v : {AttackKind::None, AttackKind::Theft1, AttackKind::Theft2}) {
        if (s == to_string(v)) return v;
    }
    return std::nullopt;
}

std::string_view to_string(SplitName s) {
    switch (s) {
        case SplitName::Train: return "train";
        case SplitName::Val: return "val";
        case SplitName::Test: return "test";
    }
    return "?";
}

std::optional<SplitName> parse_split(std::string_view s) {
    for (SplitName v : {SplitName::Train, SplitName::Val, SplitName::Test}) {
        if (s == to_string(v)) return v;
    }
    return std::nullopt;
}

namespace {

void check_series(std::string_view name, const HourlySeries& s, bool non_negative,
                  std::vector<std::string>& out) {
    if (s.size() != kHoursPerDay) {
        out.push_back(std::string(name) + ": series length " + std::to_string(s.size()) + " ≠ 24");
    }
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!std::isfinite(s[i])) {
            out.push_back(std::string(name) + ": non-finite value at index " + std::to_string(i));
            return;
        }
        if (non_negative && s[i] < 0.0) {
            out.push_back(std::string(name) + ": negative generation at index " + std::to_string(i));
            return;
        }
    }
}

}  // namespace

std::vector<std::string> validate_record(const DayRecord& r) {
    std::vector<std::string> out;
    check_series("load", r.load, false, out);
    check_series("actual_gen", r.actual_gen, true, out);
    check_series("reported_gen", r.reported_gen, true, out);
    check_series("load_pattern", r.load_pattern, false, out);
    check_series("reported_gen_pattern", r.reported_gen_pattern, true, out);
    check_series("actual_gen_pattern", r.actual_gen_pattern, true, out);

    const TempStats& t = r.temp;
    if (!std::isfinite(t.high) || !std::isfinite(t.low) || !std::isfinite(t.median) ||
        !std::isfinite(t.std_dev)) {
        out.push_back("temperature: non-finite statistic");
    } else {
        if (!(t.low <= t.median && t.median <= t.high)) out.push_back("temperature: low ≤ median ≤ high violated");
        if (t.std_dev < 0.0) out.push_back("temperature: negative std_dev");
    }

    if (r.label != 0 && r.label != 1) {
        out.push_back("label " + std::to_string(r.label) + " not in {0,1}");
    } else if ((r.label == 1) != (r.attack_kind != AttackKind::None)) {
        out.push_back("label/attack mismatch");
    }

    if (r.attack_kind != AttackKind::None && r.reported_gen.size() == r.actual_gen.size()) {
        for (std::size_t i = 0; i < r.actual_gen.size(); ++i) {
            if (r.reported_gen[i] < r.actual_gen[i]) {
                out.push_back("attacked record reports less than actual at index " + std::to_string(i));
                break;
            }
        }
    }
    return out;
}

const std::vector<std::size_t>& Split::get(SplitName s) const {
    switch (s) {
        case SplitName::Train: return train;
        case SplitName::Val: return val;
        case SplitName::Test: return test;
    }
    throw std::invalid_argument("unknown split");
}

std::vector<DayRecord> Dataset::subset(SplitName s) const {
    std::vector<DayRecord> out;
    const auto& idx = split.get(s);
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(records.at(i));
    return out;
}

bool split_is_partition(const Split& split, std::size_t n_records) {
    std::vector<int> seen(n_records, 0);
    for (const auto* part : {&split.train, &split.val, &split.test}) {
        for (std::size_t i : *part) {
            if (i >= n_records || seen[i]++ != 0) return false;
        }
    }
    return std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; });
}

}  // namespace etd
