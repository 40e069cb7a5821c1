#include <gtest/gtest.h>

#include <cmath>

#include "etd/domain.hpp"

using namespace etd;

namespace {

DayRecord benign_record() {
    DayRecord r;
    for (std::size_t h = 7; h < 17; ++h) {
        r.actual_gen[h] = 0.5 * static_cast<double>(h - 6);
        r.reported_gen[h] = r.actual_gen[h];
    }
    r.load = HourlySeries::constant(0.8);
    r.load_pattern = r.load;
    r.reported_gen_pattern = r.reported_gen;
    r.actual_gen_pattern = r.actual_gen;
    r.temp = {12.0, 4.0, 8.0, 2.5, Season::Autumn};
    return r;
}

}  // namespace

TEST(Hours, OneBasedConversionRoundTrips) {
    for (int h = 1; h <= 24; ++h) EXPECT_EQ(hour_of_index(hour_index(h)), h);
    EXPECT_EQ(hour_index(1), 0u);
    EXPECT_EQ(hour_index(24), 23u);
    EXPECT_THROW(hour_index(0), std::out_of_range);
    EXPECT_THROW(hour_index(25), std::out_of_range);
    EXPECT_EQ(hour_label(0), "h01");
    EXPECT_EQ(hour_label(23), "h24");
}

TEST(HourlySeries, DefaultsToTwentyFourZeros) {
    HourlySeries s;
    EXPECT_EQ(s.size(), kHoursPerDay);
    EXPECT_EQ(s.total(), 0.0);
    EXPECT_EQ(HourlySeries::constant(2.0).total(), 48.0);
    EXPECT_EQ(HourlySeries::constant(2.0).at_hour(24), 2.0);
}

TEST(ValidateRecord, WellFormedBenignRecordHasNoViolations) {
    EXPECT_TRUE(validate_record(benign_record()).empty());
}

TEST(ValidateRecord, LabelWithoutAttackIsAMismatch) {
    DayRecord r = benign_record();
    r.label = 1;
    const auto v = validate_record(r);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0], "label/attack mismatch");
}

TEST(ValidateRecord, ShortSeriesIsReported) {
    DayRecord r = benign_record();
    r.load = HourlySeries(std::vector<double>(23, 1.0));
    const auto v = validate_record(r);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_NE(v[0].find("series length 23 ≠ 24"), std::string::npos);
}

TEST(ValidateRecord, TemperatureOrderingAndSpread) {
    DayRecord r = benign_record();
    r.temp.median = 20.0;
    EXPECT_EQ(validate_record(r).size(), 1u);
    r = benign_record();
    r.temp.std_dev = -0.1;
    EXPECT_EQ(validate_record(r).size(), 1u);
}

TEST(ValidateRecord, GenerationMustBeNonNegativeAndFinite) {
    DayRecord r = benign_record();
    r.actual_gen[3] = -0.5;
    r.reported_gen[3] = -0.5;
    EXPECT_FALSE(validate_record(r).empty());
    r = benign_record();
    r.load[0] = std::nan("");
    EXPECT_FALSE(validate_record(r).empty());
}

TEST(ValidateRecord, AttackedRecordCannotUnderReport) {
    DayRecord r = benign_record();
    r.label = 1;
    r.attack_kind = AttackKind::Theft1;
    EXPECT_TRUE(validate_record(r).empty());
    r.reported_gen[10] = r.actual_gen[10] - 0.1;
    EXPECT_EQ(validate_record(r).size(), 1u);
}

TEST(Enums, StringFormsRoundTrip) {
    for (Season s : {Season::Spring, Season::Summer, Season::Autumn, Season::Winter}) {
        EXPECT_EQ(parse_season(to_string(s)), s);
    }
    for (AttackKind k : {AttackKind::None, AttackKind::Theft1, AttackKind::Theft2}) {
        EXPECT_EQ(parse_attack_kind(to_string(k)), k);
    }
    for (SplitName s : {SplitName::Train, SplitName::Val, SplitName::Test}) EXPECT_EQ(parse_split(to_string(s)), s);
    EXPECT_FALSE(parse_season("monsoon"));
    EXPECT_FALSE(parse_split("dev"));
}

TEST(Split, PartitionCheck) {
    Split s{{0, 2}, {1}, {3}};
    EXPECT_TRUE(split_is_partition(s, 4));
    EXPECT_FALSE(split_is_partition(s, 5));
    s.test.push_back(2);
    EXPECT_FALSE(split_is_partition(s, 4));
}

TEST(Dataset, SubsetFollowsSplitOrder) {
    Dataset d;
    for (int i = 0; i < 4; ++i) {
        DayRecord r = benign_record();
        r.prosumer_id = i;
        d.records.push_back(r);
    }
    d.split = {{3, 1}, {0}, {2}};
    const auto train = d.subset(SplitName::Train);
    ASSERT_EQ(train.size(), 2u);
    EXPECT_EQ(train[0].prosumer_id, 3);
    EXPECT_EQ(train[1].prosumer_id, 1);
}
