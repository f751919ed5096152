#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <map>

#include "incidur/domain.hpp"
#include "incidur/error.hpp"
#include "incidur/preprocess.hpp"
#include "support.hpp"

using namespace incidur;
using incidur::testing::basic_record;

TEST(BandOf, Boundaries) {
  EXPECT_EQ(band_of(29.0), Band::Short);
  EXPECT_EQ(band_of(30.0), Band::Medium);
  EXPECT_EQ(band_of(120.0), Band::Medium);
  EXPECT_EQ(band_of(121.0), Band::Long);
  EXPECT_EQ(band_of(0.5), Band::Short);
}

TEST(BandOf, RejectsNonPositive) {
  EXPECT_THROW(band_of(0.0), InvalidArgument);
  EXPECT_THROW(band_of(-3.0), InvalidArgument);
  EXPECT_THROW(band_of(std::nan("")), InvalidArgument);
}

TEST(BandOf, Monotone) {
  Band prev = band_of(0.01);
  for (double d = 0.01; d < 400.0; d += 0.37) {
    const Band b = band_of(d);
    EXPECT_LE(static_cast<int>(prev), static_cast<int>(b));
    prev = b;
  }
}

TEST(Temporal, Examples) {
  EXPECT_EQ(derive_temporal({2018, 1, 15, 8, 0, 0}), (Temporal{TimeOfDay::morning, 0, 1, 2018}));
  EXPECT_EQ(derive_temporal({2019, 7, 4, 23, 30, 0}), (Temporal{TimeOfDay::night, 3, 3, 2019}));
  EXPECT_EQ(derive_temporal({2017, 10, 1, 13, 0, 0}), (Temporal{TimeOfDay::afternoon, 6, 4, 2017}));
}

TEST(Temporal, EveryHourHasABin) {
  for (int h = 0; h < 24; ++h) {
    const auto tod = time_of_day(h);
    EXPECT_LT(static_cast<int>(tod), 6);
  }
  EXPECT_EQ(time_of_day(7), TimeOfDay::morning);
  EXPECT_EQ(time_of_day(22), TimeOfDay::night);
  EXPECT_EQ(time_of_day(5), TimeOfDay::night);
}

TEST(Temporal, SeasonsByMonth) {
  const int expected[12] = {1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 4, 1};
  for (int m = 1; m <= 12; ++m) EXPECT_EQ(derive_temporal({2020, m, 1, 12, 0, 0}).season, expected[m - 1]) << m;
}

TEST(Iso8601, RoundTrip) {
  const auto t = parse_iso8601("2019-07-04T23:30:15");
  ASSERT_TRUE(t);
  EXPECT_EQ(*t, (CivilTime{2019, 7, 4, 23, 30, 15}));
  EXPECT_EQ(format_iso8601(*t), "2019-07-04T23:30:15");
  EXPECT_EQ(parse_iso8601("2019-07-04 23:30"), (CivilTime{2019, 7, 4, 23, 30, 0}));
  EXPECT_FALSE(parse_iso8601("2019-02-30T01:00"));
  EXPECT_FALSE(parse_iso8601("yesterday"));
}

TEST(AadtBin, TableEdges) {
  EXPECT_EQ(aadt_bin_of(7999), 1);
  EXPECT_EQ(aadt_bin_of(8000), 2);
  EXPECT_EQ(aadt_bin_of(12000), 3);
  EXPECT_EQ(aadt_bin_of(24000), 4);
  EXPECT_EQ(aadt_bin_of(48001), 5);
}

TEST(FeatureSets, Fs1IsSubsetOfFs2) {
  const auto fs1 = FeatureSet::fs1();
  const auto fs2 = FeatureSet::fs2();
  for (const auto& c : fs1.columns) EXPECT_NE(std::find(fs2.columns.begin(), fs2.columns.end(), c), fs2.columns.end());
  EXPECT_GT(fs2.columns.size(), fs1.columns.size());
  EXPECT_EQ(std::find(fs1.columns.begin(), fs1.columns.end(), "responders"), fs1.columns.end());
}

TEST(Encode, ResponderColumns) {
  auto r = basic_record();
  r.responders = ResponderSet{Responder::police, Responder::tow};
  const std::vector<IncidentRecord> records{r};
  const FeatureMatrix m = encode(records, FeatureSet{FeatureSetKind::Custom, {"responders"}});
  ASSERT_EQ(m.cols(), 6);
  const char* names[] = {"resp_police", "resp_tow", "resp_dot", "resp_dps", "resp_ems", "resp_hh"};
  const double expected[] = {1, 1, 0, 0, 0, 0};
  for (int j = 0; j < 6; ++j) {
    EXPECT_EQ(m.columns[static_cast<std::size_t>(j)].name, names[j]);
    EXPECT_EQ(m.values(0, j), expected[j]);
  }
}

TEST(Encode, EmptyFeatureSetRejected) {
  const std::vector<IncidentRecord> records{basic_record()};
  EXPECT_THROW(encode(records, FeatureSet{}), EncodingError);
  EXPECT_THROW(encode(std::vector<IncidentRecord>{}, FeatureSet::fs1()), EncodingError);
}

TEST(Encode, OneHotWidthFollowsObservedCategories) {
  std::vector<IncidentRecord> records(3, basic_record());
  records[0].event_type = EventType::crash1;
  records[1].event_type = EventType::debris;
  records[2].event_type = EventType::crash1;
  const FeatureMatrix m = encode(records, FeatureSet{FeatureSetKind::Custom, {"event_type"}});
  ASSERT_EQ(m.cols(), 2);
  EXPECT_EQ(m.columns[0].name, "event_type=crash1");
  EXPECT_EQ(m.columns[1].name, "event_type=debris");
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_EQ(m.values.row(i).sum(), 1.0);
  EXPECT_EQ(m.values(1, 1), 1.0);
}

TEST(Encode, UnseenCategoryBecomesMissing) {
  std::vector<IncidentRecord> train(2, basic_record());
  train[1].event_type = EventType::crash1;
  const auto schema = EncoderSchema::fit(train, FeatureSet{FeatureSetKind::Custom, {"event_type"}});
  auto odd = basic_record();
  odd.event_type = EventType::debris;
  const FeatureMatrix m = encode(std::vector<IncidentRecord>{odd}, schema);
  EXPECT_TRUE(std::isnan(m.values(0, 0)));
  EXPECT_TRUE(std::isnan(m.values(0, 1)));
}

TEST(Encode, OutOfRangeValueNamesFieldAndRow) {
  std::vector<IncidentRecord> records(3, basic_record());
  records[2].aadt_bin = 9;
  try {
    encode(records, FeatureSet::fs2());
    FAIL() << "expected EncodingError";
  } catch (const EncodingError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("aadt_bin"), std::string::npos) << msg;
    EXPECT_NE(msg.find('2'), std::string::npos) << msg;
  }
}

TEST(Encode, DeterministicAndDecodable) {
  const auto data = incidur::testing::small_dataset(300, 5);
  const FeatureMatrix a = encode(data.records, FeatureSet::fs2());
  const FeatureMatrix b = encode(data.records, FeatureSet::fs2());
  EXPECT_EQ(a.columns, b.columns);
  ASSERT_EQ(a.values.size(), b.values.size());
  EXPECT_EQ(std::memcmp(a.values.data(), b.values.data(), sizeof(double) * static_cast<std::size_t>(a.values.size())), 0);

  const auto events = decode_onehot(a, "event_type");
  const auto dirs = decode_onehot(a, "direction");
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    EXPECT_EQ(events[i], to_string(data.records[i].event_type));
    EXPECT_EQ(dirs[i], to_string(data.records[i].direction));
  }
}

TEST(Encode, OneHotGroupsSumToOneAfterImputation) {
  const auto data = incidur::testing::small_dataset(300, 6);
  const FeatureMatrix m = impute(encode(data.records, FeatureSet::fs2()));
  std::map<std::string, std::vector<Eigen::Index>> groups;
  for (std::size_t j = 0; j < m.columns.size(); ++j)
    if (m.columns[j].kind == ColumnKind::onehot) groups[m.columns[j].source].push_back(static_cast<Eigen::Index>(j));
  ASSERT_FALSE(groups.empty());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (const auto& [source, cols] : groups) {
      double sum = 0.0;
      for (auto j : cols) sum += m.values(i, j);
      EXPECT_EQ(sum, 1.0) << source;
    }
  }
}

TEST(Validate, ListsEveryBadField) {
  auto r = basic_record();
  r.duration_minutes = -1.0;
  r.lanes = 0;
  try {
    validate(r);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("duration_minutes"), std::string::npos) << msg;
    EXPECT_NE(msg.find("lanes"), std::string::npos) << msg;
  }
  EXPECT_NO_THROW(validate(basic_record()));
}

TEST(CheckSchema, NamesMissingAndExtra) {
  const std::vector<std::string> expected{"a", "b", "c"};
  const std::vector<std::string> actual{"a", "c", "d"};
  try {
    check_schema(expected, actual);
    FAIL();
  } catch (const SchemaMismatch& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("b"), std::string::npos);
    EXPECT_NE(msg.find("d"), std::string::npos);
  }
}

TEST(Enums, ParseRoundTrip) {
  for (auto name : enum_names<DetectionMethod>()) EXPECT_EQ(to_string(*parse_enum<DetectionMethod>(name)), name);
  EXPECT_FALSE(parse_enum<EventType>("crash9"));
  EXPECT_EQ(enum_names<DetectionMethod>().size(), 6u);
}
