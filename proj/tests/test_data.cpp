#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "ddup/csv.hpp"
#include "ddup/datasets.hpp"
#include "ddup/stream.hpp"
#include "test_support.hpp"

using namespace ddup;
using namespace ddup::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("ddup_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<double> sorted_column(const Table& t, std::size_t c) {
  std::vector<double> v;
  for (std::size_t r = 0; r < t.row_count(); ++r) v.push_back(t.value(r, c));
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST(Schema, RejectsBadDefinitions) {
  EXPECT_THROW(Schema({ColumnSpec::numeric("a", 0, 1), ColumnSpec::numeric("a", 0, 1)}), Error);
  EXPECT_THROW(Schema({ColumnSpec::categorical("a", {})}), Error);
  EXPECT_THROW(Schema({ColumnSpec::categorical("a", {"x", "x"})}), Error);
  EXPECT_THROW(Schema({ColumnSpec::numeric("a", 2, 1)}), Error);
}

TEST(Schema, JsonRoundTrip) {
  const auto s = datasets::census_schema();
  EXPECT_EQ(Schema::from_json(s.to_json()), s);
  EXPECT_EQ(s.size(), 13u);
  EXPECT_TRUE(s[s.index_of("income")].is_categorical());
  EXPECT_THROW(s.index_of("nope"), Error);
}

TEST(Table, ValidatesDomainsAndShapes) {
  const auto s = three_cat_schema();
  EXPECT_THROW(Table(s, {Column::of_codes({0}), Column::of_codes({0}), Column::of_codes({3})}), Error);
  EXPECT_THROW(Table(s, {Column::of_codes({0}), Column::of_codes({0, 1}), Column::of_codes({0})}), Error);
  EXPECT_THROW(Table(s, {Column::of_codes({0}), Column::of_codes({0})}), Error);
  const Schema num({ColumnSpec::numeric("y", 0, 1)});
  EXPECT_THROW(Table(num, {Column::of_reals({1.5})}), Error);
  EXPECT_THROW(Table(num, {Column::of_codes({0})}), Error);
}

TEST(Table, TakeConcatAndSampling) {
  const auto t = three_cat_table(50, 3);
  const std::vector<std::size_t> rows{4, 2, 2};
  const auto sub = t.take(rows);
  ASSERT_EQ(sub.row_count(), 3u);
  EXPECT_EQ(sub.row(0), t.row(4));
  EXPECT_EQ(sub.row(2), t.row(2));
  const auto both = Table::concat(t, sub);
  EXPECT_EQ(both.row_count(), 53u);
  EXPECT_EQ(both.row(51), t.row(2));

  const auto perm = seeded_permutation(50, 7);
  auto sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, iota_rows(50));
  EXPECT_EQ(perm, seeded_permutation(50, 7));
  EXPECT_EQ(sample_rows(t, 50, 1).row_count(), 50u);
  EXPECT_THROW(sample_rows(t, 51, 1), Error);
  EXPECT_EQ(bootstrap_rows(t, 200, 1).row_count(), 200u);
}

TEST(Csv, RoundTripKeepsValues) {
  const auto dir = scratch("csv");
  const auto t = datasets::make_census_like(300, 4);
  write_table((dir / "t.csv").string(), t);
  const auto back = load_table((dir / "t.csv").string(), t.schema());
  EXPECT_EQ(back.rejected, 0u);
  ASSERT_EQ(back.table.row_count(), t.row_count());
  for (std::size_t r = 0; r < t.row_count(); r += 17)
    for (std::size_t c = 0; c < t.column_count(); ++c) EXPECT_NEAR(back.table.value(r, c), t.value(r, c), 1e-9);
}

TEST(Csv, HeaderOrderQuotingAndRejections) {
  const auto dir = scratch("csv2");
  const Schema s({ColumnSpec::categorical("kind", {"a b", "c,d"}), ColumnSpec::numeric("v", 0, 10)});
  {
    std::ofstream f(dir / "ok.csv");
    f << "v,kind\n1.5,a b\n2,\"c,d\"\n11,a b\n3,zzz\n";
  }
  const auto r = load_table((dir / "ok.csv").string(), s);
  ASSERT_EQ(r.table.row_count(), 2u);
  EXPECT_EQ(r.rejected, 2u);
  EXPECT_EQ(r.table.codes(0)[1], 1);
  EXPECT_DOUBLE_EQ(r.table.reals(1)[0], 1.5);

  std::ofstream(dir / "extra.csv") << "v,kind,other\n1,a b,3\n";
  EXPECT_THROW(load_table((dir / "extra.csv").string(), s), Error);
  std::ofstream(dir / "missing.csv") << "v\n1\n";
  EXPECT_THROW(load_table((dir / "missing.csv").string(), s), Error);
  std::ofstream(dir / "nan.csv") << "v,kind\nabc,a b\n";
  EXPECT_THROW(load_table((dir / "nan.csv").string(), s), Error);
  EXPECT_THROW(load_table((dir / "absent.csv").string(), s), Error);
  EXPECT_EQ(split_delimited("x,\"y,z\",", ','), (std::vector<std::string>{"x", "y,z", ""}));
}

TEST(Drift, SortingKeepsMarginalsAndBreaksTheJoint) {
  const auto t = datasets::make_census_like(2000, 5);
  const auto d = synthesize_drift(t, {}, 3);
  ASSERT_EQ(d.row_count(), t.row_count());
  for (std::size_t c = 0; c < t.column_count(); ++c) EXPECT_EQ(sorted_column(d, c), sorted_column(t, c));
  const auto sorted = sort_columns(t, {"age", "income"});
  const auto age = t.schema().index_of("age");
  EXPECT_TRUE(std::is_sorted(sorted.reals(age).begin(), sorted.reals(age).end()));
  const auto edu = t.schema().index_of("education");
  for (std::size_t r = 0; r < t.row_count(); ++r) ASSERT_EQ(sorted.value(r, edu), t.value(r, edu));
}

TEST(Stream, BatchSizesAndDeterminism) {
  const auto t = datasets::make_census_like(1000, 6);
  const auto s = make_update_stream(t, 0.2, 3, true, 9);
  ASSERT_EQ(s.size(), 3u);
  std::size_t total = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(s[i].t, static_cast<int>(i + 1));
    EXPECT_GE(s[i].data.row_count(), 66u);
    EXPECT_LE(s[i].data.row_count(), 67u);
    total += s[i].data.row_count();
  }
  EXPECT_EQ(total, 200u);
  const auto again = make_update_stream(t, 0.2, 3, true, 9);
  for (std::size_t r = 0; r < s[1].data.row_count(); r += 7) EXPECT_EQ(again[1].data.row(r), s[1].data.row(r));
  EXPECT_THROW(make_update_stream(t, 0.0, 1, true, 1), Error);
  EXPECT_THROW(make_update_stream(t, 0.001, 5, true, 1), Error);
}

TEST(Stream, ManifestRoundTrip) {
  const auto dir = scratch("stream");
  const auto t = three_cat_table(100, 7);
  const auto s = make_update_stream(t, 0.3, 2, false, 4);
  write_stream(dir.string(), s);
  const auto back = read_stream((dir / "manifest.json").string(), t.schema());
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].t, 2);
  EXPECT_EQ(back[1].data.row_count(), s[1].data.row_count());
  EXPECT_EQ(back[0].data.row(3), s[0].data.row(3));
}

TEST(Stream, SamplePairSizes) {
  const auto h = three_cat_table(100, 1), b = three_cat_table(40, 2);
  const auto p = draw_sample_pair(h, b, 30, 10, 3);
  EXPECT_EQ(p.s_old.row_count(), 30u);
  EXPECT_EQ(p.s_new.row_count(), 10u);
  EXPECT_THROW(draw_sample_pair(h, Table(h.schema()), 1, 1, 1), Error);
}

TEST(JoinDelta, MatchesAHandJoin) {
  const Schema fact_s({ColumnSpec::categorical("fk", {"d0", "d1"}), ColumnSpec::numeric("amount", 0, 100)});
  const Schema dim_s({ColumnSpec::categorical("id", {"d0", "d1"}), ColumnSpec::categorical("region", {"n", "s"})});
  const Schema joined_s({ColumnSpec::numeric("amount", 0, 100), ColumnSpec::categorical("region", {"n", "s"})});
  const auto dim = table_of(dim_s, {{0, 1}, {1, 0}});
  const auto delta = table_of(fact_s, {{1, 5}, {0, 7}, {1, 9}});
  const auto out = materialize_join_delta(Table(joined_s), {dim}, delta, {{"fk", 0, "id"}});
  ASSERT_EQ(out.row_count(), 3u);
  EXPECT_EQ(out.row(0), (std::vector<double>{5, 0}));
  EXPECT_EQ(out.row(1), (std::vector<double>{7, 1}));
  EXPECT_EQ(out.row(2), (std::vector<double>{9, 0}));
  EXPECT_THROW(materialize_join_delta(Table(joined_s), {dim}, delta, {{"nope", 0, "id"}}), Error);
  const Schema wrong({ColumnSpec::numeric("missing", 0, 1)});
  EXPECT_THROW(materialize_join_delta(Table(wrong), {dim}, delta, {{"fk", 0, "id"}}), Error);
}

TEST(Datasets, CensusShapeAndDeterminism) {
  const auto a = datasets::make_census_like(500, 3), b = datasets::make_census_like(500, 3);
  EXPECT_EQ(a.row_count(), 500u);
  EXPECT_EQ(a.column_count(), 13u);
  for (std::size_t r = 0; r < 500; r += 31) EXPECT_EQ(a.row(r), b.row(r));
}

TEST(Datasets, MogPeaksAndRanges) {
  const auto spec = datasets::mog_base();
  const auto t = datasets::make_mog(spec, 1);
  EXPECT_EQ(t.row_count(), 10000u);
  const auto peaks = datasets::mog_peaks(spec, 3);
  ASSERT_EQ(peaks.size(), 5u);
  EXPECT_NEAR(peaks[0], -8.0 + 0.3, 1e-12);
  EXPECT_EQ(datasets::mog_peaks(datasets::mog_shifted(), 0), (std::vector<double>{-6.0, 6.0}));
  for (double y : t.reals(1)) {
    EXPECT_GE(y, spec.y_min);
    EXPECT_LE(y, spec.y_max);
  }
}
