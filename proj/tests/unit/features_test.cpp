#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "forge/error.hpp"
#include "forge/features.hpp"
#include "forge/nodes.hpp"
#include "test_helpers.hpp"

using namespace forge;

namespace {

std::size_t index_of(std::string_view name) {
  const auto& m = feature_manifest();
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m.features[i].name == name) return i;
  ADD_FAILURE() << "no feature " << name;
  return 0;
}

RatesTable flat_rates(Day from, Day to, double price) {
  RatesTable t;
  for (Day d = from; d <= to; ++d) t.set(d, price);
  return t;
}

std::vector<Day> block_days(std::size_t n, Day start = 18'000) {
  std::vector<Day> days(n);
  for (std::size_t i = 0; i < n; ++i) days[i] = start + static_cast<Day>(i / 10);
  return days;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::ConfigInvalid;
}

// Sorting-based percentile, written independently of the library.
double oracle_percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  double rank = q * static_cast<double>(v.size() - 1);
  auto i = static_cast<std::size_t>(rank);
  if (i + 1 >= v.size()) return v.back();
  return v[i] * (1 - (rank - static_cast<double>(i))) + v[i + 1] * (rank - static_cast<double>(i));
}

}  // namespace

TEST(Age, InboundOnly) {
  NodeRecord n;
  n.first_transaction_in = 100;
  n.last_transaction_in = 250;
  EXPECT_EQ(compute_age(n), 150u);
}

TEST(Age, SingleTransfer) {
  NodeRecord n;
  n.first_transaction_out = 42;
  n.last_transaction_out = 42;
  EXPECT_EQ(compute_age(n), 0u);
}

TEST(Age, BothSides) {
  NodeRecord n;
  n.first_transaction_in = 100;
  n.last_transaction_in = 120;
  n.first_transaction_out = 90;
  n.last_transaction_out = 300;
  EXPECT_EQ(compute_age(n), 210u);
}

TEST(Age, NoActivity) {
  NodeRecord n;
  EXPECT_EQ(code_of([&] { compute_age(n); }), ErrorCode::NoActivity);
}

TEST(Derive, AverageReceived) {
  NodeRecord n;
  n.total_transaction_in = 2;
  n.total_received = 700;
  n.min_received = 300;
  n.max_received = 400;
  n.first_transaction_in = 1;
  n.last_transaction_in = 5;
  auto v = derive_features(n, flat_rates(18'000, 18'010, 20'000), block_days(20));
  EXPECT_DOUBLE_EQ(v[index_of("avg_received")], 350.0);
  EXPECT_DOUBLE_EQ(v[index_of("age")], 4.0);
  EXPECT_DOUBLE_EQ(v[index_of("total_transaction_in_rate")], 0.5);
  EXPECT_TRUE(is_missing(v[index_of("avg_sent")]));
  EXPECT_TRUE(is_missing(v[index_of("min_sent")]));
}

TEST(Derive, DegreeRatio) {
  NodeRecord n;
  n.degree_out = 4;
  n.degree_in = 2;
  n.degree = 6;
  auto v = derive_features(n, {}, {});
  EXPECT_DOUBLE_EQ(v[index_of("degree_out_in_ratio")], 2.0);
  n.degree_in = 0;
  EXPECT_TRUE(is_missing(derive_features(n, {}, {})[index_of("degree_out_in_ratio")]));
}

TEST(Derive, ConstantRateUsd) {
  auto rates = flat_rates(18'000, 18'010, 20'000);
  EXPECT_DOUBLE_EQ(rates.median_satoshi_price(18'000, 18'010), 0.0002);
  NodeRecord n;
  n.total_transaction_out = 1;
  n.total_sent = 1e8;
  n.min_sent = n.max_sent = 1e8;
  n.first_transaction_out = n.last_transaction_out = 3;
  auto v = derive_features(n, rates, block_days(20));
  EXPECT_NEAR(v[index_of("total_sent_usd")], 20'000.0, 1e-9);
  EXPECT_NEAR(v[index_of("avg_sent_usd")], 20'000.0, 1e-9);
}

TEST(Derive, MissingRates) {
  NodeRecord n;
  n.total_transaction_out = 1;
  n.total_sent = 5;
  n.min_sent = n.max_sent = 5;
  n.first_transaction_out = n.last_transaction_out = 3;
  auto rates = flat_rates(17'000, 17'005, 1000);
  EXPECT_EQ(code_of([&] { derive_features(n, rates, block_days(20)); }), ErrorCode::MissingRates);
}

TEST(Derive, InactiveNodeHasNoAge) {
  NodeRecord n;
  auto v = derive_features(n, {}, {});
  ASSERT_EQ(v.size(), feature_manifest().size());
  EXPECT_TRUE(is_missing(v[index_of("age")]));
  EXPECT_DOUBLE_EQ(v[index_of("cluster_size")], 1.0);
}

TEST(Rates, MedianOfEvenWindow) {
  RatesTable t;
  t.set(10, 100);
  t.set(11, 300);
  t.set(12, 200);
  t.set(13, 1000);
  EXPECT_DOUBLE_EQ(t.median_satoshi_price(10, 13), 250.0 / 1e8);
  EXPECT_DOUBLE_EQ(t.median_satoshi_price(10, 12), 200.0 / 1e8);
  EXPECT_EQ(code_of([&] { t.median_satoshi_price(9, 12); }), ErrorCode::MissingRates);
  EXPECT_EQ(code_of([&] { t.usd_per_btc(20); }), ErrorCode::MissingRates);
}

TEST(Rates, LoadCsv) {
  std::stringstream ss("date,usd_per_btc\n2020-01-01,7200.5\n2020-01-02,7300\n");
  auto t = RatesTable::load(ss);
  EXPECT_DOUBLE_EQ(t.usd_per_btc(parse_date("2020-01-02")), 7300.0);
  std::stringstream bad("day,price\n");
  EXPECT_EQ(code_of([&] { RatesTable::load(bad); }), ErrorCode::SchemaMismatch);
  std::stringstream neg("date,usd_per_btc\n2020-01-01,-1\n");
  EXPECT_EQ(code_of([&] { RatesTable::load(neg); }), ErrorCode::MalformedRow);
}

TEST(Dates, RoundTrip) {
  EXPECT_EQ(parse_date("1970-01-01"), 0);
  EXPECT_EQ(parse_date("2009-01-03"), 14'247);
  EXPECT_EQ(format_date(14'247), "2009-01-03");
  EXPECT_EQ(day_from_timestamp(1231006505), 14'247);
  EXPECT_EQ(day_from_timestamp(-1), -1);
  for (Day d = -800; d < 30'000; d += 37) EXPECT_EQ(parse_date(format_date(d)), d);
  EXPECT_EQ(code_of([] { parse_date("2020-13-01"); }), ErrorCode::MalformedRow);
  EXPECT_EQ(code_of([] { parse_date("20200101"); }), ErrorCode::MalformedRow);
}

TEST(Fit, OneToHundredNonValue) {
  std::vector<FeatureVector> train;
  std::vector<double> col;
  for (int i = 1; i <= 100; ++i) {
    train.push_back({static_cast<double>(i)});
    col.push_back(i);
  }
  auto c = fit_normalization(train, std::vector<bool>{false});
  ASSERT_EQ(c.features.size(), 1u);
  EXPECT_DOUBLE_EQ(c.features[0].log_low, std::log(1.0));
  EXPECT_DOUBLE_EQ(c.features[0].log_q95, std::log(oracle_percentile(col, 0.95)));
  EXPECT_FALSE(c.features[0].degenerate);
}

TEST(Fit, ValueFeatureUsesFifthPercentile) {
  std::vector<FeatureVector> train;
  std::vector<double> col;
  for (int i = 1; i <= 100; ++i) {
    train.push_back({static_cast<double>(i), static_cast<double>(i)});
    col.push_back(i);
  }
  auto c = fit_normalization(train, std::vector<bool>{false, true});
  EXPECT_DOUBLE_EQ(c.features[1].log_low, std::log(oracle_percentile(col, 0.05)));
  EXPECT_GT(c.features[1].log_low, c.features[0].log_low);
  EXPECT_EQ(c.features[1].kind, FeatureKind::value);
}

TEST(Fit, ConstantIsDegenerate) {
  std::vector<FeatureVector> train(30, FeatureVector{4.0, 0.0});
  auto c = fit_normalization(train, std::vector<bool>{false, false});
  EXPECT_TRUE(c.features[0].degenerate);
  EXPECT_TRUE(c.features[1].degenerate);  // no positive values at all
  auto out = normalize({4.0, 0.0}, c);
  EXPECT_EQ(out[0], 0.5);
  EXPECT_EQ(out[1], 0.0);
}

TEST(Fit, EmptyTrainingSplit) {
  EXPECT_EQ(code_of([] { fit_normalization({}, std::vector<bool>{false}); }), ErrorCode::EmptyTrainingSplit);
}

TEST(Normalize, Endpoints) {
  std::vector<FeatureVector> train;
  std::vector<double> col;
  for (int i = 1; i <= 100; ++i) {
    train.push_back({static_cast<double>(i)});
    col.push_back(i);
  }
  auto c = fit_normalization(train, std::vector<bool>{false});
  double q95 = oracle_percentile(col, 0.95);
  EXPECT_NEAR(normalize({q95}, c)[0], 1.0, 1e-12);
  EXPECT_EQ(normalize({0.0}, c)[0], 0.0);
  EXPECT_EQ(normalize({10 * q95}, c)[0], 1.0);
  EXPECT_EQ(normalize({1.0}, c)[0], 0.0);
  EXPECT_EQ(normalize({-3.0}, c)[0], 0.0);
  EXPECT_EQ(normalize({kMissing}, c)[0], 0.0);
  EXPECT_EQ(code_of([&] { normalize({1.0, 2.0}, c); }), ErrorCode::ManifestMismatch);
}

TEST(Constants, RoundTripExact) {
  Rng rng(3);
  std::vector<FeatureVector> train;
  for (int i = 0; i < 200; ++i) {
    FeatureVector v(feature_manifest().size());
    for (auto& x : v) x = rng.unit() * 1e6;
    train.push_back(v);
  }
  auto c = fit_normalization(train, feature_manifest());
  std::stringstream ss;
  write_constants(ss, c);
  auto back = read_constants(ss, feature_manifest());
  ASSERT_EQ(back.features.size(), c.features.size());
  for (std::size_t i = 0; i < c.features.size(); ++i) {
    EXPECT_EQ(back.features[i].log_low, c.features[i].log_low);
    EXPECT_EQ(back.features[i].log_q95, c.features[i].log_q95);
    EXPECT_EQ(back.features[i].degenerate, c.features[i].degenerate);
  }
  EXPECT_EQ(back.fitted_on, "train");
}

TEST(Constants, OtherManifestRejected) {
  std::stringstream ss("# manifest=other/9 fitted_on=train\nname,kind,q_low,q95,degenerate\n");
  EXPECT_EQ(code_of([&] { read_constants(ss, feature_manifest()); }), ErrorCode::ManifestMismatch);
}

TEST(FeatureMatrix, RoundTrip) {
  const auto& m = feature_manifest();
  std::vector<FeatureRow> rows(2);
  rows[0].alias = 4;
  rows[0].label = Category::ransomware;
  rows[1].alias = 9;
  for (auto& r : rows) {
    r.values.assign(m.size(), kMissing);
    r.values[0] = 1.0 / 3.0;
    r.values[5] = 12345.678;
  }
  std::stringstream ss;
  write_feature_matrix(ss, m, rows);
  auto back = read_feature_matrix(ss, m);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].label, Category::ransomware);
  EXPECT_FALSE(back[1].label.has_value());
  EXPECT_EQ(back[1].values[0], 1.0 / 3.0);
  EXPECT_TRUE(is_missing(back[1].values[1]));
}

TEST(Manifest, FrozenShape) {
  const auto& m = feature_manifest();
  EXPECT_EQ(m.size(), 42u);
  auto mask = m.value_mask();
  EXPECT_EQ(std::count(mask.begin(), mask.end(), true), 16);
  std::set<std::string> names;
  for (const auto& f : m.features) names.insert(f.name);
  EXPECT_EQ(names.size(), m.size());
}

TEST(NormalizeProperty, RangeMonotoneAndRefit) {
  Rng rng(909);
  for (int trial = 0; trial < 40; ++trial) {
    std::size_t dims = 1 + rng.below(6);
    std::vector<bool> mask(dims);
    for (std::size_t d = 0; d < dims; ++d) mask[d] = rng.below(2) == 1;
    std::vector<FeatureVector> train;
    auto rows = 1 + rng.below(300);
    for (std::uint64_t i = 0; i < rows; ++i) {
      FeatureVector v(dims);
      for (auto& x : v) {
        switch (rng.below(5)) {
          case 0: x = 0; break;
          case 1: x = kMissing; break;
          default: x = std::exp(rng.unit() * 20.0); break;
        }
      }
      train.push_back(v);
    }
    auto c = fit_normalization(train, mask);
    auto c2 = fit_normalization(train, mask);
    for (std::size_t d = 0; d < dims; ++d) {
      EXPECT_EQ(c.features[d].log_low, c2.features[d].log_low);
      EXPECT_EQ(c.features[d].log_q95, c2.features[d].log_q95);
    }
    for (int k = 0; k < 200; ++k) {
      FeatureVector a(dims), b(dims);
      for (std::size_t d = 0; d < dims; ++d) {
        a[d] = std::exp(rng.unit() * 24.0 - 2.0);
        b[d] = a[d] * (1.0 + rng.unit());
      }
      auto na = normalize(a, c), nb = normalize(b, c);
      for (std::size_t d = 0; d < dims; ++d) {
        EXPECT_GE(na[d], 0.0);
        EXPECT_LE(na[d], 1.0);
        if (!c.features[d].degenerate) EXPECT_LE(na[d], nb[d]);
      }
    }
  }
}
