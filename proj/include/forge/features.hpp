#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forge/nodes.hpp"

namespace forge {

// Days since 1970-01-01 (UTC).
using Day = std::int64_t;

Day day_from_timestamp(std::int64_t unix_seconds);
Day parse_date(std::string_view yyyy_mm_dd);  // throws MalformedRow
std::string format_date(Day day);

class RatesTable {
 public:
  void set(Day day, double usd_per_btc);
  bool empty() const { return prices_.empty(); }
  double usd_per_btc(Day day) const;  // MissingRates outside the table
  // Median USD price of one satoshi over [first, last]; even counts average
  // the two middle prices. MissingRates when the range is not covered.
  double median_satoshi_price(Day first, Day last) const;

  static RatesTable load(std::istream& in);  // CSV date,usd_per_btc
  static RatesTable load(const std::filesystem::path& path);

 private:
  std::map<Day, double> prices_;
};

enum class FeatureKind : std::uint8_t { non_value, value };

struct FeatureSpec {
  std::string name;
  FeatureKind kind;
};

struct FeatureManifest {
  std::string version;
  std::vector<FeatureSpec> features;

  std::size_t size() const { return features.size(); }
  std::vector<bool> value_mask() const;
};

// The frozen feature list emitted with every feature matrix.
const FeatureManifest& feature_manifest();

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

using FeatureVector = std::vector<double>;

// max(last_in, last_out) - min(first_in, first_out). Throws NoActivity.
std::uint64_t compute_age(const NodeRecord& node);

// Raw (unnormalized) features in feature_manifest() order. block_days maps a
// block height to its UTC day.
FeatureVector derive_features(const NodeRecord& node, const RatesTable& rates, std::span<const Day> block_days);

struct FeatureConstants {
  std::string name;
  FeatureKind kind = FeatureKind::non_value;
  double log_low = 0;  // log of q0 (non-value) or q5 (value)
  double log_q95 = 0;
  bool degenerate = false;
};

struct NormalizationConstants {
  std::string manifest_version;
  std::string fitted_on;
  std::vector<FeatureConstants> features;
};

// Linear interpolation between order statistics; sorted must be non-empty.
double percentile(std::span<const double> sorted, double q);

NormalizationConstants fit_normalization(std::span<const FeatureVector> train, const FeatureManifest& manifest,
                                         std::string fitted_on = "train");
NormalizationConstants fit_normalization(std::span<const FeatureVector> train, const std::vector<bool>& value_mask);

// zero/negative -> missing, log, affine map of [log_low, log_q95] onto [0, 1],
// clip, missing -> 0. Degenerate features send present values to 0.5.
FeatureVector normalize(const FeatureVector& v, const NormalizationConstants& c);

void write_constants(std::ostream& out, const NormalizationConstants& c);
// Throws ManifestMismatch when the file was fitted under another manifest.
NormalizationConstants read_constants(std::istream& in, const FeatureManifest& manifest);

struct FeatureRow {
  Alias alias;
  std::optional<Category> label;
  FeatureVector values;
};

void write_feature_matrix(std::ostream& out, const FeatureManifest& manifest, std::span<const FeatureRow> rows);
std::vector<FeatureRow> read_feature_matrix(std::istream& in, const FeatureManifest& manifest);

}  // namespace forge
