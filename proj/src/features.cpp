#include "forge/features.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>

#include "forge/csv.hpp"
#include "forge/error.hpp"
#include "forge/realfmt.hpp"

namespace forge {

// ---- dates and rates ---------------------------------------------------

namespace {

// Civil-calendar conversions (proleptic Gregorian), after H. Hinnant.
Day days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(Day z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y = static_cast<std::int64_t>(yoe) + era * 400 + (m <= 2);
}

}  // namespace

Day day_from_timestamp(std::int64_t unix_seconds) {
  return unix_seconds >= 0 ? unix_seconds / 86400 : -((-unix_seconds + 86399) / 86400);
}

Day parse_date(std::string_view s) {
  auto digits = [&](std::size_t pos, std::size_t n) {
    int v = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
      if (s[i] < '0' || s[i] > '9') throw Error(ErrorCode::MalformedRow, "bad date '" + std::string(s) + "'");
      v = v * 10 + (s[i] - '0');
    }
    return v;
  };
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') {
    throw Error(ErrorCode::MalformedRow, "date must be YYYY-MM-DD: '" + std::string(s) + "'");
  }
  int y = digits(0, 4), m = digits(5, 2), d = digits(8, 2);
  if (m < 1 || m > 12 || d < 1 || d > 31) throw Error(ErrorCode::MalformedRow, "bad date '" + std::string(s) + "'");
  return days_from_civil(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
}

std::string format_date(Day day) {
  std::int64_t y;
  unsigned m, d;
  civil_from_days(day, y, m, d);
  return fmt::format("{:04d}-{:02d}-{:02d}", y, m, d);
}

void RatesTable::set(Day day, double usd_per_btc) {
  if (!(usd_per_btc > 0)) throw Error(ErrorCode::MalformedRow, "price must be positive on " + format_date(day));
  prices_[day] = usd_per_btc;
}

double RatesTable::usd_per_btc(Day day) const {
  auto it = prices_.find(day);
  if (it == prices_.end()) throw Error(ErrorCode::MissingRates, "no BTC/USD rate for " + format_date(day));
  return it->second;
}

double RatesTable::median_satoshi_price(Day first, Day last) const {
  if (first > last) std::swap(first, last);
  if (prices_.empty() || first < prices_.begin()->first || last > prices_.rbegin()->first) {
    throw Error(ErrorCode::MissingRates,
                "rates do not cover " + format_date(first) + " .. " + format_date(last));
  }
  std::vector<double> window;
  for (auto it = prices_.lower_bound(first); it != prices_.end() && it->first <= last; ++it) window.push_back(it->second);
  if (window.empty()) throw Error(ErrorCode::MissingRates, "no rates within " + format_date(first) + " .. " + format_date(last));
  std::sort(window.begin(), window.end());
  const auto n = window.size();
  double median = n % 2 ? window[n / 2] : (window[n / 2 - 1] + window[n / 2]) / 2.0;
  return median / 1e8;
}

RatesTable RatesTable::load(std::istream& in) {
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header || csv::join_header(*header) != "date,usd_per_btc") {
    throw Error(ErrorCode::SchemaMismatch, "rates file header must be date,usd_per_btc");
  }
  RatesTable t;
  while (auto row = reader.next()) {
    if (row->size() != 2) throw Error(ErrorCode::MalformedRow, "rates line " + std::to_string(reader.line()));
    t.set(parse_date((*row)[0]), parse_real((*row)[1]));
  }
  return t;
}

RatesTable RatesTable::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  return load(in);
}

// ---- manifest and derivation -------------------------------------------

namespace {

enum Feature : std::size_t {
  f_degree,
  f_degree_in,
  f_degree_out,
  f_total_transaction_in,
  f_total_transaction_out,
  f_first_transaction_in,
  f_last_transaction_in,
  f_first_transaction_out,
  f_last_transaction_out,
  f_cluster_size,
  f_cluster_num_edges,
  f_cluster_num_cc,
  f_cluster_num_nodes_in_cc,
  f_non_isolated_proportion,
  f_degree_out_in_ratio,
  f_time_before_first_out,
  f_age,
  f_total_transaction_in_rate,
  f_total_transaction_out_rate,
  f_degree_rate,
  f_degree_in_rate,
  f_degree_out_rate,
  f_cluster_size_rate,
  f_cluster_num_edges_rate,
  f_cluster_num_cc_rate,
  f_cluster_num_nodes_in_cc_rate,
  // value-type
  f_min_sent,
  f_max_sent,
  f_total_sent,
  f_min_received,
  f_max_received,
  f_total_received,
  f_avg_sent,
  f_avg_received,
  f_min_sent_usd,
  f_max_sent_usd,
  f_total_sent_usd,
  f_min_received_usd,
  f_max_received_usd,
  f_total_received_usd,
  f_avg_sent_usd,
  f_avg_received_usd,
  f_count
};

FeatureManifest make_manifest() {
  const char* names[f_count] = {
      "degree", "degree_in", "degree_out", "total_transaction_in", "total_transaction_out",
      "first_transaction_in", "last_transaction_in", "first_transaction_out", "last_transaction_out",
      "cluster_size", "cluster_num_edges", "cluster_num_cc", "cluster_num_nodes_in_cc",
      "non_isolated_proportion", "degree_out_in_ratio", "time_before_first_out", "age",
      "total_transaction_in_rate", "total_transaction_out_rate", "degree_rate", "degree_in_rate", "degree_out_rate",
      "cluster_size_rate", "cluster_num_edges_rate", "cluster_num_cc_rate", "cluster_num_nodes_in_cc_rate",
      "min_sent", "max_sent", "total_sent", "min_received", "max_received", "total_received", "avg_sent",
      "avg_received", "min_sent_usd", "max_sent_usd", "total_sent_usd", "min_received_usd", "max_received_usd",
      "total_received_usd", "avg_sent_usd", "avg_received_usd",
  };
  FeatureManifest m;
  m.version = "forge-features/1";
  for (std::size_t i = 0; i < f_count; ++i) {
    m.features.push_back({names[i], i >= f_min_sent ? FeatureKind::value : FeatureKind::non_value});
  }
  return m;
}

double opt(const std::optional<double>& v) { return v ? *v : kMissing; }
double opt(const std::optional<std::uint64_t>& v) { return v ? static_cast<double>(*v) : kMissing; }
double ratio(double num, double den) { return (is_missing(num) || is_missing(den) || den == 0) ? kMissing : num / den; }

}  // namespace

std::vector<bool> FeatureManifest::value_mask() const {
  std::vector<bool> mask;
  for (const auto& f : features) mask.push_back(f.kind == FeatureKind::value);
  return mask;
}

const FeatureManifest& feature_manifest() {
  static const FeatureManifest m = make_manifest();
  return m;
}

std::uint64_t compute_age(const NodeRecord& n) {
  std::optional<std::uint64_t> first, last;
  for (const auto& f : {n.first_transaction_in, n.first_transaction_out}) {
    if (f) first = first ? std::min(*first, *f) : *f;
  }
  for (const auto& l : {n.last_transaction_in, n.last_transaction_out}) {
    if (l) last = last ? std::max(*last, *l) : *l;
  }
  if (!first || !last) throw Error(ErrorCode::NoActivity, "alias " + std::to_string(n.alias) + " has no transfers");
  return *last - *first;
}

FeatureVector derive_features(const NodeRecord& n, const RatesTable& rates, std::span<const Day> block_days) {
  FeatureVector v(f_count, kMissing);
  v[f_degree] = static_cast<double>(n.degree);
  v[f_degree_in] = static_cast<double>(n.degree_in);
  v[f_degree_out] = static_cast<double>(n.degree_out);
  v[f_total_transaction_in] = static_cast<double>(n.total_transaction_in);
  v[f_total_transaction_out] = static_cast<double>(n.total_transaction_out);
  v[f_first_transaction_in] = opt(n.first_transaction_in);
  v[f_last_transaction_in] = opt(n.last_transaction_in);
  v[f_first_transaction_out] = opt(n.first_transaction_out);
  v[f_last_transaction_out] = opt(n.last_transaction_out);
  v[f_cluster_size] = static_cast<double>(n.cluster_size);
  v[f_cluster_num_edges] = static_cast<double>(n.cluster_num_edges);
  v[f_cluster_num_cc] = static_cast<double>(n.cluster_num_cc);
  v[f_cluster_num_nodes_in_cc] = static_cast<double>(n.cluster_num_nodes_in_cc);
  v[f_non_isolated_proportion] = ratio(v[f_cluster_num_nodes_in_cc], v[f_cluster_size]);
  v[f_degree_out_in_ratio] = ratio(v[f_degree_out], v[f_degree_in]);
  if (n.first_transaction_in && n.first_transaction_out) {
    v[f_time_before_first_out] =
        static_cast<double>(*n.first_transaction_out) - static_cast<double>(*n.first_transaction_in);
  }

  v[f_min_sent] = opt(n.min_sent);
  v[f_max_sent] = opt(n.max_sent);
  v[f_total_sent] = n.total_sent;
  v[f_min_received] = opt(n.min_received);
  v[f_max_received] = opt(n.max_received);
  v[f_total_received] = n.total_received;
  v[f_avg_sent] = ratio(n.total_sent, static_cast<double>(n.total_transaction_out));
  v[f_avg_received] = ratio(n.total_received, static_cast<double>(n.total_transaction_in));

  const bool active = n.first_transaction_in || n.first_transaction_out;
  if (!active) return v;

  const double age = static_cast<double>(compute_age(n));
  v[f_age] = age;
  const std::size_t rate_src[] = {f_total_transaction_in, f_total_transaction_out, f_degree, f_degree_in,
                                  f_degree_out, f_cluster_size, f_cluster_num_edges, f_cluster_num_cc,
                                  f_cluster_num_nodes_in_cc};
  for (std::size_t i = 0; i < std::size(rate_src); ++i) v[f_total_transaction_in_rate + i] = ratio(v[rate_src[i]], age);

  std::uint64_t first = std::min(n.first_transaction_in.value_or(UINT64_MAX), n.first_transaction_out.value_or(UINT64_MAX));
  std::uint64_t last = std::max(n.last_transaction_in.value_or(0), n.last_transaction_out.value_or(0));
  if (last >= block_days.size()) {
    throw Error(ErrorCode::InconsistentInputs, "activity at block " + std::to_string(last) + " beyond block dates");
  }
  const double sat_usd = rates.median_satoshi_price(block_days[first], block_days[last]);
  for (std::size_t i = 0; i < 8; ++i) {
    double sat = v[f_min_sent + i];
    v[f_min_sent_usd + i] = is_missing(sat) ? kMissing : sat * sat_usd;
  }
  return v;
}

// ---- normalization -------------------------------------------------------

double percentile(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

NormalizationConstants fit_normalization(std::span<const FeatureVector> train, const FeatureManifest& manifest,
                                         std::string fitted_on) {
  if (train.empty()) throw Error(ErrorCode::EmptyTrainingSplit, "cannot fit normalization on an empty split");
  NormalizationConstants c;
  c.manifest_version = manifest.version;
  c.fitted_on = std::move(fitted_on);
  std::vector<double> col;
  for (std::size_t f = 0; f < manifest.size(); ++f) {
    col.clear();
    for (const auto& row : train) {
      if (row.size() != manifest.size()) throw Error(ErrorCode::ManifestMismatch, "training row has wrong dimension");
      if (row[f] > 0) col.push_back(row[f]);  // NaN compares false
    }
    FeatureConstants fc{manifest.features[f].name, manifest.features[f].kind};
    if (col.empty()) {
      fc.degenerate = true;
    } else {
      std::sort(col.begin(), col.end());
      double low = fc.kind == FeatureKind::value ? percentile(col, 0.05) : col.front();
      fc.log_low = std::log(low);
      fc.log_q95 = std::log(percentile(col, 0.95));
      fc.degenerate = !(fc.log_q95 > fc.log_low);
    }
    c.features.push_back(std::move(fc));
  }
  return c;
}

NormalizationConstants fit_normalization(std::span<const FeatureVector> train, const std::vector<bool>& value_mask) {
  FeatureManifest m;
  m.version = "ad-hoc";
  for (std::size_t i = 0; i < value_mask.size(); ++i) {
    m.features.push_back({"f" + std::to_string(i), value_mask[i] ? FeatureKind::value : FeatureKind::non_value});
  }
  return fit_normalization(train, m);
}

FeatureVector normalize(const FeatureVector& v, const NormalizationConstants& c) {
  if (v.size() != c.features.size()) {
    throw Error(ErrorCode::ManifestMismatch, "vector has " + std::to_string(v.size()) + " features, constants have " +
                                                 std::to_string(c.features.size()));
  }
  FeatureVector out(v.size(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    double x = v[i];
    if (!(x > 0)) continue;  // zero, negative and missing all end at 0
    const auto& fc = c.features[i];
    if (fc.degenerate) {
      out[i] = 0.5;
      continue;
    }
    double y = (std::log(x) - fc.log_low) / (fc.log_q95 - fc.log_low);
    out[i] = std::clamp(y, 0.0, 1.0);
  }
  return out;
}

namespace {

std::string exact_real(double v) { return fmt::format("{:.17g}", v); }

}  // namespace

void write_constants(std::ostream& out, const NormalizationConstants& c) {
  out << "# manifest=" << c.manifest_version << " fitted_on=" << c.fitted_on << '\n';
  out << "name,kind,q_low,q95,degenerate\n";
  for (const auto& f : c.features) {
    out << f.name << ',' << (f.kind == FeatureKind::value ? "value" : "non_value") << ',' << exact_real(f.log_low)
        << ',' << exact_real(f.log_q95) << ',' << (f.degenerate ? 1 : 0) << '\n';
  }
}

NormalizationConstants read_constants(std::istream& in, const FeatureManifest& manifest) {
  std::string first;
  std::getline(in, first);
  const std::string prefix = "# manifest=";
  if (first.rfind(prefix, 0) != 0) throw Error(ErrorCode::ManifestMismatch, "constants file lacks manifest line");
  auto space = first.find(" fitted_on=");
  NormalizationConstants c;
  c.manifest_version = first.substr(prefix.size(), space - prefix.size());
  if (space != std::string::npos) c.fitted_on = first.substr(space + 11);
  if (c.manifest_version != manifest.version) {
    throw Error(ErrorCode::ManifestMismatch, "constants fitted under " + c.manifest_version + ", expected " + manifest.version);
  }
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header || csv::join_header(*header) != "name,kind,q_low,q95,degenerate") {
    throw Error(ErrorCode::SchemaMismatch, "constants header must be name,kind,q_low,q95,degenerate");
  }
  while (auto row = reader.next()) {
    const auto& r = *row;
    if (r.size() != 5) throw Error(ErrorCode::MalformedRow, "constants line " + std::to_string(reader.line()));
    c.features.push_back({r[0], r[1] == "value" ? FeatureKind::value : FeatureKind::non_value, parse_real(r[2]),
                          parse_real(r[3]), r[4] == "1"});
  }
  if (c.features.size() != manifest.size()) throw Error(ErrorCode::ManifestMismatch, "constants feature count differs");
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (c.features[i].name != manifest.features[i].name) {
      throw Error(ErrorCode::ManifestMismatch, "feature " + std::to_string(i) + " is " + c.features[i].name);
    }
  }
  return c;
}

void write_feature_matrix(std::ostream& out, const FeatureManifest& manifest, std::span<const FeatureRow> rows) {
  out << "# manifest=" << manifest.version << '\n';
  out << "alias,label";
  for (const auto& f : manifest.features) out << ',' << f.name;
  out << '\n';
  for (const auto& row : rows) {
    out << row.alias << ',' << (row.label ? category_name(*row.label) : std::string_view{});
    for (double x : row.values) out << ',' << (is_missing(x) ? std::string{} : exact_real(x));
    out << '\n';
  }
}

std::vector<FeatureRow> read_feature_matrix(std::istream& in, const FeatureManifest& manifest) {
  std::string first;
  std::getline(in, first);
  if (first != "# manifest=" + manifest.version) {
    throw Error(ErrorCode::ManifestMismatch, "feature matrix manifest line: '" + first + "'");
  }
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header || header->size() != manifest.size() + 2) throw Error(ErrorCode::ManifestMismatch, "feature matrix header");
  std::vector<FeatureRow> rows;
  while (auto row = reader.next()) {
    const auto& r = *row;
    if (r.size() != manifest.size() + 2) throw Error(ErrorCode::MalformedRow, "feature row " + std::to_string(reader.line()));
    FeatureRow fr;
    fr.alias = std::stoull(r[0]);
    if (!r[1].empty()) fr.label = parse_category(r[1]);
    fr.values.reserve(manifest.size());
    for (std::size_t i = 2; i < r.size(); ++i) fr.values.push_back(r[i].empty() ? kMissing : parse_real(r[i]));
    rows.push_back(std::move(fr));
  }
  return rows;
}

}  // namespace forge
