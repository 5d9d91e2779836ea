#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <set>

#include "forge/pipeline.hpp"

namespace forge {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"chain", {"blocks_dir", "network", "height_limit", "allow_short_chain"}},
      {"filters",
       {"coinjoin_min_equal_outputs", "coinjoin_min_distinct_inputs", "coinjoin_min_value", "detect_coinjoin",
        "detect_open_assets", "detect_omni", "detect_epobc"}},
      {"labels", {"labels_file", "coinbase_patterns"}},
      {"features", {"rates_file", "split_seed"}},
      {"sampler", {"fanouts", "high_degree_threshold", "edge_sample_cap", "rng_seed", "copies"}},
      {"output", {"dir"}},
  };
  return keys;
}

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::ConfigInvalid, what); }

std::uint64_t to_u64(const std::string& key, std::string_view text) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size() || text.empty()) {
    invalid(key + ": expected a non-negative integer, got '" + std::string(text) + "'");
  }
  return v;
}

bool to_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "yes" || text == "1" || text == "on") return true;
  if (text == "false" || text == "no" || text == "0" || text == "off") return false;
  invalid(key + ": expected a boolean, got '" + text + "'");
}

}  // namespace

PipelineConfig PipelineConfig::load(const std::filesystem::path& path, const ConfigOverrides& overrides) {
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    invalid("cannot read config " + path.string() + ": " + e.message());
  }
  for (const auto& [section, body] : tree) {
    auto it = known_keys().find(section);
    if (it == known_keys().end()) invalid("unknown section [" + section + "]");
    for (const auto& [key, _] : body) {
      if (!it->second.count(key)) invalid("unknown key " + section + "." + key);
    }
  }

  const auto base = std::filesystem::absolute(path).parent_path();
  auto str = [&](const std::string& key) { return tree.get_optional<std::string>(key); };
  auto resolve = [&](const std::string& p) {
    std::filesystem::path q(p);
    return q.is_absolute() ? q : (base / q).lexically_normal();
  };
  auto u64 = [&](const std::string& key, auto& target) {
    if (auto v = str(key)) target = static_cast<std::remove_reference_t<decltype(target)>>(to_u64(key, *v));
  };
  auto flag = [&](const std::string& key, bool& target) {
    if (auto v = str(key)) target = to_bool(key, *v);
  };

  PipelineConfig c;
  if (auto v = str("chain.blocks_dir")) c.blocks_dir = resolve(*v);
  if (auto v = str("chain.network")) c.network = *v;
  if (auto v = str("chain.height_limit")) c.height_limit = to_u64("chain.height_limit", *v);
  flag("chain.allow_short_chain", c.allow_short_chain);

  u64("filters.coinjoin_min_equal_outputs", c.filters.coinjoin.min_equal_outputs);
  u64("filters.coinjoin_min_distinct_inputs", c.filters.coinjoin.min_distinct_input_scripts);
  u64("filters.coinjoin_min_value", c.filters.coinjoin.min_equal_value);
  flag("filters.detect_coinjoin", c.filters.detect_coinjoin);
  flag("filters.detect_open_assets", c.filters.detect_open_assets);
  flag("filters.detect_omni", c.filters.detect_omni);
  flag("filters.detect_epobc", c.filters.detect_epobc);

  if (auto v = str("labels.labels_file"); v && !v->empty()) c.labels_file = resolve(*v);
  if (auto v = str("labels.coinbase_patterns"); v && !v->empty()) c.coinbase_patterns = resolve(*v);

  if (auto v = str("features.rates_file")) c.rates_file = resolve(*v);
  u64("features.split_seed", c.split_seed);

  if (auto v = str("sampler.fanouts")) {
    c.sampler.fanouts.clear();
    std::string_view rest = *v;
    while (true) {
      auto comma = rest.find(',');
      auto part = rest.substr(0, comma);
      while (!part.empty() && part.front() == ' ') part.remove_prefix(1);
      while (!part.empty() && part.back() == ' ') part.remove_suffix(1);
      c.sampler.fanouts.push_back(static_cast<std::size_t>(to_u64("sampler.fanouts", part)));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
  }
  u64("sampler.high_degree_threshold", c.sampler.high_degree_threshold);
  u64("sampler.edge_sample_cap", c.sampler.edge_sample_cap);
  u64("sampler.rng_seed", c.sampler.rng_seed);
  u64("sampler.copies", c.copies);

  if (auto v = str("output.dir")) c.out_dir = resolve(*v);
  else c.out_dir = resolve("out");

  if (overrides.height_limit) c.height_limit = overrides.height_limit;
  if (overrides.out_dir) c.out_dir = std::filesystem::absolute(*overrides.out_dir);
  c.validate();
  return c;
}

void PipelineConfig::validate() const {
  if (blocks_dir.empty()) invalid("chain.blocks_dir is required");
  if (!height_limit) invalid("chain.height_limit is required (or pass --height-limit)");
  if (*height_limit == 0) invalid("chain.height_limit must be at least 1");
  (void)magic();
  if (rates_file.empty()) invalid("features.rates_file is required");
  if (copies == 0) invalid("sampler.copies must be at least 1");
  filters.validate();
  sampler.validate();
}

NetworkMagic PipelineConfig::magic() const {
  if (network == "mainnet") return kMainnetMagic;
  if (network == "testnet") return kTestnetMagic;
  if (network == "regtest") return kRegtestMagic;
  invalid("chain.network must be mainnet, testnet or regtest, got '" + network + "'");
}

AddressNetwork PipelineConfig::address_network() const {
  if (network == "testnet") return AddressNetwork::testnet;
  if (network == "regtest") return AddressNetwork::regtest;
  return AddressNetwork::mainnet;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigInvalid: return 2;
    case ErrorCode::UpstreamIncomplete: return 3;
    case ErrorCode::TruncatedInput:
    case ErrorCode::MalformedTransaction:
    case ErrorCode::CorruptBlockFile:
    case ErrorCode::MissingGenesis:
    case ErrorCode::BrokenChain: return 4;
    case ErrorCode::IoFailure: return 5;
    case ErrorCode::UnresolvedInput:
    case ErrorCode::AliasAbsent:
    case ErrorCode::InconsistentInputs:
    case ErrorCode::MalformedRow: return 6;
    case ErrorCode::InvalidAddress:
    case ErrorCode::UnknownCategory: return 7;
    case ErrorCode::MissingRates:
    case ErrorCode::NoActivity:
    case ErrorCode::EmptyTrainingSplit:
    case ErrorCode::ManifestMismatch: return 8;
    case ErrorCode::UnknownAlias:
    case ErrorCode::SchemaMismatch:
    case ErrorCode::DuplicateEdgeKey: return 9;
  }
  return 1;
}

}  // namespace forge
