#include "forge/filters.hpp"

#include <algorithm>
#include <unordered_map>
#include <vector>

#include "forge/error.hpp"

namespace forge {

namespace {

constexpr std::uint8_t kOpenAssetsMarker[] = {0x4f, 0x41, 0x01, 0x00};
constexpr std::uint8_t kOmniMarker[] = {0x6f, 0x6d, 0x6e, 0x69};  // "omni"
constexpr std::uint32_t kEpobcGenesis = 0b100101;
constexpr std::uint32_t kEpobcTransfer = 0b110011;

bool starts_with(const Bytes& payload, std::span<const std::uint8_t> prefix) {
  return payload.size() >= prefix.size() && std::equal(prefix.begin(), prefix.end(), payload.begin());
}

}  // namespace

std::string_view colored_protocol_name(ColoredProtocol p) {
  switch (p) {
    case ColoredProtocol::none: return "none";
    case ColoredProtocol::open_assets: return "open_assets";
    case ColoredProtocol::omni: return "omni";
    case ColoredProtocol::epobc: return "epobc";
  }
  return "none";
}

void FilterConfig::validate() const {
  if (coinjoin.min_equal_outputs < 1 || coinjoin.min_distinct_input_scripts < 1 || coinjoin.min_equal_value < 1) {
    throw Error(ErrorCode::ConfigInvalid, "coinjoin thresholds must be >= 1");
  }
}

bool detect_coinjoin(const RawTransaction& tx, std::span<const ScriptId> input_scripts, const CoinJoinConfig& cfg) {
  if (tx.is_coinbase()) return false;

  std::vector<ScriptId> distinct(input_scripts.begin(), input_scripts.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < cfg.min_distinct_input_scripts) return false;

  std::unordered_map<std::uint64_t, std::uint32_t> per_value;
  for (const auto& out : tx.outputs) {
    if (out.value < cfg.min_equal_value) continue;
    if (++per_value[out.value] >= cfg.min_equal_outputs) return true;
  }
  return false;
}

ColoredProtocol detect_colored(const RawTransaction& tx) {
  for (const auto& out : tx.outputs) {
    auto payload = op_return_payload(out.lock_script);
    if (!payload) continue;
    if (starts_with(*payload, kOpenAssetsMarker)) return ColoredProtocol::open_assets;
    if (starts_with(*payload, kOmniMarker)) return ColoredProtocol::omni;
  }
  if (!tx.inputs.empty() && !tx.is_coinbase()) {
    auto tag = tx.inputs[0].sequence & 0x3f;
    if (tag == kEpobcGenesis || tag == kEpobcTransfer) return ColoredProtocol::epobc;
  }
  return ColoredProtocol::none;
}

FilterVerdict evaluate_filters(const RawTransaction& tx, std::span<const ScriptId> input_scripts,
                               const FilterConfig& cfg) {
  FilterVerdict v;
  if (cfg.detect_coinjoin) v.is_coinjoin = detect_coinjoin(tx, input_scripts, cfg.coinjoin);

  auto colored = detect_colored(tx);
  bool enabled = (colored == ColoredProtocol::open_assets && cfg.detect_open_assets) ||
                 (colored == ColoredProtocol::omni && cfg.detect_omni) ||
                 (colored == ColoredProtocol::epobc && cfg.detect_epobc);
  if (enabled) v.colored_protocol = colored;

  if (v.is_coinjoin) v.reason = "coinjoin:equal_outputs";
  if (v.colored_protocol != ColoredProtocol::none) {
    if (!v.reason.empty()) v.reason += '+';
    switch (v.colored_protocol) {
      case ColoredProtocol::open_assets: v.reason += "open_assets:op_return_4f410100"; break;
      case ColoredProtocol::omni: v.reason += "omni:op_return_6f6d6e69"; break;
      case ColoredProtocol::epobc: v.reason += "epobc:sequence_tag"; break;
      case ColoredProtocol::none: break;
    }
  }
  return v;
}

}  // namespace forge
