#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "forge/chain.hpp"
#include "forge/script.hpp"

namespace forge {

enum class ColoredProtocol : std::uint8_t { none, open_assets, omni, epobc };

std::string_view colored_protocol_name(ColoredProtocol p);

// Stand-in thresholds for the equal-output CoinJoin pattern; not taken from
// any published fingerprint set.
struct CoinJoinConfig {
  std::uint32_t min_equal_outputs = 3;
  std::uint32_t min_distinct_input_scripts = 3;
  std::uint64_t min_equal_value = 10'000;
};

struct FilterConfig {
  CoinJoinConfig coinjoin;
  bool detect_coinjoin = true;
  bool detect_open_assets = true;
  bool detect_omni = true;
  bool detect_epobc = true;

  // Throws ConfigInvalid when a threshold is zero.
  void validate() const;
};

struct FilterVerdict {
  bool is_coinjoin = false;
  ColoredProtocol colored_protocol = ColoredProtocol::none;
  std::string reason;

  bool excluded() const { return is_coinjoin || colored_protocol != ColoredProtocol::none; }
};

// input_scripts holds the script id of the output each input spends.
bool detect_coinjoin(const RawTransaction& tx, std::span<const ScriptId> input_scripts, const CoinJoinConfig& cfg);
ColoredProtocol detect_colored(const RawTransaction& tx);

FilterVerdict evaluate_filters(const RawTransaction& tx, std::span<const ScriptId> input_scripts,
                               const FilterConfig& cfg);

}  // namespace forge
