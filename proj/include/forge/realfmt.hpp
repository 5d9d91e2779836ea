#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace forge {

// Canonical text form of real-valued satoshi amounts in every CSV this
// project writes: 15 significant digits, shortest of fixed/scientific.
std::string format_real(double v);
double parse_real(std::string_view text);

std::string format_optional(const std::optional<double>& v);
std::string format_optional(const std::optional<std::uint64_t>& v);

}  // namespace forge
