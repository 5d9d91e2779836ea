#include "forge/realfmt.hpp"

#include <fmt/format.h>

#include <cerrno>
#include <cmath>
#include <cstdlib>

#include "forge/error.hpp"

namespace forge {

std::string format_real(double v) {
  if (v == 0.0) return "0";  // folds -0
  return fmt::format("{:.15g}", v);
}

double parse_real(std::string_view text) {
  std::string buf(text);
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(buf.c_str(), &end);
  if (buf.empty() || end != buf.c_str() + buf.size() || errno == ERANGE) {
    throw Error(ErrorCode::MalformedRow, "not a real number: '" + buf + "'");
  }
  return v;
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_real(*v) : std::string{};
}

std::string format_optional(const std::optional<std::uint64_t>& v) {
  return v ? std::to_string(*v) : std::string{};
}

}  // namespace forge
