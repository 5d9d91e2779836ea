#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace forge::csv {

using Row = std::vector<std::string>;

// Minimal RFC 4180 reader: quoted fields, doubled quotes, CRLF or LF.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  // Returns nullopt at end of input. Blank lines are skipped.
  std::optional<Row> next();
  std::size_t line() const { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

std::string escape(std::string_view field);
void write_row(std::ostream& out, const Row& row);

std::string join_header(const std::vector<std::string_view>& columns);
std::string join_header(const Row& row);

}  // namespace forge::csv
