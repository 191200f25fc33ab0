#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace lnm::csv {

using Row = std::vector<std::string>;

/// RFC-4180 reader: quoted fields may contain commas, doubled quotes and
/// line breaks. A trailing CR on each record is dropped.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  /// Reads the next record; false at end of input. Throws DataError on an
  /// unterminated quoted field.
  bool next(Row& row);
  /// 1-based physical line where the last returned record started.
  std::size_t line() const noexcept { return record_line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 1;
  std::size_t record_line_ = 0;
};

std::string escape(std::string_view field);
void write_row(std::ostream& out, const Row& row);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);
/// Fixed-precision text ("%.Nf").
std::string format_fixed(double value, int decimals);
/// Strict full-string parse; false on trailing garbage or non-finite input.
bool parse_double(std::string_view text, double& out);

}  // namespace lnm::csv
