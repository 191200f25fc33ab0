#include "lnm/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <system_error>

#include "lnm/error.hpp"

namespace lnm::csv {

bool Reader::next(Row& row) {
  row.clear();
  int c = in_.get();
  if (c == std::char_traits<char>::eof()) return false;
  record_line_ = line_;

  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  while (true) {
    if (c == std::char_traits<char>::eof()) {
      if (in_quotes) {
        throw DataError("unterminated quoted field starting at line " +
                        std::to_string(record_line_));
      }
      row.push_back(std::move(field));
      return true;
    }
    const char ch = static_cast<char>(c);
    if (in_quotes) {
      if (ch == '"') {
        if (in_.peek() == '"') {
          in_.get();
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (ch == '\n') ++line_;
        field.push_back(ch);
      }
    } else if (ch == '"' && field.empty() && !field_was_quoted) {
      in_quotes = true;
      field_was_quoted = true;
    } else if (ch == ',') {
      row.push_back(std::move(field));
      field.clear();
      field_was_quoted = false;
    } else if (ch == '\n') {
      ++line_;
      if (!field.empty() && field.back() == '\r' && !field_was_quoted) field.pop_back();
      row.push_back(std::move(field));
      return true;
    } else if (ch == '\r' && in_.peek() == '\n') {
      // swallowed; the newline ends the record
    } else {
      field.push_back(ch);
    }
    c = in_.get();
  }
}

std::string escape(std::string_view field) {
  const bool needs_quotes = field.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!needs_quotes) return std::string(field);
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
  return out;
}

void write_row(std::ostream& out, const Row& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out << ',';
    out << escape(row[i]);
  }
  out << '\n';
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) throw InvariantError("to_chars failed");
  return std::string(buf, ptr);
}

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  std::string out(buf);
  if (out.starts_with("-0") && out.find_first_not_of("-0.") == std::string::npos) {
    out.erase(0, 1);
  }
  return out;
}

bool parse_double(std::string_view text, double& out) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size() && std::isfinite(out);
}

}  // namespace lnm::csv
