#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace activelex::detail {

struct CsvRecord {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based line where the record starts
};

/// RFC 4180 reader: quoted fields may contain commas, doubled quotes and newlines.
/// Throws DataError on an unterminated quote.
std::vector<CsvRecord> parse_csv(std::string_view content);

/// Quotes a field when it contains a comma, quote, or line break.
std::string csv_escape(std::string_view field);

}  // namespace activelex::detail
