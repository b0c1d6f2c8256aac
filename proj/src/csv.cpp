#include "csv.hpp"

#include "activelex/error.hpp"

namespace activelex::detail {

std::vector<CsvRecord> parse_csv(std::string_view content) {
  std::vector<CsvRecord> records;
  CsvRecord current;
  std::string field;
  bool in_quotes = false;
  bool record_has_data = false;
  std::size_t line = 1;
  current.line = 1;

  auto end_field = [&] {
    current.fields.push_back(std::move(field));
    field.clear();
  };
  auto end_record = [&] {
    end_field();
    if (record_has_data) records.push_back(std::move(current));
    current = CsvRecord{};
    record_has_data = false;
  };

  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        record_has_data = true;
        break;
      case ',':
        end_field();
        record_has_data = true;
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        ++line;
        current.line = line;
        break;
      default:
        field.push_back(c);
        record_has_data = true;
    }
  }
  if (in_quotes) throw DataError("unterminated quoted field starting on line " + std::to_string(current.line));
  if (record_has_data || !field.empty()) {
    record_has_data = true;
    end_record();
  }
  return records;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace activelex::detail
