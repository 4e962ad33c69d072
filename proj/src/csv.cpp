#include "denstree/csv.hpp"

#include <algorithm>
#include <charconv>

#include "denstree/error.hpp"
#include "denstree/serialize.hpp"

namespace denstree {

namespace {

std::string location(std::size_t line, const std::string& column) {
  return "row " + std::to_string(line) + ", column '" + column + "'";
}

bool parse_number(std::string_view s, double& out) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && end == s.data() + s.size();
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t i = 0;
  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };
  while (i < text.size()) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_record();
    } else {
      field += c;
      field_started = true;
    }
    ++i;
  }
  if (quoted) throw ParseError("csv: unterminated quoted field", text.size());
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

Dataset read_csv(std::string_view text, SchemaPtr schema) {
  auto records = parse_csv(text);
  if (records.empty()) throw DataError("csv: missing header");
  const auto& header = records[0];
  const Schema& s = *schema;
  std::vector<std::size_t> column_of(header.size());
  std::vector<bool> seen(s.size(), false);
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto idx = s.index_of(header[c]);
    if (!idx) throw DataError("csv: unknown column '" + header[c] + "' in header");
    if (seen[*idx]) throw DataError("csv: duplicate column '" + header[c] + "'");
    seen[*idx] = true;
    column_of[c] = *idx;
  }
  for (std::size_t v = 0; v < s.size(); ++v)
    if (!seen[v]) throw DataError("csv: schema variable '" + s[v].name + "' missing from header");

  Matrix values(records.size() - 1, s.size());
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.size() != header.size())
      throw DataError("csv: row " + std::to_string(r) + " has " + std::to_string(rec.size()) + " fields, expected " +
                      std::to_string(header.size()));
    for (std::size_t c = 0; c < rec.size(); ++c) {
      const Variable& var = s[column_of[c]];
      const std::string& cell = rec[c];
      double x = 0.0;
      if (var.is_discrete()) {
        const auto it = std::find(var.labels.begin(), var.labels.end(), cell);
        if (it != var.labels.end()) {
          x = static_cast<double>(it - var.labels.begin());
        } else if (!parse_number(cell, x) || x != static_cast<double>(static_cast<long long>(x))) {
          throw DataError("csv: " + location(r, var.name) + ": unknown label '" + cell + "'");
        }
      } else if (!parse_number(cell, x)) {
        throw DataError("csv: " + location(r, var.name) + ": non-numeric value '" + cell + "'");
      }
      values(r - 1, column_of[c]) = x;
    }
  }
  const auto violations = validate_dataset(s, values);
  if (!violations.empty()) {
    const auto& v = violations.front();
    throw DataError("csv: " + location(v.row + 1, s[v.col].name) + ": " + v.reason + " (" +
                    std::to_string(violations.size()) + " violation(s))");
  }
  return Dataset(std::move(schema), std::move(values));
}

Dataset ingest_csv(const std::string& path, const std::string& schema_path) {
  auto schema = std::make_shared<const Schema>(decode_schema(read_file(schema_path)));
  return read_csv(read_file(path), std::move(schema));
}

std::string write_csv(const Dataset& data) {
  const Schema& s = data.schema();
  std::string out;
  for (std::size_t v = 0; v < s.size(); ++v) out += (v ? "," : "") + quote(s[v].name);
  out += '\n';
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto row = data.row(r);
    for (std::size_t v = 0; v < s.size(); ++v) {
      if (v) out += ',';
      if (s[v].is_discrete()) {
        const auto k = static_cast<std::size_t>(row[v]);
        out += s[v].labels.empty() ? std::to_string(k) : quote(s[v].labels[k]);
      } else {
        out += format_double(row[v]);
      }
    }
    out += '\n';
  }
  return out;
}

}  // namespace denstree
