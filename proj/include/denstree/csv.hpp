#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "denstree/dataset.hpp"

namespace denstree {

/// Splits RFC-4180 text (quoted fields, doubled quotes, CRLF or LF) into
/// records. Throws ParseError on an unterminated quote.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

/// Maps header names to schema columns (any order). Discrete cells may be a
/// declared label or an integer index. Errors name the row and column.
Dataset read_csv(std::string_view text, SchemaPtr schema);
Dataset ingest_csv(const std::string& path, const std::string& schema_path);

std::string write_csv(const Dataset& data);

}  // namespace denstree
