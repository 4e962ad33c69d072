#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>

#include "denstree/bayes_net.hpp"
#include "denstree/conditional.hpp"
#include "denstree/dataset.hpp"

namespace denstree {

constexpr int kModelFormatVersion = 1;

std::string encode_schema(const Schema& schema);
/// Throws ParseError on malformed text and ConfigError on invalid variables.
Schema decode_schema(std::string_view text);
/// FNV-1a over the compact schema encoding.
std::uint64_t schema_hash(const Schema& schema);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double x);

std::string encode_model(const ConditionalModel& model, const Schema& schema);
std::string encode_model(const FactoredModel& model);

struct ModelFile {
  SchemaPtr schema;
  std::variant<ConditionalModel, FactoredModel> model;
};

/// Throws UnsupportedVersion for a different format version and ParseError
/// for anything malformed, including a schema hash mismatch.
ModelFile decode_model(std::string_view text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

}  // namespace denstree
