#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "apie/core.hpp"

namespace apie {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

/// {"entities":[{"type","text"}...], "relations":[{"type","head","tail"}...]}
/// in canonical order.
ordered_json gold_to_json(const ExtractionSet& set);

/// Parses the gold object format. Tuples are canonicalized and, when a schema
/// is given, labels are checked against it. Throws DataError.
ExtractionSet gold_from_json(const json& j, const SchemaSpec* schema = nullptr,
                             const CanonicalizationPolicy& policy = {});

SchemaSpec schema_from_json(const json& j);
ordered_json schema_to_json(const SchemaSpec& schema);
SchemaSpec load_schema(const std::filesystem::path& path);

/// Reads line-delimited samples; errors carry the 1-based line number.
std::vector<Sample> parse_samples(std::istream& in, Split split, const SchemaSpec* schema,
                                  const std::string& source_name = "<input>",
                                  const CanonicalizationPolicy& policy = {});
std::vector<Sample> load_samples(const std::filesystem::path& path, Split split,
                                 const SchemaSpec* schema = nullptr, const CanonicalizationPolicy& policy = {});

ordered_json sample_to_json(const Sample& s);
std::string samples_to_jsonl(const std::vector<Sample>& samples);

ordered_json config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const json& j);

}  // namespace apie
