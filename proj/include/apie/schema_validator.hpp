#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "apie/core.hpp"

namespace apie {

enum class FailureKind {
    not_json,
    not_a_list,
    element_not_object,
    missing_required_key,
    extra_unknown_key,
    wrong_value_type,
    unknown_label,
};

std::string to_string(FailureKind kind);
std::optional<FailureKind> failure_kind_from_string(std::string_view s);

/// Shape of a parsed list: its length and the sorted key-set of every object,
/// taken before canonicalization and deduplication.
struct StructSignature {
    std::size_t length = 0;
    /// Sorted multiset of sorted key-sets; size() == length.
    std::vector<std::vector<std::string>> keyset_profile;

    bool operator==(const StructSignature&) const = default;
};

enum class ParseStatus { valid, fail };

struct ParseOutcome {
    ParseStatus status = ParseStatus::fail;
    std::optional<FailureKind> failure_kind;
    std::optional<ExtractionSet> extractions;
    std::optional<StructSignature> signature;

    bool valid() const noexcept { return status == ParseStatus::valid; }

    static ParseOutcome failure(FailureKind kind);
    static ParseOutcome success(ExtractionSet set, StructSignature sig);
};

struct ParseOptions {
    /// When true the whole (trimmed) generation must be the JSON list; no
    /// salvage from surrounding prose or code fences.
    bool strict_payload = false;
    CanonicalizationPolicy canon;
};

/// First bracket-balanced substring that starts with '['. The scan is aware of
/// JSON string literals, so brackets inside quoted text do not count.
std::optional<std::string> extract_json_payload(std::string_view raw);

/// Strict structure parser. Never throws; every failure is reported in the
/// outcome with the first failure kind encountered.
ParseOutcome parse_output(std::string_view raw, const SchemaSpec& schema, const ParseOptions& options = {});

/// Validates an already-decoded JSON list of objects.
ParseOutcome validate_object_list(const nlohmann::json& list, const SchemaSpec& schema,
                                  const CanonicalizationPolicy& canon = {});

/// Validates one object expected to be of `kind` and returns its canonical
/// tuple, or the failure kind.
struct ElementCheck {
    std::optional<ExtractionTuple> tuple;
    std::optional<FailureKind> failure;
};
ElementCheck validate_element(const nlohmann::json& element, TupleKind kind, const SchemaSpec& schema,
                              const CanonicalizationPolicy& canon = {});

/// Throws ContractViolation on a failed outcome.
const StructSignature& structural_signature(const ParseOutcome& outcome);

/// Compact canonical JSON list: entities first, then relations, each sorted;
/// keys in "type","text" / "type","head","tail" order.
std::string serialize_extractions(const ExtractionSet& set);

}  // namespace apie
