#include "apie/schema_validator.hpp"

#include <algorithm>

namespace apie {

using nlohmann::json;

namespace {

constexpr std::string_view kEntityKeys[] = {"text", "type"};
constexpr std::string_view kRelationKeys[] = {"head", "tail", "type"};

template <std::size_t N>
bool is_required(const std::string& key, const std::string_view (&keys)[N]) {
    return std::find(std::begin(keys), std::end(keys), key) != std::end(keys);
}

}  // namespace

std::string to_string(FailureKind kind) {
    switch (kind) {
        case FailureKind::not_json: return "not_json";
        case FailureKind::not_a_list: return "not_a_list";
        case FailureKind::element_not_object: return "element_not_object";
        case FailureKind::missing_required_key: return "missing_required_key";
        case FailureKind::extra_unknown_key: return "extra_unknown_key";
        case FailureKind::wrong_value_type: return "wrong_value_type";
        case FailureKind::unknown_label: return "unknown_label";
    }
    return "unknown";
}

std::optional<FailureKind> failure_kind_from_string(std::string_view s) {
    for (auto k : {FailureKind::not_json, FailureKind::not_a_list, FailureKind::element_not_object,
                   FailureKind::missing_required_key, FailureKind::extra_unknown_key, FailureKind::wrong_value_type,
                   FailureKind::unknown_label}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

ParseOutcome ParseOutcome::failure(FailureKind kind) {
    ParseOutcome o;
    o.status = ParseStatus::fail;
    o.failure_kind = kind;
    return o;
}

ParseOutcome ParseOutcome::success(ExtractionSet set, StructSignature sig) {
    ParseOutcome o;
    o.status = ParseStatus::valid;
    o.extractions = std::move(set);
    o.signature = std::move(sig);
    return o;
}

std::optional<std::string> extract_json_payload(std::string_view raw) {
    for (std::size_t start = raw.find('['); start != std::string_view::npos; start = raw.find('[', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < raw.size(); ++i) {
            const char c = raw[i];
            if (in_string) {
                if (escaped) {
                    escaped = false;
                } else if (c == '\\') {
                    escaped = true;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == '[') {
                ++depth;
            } else if (c == ']') {
                if (--depth == 0) return std::string(raw.substr(start, i - start + 1));
            }
        }
    }
    return std::nullopt;
}

ElementCheck validate_element(const json& element, TupleKind kind, const SchemaSpec& schema,
                              const CanonicalizationPolicy& canon) {
    ElementCheck out;
    if (!element.is_object()) {
        out.failure = FailureKind::element_not_object;
        return out;
    }
    const bool entity = kind == TupleKind::entity;
    const auto required = entity ? std::vector<std::string>{"type", "text"}
                                 : std::vector<std::string>{"type", "head", "tail"};
    for (const auto& key : required) {
        if (!element.contains(key)) {
            out.failure = FailureKind::missing_required_key;
            return out;
        }
    }
    for (const auto& [key, value] : element.items()) {
        if (entity ? !is_required(key, kEntityKeys) : !is_required(key, kRelationKeys)) {
            out.failure = FailureKind::extra_unknown_key;
            return out;
        }
    }
    for (const auto& key : required) {
        const auto& v = element.at(key);
        if (!v.is_string()) {
            out.failure = FailureKind::wrong_value_type;
            return out;
        }
        // An empty surface string is not a usable value of the required type.
        if (key != "type" && normalize_surface(v.get_ref<const std::string&>()).empty()) {
            out.failure = FailureKind::wrong_value_type;
            return out;
        }
    }
    const auto& type = element.at("type").get_ref<const std::string&>();
    if (entity ? !schema.has_entity_type(type) : !schema.has_relation_type(type)) {
        out.failure = FailureKind::unknown_label;
        return out;
    }
    if (entity) {
        out.tuple = canonicalize_tuple(ExtractionTuple::entity(type, element.at("text").get<std::string>()), canon);
    } else {
        out.tuple = canonicalize_tuple(ExtractionTuple::relation(type, element.at("head").get<std::string>(),
                                                                 element.at("tail").get<std::string>()),
                                       canon);
    }
    return out;
}

ParseOutcome validate_object_list(const json& list, const SchemaSpec& schema, const CanonicalizationPolicy& canon) {
    if (!list.is_array()) return ParseOutcome::failure(FailureKind::not_a_list);
    ExtractionSet set;
    StructSignature sig;
    sig.length = list.size();
    for (const auto& element : list) {
        TupleKind kind = TupleKind::entity;
        if (element.is_object() && schema.task == TaskKind::joint_ner_re && !element.contains("text") &&
            (element.contains("head") || element.contains("tail"))) {
            kind = TupleKind::relation;
        }
        auto check = validate_element(element, kind, schema, canon);
        if (check.failure) return ParseOutcome::failure(*check.failure);
        set.insert(std::move(*check.tuple));
        std::vector<std::string> keys;
        for (const auto& [key, value] : element.items()) keys.push_back(key);
        std::sort(keys.begin(), keys.end());
        sig.keyset_profile.push_back(std::move(keys));
    }
    std::sort(sig.keyset_profile.begin(), sig.keyset_profile.end());
    return ParseOutcome::success(std::move(set), std::move(sig));
}

ParseOutcome parse_output(std::string_view raw, const SchemaSpec& schema, const ParseOptions& options) {
    const std::string_view body = trim(raw);
    json whole = json::parse(body.begin(), body.end(), nullptr, false);
    if (!whole.is_discarded()) {
        if (!whole.is_array()) return ParseOutcome::failure(FailureKind::not_a_list);
        return validate_object_list(whole, schema, options.canon);
    }
    if (options.strict_payload) return ParseOutcome::failure(FailureKind::not_json);

    auto payload = extract_json_payload(raw);
    if (!payload) return ParseOutcome::failure(FailureKind::not_json);
    json list = json::parse(*payload, nullptr, false);
    if (list.is_discarded()) return ParseOutcome::failure(FailureKind::not_json);
    return validate_object_list(list, schema, options.canon);
}

const StructSignature& structural_signature(const ParseOutcome& outcome) {
    if (!outcome.valid() || !outcome.signature) {
        throw ContractViolation("structural_signature requires a valid parse outcome");
    }
    return *outcome.signature;
}

std::string serialize_extractions(const ExtractionSet& set) {
    nlohmann::ordered_json list = nlohmann::ordered_json::array();
    // std::set order already places entities first, then sorts by surface strings.
    for (const auto& t : set) {
        nlohmann::ordered_json o;
        o["type"] = t.type;
        if (t.kind == TupleKind::entity) {
            o["text"] = t.text;
        } else {
            o["head"] = t.head;
            o["tail"] = t.tail;
        }
        list.push_back(std::move(o));
    }
    return list.dump(-1, ' ', false, json::error_handler_t::replace);
}

}  // namespace apie
