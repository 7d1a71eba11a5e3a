#include "apie/core.hpp"

#include <algorithm>
#include <cmath>

namespace apie {

namespace {

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string canonical_surface(std::string_view s, bool case_fold, const char* field) {
    std::string out = normalize_surface(s, case_fold);
    if (out.empty()) {
        throw DataError("EmptySurface", std::string("surface string '") + field + "' is empty after trimming");
    }
    return out;
}

}  // namespace

ExtractionTuple ExtractionTuple::entity(std::string type, std::string text) {
    ExtractionTuple t;
    t.kind = TupleKind::entity;
    t.type = std::move(type);
    t.text = std::move(text);
    return t;
}

ExtractionTuple ExtractionTuple::relation(std::string type, std::string head, std::string tail) {
    ExtractionTuple t;
    t.kind = TupleKind::relation;
    t.type = std::move(type);
    t.head = std::move(head);
    t.tail = std::move(tail);
    return t;
}

ExtractionSet ExtractionSet::of_kind(TupleKind kind) const {
    ExtractionSet out;
    for (const auto& t : tuples_) {
        if (t.kind == kind) out.insert(t);
    }
    return out;
}

bool SchemaSpec::has_entity_type(std::string_view label) const {
    return std::find(entity_types.begin(), entity_types.end(), label) != entity_types.end();
}

bool SchemaSpec::has_relation_type(std::string_view label) const {
    return std::find(relation_types.begin(), relation_types.end(), label) != relation_types.end();
}

void validate_schema(const SchemaSpec& schema) {
    if (schema.entity_types.empty()) {
        throw DataError("InvalidSchema", "entity_types must not be empty");
    }
    if (schema.relation_types.empty() != (schema.task == TaskKind::ner)) {
        throw DataError("InvalidSchema", "relation_types must be empty iff the task is NER-only");
    }
}

std::string_view trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return s.substr(b, e - b);
}

std::string normalize_surface(std::string_view s, bool case_fold) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : trim(s)) {
        if (is_space(c)) {
            pending_space = true;
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        // ASCII-only folding; multilingual normalization is out of scope.
        if (case_fold && c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        out.push_back(c);
    }
    return out;
}

ExtractionTuple canonicalize_tuple(const ExtractionTuple& raw, const CanonicalizationPolicy& policy) {
    if (raw.kind == TupleKind::entity) {
        if (!raw.head.empty() || !raw.tail.empty()) {
            throw ContractViolation("entity tuple carries head/tail");
        }
        return ExtractionTuple::entity(raw.type, canonical_surface(raw.text, policy.case_fold, "text"));
    }
    if (!raw.text.empty()) {
        throw ContractViolation("relation tuple carries text");
    }
    return ExtractionTuple::relation(raw.type, canonical_surface(raw.head, policy.case_fold, "head"),
                                     canonical_surface(raw.tail, policy.case_fold, "tail"));
}

std::string to_string(BackendKind kind) {
    switch (kind) {
        case BackendKind::openai_compatible: return "openai";
        case BackendKind::ollama_compatible: return "ollama";
        case BackendKind::scripted_mock: return "mock";
    }
    return "unknown";
}

BackendKind backend_kind_from_string(std::string_view s) {
    if (s == "openai" || s == "openai_compatible") return BackendKind::openai_compatible;
    if (s == "ollama" || s == "ollama_compatible") return BackendKind::ollama_compatible;
    if (s == "mock" || s == "scripted_mock") return BackendKind::scripted_mock;
    throw ConfigError("invalid_backend", "unknown backend kind '" + std::string(s) + "'");
}

bool RunConfig::operator==(const RunConfig& o) const {
    return k == o.k && probe_exemplars == o.probe_exemplars && n_exemplars == o.n_exemplars &&
           weights == o.weights && temperature == o.temperature && lambda_fail == o.lambda_fail &&
           lambda_struct == o.lambda_struct &&
           normalize_levenshtein_per_pair == o.normalize_levenshtein_per_pair && tie_break == o.tie_break &&
           seed == o.seed && backend.kind == o.backend.kind && backend.endpoint == o.backend.endpoint &&
           backend.model == o.backend.model && backend.timeout_s == o.backend.timeout_s &&
           backend.max_retries == o.backend.max_retries && backend.max_inflight == o.backend.max_inflight &&
           backend.fixture == o.backend.fixture && cache_dir == o.cache_dir &&
           strict_transport == o.strict_transport && strict_payload == o.strict_payload &&
           case_fold == o.case_fold && final_samples == o.final_samples;
}

RunConfig validate_config(RunConfig cfg) {
    if (cfg.k < 2) {
        throw ConfigError("k_too_small", "k must be at least 2 for pairwise metrics, got " + std::to_string(cfg.k));
    }
    auto& w = cfg.weights;
    if (w.alpha < 0 || w.beta < 0 || w.gamma < 0 || !std::isfinite(w.alpha) || !std::isfinite(w.beta) ||
        !std::isfinite(w.gamma)) {
        throw ConfigError("negative_weight", "alpha, beta and gamma must be finite and non-negative");
    }
    const double sum = w.alpha + w.beta + w.gamma;
    if (sum == 0) {
        throw ConfigError("all_weights_zero", "at least one of alpha, beta, gamma must be positive");
    }
    // Already-normalized weights are kept bit-for-bit so validation is idempotent.
    if (std::abs(sum - 1.0) > 1e-12) {
        w.alpha /= sum;
        w.beta /= sum;
        w.gamma /= sum;
    }
    if (!(cfg.temperature >= 0) || !std::isfinite(cfg.temperature)) {
        throw ConfigError("invalid_temperature", "temperature must be >= 0");
    }
    if (cfg.lambda_fail < 0 || cfg.lambda_struct < 0 || cfg.lambda_fail > 1 || cfg.lambda_struct > 1 ||
        std::abs(cfg.lambda_fail + cfg.lambda_struct - 1.0) > 1e-9) {
        throw ConfigError("invalid_lambda", "lambda_fail and lambda_struct must lie in [0,1] and sum to 1");
    }
    if (cfg.n_exemplars < 1 || cfg.probe_exemplars < 0 || cfg.final_samples < 1) {
        throw ConfigError("invalid_exemplar_count",
                          "n_exemplars and final_samples must be >= 1, probe_exemplars >= 0");
    }
    if (cfg.backend.max_inflight < 1 || cfg.backend.max_retries < 0 || !(cfg.backend.timeout_s > 0)) {
        throw ConfigError("invalid_backend", "max_inflight >= 1, max_retries >= 0 and timeout > 0 required");
    }
    if (cfg.backend.kind != BackendKind::scripted_mock && cfg.backend.endpoint.empty()) {
        throw ConfigError("invalid_backend", "an endpoint is required for HTTP backends");
    }
    return cfg;
}

}  // namespace apie
