#pragma once

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "apie/error.hpp"

namespace apie {

enum class TupleKind { entity, relation };

/// One extracted element. Entities carry (type, text); relations carry
/// (type, head, tail). The unused surface fields are always empty.
struct ExtractionTuple {
    TupleKind kind = TupleKind::entity;
    std::string type;
    std::string text;
    std::string head;
    std::string tail;

    static ExtractionTuple entity(std::string type, std::string text);
    static ExtractionTuple relation(std::string type, std::string head, std::string tail);

    // Member order gives the canonical ordering: entities first, then
    // lexicographic by (type, text) or (type, head, tail).
    auto operator<=>(const ExtractionTuple&) const = default;
};

/// Order-free, duplicate-free collection of tuples.
class ExtractionSet {
public:
    using container = std::set<ExtractionTuple>;
    using const_iterator = container::const_iterator;

    ExtractionSet() = default;
    ExtractionSet(std::initializer_list<ExtractionTuple> tuples) : tuples_(tuples) {}
    explicit ExtractionSet(const std::vector<ExtractionTuple>& tuples)
        : tuples_(tuples.begin(), tuples.end()) {}

    bool insert(ExtractionTuple t) { return tuples_.insert(std::move(t)).second; }
    bool contains(const ExtractionTuple& t) const { return tuples_.count(t) != 0; }
    std::size_t size() const noexcept { return tuples_.size(); }
    bool empty() const noexcept { return tuples_.empty(); }
    const_iterator begin() const noexcept { return tuples_.begin(); }
    const_iterator end() const noexcept { return tuples_.end(); }

    /// Subset holding only tuples of one kind.
    ExtractionSet of_kind(TupleKind kind) const;

    bool operator==(const ExtractionSet&) const = default;

private:
    container tuples_;
};

enum class TaskKind { ner, joint_ner_re };

struct SchemaSpec {
    std::vector<std::string> entity_types;
    std::vector<std::string> relation_types;
    TaskKind task = TaskKind::ner;

    bool has_entity_type(std::string_view label) const;
    bool has_relation_type(std::string_view label) const;
};

/// Throws DataError if the schema breaks its invariants.
void validate_schema(const SchemaSpec& schema);

enum class Split { pool, test };

struct Sample {
    std::string id;
    std::string text;
    std::optional<ExtractionSet> gold;
    Split split = Split::pool;
};

struct CanonicalizationPolicy {
    bool case_fold = false;
};

/// Trim surface strings and collapse internal whitespace runs to one space.
/// Throws DataError{EmptySurface} if a surface string ends up empty.
ExtractionTuple canonicalize_tuple(const ExtractionTuple& raw, const CanonicalizationPolicy& policy = {});

/// Whitespace normalization used by canonicalize_tuple; exposed for callers
/// that need to test a surface string without building a tuple.
std::string normalize_surface(std::string_view s, bool case_fold = false);

std::string_view trim(std::string_view s);

enum class BackendKind { openai_compatible, ollama_compatible, scripted_mock };

std::string to_string(BackendKind kind);
BackendKind backend_kind_from_string(std::string_view s);

struct BackendDescriptor {
    BackendKind kind = BackendKind::ollama_compatible;
    std::string endpoint = "http://localhost:11434";
    std::string model = "qwen2.5:14b";
    double timeout_s = 120.0;
    int max_retries = 2;
    int max_inflight = 4;
    int retry_backoff_ms = 500;
    /// Fixture path for scripted_mock.
    std::string fixture;
};

struct Weights {
    double alpha = 0.8;
    double beta = 0.1;
    double gamma = 0.1;

    bool operator==(const Weights&) const = default;
};

enum class TieBreak { ascending_id };

struct RunConfig {
    int k = 3;
    int probe_exemplars = 2;
    int n_exemplars = 3;
    Weights weights;
    double temperature = 0.8;
    double lambda_fail = 0.5;
    double lambda_struct = 0.5;
    bool normalize_levenshtein_per_pair = false;
    TieBreak tie_break = TieBreak::ascending_id;
    std::int64_t seed = 0;
    BackendDescriptor backend;
    std::string cache_dir = ".apie-cache";
    bool strict_transport = false;
    bool strict_payload = false;
    bool case_fold = false;
    int final_samples = 1;

    bool operator==(const RunConfig& o) const;
};

/// Checks every RunConfig constraint and returns a copy whose weights sum
/// to one. Error codes: k_too_small, all_weights_zero, negative_weight,
/// invalid_temperature, invalid_lambda, invalid_exemplar_count,
/// invalid_backend.
RunConfig validate_config(RunConfig cfg);

struct UncertaintyScores {
    std::string sample_id;
    double u_d_raw = 0;
    double r_fail = 0;
    double s_dis = 0;
    double u_f_raw = 0;
    double u_c_raw = 0;
    int k_valid = 0;
    double u_d_norm = 0;
    double u_f_norm = 0;
    double u_c_norm = 0;
    double u_total = 0;
};

}  // namespace apie
