#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "apie/core.hpp"
#include "apie/prompt.hpp"

namespace apie {

enum class Strategy { apie, zsl, rsl, kd_sort, active_prompt };

std::string to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);

struct SelectionResult {
    Strategy strategy = Strategy::apie;
    std::vector<std::string> selected_ids;
    /// Pool scores for the uncertainty-driven strategies; empty otherwise.
    std::map<std::string, UncertaintyScores> scores;
    std::int64_t seed = 0;
    Weights weights;
};

/// Top-n by u_total descending, ties broken by ascending id.
/// Throws DataError{SelectionError} on an empty pool or n outside [1, pool].
SelectionResult rank_and_select(std::span<const UncertaintyScores> pool_scores, int n);

/// Same as rank_and_select but keyed on u_d_norm alone.
SelectionResult select_active_prompt(std::span<const UncertaintyScores> pool_scores, int n);

/// Uniform sample without replacement; the draw order is the result order and
/// depends only on the seed (no implementation-defined distributions).
SelectionResult select_random(std::span<const Sample> pool, int n, std::int64_t seed);

/// Gold tuples per whitespace token, or capitalized tokens per token when a
/// sample has no gold.
double knowledge_density(const Sample& s);
SelectionResult select_kd_sort(std::span<const Sample> pool, int n);

SelectionResult select_zero_shot();

/// Index sequence of a seeded partial Fisher-Yates shuffle of [0, size).
std::vector<std::size_t> seeded_sample_indices(std::size_t size, std::size_t n, std::int64_t seed);

enum class LabelMode { gold_lookup, annotation_service };

struct AnnotationWait {
    std::filesystem::path store_log;
    const SchemaSpec* schema = nullptr;
    std::chrono::milliseconds deadline{std::chrono::minutes(30)};
    std::chrono::milliseconds poll_interval{500};
};

/// Exemplars for the selected ids, in selection order. gold_lookup throws
/// DataError{MissingGold}; annotation_service polls the annotation log until
/// every id is labeled or throws DataError{AnnotationTimeout}.
std::vector<Exemplar> resolve_labels(const SelectionResult& selection, std::span<const Sample> pool, LabelMode mode,
                                     const AnnotationWait& wait = {});

/// {"strategy","seed","n","selected_ids","weights":{...}}
nlohmann::ordered_json selection_manifest(const SelectionResult& r);
SelectionResult selection_from_manifest(const nlohmann::json& j);

}  // namespace apie
