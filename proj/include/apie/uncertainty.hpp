#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "apie/core.hpp"
#include "apie/schema_validator.hpp"

namespace apie {

/// The k raw generations for one sample and their parse outcomes, index-aligned.
struct ProbeSet {
    std::string sample_id;
    std::vector<std::string> generations;
    std::vector<ParseOutcome> outcomes;

    std::size_t k() const noexcept { return generations.size(); }
};

/// Parses every generation with the strict parser.
ProbeSet make_probe_set(std::string sample_id, std::vector<std::string> generations, const SchemaSpec& schema,
                        const ParseOptions& options = {});

/// Decodes UTF-8 into Unicode scalar values. Bytes that are not part of a
/// well-formed sequence map one-to-one onto U+DC80..U+DCFF, so the mapping
/// stays injective on arbitrary byte strings.
std::u32string decode_utf8(std::string_view s);

/// Edit distance with unit-cost insert/delete/substitute over scalar values.
std::size_t levenshtein(std::u32string_view a, std::u32string_view b);
std::size_t levenshtein(std::string_view a, std::string_view b);

/// Mean edit distance over all unordered pairs of raw generations. With
/// per_pair_normalize each distance is divided by the longer length.
double pairwise_disagreement(const ProbeSet& probe, bool per_pair_normalize = false);

/// Fraction of outcomes that failed to parse.
double parsing_failure_rate(const ProbeSet& probe);

/// Mean pairwise structural distance between valid outputs; 0 with fewer
/// than two valid outputs.
double structural_disagreement(const ProbeSet& probe);

/// lambda_fail * r_fail + lambda_struct * s_dis. Throws ConfigError on bad weights.
double format_uncertainty(const ProbeSet& probe, double lambda_fail = 0.5, double lambda_struct = 0.5);

/// |a ∩ b| / |a ∪ b|, with two empty sets counted as identical.
double jaccard_similarity(const ExtractionSet& a, const ExtractionSet& b);

/// 1 - mean pairwise Jaccard over the valid outputs; 1 with no valid output,
/// 0 with exactly one.
double content_uncertainty(const ProbeSet& probe);

/// Pool-level min-max scaling; a constant list maps to zeros.
std::vector<double> minmax_normalize(std::span<const double> values);

/// Weighted sum of normalized signals. Weights must already sum to one and
/// inputs must lie in [0,1].
double total_uncertainty(double u_d_norm, double u_f_norm, double u_c_norm, const Weights& weights);

struct ScoringOptions {
    bool per_pair_normalize = false;
    double lambda_fail = 0.5;
    double lambda_struct = 0.5;
};

ScoringOptions scoring_options(const RunConfig& cfg);

/// Raw (unnormalized) signals for one probe set.
UncertaintyScores score_probe(const ProbeSet& probe, const ScoringOptions& options = {});

/// Normalization barrier: fills the *_norm fields and u_total across the pool.
void normalize_pool(std::vector<UncertaintyScores>& pool, const Weights& weights);

/// Scores then normalizes a whole pool.
std::vector<UncertaintyScores> score_pool(std::span<const ProbeSet> probes, const Weights& weights,
                                          const ScoringOptions& options = {});

nlohmann::ordered_json scores_to_json(const UncertaintyScores& s);
UncertaintyScores scores_from_json(const nlohmann::json& j);

}  // namespace apie
