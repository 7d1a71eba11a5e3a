#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "apie/core.hpp"
#include "apie/schema_validator.hpp"

namespace apie {

enum class EvalTask { ner, re };

std::string to_string(EvalTask t);

struct MatchCounts {
    long tp = 0;
    long fp = 0;
    long fn = 0;

    bool operator==(const MatchCounts&) const = default;
};

struct SampleCounts {
    std::string id;
    MatchCounts counts;
    bool parse_failed = false;
};

struct EvalReport {
    EvalTask task = EvalTask::ner;
    long tp = 0;
    long fp = 0;
    long fn = 0;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    std::vector<SampleCounts> per_sample;
};

/// Strict set matching on canonical tuples of the task's kind. A failed
/// parse counts as an empty prediction.
MatchCounts score_sample(const ParseOutcome& pred, const ExtractionSet& gold, EvalTask task);

/// Pools counts over samples; every 0/0 ratio is 0.
EvalReport micro_f1(EvalTask task, std::vector<SampleCounts> per_sample);

struct RunReports {
    EvalReport ner;
    std::optional<EvalReport> re;
};

/// NER always, RE only for joint schemas. Throws DataError{MissingGold} or
/// DataError{MissingPrediction}.
RunReports evaluate_run(const std::map<std::string, ParseOutcome>& predictions, std::span<const Sample> test,
                        const SchemaSpec& schema);

nlohmann::ordered_json report_to_json(const EvalReport& r);
nlohmann::ordered_json reports_to_json(const RunReports& r);
EvalReport report_from_json(const nlohmann::json& j);

/// Fixed-width table with "NER F1" and "RE F1" columns, F1 shown as a percentage.
std::string render_f1_table(const std::vector<std::pair<std::string, RunReports>>& rows);

}  // namespace apie
