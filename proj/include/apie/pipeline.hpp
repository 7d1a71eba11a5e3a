#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "apie/annotation.hpp"
#include "apie/core.hpp"
#include "apie/evaluator.hpp"
#include "apie/gateway.hpp"
#include "apie/prompt.hpp"
#include "apie/selector.hpp"
#include "apie/uncertainty.hpp"

namespace apie {

// File names inside a run directory.
inline constexpr const char* kProbeFile = "probe.jsonl";
inline constexpr const char* kScoresFile = "scores.jsonl";
inline constexpr const char* kSelectionFile = "selection.json";
inline constexpr const char* kPredictionsFile = "predictions.jsonl";
inline constexpr const char* kReportFile = "report.json";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kAnnotationLog = "annotations.log";

struct RunInputs {
    std::filesystem::path pool;
    std::filesystem::path test;
    std::filesystem::path schema;
    /// Empty means the built-in default template.
    std::filesystem::path template_file;
    /// Labeled samples used as probing exemplars; empty means draw them from
    /// the labeled part of the pool.
    std::filesystem::path seed_exemplars;
};

struct RunContext {
    RunConfig cfg;
    RunInputs inputs;
    std::filesystem::path run_dir;
    Strategy strategy = Strategy::apie;
    LabelMode labels = LabelMode::gold_lookup;
    std::chrono::milliseconds annotation_timeout{std::chrono::minutes(30)};
};

struct ProbeRecord {
    std::string id;
    std::string config_digest;
    std::string prompt_digest;
    std::vector<std::string> generations;
};

struct PredictionRecord {
    std::string id;
    std::string prompt_digest;
    /// The first generation is the one evaluated.
    std::vector<std::string> generations;
};

struct ProbeSummary {
    std::size_t probed = 0;
    std::size_t skipped = 0;
};

/// One run directory. Inputs are loaded lazily; every stage reads and writes
/// plain files under run_dir and refreshes manifest.json.
class PipelineRun {
public:
    /// Without a gateway one is built from ctx.cfg on first use.
    explicit PipelineRun(RunContext ctx, std::shared_ptr<Gateway> gateway = nullptr);

    const RunContext& context() const noexcept { return ctx_; }
    const SchemaSpec& schema();
    const PromptTemplate& prompt_template();
    const std::vector<Sample>& pool();
    const std::vector<Sample>& test();

    /// Digest of the settings that change probe generations.
    std::string probe_config_digest() const;

    /// Probing exemplars for one pool sample; never includes the sample itself.
    std::vector<Exemplar> probe_exemplars_for(const Sample& target);
    std::string probe_prompt(const Sample& target);
    std::string final_prompt(const Sample& target, const std::vector<Exemplar>& exemplars);

    ProbeSummary probe();
    std::vector<UncertaintyScores> score();
    SelectionResult select();
    /// Exemplars for the final prompt, in selection order (none for zsl).
    std::vector<Exemplar> final_exemplars();
    std::vector<PredictionRecord> infer();
    RunReports eval();
    /// probe, score, select, infer and eval in sequence. Probing and scoring
    /// are skipped for strategies that do not use uncertainty.
    RunReports run_all();

    Gateway& gateway();

private:
    void update_manifest(const std::vector<std::string>& artifacts);
    ParseOptions parse_options() const;

    RunContext ctx_;
    std::shared_ptr<Gateway> gateway_;
    std::optional<SchemaSpec> schema_;
    std::optional<PromptTemplate> template_;
    std::optional<std::vector<Sample>> pool_;
    std::optional<std::vector<Sample>> test_;
    std::optional<std::vector<Sample>> seed_candidates_;
};

std::vector<ProbeRecord> read_probe_archive(const std::filesystem::path& path);
std::string probe_archive_jsonl(const std::vector<ProbeRecord>& records, const SchemaSpec& schema,
                                const ParseOptions& options);
std::vector<UncertaintyScores> read_scores(const std::filesystem::path& path);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

/// Selection records for the annotation service: text, scores and probe
/// previews joined from the run directory, in selection order.
std::vector<AnnotationRecord> load_annotation_records(PipelineRun& run);

struct SweepPoint {
    std::optional<int> k;
    std::optional<Weights> weights;
    std::string label() const;
};

/// Cartesian product of the "k" and "weights" lists of a grid spec; a list
/// that is absent keeps the base value. An empty grid is a ConfigError.
std::vector<SweepPoint> parse_sweep_grid(const nlohmann::json& grid);
/// Grid from a JSON file, or one of the presets "k-sweep" and "weight-sweep".
std::vector<SweepPoint> load_sweep_grid(const std::string& spec);

struct SweepRow {
    std::string model;
    SweepPoint point;
    std::filesystem::path run_dir;
    std::optional<RunReports> reports;
    std::string error;
};

/// One full run per point in its own subdirectory of ctx.run_dir, sharing one
/// gateway (and so one response cache). Failed points are recorded.
std::vector<SweepRow> run_sweep(const RunContext& base, const std::vector<SweepPoint>& points,
                                std::shared_ptr<Gateway> gateway = nullptr);
nlohmann::ordered_json sweep_to_json(const std::vector<SweepRow>& rows);
std::string render_sweep_table(const std::vector<SweepRow>& rows);

struct F1Stats {
    std::size_t runs = 0;
    double mean = 0;
    double min = 0;
    double max = 0;
    /// Population standard deviation; 0 for a single run.
    double stddev = 0;
};
F1Stats f1_stats(const std::vector<double>& values);

struct StrategySummary {
    std::string strategy;
    F1Stats ner;
    std::optional<F1Stats> re;
};

/// Verifies every manifest's artifact digests (DataError{ManifestDigestMismatch})
/// and aggregates report F1 per strategy, strategies in name order.
std::vector<StrategySummary> aggregate_manifests(const std::vector<std::filesystem::path>& manifests);
nlohmann::ordered_json summaries_to_json(const std::vector<StrategySummary>& s);
std::string render_summary_table(const std::vector<StrategySummary>& s);

/// Checks one manifest; returns the parsed document.
nlohmann::json verify_manifest(const std::filesystem::path& manifest);

}  // namespace apie
