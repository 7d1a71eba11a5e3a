#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "apie/core.hpp"
#include "apie/prompt.hpp"
#include "apie/schema_validator.hpp"

namespace apie {

struct ProbePreviewItem {
    std::string generation;
    bool valid = false;
    std::optional<FailureKind> failure_kind;
};

struct AnnotationRecord {
    std::string sample_id;
    std::string text;
    UncertaintyScores scores;
    std::vector<ProbePreviewItem> probe_preview;
    std::optional<ExtractionSet> label;
    std::int64_t version = 0;

    bool labeled() const noexcept { return label.has_value(); }
};

/// Errors raised by the annotation store. `code()` is one of
/// NoSelectionLoaded, UnknownSample, SchemaMismatch, VersionConflict,
/// IncompleteError.
class AnnotationError : public DataError {
public:
    AnnotationError(std::string code, const std::string& message) : DataError(std::move(code), message) {}

    std::optional<FailureKind> failure_kind;
    std::int64_t current_version = 0;
    std::optional<ExtractionSet> current_label;
    std::vector<std::string> pending_ids;
};

struct StoredLabel {
    ExtractionSet label;
    std::int64_t version = 0;
};

/// Appends one line and fsyncs before returning. Throws DataError{IoError}.
void append_line_durably(const std::filesystem::path& path, const std::string& line);

/// Replays the append-only label log; the last accepted write per id wins.
/// Lines that fail to parse or validate are skipped with a warning.
std::map<std::string, StoredLabel> replay_annotation_log(const std::filesystem::path& log, const SchemaSpec& schema);

/// Decodes a submitted label: either the gold object form
/// {"entities": [...], "relations": [...]} or the output list form.
/// On failure returns the validator's failure kind.
struct LabelDecode {
    std::optional<ExtractionSet> label;
    std::optional<FailureKind> failure;
};
LabelDecode decode_label(const nlohmann::json& j, const SchemaSpec& schema);

/// Label state for one selection. Writes are serialized and appended to the
/// log before they become visible; readers work on immutable snapshots.
class AnnotationStore {
public:
    AnnotationStore(SchemaSpec schema, std::filesystem::path log_path);

    /// Installs the selection (in selection order) and replays the log onto it.
    void load_selection(std::vector<AnnotationRecord> records);
    bool has_selection() const;

    std::vector<AnnotationRecord> list_selection() const;
    AnnotationRecord get(const std::string& id) const;

    /// Compare-and-set on the record version; returns the new version.
    std::int64_t submit_label(const std::string& id, const nlohmann::json& label, std::int64_t expected_version);
    std::int64_t submit_label(const std::string& id, const ExtractionSet& label, std::int64_t expected_version);

    /// Exemplars in selection order; throws IncompleteError while any is pending.
    std::vector<Exemplar> export_exemplars() const;

    const SchemaSpec& schema() const noexcept { return schema_; }
    const std::filesystem::path& log_path() const noexcept { return log_path_; }

private:
    struct State {
        std::vector<AnnotationRecord> records;
        std::map<std::string, std::size_t> index;
    };

    std::shared_ptr<const State> snapshot() const;
    std::int64_t commit(const std::string& id, ExtractionSet label, std::int64_t expected_version);

    SchemaSpec schema_;
    std::filesystem::path log_path_;
    std::mutex write_mu_;
    std::shared_ptr<const State> state_;
};

nlohmann::ordered_json record_summary_json(const AnnotationRecord& r);
nlohmann::ordered_json record_detail_json(const AnnotationRecord& r);

/// REST front end for an AnnotationStore; serves the UI bundle from ui_dir at "/".
class AnnotationService {
public:
    AnnotationService(AnnotationStore& store, std::optional<std::filesystem::path> ui_dir = std::nullopt);
    ~AnnotationService();

    AnnotationService(const AnnotationService&) = delete;
    AnnotationService& operator=(const AnnotationService&) = delete;

    /// Binds and returns the port (an ephemeral one when port == 0).
    int bind(const std::string& host, int port);
    /// Blocks serving requests until stop().
    void serve();
    void stop();
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace apie
