#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <iostream>

#include "apie/annotation.hpp"
#include "apie/dataset.hpp"
#include "apie/fsutil.hpp"
#include "apie/uncertainty.hpp"

namespace apie {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

[[noreturn]] void schema_mismatch(FailureKind kind, const std::string& id) {
    AnnotationError err("SchemaMismatch", "label for '" + id + "' fails validation: " + to_string(kind));
    err.failure_kind = kind;
    throw err;
}

}  // namespace

void append_line_durably(const fs::path& path, const std::string& line) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) throw DataError("IoError", "cannot open " + path.string() + ": " + std::strerror(errno));
    const std::string data = line + "\n";
    std::size_t written = 0;
    while (written < data.size()) {
        const auto n = ::write(fd, data.data() + written, data.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            ::close(fd);
            throw DataError("IoError", "write to " + path.string() + " failed: " + std::strerror(errno));
        }
        written += static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
}

LabelDecode decode_label(const json& j, const SchemaSpec& schema) {
    LabelDecode out;
    if (j.is_array()) {
        auto outcome = validate_object_list(j, schema);
        if (outcome.valid()) {
            out.label = std::move(*outcome.extractions);
        } else {
            out.failure = outcome.failure_kind;
        }
        return out;
    }
    if (!j.is_object()) {
        out.failure = FailureKind::not_a_list;
        return out;
    }
    ExtractionSet set;
    for (const auto& [key, value] : j.items()) {
        TupleKind kind;
        if (key == "entities") {
            kind = TupleKind::entity;
        } else if (key == "relations") {
            kind = TupleKind::relation;
        } else {
            out.failure = FailureKind::extra_unknown_key;
            return out;
        }
        if (!value.is_array()) {
            out.failure = FailureKind::not_a_list;
            return out;
        }
        for (const auto& element : value) {
            auto check = validate_element(element, kind, schema);
            if (check.failure) {
                out.failure = check.failure;
                return out;
            }
            set.insert(std::move(*check.tuple));
        }
    }
    out.label = std::move(set);
    return out;
}

std::map<std::string, StoredLabel> replay_annotation_log(const fs::path& log, const SchemaSpec& schema) {
    std::map<std::string, StoredLabel> out;
    std::error_code ec;
    if (!fs::exists(log, ec)) return out;
    const auto lines = split_lines(read_file(log));
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const json j = json::parse(lines[i], nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j["id"].is_string() ||
            !j.contains("version") || !j["version"].is_number_integer() || !j.contains("label")) {
            // A torn final line after a crash lands here too.
            std::cerr << "warning: skipping malformed annotation log line " << log << ":" << i + 1 << "\n";
            continue;
        }
        auto decoded = decode_label(j["label"], schema);
        if (!decoded.label) {
            std::cerr << "warning: skipping invalid label in " << log << ":" << i + 1 << "\n";
            continue;
        }
        out[j["id"].get<std::string>()] = StoredLabel{std::move(*decoded.label), j["version"].get<std::int64_t>()};
    }
    return out;
}

AnnotationStore::AnnotationStore(SchemaSpec schema, fs::path log_path)
    : schema_(std::move(schema)), log_path_(std::move(log_path)) {}

void AnnotationStore::load_selection(std::vector<AnnotationRecord> records) {
    auto state = std::make_shared<State>();
    const auto stored = replay_annotation_log(log_path_, schema_);
    for (auto& r : records) {
        if (auto it = stored.find(r.sample_id); it != stored.end()) {
            r.label = it->second.label;
            r.version = it->second.version;
        }
        if (!state->index.emplace(r.sample_id, state->records.size()).second) {
            throw DataError("DuplicateId", "selection lists '" + r.sample_id + "' twice");
        }
        state->records.push_back(std::move(r));
    }
    std::lock_guard lock(write_mu_);
    std::atomic_store(&state_, std::shared_ptr<const State>(std::move(state)));
}

std::shared_ptr<const AnnotationStore::State> AnnotationStore::snapshot() const {
    auto s = std::atomic_load(&state_);
    if (!s) throw AnnotationError("NoSelectionLoaded", "no selection manifest has been loaded");
    return s;
}

bool AnnotationStore::has_selection() const { return std::atomic_load(&state_) != nullptr; }

std::vector<AnnotationRecord> AnnotationStore::list_selection() const { return snapshot()->records; }

AnnotationRecord AnnotationStore::get(const std::string& id) const {
    auto s = snapshot();
    auto it = s->index.find(id);
    if (it == s->index.end()) throw AnnotationError("UnknownSample", "'" + id + "' is not in the selection");
    return s->records[it->second];
}

std::int64_t AnnotationStore::submit_label(const std::string& id, const json& label, std::int64_t expected_version) {
    get(id);
    auto decoded = decode_label(label, schema_);
    if (!decoded.label) schema_mismatch(*decoded.failure, id);
    return commit(id, std::move(*decoded.label), expected_version);
}

std::int64_t AnnotationStore::submit_label(const std::string& id, const ExtractionSet& label,
                                           std::int64_t expected_version) {
    get(id);
    auto outcome = parse_output(serialize_extractions(label), schema_, ParseOptions{true, {}});
    if (!outcome.valid()) schema_mismatch(*outcome.failure_kind, id);
    return commit(id, std::move(*outcome.extractions), expected_version);
}

std::int64_t AnnotationStore::commit(const std::string& id, ExtractionSet label, std::int64_t expected_version) {
    std::lock_guard lock(write_mu_);
    const auto current = snapshot();
    const auto& record = current->records[current->index.at(id)];
    if (record.version != expected_version) {
        AnnotationError err("VersionConflict", "'" + id + "' is at version " + std::to_string(record.version) +
                                                   ", not " + std::to_string(expected_version));
        err.current_version = record.version;
        err.current_label = record.label;
        throw err;
    }
    const std::int64_t next = record.version + 1;

    ordered_json line;
    line["id"] = id;
    line["version"] = next;
    line["label"] = gold_to_json(label);
    append_line_durably(log_path_, line.dump(-1, ' ', false, json::error_handler_t::replace));

    auto updated = std::make_shared<State>(*current);
    auto& target = updated->records[updated->index.at(id)];
    target.label = std::move(label);
    target.version = next;
    std::atomic_store(&state_, std::shared_ptr<const State>(std::move(updated)));
    return next;
}

std::vector<Exemplar> AnnotationStore::export_exemplars() const {
    const auto s = snapshot();
    std::vector<std::string> pending;
    for (const auto& r : s->records) {
        if (!r.labeled()) pending.push_back(r.sample_id);
    }
    if (!pending.empty()) {
        AnnotationError err("IncompleteError", std::to_string(pending.size()) + " selected sample(s) still pending");
        err.pending_ids = std::move(pending);
        throw err;
    }
    std::vector<Exemplar> out;
    for (const auto& r : s->records) out.push_back(Exemplar{r.sample_id, r.text, *r.label});
    return out;
}

ordered_json record_summary_json(const AnnotationRecord& r) {
    ordered_json j;
    j["id"] = r.sample_id;
    j["status"] = r.labeled() ? "labeled" : "pending";
    j["version"] = r.version;
    j["u_total"] = r.scores.u_total;
    j["u_d"] = r.scores.u_d_norm;
    j["u_f"] = r.scores.u_f_norm;
    j["u_c"] = r.scores.u_c_norm;
    return j;
}

ordered_json record_detail_json(const AnnotationRecord& r) {
    ordered_json j = record_summary_json(r);
    j["text"] = r.text;
    j["scores"] = scores_to_json(r.scores);
    auto preview = ordered_json::array();
    for (const auto& p : r.probe_preview) {
        ordered_json o;
        o["generation"] = p.generation;
        o["status"] = p.valid ? "valid" : "fail";
        o["failure_kind"] = p.failure_kind ? ordered_json(to_string(*p.failure_kind)) : ordered_json(nullptr);
        preview.push_back(std::move(o));
    }
    j["probe_preview"] = std::move(preview);
    j["label"] = r.label ? gold_to_json(*r.label) : ordered_json(nullptr);
    return j;
}

}  // namespace apie
