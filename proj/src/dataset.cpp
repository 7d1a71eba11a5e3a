#include "apie/dataset.hpp"

#include <fstream>
#include <istream>
#include <unordered_set>

#include "apie/fsutil.hpp"

namespace apie {

namespace {

std::string require_string(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) {
        throw DataError("MalformedRecord", where + ": \"" + key + "\" must be a string");
    }
    return it->get<std::string>();
}

std::vector<std::string> string_list(const json& j, const char* key) {
    std::vector<std::string> out;
    auto it = j.find(key);
    if (it == j.end()) return out;
    if (!it->is_array()) throw DataError("InvalidSchema", std::string("\"") + key + "\" must be a list");
    for (const auto& v : *it) {
        if (!v.is_string()) throw DataError("InvalidSchema", std::string("\"") + key + "\" entries must be strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

}  // namespace

ordered_json gold_to_json(const ExtractionSet& set) {
    ordered_json entities = ordered_json::array();
    ordered_json relations = ordered_json::array();
    for (const auto& t : set) {
        ordered_json o;
        o["type"] = t.type;
        if (t.kind == TupleKind::entity) {
            o["text"] = t.text;
            entities.push_back(std::move(o));
        } else {
            o["head"] = t.head;
            o["tail"] = t.tail;
            relations.push_back(std::move(o));
        }
    }
    ordered_json out;
    out["entities"] = std::move(entities);
    out["relations"] = std::move(relations);
    return out;
}

ExtractionSet gold_from_json(const json& j, const SchemaSpec* schema, const CanonicalizationPolicy& policy) {
    if (!j.is_object()) throw DataError("MalformedRecord", "gold must be an object");
    ExtractionSet out;
    if (auto it = j.find("entities"); it != j.end()) {
        if (!it->is_array()) throw DataError("MalformedRecord", "gold.entities must be a list");
        for (const auto& e : *it) {
            if (!e.is_object()) throw DataError("MalformedRecord", "gold entity must be an object");
            auto t = canonicalize_tuple(
                ExtractionTuple::entity(require_string(e, "type", "gold entity"), require_string(e, "text", "gold entity")),
                policy);
            if (schema && !schema->has_entity_type(t.type)) {
                throw DataError("UnknownLabel", "gold entity type '" + t.type + "' not in schema");
            }
            out.insert(std::move(t));
        }
    }
    if (auto it = j.find("relations"); it != j.end()) {
        if (!it->is_array()) throw DataError("MalformedRecord", "gold.relations must be a list");
        for (const auto& r : *it) {
            if (!r.is_object()) throw DataError("MalformedRecord", "gold relation must be an object");
            auto t = canonicalize_tuple(ExtractionTuple::relation(require_string(r, "type", "gold relation"),
                                                                  require_string(r, "head", "gold relation"),
                                                                  require_string(r, "tail", "gold relation")),
                                        policy);
            if (schema && !schema->has_relation_type(t.type)) {
                throw DataError("UnknownLabel", "gold relation type '" + t.type + "' not in schema");
            }
            out.insert(std::move(t));
        }
    }
    return out;
}

SchemaSpec schema_from_json(const json& j) {
    if (!j.is_object()) throw DataError("InvalidSchema", "schema must be a JSON object");
    SchemaSpec s;
    s.entity_types = string_list(j, "entity_types");
    s.relation_types = string_list(j, "relation_types");
    s.task = s.relation_types.empty() ? TaskKind::ner : TaskKind::joint_ner_re;
    validate_schema(s);
    return s;
}

ordered_json schema_to_json(const SchemaSpec& schema) {
    ordered_json j;
    j["entity_types"] = schema.entity_types;
    j["relation_types"] = schema.relation_types;
    return j;
}

SchemaSpec load_schema(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw DataError("InvalidSchema", path.string() + ": " + e.what());
    }
    return schema_from_json(j);
}

std::vector<Sample> parse_samples(std::istream& in, Split split, const SchemaSpec* schema,
                                  const std::string& source_name, const CanonicalizationPolicy& policy) {
    std::vector<Sample> out;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = source_name + ":" + std::to_string(line_no);
        try {
            json j = json::parse(line);
            if (!j.is_object()) throw DataError("MalformedRecord", "record must be an object");
            Sample s;
            s.id = require_string(j, "id", "record");
            s.text = require_string(j, "text", "record");
            s.split = split;
            if (s.id.empty()) throw DataError("MalformedRecord", "empty id");
            if (trim(s.text).empty()) throw DataError("MalformedRecord", "text is empty after trimming");
            if (auto it = j.find("gold"); it != j.end() && !it->is_null()) {
                s.gold = gold_from_json(*it, schema, policy);
            }
            if (!seen.insert(s.id).second) throw DataError("DuplicateId", "duplicate id '" + s.id + "'");
            out.push_back(std::move(s));
        } catch (const json::parse_error& e) {
            throw DataError("MalformedRecord", where + ": invalid JSON: " + e.what());
        } catch (const DataError& e) {
            throw DataError(e.code(), where + ": " + e.detail());
        }
    }
    return out;
}

std::vector<Sample> load_samples(const std::filesystem::path& path, Split split, const SchemaSpec* schema,
                                 const CanonicalizationPolicy& policy) {
    std::ifstream in(path);
    if (!in) throw DataError("IoError", "cannot open " + path.string());
    return parse_samples(in, split, schema, path.string(), policy);
}

ordered_json sample_to_json(const Sample& s) {
    ordered_json j;
    j["id"] = s.id;
    j["text"] = s.text;
    if (s.gold) j["gold"] = gold_to_json(*s.gold);
    return j;
}

std::string samples_to_jsonl(const std::vector<Sample>& samples) {
    std::string out;
    for (const auto& s : samples) {
        out += sample_to_json(s).dump(-1, ' ', false, json::error_handler_t::replace);
        out += '\n';
    }
    return out;
}

ordered_json config_to_json(const RunConfig& cfg) {
    ordered_json j;
    j["k"] = cfg.k;
    j["temperature"] = cfg.temperature;
    j["alpha"] = cfg.weights.alpha;
    j["beta"] = cfg.weights.beta;
    j["gamma"] = cfg.weights.gamma;
    j["probe_exemplars"] = cfg.probe_exemplars;
    j["n_exemplars"] = cfg.n_exemplars;
    j["lambda_fail"] = cfg.lambda_fail;
    j["lambda_struct"] = cfg.lambda_struct;
    j["normalize_levenshtein_per_pair"] = cfg.normalize_levenshtein_per_pair;
    j["tie_break"] = "ascending_id";
    j["seed"] = cfg.seed;
    j["strict_transport"] = cfg.strict_transport;
    j["strict_payload"] = cfg.strict_payload;
    j["case_fold"] = cfg.case_fold;
    j["final_samples"] = cfg.final_samples;
    ordered_json b;
    b["kind"] = to_string(cfg.backend.kind);
    b["endpoint"] = cfg.backend.endpoint;
    b["model"] = cfg.backend.model;
    b["timeout_s"] = cfg.backend.timeout_s;
    b["max_retries"] = cfg.backend.max_retries;
    b["max_inflight"] = cfg.backend.max_inflight;
    b["fixture"] = cfg.backend.fixture;
    j["backend"] = std::move(b);
    j["cache_dir"] = cfg.cache_dir;
    return j;
}

RunConfig config_from_json(const json& j) {
    RunConfig c;
    c.k = j.value("k", c.k);
    c.temperature = j.value("temperature", c.temperature);
    c.weights.alpha = j.value("alpha", c.weights.alpha);
    c.weights.beta = j.value("beta", c.weights.beta);
    c.weights.gamma = j.value("gamma", c.weights.gamma);
    c.probe_exemplars = j.value("probe_exemplars", c.probe_exemplars);
    c.n_exemplars = j.value("n_exemplars", c.n_exemplars);
    c.lambda_fail = j.value("lambda_fail", c.lambda_fail);
    c.lambda_struct = j.value("lambda_struct", c.lambda_struct);
    c.normalize_levenshtein_per_pair = j.value("normalize_levenshtein_per_pair", c.normalize_levenshtein_per_pair);
    c.seed = j.value("seed", c.seed);
    c.strict_transport = j.value("strict_transport", c.strict_transport);
    c.strict_payload = j.value("strict_payload", c.strict_payload);
    c.case_fold = j.value("case_fold", c.case_fold);
    c.final_samples = j.value("final_samples", c.final_samples);
    if (auto it = j.find("backend"); it != j.end() && it->is_object()) {
        const auto& b = *it;
        if (b.contains("kind")) c.backend.kind = backend_kind_from_string(b["kind"].get<std::string>());
        c.backend.endpoint = b.value("endpoint", c.backend.endpoint);
        c.backend.model = b.value("model", c.backend.model);
        c.backend.timeout_s = b.value("timeout_s", c.backend.timeout_s);
        c.backend.max_retries = b.value("max_retries", c.backend.max_retries);
        c.backend.max_inflight = b.value("max_inflight", c.backend.max_inflight);
        c.backend.fixture = b.value("fixture", c.backend.fixture);
    }
    c.cache_dir = j.value("cache_dir", c.cache_dir);
    return c;
}

}  // namespace apie
