#include "apie/pipeline.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <ctime>
#include <exception>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "apie/dataset.hpp"
#include "apie/digest.hpp"
#include "apie/fsutil.hpp"

namespace apie {

namespace fs = std::filesystem;

namespace {

std::string dump(const ordered_json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. After the first
/// exception no new indices are started; it is rethrown once all workers stop.
template <typename F>
void parallel_for(std::size_t n, int workers, F fn) {
    if (n == 0) return;
    const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first;
    std::mutex err_mu;
    auto worker = [&] {
        for (;;) {
            if (failed) return;
            const std::size_t i = next++;
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(err_mu);
                if (!first) first = std::current_exception();
                failed = true;
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (first) std::rethrow_exception(first);
}

json parse_line(const std::string& line, const fs::path& source, std::size_t lineno) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw DataError("MalformedRecord", source.string() + ":" + std::to_string(lineno) + ": not a JSON object");
    }
    return j;
}

template <typename F>
void for_each_jsonl(const fs::path& path, F fn) {
    const auto lines = split_lines(read_file(path));
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        const json j = parse_line(lines[i], path, i + 1);
        try {
            fn(j);
        } catch (const json::exception& e) {
            throw DataError("MalformedRecord", path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
        }
    }
}

ordered_json outcome_json(const ParseOutcome& o) {
    ordered_json j;
    j["status"] = o.valid() ? "valid" : "fail";
    j["failure_kind"] = o.failure_kind ? ordered_json(to_string(*o.failure_kind)) : ordered_json(nullptr);
    return j;
}

bool uses_uncertainty(Strategy s) { return s == Strategy::apie || s == Strategy::active_prompt; }

ordered_json file_entry(const fs::path& path, const fs::path& base) {
    ordered_json j;
    std::error_code ec;
    const auto rel = fs::relative(path, base, ec);
    j["path"] = (ec || rel.empty()) ? path.string() : rel.string();
    j["sha256"] = file_sha256(path);
    return j;
}

std::string format_weights(const Weights& w) {
    std::ostringstream out;
    out << "(" << w.alpha << "," << w.beta << "," << w.gamma << ")";
    return out.str();
}

std::string pct(double f1) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(2) << f1 * 100.0;
    return out.str();
}

}  // namespace

PipelineRun::PipelineRun(RunContext ctx, std::shared_ptr<Gateway> gateway)
    : ctx_(std::move(ctx)), gateway_(std::move(gateway)) {
    ctx_.cfg = validate_config(ctx_.cfg);
}

ParseOptions PipelineRun::parse_options() const {
    ParseOptions o;
    o.strict_payload = ctx_.cfg.strict_payload;
    o.canon.case_fold = ctx_.cfg.case_fold;
    return o;
}

Gateway& PipelineRun::gateway() {
    if (!gateway_) gateway_ = make_gateway(ctx_.cfg);
    return *gateway_;
}

const SchemaSpec& PipelineRun::schema() {
    if (!schema_) {
        if (ctx_.inputs.schema.empty()) throw ConfigError("MissingInput", "--schema is required");
        schema_ = load_schema(ctx_.inputs.schema);
    }
    return *schema_;
}

const PromptTemplate& PipelineRun::prompt_template() {
    if (!template_) {
        template_ = ctx_.inputs.template_file.empty() ? PromptTemplate::default_template()
                                                      : PromptTemplate::load(ctx_.inputs.template_file);
    }
    return *template_;
}

const std::vector<Sample>& PipelineRun::pool() {
    if (!pool_) {
        if (ctx_.inputs.pool.empty()) throw ConfigError("MissingInput", "--pool is required");
        pool_ = load_samples(ctx_.inputs.pool, Split::pool, &schema(), CanonicalizationPolicy{ctx_.cfg.case_fold});
    }
    return *pool_;
}

const std::vector<Sample>& PipelineRun::test() {
    if (!test_) {
        if (ctx_.inputs.test.empty()) throw ConfigError("MissingInput", "--test is required");
        auto samples = load_samples(ctx_.inputs.test, Split::test, &schema(), CanonicalizationPolicy{ctx_.cfg.case_fold});
        if (!ctx_.inputs.pool.empty()) {
            std::set<std::string> pool_ids;
            for (const auto& s : pool()) pool_ids.insert(s.id);
            for (const auto& s : samples) {
                if (pool_ids.count(s.id)) {
                    throw DataError("SplitOverlap", "id '" + s.id + "' appears in both the pool and the test set");
                }
            }
        }
        test_ = std::move(samples);
    }
    return *test_;
}

std::string PipelineRun::probe_config_digest() const {
    ordered_json j;
    j["k"] = ctx_.cfg.k;
    j["temperature"] = ctx_.cfg.temperature;
    j["seed"] = ctx_.cfg.seed;
    j["probe_exemplars"] = ctx_.cfg.probe_exemplars;
    j["backend"] = to_string(ctx_.cfg.backend.kind);
    j["model"] = ctx_.cfg.backend.model;
    return sha256_hex(dump(j));
}

std::vector<Exemplar> PipelineRun::probe_exemplars_for(const Sample& target) {
    const auto want = static_cast<std::size_t>(ctx_.cfg.probe_exemplars);
    if (want == 0) return {};
    if (!seed_candidates_) {
        std::vector<Sample> candidates;
        if (!ctx_.inputs.seed_exemplars.empty()) {
            candidates = load_samples(ctx_.inputs.seed_exemplars, Split::pool, &schema(),
                                      CanonicalizationPolicy{ctx_.cfg.case_fold});
            for (const auto& s : candidates) {
                if (!s.gold) throw DataError("MissingGold", "seed exemplar '" + s.id + "' has no gold labels");
            }
        } else {
            std::vector<Sample> labeled;
            for (const auto& s : pool()) {
                if (s.gold) labeled.push_back(s);
            }
            // One spare so a sample drawn as an exemplar can still get a full set.
            for (auto i : seeded_sample_indices(labeled.size(), want + 1, ctx_.cfg.seed)) {
                candidates.push_back(labeled[i]);
            }
        }
        if (candidates.size() < want) {
            throw DataError("MissingSeedExemplars", "need " + std::to_string(want) + " labeled seed exemplars, found " +
                                                        std::to_string(candidates.size()));
        }
        seed_candidates_ = std::move(candidates);
    }
    std::vector<Exemplar> out;
    for (const auto& s : *seed_candidates_) {
        if (out.size() == want) break;
        if (s.id == target.id) continue;
        out.push_back(Exemplar{s.id, s.text, *s.gold});
    }
    return out;
}

std::string PipelineRun::probe_prompt(const Sample& target) {
    return build_prompt(target, probe_exemplars_for(target), prompt_template(), schema());
}

std::string PipelineRun::final_prompt(const Sample& target, const std::vector<Exemplar>& exemplars) {
    return build_prompt(target, exemplars, prompt_template(), schema());
}

ProbeSummary PipelineRun::probe() {
    const auto& samples = pool();
    const auto path = ctx_.run_dir / kProbeFile;
    const std::string cfg_digest = probe_config_digest();

    std::vector<std::string> prompts;
    prompts.reserve(samples.size());
    for (const auto& s : samples) prompts.push_back(probe_prompt(s));

    std::vector<std::optional<ProbeRecord>> records(samples.size());
    std::error_code ec;
    if (fs::exists(path, ec)) {
        std::unordered_map<std::string, ProbeRecord> previous;
        for (auto& r : read_probe_archive(path)) previous.emplace(r.id, std::move(r));
        for (std::size_t i = 0; i < samples.size(); ++i) {
            auto it = previous.find(samples[i].id);
            if (it == previous.end()) continue;
            if (it->second.config_digest == cfg_digest && it->second.prompt_digest == sha256_hex(prompts[i]) &&
                it->second.generations.size() == static_cast<std::size_t>(ctx_.cfg.k)) {
                records[i] = std::move(it->second);
            }
        }
    }

    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!records[i]) todo.push_back(i);
    }
    ProbeSummary summary;
    summary.skipped = samples.size() - todo.size();

    const auto& sch = schema();
    const auto options = parse_options();
    std::mutex archive_mu;
    auto write_archive = [&] {
        std::vector<ProbeRecord> done;
        for (const auto& r : records) {
            if (r) done.push_back(*r);
        }
        atomic_write(path, probe_archive_jsonl(done, sch, options));
    };
    if (todo.empty()) write_archive();

    Gateway& gw = gateway();
    parallel_for(todo.size(), ctx_.cfg.backend.max_inflight, [&](std::size_t t) {
        const std::size_t i = todo[t];
        ProbeRecord rec;
        rec.id = samples[i].id;
        rec.config_digest = cfg_digest;
        rec.prompt_digest = sha256_hex(prompts[i]);
        rec.generations = gw.generate_k(prompts[i], ctx_.cfg.k, ctx_.cfg);
        std::lock_guard lock(archive_mu);
        records[i] = std::move(rec);
        ++summary.probed;
        write_archive();
    });

    update_manifest({kProbeFile});
    return summary;
}

std::vector<UncertaintyScores> PipelineRun::score() {
    const auto& samples = pool();
    const auto path = ctx_.run_dir / kProbeFile;
    std::error_code ec;
    if (!fs::exists(path, ec)) throw DataError("IncompleteArchive", "no probe archive at " + path.string());
    const std::string cfg_digest = probe_config_digest();

    std::unordered_map<std::string, ProbeRecord> by_id;
    for (auto& r : read_probe_archive(path)) by_id.emplace(r.id, std::move(r));
    std::vector<std::string> missing;
    for (const auto& s : samples) {
        auto it = by_id.find(s.id);
        if (it == by_id.end() || it->second.config_digest != cfg_digest ||
            it->second.generations.size() != static_cast<std::size_t>(ctx_.cfg.k)) {
            missing.push_back(s.id);
        }
    }
    if (!missing.empty()) {
        throw DataError("IncompleteArchive", std::to_string(missing.size()) +
                                                 " pool sample(s) lack probes for this config, first: " + missing.front());
    }

    const auto& sch = schema();
    const auto options = parse_options();
    const auto scoring = scoring_options(ctx_.cfg);
    std::vector<UncertaintyScores> scores(samples.size());
    parallel_for(samples.size(), static_cast<int>(std::max(1u, std::thread::hardware_concurrency())),
                 [&](std::size_t i) {
                     const auto& rec = by_id.at(samples[i].id);
                     scores[i] = score_probe(make_probe_set(rec.id, rec.generations, sch, options), scoring);
                 });
    normalize_pool(scores, ctx_.cfg.weights);

    std::string out;
    for (const auto& s : scores) out += dump(scores_to_json(s)) + "\n";
    atomic_write(ctx_.run_dir / kScoresFile, out);
    update_manifest({kScoresFile});
    return scores;
}

SelectionResult PipelineRun::select() {
    const int n = ctx_.cfg.n_exemplars;
    SelectionResult r;
    switch (ctx_.strategy) {
        case Strategy::apie:
        case Strategy::active_prompt: {
            const auto path = ctx_.run_dir / kScoresFile;
            std::error_code ec;
            if (!fs::exists(path, ec)) throw DataError("MissingScores", "run `apie score` first: no " + path.string());
            const auto scores = read_scores(path);
            if (ctx_.strategy == Strategy::apie) {
                r = rank_and_select(scores, n);
                r.weights = ctx_.cfg.weights;
            } else {
                r = select_active_prompt(scores, n);
            }
            r.seed = ctx_.cfg.seed;
            break;
        }
        case Strategy::rsl:
            r = select_random(pool(), n, ctx_.cfg.seed);
            r.weights = ctx_.cfg.weights;
            break;
        case Strategy::kd_sort:
            r = select_kd_sort(pool(), n);
            r.seed = ctx_.cfg.seed;
            r.weights = ctx_.cfg.weights;
            break;
        case Strategy::zsl:
            r = select_zero_shot();
            r.seed = ctx_.cfg.seed;
            r.weights = ctx_.cfg.weights;
            break;
    }
    ordered_json manifest = selection_manifest(r);
    atomic_write(ctx_.run_dir / kSelectionFile, manifest.dump(2) + "\n");
    update_manifest({kSelectionFile});
    return r;
}

std::vector<Exemplar> PipelineRun::final_exemplars() {
    const auto path = ctx_.run_dir / kSelectionFile;
    std::error_code ec;
    if (!fs::exists(path, ec)) throw DataError("MissingSelection", "run `apie select` first: no " + path.string());
    const json j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw DataError("MalformedSelection", path.string() + " is not valid JSON");
    const auto selection = selection_from_manifest(j);
    if (selection.strategy == Strategy::zsl || selection.selected_ids.empty()) return {};
    AnnotationWait wait;
    wait.store_log = ctx_.run_dir / kAnnotationLog;
    wait.schema = &schema();
    wait.deadline = ctx_.annotation_timeout;
    return resolve_labels(selection, pool(), ctx_.labels, wait);
}

std::vector<PredictionRecord> PipelineRun::infer() {
    const auto exemplars = final_exemplars();
    const auto& samples = test();
    std::vector<PredictionRecord> out(samples.size());
    Gateway& gw = gateway();
    parallel_for(samples.size(), ctx_.cfg.backend.max_inflight, [&](std::size_t i) {
        const std::string prompt = final_prompt(samples[i], exemplars);
        out[i].id = samples[i].id;
        out[i].prompt_digest = sha256_hex(prompt);
        out[i].generations = gw.generate(prompt, ctx_.cfg.final_samples, ctx_.cfg.temperature, ctx_.cfg.seed);
    });

    const auto& sch = schema();
    const auto options = parse_options();
    std::string text;
    for (const auto& p : out) {
        ordered_json j;
        j["id"] = p.id;
        j["prompt_digest"] = p.prompt_digest;
        j["generations"] = p.generations;
        const auto outcome = parse_output(p.generations.front(), sch, options);
        j["outcome"] = outcome_json(outcome);
        j["prediction"] = outcome.valid() ? gold_to_json(*outcome.extractions) : ordered_json(nullptr);
        text += dump(j) + "\n";
    }
    atomic_write(ctx_.run_dir / kPredictionsFile, text);
    update_manifest({kPredictionsFile});
    return out;
}

RunReports PipelineRun::eval() {
    const auto path = ctx_.run_dir / kPredictionsFile;
    std::error_code ec;
    if (!fs::exists(path, ec)) throw DataError("MissingPrediction", "run `apie infer` first: no " + path.string());
    const auto& sch = schema();
    const auto options = parse_options();
    std::map<std::string, ParseOutcome> predictions;
    for (const auto& p : read_predictions(path)) {
        predictions.emplace(p.id, parse_output(p.generations.front(), sch, options));
    }
    auto reports = evaluate_run(predictions, test(), sch);
    atomic_write(ctx_.run_dir / kReportFile, reports_to_json(reports).dump(2) + "\n");
    update_manifest({kReportFile});
    return reports;
}

RunReports PipelineRun::run_all() {
    if (uses_uncertainty(ctx_.strategy)) {
        probe();
        score();
    }
    select();
    infer();
    return eval();
}

void PipelineRun::update_manifest(const std::vector<std::string>& artifacts) {
    const auto path = ctx_.run_dir / kManifestFile;
    ordered_json m;
    std::error_code ec;
    if (fs::exists(path, ec)) {
        m = ordered_json::parse(read_file(path), nullptr, false);
        if (m.is_discarded() || !m.is_object()) m = ordered_json::object();
    }
    const auto base = ctx_.run_dir;

    ordered_json inputs = ordered_json::object();
    if (!ctx_.inputs.schema.empty()) inputs["schema"] = file_entry(ctx_.inputs.schema, base);
    if (!ctx_.inputs.pool.empty()) inputs["pool"] = file_entry(ctx_.inputs.pool, base);
    if (!ctx_.inputs.test.empty() && fs::exists(ctx_.inputs.test, ec)) inputs["test"] = file_entry(ctx_.inputs.test, base);
    if (!ctx_.inputs.seed_exemplars.empty()) inputs["seed_exemplars"] = file_entry(ctx_.inputs.seed_exemplars, base);
    if (!ctx_.inputs.template_file.empty()) {
        inputs["template"] = file_entry(ctx_.inputs.template_file, base);
    }

    const ordered_json config = config_to_json(ctx_.cfg);
    ordered_json id_src;
    id_src["config"] = config;
    id_src["strategy"] = to_string(ctx_.strategy);
    for (auto& [k, v] : inputs.items()) id_src[k] = v["sha256"];

    const std::string now = utc_timestamp();
    ordered_json out;
    out["run_id"] = sha256_hex(dump(id_src)).substr(0, 16);
    out["strategy"] = to_string(ctx_.strategy);
    out["labels"] = ctx_.labels == LabelMode::gold_lookup ? "gold_lookup" : "annotation_service";
    out["config"] = config;
    out["config_digest"] = sha256_hex(dump(config));
    out["probe_config_digest"] = probe_config_digest();
    out["template_digest"] = prompt_template().digest();
    out["inputs"] = std::move(inputs);

    ordered_json arts = m.contains("artifacts") && m["artifacts"].is_object() ? m["artifacts"] : ordered_json::object();
    for (const auto& name : artifacts) arts[name] = file_entry(base / name, base);
    if (fs::exists(base / kAnnotationLog, ec)) arts[kAnnotationLog] = file_entry(base / kAnnotationLog, base);
    out["artifacts"] = std::move(arts);

    ordered_json ts = m.contains("timestamps") && m["timestamps"].is_object() ? m["timestamps"] : ordered_json::object();
    if (!ts.contains("created")) ts["created"] = now;
    ts["updated"] = now;
    out["timestamps"] = std::move(ts);
    if (gateway_) out["cache_stats"] = stats_to_json(gateway_->stats());
    atomic_write(path, out.dump(2) + "\n");
}

std::vector<ProbeRecord> read_probe_archive(const fs::path& path) {
    std::vector<ProbeRecord> out;
    for_each_jsonl(path, [&](const json& j) {
        ProbeRecord r;
        r.id = j.at("id").get<std::string>();
        r.config_digest = j.at("config_digest").get<std::string>();
        r.prompt_digest = j.at("prompt_digest").get<std::string>();
        r.generations = j.at("generations").get<std::vector<std::string>>();
        out.push_back(std::move(r));
    });
    return out;
}

std::string probe_archive_jsonl(const std::vector<ProbeRecord>& records, const SchemaSpec& schema,
                                const ParseOptions& options) {
    std::string out;
    for (const auto& r : records) {
        ordered_json j;
        j["id"] = r.id;
        j["config_digest"] = r.config_digest;
        j["prompt_digest"] = r.prompt_digest;
        j["generations"] = r.generations;
        auto outcomes = ordered_json::array();
        for (const auto& g : r.generations) outcomes.push_back(outcome_json(parse_output(g, schema, options)));
        j["outcomes"] = std::move(outcomes);
        out += dump(j) + "\n";
    }
    return out;
}

std::vector<UncertaintyScores> read_scores(const fs::path& path) {
    std::vector<UncertaintyScores> out;
    for_each_jsonl(path, [&](const json& j) { out.push_back(scores_from_json(j)); });
    return out;
}

std::vector<PredictionRecord> read_predictions(const fs::path& path) {
    std::vector<PredictionRecord> out;
    for_each_jsonl(path, [&](const json& j) {
        PredictionRecord p;
        p.id = j.at("id").get<std::string>();
        p.prompt_digest = j.value("prompt_digest", "");
        p.generations = j.at("generations").get<std::vector<std::string>>();
        if (p.generations.empty()) throw DataError("MalformedRecord", "prediction '" + p.id + "' has no generation");
        out.push_back(std::move(p));
    });
    return out;
}

std::vector<AnnotationRecord> load_annotation_records(PipelineRun& run) {
    const auto& dir = run.context().run_dir;
    const auto sel_path = dir / kSelectionFile;
    std::error_code ec;
    if (!fs::exists(sel_path, ec)) throw DataError("MissingSelection", "no selection manifest at " + sel_path.string());
    const json sel_json = json::parse(read_file(sel_path), nullptr, false);
    if (sel_json.is_discarded()) throw DataError("MalformedSelection", sel_path.string() + " is not valid JSON");
    const auto selection = selection_from_manifest(sel_json);

    std::unordered_map<std::string, UncertaintyScores> scores;
    if (fs::exists(dir / kScoresFile, ec)) {
        for (auto& s : read_scores(dir / kScoresFile)) scores.emplace(s.sample_id, std::move(s));
    }
    std::unordered_map<std::string, ProbeRecord> probes;
    if (fs::exists(dir / kProbeFile, ec)) {
        for (auto& r : read_probe_archive(dir / kProbeFile)) probes.emplace(r.id, std::move(r));
    }
    std::unordered_map<std::string, const Sample*> samples;
    for (const auto& s : run.pool()) samples.emplace(s.id, &s);

    ParseOptions options;
    options.strict_payload = run.context().cfg.strict_payload;
    options.canon.case_fold = run.context().cfg.case_fold;
    std::vector<AnnotationRecord> out;
    for (const auto& id : selection.selected_ids) {
        auto it = samples.find(id);
        if (it == samples.end()) throw DataError("UnknownSample", "selected id '" + id + "' is not in the pool");
        AnnotationRecord r;
        r.sample_id = id;
        r.text = it->second->text;
        if (auto s = scores.find(id); s != scores.end()) {
            r.scores = s->second;
        } else {
            r.scores.sample_id = id;
        }
        if (auto p = probes.find(id); p != probes.end()) {
            for (const auto& g : p->second.generations) {
                const auto outcome = parse_output(g, run.schema(), options);
                r.probe_preview.push_back(ProbePreviewItem{g, outcome.valid(), outcome.failure_kind});
            }
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::string SweepPoint::label() const {
    std::string out;
    if (k) out = "k=" + std::to_string(*k);
    if (weights) out += (out.empty() ? "" : " ") + std::string("weights=") + format_weights(*weights);
    return out.empty() ? "base" : out;
}

std::vector<SweepPoint> parse_sweep_grid(const json& grid) {
    if (!grid.is_object()) throw ConfigError("invalid_grid", "grid spec must be a JSON object");
    for (const auto& [key, _] : grid.items()) {
        if (key != "k" && key != "weights") throw ConfigError("invalid_grid", "unknown grid key '" + key + "'");
    }
    std::vector<std::optional<int>> ks;
    std::vector<std::optional<Weights>> ws;
    try {
        if (grid.contains("k")) {
            for (const auto& v : grid["k"]) {
                if (!v.is_number_integer()) throw ConfigError("invalid_grid", "k values must be integers");
                ks.emplace_back(v.get<int>());
            }
        }
        if (grid.contains("weights")) {
            for (const auto& v : grid["weights"]) {
                if (!v.is_array() || v.size() != 3) {
                    throw ConfigError("invalid_grid", "weight entries must be [alpha, beta, gamma]");
                }
                ws.emplace_back(Weights{v[0].get<double>(), v[1].get<double>(), v[2].get<double>()});
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError("invalid_grid", e.what());
    }
    if (ks.empty() && ws.empty()) throw ConfigError("empty_grid", "the sweep grid lists no k values or weight triples");
    if (ks.empty()) ks.emplace_back(std::nullopt);
    if (ws.empty()) ws.emplace_back(std::nullopt);
    std::vector<SweepPoint> out;
    for (const auto& k : ks) {
        for (const auto& w : ws) out.push_back(SweepPoint{k, w});
    }
    return out;
}

std::vector<SweepPoint> load_sweep_grid(const std::string& spec) {
    if (spec == "k-sweep") return parse_sweep_grid(json{{"k", {2, 3, 5}}});
    if (spec == "weight-sweep") {
        return parse_sweep_grid(json{{"weights", {{0.33, 0.33, 0.33}, {0.3, 0.5, 0.2}, {0.5, 0.2, 0.3}}}});
    }
    std::error_code ec;
    if (!fs::exists(spec, ec)) {
        throw ConfigError("invalid_grid", "'" + spec + "' is neither a grid file nor one of k-sweep, weight-sweep");
    }
    const json j = json::parse(read_file(spec), nullptr, false);
    if (j.is_discarded()) throw ConfigError("invalid_grid", spec + " is not valid JSON");
    return parse_sweep_grid(j);
}

std::vector<SweepRow> run_sweep(const RunContext& base, const std::vector<SweepPoint>& points,
                                std::shared_ptr<Gateway> gateway) {
    if (points.empty()) throw ConfigError("empty_grid", "the sweep grid has no points");
    if (!gateway) gateway = make_gateway(validate_config(base.cfg));
    std::vector<SweepRow> rows;
    for (std::size_t i = 0; i < points.size(); ++i) {
        SweepRow row;
        row.model = base.cfg.backend.model;
        row.point = points[i];
        std::string dirname = "point-" + std::to_string(i + 1);
        if (points[i].k) dirname += "-k" + std::to_string(*points[i].k);
        row.run_dir = base.run_dir / dirname;
        try {
            RunContext ctx = base;
            ctx.run_dir = row.run_dir;
            if (points[i].k) ctx.cfg.k = *points[i].k;
            if (points[i].weights) ctx.cfg.weights = *points[i].weights;
            PipelineRun run(std::move(ctx), gateway);
            row.reports = run.run_all();
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

ordered_json sweep_to_json(const std::vector<SweepRow>& rows) {
    auto out = ordered_json::array();
    for (const auto& r : rows) {
        ordered_json j;
        j["model"] = r.model;
        j["point"] = r.point.label();
        j["k"] = r.point.k ? ordered_json(*r.point.k) : ordered_json(nullptr);
        if (r.point.weights) {
            j["weights"] = {r.point.weights->alpha, r.point.weights->beta, r.point.weights->gamma};
        } else {
            j["weights"] = nullptr;
        }
        j["run_dir"] = r.run_dir.string();
        j["status"] = r.reports ? "ok" : "failed";
        j["ner_f1"] = r.reports ? ordered_json(r.reports->ner.f1) : ordered_json(nullptr);
        j["re_f1"] = r.reports && r.reports->re ? ordered_json(r.reports->re->f1) : ordered_json(nullptr);
        if (!r.error.empty()) j["error"] = r.error;
        out.push_back(std::move(j));
    }
    return out;
}

std::string render_sweep_table(const std::vector<SweepRow>& rows) {
    std::vector<std::array<std::string, 4>> cells;
    cells.push_back({"Model", "Grid point", "NER F1", "RE F1"});
    for (const auto& r : rows) {
        if (r.reports) {
            cells.push_back({r.model, r.point.label(), pct(r.reports->ner.f1), r.reports->re ? pct(r.reports->re->f1) : "-"});
        } else {
            cells.push_back({r.model, r.point.label(), "failed", "failed"});
        }
    }
    std::array<std::size_t, 4> width{};
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < 4; ++c) width[c] = std::max(width[c], row[c].size());
    }
    std::ostringstream out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        for (std::size_t c = 0; c < 4; ++c) {
            if (c) out << " | ";
            out << std::left << std::setw(static_cast<int>(width[c])) << cells[i][c];
        }
        out << "\n";
        if (i == 0) {
            for (std::size_t c = 0; c < 4; ++c) {
                if (c) out << "-+-";
                out << std::string(width[c], '-');
            }
            out << "\n";
        }
    }
    return out.str();
}

F1Stats f1_stats(const std::vector<double>& values) {
    F1Stats s;
    s.runs = values.size();
    if (values.empty()) return s;
    s.min = *std::min_element(values.begin(), values.end());
    s.max = *std::max_element(values.begin(), values.end());
    double sum = 0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    double sq = 0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(values.size()));
    return s;
}

json verify_manifest(const fs::path& manifest) {
    const json m = json::parse(read_file(manifest), nullptr, false);
    if (m.is_discarded() || !m.is_object()) throw DataError("MalformedManifest", manifest.string() + " is not a JSON object");
    const auto base = manifest.parent_path();
    if (!m.contains("artifacts") || !m["artifacts"].is_object()) {
        throw DataError("MalformedManifest", manifest.string() + " lists no artifacts");
    }
    for (const auto& [name, entry] : m["artifacts"].items()) {
        const fs::path p = base / entry.at("path").get<std::string>();
        std::error_code ec;
        if (!fs::exists(p, ec)) throw DataError("ManifestDigestMismatch", p.string() + " is missing");
        if (file_sha256(p) != entry.at("sha256").get<std::string>()) {
            throw DataError("ManifestDigestMismatch", p.string() + " does not match its recorded digest");
        }
    }
    return m;
}

std::vector<StrategySummary> aggregate_manifests(const std::vector<fs::path>& manifests) {
    if (manifests.empty()) throw ConfigError("MissingInput", "at least one manifest is required");
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_strategy;
    for (const auto& path : manifests) {
        const json m = verify_manifest(path);
        if (!m["artifacts"].contains(kReportFile)) {
            throw DataError("MissingReport", path.string() + " has no evaluation report");
        }
        const fs::path report = path.parent_path() / m["artifacts"][kReportFile]["path"].get<std::string>();
        const json r = json::parse(read_file(report), nullptr, false);
        if (r.is_discarded() || !r.contains("ner")) throw DataError("MalformedReport", report.string());
        auto& bucket = by_strategy[m.value("strategy", "unknown")];
        bucket.first.push_back(report_from_json(r["ner"]).f1);
        if (r.contains("re") && !r["re"].is_null()) bucket.second.push_back(report_from_json(r["re"]).f1);
    }
    std::vector<StrategySummary> out;
    for (const auto& [strategy, values] : by_strategy) {
        StrategySummary s;
        s.strategy = strategy;
        s.ner = f1_stats(values.first);
        if (!values.second.empty()) s.re = f1_stats(values.second);
        out.push_back(std::move(s));
    }
    return out;
}

ordered_json summaries_to_json(const std::vector<StrategySummary>& summaries) {
    const auto stats_json = [](const F1Stats& s) {
        ordered_json j;
        j["runs"] = s.runs;
        j["mean"] = s.mean;
        j["min"] = s.min;
        j["max"] = s.max;
        j["stddev"] = s.stddev;
        return j;
    };
    auto out = ordered_json::array();
    for (const auto& s : summaries) {
        ordered_json j;
        j["strategy"] = s.strategy;
        j["ner_f1"] = stats_json(s.ner);
        j["re_f1"] = s.re ? stats_json(*s.re) : ordered_json(nullptr);
        out.push_back(std::move(j));
    }
    return out;
}

std::string render_summary_table(const std::vector<StrategySummary>& summaries) {
    std::ostringstream out;
    out << std::left << std::setw(14) << "Strategy" << std::right << std::setw(6) << "Runs" << std::setw(10) << "NER mean"
        << std::setw(9) << "NER min" << std::setw(9) << "NER max" << std::setw(9) << "NER sd" << std::setw(10)
        << "RE mean" << std::setw(9) << "RE sd" << "\n";
    for (const auto& s : summaries) {
        out << std::left << std::setw(14) << s.strategy << std::right << std::setw(6) << s.ner.runs << std::setw(10)
            << pct(s.ner.mean) << std::setw(9) << pct(s.ner.min) << std::setw(9) << pct(s.ner.max) << std::setw(9)
            << pct(s.ner.stddev);
        if (s.re) {
            out << std::setw(10) << pct(s.re->mean) << std::setw(9) << pct(s.re->stddev);
        } else {
            out << std::setw(10) << "-" << std::setw(9) << "-";
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace apie
