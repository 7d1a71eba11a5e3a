// apie: command-line driver for the probe / score / select / infer / eval pipeline.

#include <CLI11.hpp>

#include <cstdlib>
#include <functional>
#include <iostream>

#include "apie/dataset.hpp"
#include "apie/digest.hpp"
#include "apie/fsutil.hpp"
#include "apie/pipeline.hpp"

namespace fs = std::filesystem;
using namespace apie;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitBackend = 4;
constexpr int kExitInternal = 1;

int exit_code_for(const Error& e) {
    switch (e.category()) {
        case ErrorCategory::config: return kExitConfig;
        case ErrorCategory::data: return kExitData;
        case ErrorCategory::backend: return kExitBackend;
    }
    return kExitInternal;
}

/// Shared run options. Each flag only overrides the base config (defaults or
/// --config) when it was given on the command line.
struct RunFlags {
    std::string config_file;
    RunInputs inputs;
    std::string out = "run";
    std::string strategy = "apie";
    std::string labels = "gold";
    double annotation_timeout_s = 1800;

    RunConfig scratch;
    std::string backend;
    std::string cache_dir;
    std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> overrides;

    template <typename T>
    void opt(CLI::App* app, const std::string& name, T& field, const std::string& help,
             std::function<void(RunConfig&)> apply) {
        overrides.emplace_back(app->add_option(name, field, help), std::move(apply));
    }

    void flag(CLI::App* app, const std::string& name, bool& field, const std::string& help,
              std::function<void(RunConfig&)> apply) {
        overrides.emplace_back(app->add_flag(name, field, help), std::move(apply));
    }

    void attach(CLI::App* app) {
        auto& c = scratch;
        app->add_option("--config", config_file, "Base run config (JSON); flags override it");
        app->add_option("--pool", inputs.pool, "Pool samples (JSONL)");
        app->add_option("--test", inputs.test, "Test samples (JSONL)");
        app->add_option("--schema", inputs.schema, "Schema file (JSON)");
        app->add_option("--template", inputs.template_file, "Prompt template file");
        app->add_option("--seed-exemplars", inputs.seed_exemplars, "Labeled samples used as probing exemplars");
        app->add_option("--out", out, "Run directory")->capture_default_str();
        app->add_option("--strategy", strategy, "apie | active_prompt | rsl | kd_sort | zsl")->capture_default_str();
        app->add_option("--labels", labels, "Exemplar labels: gold | annotation")->capture_default_str();
        app->add_option("--annotation-timeout", annotation_timeout_s, "Seconds to wait for annotations")
            ->capture_default_str();

        opt(app, "--k", c.k, "Probe generations per sample", [this](RunConfig& r) { r.k = scratch.k; });
        opt(app, "--n", c.n_exemplars, "Exemplars in the final prompt",
            [this](RunConfig& r) { r.n_exemplars = scratch.n_exemplars; });
        opt(app, "--probe-exemplars", c.probe_exemplars, "Exemplars in probing prompts",
            [this](RunConfig& r) { r.probe_exemplars = scratch.probe_exemplars; });
        opt(app, "--alpha", c.weights.alpha, "Weight of generation disagreement",
            [this](RunConfig& r) { r.weights.alpha = scratch.weights.alpha; });
        opt(app, "--beta", c.weights.beta, "Weight of format uncertainty",
            [this](RunConfig& r) { r.weights.beta = scratch.weights.beta; });
        opt(app, "--gamma", c.weights.gamma, "Weight of content uncertainty",
            [this](RunConfig& r) { r.weights.gamma = scratch.weights.gamma; });
        opt(app, "--temperature", c.temperature, "Sampling temperature",
            [this](RunConfig& r) { r.temperature = scratch.temperature; });
        opt(app, "--lambda-fail", c.lambda_fail, "Format uncertainty: weight of the failure rate",
            [this](RunConfig& r) { r.lambda_fail = scratch.lambda_fail; });
        opt(app, "--lambda-struct", c.lambda_struct, "Format uncertainty: weight of structural disagreement",
            [this](RunConfig& r) { r.lambda_struct = scratch.lambda_struct; });
        opt(app, "--seed", c.seed, "Seed for sampling and random selection", [this](RunConfig& r) { r.seed = scratch.seed; });
        opt(app, "--final-samples", c.final_samples, "Generations per test sample (the first is scored)",
            [this](RunConfig& r) { r.final_samples = scratch.final_samples; });
        opt(app, "--backend", backend, "openai | ollama | mock",
            [this](RunConfig& r) { r.backend.kind = backend_kind_from_string(backend); });
        opt(app, "--model", c.backend.model, "Model name", [this](RunConfig& r) { r.backend.model = scratch.backend.model; });
        opt(app, "--endpoint", c.backend.endpoint, "Backend base URL",
            [this](RunConfig& r) { r.backend.endpoint = scratch.backend.endpoint; });
        opt(app, "--fixture", c.backend.fixture, "Mock backend fixture (JSONL)",
            [this](RunConfig& r) { r.backend.fixture = scratch.backend.fixture; });
        opt(app, "--timeout", c.backend.timeout_s, "Request timeout in seconds",
            [this](RunConfig& r) { r.backend.timeout_s = scratch.backend.timeout_s; });
        opt(app, "--max-retries", c.backend.max_retries, "Retries per request",
            [this](RunConfig& r) { r.backend.max_retries = scratch.backend.max_retries; });
        opt(app, "--max-inflight", c.backend.max_inflight, "Concurrent backend requests",
            [this](RunConfig& r) { r.backend.max_inflight = scratch.backend.max_inflight; });
        opt(app, "--cache-dir", cache_dir, "Response cache directory (default $APIE_CACHE_DIR or .apie-cache)",
            [this](RunConfig& r) { r.cache_dir = cache_dir; });
        flag(app, "--strict-transport", c.strict_transport, "Fail instead of degrading on backend errors",
             [this](RunConfig& r) { r.strict_transport = scratch.strict_transport; });
        flag(app, "--strict-payload", c.strict_payload, "Require the whole generation to be the JSON list",
             [this](RunConfig& r) { r.strict_payload = scratch.strict_payload; });
        flag(app, "--per-pair-normalize", c.normalize_levenshtein_per_pair,
             "Divide each edit distance by the longer generation",
             [this](RunConfig& r) { r.normalize_levenshtein_per_pair = scratch.normalize_levenshtein_per_pair; });
        flag(app, "--case-fold", c.case_fold, "ASCII-lowercase surface strings before matching",
             [this](RunConfig& r) { r.case_fold = scratch.case_fold; });
    }

    RunContext context() const {
        RunConfig cfg;
        if (!config_file.empty()) {
            const auto j = json::parse(read_file(config_file), nullptr, false);
            if (j.is_discarded()) throw ConfigError("invalid_config", config_file + " is not valid JSON");
            cfg = config_from_json(j);
        }
        bool cache_given = false;
        for (const auto& [option, apply] : overrides) {
            if (option->count() > 0) {
                apply(cfg);
                if (option->get_name() == "--cache-dir") cache_given = true;
            }
        }
        if (!cache_given && config_file.empty()) {
            if (const char* env = std::getenv("APIE_CACHE_DIR"); env && *env) cfg.cache_dir = env;
        }

        RunContext ctx;
        ctx.cfg = validate_config(cfg);
        ctx.inputs = inputs;
        ctx.run_dir = out;
        ctx.strategy = strategy_from_string(strategy);
        if (labels == "gold" || labels == "gold_lookup") {
            ctx.labels = LabelMode::gold_lookup;
        } else if (labels == "annotation" || labels == "annotation_service") {
            ctx.labels = LabelMode::annotation_service;
        } else {
            throw ConfigError("invalid_labels", "--labels must be gold or annotation");
        }
        ctx.annotation_timeout = std::chrono::milliseconds(static_cast<long long>(annotation_timeout_s * 1000.0));
        return ctx;
    }
};

void print_selection(const SelectionResult& r) {
    std::cout << "strategy " << to_string(r.strategy) << ": ";
    if (r.selected_ids.empty()) std::cout << "(no exemplars)";
    for (std::size_t i = 0; i < r.selected_ids.size(); ++i) std::cout << (i ? " " : "") << r.selected_ids[i];
    std::cout << "\n";
}

void print_stats(Gateway& gw) {
    const auto s = gw.stats();
    std::cerr << "backend calls " << s.backend_calls << ", cache hits " << s.cache_hits << ", retries " << s.retries
              << ", degraded " << s.degraded << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Active prompting for information extraction: probe, select, annotate, infer, evaluate"};
    app.require_subcommand(1);

    RunFlags flags;
    auto* probe = app.add_subcommand("probe", "Generate k probe outputs per pool sample");
    auto* score = app.add_subcommand("score", "Compute uncertainty scores from the probe archive");
    auto* select = app.add_subcommand("select", "Pick exemplars with the configured strategy");
    auto* serve = app.add_subcommand("annotate-serve", "Serve the selection for expert labeling");
    auto* infer = app.add_subcommand("infer", "Run final inference on the test set");
    auto* eval = app.add_subcommand("eval", "Score predictions against the test gold");
    auto* run = app.add_subcommand("run", "All stages in sequence");
    auto* sweep = app.add_subcommand("sweep", "One full run per grid point");
    auto* report = app.add_subcommand("report", "Aggregate F1 across run manifests");
    auto* fixture = app.add_subcommand("mock-fixture", "Compile per-sample canned responses into a mock fixture");
    for (auto* sub : {probe, score, select, serve, infer, eval, run, sweep, fixture}) flags.attach(sub);

    int port = 8787;
    std::string host = "127.0.0.1";
    std::string ui_dir;
    serve->add_option("--port", port, "Listen port")->capture_default_str();
    serve->add_option("--host", host, "Listen address")->capture_default_str();
    serve->add_option("--ui-dir", ui_dir, "Static UI bundle served at /");

    std::string grid;
    sweep->add_option("--grid", grid, "Grid JSON file, or k-sweep / weight-sweep")->required();

    std::vector<std::string> manifests;
    std::string summary_json;
    report->add_option("manifests", manifests, "manifest.json files or run directories")->required();
    report->add_option("--json", summary_json, "Also write the summary as JSON to this path");

    std::string responses;
    std::string stage = "probe";
    std::string fixture_out;
    fixture->add_option("--responses", responses, "JSONL lines {\"id\", \"responses\": [...]}")->required();
    fixture->add_option("--stage", stage, "probe | final")->capture_default_str()->check(CLI::IsMember({"probe", "final"}));
    fixture->add_option("--fixture-out", fixture_out, "Fixture file to write (merged if it exists)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (report->parsed()) {
            std::vector<fs::path> paths;
            for (const auto& m : manifests) {
                fs::path p = m;
                if (fs::is_directory(p)) p /= kManifestFile;
                paths.push_back(p);
            }
            const auto summaries = aggregate_manifests(paths);
            std::cout << render_summary_table(summaries);
            if (!summary_json.empty()) atomic_write(summary_json, summaries_to_json(summaries).dump(2) + "\n");
            return kExitOk;
        }

        const RunContext ctx = flags.context();

        if (sweep->parsed()) {
            const auto points = load_sweep_grid(grid);
            const auto rows = run_sweep(ctx, points);
            const std::string table = render_sweep_table(rows);
            atomic_write(ctx.run_dir / "sweep.json", sweep_to_json(rows).dump(2) + "\n");
            atomic_write(ctx.run_dir / "sweep.txt", table);
            std::cout << table;
            for (const auto& r : rows) {
                if (!r.error.empty()) std::cerr << "grid point " << r.point.label() << " failed: " << r.error << "\n";
            }
            return kExitOk;
        }

        PipelineRun pipeline(ctx);

        if (fixture->parsed()) {
            ScriptedMockBackend mock;
            std::error_code ec;
            if (fs::exists(fixture_out, ec)) mock.load_fixture(fixture_out);
            std::map<std::string, std::vector<std::string>> by_id;
            for (const auto& line : split_lines(read_file(responses))) {
                if (trim(line).empty()) continue;
                const auto j = json::parse(line, nullptr, false);
                if (j.is_discarded() || !j.contains("id") || !j.contains("responses")) {
                    throw DataError("MalformedRecord", responses + ": expected {\"id\", \"responses\"}");
                }
                by_id[j["id"].get<std::string>()] = j["responses"].get<std::vector<std::string>>();
            }
            const bool final_stage = stage == "final";
            const auto exemplars = final_stage ? pipeline.final_exemplars() : std::vector<Exemplar>{};
            std::size_t added = 0;
            for (const auto& s : final_stage ? pipeline.test() : pipeline.pool()) {
                auto it = by_id.find(s.id);
                if (it == by_id.end()) continue;
                const auto prompt = final_stage ? pipeline.final_prompt(s, exemplars) : pipeline.probe_prompt(s);
                mock.add(prompt, it->second);
                ++added;
            }
            atomic_write(fixture_out, mock.to_fixture_jsonl());
            std::cout << "wrote " << added << " prompt(s) to " << fixture_out << "\n";
            return kExitOk;
        }

        if (probe->parsed()) {
            const auto s = pipeline.probe();
            std::cout << "probed " << s.probed << " sample(s), " << s.skipped << " already archived\n";
            print_stats(pipeline.gateway());
        } else if (score->parsed()) {
            const auto scores = pipeline.score();
            std::cout << "scored " << scores.size() << " sample(s) into " << (ctx.run_dir / kScoresFile).string() << "\n";
        } else if (select->parsed()) {
            print_selection(pipeline.select());
        } else if (serve->parsed()) {
            AnnotationStore store(pipeline.schema(), ctx.run_dir / kAnnotationLog);
            store.load_selection(load_annotation_records(pipeline));
            AnnotationService service(store, ui_dir.empty() ? std::nullopt : std::optional<fs::path>(ui_dir));
            const int bound = service.bind(host, port);
            std::cout << "annotation service on http://" << host << ":" << bound << "/" << std::endl;
            service.serve();
        } else if (infer->parsed()) {
            const auto preds = pipeline.infer();
            std::cout << "wrote " << preds.size() << " prediction(s) to " << (ctx.run_dir / kPredictionsFile).string()
                      << "\n";
            print_stats(pipeline.gateway());
        } else if (eval->parsed()) {
            const auto reports = pipeline.eval();
            std::cout << render_f1_table({{ctx.run_dir.filename().string(), reports}});
        } else if (run->parsed()) {
            const auto reports = pipeline.run_all();
            std::cout << render_f1_table({{ctx.run_dir.filename().string(), reports}});
            print_stats(pipeline.gateway());
        }
        return kExitOk;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}
