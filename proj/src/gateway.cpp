#include "apie/gateway.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include "apie/digest.hpp"
#include "apie/fsutil.hpp"

namespace apie {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

bool retryable(const BackendError& e) {
    if (e.code() == "HttpError") return e.http_status() == 429 || e.http_status() >= 500;
    return e.code() == "Timeout" || e.code() == "ConnectionFailed";
}

std::int64_t now_unix() {
    return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

}  // namespace

// ---------------------------------------------------------------- mock

void ScriptedMockBackend::load_fixture(const fs::path& path) {
    const auto lines = split_lines(read_file(path));
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        try {
            const json j = json::parse(lines[i]);
            add_digest(j.at("prompt_digest").get<std::string>(),
                            j.at("responses").get<std::vector<std::string>>());
        } catch (const json::exception& e) {
            throw DataError("MalformedFixture", path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
        }
    }
}

void ScriptedMockBackend::add(std::string_view prompt, std::vector<std::string> responses) {
    add_digest(sha256_hex(prompt), std::move(responses));
}

void ScriptedMockBackend::add_digest(std::string digest, std::vector<std::string> responses) {
    std::lock_guard lock(mu_);
    responses_[std::move(digest)] = std::move(responses);
}

std::string ScriptedMockBackend::complete(const GenerationRequest& req) {
    ++calls_;
    std::lock_guard lock(mu_);
    auto it = responses_.find(sha256_hex(req.prompt));
    if (it == responses_.end() || req.sample_index < 1 ||
        static_cast<std::size_t>(req.sample_index) > it->second.size()) {
        return "";
    }
    return it->second[static_cast<std::size_t>(req.sample_index - 1)];
}

std::string ScriptedMockBackend::to_fixture_jsonl() const {
    std::lock_guard lock(mu_);
    std::string out;
    for (const auto& [digest, responses] : responses_) {
        ordered_json j;
        j["prompt_digest"] = digest;
        j["responses"] = responses;
        out += j.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------- cache

ResponseCache::ResponseCache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

std::string ResponseCache::make_key(BackendKind kind, std::string_view model, std::string_view prompt,
                                    double temperature, int sample_index, std::int64_t seed) {
    ordered_json j = ordered_json::array();
    j.push_back(to_string(kind));
    j.push_back(model);
    j.push_back(prompt);
    j.push_back(temperature);
    j.push_back(sample_index);
    j.push_back(seed);
    return sha256_hex(j.dump(-1, ' ', false, json::error_handler_t::replace));
}

fs::path ResponseCache::path_for(const std::string& key) const {
    return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<CacheEntry> ResponseCache::lookup(const std::string& key) const {
    const auto path = path_for(key);
    std::error_code ec;
    if (!fs::exists(path, ec)) return std::nullopt;
    try {
        const json j = json::parse(read_file(path));
        CacheEntry e{j.at("key").get<std::string>(), j.at("response").get<std::string>(),
                     j.at("created_at").get<std::int64_t>()};
        if (e.key != key) throw std::runtime_error("key mismatch");
        return e;
    } catch (const std::exception& e) {
        std::cerr << "warning: ignoring corrupt cache entry " << path << ": " << e.what() << "\n";
        return std::nullopt;
    }
}

void ResponseCache::store(const CacheEntry& entry) {
    ordered_json j;
    j["key"] = entry.key;
    j["response"] = entry.response;
    j["created_at"] = entry.created_at;
    atomic_write(path_for(entry.key), j.dump(-1, ' ', false, json::error_handler_t::replace));
}

// ---------------------------------------------------------------- gateway

ordered_json stats_to_json(const GatewayStats& s) {
    ordered_json j;
    j["backend_calls"] = s.backend_calls;
    j["cache_hits"] = s.cache_hits;
    j["cache_misses"] = s.cache_misses;
    j["retries"] = s.retries;
    j["degraded"] = s.degraded;
    return j;
}

Gateway::Gateway(BackendDescriptor desc, std::shared_ptr<Backend> backend, std::optional<ResponseCache> cache,
                 GatewayOptions options)
    : desc_(std::move(desc)), backend_(std::move(backend)), cache_(std::move(cache)), options_(options) {
    if (!backend_) throw ContractViolation("gateway needs a backend");
    if (desc_.max_inflight < 1) throw ConfigError("invalid_backend", "max_inflight must be >= 1");
}

std::vector<std::string> Gateway::generate_k(std::string_view prompt, int k, double temperature,
                                             std::int64_t seed) {
    if (k < 2) throw ContractViolation("generate_k requires k >= 2");
    return generate(prompt, k, temperature, seed);
}

std::vector<std::string> Gateway::generate_k(std::string_view prompt, int k, const RunConfig& cfg) {
    return generate_k(prompt, k, cfg.temperature, cfg.seed);
}

std::vector<std::string> Gateway::generate(std::string_view prompt, int count, double temperature,
                                           std::int64_t seed) {
    if (count < 1) throw ContractViolation("generate requires count >= 1");
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int j = 1; j <= count; ++j) {
        // Each probe gets its own seed so seeded samplers still diverge.
        out.push_back(generate_one(GenerationRequest{std::string(prompt), temperature, j, seed + (j - 1)}));
    }
    return out;
}

std::string Gateway::generate_one(const GenerationRequest& req) {
    const std::string key =
        ResponseCache::make_key(desc_.kind, desc_.model, req.prompt, req.temperature, req.sample_index, req.seed);
    if (cache_) {
        if (auto hit = cache_->lookup(key)) {
            ++cache_hits_;
            return hit->response;
        }
        ++cache_misses_;
    }
    std::optional<std::string> response;
    try {
        response = call_with_retries(req);
    } catch (const BackendError&) {
        if (options_.strict_transport) throw;
        ++degraded_;
        return "";
    }
    if (cache_) cache_->store(CacheEntry{key, *response, now_unix()});
    return *response;
}

std::string Gateway::call_with_retries(const GenerationRequest& req) {
    for (int attempt = 0;; ++attempt) {
        try {
            std::unique_lock lock(slots_mu_);
            slots_cv_.wait(lock, [&] { return inflight_ < desc_.max_inflight; });
            ++inflight_;
            lock.unlock();
            struct Release {
                Gateway* g;
                ~Release() {
                    {
                        std::lock_guard l(g->slots_mu_);
                        --g->inflight_;
                    }
                    g->slots_cv_.notify_one();
                }
            } release{this};
            ++backend_calls_;
            return backend_->complete(req);
        } catch (const BackendError& e) {
            if (!retryable(e)) throw;
            if (attempt >= desc_.max_retries) {
                throw BackendError("BackendUnreachable",
                                   "giving up after " + std::to_string(attempt + 1) + " attempts: " + e.what(),
                                   e.http_status());
            }
            ++retries_;
            if (desc_.retry_backoff_ms > 0) {
                std::this_thread::sleep_for(std::chrono::milliseconds(desc_.retry_backoff_ms << std::min(attempt, 6)));
            }
        }
    }
}

GatewayStats Gateway::stats() const {
    return GatewayStats{backend_calls_.load(), cache_hits_.load(), cache_misses_.load(), retries_.load(),
                        degraded_.load()};
}

std::shared_ptr<Backend> make_backend(const BackendDescriptor& desc) {
    switch (desc.kind) {
        case BackendKind::openai_compatible: return std::make_shared<OpenAIBackend>(desc);
        case BackendKind::ollama_compatible: return std::make_shared<OllamaBackend>(desc);
        case BackendKind::scripted_mock:
        {
            auto mock = std::make_shared<ScriptedMockBackend>();
            if (!desc.fixture.empty()) mock->load_fixture(desc.fixture);
            return mock;
        }
    }
    throw ConfigError("invalid_backend", "unknown backend kind");
}

std::unique_ptr<Gateway> make_gateway(const RunConfig& cfg) {
    std::string dir = cfg.cache_dir;
    if (dir.empty()) {
        if (const char* env = std::getenv("APIE_CACHE_DIR")) dir = env;
    }
    std::optional<ResponseCache> cache;
    if (!dir.empty()) cache.emplace(dir);
    return std::make_unique<Gateway>(cfg.backend, make_backend(cfg.backend), std::move(cache),
                                     GatewayOptions{cfg.strict_transport});
}

}  // namespace apie
