#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "apie/core.hpp"

namespace apie {

struct GenerationRequest {
    std::string prompt;
    double temperature = 0.8;
    /// 1-based probe index j; distinct per probe of the same prompt.
    int sample_index = 1;
    std::int64_t seed = 0;
};

/// One completion attempt. Implementations throw BackendError with codes
/// HttpError, Timeout, ConnectionFailed or MalformedResponse.
class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string complete(const GenerationRequest& req) = 0;
};

// Wire bodies, exposed for contract tests.
nlohmann::ordered_json openai_request_body(const GenerationRequest& req, const BackendDescriptor& desc);
nlohmann::ordered_json ollama_request_body(const GenerationRequest& req, const BackendDescriptor& desc);

/// POST {endpoint}/chat/completions; returns choices[0].message.content.
std::string send_openai_style(const GenerationRequest& req, const BackendDescriptor& desc,
                              const std::string& api_key = {});
/// POST {endpoint}/api/generate with streaming off; returns "response".
std::string send_ollama_style(const GenerationRequest& req, const BackendDescriptor& desc);

class OpenAIBackend : public Backend {
public:
    /// The bearer token defaults to $APIE_API_KEY.
    explicit OpenAIBackend(BackendDescriptor desc, std::optional<std::string> api_key = std::nullopt);
    std::string complete(const GenerationRequest& req) override;

private:
    BackendDescriptor desc_;
    std::string api_key_;
};

class OllamaBackend : public Backend {
public:
    explicit OllamaBackend(BackendDescriptor desc) : desc_(std::move(desc)) {}
    std::string complete(const GenerationRequest& req) override;

private:
    BackendDescriptor desc_;
};

/// Replays canned responses keyed by the SHA-256 of the prompt. Request j
/// receives responses[j-1]; missing entries yield the empty sentinel.
class ScriptedMockBackend : public Backend {
public:
    ScriptedMockBackend() = default;
    /// Fixture lines: {"prompt_digest": "...", "responses": ["...", ...]}.
    void load_fixture(const std::filesystem::path& path);

    void add(std::string_view prompt, std::vector<std::string> responses);
    void add_digest(std::string digest, std::vector<std::string> responses);
    std::string complete(const GenerationRequest& req) override;

    std::size_t calls() const noexcept { return calls_.load(); }
    /// Fixture lines in digest order.
    std::string to_fixture_jsonl() const;

private:
    mutable std::mutex mu_;
    std::map<std::string, std::vector<std::string>> responses_;
    std::atomic<std::size_t> calls_{0};
};

struct CacheEntry {
    std::string key;
    std::string response;
    std::int64_t created_at = 0;
};

/// One file per key under the cache directory; stores are write-then-rename.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir);

    static std::string make_key(BackendKind kind, std::string_view model, std::string_view prompt,
                                double temperature, int sample_index, std::int64_t seed);

    /// A corrupt entry is reported on stderr and treated as a miss.
    std::optional<CacheEntry> lookup(const std::string& key) const;
    void store(const CacheEntry& entry);

    const std::filesystem::path& dir() const noexcept { return dir_; }

private:
    std::filesystem::path path_for(const std::string& key) const;
    std::filesystem::path dir_;
};

struct GatewayOptions {
    /// Throw BackendUnreachable instead of degrading to the "" sentinel.
    bool strict_transport = false;
};

struct GatewayStats {
    std::size_t backend_calls = 0;
    std::size_t cache_hits = 0;
    std::size_t cache_misses = 0;
    std::size_t retries = 0;
    std::size_t degraded = 0;
};

nlohmann::ordered_json stats_to_json(const GatewayStats& s);

/// Front door to a backend: cache, retries and a bound on in-flight calls.
class Gateway {
public:
    Gateway(BackendDescriptor desc, std::shared_ptr<Backend> backend, std::optional<ResponseCache> cache,
            GatewayOptions options = {});

    /// k >= 2 generations in sample_index order.
    std::vector<std::string> generate_k(std::string_view prompt, int k, double temperature, std::int64_t seed);
    std::vector<std::string> generate_k(std::string_view prompt, int k, const RunConfig& cfg);

    /// Any count >= 1; used for single-sample final inference.
    std::vector<std::string> generate(std::string_view prompt, int count, double temperature, std::int64_t seed);

    /// One request through cache and retry policy.
    std::string generate_one(const GenerationRequest& req);

    GatewayStats stats() const;
    const BackendDescriptor& descriptor() const noexcept { return desc_; }

private:
    std::string call_with_retries(const GenerationRequest& req);

    BackendDescriptor desc_;
    std::shared_ptr<Backend> backend_;
    std::optional<ResponseCache> cache_;
    GatewayOptions options_;

    std::mutex slots_mu_;
    std::condition_variable slots_cv_;
    int inflight_ = 0;

    std::atomic<std::size_t> backend_calls_{0};
    std::atomic<std::size_t> cache_hits_{0};
    std::atomic<std::size_t> cache_misses_{0};
    std::atomic<std::size_t> retries_{0};
    std::atomic<std::size_t> degraded_{0};
};

/// Backend for cfg.backend; a scripted mock loads cfg.backend.fixture.
std::shared_ptr<Backend> make_backend(const BackendDescriptor& desc);

/// Gateway over make_backend(cfg.backend) with a cache at cfg.cache_dir
/// (or $APIE_CACHE_DIR when cfg.cache_dir is empty).
std::unique_ptr<Gateway> make_gateway(const RunConfig& cfg);

}  // namespace apie
