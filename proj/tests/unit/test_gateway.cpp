#include <gtest/gtest.h>
#include <httplib.h>

#include <atomic>
#include <thread>

#include "apie/gateway.hpp"
#include "unit/test_support.hpp"

using namespace apie;
using testing_support::TempDir;

namespace {

/// An httplib server on an ephemeral loopback port, torn down on scope exit.
class FakeServer {
public:
    FakeServer() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeServer() {
        server_.stop();
        thread_.join();
    }
    httplib::Server& operator*() { return server_; }
    httplib::Server* operator->() { return &server_; }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

BackendDescriptor descriptor(BackendKind kind, const std::string& endpoint) {
    BackendDescriptor d;
    d.kind = kind;
    d.endpoint = endpoint;
    d.model = "test-model";
    d.timeout_s = 5;
    d.retry_backoff_ms = 0;
    return d;
}

/// Backend that counts calls and answers from a callback.
class FnBackend : public Backend {
public:
    explicit FnBackend(std::function<std::string(const GenerationRequest&)> fn) : fn_(std::move(fn)) {}
    std::string complete(const GenerationRequest& req) override {
        ++calls;
        return fn_(req);
    }
    std::atomic<int> calls{0};

private:
    std::function<std::string(const GenerationRequest&)> fn_;
};

int unused_port() {
    httplib::Server s;
    return s.bind_to_any_port("127.0.0.1");
}

}  // namespace

TEST(WireFormat, OpenAIBody) {
    const auto desc = descriptor(BackendKind::openai_compatible, "http://x");
    const auto body = openai_request_body(GenerationRequest{"hi", 0.8, 2, 7}, desc);
    EXPECT_EQ(body["model"], "test-model");
    EXPECT_EQ(body["messages"][0]["role"], "user");
    EXPECT_EQ(body["messages"][0]["content"], "hi");
    EXPECT_DOUBLE_EQ(body["temperature"].get<double>(), 0.8);
    EXPECT_EQ(body["seed"], 7);
}

TEST(WireFormat, OllamaBody) {
    const auto desc = descriptor(BackendKind::ollama_compatible, "http://x");
    const auto body = ollama_request_body(GenerationRequest{"hi", 0.5, 1, 3}, desc);
    EXPECT_EQ(body["prompt"], "hi");
    EXPECT_EQ(body["stream"], false);
    EXPECT_DOUBLE_EQ(body["options"]["temperature"].get<double>(), 0.5);
    EXPECT_EQ(body["options"]["seed"], 3);
}

TEST(HttpBackends, OpenAIRoundTrip) {
    FakeServer server;
    std::string auth;
    nlohmann::json seen;
    server->Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        auth = req.get_header_value("Authorization");
        seen = nlohmann::json::parse(req.body);
        res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"[]"}}]})", "application/json");
    });
    OpenAIBackend backend(descriptor(BackendKind::openai_compatible, server.url() + "/v1/"), "sk-test");
    EXPECT_EQ(backend.complete(GenerationRequest{"prompt", 0.8, 1, 0}), "[]");
    EXPECT_EQ(auth, "Bearer sk-test");
    EXPECT_EQ(seen["messages"][0]["content"], "prompt");
}

TEST(HttpBackends, OllamaRoundTrip) {
    FakeServer server;
    server->Post("/api/generate", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"model":"m","response":"hello","done":true})", "application/json");
    });
    OllamaBackend backend(descriptor(BackendKind::ollama_compatible, server.url()));
    EXPECT_EQ(backend.complete(GenerationRequest{"p"}), "hello");
}

TEST(HttpBackends, MalformedResponses) {
    FakeServer server;
    server->Post("/api/generate", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("not json", "text/plain");
    });
    server->Post("/chat/completions", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"choices":[]})", "application/json");
    });
    try {
        OllamaBackend(descriptor(BackendKind::ollama_compatible, server.url())).complete(GenerationRequest{"p"});
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_EQ(e.code(), "MalformedResponse");
    }
    try {
        OpenAIBackend(descriptor(BackendKind::openai_compatible, server.url()), "").complete(GenerationRequest{"p"});
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_EQ(e.code(), "MalformedResponse");
    }
}

TEST(Gateway, RetriesRateLimitThenSucceeds) {
    FakeServer server;
    std::atomic<int> hits{0};
    server->Post("/api/generate", [&](const httplib::Request&, httplib::Response& res) {
        if (hits++ == 0) {
            res.status = 429;
            return;
        }
        res.set_content(R"({"response":"ok"})", "application/json");
    });
    const auto desc = descriptor(BackendKind::ollama_compatible, server.url());
    Gateway gw(desc, make_backend(desc), std::nullopt);
    EXPECT_EQ(gw.generate_one(GenerationRequest{"p"}), "ok");
    EXPECT_EQ(hits.load(), 2);
    EXPECT_EQ(gw.stats().retries, 1u);
    EXPECT_EQ(gw.stats().backend_calls, 2u);
}

TEST(Gateway, DoesNotRetryClientErrors) {
    FakeServer server;
    std::atomic<int> hits{0};
    server->Post("/api/generate", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 400;
    });
    const auto desc = descriptor(BackendKind::ollama_compatible, server.url());
    Gateway gw(desc, make_backend(desc), std::nullopt, GatewayOptions{true});
    try {
        gw.generate_one(GenerationRequest{"p"});
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_EQ(e.code(), "HttpError");
        EXPECT_EQ(e.http_status(), 400);
    }
    EXPECT_EQ(hits.load(), 1);
}

TEST(Gateway, ConnectionRefusedDegradesOrThrows) {
    auto desc = descriptor(BackendKind::ollama_compatible, "http://127.0.0.1:" + std::to_string(unused_port()));
    desc.max_retries = 1;
    desc.timeout_s = 1;
    Gateway lenient(desc, make_backend(desc), std::nullopt);
    EXPECT_EQ(lenient.generate_one(GenerationRequest{"p"}), "");
    EXPECT_EQ(lenient.stats().degraded, 1u);
    EXPECT_EQ(lenient.stats().backend_calls, 2u);

    Gateway strict(desc, make_backend(desc), std::nullopt, GatewayOptions{true});
    try {
        strict.generate_one(GenerationRequest{"p"});
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_EQ(e.code(), "BackendUnreachable");
        EXPECT_EQ(e.category(), ErrorCategory::backend);
    }
}

TEST(Gateway, CacheHitMakesNoBackendCall) {
    TempDir dir;
    auto backend = std::make_shared<FnBackend>([](const GenerationRequest& r) {
        return "answer " + std::to_string(r.sample_index);
    });
    const auto desc = descriptor(BackendKind::scripted_mock, "");
    {
        Gateway gw(desc, backend, ResponseCache(dir.path()));
        EXPECT_EQ(gw.generate_k("p", 3, 0.8, 0), (std::vector<std::string>{"answer 1", "answer 2", "answer 3"}));
        EXPECT_EQ(backend->calls.load(), 3);
    }
    Gateway again(desc, backend, ResponseCache(dir.path()));
    EXPECT_EQ(again.generate_k("p", 3, 0.8, 0), (std::vector<std::string>{"answer 1", "answer 2", "answer 3"}));
    EXPECT_EQ(backend->calls.load(), 3);
    EXPECT_EQ(again.stats().cache_hits, 3u);
    EXPECT_EQ(again.stats().backend_calls, 0u);

    // A different temperature, seed or index is a different key.
    again.generate_k("p", 2, 0.7, 0);
    again.generate_k("p", 2, 0.8, 1);
    EXPECT_EQ(backend->calls.load(), 3 + 2 + 2);
}

TEST(Gateway, DegradedResponsesAreNotCached) {
    TempDir dir;
    std::atomic<bool> up{false};
    auto backend = std::make_shared<FnBackend>([&](const GenerationRequest&) -> std::string {
        if (!up) throw BackendError("ConnectionFailed", "down");
        return "fine";
    });
    auto desc = descriptor(BackendKind::scripted_mock, "");
    desc.max_retries = 0;
    Gateway gw(desc, backend, ResponseCache(dir.path()));
    EXPECT_EQ(gw.generate_one(GenerationRequest{"p"}), "");
    up = true;
    EXPECT_EQ(gw.generate_one(GenerationRequest{"p"}), "fine");
}

TEST(Gateway, CorruptCacheEntryIsAMiss) {
    TempDir dir;
    ResponseCache cache(dir.path());
    const auto key = ResponseCache::make_key(BackendKind::scripted_mock, "m", "p", 0.8, 1, 0);
    cache.store(CacheEntry{key, "x", 1});
    ASSERT_TRUE(cache.lookup(key));
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir.path())) {
        if (e.is_regular_file()) testing_support::write_text(e.path(), "{garbage");
    }
    EXPECT_FALSE(cache.lookup(key));
}

TEST(Gateway, ConcurrentStoresStayConsistent) {
    TempDir dir;
    auto backend = std::make_shared<FnBackend>([](const GenerationRequest& r) { return r.prompt + "!"; });
    auto desc = descriptor(BackendKind::scripted_mock, "");
    desc.max_inflight = 8;
    Gateway gw(desc, backend, ResponseCache(dir.path()));
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&] {
            for (int i = 0; i < 20; ++i) gw.generate_one(GenerationRequest{"prompt" + std::to_string(i % 5)});
        });
    }
    for (auto& t : threads) t.join();
    ResponseCache cache(dir.path());
    for (int i = 0; i < 5; ++i) {
        const auto p = "prompt" + std::to_string(i);
        const auto hit = cache.lookup(ResponseCache::make_key(BackendKind::scripted_mock, "test-model", p, 0.8, 1, 0));
        ASSERT_TRUE(hit);
        EXPECT_EQ(hit->response, p + "!");
    }
}

TEST(Gateway, BoundsInflightCalls) {
    std::atomic<int> now{0};
    std::atomic<int> peak{0};
    auto backend = std::make_shared<FnBackend>([&](const GenerationRequest&) {
        const int n = ++now;
        int p = peak.load();
        while (n > p && !peak.compare_exchange_weak(p, n)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        --now;
        return std::string("x");
    });
    auto desc = descriptor(BackendKind::scripted_mock, "");
    desc.max_inflight = 2;
    Gateway gw(desc, backend, std::nullopt);
    std::vector<std::thread> threads;
    for (int t = 0; t < 6; ++t) {
        threads.emplace_back([&, t] {
            for (int i = 0; i < 5; ++i) gw.generate_one(GenerationRequest{"p" + std::to_string(t * 10 + i)});
        });
    }
    for (auto& t : threads) t.join();
    EXPECT_LE(peak.load(), 2);
    EXPECT_EQ(backend->calls.load(), 30);
}

TEST(ScriptedMock, ReplaysByPromptDigestAndIndex) {
    ScriptedMockBackend mock;
    mock.add("p", {"one", "two"});
    EXPECT_EQ(mock.complete(GenerationRequest{"p", 0.8, 1}), "one");
    EXPECT_EQ(mock.complete(GenerationRequest{"p", 0.8, 2}), "two");
    EXPECT_EQ(mock.complete(GenerationRequest{"p", 0.8, 3}), "");
    EXPECT_EQ(mock.complete(GenerationRequest{"q", 0.8, 1}), "");
    EXPECT_EQ(mock.calls(), 4u);
}

TEST(ScriptedMock, FixtureRoundTrip) {
    TempDir dir;
    ScriptedMockBackend mock;
    mock.add("p", {"one", "two"});
    mock.add("q", {"[]"});
    testing_support::write_text(dir / "fixture.jsonl", mock.to_fixture_jsonl());
    ScriptedMockBackend loaded;
    loaded.load_fixture(dir / "fixture.jsonl");
    EXPECT_EQ(loaded.to_fixture_jsonl(), mock.to_fixture_jsonl());
    EXPECT_EQ(loaded.complete(GenerationRequest{"p", 0.8, 2}), "two");

    testing_support::write_text(dir / "bad.jsonl", "{\"prompt_digest\":1}\n");
    try {
        loaded.load_fixture(dir / "bad.jsonl");
        FAIL();
    } catch (const DataError& e) {
        EXPECT_EQ(e.code(), "MalformedFixture");
    }
}

TEST(Gateway, MockReplayIsDeterministic) {
    auto mock = std::make_shared<ScriptedMockBackend>();
    mock->add("p", {"a", "b", "c"});
    const auto desc = descriptor(BackendKind::scripted_mock, "");
    Gateway first(desc, mock, std::nullopt);
    Gateway second(desc, mock, std::nullopt);
    EXPECT_EQ(first.generate_k("p", 3, 0.8, 0), second.generate_k("p", 3, 0.8, 0));
    EXPECT_THROW(first.generate_k("p", 1, 0.8, 0), ContractViolation);
}
