#include <httplib.h>

#include <cstdlib>

#include "apie/gateway.hpp"

namespace apie {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path without trailing slash
};

SplitUrl split_endpoint(const std::string& endpoint) {
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("invalid_backend", "endpoint must start with http:// or https://: " + endpoint);
    }
    const auto path_start = endpoint.find('/', scheme_end + 3);
    SplitUrl out;
    out.origin = endpoint.substr(0, path_start);
    if (path_start != std::string::npos) out.prefix = endpoint.substr(path_start);
    while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
    return out;
}

std::string post_json(const BackendDescriptor& desc, const std::string& path, const ordered_json& body,
                      const httplib::Headers& headers) {
    const auto url = split_endpoint(desc.endpoint);
    httplib::Client client(url.origin);
    const auto secs = static_cast<time_t>(desc.timeout_s);
    const auto usecs = static_cast<time_t>((desc.timeout_s - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    auto res = client.Post(url.prefix + path, headers, body.dump(-1, ' ', false, json::error_handler_t::replace),
                           "application/json");
    if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) {
            throw BackendError("Timeout", desc.endpoint + ": " + httplib::to_string(err));
        }
        throw BackendError("ConnectionFailed", desc.endpoint + ": " + httplib::to_string(err));
    }
    if (res->status < 200 || res->status >= 300) {
        throw BackendError("HttpError", desc.endpoint + " returned HTTP " + std::to_string(res->status),
                           res->status);
    }
    return res->body;
}

json parse_body(const std::string& body) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded()) throw BackendError("MalformedResponse", "response body is not JSON");
    return j;
}

}  // namespace

ordered_json openai_request_body(const GenerationRequest& req, const BackendDescriptor& desc) {
    ordered_json msg;
    msg["role"] = "user";
    msg["content"] = req.prompt;
    ordered_json body;
    body["model"] = desc.model;
    body["messages"] = ordered_json::array({msg});
    body["temperature"] = req.temperature;
    body["seed"] = req.seed;
    return body;
}

ordered_json ollama_request_body(const GenerationRequest& req, const BackendDescriptor& desc) {
    ordered_json body;
    body["model"] = desc.model;
    body["prompt"] = req.prompt;
    body["stream"] = false;
    ordered_json options;
    options["temperature"] = req.temperature;
    options["seed"] = req.seed;
    body["options"] = std::move(options);
    return body;
}

std::string send_openai_style(const GenerationRequest& req, const BackendDescriptor& desc,
                              const std::string& api_key) {
    if (desc.kind != BackendKind::openai_compatible) throw ContractViolation("descriptor is not openai_compatible");
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
    const json res = parse_body(post_json(desc, "/chat/completions", openai_request_body(req, desc), headers));
    const auto choices = res.find("choices");
    if (choices == res.end() || !choices->is_array() || choices->empty()) {
        throw BackendError("MalformedResponse", "response has no choices");
    }
    const auto& first = (*choices)[0];
    if (!first.is_object() || !first.contains("message") || !first["message"].is_object()) {
        throw BackendError("MalformedResponse", "first choice has no message");
    }
    const auto content = first["message"].find("content");
    if (content == first["message"].end() || !content->is_string()) {
        throw BackendError("MalformedResponse", "message has no string content");
    }
    return content->get<std::string>();
}

std::string send_ollama_style(const GenerationRequest& req, const BackendDescriptor& desc) {
    if (desc.kind != BackendKind::ollama_compatible) throw ContractViolation("descriptor is not ollama_compatible");
    const json res = parse_body(post_json(desc, "/api/generate", ollama_request_body(req, desc), {}));
    const auto text = res.find("response");
    if (text == res.end() || !text->is_string()) {
        throw BackendError("MalformedResponse", "response field missing");
    }
    return text->get<std::string>();
}

OpenAIBackend::OpenAIBackend(BackendDescriptor desc, std::optional<std::string> api_key)
    : desc_(std::move(desc)) {
    if (api_key) {
        api_key_ = *api_key;
    } else if (const char* env = std::getenv("APIE_API_KEY")) {
        api_key_ = env;
    }
}

std::string OpenAIBackend::complete(const GenerationRequest& req) { return send_openai_style(req, desc_, api_key_); }

std::string OllamaBackend::complete(const GenerationRequest& req) { return send_ollama_style(req, desc_); }

}  // namespace apie
