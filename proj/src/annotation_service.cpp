#include <httplib.h>

#include <atomic>
#include <iostream>

#include "apie/annotation.hpp"
#include "apie/dataset.hpp"

namespace apie {

namespace {

constexpr const char* kPlaceholderPage =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>apie annotation</title></head>"
    "<body><h1>apie annotation service</h1><p>No UI bundle is mounted. Start the service with "
    "<code>--ui-dir</code> or use the JSON API under <code>/api</code>.</p></body></html>";

void send_json(httplib::Response& res, int status, const ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(-1, ' ', false, json::error_handler_t::replace), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                ordered_json extra = ordered_json::object()) {
    ordered_json body;
    body["error"] = code;
    body["message"] = message;
    for (auto& [k, v] : extra.items()) body[k] = v;
    send_json(res, status, body);
}

void send_annotation_error(httplib::Response& res, const AnnotationError& e) {
    const std::string& code = e.code();
    ordered_json extra = ordered_json::object();
    int status = 400;
    if (code == "UnknownSample") {
        status = 404;
    } else if (code == "VersionConflict") {
        status = 409;
        extra["current_version"] = e.current_version;
        extra["current_label"] = e.current_label ? gold_to_json(*e.current_label) : ordered_json(nullptr);
    } else if (code == "SchemaMismatch") {
        status = 422;
        extra["failure_kind"] = e.failure_kind ? ordered_json(to_string(*e.failure_kind)) : ordered_json(nullptr);
    } else if (code == "IncompleteError") {
        status = 409;
        extra["pending_ids"] = e.pending_ids;
    } else if (code == "NoSelectionLoaded") {
        status = 503;
    }
    send_error(res, status, code, e.detail(), std::move(extra));
}

template <typename F>
httplib::Server::Handler guarded(F&& f) {
    return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const AnnotationError& e) {
            send_annotation_error(res, e);
        } catch (const Error& e) {
            send_error(res, 400, e.code(), e.detail());
        } catch (const std::exception& e) {
            send_error(res, 500, "InternalError", e.what());
        }
    };
}

}  // namespace

struct AnnotationService::Impl {
    AnnotationStore& store;
    httplib::Server server;
    std::atomic<bool> bound{false};

    explicit Impl(AnnotationStore& s) : store(s) {}

    void routes(const std::optional<std::filesystem::path>& ui_dir) {
        server.Get("/api/health", guarded([this](const httplib::Request&, httplib::Response& res) {
                       ordered_json body;
                       body["status"] = "ok";
                       body["selection_loaded"] = store.has_selection();
                       send_json(res, 200, body);
                   }));

        server.Get("/api/selection", guarded([this](const httplib::Request&, httplib::Response& res) {
                       auto records = ordered_json::array();
                       for (const auto& r : store.list_selection()) records.push_back(record_summary_json(r));
                       ordered_json body;
                       body["records"] = std::move(records);
                       send_json(res, 200, body);
                   }));

        server.Get(R"(/api/samples/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                       send_json(res, 200, record_detail_json(store.get(req.matches[1].str())));
                   }));

        server.Post(R"(/api/samples/([^/]+)/label)",
                    guarded([this](const httplib::Request& req, httplib::Response& res) {
                        const std::string id = req.matches[1].str();
                        const json body = json::parse(req.body, nullptr, false);
                        if (body.is_discarded() || !body.is_object()) {
                            send_error(res, 400, "BadRequest", "request body must be a JSON object");
                            return;
                        }
                        if (!body.contains("label") || !body.contains("expected_version") ||
                            !body["expected_version"].is_number_integer()) {
                            send_error(res, 400, "BadRequest", "expected {\"label\": ..., \"expected_version\": N}");
                            return;
                        }
                        const auto version =
                            store.submit_label(id, body["label"], body["expected_version"].get<std::int64_t>());
                        ordered_json out;
                        out["id"] = id;
                        out["version"] = version;
                        out["status"] = "labeled";
                        send_json(res, 200, out);
                    }));

        server.Get("/api/export", guarded([this](const httplib::Request&, httplib::Response& res) {
                       auto list = ordered_json::array();
                       for (const auto& ex : store.export_exemplars()) {
                           ordered_json e;
                           e["id"] = ex.id;
                           e["input"] = ex.input;
                           e["output"] = gold_to_json(ex.output);
                           list.push_back(std::move(e));
                       }
                       ordered_json body;
                       body["exemplars"] = std::move(list);
                       send_json(res, 200, body);
                   }));

        bool mounted = false;
        if (ui_dir) {
            mounted = server.set_mount_point("/", ui_dir->string());
            if (!mounted) std::cerr << "warning: UI directory " << *ui_dir << " not found; serving placeholder\n";
        }
        if (!mounted) {
            server.Get("/", [](const httplib::Request&, httplib::Response& res) {
                res.set_content(kPlaceholderPage, "text/html");
            });
        }
    }
};

AnnotationService::AnnotationService(AnnotationStore& store, std::optional<std::filesystem::path> ui_dir)
    : impl_(std::make_unique<Impl>(store)) {
    impl_->routes(ui_dir);
}

AnnotationService::~AnnotationService() { stop(); }

int AnnotationService::bind(const std::string& host, int port) {
    int bound_port = port;
    if (port == 0) {
        bound_port = impl_->server.bind_to_any_port(host);
    } else if (!impl_->server.bind_to_port(host, port)) {
        bound_port = -1;
    }
    if (bound_port < 0) throw ConfigError("BindFailed", "cannot listen on " + host + ":" + std::to_string(port));
    impl_->bound = true;
    return bound_port;
}

void AnnotationService::serve() {
    if (!impl_->bound) throw ContractViolation("serve() before bind()");
    impl_->server.listen_after_bind();
}

void AnnotationService::stop() {
    if (impl_) impl_->server.stop();
}

void AnnotationService::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace apie
