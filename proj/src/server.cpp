#include "ital/errors.hpp"
#include "ital/session.hpp"

#include <httplib.h>

#include <filesystem>
#include <iostream>
#include <thread>

namespace ital {

using nlohmann::json;

struct SessionServer::Impl {
    ServerOptions options;
    SessionStore store;
    httplib::Server http;
    std::thread worker;

    explicit Impl(ServerOptions o) : options(std::move(o)), store(options.log_dir) {}

    void reply(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    template <typename F>
    void guarded(httplib::Response& res, F&& f) {
        try {
            reply(res, 200, f());
        } catch (const SessionError& e) {
            reply(res, e.status(), {{"error", e.what()}});
        } catch (const NumericError& e) {
            reply(res, 500, {{"error", std::string("numeric failure: ") + e.what()}});
        } catch (const ConvergenceError& e) {
            reply(res, 500, {{"error", std::string("planner did not converge: ") + e.what()}});
        } catch (const std::exception& e) {
            reply(res, 500, {{"error", e.what()}});
        }
    }

    static json body_of(const httplib::Request& req) {
        if (req.body.empty()) return json::object();
        try {
            return json::parse(req.body);
        } catch (const json::parse_error&) {
            throw SessionError(400, "request body is not valid JSON");
        }
    }

    void install() {
        if (!options.log_dir.empty()) std::filesystem::create_directories(options.log_dir);
        if (!options.static_dir.empty() && !http.set_mount_point("/", options.static_dir))
            throw ConfigError("static directory " + options.static_dir + " does not exist");

        http.set_post_routing_handler([this](const httplib::Request&, httplib::Response& res) {
            if (options.cors_origin.empty()) return;
            res.set_header("Access-Control-Allow-Origin", options.cors_origin);
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
        });
        http.Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        http.Post("/api/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { return store.create(body_of(req)); });
        });
        http.Get(R"(/api/v1/sessions/([^/]+)/candidates)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { return store.candidates(req.matches[1]); });
        });
        http.Post(R"(/api/v1/sessions/([^/]+)/select)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { return store.select(req.matches[1], body_of(req)); });
        });
        http.Get(R"(/api/v1/sessions/([^/]+)/state)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { return store.state(req.matches[1]); });
        });
        http.Get(R"(/api/v1/sessions/([^/]+)/metrics)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { return store.metrics(req.matches[1]); });
        });
        http.Post(R"(/api/v1/sessions/([^/]+)/finish)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { return store.finish(req.matches[1]); });
        });
        http.Get("/api/v1/maps", [this](const httplib::Request&, httplib::Response& res) {
            guarded(res, [] {
                json maps = json::object();
                for (char id : kHumanMapIds) maps[std::string(1, id)] = human_tile_layout(id);
                return maps;
            });
        });
    }
};

SessionServer::SessionServer(ServerOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {
    impl_->install();
}

SessionServer::~SessionServer() { stop(); }

int SessionServer::start() {
    const auto& o = impl_->options;
    port_ = o.port == 0 ? impl_->http.bind_to_any_port(o.host) : (impl_->http.bind_to_port(o.host, o.port) ? o.port : -1);
    if (port_ < 0) throw ConfigError("cannot bind " + o.host + ":" + std::to_string(o.port));
    impl_->worker = std::thread([this] { impl_->http.listen_after_bind(); });
    impl_->http.wait_until_ready();
    return port_;
}

void SessionServer::stop() {
    if (!impl_) return;
    impl_->http.stop();
    if (impl_->worker.joinable()) impl_->worker.join();
}

void SessionServer::run() {
    const auto& o = impl_->options;
    port_ = o.port == 0 ? impl_->http.bind_to_any_port(o.host) : (impl_->http.bind_to_port(o.host, o.port) ? o.port : -1);
    if (port_ < 0) throw ConfigError("cannot bind " + o.host + ":" + std::to_string(o.port));
    std::cerr << "listening on http://" << o.host << ':' << port_ << "/api/v1\n";
    impl_->http.listen_after_bind();
}

int serve(const ServerOptions& options) {
    SessionServer server(options);
    server.run();
    return 0;
}

} // namespace ital
