#include "featurescope/server.hpp"

#include <httplib.h>

#include <atomic>
#include <csignal>
#include <thread>

namespace featurescope {

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

}  // namespace

ServeOptions parse_bind(const std::string& bind) {
    ServeOptions o;
    const auto colon = bind.rfind(':');
    std::string port = bind;
    if (colon != std::string::npos) {
        if (colon > 0) o.host = bind.substr(0, colon);
        port = bind.substr(colon + 1);
    }
    try {
        std::size_t used = 0;
        o.port = std::stoi(port, &used);
        if (used != port.size()) throw std::invalid_argument(port);
    } catch (const std::exception&) {
        fail(ErrorCode::invalid_argument, "invalid bind address", bind);
    }
    if (o.port < 0 || o.port > 65535) fail(ErrorCode::invalid_argument, "port out of range", bind);
    return o;
}

void stop_server() { g_stop.store(true); }

void serve(const Api& api, const ServeOptions& options, const std::function<void(int)>& on_ready) {
    httplib::Server server;
    const int threads = std::max(1, options.threads);
    server.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
    server.set_payload_max_length(1 << 20);
    // SO_REUSEADDR only: the library default adds SO_REUSEPORT, which would let
    // a second server share an occupied port instead of failing
    server.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
    });

    auto route = [&api](const httplib::Request& req, httplib::Response& res) {
        QueryParams query;
        for (const auto& [k, v] : req.params) query[k] = v;
        const ApiResponse r = api.handle(req.method, req.path, query, req.body);
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    server.Get(R"(/api/.*)", route);
    server.Post(R"(/api/.*)", route);
    server.Put(R"(/api/.*)", route);
    server.Delete(R"(/api/.*)", route);
    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty()) return;
        const bool missing = res.status == 404;
        res.set_content(error_body(missing ? "not_found" : "http_error", missing ? "unknown route" : "request failed",
                                   req.path)
                            .dump(),
                        "application/json");
    });

    int port = options.port;
    if (port == 0) {
        port = server.bind_to_any_port(options.host);
        if (port < 0) fail(ErrorCode::unavailable, "cannot bind", options.host + ":0");
    } else if (!server.bind_to_port(options.host, port)) {
        fail(ErrorCode::unavailable, "cannot bind", options.host + ":" + std::to_string(port));
    }

    g_stop.store(false);
    auto old_int = std::signal(SIGINT, on_signal);
    auto old_term = std::signal(SIGTERM, on_signal);
    std::thread listener([&server] { server.listen_after_bind(); });
    server.wait_until_ready();
    if (on_ready) on_ready(port);
    while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    server.stop();
    listener.join();
    std::signal(SIGINT, old_int);
    std::signal(SIGTERM, old_term);
}

}  // namespace featurescope
