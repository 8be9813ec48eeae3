#ifndef FEATURESCOPE_SERVER_HPP
#define FEATURESCOPE_SERVER_HPP

#include "featurescope/api.hpp"

#include <functional>
#include <string>

namespace featurescope {

struct ServeOptions {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    int threads = 8;
};

/// "host:port" or ":port" or "port".
ServeOptions parse_bind(const std::string& bind);

/// Serves `api` over HTTP until SIGINT/SIGTERM (or `stop_server`). Calls
/// `on_ready` with the bound port once listening. Throws unavailable when
/// the address cannot be bound.
void serve(const Api& api, const ServeOptions& options, const std::function<void(int)>& on_ready = {});

/// Asks a running `serve` to return; safe from any thread.
void stop_server();

}  // namespace featurescope

#endif
