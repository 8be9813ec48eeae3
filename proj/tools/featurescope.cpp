// featurescope: fixtures, ingest, precompute, query, serve, request, flow.
// Exit codes: 0 success, 1 usage, 2 data error.

#include "featurescope/api.hpp"
#include "featurescope/fixtures.hpp"
#include "featurescope/pipeline.hpp"
#include "featurescope/server.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <cstdio>
#include <fstream>
#include <iostream>

using namespace featurescope;

namespace {

constexpr int kUsage = 1;
constexpr int kDataError = 2;

int exit_code(ErrorCode code) { return code == ErrorCode::invalid_argument ? kUsage : kDataError; }

QueryParams parse_params(const std::vector<std::string>& items) {
    QueryParams q;
    for (const auto& item : items) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) fail(ErrorCode::invalid_argument, "expected key=value", item);
        q[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return q;
}

std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

void print_query_table(const Json& r) {
    std::cout << "query:      " << r["query"]["text"].get<std::string>() << "\n"
              << "suggestion: " << r["query"]["suggestion"].get<std::string>() << "\n\n";
    std::cout << pad("sae", 20) << pad("layer", 7) << pad("top10", 7) << pad("top100", 8) << pad("top1000", 9)
              << "avg_rank\n";
    for (const auto& s : r["ranking"]) {
        char avg[32];
        std::snprintf(avg, sizeof avg, "%.3f", s["avg_rank"].get<double>());
        std::cout << pad(s["sae_id"], 20) << pad(std::to_string(s["layer_index"].get<int>()), 7)
                  << pad(std::to_string(s["counts"]["10"].get<int>()), 7)
                  << pad(std::to_string(s["counts"]["100"].get<int>()), 8)
                  << pad(std::to_string(s["counts"]["1000"].get<int>()), 9) << avg << "\n";
    }
    std::cout << "\n" << pad("score", 10) << pad("sae", 20) << pad("feature", 9) << "explanation\n";
    for (const auto& h : r["top_hits"]) {
        char score[32];
        std::snprintf(score, sizeof score, "%.4f", h["score"].get<double>());
        std::cout << pad(score, 10) << pad(h["sae_id"], 20) << pad(std::to_string(h["feature_id"].get<int>()), 9)
                  << h["explanation"].get<std::string>() << "\n";
    }
}

RequestFn http_transport(const std::string& url) {
    auto client = std::make_shared<httplib::Client>(url);
    client->set_read_timeout(120, 0);
    return [client, url](const std::string& method, const std::string& path, const QueryParams& query,
                         const std::string& body) -> ApiResponse {
        httplib::Result res;
        if (method == "GET") {
            httplib::Params params(query.begin(), query.end());
            res = client->Get(path, params, httplib::Headers{});
        } else if (method == "POST") {
            res = client->Post(path, body, "application/json");
        } else {
            fail(ErrorCode::invalid_argument, "unsupported method", method);
        }
        if (!res) fail(ErrorCode::unavailable, "HTTP request failed", url + path + ": " + httplib::to_string(res.error()));
        return {res->status, parse_json(res->body, path)};
    };
}

RequestFn local_transport(const std::shared_ptr<const Api>& api) {
    return [api](const std::string& method, const std::string& path, const QueryParams& query,
                 const std::string& body) { return api->handle(method, path, query, body); };
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"featurescope: find, inspect and steer SAE features"};
    app.require_subcommand(1);

    std::string packs = "packs";
    std::uint64_t seed = 42;
    std::string format = "json";

    auto* fixtures = app.add_subcommand("fixtures", "generate the toy model and fixture packs");
    std::string out_dir = "fixtures";
    FixtureOptions fixture_options;
    fixtures->add_option("--out,-o", out_dir, "output directory");
    fixtures->add_option("--seed", seed, "random seed");
    fixtures->add_option("--features", fixture_options.n_features, "features per SAE");

    auto* ingest = app.add_subcommand("ingest", "turn raw SAE files into a pack");
    std::string ingest_manifest;
    ingest->add_option("manifest", ingest_manifest, "key=value ingest manifest")->required();

    auto* precompute = app.add_subcommand("precompute", "embed, lay out, cluster and bin a pack");
    std::vector<std::string> precompute_dirs;
    PrecomputeOptions precompute_options;
    precompute->add_option("packs", precompute_dirs, "pack directories")->required();
    precompute->add_option("--seed", seed, "random seed");
    precompute->add_option("--embedder", precompute_options.embedder, "hashing | remote");

    std::string rewriter = "lexicon";
    auto* query = app.add_subcommand("query", "rank SAEs and features for a concept query");
    std::string query_text;
    int top_k = 10;
    query->add_option("text", query_text, "concept query")->required();
    query->add_option("--packs", packs, "pack directory");
    query->add_option("--top-k", top_k, "number of features to list");
    query->add_option("--format", format, "json | table")->check(CLI::IsMember({"json", "table"}));
    query->add_option("--rewriter", rewriter, "lexicon | remote");

    auto* serve_cmd = app.add_subcommand("serve", "serve the HTTP JSON API");
    std::string bind = "127.0.0.1:8080";
    ApiOptions api_options;
    ServeOptions serve_options;
    serve_cmd->add_option("--packs", packs, "pack directory");
    serve_cmd->add_option("--bind", bind, "host:port (port 0 picks a free port)");
    serve_cmd->add_option("--workers", api_options.worker_limit, "concurrent generation jobs")
        ->check(CLI::Range(1, 1024));
    serve_cmd->add_option("--threads", serve_options.threads, "HTTP threads")->check(CLI::Range(1, 256));
    serve_cmd->add_option("--rewriter", rewriter, "lexicon | remote");

    auto* request = app.add_subcommand("request", "send one API request in-process or to --url");
    std::string method, path, body, url;
    std::vector<std::string> params;
    request->add_option("method", method, "GET | POST")->required();
    request->add_option("path", path, "e.g. /api/saes")->required();
    request->add_option("--param,-p", params, "query parameter key=value");
    request->add_option("--body,-d", body, "JSON body");
    request->add_option("--packs", packs, "pack directory");
    request->add_option("--url", url, "server base URL");

    auto* flow = app.add_subcommand("flow", "replay the scripted analyst session");
    std::string compare;
    flow->add_option("--packs", packs, "pack directory (in-process)");
    flow->add_option("--url", url, "server base URL (over HTTP)");
    flow->add_option("--compare", compare, "golden JSON to compare against");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kUsage;
    }

    try {
        api_options.rewriter = rewriter;
        auto make_api = [&] { return std::make_shared<const Api>(PackRegistry::load(packs), api_options); };
        auto print_diagnostics = [](const Api& api) {
            for (const auto& d : api.registry().diagnostics()) std::cerr << "warning: " << d << "\n";
        };

        if (*fixtures) {
            fixture_options.seed = seed;
            const auto summary = generate_fixtures(out_dir, fixture_options);
            for (const auto& w : summary.warnings) std::cerr << "warning: " << w << "\n";
            Json out = {{"model", summary.model_dir.string()}, {"expectations", summary.expectations.string()}};
            for (const auto& p : summary.pack_dirs) out["packs"].push_back(p.string());
            std::cout << out.dump(2) << "\n";
        } else if (*ingest) {
            const auto pack = ingest_pack(IngestManifest::read(ingest_manifest));
            std::cout << "ingested " << pack.manifest.sae_id << " into " << pack.dir.string() << "\n";
        } else if (*precompute) {
            precompute_options.seed = seed;
            for (const auto& dir : precompute_dirs) {
                const auto report = precompute_pack(dir, precompute_options);
                for (const auto& w : report.warnings) std::cerr << "warning: " << report.sae_id << ": " << w << "\n";
                std::cout << "precomputed " << report.sae_id << "\n";
            }
        } else if (*query) {
            const auto api = make_api();
            print_diagnostics(*api);
            const Json req = {{"text", query_text}, {"top_k", top_k}};
            const auto r = api->handle("POST", "/api/query", {}, req.dump());
            if (r.status != 200) {
                std::cerr << r.body.dump(2) << "\n";
                return r.status < 500 ? kUsage : kDataError;
            }
            if (format == "table")
                print_query_table(r.body);
            else
                std::cout << r.body.dump(2) << "\n";
        } else if (*serve_cmd) {
            const auto api = make_api();
            print_diagnostics(*api);
            const ServeOptions parsed = parse_bind(bind);
            serve_options.host = parsed.host;
            serve_options.port = parsed.port;
            serve(*api, serve_options, [&](int port) {
                std::cout << "listening on " << serve_options.host << ":" << port << std::endl;
            });
            std::cerr << "stopped\n";
        } else if (*request) {
            const RequestFn send = url.empty() ? local_transport(make_api()) : http_transport(url);
            const auto r = send(method, path, parse_params(params), body);
            std::cout << r.body.dump(2) << "\n";
            if (r.status >= 400) return r.status < 500 ? kUsage : kDataError;
        } else if (*flow) {
            const RequestFn send = url.empty() ? local_transport(make_api()) : http_transport(url);
            const Json result = run_golden_flow(send);
            if (compare.empty()) {
                std::cout << result.dump(1) << "\n";
            } else {
                std::ifstream in(compare);
                if (!in) fail(ErrorCode::io_error, "cannot read golden file", compare);
                const Json golden = parse_json(std::string(std::istreambuf_iterator<char>(in), {}), compare);
                std::string where;
                if (!json_equivalent(golden, result, 1e-6, &where)) {
                    std::cerr << "golden mismatch at " << where << "\n";
                    return kDataError;
                }
                std::cout << "golden flow matches " << compare << "\n";
            }
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what();
        if (!e.detail().empty()) std::cerr << " (" << e.detail() << ")";
        std::cerr << "\n";
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDataError;
    }
    return 0;
}
