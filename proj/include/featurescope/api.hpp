#ifndef FEATURESCOPE_API_HPP
#define FEATURESCOPE_API_HPP

#include "featurescope/interpretation.hpp"
#include "featurescope/json_io.hpp"
#include "featurescope/pack.hpp"
#include "featurescope/retrieval.hpp"

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>

namespace featurescope {

struct ApiOptions {
    std::string rewriter = "lexicon";
    int worker_limit = 2;         // concurrent generation jobs
    int worker_wait_ms = 30000;   // then 503 retryable
    std::size_t default_top_k = 10;
    int highlight_k = 50;         // atlas highlight / pin features
    int max_new_tokens_limit = 64;
};

struct ApiResponse {
    int status = 200;
    Json body;
};

using QueryParams = std::map<std::string, std::string>;

/// Session-scoped state of one analyst.
struct SessionState {
    std::string id;
    std::optional<std::string> query_raw;
    std::optional<std::string> query_active;
    std::optional<std::string> embedding_id;
    std::optional<std::string> sae_id;
    std::optional<int> feature_id;
    std::map<std::string, Json> probe_cache;  // key: sae/feature/text
};

class SessionStore {
public:
    std::string create();
    std::optional<SessionState> get(const std::string& id) const;
    /// Applies `edit` under the store lock; not_found for unknown ids.
    void update(const std::string& id, const std::function<void(SessionState&)>& edit);
    std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, SessionState> sessions_;
    std::uint64_t next_ = 1;
};

/// The JSON API over an immutable registry. `handle` is safe to call from
/// many threads; transport layers (HTTP server, CLI) only translate requests.
class Api {
public:
    explicit Api(std::shared_ptr<const PackRegistry> registry, ApiOptions options = {});

    /// `path` starts with /api. Never throws: failures become error bodies
    /// {code, message, detail} with a 4xx/5xx status.
    ApiResponse handle(const std::string& method, const std::string& path, const QueryParams& query,
                       const std::string& body) const;

    const PackRegistry& registry() const { return *registry_; }
    const TextEmbedder& embedder() const { return *embedder_; }

private:
    ApiResponse dispatch(const std::string& method, const std::string& path, const QueryParams& query,
                         const std::string& body) const;

    Json health() const;
    Json list_saes(const QueryParams& query) const;
    Json query(const Json& request) const;
    Json atlas(const FeaturePack& pack, const QueryParams& query) const;
    Json feature(const FeaturePack& pack, int feature_id, const QueryParams& query) const;
    Json probe(const FeaturePack& pack, int feature_id, const Json& request) const;
    Json coactivate(const FeaturePack& pack, int feature_id, const Json& request) const;
    Json steer(const FeaturePack& pack, int feature_id, const Json& request) const;
    Json session_json(const SessionState& s) const;
    Json select(const std::string& session_id, const Json& request) const;

    std::shared_ptr<const PackRegistry> registry_;
    ApiOptions options_;
    std::shared_ptr<const TextEmbedder> embedder_;
    std::shared_ptr<const QueryRewriter> rewriter_;
    mutable SessionStore sessions_;
    mutable SegmentEmbeddingCache segment_cache_;
    mutable std::counting_semaphore<1024> workers_;
};

int http_status(ErrorCode code);
Json error_body(const std::string& code, const std::string& message, const std::string& detail = {});

/// Stable id of an embedded query (FNV-1a over embedder name and text).
std::string embedding_id(const std::string& embedder_name, const std::string& text);

/// Transport used by the scripted flow: (method, path, query, body).
using RequestFn = std::function<ApiResponse(const std::string&, const std::string&, const QueryParams&,
                                            const std::string&)>;

/// The scripted analyst session replayed by the golden tests: query,
/// refined query, SAE relevance, atlas, feature details, probe,
/// co-activation and steering. Returns every step with its response.
Json run_golden_flow(const RequestFn& request);

/// Structural equality that skips "timing" members and compares numbers
/// with relative tolerance. On mismatch `where` receives a JSON-pointer-ish
/// location.
bool json_equivalent(const Json& a, const Json& b, double rel_tol, std::string* where = nullptr);

}  // namespace featurescope

#endif
