#include "featurescope/api.hpp"

#include "featurescope/activation_lab.hpp"

#include <chrono>
#include <cstdio>
#include <sstream>

namespace featurescope {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : path) {
        if (c == '/') {
            if (!cur.empty()) parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) parts.push_back(cur);
    return parts;
}

int parse_int(const std::string& text, const char* what) {
    std::size_t used = 0;
    int value = 0;
    try {
        value = std::stoi(text, &used);
    } catch (const std::exception&) {
        fail(ErrorCode::invalid_argument, std::string("invalid ") + what, text);
    }
    if (used != text.size()) fail(ErrorCode::invalid_argument, std::string("invalid ") + what, text);
    return value;
}

double parse_double(const std::string& text, const char* what) {
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(text, &used);
    } catch (const std::exception&) {
        fail(ErrorCode::invalid_argument, std::string("invalid ") + what, text);
    }
    if (used != text.size() || !std::isfinite(value)) fail(ErrorCode::invalid_argument, std::string("invalid ") + what, text);
    return value;
}

std::optional<std::string> param(const QueryParams& q, const std::string& key) {
    const auto it = q.find(key);
    if (it == q.end()) return std::nullopt;
    return it->second;
}

Json parse_body(const std::string& body) {
    if (body.empty()) return Json::object();
    Json j = parse_json(body, "request body");
    if (!j.is_object()) fail(ErrorCode::invalid_argument, "request body must be a JSON object");
    return j;
}

std::string require_text(const Json& request, const char* key) {
    const auto text = json_required<std::string>(request, key);
    if (split_words(text).empty()) fail(ErrorCode::invalid_argument, std::string("field '") + key + "' is empty");
    return text;
}

void check_feature_id(const FeaturePack& pack, int feature_id) {
    if (feature_id < 0 || feature_id >= pack.manifest.n_features)
        fail(ErrorCode::not_found, "feature not found", pack.manifest.sae_id + "/" + std::to_string(feature_id));
}

Json position_json(const FeaturePack& pack, int feature) {
    return Json::array({pack.layout(feature, 0), pack.layout(feature, 1)});
}

Json node_json(const ClusterNode& n) {
    Json topics = Json::array();
    for (const auto& t : n.topics) topics.push_back({{"term", t.term}, {"score", t.score}});
    return {{"id", n.id},
            {"level", n.level},
            {"parent", n.parent},
            {"size", n.members.size()},
            {"centroid", n.centroid},
            {"topics", topics},
            {"hsl", to_json(n.color)},
            {"color", to_hex(n.color)}};
}

Json manifest_json(const FeaturePack& p) {
    return {{"sae_id", p.manifest.sae_id},
            {"layer_index", p.manifest.layer_index},
            {"d_model", p.manifest.d_model},
            {"n_features", p.manifest.n_features},
            {"activation", to_string(p.manifest.activation)},
            {"embedder", p.manifest.embedder},
            {"provenance", p.manifest.provenance},
            {"format_version", p.manifest.format_version}};
}

struct MethodNotAllowed {};

class WorkerSlot {
public:
    WorkerSlot(std::counting_semaphore<1024>& sem, int wait_ms) : sem_(sem) {
        if (!sem_.try_acquire_for(std::chrono::milliseconds(wait_ms)))
            fail(ErrorCode::retryable, "all generation workers are busy");
    }
    ~WorkerSlot() { sem_.release(); }
    WorkerSlot(const WorkerSlot&) = delete;
    WorkerSlot& operator=(const WorkerSlot&) = delete;

private:
    std::counting_semaphore<1024>& sem_;
};

}  // namespace

std::string SessionStore::create() {
    std::lock_guard lock(mutex_);
    const std::string id = "s" + std::to_string(next_++);
    sessions_[id].id = id;
    return id;
}

std::optional<SessionState> SessionStore::get(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) return std::nullopt;
    return it->second;
}

void SessionStore::update(const std::string& id, const std::function<void(SessionState&)>& edit) {
    std::lock_guard lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) fail(ErrorCode::not_found, "session not found", id);
    edit(it->second);
}

std::size_t SessionStore::size() const {
    std::lock_guard lock(mutex_);
    return sessions_.size();
}

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_argument:
        case ErrorCode::shape_mismatch:
        case ErrorCode::context_overflow: return 400;
        case ErrorCode::not_found: return 404;
        case ErrorCode::retryable:
        case ErrorCode::unavailable: return 503;
        case ErrorCode::data_error:
        case ErrorCode::io_error: return 500;
    }
    return 500;
}

Json error_body(const std::string& code, const std::string& message, const std::string& detail) {
    return {{"code", code}, {"message", message}, {"detail", detail}};
}

std::string embedding_id(const std::string& embedder_name, const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
    };
    mix(embedder_name);
    mix(std::string(1, '\0'));
    mix(text);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Api::Api(std::shared_ptr<const PackRegistry> registry, ApiOptions options)
    : registry_(std::move(registry)),
      options_(std::move(options)),
      workers_(std::max(1, std::min(options_.worker_limit, 1024))) {
    if (!registry_ || registry_->packs().empty()) fail(ErrorCode::invalid_argument, "no packs loaded");
    if (options_.worker_limit < 1) fail(ErrorCode::invalid_argument, "worker limit must be >= 1");
    embedder_ = make_embedder(registry_->embedder_name());
    rewriter_ = make_rewriter(options_.rewriter);
}

ApiResponse Api::handle(const std::string& method, const std::string& path, const QueryParams& query,
                        const std::string& body) const {
    try {
        return dispatch(method, path, query, body);
    } catch (const Error& e) {
        return {http_status(e.code()), error_body(to_string(e.code()), e.what(), e.detail())};
    } catch (const nlohmann::json::exception& e) {
        return {400, error_body(to_string(ErrorCode::invalid_argument), "malformed request", e.what())};
    } catch (const std::exception& e) {
        return {500, error_body("internal", "internal error", e.what())};
    }
}

ApiResponse Api::dispatch(const std::string& method, const std::string& path, const QueryParams& query,
                          const std::string& body) const {
    const auto parts = split_path(path);
    if (parts.empty() || parts[0] != "api") fail(ErrorCode::not_found, "unknown route", path);
    const std::size_t n = parts.size();
    auto method_is = [&](const char* m) {
        if (method != m) throw MethodNotAllowed{};
    };
    try {
        if (n == 2 && parts[1] == "health") {
            method_is("GET");
            return {200, health()};
        }
        if (n == 2 && parts[1] == "query") {
            method_is("POST");
            return {200, this->query(parse_body(body))};
        }
        if (n == 2 && parts[1] == "saes") {
            method_is("GET");
            return {200, list_saes(query)};
        }
        if (n == 2 && parts[1] == "sessions") {
            method_is("POST");
            const auto id = sessions_.create();
            return {201, session_json(*sessions_.get(id))};
        }
        if (n == 3 && parts[1] == "sessions") {
            method_is("GET");
            const auto s = sessions_.get(parts[2]);
            if (!s) fail(ErrorCode::not_found, "session not found", parts[2]);
            return {200, session_json(*s)};
        }
        if (n == 4 && parts[1] == "sessions" && parts[3] == "select") {
            method_is("POST");
            return {200, select(parts[2], parse_body(body))};
        }
        if (n >= 3 && parts[1] == "saes") {
            const FeaturePack& pack = registry_->pack(parts[2]);
            if (n == 3) {
                method_is("GET");
                return {200, manifest_json(pack)};
            }
            if (n == 4 && parts[3] == "atlas") {
                method_is("GET");
                return {200, atlas(pack, query)};
            }
            if (parts[3] == "features" && n >= 5) {
                const int fid = parse_int(parts[4], "feature id");
                check_feature_id(pack, fid);
                if (n == 5) {
                    method_is("GET");
                    return {200, feature(pack, fid, query)};
                }
                if (n == 6 && parts[5] == "probe") {
                    method_is("POST");
                    return {200, probe(pack, fid, parse_body(body))};
                }
                if (n == 6 && parts[5] == "coactivate") {
                    method_is("POST");
                    return {200, coactivate(pack, fid, parse_body(body))};
                }
                if (n == 6 && parts[5] == "steer") {
                    method_is("POST");
                    return {200, steer(pack, fid, parse_body(body))};
                }
            }
        }
    } catch (const MethodNotAllowed&) {
        return {405, error_body("method_not_allowed", "method not allowed", method + " " + path)};
    }
    fail(ErrorCode::not_found, "unknown route", path);
}

Json Api::health() const {
    return {{"status", "ok"},
            {"packs", registry_->packs().size()},
            {"embedder", embedder_->name()},
            {"rewriter", rewriter_->name()},
            {"diagnostics", registry_->diagnostics()}};
}

Json Api::list_saes(const QueryParams& q) const {
    Json out = Json::object();
    Json saes = Json::array();
    const auto text = param(q, "query");
    std::map<std::string, Json> relevance;
    if (text) {
        if (split_words(*text).empty()) fail(ErrorCode::invalid_argument, "query is empty");
        const VectorF e = embedder_->embed(*text);
        for (const auto& r : rank_saes(registry_->store(), e)) relevance[r.sae_id] = to_json(r, kDefaultKSet);
        out["query"] = *text;
        out["embedding_id"] = embedding_id(embedder_->name(), *text);
    }
    for (const auto& p : registry_->packs()) {
        Json entry = manifest_json(*p);
        if (text) entry["relevance"] = relevance.at(p->manifest.sae_id);
        saes.push_back(entry);
    }
    out["saes"] = saes;
    return out;
}

Json Api::query(const Json& request) const {
    const auto t0 = Clock::now();
    const std::string raw = require_text(request, "text");
    const auto top_k = json_field<int>(request, "top_k", static_cast<int>(options_.default_top_k));
    if (top_k < 1 || top_k > 1000) fail(ErrorCode::invalid_argument, "top_k must be in [1, 1000]");
    const auto session = json_field<std::string>(request, "session", "");
    if (!session.empty() && !sessions_.get(session)) fail(ErrorCode::not_found, "session not found", session);

    const Rewrite rewrite = rewriter_->rewrite(raw);
    const auto t_rewrite = Clock::now();
    const VectorF e = embedder_->embed(raw);
    const auto t_embed = Clock::now();
    const EmbeddingStore& store = registry_->store();

    Json hits = Json::array();
    for (const auto& h : store.top_k_features(e, static_cast<std::size_t>(top_k))) {
        const FeaturePack& p = registry_->pack(h.sae_id);
        hits.push_back({{"sae_id", h.sae_id},
                        {"layer_index", p.manifest.layer_index},
                        {"feature_id", h.feature_id},
                        {"score", h.score},
                        {"explanation", p.explanations[static_cast<std::size_t>(h.feature_id)]}});
    }
    const auto counts = layer_relevance_distribution(store, e);
    Json layers = Json::array();
    for (const auto& c : counts) {
        Json per_k = Json::object();
        for (std::size_t i = 0; i < kDefaultKSet.size(); ++i) per_k[std::to_string(kDefaultKSet[i])] = c.counts[i];
        layers.push_back({{"sae_id", c.sae_id}, {"layer_index", c.layer_index}, {"counts", per_k}});
    }
    Json ranking = Json::array();
    for (const auto& r : rank_from_counts(counts)) ranking.push_back(to_json(r, kDefaultKSet));

    const std::string id = embedding_id(embedder_->name(), raw);
    if (!session.empty())
        sessions_.update(session, [&](SessionState& s) {
            s.query_raw = raw;
            s.query_active = raw;
            s.embedding_id = id;
        });

    Json out = {{"embedding_id", id},
                {"query",
                 {{"text", raw},
                  {"suggestion", rewrite.text},
                  {"suggestion_fell_back", rewrite.fell_back},
                  {"rewriter", rewriter_->name()}}},
                {"histogram", to_json(store.similarity_histogram(e))},
                {"layers", layers},
                {"ranking", ranking},
                {"top_hits", hits}};
    out["timing"] = {{"rewrite_ms", std::chrono::duration<double, std::milli>(t_rewrite - t0).count()},
                     {"embed_ms", std::chrono::duration<double, std::milli>(t_embed - t_rewrite).count()},
                     {"total_ms", ms_since(t0)}};
    return out;
}

Json Api::atlas(const FeaturePack& pack, const QueryParams& q) const {
    if (!pack.has_atlas()) fail(ErrorCode::unavailable, "pack has no precomputed atlas", pack.manifest.sae_id);
    const Zoom zoom = parse_zoom(param(q, "zoom").value_or("far"));
    const HexBinLevel& level = pack.hexbins[static_cast<std::size_t>(zoom_index(zoom))];
    Json out = to_json(level);
    out["sae_id"] = pack.manifest.sae_id;
    Json clusters = Json::array();
    for (int id : pack.tree.level_nodes(level.cluster_level)) clusters.push_back(node_json(pack.tree.node(id)));
    out["clusters"] = clusters;
    out["color_fallback"] = static_cast<bool>(pack.tree.color_fallback[static_cast<std::size_t>(level.cluster_level)]);

    double min_x = pack.layout.col(0).minCoeff(), max_x = pack.layout.col(0).maxCoeff();
    double min_y = pack.layout.col(1).minCoeff(), max_y = pack.layout.col(1).maxCoeff();
    out["extent"] = {min_x, min_y, max_x, max_y};

    out["highlight"] = Json::array();
    out["pin"] = nullptr;
    if (const auto text = param(q, "query")) {
        if (split_words(*text).empty()) fail(ErrorCode::invalid_argument, "query is empty");
        int k = options_.highlight_k;
        if (const auto ks = param(q, "k")) k = parse_int(*ks, "k");
        if (k < 1) fail(ErrorCode::invalid_argument, "k must be >= 1");
        const VectorF e = embedder_->embed(*text);
        const auto hits =
            registry_->store().top_k_features(e, static_cast<std::size_t>(k), pack.manifest.sae_id);
        Json ids = Json::array();
        double wx = 0.0, wy = 0.0, wsum = 0.0, mx = 0.0, my = 0.0;
        for (const auto& h : hits) {
            ids.push_back(h.feature_id);
            const double x = pack.layout(h.feature_id, 0), y = pack.layout(h.feature_id, 1);
            mx += x;
            my += y;
            const double w = std::max(0.0, h.score);
            wx += w * x;
            wy += w * y;
            wsum += w;
        }
        out["highlight"] = ids;
        if (!hits.empty()) {
            const auto count = static_cast<double>(hits.size());
            out["pin"] = wsum > 0.0 ? Json::array({wx / wsum, wy / wsum}) : Json::array({mx / count, my / count});
        }
        out["query"] = *text;
    }
    return out;
}

Json Api::feature(const FeaturePack& pack, int fid, const QueryParams& q) const {
    if (!pack.has_atlas()) fail(ErrorCode::unavailable, "pack has no precomputed atlas", pack.manifest.sae_id);
    double theta = 0.3;
    if (const auto t = param(q, "theta")) theta = parse_double(*t, "theta");
    if (theta < 0.0 || theta > 1.0) fail(ErrorCode::invalid_argument, "theta must be in [0, 1]");
    int vocab_k = 10;
    if (const auto k = param(q, "vocab_k")) vocab_k = parse_int(*k, "vocab_k");
    if (vocab_k < 1) fail(ErrorCode::invalid_argument, "vocab_k must be >= 1");

    // a present but empty selection means nothing is brushed: all segments
    std::optional<std::set<int>> selection;
    if (const auto sel = param(q, "selection"); sel && !sel->empty()) {
        selection.emplace();
        std::stringstream ss(*sel);
        std::string item;
        while (std::getline(ss, item, ',')) selection->insert(parse_int(item, "selection id"));
    }

    const Model& model = registry_->model_for(pack);
    const auto segs = pack.segments_for(fid);
    if (selection)
        for (int id : *selection)
            if (std::none_of(segs.begin(), segs.end(), [id](const SegmentRecord& s) { return s.segment_id == id; }))
                fail(ErrorCode::not_found, "selected segment not found", std::to_string(id));

    Json out;
    out["sae_id"] = pack.manifest.sae_id;
    out["feature_id"] = fid;
    out["layer_index"] = pack.manifest.layer_index;
    out["explanation"] = pack.explanations[static_cast<std::size_t>(fid)];
    out["position"] = position_json(pack, fid);

    Json path = Json::array();
    for (int level = 0; level < pack.tree.n_levels(); ++level) {
        const auto& node = pack.tree.node(
            pack.tree.assignment[static_cast<std::size_t>(level)][static_cast<std::size_t>(fid)]);
        Json terms = Json::array();
        for (const auto& t : node.topics) terms.push_back(t.term);
        path.push_back({{"level", level}, {"cluster", node.id}, {"topics", terms}, {"color", to_hex(node.color)}});
    }
    out["clusters"] = path;

    const auto vocab = vocabulary_projection(pack.sae, fid, model.weights.unembedding, vocab_k);
    auto tokens = [&](const std::vector<TokenScore>& list) {
        Json arr = Json::array();
        for (const auto& t : list)
            arr.push_back({{"token", model.tokenizer.token(t.token_id)}, {"token_id", t.token_id}, {"score", t.score}});
        return arr;
    };
    out["vocab"] = {{"top", tokens(vocab.top)}, {"bottom", tokens(vocab.bottom)}};

    Json sampled = Json::array();
    for (const auto& s : stratified_sample(segs)) sampled.push_back(to_json(s));
    out["segments"] = sampled;
    out["n_segments"] = segs.size();

    const EmbeddingMatrix* emb = registry_->store().find(pack.manifest.sae_id);
    if (emb == nullptr) fail(ErrorCode::unavailable, "pack has no embeddings", pack.manifest.sae_id);
    const VectorF explanation = emb->rows().row(fid).transpose();
    const auto matrix = activation_similarity_matrix(explanation, segs, *embedder_, theta, &segment_cache_);
    Json cells = Json::array();
    for (const auto& c : matrix.cells) cells.push_back(to_json(c));
    out["matrix"] = {{"cells", cells}, {"warnings", matrix.warnings}};
    out["anomalies"] = to_json(detect_anomalies(matrix.cells, theta));

    Json stats = Json::array();
    for (const auto& s : max_activation_token_stats(segs, selection)) stats.push_back(to_json(s));
    out["token_stats"] = stats;
    out["selection"] = selection ? Json(*selection) : Json(nullptr);
    return out;
}

Json Api::probe(const FeaturePack& pack, int fid, const Json& request) const {
    const std::string text = require_text(request, "text");
    const auto session = json_field<std::string>(request, "session", "");
    const std::string key = pack.manifest.sae_id + "/" + std::to_string(fid) + "/" + text;
    if (!session.empty()) {
        const auto s = sessions_.get(session);
        if (!s) fail(ErrorCode::not_found, "session not found", session);
        if (const auto it = s->probe_cache.find(key); it != s->probe_cache.end()) return it->second;
    }
    Json out = to_json(probe_input(registry_->model_for(pack), pack.sae, fid, text));
    out["sae_id"] = pack.manifest.sae_id;
    out["feature_id"] = fid;
    if (!session.empty()) sessions_.update(session, [&](SessionState& s) { s.probe_cache[key] = out; });
    return out;
}

Json Api::coactivate(const FeaturePack& pack, int fid, const Json& request) const {
    const std::string text = require_text(request, "text");
    const auto anchors = json_required<std::vector<int>>(request, "anchors");
    const int top_n = json_field<int>(request, "top_n", 10);
    if (top_n < 1) fail(ErrorCode::invalid_argument, "top_n must be >= 1");
    const MatrixD* layout = pack.layout.rows() > 0 ? &pack.layout : nullptr;
    const auto set = co_activated_features(registry_->model_for(pack), pack.sae, fid, text, anchors, top_n, layout);
    Json features = Json::array();
    for (const auto& f : set.features) {
        Json item = {{"feature_id", f.feature_id},
                     {"activation", f.activation},
                     {"explanation", pack.explanations[static_cast<std::size_t>(f.feature_id)]}};
        item["position"] = f.position ? Json(*f.position) : Json(nullptr);
        features.push_back(item);
    }
    return {{"sae_id", pack.manifest.sae_id},
            {"feature_id", fid},
            {"anchors", set.anchors},
            {"anchor_tokens", set.anchor_tokens},
            {"features", features}};
}

Json Api::steer(const FeaturePack& pack, int fid, const Json& request) const {
    const std::string prompt = require_text(request, "prompt");
    const auto strengths = json_field<std::vector<float>>(request, "strengths", kDefaultStrengths);
    if (strengths.empty() || strengths.size() > 16) fail(ErrorCode::invalid_argument, "1 to 16 strengths required");
    for (float s : strengths)
        if (!std::isfinite(s)) fail(ErrorCode::invalid_argument, "strengths must be finite");
    const Json settings_json = json_field<Json>(request, "settings", Json::object());
    GenerationSettings settings;
    settings.max_new_tokens = json_field<int>(settings_json, "max_new_tokens", 16);
    if (settings.max_new_tokens < 1 || settings.max_new_tokens > options_.max_new_tokens_limit)
        fail(ErrorCode::invalid_argument, "max_new_tokens out of range",
             "1.." + std::to_string(options_.max_new_tokens_limit));
    const auto decoding = json_field<std::string>(settings_json, "decoding", "greedy");
    if (decoding == "greedy")
        settings.decoding = GenerationSettings::Decoding::greedy;
    else if (decoding == "sample")
        settings.decoding = GenerationSettings::Decoding::sample;
    else
        fail(ErrorCode::invalid_argument, "decoding must be greedy or sample", decoding);
    settings.temperature = json_field<float>(settings_json, "temperature", 1.0f);
    if (!(settings.temperature > 0.0f)) fail(ErrorCode::invalid_argument, "temperature must be > 0");
    settings.seed = json_field<std::uint64_t>(settings_json, "seed", 0);
    const bool normalize = json_field<bool>(request, "normalize", false);

    const Model& model = registry_->model_for(pack);
    WorkerSlot slot(workers_, options_.worker_wait_ms);
    const auto t0 = Clock::now();
    const auto prompt_ids = model.tokenizer.encode(prompt).ids;
    const auto baseline = generate(model, prompt_ids, settings);
    const auto branches = steer_generate(model, pack.sae, fid, prompt, strengths, settings, normalize);
    Json items = Json::array();
    for (const auto& b : branches) items.push_back(to_json(b));
    return {{"sae_id", pack.manifest.sae_id},
            {"feature_id", fid},
            {"prompt", prompt},
            {"settings",
             {{"max_new_tokens", settings.max_new_tokens},
              {"decoding", decoding},
              {"temperature", settings.temperature},
              {"seed", settings.seed}}},
            {"normalize", normalize},
            {"baseline", {{"tokens", baseline}, {"text", model.tokenizer.decode(baseline)}}},
            {"branches", items},
            {"timing", {{"total_ms", ms_since(t0)}}}};
}

Json Api::session_json(const SessionState& s) const {
    Json out = {{"session_id", s.id}, {"probe_cache_size", s.probe_cache.size()}};
    out["query"] = s.query_raw ? Json(*s.query_raw) : Json(nullptr);
    out["embedding_id"] = s.embedding_id ? Json(*s.embedding_id) : Json(nullptr);
    out["sae_id"] = s.sae_id ? Json(*s.sae_id) : Json(nullptr);
    out["feature_id"] = s.feature_id ? Json(*s.feature_id) : Json(nullptr);
    return out;
}

Json Api::select(const std::string& session_id, const Json& request) const {
    const auto sae = json_field<std::string>(request, "sae_id", "");
    const auto fid = json_field<int>(request, "feature_id", -1);
    if (sae.empty() && fid >= 0) fail(ErrorCode::invalid_argument, "feature selection needs an sae_id");
    if (!sae.empty()) {
        const FeaturePack& pack = registry_->pack(sae);
        if (fid >= 0) check_feature_id(pack, fid);
    }
    sessions_.update(session_id, [&](SessionState& s) {
        if (!sae.empty()) {
            if (s.sae_id != sae) s.feature_id.reset();
            s.sae_id = sae;
        }
        if (fid >= 0) s.feature_id = fid;
    });
    return session_json(*sessions_.get(session_id));
}

Json run_golden_flow(const RequestFn& request) {
    Json steps = Json::array();
    auto call = [&](const std::string& name, const std::string& method, const std::string& path, const QueryParams& q,
                    const Json& body) -> const Json& {
        const ApiResponse r = request(method, path, q, body.is_null() ? std::string() : body.dump());
        Json step = {{"step", name}, {"method", method}, {"path", path}, {"status", r.status}, {"body", r.body}};
        if (!q.empty()) step["query"] = q;
        if (!body.is_null()) step["request"] = body;
        steps.push_back(std::move(step));
        if (r.status != 200)
            fail(ErrorCode::data_error, "flow step failed: " + name, std::to_string(r.status) + " " + r.body.dump());
        return steps.back()["body"];
    };

    call("health", "GET", "/api/health", {}, nullptr);
    const Json raw = call("query", "POST", "/api/query", {}, Json{{"text", "plant"}, {"top_k", 10}});
    const std::string suggestion = raw["query"]["suggestion"];
    const Json refined = call("query_refined", "POST", "/api/query", {}, Json{{"text", suggestion}, {"top_k", 10}});
    call("saes", "GET", "/api/saes", {{"query", suggestion}}, nullptr);

    const std::string sae = refined["ranking"][0]["sae_id"];
    const std::string base = "/api/saes/" + sae;
    call("atlas_far", "GET", base + "/atlas", {{"zoom", "far"}, {"query", suggestion}}, nullptr);
    call("atlas_near", "GET", base + "/atlas", {{"zoom", "near"}, {"query", suggestion}}, nullptr);

    int fid = -1;
    for (const auto& h : refined["top_hits"])
        if (h["sae_id"] == sae) {
            fid = h["feature_id"];
            break;
        }
    if (fid < 0) fail(ErrorCode::data_error, "flow: top-ranked SAE has no top hit");
    const std::string feature = base + "/features/" + std::to_string(fid);
    const Json details = call("feature", "GET", feature, {}, nullptr);
    const Json& cells = details["matrix"]["cells"];
    std::string selection;
    for (std::size_t i = 0; i < std::min<std::size_t>(2, cells.size()); ++i)
        selection += (i ? "," : "") + std::to_string(cells[i]["segment_id"].get<int>());
    call("feature_selected", "GET", feature, {{"selection", selection}}, nullptr);
    call("probe", "POST", feature + "/probe", {}, Json{{"text", "the plant grows in the garden"}});

    const Json hero_raw = call("query_hero", "POST", "/api/query", {}, Json{{"text", "hero"}, {"top_k", 10}});
    const Json hero = call("query_hero_refined", "POST", "/api/query", {},
                           Json{{"text", hero_raw["query"]["suggestion"]}, {"top_k", 10}});
    int hero_fid = -1;
    for (const auto& h : hero["top_hits"])
        if (h["sae_id"] == sae) {
            hero_fid = h["feature_id"];
            break;
        }
    if (hero_fid < 0) fail(ErrorCode::data_error, "flow: no hero feature in the selected SAE");
    call("coactivate", "POST", base + "/features/" + std::to_string(hero_fid) + "/coactivate", {},
         Json{{"text", "the hero saves the city"}, {"anchors", {1}}, {"top_n", 10}});
    call("steer", "POST", feature + "/steer", {},
         Json{{"prompt", "the gardener said"},
              {"strengths", {-10.0, -5.0, 0.0, 5.0, 10.0}},
              {"settings", {{"max_new_tokens", 12}, {"decoding", "greedy"}}}});
    return {{"steps", steps}};
}

bool json_equivalent(const Json& a, const Json& b, double rel_tol, std::string* where) {
    auto report = [&](const std::string& at) {
        if (where) *where = at.empty() ? "/" : at;
        return false;
    };
    std::function<bool(const Json&, const Json&, const std::string&)> eq = [&](const Json& x, const Json& y,
                                                                             const std::string& at) -> bool {
        if (x.is_number() && y.is_number()) {
            const double u = x.get<double>(), v = y.get<double>();
            if (u == v) return true;
            if (std::abs(u - v) <= rel_tol * std::max(std::abs(u), std::abs(v))) return true;
            return report(at);
        }
        if (x.type() != y.type()) return report(at);
        if (x.is_object()) {
            for (const auto& [k, v] : x.items()) {
                if (k == "timing") continue;
                if (!y.contains(k)) return report(at + "/" + k);
                if (!eq(v, y.at(k), at + "/" + k)) return false;
            }
            for (const auto& [k, v] : y.items())
                if (k != "timing" && !x.contains(k)) return report(at + "/" + k);
            return true;
        }
        if (x.is_array()) {
            if (x.size() != y.size()) return report(at);
            for (std::size_t i = 0; i < x.size(); ++i)
                if (!eq(x[i], y[i], at + "/" + std::to_string(i))) return false;
            return true;
        }
        return x == y ? true : report(at);
    };
    return eq(a, b, "");
}

}  // namespace featurescope
