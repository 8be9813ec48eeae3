#include "featurescope/api.hpp"
#include "featurescope/fixtures.hpp"
#include "featurescope/pipeline.hpp"
#include "featurescope/server.hpp"

#include "support.hpp"

#include <httplib.h>

#include <cstdio>
#include <fstream>
#include <future>
#include <thread>

using namespace featurescope;
using test_support::error_code_of;
using test_support::fixtures_dir;
using test_support::TempDir;
namespace fs = std::filesystem;

namespace {

const std::string kPlantPack = "res-l1-relu";

/// Copies the fixture model and the named packs into a scratch directory.
void copy_fixture(const fs::path& to, const std::vector<std::string>& packs) {
    fs::copy(fixtures_dir() / "model", to / "model", fs::copy_options::recursive);
    for (const auto& p : packs) fs::copy(fixtures_dir() / p, to / p, fs::copy_options::recursive);
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

/// Every regular file under `dir`, relative path -> bytes.
std::map<std::string, std::string> tree_bytes(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = file_bytes(e.path());
    return out;
}

const Api& fixture_api() {
    static const Api api(PackRegistry::load(fixtures_dir()));
    return api;
}

Json expectations() {
    static const Json j = parse_json(read_text_file(fixtures_dir() / "expectations.json"), "expectations");
    return j;
}

std::string run_command(const std::string& cmd, int* status) {
    std::string out;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
    const int rc = ::pclose(pipe);
    *status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    return out;
}

}  // namespace

TEST_CASE("fixture generation is byte-for-byte reproducible") {
    TempDir dir("fixtures");
    generate_fixtures(dir.path(), {});
    const auto fresh = tree_bytes(dir.path());
    const auto stored = tree_bytes(fixtures_dir());
    REQUIRE(fresh.size() == stored.size());
    for (const auto& [name, bytes] : fresh) {
        INFO(name);
        CHECK(stored.count(name) == 1);
        CHECK((stored.count(name) && stored.at(name) == bytes));
    }
}

TEST_CASE("fixture packs load and honour their planted properties") {
    const auto registry = PackRegistry::load(fixtures_dir());
    REQUIRE(registry->packs().size() == 3);
    const auto exp = expectations();
    for (const auto& p : registry->packs()) {
        INFO(p->manifest.sae_id);
        CHECK(p->has_atlas());
        p->tree.check_nesting();
        CHECK(p->tree.level_sizes == std::vector<int>{10, 30, 90});
        const auto& e = exp["packs"][p->manifest.sae_id];
        const int plant = e["plant_feature"];
        const auto probe = probe_input(registry->model_for(*p), p->sae, plant, exp["probe"]["text"]);
        CHECK(probe.peak_index == exp["probe"]["peak_index"].get<int>());
    }
    CHECK(registry->pack("res-l3-jumprelu").sae.activation == SaeActivation::jump_relu);
    CHECK(error_code_of([&] { registry->pack("nope"); }) == ErrorCode::not_found);
}

TEST_CASE("pack round trip and corrupt packs") {
    TempDir dir("packs");
    copy_fixture(dir.path(), {kPlantPack, "res-l2-relu"});
    const FeaturePack original = load_pack(dir / kPlantPack);
    write_pack(original, dir / "copy");
    // the copy sits next to the original, so the relative model path still resolves
    const FeaturePack copy = load_pack(dir / "copy");
    CHECK(copy.sae.w_enc == original.sae.w_enc);
    CHECK(copy.explanations == original.explanations);
    CHECK(copy.segments.size() == original.segments.size());
    CHECK(copy.layout == original.layout);
    CHECK(file_bytes(dir / "copy" / "clusters.json") == file_bytes(dir / kPlantPack / "clusters.json"));

    fs::resize_file(dir / "res-l2-relu" / "w_dec.bin", 100);
    fs::remove_all(dir / "copy");
    const auto registry = PackRegistry::load(dir.path());
    CHECK(registry->packs().size() == 1);
    REQUIRE(registry->diagnostics().size() >= 1);
    bool named = false;
    for (const auto& d : registry->diagnostics()) named = named || d.find("res-l2-relu") != std::string::npos;
    CHECK(named);
    CHECK(error_code_of([&] { load_pack(dir / "res-l2-relu"); }) == ErrorCode::data_error);

    TempDir empty("empty");
    CHECK_THROWS_AS(PackRegistry::load(empty.path()), Error);
}

TEST_CASE("precompute is idempotent and clamps level sizes on small packs") {
    TempDir dir("precompute");
    copy_fixture(dir.path(), {kPlantPack});
    const auto before = tree_bytes(dir / kPlantPack);
    const auto report = precompute_pack(dir / kPlantPack, PrecomputeOptions{});
    CHECK(report.level_sizes == std::vector<int>{10, 30, 90});
    CHECK(tree_bytes(dir / kPlantPack) == before);

    // cut the pack down to 50 features
    FeaturePack small = load_pack(dir / kPlantPack, false);
    small.sae.w_enc = MatrixF(small.sae.w_enc.topRows(50));
    small.sae.b_enc = VectorF(small.sae.b_enc.head(50));
    small.sae.w_dec = MatrixF(small.sae.w_dec.topRows(50));
    small.explanations.resize(50);
    std::erase_if(small.segments, [](const SegmentRecord& s) { return s.feature_id >= 50; });
    small.manifest.sae_id = "small";
    small.manifest.n_features = 50;
    small.embeddings.reset();
    small.layout = MatrixD();
    small.tree = ClusterTree();
    small.hexbins.clear();
    write_pack(small, dir / "small");
    const auto r = precompute_pack(dir / "small", PrecomputeOptions{});
    CHECK(r.level_sizes == std::vector<int>{10, 30, 50});
    CHECK_FALSE(r.warnings.empty());
    const FeaturePack reloaded = load_pack(dir / "small");
    CHECK(reloaded.tree.level_nodes(2).size() == 50);
    reloaded.tree.check_nesting();
}

TEST_CASE("ingest builds a pack from raw files") {
    TempDir dir("ingest");
    copy_fixture(dir.path(), {});
    const FeaturePack src = load_pack(fixtures_dir() / kPlantPack);
    const fs::path raw = dir / "raw";
    fs::create_directories(raw);
    write_matrix(raw / "w_enc.bin", src.sae.w_enc);
    write_matrix(raw / "b_enc.bin", MatrixF(src.sae.b_enc.transpose()));
    write_matrix(raw / "w_dec.bin", src.sae.w_dec);
    write_matrix(raw / "b_dec.bin", MatrixF(src.sae.b_dec.transpose()));
    fs::copy(fixtures_dir() / kPlantPack / "explanations.jsonl", raw / "explanations.jsonl");
    fs::copy(fixtures_dir() / kPlantPack / "segments.jsonl", raw / "segments.jsonl");
    write_text_file(raw / "ingest.manifest",
                    "sae_id=raw-l1\nlayer_index=1\nactivation=relu\nmodel=../model\nw_enc=w_enc.bin\n"
                    "b_enc=b_enc.bin\nw_dec=w_dec.bin\nb_dec=b_dec.bin\nexplanations=explanations.jsonl\n"
                    "segments=segments.jsonl\noutput=../raw-l1\n");
    const FeaturePack pack = ingest_pack(IngestManifest::read(raw / "ingest.manifest"));
    CHECK(pack.manifest.sae_id == "raw-l1");
    const FeaturePack loaded = load_pack(dir / "raw-l1", false);
    CHECK(loaded.sae.w_dec == src.sae.w_dec);
    CHECK_FALSE(loaded.has_atlas());
    CHECK(error_code_of([&] { load_pack(dir / "raw-l1", true); }) == ErrorCode::data_error);

    // a decoder that disagrees with the encoder is rejected
    write_matrix(raw / "w_dec.bin", MatrixF(src.sae.w_dec.topRows(100)));
    CHECK(error_code_of([&] { ingest_pack(IngestManifest::read(raw / "ingest.manifest")); }) ==
          ErrorCode::shape_mismatch);
    write_text_file(raw / "bad.manifest", "sae_id=x\nlayer_index=1\nactivation=gelu\n");
    CHECK(error_code_of([&] { IngestManifest::read(raw / "bad.manifest"); }) == ErrorCode::invalid_argument);
}

TEST_CASE("api: health, listing and errors") {
    const Api& api = fixture_api();
    const auto health = api.handle("GET", "/api/health", {}, "");
    CHECK(health.status == 200);
    CHECK(health.body["packs"] == 3);
    CHECK(api.handle("GET", "/api/saes", {}, "").body["saes"].size() == 3);
    CHECK(api.handle("GET", "/api/nothing", {}, "").status == 404);
    CHECK(api.handle("DELETE", "/api/health", {}, "").status == 405);
    CHECK(api.handle("POST", "/api/query", {}, "{not json").status == 400);
    const auto empty = api.handle("POST", "/api/query", {}, R"({"text": "  "})");
    CHECK(empty.status == 400);
    CHECK(empty.body["code"] == "invalid_argument");
    CHECK(api.handle("POST", "/api/query", {}, R"({"text": 5})").status == 400);
    CHECK(api.handle("POST", "/api/query", {}, R"({"text": "plant", "top_k": 0})").status == 400);
    CHECK(api.handle("GET", "/api/saes/missing", {}, "").status == 404);
    CHECK(api.handle("GET", "/api/saes/res-l1-relu/features/128", {}, "").status == 404);
    CHECK(api.handle("GET", "/api/saes/res-l1-relu/features/abc", {}, "").status == 400);
    CHECK(api.handle("GET", "/api/saes/res-l1-relu/atlas", {{"zoom", "closer"}}, "").status == 400);
    CHECK(api.handle("GET", "/api/saes/res-l1-relu/features/3", {{"theta", "2"}}, "").status == 400);
}

TEST_CASE("api: query conserves counts and suggests a rewrite") {
    const Api& api = fixture_api();
    const auto r = api.handle("POST", "/api/query", {}, R"({"text": "plant", "top_k": 7})");
    REQUIRE(r.status == 200);
    const auto& b = r.body;
    CHECK(b["query"]["suggestion"] == "words related to plant and its associations with cultivation, agriculture");
    CHECK(b["top_hits"].size() == 7);
    for (const char* k : {"10", "100", "1000"}) {
        int sum = 0;
        for (const auto& l : b["layers"]) sum += l["counts"][k].get<int>();
        CHECK(sum == std::min(std::stoi(k), 384));
    }
    int hist = 0;
    for (int c : b["histogram"]["counts"]) hist += c;
    CHECK(hist == 384);
    CHECK(b["ranking"].size() == 3);
}

TEST_CASE("api: atlas zoom levels and the query pin") {
    const Api& api = fixture_api();
    std::set<int> levels;
    for (const char* zoom : {"far", "mid", "near"}) {
        const auto r = api.handle("GET", "/api/saes/res-l1-relu/atlas", {{"zoom", zoom}, {"query", "plant"}}, "");
        REQUIRE(r.status == 200);
        int total = 0;
        for (const auto& c : r.body["cells"]) total += c["count"].get<int>();
        CHECK(total == 128);
        levels.insert(r.body["cluster_level"].get<int>());
        CHECK(r.body["pin"].is_array());
        CHECK(r.body["highlight"].size() == 50);
    }
    CHECK(levels == std::set<int>{0, 1, 2});
}

TEST_CASE("api: feature details, brushing and anomalies") {
    const Api& api = fixture_api();
    const int plant = expectations()["packs"][kPlantPack]["plant_feature"];
    const std::string path = "/api/saes/" + kPlantPack + "/features/" + std::to_string(plant);
    const auto all = api.handle("GET", path, {}, "");
    REQUIRE(all.status == 200);
    const int n = all.body["n_segments"];
    int total = 0;
    for (const auto& s : all.body["token_stats"]) total += s["count"].get<int>();
    CHECK(total == n);
    CHECK(all.body["matrix"]["cells"].size() == static_cast<std::size_t>(n));
    bool factory = false;
    for (const auto& a : all.body["anomalies"]["anomalies"])
        factory = factory || (a["segment_id"] == 20000 && a["region"] == "high_act_low_sim");
    CHECK(factory);
    CHECK(all.body["clusters"].size() == 3);

    // brushing nothing shows everything; brushing one cell shows that segment
    const auto none = api.handle("GET", path, {{"selection", ""}}, "");
    CHECK(none.body["token_stats"] == all.body["token_stats"]);
    const auto one = api.handle("GET", path, {{"selection", "20000"}}, "");
    REQUIRE(one.body["token_stats"].size() == 1);
    CHECK(one.body["token_stats"][0]["count"] == 1);
    CHECK(api.handle("GET", path, {{"selection", "424242"}}, "").status == 404);
}

TEST_CASE("api: sessions, probe cache and steering") {
    const Api& api = fixture_api();
    const auto created = api.handle("POST", "/api/sessions", {}, "");
    CHECK(created.status == 201);
    const std::string sid = created.body["session_id"];
    CHECK(api.handle("POST", "/api/query", {}, Json({{"text", "plant"}, {"session", sid}}).dump()).status == 200);
    const auto sel = api.handle("POST", "/api/sessions/" + sid + "/select", {},
                                Json({{"sae_id", kPlantPack}, {"feature_id", 3}}).dump());
    CHECK(sel.body["feature_id"] == 3);
    CHECK(sel.body["query"] == "plant");
    const auto sel2 = api.handle("POST", "/api/sessions/" + sid + "/select", {}, Json({{"sae_id", "res-l2-relu"}}).dump());
    CHECK(sel2.body["feature_id"].is_null());

    const std::string probe_path = "/api/saes/" + kPlantPack + "/features/3/probe";
    const auto body = Json({{"text", "the plant grows"}, {"session", sid}}).dump();
    const auto p1 = api.handle("POST", probe_path, {}, body);
    const auto p2 = api.handle("POST", probe_path, {}, body);
    CHECK(p1.body == p2.body);
    CHECK(api.handle("GET", "/api/sessions/" + sid, {}, "").body["probe_cache_size"] == 1);
    CHECK(api.handle("GET", "/api/sessions/s999", {}, "").status == 404);

    const int plant = expectations()["packs"][kPlantPack]["plant_feature"];
    const auto steer = api.handle(
        "POST", "/api/saes/" + kPlantPack + "/features/" + std::to_string(plant) + "/steer", {},
        Json({{"prompt", "the gardener said"}, {"strengths", {0, 8}}, {"settings", {{"max_new_tokens", 6}}}}).dump());
    REQUIRE(steer.status == 200);
    CHECK(steer.body["branches"][0]["text"] == steer.body["baseline"]["text"]);
    CHECK(api.handle("POST", "/api/saes/" + kPlantPack + "/features/3/steer", {},
                     Json({{"prompt", "the"}, {"settings", {{"max_new_tokens", 500}}}}).dump())
              .status == 400);
}

TEST_CASE("api: busy generation workers give a retryable error") {
    ApiOptions opts;
    opts.worker_limit = 1;
    opts.worker_wait_ms = 1;
    const Api api(PackRegistry::load(fixtures_dir()), opts);
    const std::string path = "/api/saes/" + kPlantPack + "/features/3/steer";
    const auto body = Json({{"prompt", "the gardener said"}, {"settings", {{"max_new_tokens", 40}}}}).dump();
    std::vector<std::future<int>> jobs;
    for (int i = 0; i < 4; ++i)
        jobs.push_back(std::async(std::launch::async, [&] { return api.handle("POST", path, {}, body).status; }));
    std::multiset<int> statuses;
    for (auto& j : jobs) statuses.insert(j.get());
    CHECK(statuses.count(200) >= 1);
    CHECK(statuses.count(200) + statuses.count(503) == 4);
}

TEST_CASE("HTTP responses equal in-process responses") {
    const auto registry = PackRegistry::load(fixtures_dir());
    const Api api(registry);
    std::promise<int> ready;
    ServeOptions opts;
    opts.port = 0;
    std::thread server([&] { serve(api, opts, [&](int port) { ready.set_value(port); }); });
    const int port = ready.get_future().get();

    httplib::Client client("127.0.0.1", port);
    const std::string body = R"({"text": "plant", "top_k": 10})";
    const auto http = client.Post("/api/query", body, "application/json");
    REQUIRE(http);
    CHECK(http->status == 200);
    const auto local = api.handle("POST", "/api/query", {}, body);
    std::string where;
    CHECK_MESSAGE(json_equivalent(local.body, Json::parse(http->body), 0.0, &where), where);

    const auto missing = client.Get("/api/saes/none");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    CHECK(Json::parse(missing->body)["code"] == "not_found");
    const auto health = client.Get("/api/health");
    REQUIRE(health);
    CHECK(Json::parse(health->body)["packs"] == 3);

    stop_server();
    server.join();
}

TEST_CASE("CLI query output equals the API response") {
    int status = 0;
    const std::string cmd = std::string(FEATURESCOPE_CLI) + " query plant --packs " + fixtures_dir().string();
    const auto out = run_command(cmd, &status);
    REQUIRE(status == 0);
    const auto local = fixture_api().handle("POST", "/api/query", {}, R"({"text": "plant", "top_k": 10})");
    std::string where;
    CHECK_MESSAGE(json_equivalent(local.body, Json::parse(out), 0.0, &where), where);

    run_command(std::string(FEATURESCOPE_CLI) + " query 2>/dev/null", &status);
    CHECK(status == 1);
    run_command(std::string(FEATURESCOPE_CLI) + " query plant --packs /nonexistent 2>/dev/null", &status);
    CHECK(status == 2);
}

TEST_CASE("json_equivalent skips timing and honours the tolerance") {
    const Json a = {{"x", 1.0}, {"timing", {{"ms", 3}}}, {"v", {1, 2}}};
    const Json b = {{"x", 1.0 + 1e-9}, {"timing", {{"ms", 9}}}, {"v", {1, 2}}};
    CHECK(json_equivalent(a, b, 1e-6));
    CHECK_FALSE(json_equivalent(a, b, 0.0));
    std::string where;
    CHECK_FALSE(json_equivalent(a, Json({{"x", 1.0}, {"v", {1, 3}}}), 1e-6, &where));
    CHECK(where.find("v") != std::string::npos);
}
