// Acceptance suite: one PASS/FAIL line per criterion, checked against
// independent oracles and the seed-42 fixture packs.
//
//   acceptance <fixtures-dir>

#include "featurescope/activation_lab.hpp"
#include "featurescope/api.hpp"
#include "featurescope/atlas.hpp"
#include "featurescope/fixtures.hpp"
#include "featurescope/layout.hpp"
#include "featurescope/pack.hpp"
#include "featurescope/server.hpp"
#include "featurescope/topics.hpp"
#include "featurescope/ward.hpp"

#include "oracles.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <future>
#include <iostream>
#include <sstream>
#include <thread>

using namespace featurescope;
namespace fs = std::filesystem;

namespace {

fs::path g_fixtures;

/// Thrown by `expect` with the first failing detail.
struct Failure {
    std::string detail;
};

void expect(bool ok, const std::string& detail) {
    if (!ok) throw Failure{detail};
}

Json expectations() {
    static const Json j = parse_json(read_text_file(g_fixtures / "expectations.json"), "expectations");
    return j;
}

std::shared_ptr<const PackRegistry> registry() {
    static const auto r = PackRegistry::load(g_fixtures);
    return r;
}

MatrixF random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    MatrixF m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(scale * rng.normal());
    return m;
}

std::vector<double> to_std(const VectorF& v) { return {v.data(), v.data() + v.size()}; }

bool same_bits(const MatrixF& a, const MatrixF& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0;
}

bool same_trace(const ResidualTrace& a, const ResidualTrace& b) {
    if (a.residuals.size() != b.residuals.size() || !same_bits(a.logits, b.logits)) return false;
    for (std::size_t i = 0; i < a.residuals.size(); ++i)
        if (!same_bits(a.residuals[i], b.residuals[i])) return false;
    return true;
}

// ---- 1: encode / decode ---------------------------------------------------

void check_sae() {
    Rng rng(101);
    for (int trial = 0; trial < 200; ++trial) {
        const int d = 8 + static_cast<int>(rng.below(25));
        const int f = d + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(3 * d)));
        SaeWeights sae;
        sae.w_enc = random_matrix(rng, f, d, 0.5);
        sae.b_enc = random_matrix(rng, f, 1, 0.2);
        sae.w_dec = random_matrix(rng, f, d, 0.5);
        sae.b_dec = random_matrix(rng, d, 1, 0.2);
        const bool jump = trial % 2 == 1;
        std::vector<double> threshold(static_cast<std::size_t>(f), 0.0);
        if (jump) {
            sae.activation = SaeActivation::jump_relu;
            sae.threshold = VectorF(f);
            for (int i = 0; i < f; ++i) {
                sae.threshold(i) = static_cast<float>(rng.uniform(0.0, 0.5));
                threshold[static_cast<std::size_t>(i)] = sae.threshold(i);
            }
        }
        sae.validate();
        const VectorF x = random_matrix(rng, d, 1);
        const VectorF z = encode(sae, x);
        const auto z_ref = oracle::encode(sae.w_enc, to_std(sae.b_enc), jump, threshold, to_std(x));
        for (int i = 0; i < f; ++i)
            expect(std::abs(z(i) - z_ref[static_cast<std::size_t>(i)]) <= 1e-6 * std::max(1.0, std::abs(z_ref[static_cast<std::size_t>(i)])),
                   "encode mismatch in trial " + std::to_string(trial));
        const VectorF x_hat = decode(sae, z);
        const auto x_ref = oracle::decode(sae.w_dec, to_std(sae.b_dec), to_std(z));
        for (int i = 0; i < d; ++i)
            expect(std::abs(x_hat(i) - x_ref[static_cast<std::size_t>(i)]) <= 1e-6 * std::max(1.0, std::abs(x_ref[static_cast<std::size_t>(i)])),
                   "decode mismatch in trial " + std::to_string(trial));
    }

    std::vector<std::string> lines;
    std::istringstream corpus(read_text_file(g_fixtures / expectations()["corpus"].get<std::string>()));
    for (std::string line; std::getline(corpus, line);)
        if (!line.empty()) lines.push_back(line);
    for (const auto& p : registry()->packs()) {
        const double bound = std::stod(p->manifest.extra.at("reconstruction_bound"));
        const MatrixF x = corpus_residuals(registry()->model_for(*p), lines, p->sae.layer_index);
        const double err = mean_relative_reconstruction_error(p->sae, x);
        expect(err <= bound, p->manifest.sae_id + ": reconstruction error " + std::to_string(err) + " > " +
                                 std::to_string(bound));
    }
}

// ---- 2: SAE ranking -------------------------------------------------------

/// Unit row with cosine `s` to the first axis.
void planted_row(Rng& rng, MatrixF& m, Eigen::Index r, double s) {
    Eigen::VectorXd u(m.cols() - 1);
    for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = rng.normal();
    u.normalize();
    m(r, 0) = static_cast<float>(s);
    for (Eigen::Index i = 0; i < u.size(); ++i) m(r, i + 1) = static_cast<float>(std::sqrt(1.0 - s * s) * u(i));
}

struct Band {
    int rows;
    double lo, hi;
};

MatrixF planted_matrix(Rng& rng, int dim, const std::vector<Band>& bands) {
    int n = 0;
    for (const auto& b : bands) n += b.rows;
    MatrixF m(n, dim);
    Eigen::Index r = 0;
    for (const auto& b : bands)
        for (int i = 0; i < b.rows; ++i) planted_row(rng, m, r++, rng.uniform(b.lo, b.hi));
    return m;
}

std::vector<std::vector<oracle::StoreRows>> planted_stores() {
    Rng rng(202);
    const int dim = 16;
    std::vector<std::vector<oracle::StoreRows>> stores;
    // A leads the top 10, B the top 1000, C is spread over the whole range
    stores.push_back({{"A", 0, planted_matrix(rng, dim, {{12, 0.9, 0.99}, {300, -0.9, -0.5}})},
                      {"B", 1, planted_matrix(rng, dim, {{1100, 0.3, 0.6}})},
                      {"C", 2, planted_matrix(rng, dim, {{600, -1.0, 1.0}})}});
    // fewer features than the largest K
    stores.push_back({{"A", 3, planted_matrix(rng, dim, {{5, 0.95, 0.99}, {40, -0.5, 0.0}})},
                      {"B", 1, planted_matrix(rng, dim, {{300, 0.4, 0.7}})},
                      {"C", 2, planted_matrix(rng, dim, {{160, -1.0, 1.0}})}});
    // identical SAEs on one layer tie on every count
    const MatrixF twin = planted_matrix(rng, dim, {{400, 0.2, 0.8}});
    stores.push_back({{"twin-b", 2, twin},
                      {"twin-a", 2, twin},
                      {"lone", 1, planted_matrix(rng, dim, {{400, 0.1, 0.9}})}});
    return stores;
}

void check_ranking() {
    VectorF q = VectorF::Zero(16);
    q(0) = 1.0f;
    int index = 0;
    for (const auto& rows : planted_stores()) {
        const std::string tag = "store " + std::to_string(index++);
        EmbeddingStore store;
        std::size_t n = 0;
        for (const auto& r : rows) {
            store.add(EmbeddingMatrix(r.sae_id, r.layer_index, r.rows));
            n += static_cast<std::size_t>(r.rows.rows());
        }
        const auto got = rank_saes(store, q);
        const auto want = oracle::brute_force_ranking(rows, to_std(q), kDefaultKSet);
        expect(got.size() == want.size(), tag + ": SAE count");
        for (std::size_t i = 0; i < want.size(); ++i) {
            expect(got[i].sae_id == want[i].sae_id, tag + ": order differs at " + std::to_string(i));
            expect(got[i].counts == want[i].counts, tag + ": counts of " + want[i].sae_id);
            expect(got[i].ranks == want[i].ranks, tag + ": ranks of " + want[i].sae_id);
            expect(got[i].avg_rank == want[i].avg_rank, tag + ": average rank of " + want[i].sae_id);
            expect(got[i].order == static_cast<int>(i), tag + ": order field");
        }
        const auto counts = layer_relevance_distribution(store, q);
        for (std::size_t k = 0; k < kDefaultKSet.size(); ++k) {
            int sum = 0;
            for (const auto& c : counts) sum += c.counts[k];
            expect(sum == static_cast<int>(std::min(kDefaultKSet[k], n)), tag + ": counts do not partition min(K, N)");
        }
    }
}

// ---- 3: Ward --------------------------------------------------------------

void check_ward() {
    Rng rng(303);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(19));
        const int dim = 1 + static_cast<int>(rng.below(5));
        MatrixD p(n, dim);
        for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.normal();
        const auto got = ward_linkage(p);
        const auto want = oracle::naive_ward(p);
        expect(got.merges.size() == want.size(), "merge count");
        for (std::size_t i = 0; i < want.size(); ++i) {
            const auto& g = got.merges[i];
            const auto& w = want[i];
            const std::string where = "trial " + std::to_string(trial) + " step " + std::to_string(i);
            expect(g.first == w.first && g.second == w.second && g.size == w.size, where + ": merge differs");
            expect(std::abs(g.height - w.height) <= 1e-9 * std::max(1.0, w.height), where + ": height differs");
        }
    }
    for (const auto& p : registry()->packs()) {
        try {
            p->tree.check_nesting();
        } catch (const Error& e) {
            throw Failure{p->manifest.sae_id + ": " + e.what()};
        }
        expect(p->tree.level_sizes == kDefaultLevelSizes, p->manifest.sae_id + ": level sizes");
        for (int level = 0; level < p->tree.n_levels(); ++level)
            expect(static_cast<int>(p->tree.level_nodes(level).size()) == kDefaultLevelSizes[static_cast<std::size_t>(level)],
                   p->manifest.sae_id + ": node count");
    }
}

// ---- 4: topics ------------------------------------------------------------

void check_topics() {
    const std::vector<std::vector<std::string>> hand = {
        {"apple apple", "banana"}, {"banana cherry"}, {"cherry date", "apple banana"}};
    const auto s = ctfidf_scores(hand, StopWords{});
    // apple: clusters 0 and 2; banana: all; cherry: 1 and 2; date: 2
    const double l15 = std::log(1.5), l3 = std::log(3.0);
    const std::vector<std::map<std::string, double>> want = {
        {{"apple", 2.0 / 3.0 * l15}, {"banana", 0.0}},
        {{"banana", 0.0}, {"cherry", 0.5 * l15}},
        {{"apple", 0.25 * l15}, {"banana", 0.0}, {"cherry", 0.25 * l15}, {"date", 0.25 * l3}}};
    expect(s.size() == 3, "cluster count");
    for (std::size_t c = 0; c < 3; ++c) {
        expect(s[c].size() == want[c].size(), "term count in cluster " + std::to_string(c));
        for (const auto& [term, value] : want[c]) {
            expect(s[c].count(term) == 1, "missing term " + term);
            expect(std::abs(s[c].at(term) - value) <= 1e-9, "score of " + term + " in cluster " + std::to_string(c));
        }
        expect(s[c].at("banana") == 0.0, "an all-cluster term scored non-zero");
    }

    Rng rng(404);
    const std::vector<std::string> pool = {"leaf", "root", "stem", "seed", "soil", "bloom", "petal", "thorn",
                                           "river", "stone", "cloud", "storm", "metal", "steel", "wheel", "spark",
                                           "the", "and", "of", "2024"};
    for (int trial = 0; trial < 40; ++trial) {
        const int n_clusters = 2 + static_cast<int>(rng.below(6));
        std::vector<std::vector<std::string>> clusters(static_cast<std::size_t>(n_clusters));
        for (auto& c : clusters) {
            const int docs = 1 + static_cast<int>(rng.below(4));
            for (int d = 0; d < docs; ++d) {
                std::string text = pool[rng.below(16)];
                const int len = static_cast<int>(rng.below(7));
                for (int w = 0; w < len; ++w) text += " " + pool[rng.below(pool.size())];
                c.push_back(text);
            }
        }
        const auto& stop = bundled_stop_words();
        const auto got = extract_topics(clusters, stop, 5);
        const auto full = oracle::ctfidf(clusters, stop);
        for (std::size_t c = 0; c < clusters.size(); ++c) {
            const auto top = oracle::top_terms(full[c], 5);
            const std::string where = "trial " + std::to_string(trial) + " cluster " + std::to_string(c);
            expect(got[c].size() == top.size(), where + ": topic count");
            for (std::size_t i = 0; i < top.size(); ++i) {
                expect(got[c][i].term == top[i].first, where + ": term " + got[c][i].term + " vs " + top[i].first);
                expect(std::abs(got[c][i].score - top[i].second) <= 1e-12, where + ": score");
            }
        }
    }
}

// ---- 5: steering ----------------------------------------------------------

void check_steering() {
    const Json exp = expectations();
    const Json& steering = exp["steering"];
    const auto strengths = steering["strengths"].get<std::vector<float>>();
    const auto prompts = steering["prompts"].get<std::vector<std::string>>();
    expect(prompts.size() == 20, "expected 20 prompts");
    GenerationSettings greedy;
    greedy.max_new_tokens = steering["max_new_tokens"];
    for (const auto& p : registry()->packs()) {
        const std::string& id = p->manifest.sae_id;
        const Model& model = registry()->model_for(*p);
        const int feature = exp["packs"][id]["plant_feature"];
        const VectorF v = steering_vector(p->sae, feature);
        const TokenId target = model.tokenizer.id_of(steering["target_token"].get<std::string>());
        int strict = 0;
        for (const auto& prompt : prompts) {
            const auto ids = model.tokenizer.encode(prompt).ids;
            const auto plain = forward_with_trace(model, ids);
            const std::vector<SteeringHook> zero = {{p->sae.layer_index, v, 0.0f}};
            expect(same_trace(plain, forward_with_trace(model, ids, zero)), id + ": zero strength changed the trace");
            const std::vector<SteeringHook> pair = {{p->sae.layer_index, v, 8.0f}, {p->sae.layer_index, v, -8.0f}};
            expect(same_trace(plain, forward_with_trace(model, ids, pair)), id + ": +s and -s do not cancel");

            const auto branches = steer_generate(model, p->sae, feature, prompt, strengths, greedy);
            std::vector<long> counts;
            for (const auto& b : branches) counts.push_back(std::count(b.tokens.begin(), b.tokens.end(), target));
            expect(std::is_sorted(counts.begin(), counts.end()), id + ": sweep decreases on '" + prompt + "'");
            if (counts.front() < counts.back()) ++strict;
        }
        expect(strict >= 18, id + ": only " + std::to_string(strict) + "/20 strictly ordered");
    }
}

// ---- 6: colors ------------------------------------------------------------

void check_level_colors(const ClusterTree& tree, const std::string& tag) {
    for (int level = 0; level < tree.n_levels(); ++level) {
        const auto ids = tree.level_nodes(level);
        bool apart = true;
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (std::size_t j = i + 1; j < ids.size(); ++j)
                apart = apart && hsl_distance(tree.node(ids[i]).color, tree.node(ids[j]).color) > 0.15;
        expect(apart || tree.color_fallback[static_cast<std::size_t>(level)],
               tag + ": level " + std::to_string(level) + " has close colors without the fallback flag");
    }
}

void check_colors() {
    for (const auto& p : registry()->packs()) {
        check_level_colors(p->tree, p->manifest.sae_id);
        ClusterTree flat = p->tree;
        ColorConfig cfg;
        cfg.delta_h = 0.0;
        cfg.repair_rounds = 50;
        assign_colors(flat, cfg);
        check_level_colors(flat, p->manifest.sae_id + " (flat hue)");
        for (const auto& node : flat.nodes)
            if (node.parent >= 0)
                expect(node.color.h == flat.node(node.parent).color.h,
                       p->manifest.sae_id + ": child hue differs from its parent with zero offset");
    }
    Rng rng(606);
    for (int i = 0; i < 1000; ++i) {
        const double h = rng.uniform();
        expect(child_hue(h, 0.0) == h, "child_hue(h, 0) != h");
    }
}

// ---- 7: layout ------------------------------------------------------------

void check_layout() {
    Rng rng(707);
    const int n = 300, dim = 16;
    MatrixD x(n, dim);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
        labels[static_cast<std::size_t>(i)] = i < n / 2 ? 0 : 1;
        for (int d = 0; d < dim; ++d)
            x(i, d) = (d == labels[static_cast<std::size_t>(i)] ? 4.0 : 0.0) + 1.0 + 0.6 * rng.normal();
    }
    // ten exact duplicates inside the blobs
    std::vector<std::pair<int, int>> dups;
    for (int k = 0; k < 10; ++k) {
        const int src = static_cast<int>(rng.below(n / 2)) + (k % 2) * (n / 2);
        int dst = static_cast<int>(rng.below(n / 2)) + (k % 2) * (n / 2);
        if (dst == src) dst = (k % 2) * (n / 2) + (dst + 1) % (n / 2);
        x.row(dst) = x.row(src);
        dups.emplace_back(src, dst);
    }
    LayoutConfig cfg;
    const auto a = compute_layout(x, cfg);
    const auto b = compute_layout(x, cfg);
    expect(a.coordinates.rows() == n && a.coordinates.cols() == 2, "layout shape");
    expect(std::memcmp(a.coordinates.data(), b.coordinates.data(), sizeof(double) * 2 * n) == 0,
           "same seed gave different coordinates");
    const double sep = oracle::linear_separability(a.coordinates, labels);
    expect(sep >= 0.95, "separability " + std::to_string(sep));
    const double p1 = oracle::pairwise_distance_quantile(a.coordinates, 0.01);
    for (const auto& [s, d] : dups) {
        const double dist = (a.coordinates.row(s) - a.coordinates.row(d)).norm();
        expect(dist <= p1, "duplicates " + std::to_string(s) + "/" + std::to_string(d) + " are " +
                               std::to_string(dist) + " apart, 1st percentile " + std::to_string(p1));
    }
}

// ---- 8: retrieval ---------------------------------------------------------

void check_retrieval() {
    Rng rng(808);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<oracle::StoreRows> rows;
        const int n_sae = 1 + static_cast<int>(rng.below(4));
        const int dim = 4 + static_cast<int>(rng.below(29));
        for (int s = 0; s < n_sae; ++s)
            rows.push_back({"sae-" + std::to_string(s), s, random_matrix(rng, 20 + static_cast<int>(rng.below(400)), dim)});
        // a duplicated row in two SAEs forces a tie
        rows.back().rows.row(0) = rows.front().rows.row(0);
        EmbeddingStore store;
        for (const auto& r : rows) store.add(EmbeddingMatrix(r.sae_id, r.layer_index, r.rows));
        const VectorF q = trial % 5 == 0 ? VectorF(rows.front().rows.row(0).transpose()) : VectorF(random_matrix(rng, dim, 1));
        const auto want = oracle::linear_scan(rows, to_std(q));
        const std::size_t k = 1 + rng.below(want.size() + 20);
        const auto got = store.top_k_features(q, k);
        const std::string where = "trial " + std::to_string(trial);
        expect(got.size() == std::min(k, want.size()), where + ": result size");
        for (std::size_t i = 0; i < got.size(); ++i) {
            expect(got[i].sae_id == want[i].sae_id && got[i].feature_id == want[i].feature_id,
                   where + ": hit " + std::to_string(i) + " differs");
            expect(std::abs(got[i].score - want[i].score) <= 1e-9, where + ": score differs");
        }
    }
    EmbeddingStore big;
    big.add(EmbeddingMatrix("a", 0, random_matrix(rng, 1700, 24)));
    big.add(EmbeddingMatrix("b", 1, random_matrix(rng, 1300, 24)));
    const auto h = big.similarity_histogram(random_matrix(rng, 24, 1));
    long total = 0;
    for (int c : h.counts) total += c;
    expect(h.n_scored == 2000 && total == 2000, "histogram holds " + std::to_string(total) + " of the top 2000");
}

// ---- 9: interpretation ----------------------------------------------------

double cosine(const VectorF& a, const VectorF& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        dot += double(a(i)) * double(b(i));
        na += double(a(i)) * double(a(i));
        nb += double(b(i)) * double(b(i));
    }
    return dot / std::sqrt(na * nb);
}

void check_interpretation() {
    const Json exp = expectations();
    const auto embedder = make_embedder("hashing");
    for (const auto& p : registry()->packs()) {
        const std::string& id = p->manifest.sae_id;
        const int feature = exp["packs"][id]["plant_feature"];
        const int factory = exp["packs"][id]["factory_segment_id"];
        const auto segs = p->segments_for(feature);
        const VectorF expl = embedder->embed(p->explanations[static_cast<std::size_t>(feature)]);
        const auto m = activation_similarity_matrix(expl, segs, *embedder, 0.3);
        expect(m.cells.size() == segs.size(), id + ": matrix drops segments");

        std::vector<std::pair<int, double>> by_sim, by_act;
        for (const auto& s : segs) {
            by_sim.push_back({s.segment_id, cosine(embedder->embed(s.text), expl)});
            by_act.push_back({s.segment_id, s.max_activation});
        }
        const auto sim_rank = oracle::descending_ranks(by_sim);
        const auto act_rank = oracle::descending_ranks(by_act);
        for (const auto& c : m.cells) {
            expect(c.similarity_rank == sim_rank.at(c.segment_id), id + ": similarity rank of " + std::to_string(c.segment_id));
            expect(c.activation_rank == act_rank.at(c.segment_id), id + ": activation rank of " + std::to_string(c.segment_id));
        }
        const auto report = detect_anomalies(m.cells, 0.3);
        expect(std::any_of(report.anomalies.begin(), report.anomalies.end(),
                           [&](const Anomaly& a) { return a.segment_id == factory && a.region == Region::high_act_low_sim; }),
               id + ": planted segment not flagged");

        int total = 0;
        for (const auto& s : max_activation_token_stats(segs)) total += s.count;
        expect(total == static_cast<int>(segs.size()), id + ": token stats do not sum to the segment count");
        std::set<int> pick;
        for (std::size_t i = 0; i < segs.size(); i += 3) pick.insert(segs[i].segment_id);
        total = 0;
        for (const auto& s : max_activation_token_stats(segs, pick)) total += s.count;
        expect(total == static_cast<int>(pick.size()), id + ": brushed token stats do not sum to the selection");
    }
}

// ---- 10: golden flow ------------------------------------------------------

int run(const std::string& cmd, std::string* output) {
    FILE* pipe = ::popen((cmd + " 2>&1").c_str(), "r");
    if (pipe == nullptr) return -1;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) output->append(buf, n);
    const int rc = ::pclose(pipe);
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

void check_golden() {
    const std::string cli = FEATURESCOPE_CLI;
    const std::string golden = FEATURESCOPE_GOLDEN;
    expect(fs::exists(golden), "golden file missing: " + golden);
    std::string out;
    expect(run(cli + " flow --packs " + g_fixtures.string() + " --compare " + golden, &out) == 0, "CLI: " + out);

    const Api api(registry());
    std::promise<int> ready;
    ServeOptions opts;
    opts.port = 0;
    std::thread server([&] { serve(api, opts, [&](int port) { ready.set_value(port); }); });
    const int port = ready.get_future().get();
    out.clear();
    const int rc = run(cli + " flow --url http://127.0.0.1:" + std::to_string(port) + " --compare " + golden, &out);
    stop_server();
    server.join();
    expect(rc == 0, "HTTP: " + out);
}

struct Criterion {
    std::string name;
    double limit_s;
    std::function<void()> check;
};

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: acceptance <fixtures-dir>\n";
        return 2;
    }
    g_fixtures = argv[1];

    const std::vector<Criterion> criteria = {
        {"sae-encode-decode", 5, check_sae},
        {"sae-ranking", 5, check_ranking},
        {"ward-clustering", 30, check_ward},
        {"ctfidf-topics", 5, check_topics},
        {"steering", 60, check_steering},
        {"cluster-colors", 5, check_colors},
        {"layout", 60, check_layout},
        {"retrieval", 10, check_retrieval},
        {"interpretation", 5, check_interpretation},
        {"golden-flow", 120, check_golden},
    };

    // packs are shared by several criteria; load them outside the timings
    try {
        registry();
        expectations();
    } catch (const std::exception& e) {
        std::cerr << "cannot load fixtures: " << e.what() << "\n";
        return 2;
    }

    int failed = 0;
    for (const auto& c : criteria) {
        std::string detail;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            c.check();
        } catch (const Failure& f) {
            detail = f.detail;
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (detail.empty() && s > c.limit_s) detail = "took longer than the limit";
        const bool ok = detail.empty();
        failed += ok ? 0 : 1;
        char timing[64];
        std::snprintf(timing, sizeof timing, "%.2fs / %.0fs", s, c.limit_s);
        std::cout << (ok ? "PASS " : "FAIL ") << c.name << " (" << timing << ")";
        if (!ok) std::cout << ": " << detail;
        std::cout << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failed == 0 ? 0 : 1;
}
