#include "featurescope/activation_lab.hpp"
#include "featurescope/interpretation.hpp"

#include "../oracles.hpp"
#include "support.hpp"

#include <set>
#include <thread>

using namespace featurescope;
using test_support::error_code_of;

namespace {

SegmentRecord segment(int id, const std::string& text, std::vector<float> acts) {
    SegmentRecord s;
    s.feature_id = 1;
    s.segment_id = id;
    s.tokens = split_words(text);
    s.token_ids.assign(s.tokens.size(), 0);
    acts.resize(s.tokens.size(), 0.0f);
    s.activations = acts;
    s.text = text;
    s.refresh_max();
    return s;
}

std::vector<SegmentRecord> random_segments(Rng& rng, int n) {
    const std::vector<std::string> words = {"leaf", "root", "seed", "soil", "rain", "sun", "bloom", "stem"};
    std::vector<SegmentRecord> out;
    for (int i = 0; i < n; ++i) {
        std::string text;
        std::vector<float> acts;
        const int len = 3 + static_cast<int>(rng.below(5));
        for (int t = 0; t < len; ++t) {
            text += (t ? " " : "") + words[rng.below(words.size())];
            // quantized so that ties happen
            acts.push_back(static_cast<float>(rng.below(6)) * 0.5f);
        }
        out.push_back(segment(100 + i, text, acts));
    }
    return out;
}

}  // namespace

TEST_CASE("segment statistics") {
    auto s = segment(3, "a b c b", {0.5f, 2.0f, 0.1f, 2.0f});
    CHECK(s.max_index == 1);  // first maximum
    CHECK(s.max_activation == 2.0f);
    s.validate();
    s.max_activation = 1.0f;
    CHECK(error_code_of([&] { s.validate(); }) == ErrorCode::data_error);
    s = segment(3, "a b", {1, 2});
    s.activations.pop_back();
    CHECK(error_code_of([&] { s.validate(); }) == ErrorCode::data_error);
}

TEST_CASE("stratified sampling keeps the maximum and is seeded") {
    Rng rng(6);
    const auto segs = random_segments(rng, 200);
    const auto a = stratified_sample(segs, 8, 5, 1);
    CHECK(a.size() == 40);
    const auto top = *std::max_element(segs.begin(), segs.end(), [](const auto& x, const auto& y) {
        return x.max_activation != y.max_activation ? x.max_activation < y.max_activation : x.segment_id > y.segment_id;
    });
    CHECK(a.front().segment_id == top.segment_id);
    std::set<int> ids;
    for (const auto& s : a) ids.insert(s.segment_id);
    CHECK(ids.size() == 40);
    const auto b = stratified_sample(segs, 8, 5, 1);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].segment_id == b[i].segment_id);
    for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i - 1].max_activation >= a[i].max_activation);
    CHECK(stratified_sample(std::vector<SegmentRecord>(segs.begin(), segs.begin() + 30), 8, 5).size() == 30);
    CHECK(error_code_of([&] { stratified_sample(segs, 0, 5); }) == ErrorCode::invalid_argument);
}

TEST_CASE("matrix ranks match sort oracles and the planted segment is flagged") {
    HashingEmbedder e;
    std::vector<SegmentRecord> segs;
    const std::vector<std::string> garden = {"plants grow in the garden", "the garden plants bloom", "water the plants",
                                             "plants and flowers in a garden", "young plants in garden soil",
                                             "garden plants need sun", "plants in the garden bed", "the plants wilt"};
    for (std::size_t i = 0; i < garden.size(); ++i)
        segs.push_back(segment(static_cast<int>(i), garden[i], {1.0f + 0.1f * static_cast<float>(i)}));
    segs.push_back(segment(99, "steel factory power station", {9.0f}));

    const VectorF expl = e.embed("plants in a garden");
    SegmentEmbeddingCache cache;
    const auto m = activation_similarity_matrix(expl, segs, e, 0.3, &cache);
    CHECK(cache.size() == segs.size());
    REQUIRE(m.cells.size() == segs.size());

    std::vector<std::pair<int, double>> by_sim, by_act;
    for (const auto& s : segs) {
        by_sim.push_back({s.segment_id, cosine_similarity(e.embed(s.text), expl)});
        by_act.push_back({s.segment_id, s.max_activation});
    }
    const auto sim_rank = oracle::descending_ranks(by_sim);
    const auto act_rank = oracle::descending_ranks(by_act);
    for (const auto& c : m.cells) {
        CHECK(c.similarity_rank == sim_rank.at(c.segment_id));
        CHECK(c.activation_rank == act_rank.at(c.segment_id));
    }

    const auto report = detect_anomalies(m.cells, 0.3);
    REQUIRE_FALSE(report.anomalies.empty());
    CHECK(report.anomalies.front().segment_id == 99);
    CHECK(report.anomalies.front().region == Region::high_act_low_sim);
    for (const auto& a : report.anomalies) CHECK(a.discrepancy > 0.3);
    CHECK(detect_anomalies(m.cells, 1.0).anomalies.empty());
}

TEST_CASE("unembeddable segments are skipped with a warning") {
    HashingEmbedder e;
    std::vector<SegmentRecord> segs = {segment(1, "garden", {1}), segment(2, "plants", {2})};
    segs[1].text = "";
    const auto m = activation_similarity_matrix(e.embed("garden"), segs, e, 0.3);
    CHECK(m.cells.size() == 1);
    CHECK(m.warnings.size() == 1);
}

TEST_CASE("token statistics conserve the considered segments") {
    Rng rng(10);
    const auto segs = random_segments(rng, 120);
    const auto all = max_activation_token_stats(segs);
    int total = 0;
    for (const auto& s : all) total += s.count;
    CHECK(total == 120);
    for (std::size_t i = 1; i < all.size(); ++i) CHECK(all[i - 1].count >= all[i].count);

    std::set<int> pick = {100, 105, 150, 219};
    const auto some = max_activation_token_stats(segs, pick);
    total = 0;
    for (const auto& s : some) total += s.count;
    CHECK(total == 4);
    CHECK(max_activation_token_stats(segs, std::set<int>{}).empty());
}

TEST_CASE("segment cache is safe under concurrent readers") {
    HashingEmbedder e;
    SegmentEmbeddingCache cache;
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t)
        threads.emplace_back([&] {
            for (int i = 0; i < 50; ++i) cache.get_or_compute(1, i, "text " + std::to_string(i), e);
        });
    for (auto& t : threads) t.join();
    CHECK(cache.size() == 50);
}

namespace {

struct Lab {
    Model model;
    SaeWeights sae;
};

Lab small_lab() {
    Lab lab;
    auto& m = lab.model;
    m.config.n_layers = 2;
    m.config.d_model = 8;
    m.config.n_heads = 2;
    m.config.d_mlp = 16;
    m.config.max_context = 32;
    std::vector<std::string> vocab = {"<unk>", "the", "plant", "grows", "in", "garden", "hero", "saves", "city"};
    m.config.vocab_size = static_cast<int>(vocab.size());
    m.tokenizer = Tokenizer(vocab);
    Rng rng(17);
    m.weights = random_weights(m.config, rng);
    auto& s = lab.sae;
    s.layer_index = 1;
    s.w_enc = test_support::random_matrix(rng, 20, 8, 0.5);
    s.b_enc = VectorF::Zero(20);
    s.w_dec = test_support::random_matrix(rng, 20, 8, 0.5);
    s.b_dec = VectorF::Zero(8);
    return lab;
}

}  // namespace

TEST_CASE("probe activations equal the encoder on the traced residuals") {
    const Lab lab = small_lab();
    const auto p = probe_input(lab.model, lab.sae, 3, "the plant grows in the garden");
    const auto tok = lab.model.tokenizer.encode("the plant grows in the garden");
    const MatrixF z = encode_rows(lab.sae, forward_with_trace(lab.model, tok.ids).residuals[1]);
    REQUIRE(p.activations.size() == 6);
    for (int t = 0; t < 6; ++t) CHECK(p.activations[static_cast<std::size_t>(t)] == z(t, 3));
    CHECK(p.peak_activation == *std::max_element(p.activations.begin(), p.activations.end()));
    CHECK(p.tokens[1] == "plant");
    CHECK(error_code_of([&] { probe_input(lab.model, lab.sae, 20, "the plant"); }) == ErrorCode::not_found);
}

TEST_CASE("co-activation ranks the mean anchor activation") {
    const Lab lab = small_lab();
    const std::string text = "the hero saves the city";
    const auto co = co_activated_features(lab.model, lab.sae, 2, text, {1, 2}, 5);
    const auto tok = lab.model.tokenizer.encode(text);
    const MatrixF z = encode_rows(lab.sae, forward_with_trace(lab.model, tok.ids).residuals[1]);
    std::vector<std::pair<int, double>> means;
    for (int f = 0; f < 20; ++f)
        if (f != 2) means.push_back({f, 0.5 * (double(z(1, f)) + double(z(2, f)))});
    const auto rank = oracle::descending_ranks(means);
    REQUIRE(co.features.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(rank.at(co.features[i].feature_id) == static_cast<int>(i) + 1);
        CHECK(co.features[i].feature_id != 2);
    }
    CHECK(co.anchor_tokens == std::vector<std::string>{"hero", "saves"});
    CHECK(error_code_of([&] { co_activated_features(lab.model, lab.sae, 2, text, {9}, 5); }) == ErrorCode::invalid_argument);
}

TEST_CASE("steering branches: zero strength equals the unsteered continuation") {
    const Lab lab = small_lab();
    GenerationSettings g;
    g.max_new_tokens = 5;
    const auto branches = steer_generate(lab.model, lab.sae, 4, "the plant", {-3.0f, 0.0f, 3.0f}, g);
    REQUIRE(branches.size() == 3);
    const auto plain = generate(lab.model, lab.model.tokenizer.encode("the plant").ids, g);
    CHECK(branches[1].tokens == plain);
    CHECK(branches[1].text == lab.model.tokenizer.decode(plain));
    CHECK(branches[0].strength == -3.0f);
}
