#include "featurescope/model.hpp"

#include "support.hpp"

#include <cstring>

using namespace featurescope;
using test_support::error_code_of;

namespace {

Model small_model(std::uint64_t seed = 3) {
    Model m;
    m.config.n_layers = 2;
    m.config.d_model = 16;
    m.config.n_heads = 2;
    m.config.d_mlp = 32;
    m.config.max_context = 24;
    std::vector<std::string> vocab = {"<unk>"};
    for (int i = 1; i < 40; ++i) vocab.push_back("w" + std::to_string(i));
    m.config.vocab_size = static_cast<int>(vocab.size());
    m.tokenizer = Tokenizer(vocab);
    Rng rng(seed);
    m.weights = random_weights(m.config, rng);
    return m;
}

bool bitwise_equal(const MatrixF& a, const MatrixF& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST_CASE("tokenizer splits, lowercases and maps unknown words") {
    Tokenizer tok({"<unk>", "the", "plant", "grows"});
    const auto t = tok.encode("The PLANT, grows quickly!");
    CHECK(t.pieces == std::vector<std::string>{"the", "plant", "grows", "quickly"});
    CHECK(t.ids == std::vector<TokenId>{1, 2, 3, 0});
    CHECK(tok.decode({1, 2}) == "the plant");
    CHECK(tok.id_of("grows") == 3);
    CHECK(tok.id_of("missing") == -1);
    CHECK(error_code_of([&] { tok.encode(" ,.; "); }) == ErrorCode::invalid_argument);
    CHECK(error_code_of([] { Tokenizer({"a", "b"}); }) == ErrorCode::data_error);
    CHECK(error_code_of([] { Tokenizer({"<unk>", "a", "a"}); }) == ErrorCode::data_error);
}

TEST_CASE("split_words keeps inner hyphens and apostrophes") {
    CHECK(split_words("it's a well-known 'quote'-") == std::vector<std::string>{"it's", "a", "well-known", "quote"});
}

TEST_CASE("layer norm matches the textbook formula") {
    MatrixF x(2, 4);
    x << 1, 2, 3, 4, -1, 0, 0, 1;
    VectorF g = VectorF::Constant(4, 2.0f), b = VectorF::Constant(4, 0.5f);
    const MatrixF y = layer_norm(x, g, b, 1e-5f);
    for (int r = 0; r < 2; ++r) {
        double mean = 0, var = 0;
        for (int c = 0; c < 4; ++c) mean += x(r, c);
        mean /= 4;
        for (int c = 0; c < 4; ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
        var /= 4;
        for (int c = 0; c < 4; ++c) CHECK(y(r, c) == doctest::Approx(2.0 * (x(r, c) - mean) / std::sqrt(var + 1e-5) + 0.5).epsilon(1e-5));
    }
}

TEST_CASE("forward pass is causal") {
    const Model m = small_model();
    const std::vector<TokenId> a = {1, 2, 3, 4, 5};
    const std::vector<TokenId> b = {1, 2, 3, 9, 11};
    const auto ta = forward_with_trace(m, a);
    const auto tb = forward_with_trace(m, b);
    REQUIRE(ta.residuals.size() == 2);
    for (std::size_t l = 0; l < 2; ++l)
        CHECK(bitwise_equal(ta.residuals[l].topRows(3), tb.residuals[l].topRows(3)));
    CHECK(bitwise_equal(ta.logits.topRows(3), tb.logits.topRows(3)));
    CHECK_FALSE(bitwise_equal(ta.logits.bottomRows(2), tb.logits.bottomRows(2)));
}

TEST_CASE("steering hooks: zero strength and cancelling pairs leave the run bitwise unchanged") {
    const Model m = small_model();
    const std::vector<TokenId> tokens = {4, 8, 15, 16, 23};
    Rng rng(11);
    const VectorF v = test_support::random_matrix(rng, 16, 1);
    const auto base = forward_with_trace(m, tokens);

    const SteeringHook zero{1, v, 0.0f};
    CHECK(bitwise_equal(forward_with_trace(m, tokens, {&zero, 1}).logits, base.logits));

    for (float s : {0.5f, 3.0f, 17.25f}) {
        const std::vector<SteeringHook> pair = {{0, v, s}, {0, v, -s}};
        const auto t = forward_with_trace(m, tokens, pair);
        CHECK(bitwise_equal(t.logits, base.logits));
        CHECK(bitwise_equal(t.residuals[1], base.residuals[1]));
    }

    const SteeringHook push{0, v, 4.0f};
    const auto pushed = forward_with_trace(m, tokens, {&push, 1});
    // the hook adds strength * v to the post-block residual of its layer
    const MatrixF diff = pushed.residuals[0] - base.residuals[0];
    for (Eigen::Index t = 0; t < diff.rows(); ++t)
        for (Eigen::Index d = 0; d < diff.cols(); ++d) CHECK(diff(t, d) == doctest::Approx(4.0f * v(d)).epsilon(1e-4));
}

TEST_CASE("hook validation") {
    const Model m = small_model();
    const std::vector<TokenId> tokens = {1, 2};
    const SteeringHook bad_layer{5, VectorF::Zero(16), 1.0f};
    CHECK(error_code_of([&] { forward_with_trace(m, tokens, {&bad_layer, 1}); }) == ErrorCode::invalid_argument);
    const SteeringHook bad_dim{0, VectorF::Zero(7), 1.0f};
    CHECK(error_code_of([&] { forward_with_trace(m, tokens, {&bad_dim, 1}); }) == ErrorCode::shape_mismatch);
    const SteeringHook nan_strength{0, VectorF::Zero(16), std::nanf("")};
    CHECK(error_code_of([&] { forward_with_trace(m, tokens, {&nan_strength, 1}); }) == ErrorCode::invalid_argument);
    CHECK(error_code_of([&] { forward_with_trace(m, std::vector<TokenId>{}); }) == ErrorCode::invalid_argument);
    CHECK(error_code_of([&] { forward_with_trace(m, std::vector<TokenId>(25, 1)); }) == ErrorCode::context_overflow);
    CHECK(error_code_of([&] { forward_with_trace(m, std::vector<TokenId>{1, 99}); }) == ErrorCode::invalid_argument);
}

TEST_CASE("greedy generation is deterministic and sampling follows the seed") {
    const Model m = small_model();
    const std::vector<TokenId> prompt = {3, 1, 4};
    GenerationSettings g;
    g.max_new_tokens = 6;
    const auto a = generate(m, prompt, g);
    CHECK(a.size() == 6);
    CHECK(a == generate(m, prompt, g));

    // greedy picks the argmax of the last logits row
    const auto trace = forward_with_trace(m, prompt);
    Eigen::Index best = 0;
    trace.logits.row(2).maxCoeff(&best);
    CHECK(a.front() == best);

    GenerationSettings s = g;
    s.decoding = GenerationSettings::Decoding::sample;
    s.seed = 99;
    CHECK(generate(m, prompt, s) == generate(m, prompt, s));

    GenerationSettings too_long = g;
    too_long.max_new_tokens = 22;
    CHECK(error_code_of([&] { generate(m, prompt, too_long); }) == ErrorCode::context_overflow);
    s.temperature = 0.0f;
    CHECK(error_code_of([&] { generate(m, prompt, s); }) == ErrorCode::invalid_argument);
}

TEST_CASE("model bundles round-trip bitwise") {
    test_support::TempDir dir("model");
    const Model m = small_model(5);
    save_model(dir.path() / "bundle", m);
    const Model back = load_model(dir.path() / "bundle");
    CHECK(back.config.d_model == m.config.d_model);
    CHECK(back.tokenizer.vocab() == m.tokenizer.vocab());
    const std::vector<TokenId> tokens = {2, 7, 1, 8};
    CHECK(bitwise_equal(forward_with_trace(back, tokens).logits, forward_with_trace(m, tokens).logits));
}

TEST_CASE("model config validation") {
    ModelConfig c;
    c.d_model = 30;
    c.n_heads = 4;
    CHECK_THROWS_AS(c.validate(), Error);
    Model m = small_model();
    m.weights.layers.pop_back();
    CHECK(error_code_of([&] { m.weights.validate(m.config); }) == ErrorCode::shape_mismatch);
}
