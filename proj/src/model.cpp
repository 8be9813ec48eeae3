#include "featurescope/model.hpp"

#include "featurescope/matrix_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace featurescope {

void ModelConfig::validate() const {
    if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_mlp < 1 || vocab_size < 1 || max_context < 1)
        fail(ErrorCode::data_error, "model config fields must be >= 1");
    if (d_model % n_heads != 0) fail(ErrorCode::data_error, "d_model must be divisible by n_heads");
}

namespace {

void expect_shape(const MatrixF& m, Eigen::Index rows, Eigen::Index cols, const char* name) {
    if (m.rows() != rows || m.cols() != cols)
        fail(ErrorCode::shape_mismatch, std::string("shape mismatch in ") + name,
             "got " + shape_string(m.rows(), m.cols()) + ", expected " + shape_string(rows, cols));
    if (!m.allFinite()) fail(ErrorCode::data_error, std::string("non-finite values in ") + name);
}

void expect_size(const VectorF& v, Eigen::Index n, const char* name) {
    if (v.size() != n)
        fail(ErrorCode::shape_mismatch, std::string("shape mismatch in ") + name,
             "got " + std::to_string(v.size()) + ", expected " + std::to_string(n));
    if (!v.allFinite()) fail(ErrorCode::data_error, std::string("non-finite values in ") + name);
}

float gelu(float x) {
    constexpr float k = 0.7978845608028654f;  // sqrt(2/pi)
    return 0.5f * x * (1.0f + std::tanh(k * (x + 0.044715f * x * x * x)));
}

MatrixF causal_attention(const MatrixF& normed, const LayerWeights& lw, const ModelConfig& cfg) {
    const Eigen::Index T = normed.rows();
    const int dh = cfg.head_dim();
    const MatrixF q = normed * lw.w_q.transpose();
    const MatrixF k = normed * lw.w_k.transpose();
    const MatrixF v = normed * lw.w_v.transpose();
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

    MatrixF mixed(T, cfg.d_model);
    MatrixF scores(T, T);
    for (int h = 0; h < cfg.n_heads; ++h) {
        const auto qh = q.middleCols(h * dh, dh);
        const auto kh = k.middleCols(h * dh, dh);
        const auto vh = v.middleCols(h * dh, dh);
        scores.noalias() = (qh * kh.transpose()) * scale;
        for (Eigen::Index i = 0; i < T; ++i) {
            const float m = scores.row(i).head(i + 1).maxCoeff();
            float total = 0.0f;
            for (Eigen::Index j = 0; j <= i; ++j) {
                scores(i, j) = std::exp(scores(i, j) - m);
                total += scores(i, j);
            }
            scores.row(i).head(i + 1) /= total;
            scores.row(i).tail(T - i - 1).setZero();
        }
        mixed.middleCols(h * dh, dh).noalias() = scores * vh;
    }
    return mixed * lw.w_o.transpose();
}

MatrixF mlp(const MatrixF& normed, const LayerWeights& lw) {
    MatrixF hidden = normed * lw.w_in.transpose();
    hidden.rowwise() += lw.b_in.transpose();
    hidden = hidden.unaryExpr([](float x) { return gelu(x); });
    MatrixF out = hidden * lw.w_out.transpose();
    out.rowwise() += lw.b_out.transpose();
    return out;
}

/// Per-layer summed steering deltas; an entry stays empty when the hooks on
/// that layer cancel exactly, so the residual is left bitwise untouched.
std::vector<VectorF> collect_deltas(const ModelConfig& cfg, std::span<const SteeringHook> hooks) {
    std::vector<VectorF> deltas(static_cast<std::size_t>(cfg.n_layers));
    for (const auto& hook : hooks) {
        if (hook.layer_index < 0 || hook.layer_index >= cfg.n_layers)
            fail(ErrorCode::invalid_argument, "steering hook layer out of range", std::to_string(hook.layer_index));
        if (hook.vector.size() != cfg.d_model)
            fail(ErrorCode::shape_mismatch, "steering vector dimension mismatch",
                 "got " + std::to_string(hook.vector.size()) + ", expected " + std::to_string(cfg.d_model));
        if (!hook.vector.allFinite() || !std::isfinite(hook.strength))
            fail(ErrorCode::invalid_argument, "steering hook has non-finite values");
        auto& d = deltas[static_cast<std::size_t>(hook.layer_index)];
        if (d.size() == 0) d = VectorF::Zero(cfg.d_model);
        d += hook.strength * hook.vector;
    }
    for (auto& d : deltas) {
        if (d.size() > 0 && (d.array() == 0.0f).all()) d.resize(0);
    }
    return deltas;
}

}  // namespace

void ModelWeights::validate(const ModelConfig& cfg) const {
    cfg.validate();
    expect_shape(token_embedding, cfg.vocab_size, cfg.d_model, "token_embedding");
    expect_shape(position_embedding, cfg.max_context, cfg.d_model, "position_embedding");
    if (static_cast<int>(layers.size()) != cfg.n_layers)
        fail(ErrorCode::shape_mismatch, "layer count mismatch",
             "got " + std::to_string(layers.size()) + ", expected " + std::to_string(cfg.n_layers));
    for (const auto& lw : layers) {
        expect_size(lw.ln1_gain, cfg.d_model, "ln1_gain");
        expect_size(lw.ln1_bias, cfg.d_model, "ln1_bias");
        expect_shape(lw.w_q, cfg.d_model, cfg.d_model, "w_q");
        expect_shape(lw.w_k, cfg.d_model, cfg.d_model, "w_k");
        expect_shape(lw.w_v, cfg.d_model, cfg.d_model, "w_v");
        expect_shape(lw.w_o, cfg.d_model, cfg.d_model, "w_o");
        expect_size(lw.ln2_gain, cfg.d_model, "ln2_gain");
        expect_size(lw.ln2_bias, cfg.d_model, "ln2_bias");
        expect_shape(lw.w_in, cfg.d_mlp, cfg.d_model, "w_in");
        expect_size(lw.b_in, cfg.d_mlp, "b_in");
        expect_shape(lw.w_out, cfg.d_model, cfg.d_mlp, "w_out");
        expect_size(lw.b_out, cfg.d_model, "b_out");
    }
    expect_size(final_gain, cfg.d_model, "final_gain");
    expect_size(final_bias, cfg.d_model, "final_bias");
    expect_shape(unembedding, cfg.vocab_size, cfg.d_model, "unembedding");
}

MatrixF layer_norm(const MatrixF& x, const VectorF& gain, const VectorF& bias, float eps) {
    MatrixF out(x.rows(), x.cols());
    const float n = static_cast<float>(x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const float mean = x.row(r).sum() / n;
        const auto centered = (x.row(r).array() - mean).eval();
        const float var = centered.square().sum() / n;
        const float inv = 1.0f / std::sqrt(var + eps);
        out.row(r) = (centered * inv * gain.transpose().array() + bias.transpose().array()).matrix();
    }
    return out;
}

MatrixF final_norm(const Model& model, const MatrixF& residual) {
    return layer_norm(residual, model.weights.final_gain, model.weights.final_bias, model.config.ln_eps);
}

ResidualTrace forward_with_trace(const Model& model, std::span<const TokenId> tokens,
                                 std::span<const SteeringHook> hooks) {
    const auto& cfg = model.config;
    const auto& w = model.weights;
    if (tokens.empty()) fail(ErrorCode::invalid_argument, "empty token sequence");
    if (static_cast<int>(tokens.size()) > cfg.max_context)
        fail(ErrorCode::context_overflow, "input longer than max_context",
             std::to_string(tokens.size()) + " > " + std::to_string(cfg.max_context));
    for (TokenId t : tokens) {
        if (t < 0 || t >= cfg.vocab_size) fail(ErrorCode::invalid_argument, "token id out of range", std::to_string(t));
    }
    const auto deltas = collect_deltas(cfg, hooks);

    const auto T = static_cast<Eigen::Index>(tokens.size());
    MatrixF h(T, cfg.d_model);
    for (Eigen::Index t = 0; t < T; ++t) h.row(t) = w.token_embedding.row(tokens[t]) + w.position_embedding.row(t);

    ResidualTrace trace;
    trace.residuals.reserve(static_cast<std::size_t>(cfg.n_layers));
    for (int l = 0; l < cfg.n_layers; ++l) {
        const auto& lw = w.layers[static_cast<std::size_t>(l)];
        h += causal_attention(layer_norm(h, lw.ln1_gain, lw.ln1_bias, cfg.ln_eps), lw, cfg);
        h += mlp(layer_norm(h, lw.ln2_gain, lw.ln2_bias, cfg.ln_eps), lw);
        const auto& delta = deltas[static_cast<std::size_t>(l)];
        if (delta.size() > 0) h.rowwise() += delta.transpose();
        trace.residuals.push_back(h);
    }
    trace.logits = final_norm(model, h) * w.unembedding.transpose();
    return trace;
}

std::vector<TokenId> generate(const Model& model, std::span<const TokenId> prompt, const GenerationSettings& settings,
                              std::span<const SteeringHook> hooks) {
    if (prompt.empty()) fail(ErrorCode::invalid_argument, "empty prompt");
    if (settings.max_new_tokens < 1) fail(ErrorCode::invalid_argument, "max_new_tokens must be >= 1");
    if (static_cast<long>(prompt.size()) + settings.max_new_tokens > model.config.max_context)
        fail(ErrorCode::context_overflow, "prompt plus max_new_tokens exceeds max_context",
             std::to_string(prompt.size()) + " + " + std::to_string(settings.max_new_tokens) + " > " +
                 std::to_string(model.config.max_context));
    if (settings.decoding == GenerationSettings::Decoding::sample && !(settings.temperature > 0.0f))
        fail(ErrorCode::invalid_argument, "temperature must be positive");

    std::vector<TokenId> context(prompt.begin(), prompt.end());
    std::vector<TokenId> produced;
    Rng rng(settings.seed);
    for (int step = 0; step < settings.max_new_tokens; ++step) {
        const ResidualTrace trace = forward_with_trace(model, context, hooks);
        const auto last = trace.logits.row(trace.logits.rows() - 1);
        TokenId next = 0;
        if (settings.decoding == GenerationSettings::Decoding::greedy) {
            // first maximal index wins ties
            for (Eigen::Index v = 1; v < last.size(); ++v) {
                if (last(v) > last(next)) next = static_cast<TokenId>(v);
            }
        } else {
            const double m = last.maxCoeff();
            std::vector<double> p(static_cast<std::size_t>(last.size()));
            double total = 0.0;
            for (Eigen::Index v = 0; v < last.size(); ++v) {
                p[static_cast<std::size_t>(v)] = std::exp((last(v) - m) / settings.temperature);
                total += p[static_cast<std::size_t>(v)];
            }
            double u = rng.uniform() * total;
            next = static_cast<TokenId>(last.size() - 1);
            for (std::size_t v = 0; v < p.size(); ++v) {
                u -= p[v];
                if (u < 0.0) {
                    next = static_cast<TokenId>(v);
                    break;
                }
            }
        }
        context.push_back(next);
        produced.push_back(next);
    }
    return produced;
}

ModelWeights random_weights(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    auto gaussian = [&rng](Eigen::Index r, Eigen::Index c, double stddev) {
        MatrixF m(r, c);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(stddev * rng.normal());
        return m;
    };
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    const double inv_sqrt_mlp = 1.0 / std::sqrt(static_cast<double>(cfg.d_mlp));

    ModelWeights w;
    w.token_embedding = gaussian(cfg.vocab_size, cfg.d_model, 0.35);
    w.position_embedding = gaussian(cfg.max_context, cfg.d_model, 0.08);
    for (int l = 0; l < cfg.n_layers; ++l) {
        LayerWeights lw;
        lw.ln1_gain = VectorF::Ones(cfg.d_model);
        lw.ln1_bias = VectorF::Zero(cfg.d_model);
        lw.w_q = gaussian(cfg.d_model, cfg.d_model, inv_sqrt_d);
        lw.w_k = gaussian(cfg.d_model, cfg.d_model, inv_sqrt_d);
        lw.w_v = gaussian(cfg.d_model, cfg.d_model, 0.5 * inv_sqrt_d);
        lw.w_o = gaussian(cfg.d_model, cfg.d_model, 0.5 * inv_sqrt_d);
        lw.ln2_gain = VectorF::Ones(cfg.d_model);
        lw.ln2_bias = VectorF::Zero(cfg.d_model);
        lw.w_in = gaussian(cfg.d_mlp, cfg.d_model, inv_sqrt_d);
        lw.b_in = gaussian(cfg.d_mlp, 1, 0.02);
        lw.w_out = gaussian(cfg.d_model, cfg.d_mlp, 0.5 * inv_sqrt_mlp);
        lw.b_out = gaussian(cfg.d_model, 1, 0.02);
        w.layers.push_back(std::move(lw));
    }
    w.final_gain = VectorF::Ones(cfg.d_model);
    w.final_bias = VectorF::Zero(cfg.d_model);
    w.unembedding = gaussian(cfg.vocab_size, cfg.d_model, inv_sqrt_d);
    return w;
}

// ---- bundle IO -------------------------------------------------------------

namespace {

MatrixF as_row(const VectorF& v) { return v.transpose(); }

VectorF read_vector(const std::filesystem::path& p, Eigen::Index n) {
    return read_matrix(p, 1, n).row(0).transpose();
}

std::string layer_file(int l, const char* name) { return "layer" + std::to_string(l) + "_" + name + ".bin"; }

}  // namespace

namespace {

std::string format_float(float v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
    return buf;
}

}  // namespace

void save_model(const std::filesystem::path& dir, const Model& model) {
    const auto& cfg = model.config;
    model.weights.validate(cfg);
    std::filesystem::create_directories(dir);
    KeyValues kv{
        {"format", "featurescope-model"},
        {"version", "1"},
        {"endianness", "little"},
        {"dtype", "float32"},
        {"n_layers", std::to_string(cfg.n_layers)},
        {"d_model", std::to_string(cfg.d_model)},
        {"n_heads", std::to_string(cfg.n_heads)},
        {"d_mlp", std::to_string(cfg.d_mlp)},
        {"vocab_size", std::to_string(cfg.vocab_size)},
        {"max_context", std::to_string(cfg.max_context)},
        {"ln_eps", format_float(cfg.ln_eps)},
    };
    write_key_values(dir / "manifest.txt", kv);
    model.tokenizer.save(dir / "vocab.txt");
    const auto& w = model.weights;
    write_matrix(dir / "token_embedding.bin", w.token_embedding);
    write_matrix(dir / "position_embedding.bin", w.position_embedding);
    for (int l = 0; l < cfg.n_layers; ++l) {
        const auto& lw = w.layers[static_cast<std::size_t>(l)];
        write_matrix(dir / layer_file(l, "ln1_gain"), as_row(lw.ln1_gain));
        write_matrix(dir / layer_file(l, "ln1_bias"), as_row(lw.ln1_bias));
        write_matrix(dir / layer_file(l, "w_q"), lw.w_q);
        write_matrix(dir / layer_file(l, "w_k"), lw.w_k);
        write_matrix(dir / layer_file(l, "w_v"), lw.w_v);
        write_matrix(dir / layer_file(l, "w_o"), lw.w_o);
        write_matrix(dir / layer_file(l, "ln2_gain"), as_row(lw.ln2_gain));
        write_matrix(dir / layer_file(l, "ln2_bias"), as_row(lw.ln2_bias));
        write_matrix(dir / layer_file(l, "w_in"), lw.w_in);
        write_matrix(dir / layer_file(l, "b_in"), as_row(lw.b_in));
        write_matrix(dir / layer_file(l, "w_out"), lw.w_out);
        write_matrix(dir / layer_file(l, "b_out"), as_row(lw.b_out));
    }
    write_matrix(dir / "final_gain.bin", as_row(w.final_gain));
    write_matrix(dir / "final_bias.bin", as_row(w.final_bias));
    write_matrix(dir / "unembedding.bin", w.unembedding);
}

Model load_model(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.txt";
    const KeyValues kv = read_key_values(manifest_path);
    if (require_key(kv, "format", manifest_path) != "featurescope-model")
        fail(ErrorCode::data_error, "not a model bundle", manifest_path.string());
    if (require_int(kv, "version", manifest_path) != 1)
        fail(ErrorCode::data_error, "unsupported model bundle version", manifest_path.string());
    if (auto it = kv.find("endianness"); it != kv.end() && it->second != "little")
        fail(ErrorCode::data_error, "unsupported endianness", it->second);

    Model model;
    auto& cfg = model.config;
    cfg.n_layers = static_cast<int>(require_int(kv, "n_layers", manifest_path));
    cfg.d_model = static_cast<int>(require_int(kv, "d_model", manifest_path));
    cfg.n_heads = static_cast<int>(require_int(kv, "n_heads", manifest_path));
    cfg.d_mlp = static_cast<int>(require_int(kv, "d_mlp", manifest_path));
    cfg.vocab_size = static_cast<int>(require_int(kv, "vocab_size", manifest_path));
    cfg.max_context = static_cast<int>(require_int(kv, "max_context", manifest_path));
    if (auto it = kv.find("ln_eps"); it != kv.end()) cfg.ln_eps = std::stof(it->second);
    cfg.validate();

    const Eigen::Index d = cfg.d_model;
    auto& w = model.weights;
    w.token_embedding = read_matrix(dir / "token_embedding.bin", cfg.vocab_size, d);
    w.position_embedding = read_matrix(dir / "position_embedding.bin", cfg.max_context, d);
    for (int l = 0; l < cfg.n_layers; ++l) {
        LayerWeights lw;
        lw.ln1_gain = read_vector(dir / layer_file(l, "ln1_gain"), d);
        lw.ln1_bias = read_vector(dir / layer_file(l, "ln1_bias"), d);
        lw.w_q = read_matrix(dir / layer_file(l, "w_q"), d, d);
        lw.w_k = read_matrix(dir / layer_file(l, "w_k"), d, d);
        lw.w_v = read_matrix(dir / layer_file(l, "w_v"), d, d);
        lw.w_o = read_matrix(dir / layer_file(l, "w_o"), d, d);
        lw.ln2_gain = read_vector(dir / layer_file(l, "ln2_gain"), d);
        lw.ln2_bias = read_vector(dir / layer_file(l, "ln2_bias"), d);
        lw.w_in = read_matrix(dir / layer_file(l, "w_in"), cfg.d_mlp, d);
        lw.b_in = read_vector(dir / layer_file(l, "b_in"), cfg.d_mlp);
        lw.w_out = read_matrix(dir / layer_file(l, "w_out"), d, cfg.d_mlp);
        lw.b_out = read_vector(dir / layer_file(l, "b_out"), d);
        w.layers.push_back(std::move(lw));
    }
    w.final_gain = read_vector(dir / "final_gain.bin", d);
    w.final_bias = read_vector(dir / "final_bias.bin", d);
    w.unembedding = read_matrix(dir / "unembedding.bin", cfg.vocab_size, d);
    w.validate(cfg);

    model.tokenizer = Tokenizer::load(dir / "vocab.txt");
    if (static_cast<int>(model.tokenizer.size()) != cfg.vocab_size)
        fail(ErrorCode::shape_mismatch, "vocabulary size does not match manifest",
             std::to_string(model.tokenizer.size()) + " vs " + std::to_string(cfg.vocab_size));
    return model;
}

}  // namespace featurescope
