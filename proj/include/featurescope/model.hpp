#ifndef FEATURESCOPE_MODEL_HPP
#define FEATURESCOPE_MODEL_HPP

#include "featurescope/common.hpp"
#include "featurescope/tokenizer.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace featurescope {

struct ModelConfig {
    int n_layers = 4;
    int d_model = 32;
    int n_heads = 4;
    int d_mlp = 128;
    int vocab_size = 256;
    int max_context = 64;
    float ln_eps = 1e-5f;

    void validate() const;
    int head_dim() const { return d_model / n_heads; }
};

struct LayerWeights {
    VectorF ln1_gain, ln1_bias;
    MatrixF w_q, w_k, w_v, w_o;  // d_model x d_model, applied as W * x
    VectorF ln2_gain, ln2_bias;
    MatrixF w_in;                // d_mlp x d_model
    VectorF b_in;                // d_mlp
    MatrixF w_out;               // d_model x d_mlp
    VectorF b_out;               // d_model
};

struct ModelWeights {
    MatrixF token_embedding;     // vocab_size x d_model
    MatrixF position_embedding;  // max_context x d_model
    std::vector<LayerWeights> layers;
    VectorF final_gain, final_bias;
    MatrixF unembedding;         // W_u: vocab_size x d_model

    /// Throws shape_mismatch / data_error when inconsistent with `config`.
    void validate(const ModelConfig& config) const;
};

/// A loaded bundle. Immutable after load; share freely between threads.
struct Model {
    ModelConfig config;
    ModelWeights weights;
    Tokenizer tokenizer;
};

/// Residual stream after each block (row t = token position) plus logits.
struct ResidualTrace {
    std::vector<MatrixF> residuals;  // [layer], each tokens x d_model
    MatrixF logits;                  // tokens x vocab_size

    Eigen::Index length() const { return logits.rows(); }
};

/// Adds strength * vector to the post-block residual of `layer_index` at
/// every position.
struct SteeringHook {
    int layer_index = 0;
    VectorF vector;
    float strength = 0.0f;
};

struct GenerationSettings {
    enum class Decoding { greedy, sample };

    int max_new_tokens = 16;
    Decoding decoding = Decoding::greedy;
    float temperature = 1.0f;
    std::uint64_t seed = 0;
};

Model load_model(const std::filesystem::path& bundle_dir);
void save_model(const std::filesystem::path& bundle_dir, const Model& model);

/// Seeded random weights with the given shape; used by the fixture generator
/// and tests.
ModelWeights random_weights(const ModelConfig& config, Rng& rng);

ResidualTrace forward_with_trace(const Model& model, std::span<const TokenId> tokens,
                                 std::span<const SteeringHook> hooks = {});

/// Greedy or seeded-sampled continuation of `prompt` (continuation tokens only).
std::vector<TokenId> generate(const Model& model, std::span<const TokenId> prompt, const GenerationSettings& settings,
                              std::span<const SteeringHook> hooks = {});

/// Row-wise layer norm: gain * (x - mean) / sqrt(var + eps) + bias.
MatrixF layer_norm(const MatrixF& x, const VectorF& gain, const VectorF& bias, float eps);

/// Final layer norm of residual rows, the input of the unembedding.
MatrixF final_norm(const Model& model, const MatrixF& residual);

}  // namespace featurescope

#endif
