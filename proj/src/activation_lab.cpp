#include "featurescope/activation_lab.hpp"

#include <algorithm>
#include <numeric>

namespace featurescope {

namespace {

void check_pair(const Model& model, const SaeWeights& sae, int feature) {
    if (sae.d_model() != model.config.d_model)
        fail(ErrorCode::shape_mismatch, "SAE width does not match the model",
             std::to_string(sae.d_model()) + " vs " + std::to_string(model.config.d_model));
    if (sae.layer_index >= model.config.n_layers) fail(ErrorCode::invalid_argument, "SAE layer beyond the model");
    if (feature < 0 || feature >= sae.n_features())
        fail(ErrorCode::not_found, "feature id out of range", std::to_string(feature));
}

MatrixF activations_for(const Model& model, const SaeWeights& sae, const Tokenized& tok) {
    if (static_cast<int>(tok.ids.size()) > model.config.max_context)
        fail(ErrorCode::context_overflow, "input is longer than the model context",
             std::to_string(tok.ids.size()) + " > " + std::to_string(model.config.max_context));
    return feature_activation_over_trace(sae, forward_with_trace(model, tok.ids));
}

}  // namespace

ProbeResult probe_input(const Model& model, const SaeWeights& sae, int feature, const std::string& text) {
    check_pair(model, sae, feature);
    const Tokenized tok = model.tokenizer.encode(text);
    const MatrixF acts = activations_for(model, sae, tok);
    ProbeResult out;
    out.tokens = tok.pieces;
    out.token_ids = tok.ids;
    for (Eigen::Index t = 0; t < acts.rows(); ++t) out.activations.push_back(acts(t, feature));
    const auto it = std::max_element(out.activations.begin(), out.activations.end());
    out.peak_index = static_cast<int>(it - out.activations.begin());
    out.peak_activation = *it;
    return out;
}

CoActivationSet co_activated_features(const Model& model, const SaeWeights& sae, int feature, const std::string& text,
                                      const std::vector<int>& anchors, int top_n, const MatrixD* layout) {
    check_pair(model, sae, feature);
    if (anchors.empty()) fail(ErrorCode::invalid_argument, "no anchor tokens selected");
    if (top_n < 0) fail(ErrorCode::invalid_argument, "top_n must be >= 0");
    if (layout != nullptr && (layout->rows() != sae.n_features() || layout->cols() != 2))
        fail(ErrorCode::shape_mismatch, "layout does not match the SAE");
    const Tokenized tok = model.tokenizer.encode(text);
    const MatrixF acts = activations_for(model, sae, tok);

    CoActivationSet out;
    VectorD mean = VectorD::Zero(sae.n_features());
    for (int a : anchors) {
        if (a < 0 || a >= acts.rows())
            fail(ErrorCode::invalid_argument, "anchor position out of range", std::to_string(a));
        mean += acts.row(a).transpose().cast<double>();
        out.anchors.push_back(a);
        out.anchor_tokens.push_back(tok.pieces[static_cast<std::size_t>(a)]);
    }
    mean /= static_cast<double>(anchors.size());
    const VectorF score = mean.cast<float>();

    std::vector<int> ids;
    for (int f = 0; f < sae.n_features(); ++f)
        if (f != feature) ids.push_back(f);
    const auto n = std::min(ids.size(), static_cast<std::size_t>(top_n));
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n), ids.end(), [&](int a, int b) {
        return score(a) != score(b) ? score(a) > score(b) : a < b;
    });
    for (std::size_t i = 0; i < n; ++i) {
        CoActivatedFeature cf{ids[i], score(ids[i]), std::nullopt};
        if (layout != nullptr) cf.position = std::array<double, 2>{(*layout)(ids[i], 0), (*layout)(ids[i], 1)};
        out.features.push_back(cf);
    }
    return out;
}

std::vector<SteeringBranch> steer_generate(const Model& model, const SaeWeights& sae, int feature,
                                           const std::string& prompt, const std::vector<float>& strengths,
                                           const GenerationSettings& settings, bool normalize) {
    check_pair(model, sae, feature);
    if (strengths.empty()) fail(ErrorCode::invalid_argument, "no steering strengths given");
    const Tokenized tok = model.tokenizer.encode(prompt);
    const VectorF direction = steering_vector(sae, feature, normalize);
    std::vector<SteeringBranch> out;
    for (float s : strengths) {
        if (!std::isfinite(s)) fail(ErrorCode::invalid_argument, "steering strength must be finite");
        const SteeringHook hook{sae.layer_index, direction, s};
        SteeringBranch branch;
        branch.strength = s;
        branch.tokens = generate(model, tok.ids, settings, std::span<const SteeringHook>(&hook, 1));
        branch.text = model.tokenizer.decode(branch.tokens);
        out.push_back(std::move(branch));
    }
    return out;
}

}  // namespace featurescope
