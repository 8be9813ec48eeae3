#ifndef FEATURESCOPE_ACTIVATION_LAB_HPP
#define FEATURESCOPE_ACTIVATION_LAB_HPP

#include "featurescope/model.hpp"
#include "featurescope/sae.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace featurescope {

struct ProbeResult {
    std::vector<std::string> tokens;
    std::vector<TokenId> token_ids;
    std::vector<float> activations;
    int peak_index = 0;  // first maximum
    float peak_activation = 0.0f;
};

/// Per-token activation of `feature` on the residual stream of `text`.
ProbeResult probe_input(const Model& model, const SaeWeights& sae, int feature, const std::string& text);

struct CoActivatedFeature {
    int feature_id = 0;
    float activation = 0.0f;  // mean over the anchors
    std::optional<std::array<double, 2>> position;
};

struct CoActivationSet {
    std::vector<int> anchors;
    std::vector<std::string> anchor_tokens;
    std::vector<CoActivatedFeature> features;  // activation desc, then feature id
};

/// Features ranked by mean activation over the anchor positions, the target
/// feature excluded. `layout` (n_features x 2), when given, supplies atlas
/// positions.
CoActivationSet co_activated_features(const Model& model, const SaeWeights& sae, int feature, const std::string& text,
                                      const std::vector<int>& anchors, int top_n, const MatrixD* layout = nullptr);

struct SteeringBranch {
    float strength = 0.0f;
    std::vector<TokenId> tokens;
    std::string text;
};

inline const std::vector<float> kDefaultStrengths = {-10.0f, -5.0f, 0.0f, 5.0f, 10.0f};

/// One generation per strength, steering with the feature's decoder row at
/// the SAE's layer.
std::vector<SteeringBranch> steer_generate(const Model& model, const SaeWeights& sae, int feature,
                                           const std::string& prompt, const std::vector<float>& strengths,
                                           const GenerationSettings& settings, bool normalize = false);

}  // namespace featurescope

#endif
