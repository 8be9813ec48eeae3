#ifndef FEATURESCOPE_PIPELINE_HPP
#define FEATURESCOPE_PIPELINE_HPP

#include "featurescope/atlas.hpp"
#include "featurescope/layout.hpp"
#include "featurescope/pack.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace featurescope {

struct PrecomputeOptions {
    std::uint64_t seed = 42;
    std::string embedder = "hashing";
    LayoutConfig layout;
    std::vector<int> level_sizes = kDefaultLevelSizes;
    ColorConfig colors;
};

struct PrecomputeReport {
    std::string sae_id;
    std::vector<std::string> warnings;
    std::vector<int> level_sizes;  // after clamping
    std::vector<bool> color_fallback;
};

/// Embeds explanations, lays out and clusters the features, labels and
/// colours the clusters and bins them per zoom level, then rewrites the pack
/// in place. Re-running with the same options reproduces the same files.
PrecomputeReport precompute_pack(const std::filesystem::path& pack_dir, const PrecomputeOptions& options = {});

/// Key=value description of raw inputs for one pack:
///   sae_id, layer_index, activation (relu|jumprelu), model (bundle dir),
///   w_enc, b_enc, w_dec, b_dec, [threshold], explanations (jsonl),
///   segments (jsonl), output (pack dir), [provenance]
/// Relative paths resolve against the manifest's directory.
struct IngestManifest {
    std::string sae_id;
    int layer_index = 0;
    SaeActivation activation = SaeActivation::relu;
    std::filesystem::path model;
    std::filesystem::path w_enc, b_enc, w_dec, b_dec, threshold;
    std::filesystem::path explanations, segments;
    std::filesystem::path output;
    std::string provenance;

    static IngestManifest read(const std::filesystem::path& file);
};

/// Validates the raw inputs against each other and the model and writes a
/// pack without precompute products.
FeaturePack ingest_pack(const IngestManifest& manifest);

}  // namespace featurescope

#endif
