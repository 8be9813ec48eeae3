#ifndef FEATURESCOPE_PACK_HPP
#define FEATURESCOPE_PACK_HPP

#include "featurescope/atlas.hpp"
#include "featurescope/embedding.hpp"
#include "featurescope/interpretation.hpp"
#include "featurescope/matrix_io.hpp"
#include "featurescope/model.hpp"
#include "featurescope/sae.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace featurescope {

inline constexpr int kPackFormatVersion = 1;

// File names inside a pack directory.
namespace pack_files {
inline constexpr const char* kManifest = "pack.manifest";
inline constexpr const char* kWEnc = "w_enc.bin";
inline constexpr const char* kBEnc = "b_enc.bin";
inline constexpr const char* kWDec = "w_dec.bin";
inline constexpr const char* kBDec = "b_dec.bin";
inline constexpr const char* kThreshold = "threshold.bin";
inline constexpr const char* kExplanations = "explanations.jsonl";
inline constexpr const char* kSegments = "segments.jsonl";
inline constexpr const char* kEmbeddings = "embeddings.bin";
inline constexpr const char* kLayout = "layout.bin";
inline constexpr const char* kClusters = "clusters.json";
std::string hexbins(Zoom zoom);  // hexbins_<zoom>.json
}  // namespace pack_files

struct PackManifest {
    int format_version = kPackFormatVersion;
    std::string sae_id;
    int layer_index = 0;
    int d_model = 0;
    int n_features = 0;
    SaeActivation activation = SaeActivation::relu;
    std::string model_path = "../model";  // relative to the pack directory
    std::string embedder;                 // set by precompute
    int d_embed = 0;                      // set by precompute
    std::string provenance;
    KeyValues extra;  // free-form metadata, e.g. training statistics

    KeyValues to_key_values() const;
    static PackManifest from_key_values(const KeyValues& kv, const std::filesystem::path& source);
};

struct FeaturePack {
    std::filesystem::path dir;
    PackManifest manifest;
    SaeWeights sae;
    std::vector<std::string> explanations;  // by feature id
    std::vector<SegmentRecord> segments;    // sorted by (feature, segment)

    // Precompute products; empty until precompute has run.
    std::shared_ptr<const MappedMatrix> embeddings;
    MatrixD layout;  // n_features x 2
    ClusterTree tree;
    std::vector<HexBinLevel> hexbins;  // far, mid, near

    bool has_atlas() const { return embeddings != nullptr && tree.n_features > 0 && hexbins.size() == 3; }
    std::vector<SegmentRecord> segments_for(int feature_id) const;
    std::filesystem::path model_dir() const;
};

/// Reads a pack. With `require_atlas`, missing precompute products are an
/// error; otherwise they are loaded when present. All shapes and ids are
/// cross-checked.
FeaturePack load_pack(const std::filesystem::path& dir, bool require_atlas = true);

/// Writes every populated part of `pack` into `dir` (created if needed).
void write_pack(const FeaturePack& pack, const std::filesystem::path& dir);

/// Immutable set of packs plus their models and one embedding store.
class PackRegistry {
public:
    /// Loads every pack directory directly under `dir`. Corrupt packs are
    /// skipped and described in `diagnostics()`; zero valid packs throws.
    static std::shared_ptr<const PackRegistry> load(const std::filesystem::path& dir);

    const std::vector<std::shared_ptr<const FeaturePack>>& packs() const { return packs_; }
    const FeaturePack& pack(const std::string& sae_id) const;  // not_found
    const Model& model_for(const FeaturePack& pack) const;
    const EmbeddingStore& store() const { return store_; }
    const std::string& embedder_name() const { return embedder_name_; }
    const std::vector<std::string>& diagnostics() const { return diagnostics_; }

private:
    std::vector<std::shared_ptr<const FeaturePack>> packs_;  // sorted by sae_id
    std::map<std::string, std::shared_ptr<const Model>> models_;  // by canonical model path
    std::map<std::string, std::string> model_of_pack_;
    EmbeddingStore store_;
    std::string embedder_name_;
    std::vector<std::string> diagnostics_;
};

}  // namespace featurescope

#endif
