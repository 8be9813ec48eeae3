#ifndef FEATURESCOPE_FIXTURES_HPP
#define FEATURESCOPE_FIXTURES_HPP

#include "featurescope/model.hpp"
#include "featurescope/sae.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace featurescope {

/// Deterministic desk-scale stand-in for a real model and its SAEs: a
/// synthetic topic corpus, a toy transformer whose token embeddings carry
/// planted concept directions ("plant", "hero", a comic-book companion),
/// a readout trained so that steering along the "plant" direction produces
/// the token "plant", and one SAE per layer with those concepts pinned as
/// features. Everything derives from `seed`.
struct FixtureOptions {
    std::uint64_t seed = 42;
    int n_features = 128;
    std::vector<int> sae_layers = {1, 2, 3};
    int n_sentences = 900;
};

struct FixtureSummary {
    std::filesystem::path model_dir;
    std::vector<std::filesystem::path> pack_dirs;
    std::filesystem::path expectations;  // expectations.json
    std::vector<std::string> warnings;
};

/// Writes <out>/model, one pack per SAE layer (precomputed), corpus.txt and
/// expectations.json. Throws data_error if a planted property fails to hold.
FixtureSummary generate_fixtures(const std::filesystem::path& out_dir, const FixtureOptions& options = {});

/// The fixture vocabulary (256 entries including <unk>).
std::vector<std::string> fixture_vocabulary();

/// Stable names of the SAE packs produced for each layer.
std::string fixture_sae_id(int layer, bool jump_relu);

/// Residual vectors at `layer` for every token of every corpus line, in
/// order; used to re-derive the SAE training data.
MatrixF corpus_residuals(const Model& model, const std::vector<std::string>& lines, int layer);

}  // namespace featurescope

#endif
