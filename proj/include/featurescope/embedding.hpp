#ifndef FEATURESCOPE_EMBEDDING_HPP
#define FEATURESCOPE_EMBEDDING_HPP

#include "featurescope/common.hpp"
#include "featurescope/matrix_io.hpp"

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace featurescope {

/// Maps text to a fixed-width vector. Implementations must be thread-safe.
class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual std::string name() const = 0;
    virtual int dimension() const = 0;
    virtual bool deterministic() const = 0;
    /// Throws invalid_argument on empty text, retryable on service failures.
    virtual VectorF embed(std::string_view text) const = 0;
};

/// Seeded character n-gram hashing embedder (n = 3..5 over "<word>", plus the
/// whole word), signed-hashed into `dimension` buckets and L2-normalized.
/// Bundled stop words are skipped unless the text consists only of them.
class HashingEmbedder final : public TextEmbedder {
public:
    static constexpr int kDefaultDimension = 384;
    static constexpr std::uint64_t kDefaultSeed = 0x5AE5C0DEull;

    explicit HashingEmbedder(int dimension = kDefaultDimension, std::uint64_t seed = kDefaultSeed);

    std::string name() const override { return "hashing-ngram"; }
    int dimension() const override { return dimension_; }
    bool deterministic() const override { return true; }
    VectorF embed(std::string_view text) const override;

private:
    int dimension_;
    std::uint64_t seed_;
};

struct RemoteServiceConfig {
    std::string base_url;          // scheme://host[:port]
    std::string path;              // e.g. /v1/embeddings
    std::string model;
    std::string api_key_env;       // name of the environment variable holding the key
    int timeout_seconds = 30;
};

/// HTTP JSON client for an embeddings endpoint that accepts
/// {"model", "input"} and answers {"data": [{"embedding": [...]}]}.
class RemoteEmbedder final : public TextEmbedder {
public:
    RemoteEmbedder(RemoteServiceConfig config, int dimension);

    std::string name() const override { return "remote:" + config_.model; }
    int dimension() const override { return dimension_; }
    bool deterministic() const override { return false; }
    VectorF embed(std::string_view text) const override;

private:
    RemoteServiceConfig config_;
    int dimension_;
};

/// Builds an embedder by name: "hashing" (default) or "remote". The remote
/// client reads FEATURESCOPE_EMBED_URL, FEATURESCOPE_EMBED_MODEL,
/// FEATURESCOPE_EMBED_DIM and the key from FEATURESCOPE_EMBED_API_KEY.
std::shared_ptr<const TextEmbedder> make_embedder(const std::string& name);

template <typename DerivedA, typename DerivedB>
double cosine_similarity(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
    if (a.size() != b.size())
        fail(ErrorCode::shape_mismatch, "cosine: dimension mismatch",
             std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    const double na = a.template cast<double>().norm();
    const double nb = b.template cast<double>().norm();
    if (na == 0.0 || nb == 0.0) fail(ErrorCode::invalid_argument, "cosine: zero vector");
    return a.template cast<double>().dot(b.template cast<double>()) / (na * nb);
}

/// One SAE's explanation embeddings (one row per feature).
class EmbeddingMatrix {
public:
    EmbeddingMatrix(std::string sae_id, int layer_index, MatrixF rows);
    EmbeddingMatrix(std::string sae_id, int layer_index, std::shared_ptr<const MappedMatrix> mapped);

    const std::string& sae_id() const { return sae_id_; }
    int layer_index() const { return layer_index_; }
    Eigen::Map<const MatrixF> rows() const;
    Eigen::Index n_features() const { return rows().rows(); }
    Eigen::Index dimension() const { return rows().cols(); }
    const VectorD& row_norms() const { return norms_; }

private:
    void finish();

    std::string sae_id_;
    int layer_index_;
    std::shared_ptr<const MappedMatrix> mapped_;
    MatrixF owned_;
    VectorD norms_;
};

struct SimilarityHit {
    std::string sae_id;
    int feature_id = 0;
    double score = 0.0;
};

struct SimilarityHistogram {
    std::vector<double> edges;  // n_bins + 1, uniform over [min, max]
    std::vector<int> counts;    // n_bins
    int n_scored = 0;
};

/// Exact cosine retrieval over all loaded SAEs. Immutable once built.
class EmbeddingStore {
public:
    void add(EmbeddingMatrix matrix);

    bool empty() const { return matrices_.empty(); }
    std::size_t total_features() const;
    const std::vector<EmbeddingMatrix>& matrices() const { return matrices_; }
    const EmbeddingMatrix* find(const std::string& sae_id) const;
    int dimension() const;

    /// min(K, N) hits sorted by score desc, ties by (sae_id, feature_id) asc.
    /// `scope` restricts the scan to one SAE.
    std::vector<SimilarityHit> top_k_features(const VectorF& query, std::size_t k,
                                              const std::optional<std::string>& scope = std::nullopt) const;

    SimilarityHistogram similarity_histogram(const VectorF& query, std::size_t n_top = 2000, int n_bins = 20) const;

private:
    std::vector<EmbeddingMatrix> matrices_;  // kept sorted by sae_id
};

}  // namespace featurescope

#endif
