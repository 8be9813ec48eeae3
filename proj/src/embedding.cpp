#include "featurescope/embedding.hpp"

#include "featurescope/tokenizer.hpp"
#include "featurescope/topics.hpp"

#include <algorithm>
#include <cstdlib>

namespace featurescope {

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ull ^ (seed * 0x100000001b3ull);
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    // final avalanche so that low bits are usable as a bucket index
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
    return h;
}

}  // namespace

HashingEmbedder::HashingEmbedder(int dimension, std::uint64_t seed) : dimension_(dimension), seed_(seed) {
    if (dimension < 1) fail(ErrorCode::invalid_argument, "embedding dimension must be >= 1");
}

VectorF HashingEmbedder::embed(std::string_view text) const {
    if (text.empty()) fail(ErrorCode::invalid_argument, "cannot embed empty text");
    auto words = split_words(text);
    if (words.empty()) fail(ErrorCode::invalid_argument, "text has no words to embed");
    // stop words only count when the text has nothing else
    std::vector<std::string> content;
    for (const auto& w : words)
        if (!bundled_stop_words().contains(w)) content.push_back(w);
    if (!content.empty()) words = std::move(content);

    VectorD acc = VectorD::Zero(dimension_);
    auto add = [&](std::string_view piece, double weight) {
        const std::uint64_t h = fnv1a(piece, seed_);
        const auto bucket = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dimension_));
        acc(bucket) += (h >> 63) != 0 ? -weight : weight;
    };
    for (const auto& w : words) {
        add("w:" + w, 1.0);
        const std::string padded = "<" + w + ">";
        for (std::size_t n = 3; n <= 5; ++n) {
            if (padded.size() < n) break;
            for (std::size_t i = 0; i + n <= padded.size(); ++i) add(std::string_view(padded).substr(i, n), 1.0);
        }
    }
    const double norm = acc.norm();
    if (norm == 0.0) {
        // every bucket cancelled; fall back to an indicator of the first word
        acc(static_cast<Eigen::Index>(fnv1a(words.front(), seed_ + 1) % static_cast<std::uint64_t>(dimension_))) = 1.0;
        return acc.cast<float>();
    }
    return (acc / norm).cast<float>();
}

std::shared_ptr<const TextEmbedder> make_embedder(const std::string& name) {
    if (name.empty() || name == "hashing" || name == "hashing-ngram") return std::make_shared<HashingEmbedder>();
    if (name == "remote") {
        auto env = [](const char* key, const char* fallback) {
            const char* v = std::getenv(key);
            return std::string(v != nullptr ? v : fallback);
        };
        RemoteServiceConfig cfg;
        cfg.base_url = env("FEATURESCOPE_EMBED_URL", "https://api.openai.com");
        cfg.path = env("FEATURESCOPE_EMBED_PATH", "/v1/embeddings");
        cfg.model = env("FEATURESCOPE_EMBED_MODEL", "text-embedding-3-large");
        cfg.api_key_env = "FEATURESCOPE_EMBED_API_KEY";
        const int dim = std::atoi(env("FEATURESCOPE_EMBED_DIM", "3072").c_str());
        return std::make_shared<RemoteEmbedder>(cfg, dim);
    }
    fail(ErrorCode::invalid_argument, "unknown embedder", name);
}

// ---- EmbeddingMatrix ------------------------------------------------------

EmbeddingMatrix::EmbeddingMatrix(std::string sae_id, int layer_index, MatrixF rows)
    : sae_id_(std::move(sae_id)), layer_index_(layer_index), owned_(std::move(rows)) {
    finish();
}

EmbeddingMatrix::EmbeddingMatrix(std::string sae_id, int layer_index, std::shared_ptr<const MappedMatrix> mapped)
    : sae_id_(std::move(sae_id)), layer_index_(layer_index), mapped_(std::move(mapped)) {
    finish();
}

Eigen::Map<const MatrixF> EmbeddingMatrix::rows() const {
    if (mapped_) return mapped_->view();
    return {owned_.data(), owned_.rows(), owned_.cols()};
}

void EmbeddingMatrix::finish() {
    const auto m = rows();
    if (!m.allFinite()) fail(ErrorCode::data_error, "embedding matrix has non-finite values", sae_id_);
    norms_ = m.cast<double>().rowwise().norm();
    for (Eigen::Index r = 0; r < norms_.size(); ++r) {
        if (norms_(r) == 0.0)
            fail(ErrorCode::data_error, "embedding matrix has a zero row", sae_id_ + " row " + std::to_string(r));
    }
}

// ---- EmbeddingStore -------------------------------------------------------

void EmbeddingStore::add(EmbeddingMatrix matrix) {
    if (!matrices_.empty() && matrix.dimension() != matrices_.front().dimension())
        fail(ErrorCode::shape_mismatch, "embedding dimension differs between SAEs", matrix.sae_id());
    if (find(matrix.sae_id()) != nullptr) fail(ErrorCode::data_error, "duplicate SAE id in store", matrix.sae_id());
    auto pos = std::lower_bound(matrices_.begin(), matrices_.end(), matrix.sae_id(),
                                [](const EmbeddingMatrix& m, const std::string& id) { return m.sae_id() < id; });
    matrices_.insert(pos, std::move(matrix));
}

std::size_t EmbeddingStore::total_features() const {
    std::size_t n = 0;
    for (const auto& m : matrices_) n += static_cast<std::size_t>(m.n_features());
    return n;
}

const EmbeddingMatrix* EmbeddingStore::find(const std::string& sae_id) const {
    for (const auto& m : matrices_)
        if (m.sae_id() == sae_id) return &m;
    return nullptr;
}

int EmbeddingStore::dimension() const {
    return matrices_.empty() ? 0 : static_cast<int>(matrices_.front().dimension());
}

std::vector<SimilarityHit> EmbeddingStore::top_k_features(const VectorF& query, std::size_t k,
                                                          const std::optional<std::string>& scope) const {
    if (matrices_.empty()) fail(ErrorCode::unavailable, "embedding store is empty");
    if (k < 1) fail(ErrorCode::invalid_argument, "K must be >= 1");
    if (query.size() != dimension())
        fail(ErrorCode::shape_mismatch, "query dimension mismatch",
             std::to_string(query.size()) + " vs " + std::to_string(dimension()));
    const VectorD q = query.cast<double>();
    const double qn = q.norm();
    if (qn == 0.0) fail(ErrorCode::invalid_argument, "query vector is zero");

    struct Candidate {
        double score;
        std::size_t matrix;
        int feature;
    };
    std::vector<Candidate> all;
    for (std::size_t mi = 0; mi < matrices_.size(); ++mi) {
        const auto& m = matrices_[mi];
        if (scope && m.sae_id() != *scope) continue;
        const VectorD scores = (m.rows().cast<double>() * q).cwiseQuotient(m.row_norms()) / qn;
        for (Eigen::Index f = 0; f < scores.size(); ++f) all.push_back({scores(f), mi, static_cast<int>(f)});
    }
    if (scope && all.empty()) fail(ErrorCode::not_found, "unknown SAE id", *scope);

    // matrices_ is sorted by sae_id, so the matrix index orders ties by id
    auto better = [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.matrix != b.matrix) return a.matrix < b.matrix;
        return a.feature < b.feature;
    };
    const std::size_t n = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), better);

    std::vector<SimilarityHit> hits;
    hits.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        hits.push_back({matrices_[all[i].matrix].sae_id(), all[i].feature, all[i].score});
    return hits;
}

SimilarityHistogram EmbeddingStore::similarity_histogram(const VectorF& query, std::size_t n_top, int n_bins) const {
    if (n_bins < 1) fail(ErrorCode::invalid_argument, "n_bins must be >= 1");
    const auto hits = top_k_features(query, std::max<std::size_t>(n_top, 1));
    SimilarityHistogram h;
    h.n_scored = static_cast<int>(hits.size());
    h.counts.assign(static_cast<std::size_t>(n_bins), 0);
    const double hi = hits.front().score;
    const double lo = hits.back().score;
    const double width = (hi - lo) / n_bins;
    for (int b = 0; b <= n_bins; ++b) h.edges.push_back(b == n_bins ? hi : lo + width * b);
    for (const auto& hit : hits) {
        int bin = 0;
        if (width > 0.0) bin = std::min(n_bins - 1, static_cast<int>((hit.score - lo) / width));
        ++h.counts[static_cast<std::size_t>(bin)];
    }
    return h;
}

}  // namespace featurescope
