#ifndef FEATURESCOPE_INTERPRETATION_HPP
#define FEATURESCOPE_INTERPRETATION_HPP

#include "featurescope/embedding.hpp"
#include "featurescope/tokenizer.hpp"

#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

namespace featurescope {

/// A text segment annotated with one feature's per-token activations.
struct SegmentRecord {
    int feature_id = 0;
    int segment_id = 0;
    std::vector<std::string> tokens;
    std::vector<TokenId> token_ids;
    std::vector<float> activations;
    float max_activation = 0.0f;
    int max_index = 0;
    std::string text;

    /// Recomputes the max statistics from `activations` (first maximum wins).
    void refresh_max();
    /// Throws data_error on inconsistent lengths or max statistics.
    void validate() const;
};

/// Equal-count quantile bins over max activation; `per_bin` seeded draws
/// per bin. The global maximum segment is always part of the top bin's
/// draw. Returns every segment when there are at most n_bins * per_bin.
/// Output is ordered by max activation desc, then segment id.
std::vector<SegmentRecord> stratified_sample(const std::vector<SegmentRecord>& segments, int n_bins = 8,
                                             int per_bin = 5, std::uint64_t seed = 0);

enum class Region { diagonal, high_act_low_sim, low_act_high_sim };

const char* to_string(Region region);

struct MatrixCell {
    int segment_id = 0;
    int similarity_rank = 0;  // x, 1 = most similar
    int activation_rank = 0;  // y, 1 = strongest
    double similarity = 0.0;
    float max_activation = 0.0f;
    Region region = Region::diagonal;
};

/// Thread-safe read-through cache of segment text embeddings keyed by
/// (feature id, segment id).
class SegmentEmbeddingCache {
public:
    VectorF get_or_compute(int feature_id, int segment_id, const std::string& text, const TextEmbedder& embedder);
    std::size_t size() const;

private:
    mutable std::shared_mutex mutex_;
    std::map<std::pair<int, int>, VectorF> entries_;
};

struct SimilarityMatrix {
    std::vector<MatrixCell> cells;  // in input order
    std::vector<std::string> warnings;
};

/// Rank discrepancy |activation_rank - similarity_rank| / n.
double rank_discrepancy(const MatrixCell& cell, std::size_t n);

/// Similarity of every segment text to the explanation embedding, the two
/// descending rankings (ties by segment id) and region tags under `theta`.
/// Segments whose text cannot be embedded are skipped with a warning.
SimilarityMatrix activation_similarity_matrix(const VectorF& explanation_embedding,
                                              const std::vector<SegmentRecord>& segments,
                                              const TextEmbedder& embedder, double theta = 0.3,
                                              SegmentEmbeddingCache* cache = nullptr);

struct Anomaly {
    int segment_id = 0;
    Region region = Region::diagonal;
    double discrepancy = 0.0;
};

struct AnomalyReport {
    double theta = 0.3;
    std::vector<Anomaly> anomalies;  // discrepancy desc, then segment id
};

AnomalyReport detect_anomalies(const std::vector<MatrixCell>& cells, double theta = 0.3);

struct TokenStat {
    std::string token;
    int count = 0;
    float max_activation = 0.0f;
};

/// Histogram of each segment's max-activation token. `selection` restricts
/// the segments considered (an empty selection gives empty stats). Sorted
/// by count desc, then max activation desc, then token.
std::vector<TokenStat> max_activation_token_stats(const std::vector<SegmentRecord>& segments,
                                                  const std::optional<std::set<int>>& selection = std::nullopt);

}  // namespace featurescope

#endif
