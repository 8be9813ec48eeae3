#include "featurescope/interpretation.hpp"

#include <algorithm>
#include <mutex>
#include <numeric>

namespace featurescope {

void SegmentRecord::refresh_max() {
    if (activations.empty()) fail(ErrorCode::data_error, "segment has no activations", std::to_string(segment_id));
    const auto it = std::max_element(activations.begin(), activations.end());
    max_index = static_cast<int>(it - activations.begin());
    max_activation = *it;
}

void SegmentRecord::validate() const {
    const std::string where = "feature " + std::to_string(feature_id) + " segment " + std::to_string(segment_id);
    if (tokens.empty()) fail(ErrorCode::data_error, "segment has no tokens", where);
    if (activations.size() != tokens.size() || token_ids.size() != tokens.size())
        fail(ErrorCode::data_error, "segment token, id and activation lengths differ", where);
    if (max_index < 0 || max_index >= static_cast<int>(activations.size()))
        fail(ErrorCode::data_error, "segment max index out of range", where);
    const float peak = *std::max_element(activations.begin(), activations.end());
    if (activations[static_cast<std::size_t>(max_index)] != max_activation || max_activation != peak)
        fail(ErrorCode::data_error, "segment max statistics disagree with its activations", where);
}

namespace {

bool stronger(const SegmentRecord& a, const SegmentRecord& b) {
    return a.max_activation != b.max_activation ? a.max_activation > b.max_activation : a.segment_id < b.segment_id;
}

}  // namespace

std::vector<SegmentRecord> stratified_sample(const std::vector<SegmentRecord>& segments, int n_bins, int per_bin,
                                             std::uint64_t seed) {
    if (n_bins < 1 || per_bin < 1) fail(ErrorCode::invalid_argument, "n_bins and per_bin must be >= 1");
    std::vector<SegmentRecord> out;
    if (segments.size() <= static_cast<std::size_t>(n_bins) * static_cast<std::size_t>(per_bin)) {
        out = segments;
        std::sort(out.begin(), out.end(), stronger);
        return out;
    }

    // ascending by strength: the last element is the global maximum
    std::vector<std::size_t> order(segments.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return stronger(segments[b], segments[a]); });

    Rng rng(seed);
    const std::size_t n = order.size();
    for (int bin = 0; bin < n_bins; ++bin) {
        const std::size_t lo = n * static_cast<std::size_t>(bin) / static_cast<std::size_t>(n_bins);
        const std::size_t hi = n * static_cast<std::size_t>(bin + 1) / static_cast<std::size_t>(n_bins);
        std::vector<std::size_t> pool(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                      order.begin() + static_cast<std::ptrdiff_t>(hi));
        std::size_t start = 0;
        if (bin == n_bins - 1 && !pool.empty()) {
            std::swap(pool.front(), pool.back());
            start = 1;
        }
        const std::size_t take = std::min(pool.size(), static_cast<std::size_t>(per_bin));
        for (std::size_t i = start; i < take; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
            std::swap(pool[i], pool[j]);
        }
        for (std::size_t i = 0; i < take; ++i) out.push_back(segments[pool[i]]);
    }
    std::sort(out.begin(), out.end(), stronger);
    return out;
}

const char* to_string(Region region) {
    switch (region) {
        case Region::diagonal: return "diagonal";
        case Region::high_act_low_sim: return "high_act_low_sim";
        case Region::low_act_high_sim: return "low_act_high_sim";
    }
    return "diagonal";
}

VectorF SegmentEmbeddingCache::get_or_compute(int feature_id, int segment_id, const std::string& text,
                                              const TextEmbedder& embedder) {
    const std::pair<int, int> key{feature_id, segment_id};
    {
        std::shared_lock lock(mutex_);
        if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    }
    VectorF v = embedder.embed(text);
    std::unique_lock lock(mutex_);
    return entries_.try_emplace(key, std::move(v)).first->second;
}

std::size_t SegmentEmbeddingCache::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

double rank_discrepancy(const MatrixCell& cell, std::size_t n) {
    if (n == 0) return 0.0;
    return std::abs(cell.activation_rank - cell.similarity_rank) / static_cast<double>(n);
}

namespace {

Region region_of(const MatrixCell& cell, std::size_t n, double theta) {
    if (rank_discrepancy(cell, n) <= theta) return Region::diagonal;
    return cell.similarity_rank > cell.activation_rank ? Region::high_act_low_sim : Region::low_act_high_sim;
}

}  // namespace

SimilarityMatrix activation_similarity_matrix(const VectorF& explanation_embedding,
                                              const std::vector<SegmentRecord>& segments,
                                              const TextEmbedder& embedder, double theta,
                                              SegmentEmbeddingCache* cache) {
    if (!(theta >= 0.0)) fail(ErrorCode::invalid_argument, "theta must be >= 0");
    if (explanation_embedding.size() == 0) fail(ErrorCode::invalid_argument, "feature has no explanation embedding");
    SimilarityMatrix out;
    for (const auto& seg : segments) {
        MatrixCell cell;
        cell.segment_id = seg.segment_id;
        cell.max_activation = seg.max_activation;
        try {
            const VectorF e = cache != nullptr ? cache->get_or_compute(seg.feature_id, seg.segment_id, seg.text, embedder)
                                               : embedder.embed(seg.text);
            cell.similarity = cosine_similarity(e, explanation_embedding);
        } catch (const Error& err) {
            out.warnings.push_back("segment " + std::to_string(seg.segment_id) + " skipped: " + err.what());
            continue;
        }
        out.cells.push_back(cell);
    }

    const std::size_t n = out.cells.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto& cells = out.cells;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return cells[a].similarity != cells[b].similarity ? cells[a].similarity > cells[b].similarity
                                                          : cells[a].segment_id < cells[b].segment_id;
    });
    for (std::size_t r = 0; r < n; ++r) cells[order[r]].similarity_rank = static_cast<int>(r + 1);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return cells[a].max_activation != cells[b].max_activation ? cells[a].max_activation > cells[b].max_activation
                                                                  : cells[a].segment_id < cells[b].segment_id;
    });
    for (std::size_t r = 0; r < n; ++r) cells[order[r]].activation_rank = static_cast<int>(r + 1);
    for (auto& c : cells) c.region = region_of(c, n, theta);
    return out;
}

AnomalyReport detect_anomalies(const std::vector<MatrixCell>& cells, double theta) {
    if (!(theta >= 0.0)) fail(ErrorCode::invalid_argument, "theta must be >= 0");
    AnomalyReport report;
    report.theta = theta;
    for (const auto& c : cells) {
        const double d = rank_discrepancy(c, cells.size());
        if (d > theta) report.anomalies.push_back({c.segment_id, region_of(c, cells.size(), theta), d});
    }
    std::sort(report.anomalies.begin(), report.anomalies.end(), [](const Anomaly& a, const Anomaly& b) {
        return a.discrepancy != b.discrepancy ? a.discrepancy > b.discrepancy : a.segment_id < b.segment_id;
    });
    return report;
}

std::vector<TokenStat> max_activation_token_stats(const std::vector<SegmentRecord>& segments,
                                                  const std::optional<std::set<int>>& selection) {
    std::map<std::string, TokenStat> by_token;
    for (const auto& seg : segments) {
        if (selection && !selection->contains(seg.segment_id)) continue;
        if (seg.tokens.empty()) continue;
        const auto& tok = seg.tokens[static_cast<std::size_t>(seg.max_index)];
        auto& stat = by_token[tok];
        if (stat.count == 0) {
            stat.token = tok;
            stat.max_activation = seg.max_activation;
        }
        ++stat.count;
        stat.max_activation = std::max(stat.max_activation, seg.max_activation);
    }
    std::vector<TokenStat> out;
    for (auto& [tok, stat] : by_token) out.push_back(std::move(stat));
    std::sort(out.begin(), out.end(), [](const TokenStat& a, const TokenStat& b) {
        if (a.count != b.count) return a.count > b.count;
        if (a.max_activation != b.max_activation) return a.max_activation > b.max_activation;
        return a.token < b.token;
    });
    return out;
}

}  // namespace featurescope
