#include "featurescope/retrieval.hpp"

#include "featurescope/assets.hpp"
#include "featurescope/tokenizer.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>
#include <sstream>

namespace featurescope {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

Lexicon parse_lexicon(const std::string& text) {
    Lexicon lex;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        std::string key = trim(line.substr(0, colon));
        std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
        std::vector<std::string> expansions;
        std::istringstream rest(line.substr(colon + 1));
        std::string item;
        while (std::getline(rest, item, ',')) {
            item = trim(item);
            if (!item.empty()) expansions.push_back(item);
        }
        if (!key.empty() && !expansions.empty()) lex[key] = std::move(expansions);
    }
    return lex;
}

const Lexicon& bundled_lexicon() {
    static const Lexicon lex = parse_lexicon(std::string(assets::kLexicon));
    return lex;
}

LexiconRewriter::LexiconRewriter(Lexicon lexicon) : lexicon_(std::move(lexicon)) {}

Rewrite LexiconRewriter::rewrite(const std::string& raw_text) const {
    const std::string term = trim(raw_text);
    if (term.empty()) fail(ErrorCode::invalid_argument, "query text is empty");

    std::vector<std::string> expansions;
    std::set<std::string> seen;
    auto take = [&](const std::vector<std::string>& items) {
        for (const auto& e : items)
            if (seen.insert(e).second) expansions.push_back(e);
    };
    std::string lowered = term;
    std::transform(lowered.begin(), lowered.end(), lowered.begin(), [](unsigned char c) { return std::tolower(c); });
    // already a rewrite: suggesting it again would only nest the template
    if (lowered.rfind("words related to ", 0) == 0) return {term, false};
    if (auto it = lexicon_.find(lowered); it != lexicon_.end()) {
        take(it->second);
    } else {
        for (const auto& w : split_words(term))
            if (auto wit = lexicon_.find(w); wit != lexicon_.end()) take(wit->second);
    }

    std::string out = "words related to " + term;
    if (!expansions.empty()) {
        out += " and its associations with ";
        for (std::size_t i = 0; i < expansions.size(); ++i) {
            if (i > 0) out += ", ";
            out += expansions[i];
        }
    }
    return {out, false};
}

std::shared_ptr<const QueryRewriter> make_rewriter(const std::string& name) {
    if (name.empty() || name == "lexicon") return std::make_shared<LexiconRewriter>();
    if (name == "remote") {
        auto env = [](const char* key, const char* fallback) {
            const char* v = std::getenv(key);
            return std::string(v != nullptr ? v : fallback);
        };
        RemoteServiceConfig cfg;
        cfg.base_url = env("FEATURESCOPE_REWRITE_URL", "https://api.openai.com");
        cfg.path = env("FEATURESCOPE_REWRITE_PATH", "/v1/chat/completions");
        cfg.model = env("FEATURESCOPE_REWRITE_MODEL", "gpt-4o");
        cfg.api_key_env = "FEATURESCOPE_REWRITE_API_KEY";
        return std::make_shared<RemoteRewriter>(cfg);
    }
    fail(ErrorCode::invalid_argument, "unknown rewriter", name);
}

std::vector<LayerCounts> layer_relevance_distribution(const EmbeddingStore& store, const VectorF& query,
                                                      const std::vector<std::size_t>& k_set) {
    if (store.empty()) fail(ErrorCode::unavailable, "embedding store is empty");
    if (k_set.empty()) fail(ErrorCode::invalid_argument, "K set is empty");
    const std::size_t k_max = *std::max_element(k_set.begin(), k_set.end());
    const auto hits = store.top_k_features(query, k_max);

    std::vector<LayerCounts> out;
    for (const auto& m : store.matrices())
        out.push_back({m.sae_id(), m.layer_index(), std::vector<int>(k_set.size(), 0)});

    for (std::size_t ki = 0; ki < k_set.size(); ++ki) {
        const std::size_t n = std::min(k_set[ki], hits.size());
        for (std::size_t i = 0; i < n; ++i) {
            for (auto& row : out) {
                if (row.sae_id == hits[i].sae_id) {
                    ++row.counts[ki];
                    break;
                }
            }
        }
    }
    return out;
}

std::vector<SaeRanking> rank_from_counts(const std::vector<LayerCounts>& counts) {
    if (counts.empty()) fail(ErrorCode::unavailable, "no SAEs to rank");
    const std::size_t n_k = counts.front().counts.size();
    std::vector<SaeRanking> out;
    for (const auto& row : counts) {
        if (row.counts.size() != n_k) fail(ErrorCode::invalid_argument, "ragged count table");
        SaeRanking r;
        r.sae_id = row.sae_id;
        r.layer_index = row.layer_index;
        r.counts = row.counts;
        out.push_back(std::move(r));
    }
    for (std::size_t ki = 0; ki < n_k; ++ki) {
        for (auto& r : out) {
            int better = 0;
            for (const auto& other : counts)
                if (other.counts[ki] > r.counts[ki]) ++better;
            r.ranks.push_back(better + 1);
        }
    }
    for (auto& r : out) {
        double sum = 0.0;
        for (int rank : r.ranks) sum += rank;
        r.avg_rank = n_k == 0 ? 0.0 : sum / static_cast<double>(n_k);
    }
    std::stable_sort(out.begin(), out.end(), [](const SaeRanking& a, const SaeRanking& b) {
        if (a.avg_rank != b.avg_rank) return a.avg_rank < b.avg_rank;
        if (a.layer_index != b.layer_index) return a.layer_index < b.layer_index;
        return a.sae_id < b.sae_id;
    });
    for (std::size_t i = 0; i < out.size(); ++i) out[i].order = static_cast<int>(i);
    return out;
}

std::vector<SaeRanking> rank_saes(const EmbeddingStore& store, const VectorF& query,
                                  const std::vector<std::size_t>& k_set) {
    return rank_from_counts(layer_relevance_distribution(store, query, k_set));
}

}  // namespace featurescope
