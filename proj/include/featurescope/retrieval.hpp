#ifndef FEATURESCOPE_RETRIEVAL_HPP
#define FEATURESCOPE_RETRIEVAL_HPP

#include "featurescope/embedding.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace featurescope {

inline const std::vector<std::size_t> kDefaultKSet = {10, 100, 1000};

struct Rewrite {
    std::string text;
    bool fell_back = false;  // remote rewriter failed; text is the raw query
};

class QueryRewriter {
public:
    virtual ~QueryRewriter() = default;
    virtual std::string name() const = 0;
    virtual Rewrite rewrite(const std::string& raw_text) const = 0;
};

/// Synonym lexicon: lowercase term -> expansion terms.
using Lexicon = std::map<std::string, std::vector<std::string>>;

/// Parses "term: a, b, c" lines ('#' comments allowed).
Lexicon parse_lexicon(const std::string& text);
const Lexicon& bundled_lexicon();

/// Deterministic template rewriter:
///   "words related to {X} and its associations with {a, b}"
/// or "words related to {X}" when no word of X is in the lexicon. Text that
/// already has the template form is returned unchanged.
class LexiconRewriter final : public QueryRewriter {
public:
    explicit LexiconRewriter(Lexicon lexicon = bundled_lexicon());
    std::string name() const override { return "lexicon"; }
    Rewrite rewrite(const std::string& raw_text) const override;

private:
    Lexicon lexicon_;
};

/// Chat-completions style HTTP client. Any failure yields the raw text with
/// `fell_back` set.
class RemoteRewriter final : public QueryRewriter {
public:
    static constexpr const char* kDefaultPrompt =
        "Rewrite the concept query '{query}' into a short description of the words and associations "
        "a language-model feature for this concept would respond to. Answer with the description only.";

    RemoteRewriter(RemoteServiceConfig config, std::string prompt_template = kDefaultPrompt);
    std::string name() const override { return "remote:" + config_.model; }
    Rewrite rewrite(const std::string& raw_text) const override;

private:
    RemoteServiceConfig config_;
    std::string prompt_template_;
};

std::shared_ptr<const QueryRewriter> make_rewriter(const std::string& name);

/// Per-SAE membership counts in the global Top-K for each K of the K set.
struct LayerCounts {
    std::string sae_id;
    int layer_index = 0;
    std::vector<int> counts;  // aligned with the K set
};

struct SaeRanking {
    std::string sae_id;
    int layer_index = 0;
    std::vector<int> counts;  // c_K
    std::vector<int> ranks;   // Rank(SAE, Top-K), competition ranking
    double avg_rank = 0.0;
    int order = 0;            // position in the final recommendation, 0-based
};

std::vector<LayerCounts> layer_relevance_distribution(const EmbeddingStore& store, const VectorF& query,
                                                      const std::vector<std::size_t>& k_set = kDefaultKSet);

/// Competition ranks per K from counts, the mean rank over K, and the final
/// ordering by (avg_rank, layer_index, sae_id).
std::vector<SaeRanking> rank_from_counts(const std::vector<LayerCounts>& counts);

std::vector<SaeRanking> rank_saes(const EmbeddingStore& store, const VectorF& query,
                                  const std::vector<std::size_t>& k_set = kDefaultKSet);

/// Query state shared by the service and the CLI report.
struct ConceptQuery {
    std::string raw_text;
    std::optional<std::string> optimized_text;
    std::string active_text;
    VectorF embedding;
};

}  // namespace featurescope

#endif
