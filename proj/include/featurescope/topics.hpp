#ifndef FEATURESCOPE_TOPICS_HPP
#define FEATURESCOPE_TOPICS_HPP

#include <map>
#include <set>
#include <string>
#include <vector>

namespace featurescope {

using StopWords = std::set<std::string>;

/// One word per line, '#' comments.
StopWords parse_stop_words(const std::string& text);
const StopWords& bundled_stop_words();

struct TopicTerm {
    std::string term;
    double score = 0.0;
};

/// Class-based TF-IDF over clusters, each given as the explanation texts of
/// its members:
///   TF(t, c) = f(t, c) / sum_t' f(t', c)
///   IDF(t)   = ln(|C| / |{c : t in c}|)
/// Stop words are removed before counting. Throws on an empty cluster.
std::vector<std::map<std::string, double>> ctfidf_scores(const std::vector<std::vector<std::string>>& clusters,
                                                         const StopWords& stop_words = bundled_stop_words());

/// Highest `top_n` terms per cluster by score, ties alphabetical.
std::vector<std::vector<TopicTerm>> extract_topics(const std::vector<std::vector<std::string>>& clusters,
                                                   const StopWords& stop_words = bundled_stop_words(), int top_n = 5);

}  // namespace featurescope

#endif
