#include "featurescope/topics.hpp"

#include "featurescope/assets.hpp"
#include "featurescope/common.hpp"
#include "featurescope/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace featurescope {

StopWords parse_stop_words(const std::string& text) {
    StopWords words;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        for (auto& w : split_words(line)) words.insert(std::move(w));
    }
    return words;
}

const StopWords& bundled_stop_words() {
    static const StopWords words = parse_stop_words(std::string(assets::kStopWords));
    return words;
}

namespace {

bool is_number(const std::string& w) {
    return std::all_of(w.begin(), w.end(), [](unsigned char c) { return std::isdigit(c) != 0; });
}

}  // namespace

std::vector<std::map<std::string, double>> ctfidf_scores(const std::vector<std::vector<std::string>>& clusters,
                                                         const StopWords& stop_words) {
    std::vector<std::map<std::string, int>> freq(clusters.size());
    std::map<std::string, int> doc_freq;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        if (clusters[c].empty()) fail(ErrorCode::invalid_argument, "cluster has no explanations", std::to_string(c));
        for (const auto& text : clusters[c])
            for (const auto& w : split_words(text))
                if (!stop_words.contains(w) && !is_number(w)) ++freq[c][w];
        for (const auto& [term, count] : freq[c]) ++doc_freq[term];
    }

    const double n_clusters = static_cast<double>(clusters.size());
    std::vector<std::map<std::string, double>> scores(clusters.size());
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        double total = 0.0;
        for (const auto& [term, count] : freq[c]) total += count;
        for (const auto& [term, count] : freq[c])
            scores[c][term] = count / total * std::log(n_clusters / doc_freq[term]);
    }
    return scores;
}

std::vector<std::vector<TopicTerm>> extract_topics(const std::vector<std::vector<std::string>>& clusters,
                                                   const StopWords& stop_words, int top_n) {
    if (top_n < 0) fail(ErrorCode::invalid_argument, "top_n must be >= 0");
    const auto scores = ctfidf_scores(clusters, stop_words);
    std::vector<std::vector<TopicTerm>> out(scores.size());
    for (std::size_t c = 0; c < scores.size(); ++c) {
        std::vector<TopicTerm> terms;
        for (const auto& [term, score] : scores[c]) terms.push_back({term, score});
        const auto n = std::min(terms.size(), static_cast<std::size_t>(top_n));
        std::partial_sort(terms.begin(), terms.begin() + static_cast<std::ptrdiff_t>(n), terms.end(),
                          [](const TopicTerm& a, const TopicTerm& b) {
                              return a.score != b.score ? a.score > b.score : a.term < b.term;
                          });
        terms.resize(n);
        out[c] = std::move(terms);
    }
    return out;
}

}  // namespace featurescope
