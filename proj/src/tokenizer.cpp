#include "featurescope/tokenizer.hpp"

#include "featurescope/common.hpp"
#include "featurescope/matrix_io.hpp"

#include <cctype>
#include <sstream>

namespace featurescope {

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    for (char c : text) {
        const auto uc = static_cast<unsigned char>(c);
        if (std::isalnum(uc) || c == '-' || c == '\'') {
            current.push_back(static_cast<char>(std::tolower(uc)));
        } else if (!current.empty()) {
            words.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) words.push_back(std::move(current));
    // Strip leading/trailing hyphens and apostrophes left by punctuation.
    std::vector<std::string> cleaned;
    for (auto& w : words) {
        std::size_t b = 0, e = w.size();
        while (b < e && (w[b] == '-' || w[b] == '\'')) ++b;
        while (e > b && (w[e - 1] == '-' || w[e - 1] == '\'')) --e;
        if (e > b) cleaned.push_back(w.substr(b, e - b));
    }
    return cleaned;
}

Tokenizer::Tokenizer(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {
    for (std::size_t i = 0; i < vocab_.size(); ++i) {
        if (!index_.emplace(vocab_[i], static_cast<TokenId>(i)).second)
            fail(ErrorCode::data_error, "duplicate vocabulary entry", vocab_[i]);
    }
    auto it = index_.find(std::string(kUnknown));
    if (it == index_.end()) fail(ErrorCode::data_error, "vocabulary lacks <unk>");
    unknown_ = it->second;
}

Tokenizer Tokenizer::load(const std::filesystem::path& vocab_file) {
    std::istringstream in(read_text_file(vocab_file));
    std::vector<std::string> vocab;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) vocab.push_back(line);
    }
    return Tokenizer(std::move(vocab));
}

void Tokenizer::save(const std::filesystem::path& vocab_file) const {
    std::string out;
    for (const auto& t : vocab_) out += t + "\n";
    write_text_file(vocab_file, out);
}

Tokenized Tokenizer::encode(std::string_view text) const {
    Tokenized result;
    result.pieces = split_words(text);
    if (result.pieces.empty()) fail(ErrorCode::invalid_argument, "text contains no tokens");
    result.ids.reserve(result.pieces.size());
    for (const auto& w : result.pieces) {
        auto it = index_.find(w);
        result.ids.push_back(it == index_.end() ? unknown_ : it->second);
    }
    return result;
}

std::string Tokenizer::decode(const std::vector<TokenId>& ids) const {
    std::string out;
    for (TokenId id : ids) {
        if (!out.empty()) out += ' ';
        out += token(id);
    }
    return out;
}

const std::string& Tokenizer::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size())
        fail(ErrorCode::invalid_argument, "token id out of range", std::to_string(id));
    return vocab_[static_cast<std::size_t>(id)];
}

TokenId Tokenizer::id_of(std::string_view word) const {
    auto it = index_.find(std::string(word));
    return it == index_.end() ? -1 : it->second;
}

}  // namespace featurescope
