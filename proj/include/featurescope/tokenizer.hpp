#ifndef FEATURESCOPE_TOKENIZER_HPP
#define FEATURESCOPE_TOKENIZER_HPP

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace featurescope {

using TokenId = int;

struct Tokenized {
    std::vector<TokenId> ids;
    std::vector<std::string> pieces;  // lowercased source words, one per id
};

/// Whitespace/punctuation word tokenizer over a closed vocabulary. Words that
/// are not in the vocabulary map to the `<unk>` entry.
class Tokenizer {
public:
    static constexpr std::string_view kUnknown = "<unk>";

    Tokenizer() = default;
    explicit Tokenizer(std::vector<std::string> vocab);

    static Tokenizer load(const std::filesystem::path& vocab_file);
    void save(const std::filesystem::path& vocab_file) const;

    /// Throws invalid_argument when the text contains no word characters.
    Tokenized encode(std::string_view text) const;
    std::string decode(const std::vector<TokenId>& ids) const;

    const std::string& token(TokenId id) const;
    TokenId id_of(std::string_view word) const;  // -1 when absent
    std::size_t size() const { return vocab_.size(); }
    const std::vector<std::string>& vocab() const { return vocab_; }

private:
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, TokenId> index_;
    TokenId unknown_ = -1;
};

/// Lowercased alphanumeric words of `text`, in order.
std::vector<std::string> split_words(std::string_view text);

}  // namespace featurescope

#endif
