// SPDX-License-Identifier: Apache-2.0
//
// BERT-style uncased WordPiece tokenizer: basic tokenisation (cleanup,
// lower-casing, accent stripping, punctuation splitting) followed by greedy
// longest-match-first sub-word lookup.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace newsrec::text {

struct TokenizedNews {
    std::vector<std::int32_t> token_ids;
    std::vector<std::int32_t> attention_mask;
    int max_len = 0;

    std::size_t valid_length() const;
    bool operator==(const TokenizedNews&) const = default;
};

class WordPieceTokenizer {
public:
    static constexpr std::string_view kPad = "[PAD]";
    static constexpr std::string_view kUnk = "[UNK]";
    static constexpr std::string_view kCls = "[CLS]";
    static constexpr std::string_view kSep = "[SEP]";
    static constexpr std::string_view kMask = "[MASK]";

    WordPieceTokenizer(std::vector<std::string> vocab, std::string name);

    /// One token per line, id = line index (Hugging Face vocab.txt).
    static WordPieceTokenizer from_vocab_file(const std::filesystem::path& path, std::string name = {});

    /// Whole-word vocabulary over the basic tokens of texts, plus single
    /// characters and their "##" continuations so any seen text is encodable.
    static WordPieceTokenizer build_from_corpus(std::span<const std::string> texts, std::string name = "toy-wordpiece");

    void save_vocab(const std::filesystem::path& path) const;

    /// Word pieces of text; special-token surface forms pass through intact.
    std::vector<std::string> tokenize(std::string_view text) const;

    /// [CLS] pieces [SEP], right-truncated and padded to max_len (>= 4).
    TokenizedNews encode(std::string_view text, int max_len) const;

    /// Joins pieces back into text, dropping [CLS]/[PAD] and the closing [SEP].
    std::string decode(std::span<const std::int32_t> ids) const;

    std::int32_t id_of(std::string_view token) const;
    const std::string& token_of(std::int32_t id) const;
    std::size_t vocab_size() const noexcept { return vocab_.size(); }
    const std::string& name() const noexcept { return name_; }
    std::string_view sep_token() const noexcept { return kSep; }

private:
    std::vector<std::string> basic_tokenize(std::string_view text) const;
    void word_pieces(const std::string& word, std::vector<std::string>& out) const;

    std::vector<std::string> vocab_;
    std::unordered_map<std::string, std::int32_t> index_;
    std::string name_;
};

/// Basic (pre-WordPiece) tokenisation used for both encoding and vocabulary building.
std::vector<std::string> basic_tokens(std::string_view text);

}  // namespace newsrec::text
