// SPDX-License-Identifier: Apache-2.0
//
// Builds the exact news-encoder input string for each experimental mode and
// tokenises it.
#pragma once

#include "newsrec/category_describe.hpp"
#include "newsrec/mind_ingest.hpp"
#include "newsrec/tokenizer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace newsrec::text {

enum class CompositionMode { TitleOnly, TitleTemplate, TitleGenerated };

/// "title", "template", "generated".
std::string_view to_string(CompositionMode mode);
CompositionMode parse_mode(std::string_view name);

inline constexpr std::string_view kTemplatePrefix = "The news category is ";

struct ComposedNewsText {
    std::string news_id;
    CompositionMode mode = CompositionMode::TitleOnly;
    std::string d_title;
    std::optional<std::string> d_desc;
    std::string full_text;
};

class MissingDescriptionError : public std::runtime_error {
public:
    explicit MissingDescriptionError(const std::string& key)
        : std::runtime_error("no generated description cached for category '" + key + "'"), key_(key) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// Title alone, or title + " " + sep + " " + description. The cache is only
/// consulted in TitleGenerated mode and may be null otherwise.
ComposedNewsText compose(const mind::NewsArticle& article, CompositionMode mode,
                         const describe::DescriptionCache* cache, std::string_view sep);

TokenizedNews tokenize(const ComposedNewsText& composed, const WordPieceTokenizer& tokenizer, int max_len);

/// Tokenised encoder inputs for a catalog under one mode.
struct NewsCorpus {
    CompositionMode mode = CompositionMode::TitleOnly;
    std::string tokenizer_name;
    int max_len = 0;
    std::int32_t pad_id = 0;
    std::vector<std::string> order;
    std::unordered_map<std::string, std::string> full_text;
    std::unordered_map<std::string, TokenizedNews> tokens;

    const TokenizedNews* find(const std::string& news_id) const;
};

NewsCorpus build_corpus(const std::vector<mind::NewsArticle>& articles, CompositionMode mode,
                        const describe::DescriptionCache* cache, const WordPieceTokenizer& tokenizer, int max_len);

/// Composed texts only (used to build toy vocabularies before a tokenizer exists).
std::vector<std::string> compose_all(const std::vector<mind::NewsArticle>& articles, CompositionMode mode,
                                     const describe::DescriptionCache* cache, std::string_view sep);

/// JSON-lines: a header record {"format","version","tokenizer","mode","max_len","pad_id"}
/// then one {"news_id","mode","full_text","token_ids"} record per article.
void write_corpus(const std::filesystem::path& path, const NewsCorpus& corpus);
NewsCorpus read_corpus(const std::filesystem::path& path);

}  // namespace newsrec::text
