// SPDX-License-Identifier: Apache-2.0
//
// Typed records for the MIND news catalog (news.tsv) and impression log
// (behaviors.tsv), with line-numbered recoverable parse errors.
#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <optional>
#include <string>
#include <vector>

namespace newsrec::mind {

struct NewsArticle {
    std::string news_id;
    std::string category;
    std::string subcategory;
    std::string title;
    std::optional<std::string> abstract;
    std::optional<std::string> url;
    // Entity annotations are kept verbatim for round-tripping only.
    std::string title_entities;
    std::string abstract_entities;

    bool operator==(const NewsArticle&) const = default;
};

/// category + "-" + subcategory, e.g. "tv-golden-globes".
struct CategoryKey {
    std::string value;

    bool operator==(const CategoryKey&) const = default;
    auto operator<=>(const CategoryKey&) const = default;
};

struct Candidate {
    std::string news_id;
    int label = 0;

    bool operator==(const Candidate&) const = default;
};

struct Impression {
    std::string impression_id;
    std::string user_id;
    std::string time_text;
    std::chrono::sys_seconds timestamp{};
    std::vector<std::string> history;  // oldest first
    std::vector<Candidate> candidates;

    std::size_t positives() const;
    std::size_t negatives() const;

    bool operator==(const Impression&) const = default;
};

struct ParseIssue {
    std::size_t line = 0;  // 1-based
    std::string message;
};

struct NewsParseResult {
    std::vector<NewsArticle> articles;
    std::vector<ParseIssue> errors;
    std::size_t duplicate_ids = 0;
};

struct BehaviorsParseResult {
    std::vector<Impression> impressions;
    std::vector<ParseIssue> errors;
};

/// Parses news.tsv. Bad lines are reported and skipped; duplicates keep the
/// first occurrence.
NewsParseResult parse_news(std::istream& in);
BehaviorsParseResult parse_behaviors(std::istream& in);

/// Convenience wrappers that throw ParseFailure on the first reported error.
std::vector<NewsArticle> load_news(const std::string& path);
std::vector<Impression> load_behaviors(const std::string& path);

class ParseFailure : public std::runtime_error {
public:
    ParseFailure(std::string file, ParseIssue issue);
    const ParseIssue& issue() const noexcept { return issue_; }

private:
    ParseIssue issue_;
};

/// Parses "11/11/2019 9:05:58 AM" style timestamps.
std::optional<std::chrono::sys_seconds> parse_timestamp(const std::string& text);

CategoryKey category_key(const NewsArticle& article);

/// Distinct keys in first-seen order.
std::vector<CategoryKey> build_category_vocab(const std::vector<NewsArticle>& articles);

struct DatasetStats {
    std::uint64_t n_users = 0;
    std::uint64_t n_news = 0;
    std::uint64_t n_impressions = 0;
    std::uint64_t n_clicks = 0;

    bool operator==(const DatasetStats&) const = default;
};

/// Counts reported for the MIND release used in the reference experiments.
inline constexpr DatasetStats kReferenceMindStats{94'057, 65'238, 230'117, 347'727};

DatasetStats dataset_stats(const std::vector<NewsArticle>& articles, const std::vector<Impression>& impressions);

/// "key: value" report lines.
std::string format_stats(const DatasetStats& stats);

std::string to_tsv(const NewsArticle& article);
std::string to_tsv(const Impression& impression);

}  // namespace newsrec::mind
