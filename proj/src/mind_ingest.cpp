// SPDX-License-Identifier: Apache-2.0

#include "newsrec/mind_ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>
#include <unordered_set>

namespace newsrec::mind {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            parts.push_back(line.substr(start));
            return parts;
        }
        parts.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::vector<std::string> split_spaces(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string token;
    while (in >> token) {
        out.push_back(token);
    }
    return out;
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) {
        return {};
    }
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

bool next_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) {
        return false;
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    return true;
}

std::optional<std::string> optional_column(const std::vector<std::string>& cols, std::size_t i) {
    if (i < cols.size() && !cols[i].empty()) {
        return cols[i];
    }
    return std::nullopt;
}

}  // namespace

std::size_t Impression::positives() const {
    return static_cast<std::size_t>(
        std::count_if(candidates.begin(), candidates.end(), [](const Candidate& c) { return c.label == 1; }));
}

std::size_t Impression::negatives() const { return candidates.size() - positives(); }

ParseFailure::ParseFailure(std::string file, ParseIssue issue)
    : std::runtime_error(file + ":" + std::to_string(issue.line) + ": " + issue.message), issue_(std::move(issue)) {}

NewsParseResult parse_news(std::istream& in) {
    NewsParseResult result;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (next_line(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const auto cols = split(line, '\t');
        if (cols.size() < 4) {
            result.errors.push_back({line_no, "expected at least 4 tab-separated columns, got " + std::to_string(cols.size())});
            continue;
        }
        NewsArticle a;
        a.news_id = cols[0];
        a.category = lower(cols[1]);
        a.subcategory = lower(cols[2]);
        a.title = cols[3];
        if (a.news_id.empty()) {
            result.errors.push_back({line_no, "empty news_id"});
            continue;
        }
        if (a.category.empty() || a.subcategory.empty()) {
            result.errors.push_back({line_no, "empty category or subcategory"});
            continue;
        }
        if (trim(a.title).empty()) {
            result.errors.push_back({line_no, "empty title"});
            continue;
        }
        a.abstract = optional_column(cols, 4);
        a.url = optional_column(cols, 5);
        a.title_entities = cols.size() > 6 ? cols[6] : std::string{};
        a.abstract_entities = cols.size() > 7 ? cols[7] : std::string{};
        if (!seen.insert(a.news_id).second) {
            ++result.duplicate_ids;
            continue;
        }
        result.articles.push_back(std::move(a));
    }
    return result;
}

std::optional<std::chrono::sys_seconds> parse_timestamp(const std::string& text) {
    int month = 0, day = 0, year = 0, hour = 0, minute = 0, second = 0;
    char meridiem[3] = {0, 0, 0};
    const int n = std::sscanf(text.c_str(), "%d/%d/%d %d:%d:%d %2s", &month, &day, &year, &hour, &minute, &second, meridiem);
    if (n < 6) {
        return std::nullopt;
    }
    if (n == 7) {
        const std::string m = lower(meridiem);
        if (hour < 1 || hour > 12 || (m != "am" && m != "pm")) {
            return std::nullopt;
        }
        hour %= 12;
        if (m == "pm") {
            hour += 12;
        }
    }
    using namespace std::chrono;
    const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                             std::chrono::day{static_cast<unsigned>(day)}};
    if (!ymd.ok() || hour < 0 || hour > 23 || minute < 0 || minute > 59 || second < 0 || second > 60) {
        return std::nullopt;
    }
    return sys_days{ymd} + hours{hour} + minutes{minute} + seconds{second};
}

BehaviorsParseResult parse_behaviors(std::istream& in) {
    BehaviorsParseResult result;
    std::string line;
    std::size_t line_no = 0;
    while (next_line(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const auto cols = split(line, '\t');
        if (cols.size() != 5) {
            result.errors.push_back({line_no, "expected 5 tab-separated columns, got " + std::to_string(cols.size())});
            continue;
        }
        Impression imp;
        imp.impression_id = cols[0];
        imp.user_id = cols[1];
        imp.time_text = cols[2];
        if (auto ts = parse_timestamp(cols[2])) {
            imp.timestamp = *ts;
        } else {
            result.errors.push_back({line_no, "unparseable timestamp '" + cols[2] + "'"});
            continue;
        }
        imp.history = split_spaces(cols[3]);
        const auto tokens = split_spaces(cols[4]);
        if (tokens.empty()) {
            result.errors.push_back({line_no, "empty candidate list"});
            continue;
        }
        bool ok = true;
        for (const auto& token : tokens) {
            const auto dash = token.rfind('-');
            const std::string suffix = dash == std::string::npos ? std::string{} : token.substr(dash + 1);
            if (dash == std::string::npos || dash == 0 || (suffix != "0" && suffix != "1")) {
                result.errors.push_back({line_no, "candidate '" + token + "' lacks a -0/-1 label suffix"});
                ok = false;
                break;
            }
            imp.candidates.push_back({token.substr(0, dash), suffix == "1" ? 1 : 0});
        }
        if (ok) {
            result.impressions.push_back(std::move(imp));
        }
    }
    return result;
}

std::vector<NewsArticle> load_news(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    auto result = parse_news(in);
    if (!result.errors.empty()) {
        throw ParseFailure(path, result.errors.front());
    }
    return std::move(result.articles);
}

std::vector<Impression> load_behaviors(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    auto result = parse_behaviors(in);
    if (!result.errors.empty()) {
        throw ParseFailure(path, result.errors.front());
    }
    return std::move(result.impressions);
}

CategoryKey category_key(const NewsArticle& article) {
    return CategoryKey{lower(article.category + "-" + article.subcategory)};
}

std::vector<CategoryKey> build_category_vocab(const std::vector<NewsArticle>& articles) {
    std::vector<CategoryKey> keys;
    std::unordered_set<std::string> seen;
    for (const auto& a : articles) {
        auto key = category_key(a);
        if (seen.insert(key.value).second) {
            keys.push_back(std::move(key));
        }
    }
    return keys;
}

DatasetStats dataset_stats(const std::vector<NewsArticle>& articles, const std::vector<Impression>& impressions) {
    DatasetStats s;
    std::unordered_set<std::string> users;
    for (const auto& imp : impressions) {
        users.insert(imp.user_id);
        s.n_clicks += imp.positives();
    }
    s.n_users = users.size();
    s.n_news = articles.size();
    s.n_impressions = impressions.size();
    return s;
}

std::string format_stats(const DatasetStats& stats) {
    std::ostringstream out;
    out << "users: " << stats.n_users << "\n"
        << "news: " << stats.n_news << "\n"
        << "impressions: " << stats.n_impressions << "\n"
        << "clicks: " << stats.n_clicks << "\n";
    return out.str();
}

std::string to_tsv(const NewsArticle& a) {
    return a.news_id + "\t" + a.category + "\t" + a.subcategory + "\t" + a.title + "\t" + a.abstract.value_or("") + "\t" +
           a.url.value_or("") + "\t" + a.title_entities + "\t" + a.abstract_entities;
}

std::string to_tsv(const Impression& imp) {
    std::string history;
    for (std::size_t i = 0; i < imp.history.size(); ++i) {
        history += (i ? " " : "") + imp.history[i];
    }
    std::string cands;
    for (std::size_t i = 0; i < imp.candidates.size(); ++i) {
        cands += (i ? " " : "") + imp.candidates[i].news_id + "-" + std::to_string(imp.candidates[i].label);
    }
    return imp.impression_id + "\t" + imp.user_id + "\t" + imp.time_text + "\t" + history + "\t" + cands;
}

}  // namespace newsrec::mind
