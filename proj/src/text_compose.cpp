// SPDX-License-Identifier: Apache-2.0

#include "newsrec/text_compose.hpp"

#include <fstream>

namespace newsrec::text {

namespace {
constexpr std::string_view kCorpusFormat = "newsrec-corpus";
constexpr int kCorpusVersion = 1;
}  // namespace

std::string_view to_string(CompositionMode mode) {
    switch (mode) {
        case CompositionMode::TitleOnly: return "title";
        case CompositionMode::TitleTemplate: return "template";
        case CompositionMode::TitleGenerated: return "generated";
    }
    return "title";
}

CompositionMode parse_mode(std::string_view name) {
    if (name == "title") return CompositionMode::TitleOnly;
    if (name == "template") return CompositionMode::TitleTemplate;
    if (name == "generated") return CompositionMode::TitleGenerated;
    throw std::invalid_argument("unknown composition mode '" + std::string(name) + "'");
}

ComposedNewsText compose(const mind::NewsArticle& article, CompositionMode mode,
                         const describe::DescriptionCache* cache, std::string_view sep) {
    ComposedNewsText out;
    out.news_id = article.news_id;
    out.mode = mode;
    out.d_title = article.title;
    switch (mode) {
        case CompositionMode::TitleOnly:
            out.full_text = out.d_title;
            return out;
        case CompositionMode::TitleTemplate:
            out.d_desc = std::string(kTemplatePrefix) + mind::category_key(article).value;
            break;
        case CompositionMode::TitleGenerated: {
            const auto key = mind::category_key(article);
            const auto* entry = cache == nullptr ? nullptr : cache->find(key.value);
            if (entry == nullptr) {
                throw MissingDescriptionError(key.value);
            }
            out.d_desc = entry->text;
            break;
        }
    }
    out.full_text = out.d_title + " " + std::string(sep) + " " + *out.d_desc;
    return out;
}

TokenizedNews tokenize(const ComposedNewsText& composed, const WordPieceTokenizer& tokenizer, int max_len) {
    return tokenizer.encode(composed.full_text, max_len);
}

const TokenizedNews* NewsCorpus::find(const std::string& news_id) const {
    auto it = tokens.find(news_id);
    return it == tokens.end() ? nullptr : &it->second;
}

std::vector<std::string> compose_all(const std::vector<mind::NewsArticle>& articles, CompositionMode mode,
                                     const describe::DescriptionCache* cache, std::string_view sep) {
    std::vector<std::string> texts;
    texts.reserve(articles.size());
    for (const auto& a : articles) {
        texts.push_back(compose(a, mode, cache, sep).full_text);
    }
    return texts;
}

NewsCorpus build_corpus(const std::vector<mind::NewsArticle>& articles, CompositionMode mode,
                        const describe::DescriptionCache* cache, const WordPieceTokenizer& tokenizer, int max_len) {
    NewsCorpus corpus;
    corpus.mode = mode;
    corpus.tokenizer_name = tokenizer.name();
    corpus.max_len = max_len;
    corpus.pad_id = tokenizer.id_of(WordPieceTokenizer::kPad);
    for (const auto& a : articles) {
        auto composed = compose(a, mode, cache, tokenizer.sep_token());
        corpus.tokens.emplace(a.news_id, tokenize(composed, tokenizer, max_len));
        corpus.full_text.emplace(a.news_id, std::move(composed.full_text));
        corpus.order.push_back(a.news_id);
    }
    return corpus;
}

void write_corpus(const std::filesystem::path& path, const NewsCorpus& corpus) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << nlohmann::json{{"format", kCorpusFormat},
                          {"version", kCorpusVersion},
                          {"tokenizer", corpus.tokenizer_name},
                          {"mode", to_string(corpus.mode)},
                          {"max_len", corpus.max_len},
                          {"pad_id", corpus.pad_id}}
               .dump()
        << "\n";
    for (const auto& id : corpus.order) {
        const auto& t = corpus.tokens.at(id);
        std::vector<std::int32_t> ids(t.token_ids.begin(), t.token_ids.begin() + static_cast<long>(t.valid_length()));
        out << nlohmann::json{{"news_id", id},
                              {"mode", to_string(corpus.mode)},
                              {"full_text", corpus.full_text.at(id)},
                              {"token_ids", ids}}
                   .dump()
            << "\n";
    }
}

NewsCorpus read_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error(path.string() + ": empty corpus file");
    }
    const auto header = nlohmann::json::parse(line);
    if (header.value("format", "") != kCorpusFormat || header.value("version", 0) != kCorpusVersion) {
        throw std::runtime_error(path.string() + ": unsupported corpus format");
    }
    NewsCorpus corpus;
    corpus.tokenizer_name = header.at("tokenizer").get<std::string>();
    corpus.mode = parse_mode(header.at("mode").get<std::string>());
    corpus.max_len = header.at("max_len").get<int>();
    corpus.pad_id = header.at("pad_id").get<std::int32_t>();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto rec = nlohmann::json::parse(line);
        const auto id = rec.at("news_id").get<std::string>();
        TokenizedNews t;
        t.max_len = corpus.max_len;
        t.token_ids = rec.at("token_ids").get<std::vector<std::int32_t>>();
        if (t.token_ids.size() > static_cast<std::size_t>(corpus.max_len)) {
            throw std::runtime_error(path.string() + ": record " + id + " exceeds max_len");
        }
        t.attention_mask.assign(t.token_ids.size(), 1);
        t.token_ids.resize(static_cast<std::size_t>(corpus.max_len), corpus.pad_id);
        t.attention_mask.resize(static_cast<std::size_t>(corpus.max_len), 0);
        corpus.full_text.emplace(id, rec.at("full_text").get<std::string>());
        corpus.tokens.emplace(id, std::move(t));
        corpus.order.push_back(id);
    }
    return corpus;
}

}  // namespace newsrec::text
