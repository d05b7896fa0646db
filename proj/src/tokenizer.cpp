// SPDX-License-Identifier: Apache-2.0

#include "newsrec/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

namespace newsrec::text {

namespace {

constexpr std::size_t kMaxCharsPerWord = 100;

std::u32string decode_utf8(std::string_view s) {
    std::u32string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size();) {
        const auto c = static_cast<unsigned char>(s[i]);
        char32_t cp = 0xFFFD;
        std::size_t len = 1;
        if (c < 0x80) {
            cp = c;
        } else if ((c >> 5) == 0x6 && i + 1 < s.size()) {
            cp = ((c & 0x1Fu) << 6) | (static_cast<unsigned char>(s[i + 1]) & 0x3Fu);
            len = 2;
        } else if ((c >> 4) == 0xE && i + 2 < s.size()) {
            cp = ((c & 0x0Fu) << 12) | ((static_cast<unsigned char>(s[i + 1]) & 0x3Fu) << 6) |
                 (static_cast<unsigned char>(s[i + 2]) & 0x3Fu);
            len = 3;
        } else if ((c >> 3) == 0x1E && i + 3 < s.size()) {
            cp = ((c & 0x07u) << 18) | ((static_cast<unsigned char>(s[i + 1]) & 0x3Fu) << 12) |
                 ((static_cast<unsigned char>(s[i + 2]) & 0x3Fu) << 6) | (static_cast<unsigned char>(s[i + 3]) & 0x3Fu);
            len = 4;
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

bool is_whitespace(char32_t c) {
    return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == 0x00A0 || (c >= 0x2000 && c <= 0x200A) ||
           c == 0x202F || c == 0x205F || c == 0x3000 || c == 0x1680;
}

bool is_control(char32_t c) {
    if (c == U'\t' || c == U'\n' || c == U'\r') {
        return false;
    }
    return c < 0x20 || (c >= 0x7F && c < 0xA0) || c == 0x00AD || (c >= 0x200B && c <= 0x200F) ||
           (c >= 0x2028 && c <= 0x202E) || (c >= 0x2060 && c <= 0x2064) || c == 0xFEFF;
}

bool is_punctuation(char32_t c) {
    if ((c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126)) {
        return true;
    }
    // Unicode P* categories for the blocks that occur in news text.
    return c == 0x00A1 || c == 0x00A7 || c == 0x00AB || c == 0x00B6 || c == 0x00B7 || c == 0x00BB || c == 0x00BF ||
           (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x2043) || (c >= 0x2045 && c <= 0x2051) ||
           (c >= 0x2053 && c <= 0x205E) || (c >= 0x3001 && c <= 0x3003) || (c >= 0x3008 && c <= 0x3011) ||
           (c >= 0xFF01 && c <= 0xFF0F);
}

bool is_cjk(char32_t c) {
    return (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0x3400 && c <= 0x4DBF) || (c >= 0x20000 && c <= 0x2A6DF) ||
           (c >= 0xF900 && c <= 0xFAFF) || (c >= 0x2F800 && c <= 0x2FA1F);
}

// Lower-casing plus accent removal for Latin, Greek and Cyrillic letters,
// matching what NFD decomposition + dropping combining marks produces.
char32_t fold(char32_t c) {
    if (c < 0x80) {
        return (c >= U'A' && c <= U'Z') ? c + 32 : c;
    }
    if (c >= 0x0300 && c <= 0x036F) {
        return 0;  // combining mark
    }
    if (c >= 0x00C0 && c <= 0x00FF) {
        static constexpr std::array<char, 64> base = {
            'a', 'a', 'a', 'a', 'a', 'a', 0,   'c', 'e', 'e', 'e', 'e', 'i', 'i', 'i', 'i',  // C0-CF
            0,   'n', 'o', 'o', 'o', 'o', 'o', 0,   0,   'u', 'u', 'u', 'u', 'y', 0,   0,    // D0-DF
            'a', 'a', 'a', 'a', 'a', 'a', 0,   'c', 'e', 'e', 'e', 'e', 'i', 'i', 'i', 'i',  // E0-EF
            0,   'n', 'o', 'o', 'o', 'o', 'o', 0,   0,   'u', 'u', 'u', 'u', 'y', 0,   'y',  // F0-FF
        };
        const char b = base[c - 0xC0];
        if (b != 0) {
            return static_cast<char32_t>(b);
        }
        // Letters without a decomposition (AE, ETH, O-stroke, THORN) only lower-case.
        if ((c >= 0x00C0 && c <= 0x00DE) && c != 0x00D7) {
            return c + 0x20;
        }
        return c;
    }
    if (c >= 0x0100 && c <= 0x017F) {
        // '.' marks letters without a canonical decomposition.
        static constexpr std::string_view latin_ext_a =
            "aaaaaaccccccccdd..eeeeeeeeeegggggggghh..iiiiiiii"
            "i...jjkk.llllll....nnnnnn...oooooo..rrrrrrssssss"
            "sstttt..uuuuuuuuuuuuwwyyyzzzzzz.";
        const char b = latin_ext_a[c - 0x0100];
        if (b != '.') {
            return static_cast<char32_t>(b);
        }
        switch (c) {
            case 0x0110: case 0x0126: case 0x0132: case 0x013F: case 0x0141:
            case 0x014A: case 0x0152: case 0x0166:
                return c + 1;
            default:
                return c;
        }
    }
    if (c >= 0x0391 && c <= 0x03A9) return c + 0x20;
    if (c >= 0x0410 && c <= 0x042F) return c + 0x20;
    if (c >= 0x0400 && c <= 0x040F) return c + 0x50;
    return c;
}

// Splits text around special-token surface forms, which bypass normalisation.
std::vector<std::pair<std::string_view, bool>> split_special(std::string_view text) {
    static constexpr std::array<std::string_view, 5> specials = {
        WordPieceTokenizer::kPad, WordPieceTokenizer::kUnk, WordPieceTokenizer::kCls, WordPieceTokenizer::kSep,
        WordPieceTokenizer::kMask};
    std::vector<std::pair<std::string_view, bool>> parts;
    std::size_t start = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        bool matched = false;
        if (text[i] == '[') {
            for (auto s : specials) {
                if (text.substr(i, s.size()) == s) {
                    if (i > start) parts.emplace_back(text.substr(start, i - start), false);
                    parts.emplace_back(s, true);
                    i += s.size();
                    start = i;
                    matched = true;
                    break;
                }
            }
        }
        if (!matched) ++i;
    }
    if (start < text.size()) parts.emplace_back(text.substr(start), false);
    return parts;
}

}  // namespace

std::vector<std::string> basic_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    };
    for (char32_t c : decode_utf8(text)) {
        if (c == 0 || c == 0xFFFD || is_control(c)) {
            continue;
        }
        if (is_whitespace(c)) {
            flush();
            continue;
        }
        const char32_t folded = fold(c);
        if (folded == 0) {
            continue;
        }
        if (is_punctuation(folded) || is_cjk(folded)) {
            flush();
            std::string single;
            append_utf8(single, folded);
            tokens.push_back(std::move(single));
            continue;
        }
        append_utf8(current, folded);
    }
    flush();
    return tokens;
}

std::size_t TokenizedNews::valid_length() const {
    return static_cast<std::size_t>(std::count(attention_mask.begin(), attention_mask.end(), 1));
}

WordPieceTokenizer::WordPieceTokenizer(std::vector<std::string> vocab, std::string name)
    : vocab_(std::move(vocab)), name_(std::move(name)) {
    for (std::size_t i = 0; i < vocab_.size(); ++i) {
        index_.emplace(vocab_[i], static_cast<std::int32_t>(i));
    }
    for (auto s : {kPad, kUnk, kCls, kSep}) {
        if (!index_.contains(std::string(s))) {
            throw std::invalid_argument("vocabulary lacks special token " + std::string(s));
        }
    }
}

WordPieceTokenizer WordPieceTokenizer::from_vocab_file(const std::filesystem::path& path, std::string name) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open vocabulary " + path.string());
    }
    std::vector<std::string> vocab;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        vocab.push_back(line);
    }
    while (!vocab.empty() && vocab.back().empty()) {
        vocab.pop_back();
    }
    return WordPieceTokenizer(std::move(vocab), name.empty() ? path.parent_path().filename().string() : std::move(name));
}

WordPieceTokenizer WordPieceTokenizer::build_from_corpus(std::span<const std::string> texts, std::string name) {
    std::map<std::string, std::size_t> counts;
    std::set<std::string> chars;
    for (const auto& text : texts) {
        for (auto [part, special] : split_special(text)) {
            if (special) continue;
            for (auto& tok : basic_tokens(part)) {
                for (char32_t c : decode_utf8(tok)) {
                    std::string ch;
                    append_utf8(ch, c);
                    chars.insert(ch);
                }
                ++counts[tok];
            }
        }
    }
    std::vector<std::string> vocab{std::string(kPad), std::string(kUnk), std::string(kCls), std::string(kSep),
                                   std::string(kMask)};
    std::set<std::string> present(vocab.begin(), vocab.end());
    auto add = [&](const std::string& t) {
        if (present.insert(t).second) vocab.push_back(t);
    };
    std::vector<std::pair<std::string, std::size_t>> words(counts.begin(), counts.end());
    std::stable_sort(words.begin(), words.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& c : chars) add(c);
    for (const auto& c : chars) add("##" + c);
    for (const auto& [w, n] : words) add(w);
    return WordPieceTokenizer(std::move(vocab), std::move(name));
}

void WordPieceTokenizer::save_vocab(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    for (const auto& t : vocab_) {
        out << t << "\n";
    }
}

std::vector<std::string> WordPieceTokenizer::basic_tokenize(std::string_view text) const { return basic_tokens(text); }

void WordPieceTokenizer::word_pieces(const std::string& word, std::vector<std::string>& out) const {
    const std::u32string chars = decode_utf8(word);
    if (chars.size() > kMaxCharsPerWord) {
        out.emplace_back(kUnk);
        return;
    }
    std::vector<std::string> pieces;
    std::size_t start = 0;
    while (start < chars.size()) {
        std::size_t end = chars.size();
        std::string found;
        while (start < end) {
            std::string candidate = start > 0 ? "##" : "";
            for (std::size_t i = start; i < end; ++i) append_utf8(candidate, chars[i]);
            if (index_.contains(candidate)) {
                found = std::move(candidate);
                break;
            }
            --end;
        }
        if (found.empty()) {
            out.emplace_back(kUnk);
            return;
        }
        pieces.push_back(std::move(found));
        start = end;
    }
    out.insert(out.end(), pieces.begin(), pieces.end());
}

std::vector<std::string> WordPieceTokenizer::tokenize(std::string_view text) const {
    std::vector<std::string> out;
    for (auto [part, special] : split_special(text)) {
        if (special) {
            out.emplace_back(part);
            continue;
        }
        for (const auto& word : basic_tokenize(part)) {
            word_pieces(word, out);
        }
    }
    return out;
}

TokenizedNews WordPieceTokenizer::encode(std::string_view text, int max_len) const {
    if (max_len < 4) {
        throw std::invalid_argument("max_len must be at least 4, got " + std::to_string(max_len));
    }
    const auto pieces = tokenize(text);
    const std::size_t room = static_cast<std::size_t>(max_len) - 2;
    TokenizedNews t;
    t.max_len = max_len;
    t.token_ids.reserve(static_cast<std::size_t>(max_len));
    t.token_ids.push_back(id_of(kCls));
    for (std::size_t i = 0; i < pieces.size() && i < room; ++i) {
        t.token_ids.push_back(id_of(pieces[i]));
    }
    t.token_ids.push_back(id_of(kSep));
    t.attention_mask.assign(t.token_ids.size(), 1);
    const std::int32_t pad = id_of(kPad);
    while (t.token_ids.size() < static_cast<std::size_t>(max_len)) {
        t.token_ids.push_back(pad);
        t.attention_mask.push_back(0);
    }
    return t;
}

std::string WordPieceTokenizer::decode(std::span<const std::int32_t> ids) const {
    std::vector<std::string> pieces;
    for (auto id : ids) {
        const std::string& tok = token_of(id);
        if (tok == kCls || tok == kPad) continue;
        pieces.push_back(tok);
    }
    if (!pieces.empty() && pieces.back() == kSep) {
        pieces.pop_back();
    }
    std::string out;
    for (const auto& p : pieces) {
        if (p.starts_with("##") && !out.empty()) {
            out += p.substr(2);
        } else {
            if (!out.empty()) out.push_back(' ');
            out += p;
        }
    }
    return out;
}

std::int32_t WordPieceTokenizer::id_of(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it != index_.end()) {
        return it->second;
    }
    return index_.at(std::string(kUnk));
}

const std::string& WordPieceTokenizer::token_of(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) {
        throw std::out_of_range("token id out of range");
    }
    return vocab_[static_cast<std::size_t>(id)];
}

}  // namespace newsrec::text
