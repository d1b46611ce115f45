#include "semrag/text.hpp"

#include "semrag/hash.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <unordered_set>

namespace semrag {

namespace {

bool is_word_char(unsigned char c) {
    return std::isalnum(c) != 0 || c == '_' || c >= 0x80;
}

bool is_space(unsigned char c) {
    return std::isspace(c) != 0;
}

// Lowercased abbreviations whose trailing period does not end a sentence.
// Multi-dot entries ("e.g", "u.s") are matched against the token scanned
// back over word characters and interior dots.
const std::unordered_set<std::string>& abbreviations() {
    static const std::unordered_set<std::string> table = {
        "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "etc",
        "inc", "ltd", "co", "corp", "fig", "al", "approx", "dept", "vol",
        "pp", "ed", "eds", "e.g", "i.e", "u.s", "u.k", "a.m", "p.m",
    };
    return table;
}

// Token ending right before position `term` (the '.'), scanned back over
// word characters and interior dots: "U.S. Army" yields "U.S".
std::string_view token_before(std::string_view text, std::size_t term) {
    std::size_t end = term;
    std::size_t begin = end;
    while (begin > 0) {
        unsigned char c = static_cast<unsigned char>(text[begin - 1]);
        if (is_word_char(c) || c == '.') {
            --begin;
        } else {
            break;
        }
    }
    // Strip leading dots picked up from a previous sentence boundary.
    while (begin < end && text[begin] == '.') ++begin;
    return text.substr(begin, end - begin);
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool suppresses_boundary(std::string_view text, std::size_t term) {
    std::string_view tok = token_before(text, term);
    if (tok.empty()) return false;
    // Single capital initial: "J. Smith", and the last segment of "U.S.".
    std::size_t last_dot = tok.rfind('.');
    std::string_view last_seg = last_dot == std::string_view::npos ? tok : tok.substr(last_dot + 1);
    if (last_seg.size() == 1 && std::isupper(static_cast<unsigned char>(last_seg[0])) != 0) {
        return true;
    }
    return abbreviations().count(to_lower(tok)) > 0;
}

} // namespace

std::vector<TokenSpan> tokenize(std::string_view text) {
    std::vector<TokenSpan> spans;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (is_space(c)) {
            ++i;
            continue;
        }
        if (is_word_char(c)) {
            std::size_t j = i + 1;
            while (j < n && is_word_char(static_cast<unsigned char>(text[j]))) ++j;
            spans.push_back({i, j});
            i = j;
        } else {
            spans.push_back({i, i + 1});
            ++i;
        }
    }
    return spans;
}

int count_tokens(std::string_view text) {
    return static_cast<int>(tokenize(text).size());
}

std::vector<Sentence> split_sentences(std::string_view doc_text) {
    std::vector<Sentence> sentences;
    const std::size_t n = doc_text.size();
    std::size_t start = 0;

    auto emit = [&](std::size_t begin, std::size_t end) {
        // Trim surrounding whitespace; empty spans are skipped.
        while (begin < end && is_space(static_cast<unsigned char>(doc_text[begin]))) ++begin;
        while (end > begin && is_space(static_cast<unsigned char>(doc_text[end - 1]))) --end;
        if (begin >= end) return;
        Sentence s;
        s.index = static_cast<int>(sentences.size());
        s.text = std::string(doc_text.substr(begin, end - begin));
        s.token_count = count_tokens(s.text);
        s.begin = begin;
        s.end = end;
        sentences.push_back(std::move(s));
    };

    for (std::size_t i = 0; i < n; ++i) {
        char c = doc_text[i];
        if (c != '.' && c != '!' && c != '?') continue;
        bool at_break = (i + 1 == n) || is_space(static_cast<unsigned char>(doc_text[i + 1]));
        if (!at_break) continue;
        if (c == '.' && suppresses_boundary(doc_text, i)) continue;
        emit(start, i + 1);
        start = i + 1;
    }
    emit(start, n);
    return sentences;
}

std::string normalize_name(std::string_view name) {
    std::string out;
    out.reserve(name.size());
    bool pending_space = false;
    for (unsigned char c : name) {
        if (is_space(c)) {
            if (!out.empty()) pending_space = true;
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

std::vector<std::string> normalized_word_tokens(std::string_view text) {
    std::vector<std::string> words;
    for (const TokenSpan& span : tokenize(text)) {
        std::string_view tok = text.substr(span.begin, span.end - span.begin);
        if (!is_word_char(static_cast<unsigned char>(tok[0]))) continue;
        words.push_back(to_lower(tok));
    }
    return words;
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

} // namespace semrag
