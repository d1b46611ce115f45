#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace semrag {

/// Byte range [begin, end) of one token inside its source text.
struct TokenSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// Deterministic tokenizer used for every token count and token window in the
/// pipeline: a token is either a maximal run of word characters (ASCII
/// alphanumerics, '_', and any byte >= 0x80 so UTF-8 words stay whole) or a
/// single non-whitespace punctuation character.
std::vector<TokenSpan> tokenize(std::string_view text);

/// Number of tokens under the rule above. "Hello, world!" -> 4.
int count_tokens(std::string_view text);

/// One sentence of a document. Offsets are byte positions into the original
/// document text, so joining sentences with the original inter-sentence
/// whitespace reproduces the document exactly.
struct Sentence {
    int index = 0;
    std::string text;
    int token_count = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// Splits a document into sentences. A sentence ends at '.', '!' or '?'
/// followed by whitespace (or end of text), except when the period closes a
/// known abbreviation ("dr", "e.g", ...) or a single capital initial
/// ("J. Smith"). Trailing text without a terminator forms the final sentence.
std::vector<Sentence> split_sentences(std::string_view doc_text);

/// Lowercases ASCII letters and collapses whitespace runs to single spaces,
/// trimming the ends. Entity identity and duplicate-document detection key.
std::string normalize_name(std::string_view name);

/// Lowercased word tokens only (punctuation dropped). Used by the heuristic
/// statement-support check in the evaluation metrics.
std::vector<std::string> normalized_word_tokens(std::string_view text);

} // namespace semrag
