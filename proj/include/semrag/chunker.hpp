#pragma once

#include "semrag/embedding.hpp"
#include "semrag/text.hpp"

#include <optional>
#include <string>
#include <vector>

namespace semrag {

struct Document {
    std::string id;
    std::string text;
    std::string meta_json = "{}"; // opaque, carried through
};

/// Window of sentences around one center, used only to compute distances.
struct SentenceGroup {
    int center_index = 0; // 0-based sentence index
    int lo = 0;           // inclusive member range, 0-based
    int hi = 0;
    std::string text;     // member sentences joined by single spaces
    Vec embedding;
};

struct Chunk {
    std::string id;       // "{doc_id}:{lo}-{hi}" with 1-based range; "#j" appended by overlap split
    std::string doc_id;
    std::string text;
    int token_count = 0;
    int range_lo = 0;     // 1-based inclusive sentence range
    int range_hi = 0;
    Vec embedding;
    std::optional<int> sub_index; // set when produced by overlap split
    std::size_t span_lo = 0;      // token offsets within the parent text (split bookkeeping)
    std::size_t span_hi = 0;
};

struct ChunkingConfig {
    enum class ThresholdMode { absolute, percentile };
    int buffer_size = 1;
    ThresholdMode threshold_mode = ThresholdMode::percentile;
    double tau = 0.5;        // absolute mode, in [0, 2]
    double percentile = 95;  // percentile mode, in (0, 100)
    int token_limit = 1024;
    int overlap = 128;
    int neighbor_span = 1;   // gaps also break when any of the previous n groups is distant

    void validate() const;
};

/// One group per sentence; group i spans sentences [max(0, i-b), min(m-1, i+b)].
std::vector<SentenceGroup> buffer_merge(const std::vector<Sentence>& sentences, int b);

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value (1-based).
double nearest_rank_percentile(std::vector<double> values, double p);

/// flag[i] is true iff a chunk boundary falls between group i and i+1.
/// distances must hold the consecutive-group distances (length m-1).
std::vector<bool> compute_breakpoints(const std::vector<double>& distances,
                                      const ChunkingConfig& config);

/// Splits an over-limit chunk into token windows of width token_limit with
/// stride token_limit - overlap; the final window is the remainder (never
/// back-aligned), so consecutive sub-chunks share exactly `overlap` tokens.
/// Sub-chunk embeddings are left empty; the caller re-embeds final texts.
std::vector<Chunk> split_with_overlap(const Chunk& chunk, int token_limit, int overlap);

/// Full pipeline for one document: sentences, buffered groups, group
/// embeddings, consecutive cosine distances, breakpoints, chunks of raw
/// sentence text, overlap split, final-text re-embedding.
std::vector<Chunk> chunk_document(const Document& doc, const ChunkingConfig& config,
                                  EmbeddingProvider& embedder);

} // namespace semrag
