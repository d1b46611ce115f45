#include "semrag/chunker.hpp"

#include "semrag/error.hpp"

#include <algorithm>
#include <cmath>

namespace semrag {

namespace {

std::string join_spaced(const std::vector<Sentence>& sentences, int lo, int hi) {
    std::string out;
    for (int i = lo; i <= hi; ++i) {
        if (!out.empty()) out += ' ';
        out += sentences[static_cast<std::size_t>(i)].text;
    }
    return out;
}

std::string base_chunk_id(const std::string& doc_id, int range_lo, int range_hi) {
    return doc_id + ":" + std::to_string(range_lo) + "-" + std::to_string(range_hi);
}

} // namespace

void ChunkingConfig::validate() const {
    if (buffer_size < 0) throw ConfigError("buffer_size must be >= 0");
    if (token_limit < 1) throw ConfigError("token_limit must be >= 1");
    if (overlap < 0 || overlap >= token_limit) {
        throw ConfigError("overlap must satisfy 0 <= overlap < token_limit");
    }
    if (neighbor_span < 1) throw ConfigError("neighbor_span must be >= 1");
    if (neighbor_span > 1 && threshold_mode != ThresholdMode::absolute) {
        throw ConfigError("neighbor_span > 1 requires an absolute threshold");
    }
    if (threshold_mode == ThresholdMode::absolute) {
        if (tau < 0.0 || tau > 2.0) throw ConfigError("tau must be in [0, 2]");
    } else {
        if (!(percentile > 0.0) || !(percentile < 100.0)) {
            throw ConfigError("percentile must be in (0, 100)");
        }
    }
}

std::vector<SentenceGroup> buffer_merge(const std::vector<Sentence>& sentences, int b) {
    if (b < 0) throw ConfigError("buffer_size must be >= 0");
    const int m = static_cast<int>(sentences.size());
    std::vector<SentenceGroup> groups;
    groups.reserve(sentences.size());
    for (int i = 0; i < m; ++i) {
        SentenceGroup g;
        g.center_index = i;
        g.lo = std::max(0, i - b);
        g.hi = std::min(m - 1, i + b);
        g.text = join_spaced(sentences, g.lo, g.hi);
        groups.push_back(std::move(g));
    }
    return groups;
}

double nearest_rank_percentile(std::vector<double> values, double p) {
    if (values.empty()) throw Error("percentile of empty list");
    if (!(p > 0.0) || !(p < 100.0)) throw ConfigError("percentile must be in (0, 100)");
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
    rank = std::max<std::size_t>(1, std::min(rank, n));
    return values[rank - 1];
}

std::vector<bool> compute_breakpoints(const std::vector<double>& distances,
                                      const ChunkingConfig& config) {
    config.validate();
    if (distances.empty()) return {};
    double threshold = config.tau;
    if (config.threshold_mode == ChunkingConfig::ThresholdMode::percentile) {
        threshold = nearest_rank_percentile(distances, config.percentile);
    }
    std::vector<bool> flags(distances.size());
    for (std::size_t i = 0; i < distances.size(); ++i) {
        flags[i] = distances[i] >= threshold;
    }
    return flags;
}

std::vector<Chunk> split_with_overlap(const Chunk& chunk, int token_limit, int overlap) {
    if (overlap < 0 || overlap >= token_limit) {
        throw ConfigError("overlap must satisfy 0 <= overlap < token_limit");
    }
    const auto spans = tokenize(chunk.text);
    const std::size_t total = spans.size();
    const auto limit = static_cast<std::size_t>(token_limit);
    if (total <= limit) {
        Chunk copy = chunk;
        copy.token_count = static_cast<int>(total);
        copy.span_lo = 0;
        copy.span_hi = total;
        return {copy};
    }

    const std::size_t stride = limit - static_cast<std::size_t>(overlap);
    std::vector<Chunk> out;
    int j = 0;
    for (std::size_t start = 0; start < total; start += stride) {
        const std::size_t end = std::min(total, start + limit);
        Chunk sub;
        sub.doc_id = chunk.doc_id;
        sub.range_lo = chunk.range_lo;
        sub.range_hi = chunk.range_hi;
        sub.sub_index = j;
        sub.id = chunk.id + "#" + std::to_string(j);
        sub.span_lo = start;
        sub.span_hi = end;
        sub.token_count = static_cast<int>(end - start);
        const std::size_t byte_lo = spans[start].begin;
        const std::size_t byte_hi = spans[end - 1].end;
        sub.text = chunk.text.substr(byte_lo, byte_hi - byte_lo);
        out.push_back(std::move(sub));
        ++j;
        if (end == total) break;
    }
    return out;
}

std::vector<Chunk> chunk_document(const Document& doc, const ChunkingConfig& config,
                                  EmbeddingProvider& embedder) {
    config.validate();
    const auto sentences = split_sentences(doc.text);
    if (sentences.empty()) return {};

    const auto groups = buffer_merge(sentences, config.buffer_size);

    std::vector<std::string> group_texts;
    group_texts.reserve(groups.size());
    for (const auto& g : groups) group_texts.push_back(g.text);
    const auto group_vecs = embedder.embed_texts(group_texts);

    std::vector<double> distances;
    distances.reserve(groups.size() > 0 ? groups.size() - 1 : 0);
    for (std::size_t i = 0; i + 1 < groups.size(); ++i) {
        distances.push_back(cosine_distance(group_vecs[i], group_vecs[i + 1]));
    }
    auto flags = compute_breakpoints(distances, config);

    // Wider neighbor span: a gap also breaks when any of the previous
    // neighbor_span groups is distant from the group after the gap.
    if (config.neighbor_span > 1 && config.threshold_mode == ChunkingConfig::ThresholdMode::absolute) {
        for (std::size_t i = 0; i < flags.size(); ++i) {
            for (int k = 2; k <= config.neighbor_span && !flags[i]; ++k) {
                const auto j = static_cast<long long>(i) + 1 - k;
                if (j < 0) break;
                const double d = cosine_distance(group_vecs[static_cast<std::size_t>(j)],
                                                 group_vecs[i + 1]);
                if (d >= config.tau) flags[i] = true;
            }
        }
    }

    std::vector<Chunk> semantic;
    int lo = 0;
    const int m = static_cast<int>(sentences.size());
    for (int i = 0; i < m; ++i) {
        const bool boundary_after = i < m - 1 && flags[static_cast<std::size_t>(i)];
        if (boundary_after || i == m - 1) {
            Chunk c;
            c.doc_id = doc.id;
            c.range_lo = lo + 1;
            c.range_hi = i + 1;
            c.id = base_chunk_id(doc.id, c.range_lo, c.range_hi);
            c.text = join_spaced(sentences, lo, i);
            c.token_count = count_tokens(c.text);
            semantic.push_back(std::move(c));
            lo = i + 1;
        }
    }

    std::vector<Chunk> final_chunks;
    for (const auto& c : semantic) {
        auto parts = split_with_overlap(c, config.token_limit, config.overlap);
        for (auto& p : parts) final_chunks.push_back(std::move(p));
    }

    std::vector<std::string> final_texts;
    final_texts.reserve(final_chunks.size());
    for (const auto& c : final_chunks) final_texts.push_back(c.text);
    auto final_vecs = embedder.embed_texts(final_texts);
    for (std::size_t i = 0; i < final_chunks.size(); ++i) {
        final_chunks[i].embedding = std::move(final_vecs[i]);
    }
    return final_chunks;
}

} // namespace semrag
