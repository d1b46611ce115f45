#pragma once

#include "semrag/chunker.hpp"
#include "semrag/embedding.hpp"
#include "semrag/llm.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace semrag {

/// One extracted description with its provenance chunk.
struct DescriptionPart {
    std::string chunk_id;
    std::string text;

    bool operator<(const DescriptionPart& o) const {
        return chunk_id != o.chunk_id ? chunk_id < o.chunk_id : text < o.text;
    }
    bool operator==(const DescriptionPart& o) const {
        return chunk_id == o.chunk_id && text == o.text;
    }
};

struct Entity {
    std::string id;          // normalize_name(name)
    std::string name;        // representative surface form (lexicographically smallest seen)
    std::string entity_type; // empty for placeholders synthesized from relations
    std::string description; // parts joined by newline, or the condensed text
    std::vector<DescriptionPart> parts; // sorted, deduplicated
    std::set<std::string> source_chunk_ids;
    Vec embedding;           // set by build_graph from name + description
};

struct Relation {
    std::string src; // entity ids, src < dst
    std::string dst;
    std::string description;
    std::vector<DescriptionPart> parts;
    int weight = 1;  // observation count
};

using RelationKey = std::pair<std::string, std::string>;

struct KnowledgeGraph {
    std::map<std::string, Entity> entities;
    std::map<RelationKey, Relation> relations;

    /// Merges one observation into the graph; descriptions are rebuilt from
    /// the sorted, deduplicated part lists so insertion order cannot leak.
    void add_entity(const std::string& name, const std::string& type,
                    const std::string& description, const std::string& chunk_id);
    void add_relation(const std::string& src_name, const std::string& dst_name,
                      const std::string& description, const std::string& chunk_id,
                      int weight = 1);
};

struct ExtractionResult {
    KnowledgeGraph graph;
    int skipped_records = 0;
};

/// Asks the LLM for pipe-delimited entity/relation records for one chunk and
/// parses them. Malformed records are skipped and counted; relation endpoints
/// that were never declared become placeholder entities with empty type.
ExtractionResult extract_elements(const Chunk& chunk, LlmClient& llm);

/// Union of partial graphs; result independent of input order.
KnowledgeGraph merge_graphs(const std::vector<KnowledgeGraph>& partials);

struct CommunityReport {
    std::string community_id;
    std::string summary_text;
    Vec embedding;
    double rank = 0.0;
};

struct Community {
    std::string id; // "c{level}_{index}"
    int level = 0;  // 0 = finest
    std::vector<std::string> members; // sorted entity ids
    std::vector<RelationKey> internal_relations;
    std::optional<std::string> parent; // community at level+1 containing members
    std::optional<CommunityReport> report;
};

/// Hierarchical Leiden over the relation graph (edge weight = observation
/// count). Deterministic for a fixed seed. Isolated entities stay singletons.
std::vector<Community> detect_communities(const KnowledgeGraph& graph, int max_levels,
                                          std::uint64_t seed);

using RankFn = std::function<double(const Community&, const KnowledgeGraph&)>;

/// Internal edge weight sum / (1 + member count).
double default_community_rank(const Community& community, const KnowledgeGraph& graph);

/// Prompts the LLM with member entity descriptions then internal relation
/// descriptions (id-sorted) and wraps the reply in a report. rank_fn defaults
/// to default_community_rank.
CommunityReport summarize_community(const Community& community, const KnowledgeGraph& graph,
                                    LlmClient& llm, EmbeddingProvider& embedder,
                                    const RankFn& rank_fn = {});

/// Rewrites entity and relation descriptions longer than cap_tokens with an
/// LLM condensation pass. Returns the number of rewritten descriptions.
int condense_descriptions(KnowledgeGraph& graph, LlmClient& llm, int cap_tokens,
                          int max_concurrency = 4);

struct BuildOptions {
    int max_levels = 3;
    std::uint64_t seed = 0;
    int max_concurrency = 4;
    int description_cap_tokens = 2000;
    RankFn rank_fn; // empty -> default_community_rank
};

struct BuildResult {
    KnowledgeGraph graph;
    std::vector<Community> communities; // ordered by (level, index), reports attached
    double build_seconds = 0.0;
    std::vector<std::string> failed_chunks; // "chunk_id: reason"
    int skipped_records = 0;
    int condensed_descriptions = 0;
};

/// Full pipeline: per-chunk extraction (parallel), merge, description
/// condensation, entity embeddings, community detection, summarization.
/// Per-chunk extraction failures are collected; throws only if every chunk
/// failed or a summarization call failed.
BuildResult build_graph(const std::vector<Chunk>& chunks, LlmClient& llm,
                        EmbeddingProvider& embedder, const BuildOptions& options = {});

} // namespace semrag
