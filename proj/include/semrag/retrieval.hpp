#pragma once

#include "semrag/embedding.hpp"
#include "semrag/kgraph.hpp"
#include "semrag/llm.hpp"
#include "semrag/store.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace semrag {

struct Query {
    std::string text;
    std::vector<std::string> history;
};

struct LocalSearchConfig {
    double tau_e = 0.0;  // entity similarity threshold, strict >
    double tau_d = 0.0;  // chunk-to-entity threshold, strict >
    int k = 5;
    int window_L = 4096; // token budget
    enum class Affinity { embedding, linkage };
    Affinity affinity = Affinity::embedding; // how chunks qualify via entities

    void validate() const;
};

struct GlobalSearchConfig {
    int top_K_reports = 3;
    int k_points = 10;
    int window_L = 4096;
    double rank_weight = 0.3; // blend: w * rank_norm + (1-w) * query similarity
    enum class PointScoring { llm, embedding };
    PointScoring point_scoring = PointScoring::llm;

    void validate() const;
};

struct ContextItem {
    enum class Kind { chunk, entity, report_point };
    Kind kind = Kind::chunk;
    std::string text;
    double score = 0.0;
    std::string source_id;
};

struct RetrievedContext {
    std::vector<ContextItem> items; // sorted by score desc, ties by source_id
    int total_tokens = 0;
    std::string mode;
    std::map<std::string, std::string> metadata;
};

/// Immutable artifact snapshot handed to searches. Accessors count reads so
/// tests can verify a mode touches only its own stores; missing artifacts
/// raise ConfigError naming what has not been built.
class Stores {
public:
    std::optional<ChunkIndex> index;
    std::optional<KnowledgeGraph> graph;
    std::optional<std::vector<Community>> communities;

    const ChunkIndex& require_index() const;
    const KnowledgeGraph& require_graph() const;
    const std::vector<Community>& require_communities() const;

    mutable int index_reads = 0;
    mutable int graph_reads = 0;
    mutable int community_reads = 0;
};

/// Exact top-k chunks by query similarity; window_L > 0 additionally packs
/// the ranked list into that token budget (greedy, skip-on-overflow).
RetrievedContext naive_search(const Query& query, const ChunkIndex& index, int k,
                              EmbeddingProvider& embedder, int window_L = 0);

/// Entity-gated chunk retrieval: entities above tau_e qualify; chunks qualify
/// through a qualifying entity (embedding cosine or source-chunk linkage);
/// entities and chunks pool into one ranked top-k, packed into window_L.
RetrievedContext local_search(const Query& query, const KnowledgeGraph& graph,
                              const ChunkIndex& index, const LocalSearchConfig& config,
                              EmbeddingProvider& embedder);

/// Splits a report into points: blank-line paragraphs; paragraphs over 100
/// tokens fall back to sentence windows of at most 100 tokens.
std::vector<std::string> split_report_points(const std::string& summary_text);

struct PointScore {
    double score = 0.0;       // in [0, 1]
    bool used_fallback = false; // LLM reply was not a 0-100 integer
};

/// LLM mode asks for an integer 0-100 and divides by 100; embedding mode (llm
/// == nullptr) and fallback map cosine similarity from [-1,1] to [0,1].
PointScore score_point(const std::string& point_text, const Query& query, LlmClient* llm,
                       EmbeddingProvider& embedder);

/// Community-report retrieval: reports ranked by rank/similarity blend, top-K
/// taken, their points scored, top k_points packed into window_L.
RetrievedContext global_search(const Query& query, const std::vector<Community>& communities,
                               const GlobalSearchConfig& config, LlmClient* llm,
                               EmbeddingProvider& embedder);

/// Deterministic prompt: preamble, "[source_id] text" items in rank order (a
/// NO CONTEXT sentinel when empty), ending with "QUESTION: <text>". The only
/// template_id is "default".
std::string assemble_prompt(const RetrievedContext& context, const Query& query,
                            const std::string& template_id = "default");

struct QueryOptions {
    std::string mode = "naive"; // naive | local | global
    int k = 5;                  // naive top-k
    LocalSearchConfig local;
    GlobalSearchConfig global;
    std::string template_id = "default";
    double answer_temperature = 0.0;
};

struct QueryResult {
    std::string answer;
    RetrievedContext context;
    std::string prompt;
};

/// Dispatches to the mode's search, assembles the prompt, and asks the LLM.
QueryResult answer_query(const Query& query, const QueryOptions& options, const Stores& stores,
                         LlmClient& llm, EmbeddingProvider& embedder);

} // namespace semrag
