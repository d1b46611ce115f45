#pragma once

#include "semrag/chunker.hpp"
#include "semrag/embedding.hpp"
#include "semrag/kgraph.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <utility>
#include <vector>

namespace semrag {

/// Shortest decimal text that round-trips a float exactly (9 significant
/// digits). Non-finite input is rejected; every persisted number must be a
/// valid JSON literal.
std::string round9(float value);

/// Serializes a vector as a JSON array of round9 numbers.
std::string vec_to_json(const Vec& v);

/// Parses one JSONL file. Returns (1-based line number, parsed object) pairs;
/// malformed lines raise ParseError naming the file and line.
std::vector<std::pair<int, nlohmann::json>> read_jsonl(const std::string& path);

/// FNV-1a over a file's bytes, as 16 hex digits. Stage staleness key.
std::string file_fnv1a(const std::string& path);

struct ChunkIndex {
    std::vector<Chunk> chunks;
    int dim = 0;                // 0 when empty
    std::string content_hash;   // covers all chunk ids + texts
    bool integrity_ok = true;   // false when a load saw an unexpected hash
};

/// Hash of the given chunks' ids and texts (the index identity).
std::string chunk_content_hash(const std::vector<Chunk>& chunks);

ChunkIndex make_index(std::vector<Chunk> chunks);

/// Writes chunks.jsonl: one {"id","doc_id","text","tokens","range","embedding"}
/// object per line, embeddings in round9 decimals.
void save_index(const ChunkIndex& index, const std::string& path);

/// Round-trips save_index output. When expected_hash is non-empty and differs
/// from the recomputed content hash, the index loads with integrity_ok=false.
ChunkIndex load_index(const std::string& path, const std::string& expected_hash = "");

/// Exact top-k by cosine similarity, ties broken by chunk id ascending.
/// k > |chunks| returns all; the query must match the index dimension.
std::vector<std::pair<std::string, double>> knn(const ChunkIndex& index, const Vec& query,
                                                int k);

void save_graph(const KnowledgeGraph& graph, const std::string& entities_path,
                const std::string& relations_path);
KnowledgeGraph load_graph(const std::string& entities_path, const std::string& relations_path);

void save_communities(const std::vector<Community>& communities, const std::string& path);
std::vector<Community> load_communities(const std::string& path);

/// Documents read/written as JSONL {"id","text","meta"}.
std::vector<Document> read_documents(const std::string& path);
void write_documents(const std::vector<Document>& docs, const std::string& path);

/// Run manifest: free-form ordered JSON persisted pretty-printed. A missing
/// file reads as an empty object.
nlohmann::ordered_json load_manifest(const std::string& path);
void save_manifest(const nlohmann::ordered_json& manifest, const std::string& path);

} // namespace semrag
