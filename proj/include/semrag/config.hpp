#pragma once

#include "semrag/chunker.hpp"
#include "semrag/embedding.hpp"
#include "semrag/evalkit.hpp"
#include "semrag/kgraph.hpp"
#include "semrag/llm.hpp"
#include "semrag/retrieval.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace semrag {

/// Run configuration loaded from a TOML-subset file: [section] headers,
/// key = value lines with string/integer/float/boolean/array values, and #
/// comments. Unknown sections or keys are rejected.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string out_dir = "semrag_out";

    ProviderConfig embedding;
    LlmConfig llm;
    ChunkingConfig chunking;

    bool ingest_merge_duplicates = true;

    QueryOptions query; // mode, naive k, local + global search settings

    struct GraphSection {
        int max_levels = 3;
        int max_concurrency = 4;
        int description_cap = 2000;
    } graph;

    EvalOptions eval;

    struct SweepSection {
        std::vector<int> buffers{0, 2, 5};
        std::vector<std::string> modes{"global"};
        std::string timing = "auto"; // wall | zero | auto
    } sweep;

    std::string config_dir; // directory of the loaded file; resolves relative paths

    static RunConfig load(const std::string& path);
    void validate() const;

    /// True when sweep rows must report 0.0 build time: timing=zero, or
    /// timing=auto with both providers stubbed (byte-identical outputs).
    bool deterministic_timing() const;

    /// Paths inside out_dir.
    std::string path_in_out(const std::string& name) const;
};

} // namespace semrag
