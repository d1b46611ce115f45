#pragma once

#include "semrag/chunker.hpp"
#include "semrag/embedding.hpp"
#include "semrag/kgraph.hpp"
#include "semrag/llm.hpp"
#include "semrag/retrieval.hpp"

#include <string>
#include <vector>

namespace semrag {

struct QaExample {
    std::string question;
    std::string ground_truth;
    std::string meta_json = "{}";
};

/// Reads JSONL {"question","answer","meta"}.
std::vector<QaExample> read_qa(const std::string& path);

/// Cosine similarity of the two answers' embeddings, clamped to [0, 1].
double answer_similarity(const std::string& generated, const std::string& truth,
                         EmbeddingProvider& embedder);

/// 0.75 * F1 + 0.25 * similarity with F1 = TP / (TP + 0.5 * (FP + FN));
/// all-zero counts mean nothing to miss, F1 = 1.
double correctness_score(int tp, int fp, int fn, double similarity);

struct CorrectnessResult {
    double score = 0.0;
    int tp = 0, fp = 0, fn = 0;
    bool used_fallback = false; // LLM reply did not contain TP=/FP=/FN= counts
};

/// LLM mode asks for a TP/FP/FN statement classification; heuristic mode
/// (llm == nullptr, also the fallback) splits both answers into sentences and
/// counts a statement as supported when its normalized word tokens are a
/// multiset subset of the other answer's tokens.
CorrectnessResult answer_correctness(const std::string& generated, const std::string& truth,
                                     LlmClient* llm, EmbeddingProvider& embedder);

struct RelevancyResult {
    double score = 0.0;
    int questions_used = 0;
    bool no_questions = false; // LLM produced nothing parseable; score forced to 0
};

/// Asks the LLM for n candidate questions answerable by the generated answer;
/// score = mean cosine between candidate and original question embeddings,
/// clamped to [0, 1].
RelevancyResult answer_relevancy(const std::string& question, const std::string& generated,
                                 int n, LlmClient& llm, EmbeddingProvider& embedder);

struct MetricScores {
    double correctness = 0.0;
    double similarity = 0.0;
    double relevancy = 0.0;
};

struct ExampleResult {
    int index = 0;
    std::string question;
    std::string answer;
    MetricScores scores;
    bool failed = false;
    std::string error;
};

struct EvalReport {
    std::string mode;
    int n_examples = 0; // examples that scored (failures excluded)
    int failures = 0;
    int correctness_fallbacks = 0;
    int relevancy_flagged = 0;
    MetricScores mean;
    MetricScores stddev; // sample (n-1); 0 when n < 2
    std::vector<ExampleResult> examples;
};

struct EvalOptions {
    int relevancy_questions = 3;
    bool llm_correctness = true; // false: heuristic containment judge
    int max_concurrency = 4;
};

/// Answers every example through the configured mode and scores it.
/// Per-example failures are recorded and skipped in the aggregates.
EvalReport run_eval(const std::vector<QaExample>& dataset, const Stores& stores,
                    const QueryOptions& query_options, const EvalOptions& eval_options,
                    LlmClient& llm, EmbeddingProvider& embedder);

/// Fixed 3-decimal formatting used by every report file.
std::string format3(double value);

/// JSON report: sorted keys, 3-decimal floats. CSV: one row per example.
void write_eval_report(const EvalReport& report, const std::string& json_path,
                       const std::string& csv_path);

struct ModeMetrics {
    MetricScores mean;
    MetricScores stddev;
    int failures = 0;
};

struct SweepRow {
    int buffer = 0;
    double time_sec = 0.0; // chunk + graph build wall time (0 under zero_time)
    int chunks = 0;
    int nodes = 0;
    int edges = 0;
    std::vector<std::pair<std::string, ModeMetrics>> mode_metrics; // requested order
    std::string error; // non-empty marks a failed buffer run
};

struct SweepOptions {
    ChunkingConfig chunking; // buffer_size replaced per row
    BuildOptions build;
    QueryOptions query;      // mode replaced per requested mode
    EvalOptions eval;
    std::vector<std::string> modes = {"global"};
    bool zero_time = false;  // deterministic output: report 0.0 build time
};

/// Chunk, build, and evaluate the corpus once per buffer value. A failed
/// buffer records an error row and the sweep continues.
std::vector<SweepRow> buffer_sweep(const std::vector<Document>& docs,
                                   const std::vector<QaExample>& qa,
                                   const std::vector<int>& buffers, const SweepOptions& options,
                                   LlmClient& llm, EmbeddingProvider& embedder);

/// Columns: buffer,time_sec,chunks,nodes,edges,correctness_mean,
/// correctness_std,similarity_mean,similarity_std,relevancy_mean,
/// relevancy_std. Metrics come from the first requested mode; error rows
/// leave the metric cells empty.
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

/// Full sweep data including every requested mode's metrics.
void write_sweep_json(const std::vector<SweepRow>& rows, const std::string& path);

} // namespace semrag
