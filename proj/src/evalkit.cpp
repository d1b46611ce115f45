#include "semrag/evalkit.hpp"

#include "semrag/store.hpp"
#include "semrag/text.hpp"
#include "semrag/util.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

namespace semrag {

namespace {

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

double mean_of(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

double sample_std(const std::vector<double>& values, double mean) {
    if (values.size() < 2) return 0.0;
    double acc = 0.0;
    for (double v : values) acc += (v - mean) * (v - mean);
    return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

/// Multiset containment: every token of `statement` appears in `pool_tokens`
/// at least as often.
bool supported_by(const std::string& statement,
                  const std::map<std::string, int>& pool_tokens) {
    std::map<std::string, int> need;
    for (const auto& t : normalized_word_tokens(statement)) ++need[t];
    for (const auto& [token, count] : need) {
        const auto it = pool_tokens.find(token);
        if (it == pool_tokens.end() || it->second < count) return false;
    }
    return true;
}

std::map<std::string, int> token_multiset(const std::string& text) {
    std::map<std::string, int> out;
    for (const auto& t : normalized_word_tokens(text)) ++out[t];
    return out;
}

CorrectnessResult heuristic_correctness(const std::string& generated, const std::string& truth,
                                        double similarity) {
    CorrectnessResult r;
    const auto truth_tokens = token_multiset(truth);
    const auto generated_tokens = token_multiset(generated);
    for (const auto& s : split_sentences(generated)) {
        if (supported_by(s.text, truth_tokens)) ++r.tp;
        else ++r.fp;
    }
    for (const auto& s : split_sentences(truth)) {
        if (!supported_by(s.text, generated_tokens)) ++r.fn;
    }
    r.score = correctness_score(r.tp, r.fp, r.fn, similarity);
    return r;
}

std::string jstr(const std::string& s) { return nlohmann::json(s).dump(); }

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + path);
    return out;
}

} // namespace

std::vector<QaExample> read_qa(const std::string& path) {
    std::vector<QaExample> out;
    for (const auto& [line_no, obj] : read_jsonl(path)) {
        const std::string where = path + ":" + std::to_string(line_no);
        if (!obj.is_object() || !obj.contains("question") || !obj.contains("answer")) {
            throw ParseError(where + ": expected {\"question\",\"answer\",...}");
        }
        QaExample qa;
        qa.question = obj["question"].get<std::string>();
        qa.ground_truth = obj["answer"].get<std::string>();
        qa.meta_json = obj.contains("meta") ? obj["meta"].dump() : "{}";
        if (qa.question.empty() || qa.ground_truth.empty()) {
            throw ParseError(where + ": question and answer must be non-empty");
        }
        out.push_back(std::move(qa));
    }
    return out;
}

double answer_similarity(const std::string& generated, const std::string& truth,
                         EmbeddingProvider& embedder) {
    if (generated.empty() || truth.empty()) throw Error("answer_similarity: empty input");
    const auto vecs = embedder.embed_texts({generated, truth});
    return clamp01(cosine_similarity(vecs[0], vecs[1]));
}

double correctness_score(int tp, int fp, int fn, double similarity) {
    if (tp < 0 || fp < 0 || fn < 0) throw Error("correctness counts must be non-negative");
    const double denom = static_cast<double>(tp) + 0.5 * static_cast<double>(fp + fn);
    const double f1 = denom == 0.0 ? 1.0 : static_cast<double>(tp) / denom;
    return 0.75 * f1 + 0.25 * clamp01(similarity);
}

CorrectnessResult answer_correctness(const std::string& generated, const std::string& truth,
                                     LlmClient* llm, EmbeddingProvider& embedder) {
    if (generated.empty() || truth.empty()) throw Error("answer_correctness: empty input");
    const double similarity = answer_similarity(generated, truth, embedder);
    if (llm == nullptr) return heuristic_correctness(generated, truth, similarity);

    LlmRequest req;
    req.system = "You grade answers by factual overlap.";
    req.prompt = "Decompose both answers into atomic statements. Count TP (generated "
                 "statements supported by the reference), FP (generated statements not "
                 "supported), and FN (reference statements missing from the generated "
                 "answer). Reply exactly in the form TP=<n> FP=<n> FN=<n>.\n\nGENERATED:\n" +
                 generated + "\n\nREFERENCE:\n" + truth;
    req.temperature = 0.0;
    const std::string reply = llm->complete(req);

    static const std::regex kCounts(R"(TP\s*=\s*(\d+)[\s,;]+FP\s*=\s*(\d+)[\s,;]+FN\s*=\s*(\d+))");
    std::smatch m;
    if (std::regex_search(reply, m, kCounts)) {
        CorrectnessResult r;
        r.tp = std::stoi(m[1].str());
        r.fp = std::stoi(m[2].str());
        r.fn = std::stoi(m[3].str());
        r.score = correctness_score(r.tp, r.fp, r.fn, similarity);
        return r;
    }
    auto fallback = heuristic_correctness(generated, truth, similarity);
    fallback.used_fallback = true;
    return fallback;
}

RelevancyResult answer_relevancy(const std::string& question, const std::string& generated,
                                 int n, LlmClient& llm, EmbeddingProvider& embedder) {
    if (n < 1) throw ConfigError("relevancy question count must be >= 1");
    if (question.empty() || generated.empty()) throw Error("answer_relevancy: empty input");

    LlmRequest req;
    req.system = "You reverse-engineer questions from answers.";
    req.prompt = "Here is an answer. Write exactly " + std::to_string(n) +
                 " questions that this answer would answer, one per line, nothing "
                 "else.\n\nANSWER:\n" +
                 generated;
    req.temperature = 0.0;
    const std::string reply = llm.complete(req);

    std::vector<std::string> candidates;
    std::istringstream lines(reply);
    std::string line;
    while (std::getline(lines, line) && static_cast<int>(candidates.size()) < n) {
        // Strip list markers like "1. " or "- ".
        std::size_t b = 0;
        while (b < line.size() && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
        std::size_t d = b;
        while (d < line.size() && std::isdigit(static_cast<unsigned char>(line[d]))) ++d;
        if (d > b && d < line.size() && (line[d] == '.' || line[d] == ')')) b = d + 1;
        else if (b < line.size() && (line[b] == '-' || line[b] == '*')) b = b + 1;
        while (b < line.size() && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
        std::size_t e = line.size();
        while (e > b && std::isspace(static_cast<unsigned char>(line[e - 1]))) --e;
        if (e > b) candidates.push_back(line.substr(b, e - b));
    }

    RelevancyResult r;
    if (candidates.empty()) {
        r.no_questions = true;
        return r;
    }
    std::vector<std::string> texts = candidates;
    texts.push_back(question);
    const auto vecs = embedder.embed_texts(texts);
    const Vec& qv = vecs.back();
    double sum = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        sum += cosine_similarity(vecs[i], qv);
    }
    r.questions_used = static_cast<int>(candidates.size());
    r.score = clamp01(sum / static_cast<double>(candidates.size()));
    return r;
}

EvalReport run_eval(const std::vector<QaExample>& dataset, const Stores& stores,
                    const QueryOptions& query_options, const EvalOptions& eval_options,
                    LlmClient& llm, EmbeddingProvider& embedder) {
    EvalReport report;
    report.mode = query_options.mode;
    report.examples.resize(dataset.size());

    std::vector<int> fallbacks(dataset.size(), 0);
    std::vector<int> flagged(dataset.size(), 0);
    parallel_for(dataset.size(), eval_options.max_concurrency, [&](std::size_t i) {
        ExampleResult& ex = report.examples[i];
        ex.index = static_cast<int>(i);
        ex.question = dataset[i].question;
        try {
            Query query;
            query.text = dataset[i].question;
            const auto result = answer_query(query, query_options, stores, llm, embedder);
            ex.answer = result.answer;

            ex.scores.similarity = answer_similarity(ex.answer, dataset[i].ground_truth, embedder);
            const auto correctness = answer_correctness(
                ex.answer, dataset[i].ground_truth,
                eval_options.llm_correctness ? &llm : nullptr, embedder);
            ex.scores.correctness = correctness.score;
            if (correctness.used_fallback) fallbacks[i] = 1;
            const auto relevancy = answer_relevancy(dataset[i].question, ex.answer,
                                                    eval_options.relevancy_questions, llm,
                                                    embedder);
            ex.scores.relevancy = relevancy.score;
            if (relevancy.no_questions) flagged[i] = 1;
        } catch (const std::exception& e) {
            ex.failed = true;
            ex.error = e.what();
        }
    });

    std::vector<double> correctness, similarity, relevancy;
    for (std::size_t i = 0; i < report.examples.size(); ++i) {
        report.correctness_fallbacks += fallbacks[i];
        report.relevancy_flagged += flagged[i];
        const auto& ex = report.examples[i];
        if (ex.failed) {
            ++report.failures;
            continue;
        }
        correctness.push_back(ex.scores.correctness);
        similarity.push_back(ex.scores.similarity);
        relevancy.push_back(ex.scores.relevancy);
    }
    report.n_examples = static_cast<int>(correctness.size());
    report.mean = {mean_of(correctness), mean_of(similarity), mean_of(relevancy)};
    report.stddev = {sample_std(correctness, report.mean.correctness),
                     sample_std(similarity, report.mean.similarity),
                     sample_std(relevancy, report.mean.relevancy)};
    return report;
}

std::string format3(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", value);
    return buf;
}

void write_eval_report(const EvalReport& report, const std::string& json_path,
                       const std::string& csv_path) {
    {
        auto out = open_out(json_path);
        out << "{\n";
        out << "  \"correctness_fallbacks\": " << report.correctness_fallbacks << ",\n";
        out << "  \"examples\": [";
        bool first = true;
        for (const auto& ex : report.examples) {
            if (!first) out << ",";
            first = false;
            out << "\n    {\"answer\": " << jstr(ex.answer)
                << ", \"correctness\": " << format3(ex.scores.correctness)
                << ", \"error\": " << jstr(ex.error)
                << ", \"failed\": " << (ex.failed ? "true" : "false")
                << ", \"index\": " << ex.index << ", \"question\": " << jstr(ex.question)
                << ", \"relevancy\": " << format3(ex.scores.relevancy)
                << ", \"similarity\": " << format3(ex.scores.similarity) << "}";
        }
        out << "\n  ],\n";
        out << "  \"failures\": " << report.failures << ",\n";
        out << "  \"mean\": {\"correctness\": " << format3(report.mean.correctness)
            << ", \"relevancy\": " << format3(report.mean.relevancy)
            << ", \"similarity\": " << format3(report.mean.similarity) << "},\n";
        out << "  \"mode\": " << jstr(report.mode) << ",\n";
        out << "  \"n\": " << report.n_examples << ",\n";
        out << "  \"relevancy_flagged\": " << report.relevancy_flagged << ",\n";
        out << "  \"std\": {\"correctness\": " << format3(report.stddev.correctness)
            << ", \"relevancy\": " << format3(report.stddev.relevancy)
            << ", \"similarity\": " << format3(report.stddev.similarity) << "},\n";
        out << "  \"std_kind\": \"sample\"\n";
        out << "}\n";
    }
    {
        auto out = open_out(csv_path);
        out << "index,correctness,similarity,relevancy,failed\n";
        for (const auto& ex : report.examples) {
            out << ex.index << "," << format3(ex.scores.correctness) << ","
                << format3(ex.scores.similarity) << "," << format3(ex.scores.relevancy) << ","
                << (ex.failed ? 1 : 0) << "\n";
        }
    }
}

std::vector<SweepRow> buffer_sweep(const std::vector<Document>& docs,
                                   const std::vector<QaExample>& qa,
                                   const std::vector<int>& buffers, const SweepOptions& options,
                                   LlmClient& llm, EmbeddingProvider& embedder) {
    if (buffers.empty()) throw ConfigError("buffer sweep needs at least one buffer value");
    if (options.modes.empty()) throw ConfigError("buffer sweep needs at least one mode");

    std::vector<SweepRow> rows;
    for (const int buffer : buffers) {
        SweepRow row;
        row.buffer = buffer;
        try {
            const auto started = std::chrono::steady_clock::now();

            ChunkingConfig chunking = options.chunking;
            chunking.buffer_size = buffer;
            std::vector<Chunk> chunks;
            for (const auto& doc : docs) {
                auto piece = chunk_document(doc, chunking, embedder);
                for (auto& c : piece) chunks.push_back(std::move(c));
            }
            Stores stores;
            stores.index = make_index(chunks);

            auto built = build_graph(chunks, llm, embedder, options.build);
            row.chunks = static_cast<int>(chunks.size());
            row.nodes = static_cast<int>(built.graph.entities.size());
            row.edges = static_cast<int>(built.graph.relations.size());
            stores.graph = std::move(built.graph);
            stores.communities = std::move(built.communities);

            row.time_sec =
                options.zero_time
                    ? 0.0
                    : std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                          .count();

            for (const auto& mode : options.modes) {
                QueryOptions query = options.query;
                query.mode = mode;
                const auto report =
                    run_eval(qa, stores, query, options.eval, llm, embedder);
                ModeMetrics metrics;
                metrics.mean = report.mean;
                metrics.stddev = report.stddev;
                metrics.failures = report.failures;
                row.mode_metrics.emplace_back(mode, metrics);
            }
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
    auto out = open_out(path);
    out << "buffer,time_sec,chunks,nodes,edges,correctness_mean,correctness_std,"
           "similarity_mean,similarity_std,relevancy_mean,relevancy_std\n";
    for (const auto& row : rows) {
        if (!row.error.empty()) {
            out << row.buffer << ",,,,,,,,,,\n";
            continue;
        }
        const ModeMetrics& m = row.mode_metrics.front().second;
        out << row.buffer << "," << format3(row.time_sec) << "," << row.chunks << ","
            << row.nodes << "," << row.edges << "," << format3(m.mean.correctness) << ","
            << format3(m.stddev.correctness) << "," << format3(m.mean.similarity) << ","
            << format3(m.stddev.similarity) << "," << format3(m.mean.relevancy) << ","
            << format3(m.stddev.relevancy) << "\n";
    }
}

void write_sweep_json(const std::vector<SweepRow>& rows, const std::string& path) {
    auto out = open_out(path);
    out << "{\"rows\": [";
    bool first = true;
    for (const auto& row : rows) {
        if (!first) out << ",";
        first = false;
        out << "\n  {\"buffer\": " << row.buffer;
        if (!row.error.empty()) {
            out << ", \"error\": " << jstr(row.error) << "}";
            continue;
        }
        out << ", \"chunks\": " << row.chunks << ", \"edges\": " << row.edges
            << ", \"metrics\": {";
        bool fm = true;
        for (const auto& [mode, m] : row.mode_metrics) {
            if (!fm) out << ", ";
            fm = false;
            out << jstr(mode) << ": {\"correctness_mean\": " << format3(m.mean.correctness)
                << ", \"correctness_std\": " << format3(m.stddev.correctness)
                << ", \"failures\": " << m.failures
                << ", \"relevancy_mean\": " << format3(m.mean.relevancy)
                << ", \"relevancy_std\": " << format3(m.stddev.relevancy)
                << ", \"similarity_mean\": " << format3(m.mean.similarity)
                << ", \"similarity_std\": " << format3(m.stddev.similarity) << "}";
        }
        out << "}, \"nodes\": " << row.nodes << ", \"time_sec\": " << format3(row.time_sec)
            << "}";
    }
    out << "\n]}\n";
}

} // namespace semrag
