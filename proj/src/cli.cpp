#include "semrag/cli.hpp"

#include "semrag/config.hpp"
#include "semrag/error.hpp"
#include "semrag/evalkit.hpp"
#include "semrag/kgraph.hpp"
#include "semrag/retrieval.hpp"
#include "semrag/store.hpp"
#include "semrag/text.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace semrag {

namespace {

std::string iso_now() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string manifest_path(const RunConfig& cfg) { return cfg.path_in_out("manifest.json"); }

// Artifact gate for every stage consumer: the file must exist, and unless
// --force is given its hash must match what the producing stage recorded.
std::string ensure_artifact(const RunConfig& cfg, const nlohmann::ordered_json& manifest,
                            const std::string& stage, const std::string& filename,
                            const std::string& hash_key, const std::string& producer,
                            bool force) {
    std::string path = cfg.path_in_out(filename);
    if (!std::filesystem::exists(path))
        throw ConfigError(filename + " not found in " + cfg.out_dir + "; run `semrag " +
                          producer + "` first");
    if (force) return path;
    if (!manifest.contains("stages") || !manifest["stages"].contains(stage))
        throw ConfigError("manifest has no '" + stage + "' stage record for " + filename +
                          "; run `semrag " + producer + "` or pass --force");
    const auto& rec = manifest["stages"][stage];
    if (!rec.contains(hash_key) || !rec[hash_key].is_string())
        throw ConfigError("manifest '" + stage + "' record lacks " + hash_key +
                          "; re-run `semrag " + producer + "` or pass --force");
    if (file_fnv1a(path) != rec[hash_key].get<std::string>())
        throw ConfigError(filename + " is stale (hash differs from the '" + stage +
                          "' manifest record); re-run `semrag " + producer +
                          "` or pass --force");
    return path;
}

// Loads the chunk index, verifying the content hash recorded at chunk time.
ChunkIndex load_checked_index(const nlohmann::ordered_json& manifest, const std::string& path) {
    std::string expected;
    if (manifest.contains("stages") && manifest["stages"].contains("chunk")) {
        const auto& rec = manifest["stages"]["chunk"];
        if (rec.contains("content_hash") && rec["content_hash"].is_string())
            expected = rec["content_hash"].get<std::string>();
    }
    ChunkIndex index = load_index(path, expected);
    if (!index.integrity_ok)
        std::fprintf(stderr,
                     "warning: %s content differs from the hash recorded at chunk time\n",
                     path.c_str());
    return index;
}

// Opens exactly the stores the retrieval mode needs, gated by manifest hashes.
Stores open_stores(const RunConfig& cfg, const nlohmann::ordered_json& manifest,
                   const std::string& mode, bool force) {
    Stores stores;
    if (mode == "naive" || mode == "local") {
        std::string path =
            ensure_artifact(cfg, manifest, "chunk", "chunks.jsonl", "chunks_hash", "chunk", force);
        stores.index = load_checked_index(manifest, path);
    }
    if (mode == "local") {
        std::string epath = ensure_artifact(cfg, manifest, "graph", "entities.jsonl",
                                            "entities_hash", "graph", force);
        std::string rpath = ensure_artifact(cfg, manifest, "graph", "relations.jsonl",
                                            "relations_hash", "graph", force);
        stores.graph = load_graph(epath, rpath);
    }
    if (mode == "global") {
        std::string cpath = ensure_artifact(cfg, manifest, "graph", "communities.json",
                                            "communities_hash", "graph", force);
        stores.communities = load_communities(cpath);
    }
    if (mode != "naive" && mode != "local" && mode != "global")
        throw ConfigError("unknown retrieval mode: " + mode);
    return stores;
}

int cmd_ingest(const RunConfig& cfg, const std::string& corpus_path) {
    std::vector<Document> docs = read_documents(corpus_path);

    std::set<std::string> ids;
    for (const auto& d : docs)
        if (!ids.insert(d.id).second)
            throw ConfigError("duplicate document id '" + d.id + "' in " + corpus_path);

    int merged = 0;
    if (cfg.ingest_merge_duplicates) {
        std::set<std::string> seen;
        std::vector<Document> kept;
        kept.reserve(docs.size());
        for (auto& d : docs) {
            if (seen.insert(normalize_name(d.text)).second)
                kept.push_back(std::move(d));
            else
                ++merged;
        }
        docs = std::move(kept);
    }

    std::filesystem::create_directories(cfg.out_dir);
    std::string out_path = cfg.path_in_out("documents.jsonl");
    write_documents(docs, out_path);

    auto manifest = load_manifest(manifest_path(cfg));
    if (!manifest.contains("created")) manifest["created"] = iso_now();
    manifest["seed"] = cfg.seed;
    manifest["stages"]["ingest"] = {
        {"corpus", corpus_path},
        {"corpus_hash", file_fnv1a(corpus_path)},
        {"documents", static_cast<int>(docs.size())},
        {"merged", merged},
        {"documents_hash", file_fnv1a(out_path)},
        {"finished", iso_now()},
    };
    save_manifest(manifest, manifest_path(cfg));

    std::printf("ingested %zu documents (%d merged) -> %s\n", docs.size(), merged,
                out_path.c_str());
    return 0;
}

int cmd_chunk(const RunConfig& cfg, bool force) {
    auto manifest = load_manifest(manifest_path(cfg));
    std::string docs_path = ensure_artifact(cfg, manifest, "ingest", "documents.jsonl",
                                            "documents_hash", "ingest", force);
    std::vector<Document> docs = read_documents(docs_path);

    auto embedder = make_embedder(cfg.embedding);
    std::vector<Chunk> chunks;
    for (const auto& doc : docs) {
        auto piece = chunk_document(doc, cfg.chunking, *embedder);
        chunks.insert(chunks.end(), piece.begin(), piece.end());
    }
    ChunkIndex index = make_index(std::move(chunks));

    std::string out_path = cfg.path_in_out("chunks.jsonl");
    save_index(index, out_path);

    manifest["providers"]["embedding"] = embedder->identity();
    manifest["stages"]["chunk"] = {
        {"documents_hash", file_fnv1a(docs_path)},
        {"buffer", cfg.chunking.buffer_size},
        {"threshold_mode",
         cfg.chunking.threshold_mode == ChunkingConfig::ThresholdMode::absolute ? "absolute"
                                                                                : "percentile"},
        {"chunks", static_cast<int>(index.chunks.size())},
        {"dim", index.dim},
        {"content_hash", index.content_hash},
        {"chunks_hash", file_fnv1a(out_path)},
        {"finished", iso_now()},
    };
    save_manifest(manifest, manifest_path(cfg));

    std::printf("wrote %zu chunks (buffer=%d, dim=%d) -> %s\n", index.chunks.size(),
                cfg.chunking.buffer_size, index.dim, out_path.c_str());
    return 0;
}

int cmd_graph(const RunConfig& cfg, bool force) {
    auto manifest = load_manifest(manifest_path(cfg));
    std::string chunks_path =
        ensure_artifact(cfg, manifest, "chunk", "chunks.jsonl", "chunks_hash", "chunk", force);
    ChunkIndex index = load_checked_index(manifest, chunks_path);

    auto embedder = make_embedder(cfg.embedding);
    auto llm = make_llm(cfg.llm);

    BuildOptions options;
    options.max_levels = cfg.graph.max_levels;
    options.seed = cfg.seed;
    options.max_concurrency = cfg.graph.max_concurrency;
    options.description_cap_tokens = cfg.graph.description_cap;
    BuildResult result = build_graph(index.chunks, *llm, *embedder, options);

    for (const auto& failure : result.failed_chunks)
        std::fprintf(stderr, "warning: extraction failed: %s\n", failure.c_str());

    std::string epath = cfg.path_in_out("entities.jsonl");
    std::string rpath = cfg.path_in_out("relations.jsonl");
    std::string cpath = cfg.path_in_out("communities.json");
    save_graph(result.graph, epath, rpath);
    save_communities(result.communities, cpath);

    int levels = 0;
    for (const auto& c : result.communities) levels = std::max(levels, c.level + 1);

    manifest["providers"]["embedding"] = embedder->identity();
    manifest["providers"]["llm"] = llm->identity();
    manifest["stages"]["graph"] = {
        {"chunks_hash", file_fnv1a(chunks_path)},
        {"entities", static_cast<int>(result.graph.entities.size())},
        {"relations", static_cast<int>(result.graph.relations.size())},
        {"communities", static_cast<int>(result.communities.size())},
        {"levels", levels},
        {"failed_chunks", static_cast<int>(result.failed_chunks.size())},
        {"skipped_records", result.skipped_records},
        {"condensed_descriptions", result.condensed_descriptions},
        {"build_seconds", result.build_seconds},
        {"entities_hash", file_fnv1a(epath)},
        {"relations_hash", file_fnv1a(rpath)},
        {"communities_hash", file_fnv1a(cpath)},
        {"finished", iso_now()},
    };
    save_manifest(manifest, manifest_path(cfg));

    std::printf("graph: %zu entities, %zu relations, %zu communities (%d levels) -> %s\n",
                result.graph.entities.size(), result.graph.relations.size(),
                result.communities.size(), levels, cfg.out_dir.c_str());
    if (result.skipped_records > 0)
        std::printf("skipped %d malformed extraction records\n", result.skipped_records);
    return 0;
}

int cmd_query(const RunConfig& cfg, const std::string& question, bool show_context, bool force) {
    auto manifest = load_manifest(manifest_path(cfg));
    Stores stores = open_stores(cfg, manifest, cfg.query.mode, force);

    auto embedder = make_embedder(cfg.embedding);
    auto llm = make_llm(cfg.llm);

    Query query{question, {}};
    QueryResult result = answer_query(query, cfg.query, stores, *llm, *embedder);

    std::printf("%s\n", result.answer.c_str());
    if (show_context) {
        std::printf("--- context: %zu items, %d tokens, mode=%s ---\n",
                    result.context.items.size(), result.context.total_tokens,
                    result.context.mode.c_str());
        int rank = 1;
        for (const auto& item : result.context.items) {
            const char* kind = item.kind == ContextItem::Kind::chunk    ? "chunk"
                               : item.kind == ContextItem::Kind::entity ? "entity"
                                                                        : "point";
            std::printf("%d. [%s] %s score=%s\n%s\n", rank++, item.source_id.c_str(), kind,
                        format3(item.score).c_str(), item.text.c_str());
        }
    }
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& qa_path, bool force) {
    auto manifest = load_manifest(manifest_path(cfg));
    Stores stores = open_stores(cfg, manifest, cfg.query.mode, force);
    std::vector<QaExample> qa = read_qa(qa_path);

    auto embedder = make_embedder(cfg.embedding);
    auto llm = make_llm(cfg.llm);

    EvalReport report = run_eval(qa, stores, cfg.query, cfg.eval, *llm, *embedder);

    std::string json_path = cfg.path_in_out("eval.json");
    std::string csv_path = cfg.path_in_out("eval.csv");
    std::filesystem::create_directories(cfg.out_dir);
    write_eval_report(report, json_path, csv_path);

    manifest["stages"]["eval"] = {
        {"qa", qa_path},
        {"qa_hash", file_fnv1a(qa_path)},
        {"mode", report.mode},
        {"examples", report.n_examples},
        {"failures", report.failures},
        {"eval_json_hash", file_fnv1a(json_path)},
        {"finished", iso_now()},
    };
    save_manifest(manifest, manifest_path(cfg));

    std::printf("eval: mode=%s examples=%d failures=%d\n", report.mode.c_str(),
                report.n_examples, report.failures);
    std::printf("correctness %s ± %s\n", format3(report.mean.correctness).c_str(),
                format3(report.stddev.correctness).c_str());
    std::printf("similarity  %s ± %s\n", format3(report.mean.similarity).c_str(),
                format3(report.stddev.similarity).c_str());
    std::printf("relevancy   %s ± %s\n", format3(report.mean.relevancy).c_str(),
                format3(report.stddev.relevancy).c_str());
    std::printf("wrote %s, %s\n", json_path.c_str(), csv_path.c_str());
    return 0;
}

int cmd_sweep(const RunConfig& cfg, const std::string& qa_path, bool force) {
    auto manifest = load_manifest(manifest_path(cfg));
    std::string docs_path = ensure_artifact(cfg, manifest, "ingest", "documents.jsonl",
                                            "documents_hash", "ingest", force);
    std::vector<Document> docs = read_documents(docs_path);
    std::vector<QaExample> qa = read_qa(qa_path);

    auto embedder = make_embedder(cfg.embedding);
    auto llm = make_llm(cfg.llm);

    SweepOptions options;
    options.chunking = cfg.chunking;
    options.build.max_levels = cfg.graph.max_levels;
    options.build.seed = cfg.seed;
    options.build.max_concurrency = cfg.graph.max_concurrency;
    options.build.description_cap_tokens = cfg.graph.description_cap;
    options.query = cfg.query;
    options.eval = cfg.eval;
    options.modes = cfg.sweep.modes;
    options.zero_time = cfg.deterministic_timing();

    auto started = std::chrono::steady_clock::now();
    std::vector<SweepRow> rows = buffer_sweep(docs, qa, cfg.sweep.buffers, options, *llm,
                                              *embedder);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
                      .count();

    std::string csv_path = cfg.path_in_out("sweep.csv");
    std::string json_path = cfg.path_in_out("sweep.json");
    write_sweep_csv(rows, csv_path);
    write_sweep_json(rows, json_path);

    manifest["providers"]["embedding"] = embedder->identity();
    manifest["providers"]["llm"] = llm->identity();
    manifest["stages"]["sweep"] = {
        {"qa", qa_path},
        {"qa_hash", file_fnv1a(qa_path)},
        {"buffers", cfg.sweep.buffers},
        {"modes", cfg.sweep.modes},
        {"rows", static_cast<int>(rows.size())},
        {"wall_seconds", wall},
        {"sweep_csv_hash", file_fnv1a(csv_path)},
        {"finished", iso_now()},
    };
    save_manifest(manifest, manifest_path(cfg));

    for (const auto& row : rows) {
        if (!row.error.empty()) {
            std::printf("buffer=%d FAILED: %s\n", row.buffer, row.error.c_str());
            continue;
        }
        std::string metrics;
        for (const auto& [mode, m] : row.mode_metrics)
            metrics += " " + mode + "=" + format3(m.mean.correctness);
        std::printf("buffer=%d chunks=%d nodes=%d edges=%d correctness:%s\n", row.buffer,
                    row.chunks, row.nodes, row.edges, metrics.c_str());
    }
    std::printf("wrote %s, %s\n", csv_path.c_str(), json_path.c_str());
    return 0;
}

std::vector<int> parse_buffers_csv(const std::string& csv) {
    std::vector<int> out;
    std::string cur;
    auto flush = [&] {
        if (cur.empty()) throw ConfigError("--buffers: empty element in '" + csv + "'");
        size_t pos = 0;
        int v = 0;
        try {
            v = std::stoi(cur, &pos);
        } catch (const std::exception&) {
            throw ConfigError("--buffers: '" + cur + "' is not an integer");
        }
        if (pos != cur.size()) throw ConfigError("--buffers: '" + cur + "' is not an integer");
        if (v < 0) throw ConfigError("--buffers: buffer sizes must be >= 0");
        out.push_back(v);
        cur.clear();
    };
    for (char c : csv) {
        if (c == ',')
            flush();
        else if (!std::isspace(static_cast<unsigned char>(c)))
            cur += c;
    }
    flush();
    return out;
}

} // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"semantic chunking + knowledge graph RAG pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::string corpus_path, question, qa_path;
    std::string mode, stub_llm_path, buffers_csv;
    std::uint64_t seed = 0;
    int buffer = 0, k = 0, top_k_reports = 0, window_l = 0;
    double tau_e = 0.0, tau_d = 0.0;
    bool stub_embed = false, show_context = false, force = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "config file (or env SEMRAG_CONFIG)");
        sub->add_option("--seed", seed, "override the run seed");
        sub->add_option("--stub-llm", stub_llm_path, "use the scripted stub LLM");
        sub->add_flag("--stub-embed", stub_embed, "use the deterministic stub embedder");
        sub->add_flag("--force", force, "skip manifest staleness checks");
    };
    auto add_retrieval = [&](CLI::App* sub) {
        sub->add_option("--mode", mode, "retrieval mode")
            ->check(CLI::IsMember({"naive", "local", "global"}));
        sub->add_option("--k", k, "top-k chunks");
        sub->add_option("--top-k-reports", top_k_reports, "community reports to expand");
        sub->add_option("--tau-e", tau_e, "entity similarity threshold");
        sub->add_option("--tau-d", tau_d, "chunk-to-entity similarity threshold");
        sub->add_option("--window-l", window_l, "context token budget");
    };

    CLI::App* ingest = app.add_subcommand("ingest", "validate and store a corpus");
    ingest->add_option("corpus", corpus_path, "corpus JSONL path")->required();
    add_common(ingest);

    CLI::App* chunk = app.add_subcommand("chunk", "semantic-chunk the ingested corpus");
    chunk->add_option("--buffer", buffer, "sentence buffer size");
    add_common(chunk);

    CLI::App* graph = app.add_subcommand("graph", "build the knowledge graph and communities");
    add_common(graph);

    CLI::App* query = app.add_subcommand("query", "answer one question");
    query->add_option("question", question, "question text")->required();
    add_retrieval(query);
    query->add_flag("--show-context", show_context, "print the ranked context");
    add_common(query);

    CLI::App* eval = app.add_subcommand("eval", "score a QA dataset");
    eval->add_option("qa", qa_path, "QA JSONL path")->required();
    add_retrieval(eval);
    add_common(eval);

    CLI::App* sweep = app.add_subcommand("sweep", "chunk/build/eval across buffer sizes");
    sweep->add_option("qa", qa_path, "QA JSONL path")->required();
    sweep->add_option("--buffers", buffers_csv, "comma-separated buffer sizes");
    add_retrieval(sweep);
    add_common(sweep);

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("semrag");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        auto passed = [&](const std::string& name) {
            const CLI::Option* opt = sub->get_option_no_throw(name);
            return opt != nullptr && opt->count() > 0;
        };

        if (config_path.empty()) {
            const char* env = std::getenv("SEMRAG_CONFIG");
            if (env != nullptr) config_path = env;
        }
        if (config_path.empty())
            throw ConfigError("no config file: pass --config or set SEMRAG_CONFIG");

        RunConfig cfg = RunConfig::load(config_path);
        if (passed("--seed")) {
            cfg.seed = seed;
            cfg.embedding.seed = seed;
        }
        if (passed("--stub-embed")) cfg.embedding.kind = ProviderConfig::Kind::stub;
        if (passed("--stub-llm")) {
            cfg.llm.kind = LlmConfig::Kind::stub;
            cfg.llm.script_path = stub_llm_path;
        }
        if (sub == chunk && passed("--buffer")) cfg.chunking.buffer_size = buffer;
        if (passed("--mode")) {
            cfg.query.mode = mode;
            if (sub == sweep) cfg.sweep.modes = {mode};
        }
        if (passed("--k")) {
            cfg.query.k = k;
            cfg.query.local.k = k;
        }
        if (passed("--top-k-reports")) cfg.query.global.top_K_reports = top_k_reports;
        if (passed("--tau-e")) cfg.query.local.tau_e = tau_e;
        if (passed("--tau-d")) cfg.query.local.tau_d = tau_d;
        if (passed("--window-l")) {
            cfg.query.local.window_L = window_l;
            cfg.query.global.window_L = window_l;
        }
        if (sub == sweep && passed("--buffers"))
            cfg.sweep.buffers = parse_buffers_csv(buffers_csv);
        cfg.validate();

        if (sub == ingest) return cmd_ingest(cfg, corpus_path);
        if (sub == chunk) return cmd_chunk(cfg, force);
        if (sub == graph) return cmd_graph(cfg, force);
        if (sub == query) return cmd_query(cfg, question, show_context, force);
        if (sub == eval) return cmd_eval(cfg, qa_path, force);
        if (sub == sweep) return cmd_sweep(cfg, qa_path, force);
        throw Error("unreachable subcommand");
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const ParseError& e) {
        std::fprintf(stderr, "input error: %s\n", e.what());
        return 2;
    } catch (const ProviderError& e) {
        std::fprintf(stderr, "provider error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

} // namespace semrag
