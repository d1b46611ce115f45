#include "semrag/retrieval.hpp"

#include "semrag/text.hpp"
#include "semrag/util.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>

namespace semrag {

namespace {

void sort_ranked(std::vector<ContextItem>& items) {
    std::sort(items.begin(), items.end(), [](const ContextItem& a, const ContextItem& b) {
        return a.score != b.score ? a.score > b.score : a.source_id < b.source_id;
    });
}

/// Greedy packing in rank order; items that would overflow are skipped and
/// scanning continues. window_L <= 0 means unbounded.
RetrievedContext pack_window(std::vector<ContextItem> ranked, int window_L,
                             const std::string& mode) {
    RetrievedContext ctx;
    ctx.mode = mode;
    for (auto& item : ranked) {
        const int tokens = count_tokens(item.text);
        if (window_L > 0 && ctx.total_tokens + tokens > window_L) continue;
        ctx.total_tokens += tokens;
        ctx.items.push_back(std::move(item));
    }
    return ctx;
}

Vec embed_query(const Query& query, EmbeddingProvider& embedder, bool with_history) {
    std::string text;
    if (with_history) {
        for (const auto& h : query.history) {
            text += h;
            text += '\n';
        }
    }
    text += query.text;
    return embedder.embed_texts({text})[0];
}

} // namespace

void LocalSearchConfig::validate() const {
    if (k < 0) throw ConfigError("local search k must be >= 0");
    if (window_L <= 0) throw ConfigError("window_l must be > 0");
}

void GlobalSearchConfig::validate() const {
    if (top_K_reports < 1) throw ConfigError("top_k_reports must be >= 1");
    if (k_points < 0) throw ConfigError("k_points must be >= 0");
    if (window_L <= 0) throw ConfigError("window_l must be > 0");
    if (rank_weight < 0.0 || rank_weight > 1.0) {
        throw ConfigError("rank_weight must be in [0, 1]");
    }
}

const ChunkIndex& Stores::require_index() const {
    ++index_reads;
    if (!index) throw ConfigError("chunk index not built (chunks.jsonl missing); run chunk first");
    return *index;
}

const KnowledgeGraph& Stores::require_graph() const {
    ++graph_reads;
    if (!graph) {
        throw ConfigError("knowledge graph not built (entities.jsonl missing); run graph first");
    }
    return *graph;
}

const std::vector<Community>& Stores::require_communities() const {
    ++community_reads;
    if (!communities) {
        throw ConfigError(
            "community reports not built (communities.json missing); run graph first");
    }
    return *communities;
}

RetrievedContext naive_search(const Query& query, const ChunkIndex& index, int k,
                              EmbeddingProvider& embedder, int window_L) {
    if (k <= 0 || index.chunks.empty()) {
        RetrievedContext ctx;
        ctx.mode = "naive";
        return ctx;
    }
    const Vec qv = embed_query(query, embedder, false);
    const auto top = knn(index, qv, k);

    std::map<std::string, const Chunk*> by_id;
    for (const auto& c : index.chunks) by_id.emplace(c.id, &c);

    std::vector<ContextItem> items;
    items.reserve(top.size());
    for (const auto& [id, score] : top) {
        items.push_back({ContextItem::Kind::chunk, by_id.at(id)->text, score, id});
    }
    return pack_window(std::move(items), window_L, "naive");
}

RetrievedContext local_search(const Query& query, const KnowledgeGraph& graph,
                              const ChunkIndex& index, const LocalSearchConfig& config,
                              EmbeddingProvider& embedder) {
    config.validate();
    RetrievedContext empty;
    empty.mode = "local";
    if (config.k == 0) return empty;

    const Vec qv = embed_query(query, embedder, true);

    std::vector<const Entity*> candidates;
    std::vector<ContextItem> pool;
    for (const auto& [id, e] : graph.entities) {
        if (e.embedding.size() == 0) continue;
        const double sim = cosine_similarity(e.embedding, qv);
        if (sim > config.tau_e) {
            candidates.push_back(&e);
            pool.push_back({ContextItem::Kind::entity, e.name + ": " + e.description, sim,
                            "entity:" + e.id});
        }
    }

    for (const auto& c : index.chunks) {
        bool admitted = false;
        for (const Entity* e : candidates) {
            if (config.affinity == LocalSearchConfig::Affinity::linkage) {
                admitted = e->source_chunk_ids.count(c.id) > 0;
            } else {
                admitted = cosine_similarity(c.embedding, e->embedding) > config.tau_d;
            }
            if (admitted) break;
        }
        if (!admitted) continue;
        pool.push_back(
            {ContextItem::Kind::chunk, c.text, cosine_similarity(c.embedding, qv), c.id});
    }

    sort_ranked(pool);
    if (static_cast<std::size_t>(config.k) < pool.size()) {
        pool.resize(static_cast<std::size_t>(config.k));
    }
    return pack_window(std::move(pool), config.window_L, "local");
}

std::vector<std::string> split_report_points(const std::string& summary_text) {
    constexpr int kMaxPointTokens = 100;

    // Paragraphs are blank-line separated.
    std::vector<std::string> paragraphs;
    std::size_t pos = 0;
    while (pos < summary_text.size()) {
        std::size_t end = summary_text.find("\n\n", pos);
        if (end == std::string::npos) end = summary_text.size();
        std::string para = summary_text.substr(pos, end - pos);
        // Trim outer whitespace.
        const auto b = para.find_first_not_of(" \t\r\n");
        const auto e = para.find_last_not_of(" \t\r\n");
        if (b != std::string::npos) paragraphs.push_back(para.substr(b, e - b + 1));
        pos = end + 2;
    }

    std::vector<std::string> points;
    for (const auto& para : paragraphs) {
        if (count_tokens(para) <= kMaxPointTokens) {
            points.push_back(para);
            continue;
        }
        // Sentence windows of at most kMaxPointTokens; an over-long single
        // sentence stands alone.
        std::string window;
        int window_tokens = 0;
        for (const auto& s : split_sentences(para)) {
            if (!window.empty() && window_tokens + s.token_count > kMaxPointTokens) {
                points.push_back(window);
                window.clear();
                window_tokens = 0;
            }
            if (!window.empty()) window += ' ';
            window += s.text;
            window_tokens += s.token_count;
        }
        if (!window.empty()) points.push_back(window);
    }
    return points;
}

PointScore score_point(const std::string& point_text, const Query& query, LlmClient* llm,
                       EmbeddingProvider& embedder) {
    if (llm != nullptr) {
        LlmRequest req;
        req.system = "You rate how helpful a piece of context is for a question.";
        req.prompt = "Rate the helpfulness of the following point for answering the question. "
                     "Reply with a single integer from 0 to 100.\n\nQUESTION: " +
                     query.text + "\n\nPOINT: " + point_text;
        req.temperature = 0.0;
        const std::string reply = llm->complete(req);

        // First run of digits, taken as the rating when it parses in range.
        std::size_t i = 0;
        while (i < reply.size() && !std::isdigit(static_cast<unsigned char>(reply[i]))) ++i;
        if (i < reply.size()) {
            std::size_t j = i;
            while (j < reply.size() && std::isdigit(static_cast<unsigned char>(reply[j]))) ++j;
            if (j - i <= 3) {
                const int rating = std::stoi(reply.substr(i, j - i));
                if (rating >= 0 && rating <= 100) {
                    return {static_cast<double>(rating) / 100.0, false};
                }
            }
        }
        // Unparseable rating: fall through to the embedding score.
        const auto vecs = embedder.embed_texts({point_text, query.text});
        return {(cosine_similarity(vecs[0], vecs[1]) + 1.0) / 2.0, true};
    }
    const auto vecs = embedder.embed_texts({point_text, query.text});
    return {(cosine_similarity(vecs[0], vecs[1]) + 1.0) / 2.0, false};
}

RetrievedContext global_search(const Query& query, const std::vector<Community>& communities,
                               const GlobalSearchConfig& config, LlmClient* llm,
                               EmbeddingProvider& embedder) {
    config.validate();
    RetrievedContext empty;
    empty.mode = "global";
    empty.metadata["point_scoring"] =
        config.point_scoring == GlobalSearchConfig::PointScoring::llm ? "llm" : "embedding";
    empty.metadata["score_fallbacks"] = "0";
    if (communities.empty() || config.k_points == 0) return empty;

    const Vec qv = embed_query(query, embedder, false);

    struct Scored {
        const Community* community;
        double blend;
    };
    std::vector<Scored> reports;
    double min_rank = 0.0;
    double max_rank = 0.0;
    for (const auto& c : communities) {
        if (!c.report) {
            throw ConfigError("community " + c.id + " has no report; rebuild the graph stage");
        }
        if (reports.empty()) {
            min_rank = max_rank = c.report->rank;
        } else {
            min_rank = std::min(min_rank, c.report->rank);
            max_rank = std::max(max_rank, c.report->rank);
        }
        reports.push_back({&c, 0.0});
    }
    for (auto& r : reports) {
        // Ranks min-max normalized over the report set; a constant rank
        // contributes equally everywhere.
        const double rank_norm =
            max_rank > min_rank ? (r.community->report->rank - min_rank) / (max_rank - min_rank)
                                : 1.0;
        const double sim = cosine_similarity(r.community->report->embedding, qv);
        r.blend = config.rank_weight * rank_norm + (1.0 - config.rank_weight) * sim;
    }
    std::sort(reports.begin(), reports.end(), [](const Scored& a, const Scored& b) {
        return a.blend != b.blend ? a.blend > b.blend : a.community->id < b.community->id;
    });
    if (static_cast<std::size_t>(config.top_K_reports) < reports.size()) {
        reports.resize(static_cast<std::size_t>(config.top_K_reports));
    }

    struct Point {
        std::string text;
        std::string source_id;
    };
    std::vector<Point> points;
    for (const auto& r : reports) {
        const auto texts = split_report_points(r.community->report->summary_text);
        for (std::size_t i = 0; i < texts.size(); ++i) {
            points.push_back({texts[i], r.community->id + ":p" + std::to_string(i)});
        }
    }

    LlmClient* point_llm =
        config.point_scoring == GlobalSearchConfig::PointScoring::llm ? llm : nullptr;
    std::vector<PointScore> scores(points.size());
    parallel_for(points.size(), 4, [&](std::size_t i) {
        scores[i] = score_point(points[i].text, query, point_llm, embedder);
    });

    int fallbacks = 0;
    std::vector<ContextItem> ranked;
    ranked.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (scores[i].used_fallback) ++fallbacks;
        ranked.push_back({ContextItem::Kind::report_point, points[i].text, scores[i].score,
                          points[i].source_id});
    }
    sort_ranked(ranked);
    if (static_cast<std::size_t>(config.k_points) < ranked.size()) {
        ranked.resize(static_cast<std::size_t>(config.k_points));
    }
    auto ctx = pack_window(std::move(ranked), config.window_L, "global");
    ctx.metadata = empty.metadata;
    ctx.metadata["score_fallbacks"] = std::to_string(fallbacks);
    return ctx;
}

std::string assemble_prompt(const RetrievedContext& context, const Query& query,
                            const std::string& template_id) {
    if (template_id != "default") {
        throw ConfigError("unknown prompt template: " + template_id);
    }
    std::string prompt = "Answer the question using only the provided context.\n\nCONTEXT:\n";
    if (context.items.empty()) {
        prompt += "NO CONTEXT\n";
    } else {
        for (const auto& item : context.items) {
            prompt += "[" + item.source_id + "] " + item.text + "\n";
        }
    }
    prompt += "\nQUESTION: " + query.text;
    return prompt;
}

QueryResult answer_query(const Query& query, const QueryOptions& options, const Stores& stores,
                         LlmClient& llm, EmbeddingProvider& embedder) {
    if (query.text.empty()) throw ConfigError("query text is empty");

    RetrievedContext context;
    if (options.mode == "naive") {
        context = naive_search(query, stores.require_index(), options.k, embedder,
                               options.local.window_L);
    } else if (options.mode == "local") {
        context = local_search(query, stores.require_graph(), stores.require_index(),
                               options.local, embedder);
    } else if (options.mode == "global") {
        context = global_search(query, stores.require_communities(), options.global, &llm,
                                embedder);
    } else {
        throw ConfigError("unknown retrieval mode: " + options.mode);
    }

    QueryResult result;
    result.context = std::move(context);
    result.prompt = assemble_prompt(result.context, query, options.template_id);

    LlmRequest req;
    req.system = "You answer questions from provided context.";
    req.prompt = result.prompt;
    req.temperature = options.answer_temperature;
    result.answer = llm.complete(req);
    return result;
}

} // namespace semrag
