#include "semrag/kgraph.hpp"

#include "semrag/leiden.hpp"
#include "semrag/text.hpp"
#include "semrag/util.hpp"

#include <algorithm>
#include <chrono>
#include <mutex>
#include <sstream>

namespace semrag {

namespace {

std::string join_parts(const std::vector<DescriptionPart>& parts) {
    std::string out;
    for (const auto& p : parts) {
        if (!out.empty()) out += '\n';
        out += p.text;
    }
    return out;
}

void sort_dedup(std::vector<DescriptionPart>& parts) {
    std::sort(parts.begin(), parts.end());
    parts.erase(std::unique(parts.begin(), parts.end()), parts.end());
}

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string unquote(std::string field) {
    if (field.size() >= 2 && field.front() == '"' && field.back() == '"') {
        field = field.substr(1, field.size() - 2);
    }
    return trim(field);
}

const char* kExtractionSystem = "You extract entities and relations from text.";

std::string extraction_prompt(const Chunk& chunk) {
    std::string p;
    p += "Extract the entities and relations from the text below. Output one record per "
         "line, formatted exactly as (\"entity\"|NAME|TYPE|DESCRIPTION) or "
         "(\"relation\"|SOURCE|TARGET|DESCRIPTION). Output nothing else.\n\nTEXT:\n";
    p += chunk.text;
    return p;
}

} // namespace

void KnowledgeGraph::add_entity(const std::string& name, const std::string& type,
                                const std::string& description, const std::string& chunk_id) {
    const std::string id = normalize_name(name);
    if (id.empty()) throw Error("entity name normalizes to empty string");
    auto [it, inserted] = entities.try_emplace(id);
    Entity& e = it->second;
    if (inserted) {
        e.id = id;
        e.name = name;
        e.entity_type = type;
    } else {
        if (name < e.name) e.name = name;
        if (e.entity_type.empty()) e.entity_type = type;
        else if (!type.empty() && type < e.entity_type) e.entity_type = type;
    }
    e.parts.push_back({chunk_id, description.empty() ? name : description});
    sort_dedup(e.parts);
    e.description = join_parts(e.parts);
    e.source_chunk_ids.insert(chunk_id);
}

void KnowledgeGraph::add_relation(const std::string& src_name, const std::string& dst_name,
                                  const std::string& description, const std::string& chunk_id,
                                  int weight) {
    std::string a = normalize_name(src_name);
    std::string b = normalize_name(dst_name);
    if (a.empty() || b.empty()) throw Error("relation endpoint normalizes to empty string");
    if (a == b) throw Error("relation endpoints are the same entity: " + a);
    if (b < a) std::swap(a, b);
    auto [it, inserted] = relations.try_emplace({a, b});
    Relation& r = it->second;
    if (inserted) {
        r.src = a;
        r.dst = b;
        r.weight = weight;
    } else {
        r.weight += weight;
    }
    if (!description.empty()) {
        r.parts.push_back({chunk_id, description});
        sort_dedup(r.parts);
        r.description = join_parts(r.parts);
    }
}

ExtractionResult extract_elements(const Chunk& chunk, LlmClient& llm) {
    LlmRequest req;
    req.system = kExtractionSystem;
    req.prompt = extraction_prompt(chunk);
    req.temperature = 0.0;
    std::string reply;
    try {
        reply = llm.complete(req);
    } catch (const Error& e) {
        throw ProviderError("extraction failed for chunk " + chunk.id + ": " + e.what());
    }

    ExtractionResult result;
    struct PendingRelation {
        std::string src, dst, desc;
    };
    std::vector<PendingRelation> pending;

    std::istringstream lines(reply);
    std::string line;
    while (std::getline(lines, line)) {
        std::string rec = trim(line);
        if (rec.empty()) continue;
        if (rec.front() == '(' && rec.back() == ')') rec = rec.substr(1, rec.size() - 2);
        if (rec.find('|') == std::string::npos) continue; // prose, not a record

        std::vector<std::string> fields;
        std::size_t pos = 0;
        while (true) {
            const std::size_t bar = rec.find('|', pos);
            fields.push_back(unquote(rec.substr(pos, bar - pos)));
            if (bar == std::string::npos) break;
            pos = bar + 1;
        }
        std::string tag = fields[0];
        std::transform(tag.begin(), tag.end(), tag.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });

        if (tag == "entity" && fields.size() == 4 && !normalize_name(fields[1]).empty()) {
            result.graph.add_entity(fields[1], fields[2], fields[3], chunk.id);
        } else if (tag == "relation" && fields.size() == 4 &&
                   !normalize_name(fields[1]).empty() && !normalize_name(fields[2]).empty() &&
                   normalize_name(fields[1]) != normalize_name(fields[2])) {
            pending.push_back({fields[1], fields[2], fields[3]});
        } else {
            ++result.skipped_records;
        }
    }

    for (const auto& rel : pending) {
        // Endpoints the LLM never declared become placeholder entities.
        for (const auto& name : {rel.src, rel.dst}) {
            if (!result.graph.entities.count(normalize_name(name))) {
                result.graph.add_entity(name, "", name, chunk.id);
            }
        }
        result.graph.add_relation(rel.src, rel.dst, rel.desc, chunk.id);
    }
    return result;
}

KnowledgeGraph merge_graphs(const std::vector<KnowledgeGraph>& partials) {
    KnowledgeGraph out;
    for (const auto& g : partials) {
        for (const auto& [id, e] : g.entities) {
            auto [it, inserted] = out.entities.try_emplace(id);
            Entity& dst = it->second;
            if (inserted) {
                dst = e;
            } else {
                if (e.name < dst.name) dst.name = e.name;
                if (dst.entity_type.empty()) dst.entity_type = e.entity_type;
                else if (!e.entity_type.empty() && e.entity_type < dst.entity_type) {
                    dst.entity_type = e.entity_type;
                }
                dst.parts.insert(dst.parts.end(), e.parts.begin(), e.parts.end());
                dst.source_chunk_ids.insert(e.source_chunk_ids.begin(), e.source_chunk_ids.end());
            }
            sort_dedup(dst.parts);
            dst.description = join_parts(dst.parts);
        }
        for (const auto& [key, r] : g.relations) {
            auto [it, inserted] = out.relations.try_emplace(key);
            Relation& dst = it->second;
            if (inserted) {
                dst = r;
            } else {
                dst.weight += r.weight;
                dst.parts.insert(dst.parts.end(), r.parts.begin(), r.parts.end());
            }
            sort_dedup(dst.parts);
            dst.description = join_parts(dst.parts);
        }
    }
    return out;
}

std::vector<Community> detect_communities(const KnowledgeGraph& graph, int max_levels,
                                          std::uint64_t seed) {
    std::vector<Community> out;
    if (graph.entities.empty()) return out;

    std::vector<std::string> ids;
    ids.reserve(graph.entities.size());
    std::map<std::string, int> index;
    for (const auto& [id, e] : graph.entities) {
        index.emplace(id, static_cast<int>(ids.size()));
        ids.push_back(id);
    }
    std::vector<WeightedEdge> edges;
    edges.reserve(graph.relations.size());
    for (const auto& [key, r] : graph.relations) {
        edges.push_back({index.at(r.src), index.at(r.dst), static_cast<double>(r.weight)});
    }

    const auto levels = leiden_levels(static_cast<int>(ids.size()), edges, max_levels, seed);

    // community index per (level, community id) -> slot in `out`
    std::vector<std::map<int, std::size_t>> slots(levels.size());
    for (std::size_t l = 0; l < levels.size(); ++l) {
        const auto& memb = levels[l];
        for (std::size_t node = 0; node < memb.size(); ++node) {
            const int c = memb[node];
            auto [it, inserted] = slots[l].try_emplace(c, out.size());
            if (inserted) {
                Community community;
                community.level = static_cast<int>(l);
                community.id = "c" + std::to_string(l) + "_" + std::to_string(c);
                out.push_back(std::move(community));
            }
            out[it->second].members.push_back(ids[node]);
        }
    }
    for (auto& c : out) std::sort(c.members.begin(), c.members.end());

    // Internal relations: both endpoints inside the member set.
    for (auto& c : out) {
        std::set<std::string> member_set(c.members.begin(), c.members.end());
        for (const auto& [key, r] : graph.relations) {
            if (member_set.count(r.src) && member_set.count(r.dst)) {
                c.internal_relations.push_back(key);
            }
        }
    }

    // Parent links: the level l+1 community containing this one's members.
    for (std::size_t l = 0; l + 1 < levels.size(); ++l) {
        for (const auto& [cid, slot] : slots[l]) {
            const auto& first_member = out[slot].members.front();
            const int node = index.at(first_member);
            const int parent_cid = levels[l + 1][static_cast<std::size_t>(node)];
            out[slot].parent = out[slots[l + 1].at(parent_cid)].id;
        }
    }

    std::sort(out.begin(), out.end(), [](const Community& a, const Community& b) {
        return a.level != b.level ? a.level < b.level : a.id < b.id;
    });
    return out;
}

double default_community_rank(const Community& community, const KnowledgeGraph& graph) {
    double weight = 0.0;
    for (const auto& key : community.internal_relations) {
        weight += static_cast<double>(graph.relations.at(key).weight);
    }
    return weight / (1.0 + static_cast<double>(community.members.size()));
}

CommunityReport summarize_community(const Community& community, const KnowledgeGraph& graph,
                                    LlmClient& llm, EmbeddingProvider& embedder,
                                    const RankFn& rank_fn) {
    std::string prompt = "Summarize the following knowledge graph community into a concise "
                         "report covering its main entities and how they relate.\n\nEntities:\n";
    for (const auto& id : community.members) {
        const Entity& e = graph.entities.at(id);
        prompt += "- " + e.name;
        if (!e.entity_type.empty()) prompt += " (" + e.entity_type + ")";
        prompt += ": " + e.description + "\n";
    }
    if (!community.internal_relations.empty()) {
        prompt += "\nRelations:\n";
        for (const auto& key : community.internal_relations) {
            const Relation& r = graph.relations.at(key);
            prompt += "- " + r.src + " -> " + r.dst;
            if (!r.description.empty()) prompt += ": " + r.description;
            prompt += "\n";
        }
    }

    LlmRequest req;
    req.system = "You write community reports for a knowledge graph.";
    req.prompt = prompt;
    req.temperature = 0.0;

    CommunityReport report;
    report.community_id = community.id;
    try {
        report.summary_text = llm.complete(req);
    } catch (const Error& e) {
        throw ProviderError("summarization failed for community " + community.id + ": " +
                            e.what());
    }
    report.rank = rank_fn ? rank_fn(community, graph) : default_community_rank(community, graph);
    report.embedding = embedder.embed_texts({report.summary_text})[0];
    return report;
}

int condense_descriptions(KnowledgeGraph& graph, LlmClient& llm, int cap_tokens,
                          int max_concurrency) {
    std::vector<std::string*> over_cap;
    for (auto& [id, e] : graph.entities) {
        if (count_tokens(e.description) > cap_tokens) over_cap.push_back(&e.description);
    }
    for (auto& [key, r] : graph.relations) {
        if (count_tokens(r.description) > cap_tokens) over_cap.push_back(&r.description);
    }
    std::vector<std::string> failures(over_cap.size());
    parallel_for(over_cap.size(), max_concurrency, [&](std::size_t i) {
        LlmRequest req;
        req.system = "You condense descriptions.";
        req.prompt = "Condense the following description to its essential facts.\n\n" +
                     *over_cap[i];
        req.temperature = 0.0;
        try {
            *over_cap[i] = llm.complete(req);
        } catch (const Error& e) {
            failures[i] = e.what();
        }
    });
    for (const auto& f : failures) {
        if (!f.empty()) throw ProviderError("description condensation failed: " + f);
    }
    return static_cast<int>(over_cap.size());
}

BuildResult build_graph(const std::vector<Chunk>& chunks, LlmClient& llm,
                        EmbeddingProvider& embedder, const BuildOptions& options) {
    const auto started = std::chrono::steady_clock::now();
    BuildResult result;

    std::vector<KnowledgeGraph> partials(chunks.size());
    std::vector<int> skipped(chunks.size(), 0);
    std::vector<std::string> failures(chunks.size());
    parallel_for(chunks.size(), options.max_concurrency, [&](std::size_t i) {
        try {
            auto extracted = extract_elements(chunks[i], llm);
            partials[i] = std::move(extracted.graph);
            skipped[i] = extracted.skipped_records;
        } catch (const Error& e) {
            failures[i] = chunks[i].id + ": " + e.what();
        }
    });
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        result.skipped_records += skipped[i];
        if (!failures[i].empty()) result.failed_chunks.push_back(failures[i]);
    }
    if (!chunks.empty() && result.failed_chunks.size() == chunks.size()) {
        throw ProviderError("extraction failed for all " + std::to_string(chunks.size()) +
                            " chunks; first failure: " + result.failed_chunks.front());
    }

    result.graph = merge_graphs(partials);
    result.condensed_descriptions =
        condense_descriptions(result.graph, llm, options.description_cap_tokens,
                              options.max_concurrency);

    if (!result.graph.entities.empty()) {
        std::vector<std::string> texts;
        texts.reserve(result.graph.entities.size());
        for (const auto& [id, e] : result.graph.entities) {
            texts.push_back(e.name + "\n" + e.description);
        }
        auto vecs = embedder.embed_texts(texts);
        std::size_t i = 0;
        for (auto& [id, e] : result.graph.entities) e.embedding = std::move(vecs[i++]);
    }

    result.communities = detect_communities(result.graph, options.max_levels, options.seed);
    std::vector<std::string> summary_failures(result.communities.size());
    parallel_for(result.communities.size(), options.max_concurrency, [&](std::size_t i) {
        try {
            result.communities[i].report = summarize_community(
                result.communities[i], result.graph, llm, embedder, options.rank_fn);
        } catch (const Error& e) {
            summary_failures[i] = e.what();
        }
    });
    for (const auto& f : summary_failures) {
        if (!f.empty()) throw ProviderError(f);
    }

    result.build_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

} // namespace semrag
