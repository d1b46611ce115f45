#include "semrag/store.hpp"

#include "semrag/error.hpp"
#include "semrag/hash.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace semrag {

namespace {

std::string jstr(const std::string& s) { return nlohmann::json(s).dump(); }

Vec vec_from_json(const nlohmann::json& arr, const char* where) {
    if (!arr.is_array()) throw ParseError(std::string(where) + ": embedding is not an array");
    Vec v(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number()) {
            throw ParseError(std::string(where) + ": embedding entry is not a number");
        }
        v[static_cast<Eigen::Index>(i)] = static_cast<float>(arr[i].get<double>());
    }
    return v;
}

void require_fields(const nlohmann::json& obj, std::initializer_list<const char*> fields,
                    const std::string& where) {
    if (!obj.is_object()) throw ParseError(where + ": not a JSON object");
    for (const char* f : fields) {
        if (!obj.contains(f)) throw ParseError(where + ": missing field '" + f + "'");
    }
}

std::string parts_to_json(const std::vector<DescriptionPart>& parts) {
    std::string out = "[";
    bool first = true;
    for (const auto& p : parts) {
        if (!first) out += ",";
        first = false;
        out += "{\"chunk_id\":" + jstr(p.chunk_id) + ",\"text\":" + jstr(p.text) + "}";
    }
    out += "]";
    return out;
}

std::vector<DescriptionPart> parts_from_json(const nlohmann::json& arr, const std::string& where) {
    if (!arr.is_array()) throw ParseError(where + ": 'parts' is not an array");
    std::vector<DescriptionPart> parts;
    for (const auto& p : arr) {
        require_fields(p, {"chunk_id", "text"}, where);
        parts.push_back({p["chunk_id"].get<std::string>(), p["text"].get<std::string>()});
    }
    return parts;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + path);
    return out;
}

} // namespace

std::string round9(float value) {
    if (!std::isfinite(value)) throw Error("cannot serialize non-finite number");
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(value));
    return buf;
}

std::string vec_to_json(const Vec& v) {
    std::string out = "[";
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += round9(v[i]);
    }
    out += "]";
    return out;
}

std::vector<std::pair<int, nlohmann::json>> read_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path);
    std::vector<std::pair<int, nlohmann::json>> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto parsed = nlohmann::json::parse(line, nullptr, false);
        if (parsed.is_discarded()) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": malformed JSON line");
        }
        out.emplace_back(line_no, std::move(parsed));
    }
    return out;
}

std::string file_fnv1a(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path);
    std::uint64_t state = kFnvOffset;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        state = fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), state);
    }
    return hex64(state);
}

std::string chunk_content_hash(const std::vector<Chunk>& chunks) {
    std::uint64_t state = kFnvOffset;
    for (const auto& c : chunks) {
        state = fnv1a64(c.id, state);
        state = fnv1a64(std::string_view("\x1f", 1), state);
        state = fnv1a64(c.text, state);
        state = fnv1a64(std::string_view("\x1e", 1), state);
    }
    return hex64(state);
}

ChunkIndex make_index(std::vector<Chunk> chunks) {
    ChunkIndex index;
    index.content_hash = chunk_content_hash(chunks);
    for (const auto& c : chunks) {
        if (c.embedding.size() == 0) throw Error("chunk " + c.id + " has no embedding");
        if (index.dim == 0) index.dim = static_cast<int>(c.embedding.size());
        if (static_cast<int>(c.embedding.size()) != index.dim) {
            throw Error("chunk " + c.id + " dimension " + std::to_string(c.embedding.size()) +
                        " != index dimension " + std::to_string(index.dim));
        }
    }
    index.chunks = std::move(chunks);
    return index;
}

void save_index(const ChunkIndex& index, const std::string& path) {
    auto out = open_out(path);
    for (const auto& c : index.chunks) {
        out << "{\"id\":" << jstr(c.id) << ",\"doc_id\":" << jstr(c.doc_id)
            << ",\"text\":" << jstr(c.text) << ",\"tokens\":" << c.token_count
            << ",\"range\":[" << c.range_lo << "," << c.range_hi
            << "],\"embedding\":" << vec_to_json(c.embedding) << "}\n";
    }
}

ChunkIndex load_index(const std::string& path, const std::string& expected_hash) {
    std::vector<Chunk> chunks;
    for (const auto& [line_no, obj] : read_jsonl(path)) {
        const std::string where = path + ":" + std::to_string(line_no);
        require_fields(obj, {"id", "doc_id", "text", "tokens", "range", "embedding"}, where);
        Chunk c;
        c.id = obj["id"].get<std::string>();
        c.doc_id = obj["doc_id"].get<std::string>();
        c.text = obj["text"].get<std::string>();
        c.token_count = obj["tokens"].get<int>();
        if (!obj["range"].is_array() || obj["range"].size() != 2) {
            throw ParseError(where + ": 'range' must be [lo, hi]");
        }
        c.range_lo = obj["range"][0].get<int>();
        c.range_hi = obj["range"][1].get<int>();
        c.embedding = vec_from_json(obj["embedding"], where.c_str());
        const auto hash_pos = c.id.rfind('#');
        if (hash_pos != std::string::npos && hash_pos + 1 < c.id.size()) {
            c.sub_index = std::stoi(c.id.substr(hash_pos + 1));
        }
        chunks.push_back(std::move(c));
    }
    ChunkIndex index = make_index(std::move(chunks));
    if (!expected_hash.empty() && index.content_hash != expected_hash) {
        index.integrity_ok = false;
    }
    return index;
}

std::vector<std::pair<std::string, double>> knn(const ChunkIndex& index, const Vec& query,
                                                int k) {
    if (k <= 0 || index.chunks.empty()) return {};
    if (static_cast<int>(query.size()) != index.dim) {
        throw Error("query dimension " + std::to_string(query.size()) +
                    " != index dimension " + std::to_string(index.dim));
    }
    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(index.chunks.size());
    for (const auto& c : index.chunks) {
        scored.emplace_back(c.id, cosine_similarity(query, c.embedding));
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (static_cast<std::size_t>(k) < scored.size()) scored.resize(static_cast<std::size_t>(k));
    return scored;
}

void save_graph(const KnowledgeGraph& graph, const std::string& entities_path,
                const std::string& relations_path) {
    {
        auto out = open_out(entities_path);
        for (const auto& [id, e] : graph.entities) {
            out << "{\"id\":" << jstr(e.id) << ",\"name\":" << jstr(e.name)
                << ",\"type\":" << jstr(e.entity_type)
                << ",\"description\":" << jstr(e.description)
                << ",\"parts\":" << parts_to_json(e.parts) << ",\"chunks\":[";
            bool first = true;
            for (const auto& cid : e.source_chunk_ids) {
                if (!first) out << ",";
                first = false;
                out << jstr(cid);
            }
            out << "],\"embedding\":" << vec_to_json(e.embedding) << "}\n";
        }
    }
    {
        auto out = open_out(relations_path);
        for (const auto& [key, r] : graph.relations) {
            out << "{\"src\":" << jstr(r.src) << ",\"dst\":" << jstr(r.dst)
                << ",\"description\":" << jstr(r.description)
                << ",\"parts\":" << parts_to_json(r.parts) << ",\"weight\":" << r.weight
                << "}\n";
        }
    }
}

KnowledgeGraph load_graph(const std::string& entities_path, const std::string& relations_path) {
    KnowledgeGraph graph;
    for (const auto& [line_no, obj] : read_jsonl(entities_path)) {
        const std::string where = entities_path + ":" + std::to_string(line_no);
        require_fields(obj, {"id", "name", "type", "description", "parts", "chunks", "embedding"},
                       where);
        Entity e;
        e.id = obj["id"].get<std::string>();
        e.name = obj["name"].get<std::string>();
        e.entity_type = obj["type"].get<std::string>();
        e.description = obj["description"].get<std::string>();
        e.parts = parts_from_json(obj["parts"], where);
        for (const auto& cid : obj["chunks"]) e.source_chunk_ids.insert(cid.get<std::string>());
        e.embedding = vec_from_json(obj["embedding"], where.c_str());
        graph.entities.emplace(e.id, std::move(e));
    }
    for (const auto& [line_no, obj] : read_jsonl(relations_path)) {
        const std::string where = relations_path + ":" + std::to_string(line_no);
        require_fields(obj, {"src", "dst", "description", "parts", "weight"}, where);
        Relation r;
        r.src = obj["src"].get<std::string>();
        r.dst = obj["dst"].get<std::string>();
        r.description = obj["description"].get<std::string>();
        r.parts = parts_from_json(obj["parts"], where);
        r.weight = obj["weight"].get<int>();
        if (!graph.entities.count(r.src) || !graph.entities.count(r.dst)) {
            throw ParseError(where + ": relation endpoint missing from entities file");
        }
        graph.relations.emplace(RelationKey{r.src, r.dst}, std::move(r));
    }
    return graph;
}

void save_communities(const std::vector<Community>& communities, const std::string& path) {
    auto out = open_out(path);
    out << "{\"communities\":[";
    bool first = true;
    for (const auto& c : communities) {
        if (!first) out << ",";
        first = false;
        out << "\n  {\"id\":" << jstr(c.id) << ",\"level\":" << c.level << ",\"members\":[";
        bool fm = true;
        for (const auto& m : c.members) {
            if (!fm) out << ",";
            fm = false;
            out << jstr(m);
        }
        out << "],\"relations\":[";
        bool fr = true;
        for (const auto& key : c.internal_relations) {
            if (!fr) out << ",";
            fr = false;
            out << "[" << jstr(key.first) << "," << jstr(key.second) << "]";
        }
        out << "],\"parent\":" << (c.parent ? jstr(*c.parent) : "null") << ",\"report\":";
        if (c.report) {
            out << "{\"summary\":" << jstr(c.report->summary_text)
                << ",\"rank\":" << round9(static_cast<float>(c.report->rank))
                << ",\"embedding\":" << vec_to_json(c.report->embedding) << "}";
        } else {
            out << "null";
        }
        out << "}";
    }
    out << "\n]}\n";
}

std::vector<Community> load_communities(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path);
    auto doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("communities") ||
        !doc["communities"].is_array()) {
        throw ParseError(path + ": expected {\"communities\": [...]}");
    }
    std::vector<Community> out;
    for (const auto& obj : doc["communities"]) {
        require_fields(obj, {"id", "level", "members", "relations", "parent", "report"}, path);
        Community c;
        c.id = obj["id"].get<std::string>();
        c.level = obj["level"].get<int>();
        for (const auto& m : obj["members"]) c.members.push_back(m.get<std::string>());
        for (const auto& key : obj["relations"]) {
            if (!key.is_array() || key.size() != 2) {
                throw ParseError(path + ": relation key must be [src, dst]");
            }
            c.internal_relations.emplace_back(key[0].get<std::string>(),
                                              key[1].get<std::string>());
        }
        if (!obj["parent"].is_null()) c.parent = obj["parent"].get<std::string>();
        if (!obj["report"].is_null()) {
            const auto& rep = obj["report"];
            require_fields(rep, {"summary", "rank", "embedding"}, path);
            CommunityReport report;
            report.community_id = c.id;
            report.summary_text = rep["summary"].get<std::string>();
            report.rank = rep["rank"].get<double>();
            report.embedding = vec_from_json(rep["embedding"], path.c_str());
            c.report = std::move(report);
        }
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<Document> read_documents(const std::string& path) {
    std::vector<Document> docs;
    for (const auto& [line_no, obj] : read_jsonl(path)) {
        const std::string where = path + ":" + std::to_string(line_no);
        require_fields(obj, {"id", "text"}, where);
        Document d;
        d.id = obj["id"].get<std::string>();
        d.text = obj["text"].get<std::string>();
        d.meta_json = obj.contains("meta") ? obj["meta"].dump() : "{}";
        if (d.id.empty()) throw ParseError(where + ": document id is empty");
        docs.push_back(std::move(d));
    }
    return docs;
}

void write_documents(const std::vector<Document>& docs, const std::string& path) {
    auto out = open_out(path);
    for (const auto& d : docs) {
        out << "{\"id\":" << jstr(d.id) << ",\"text\":" << jstr(d.text)
            << ",\"meta\":" << d.meta_json << "}\n";
    }
}

nlohmann::ordered_json load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return nlohmann::ordered_json::object();
    auto doc = nlohmann::ordered_json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw ParseError(path + ": manifest is not a JSON object");
    }
    return doc;
}

void save_manifest(const nlohmann::ordered_json& manifest, const std::string& path) {
    auto out = open_out(path);
    out << manifest.dump(2) << "\n";
}

} // namespace semrag
