#include "semrag/error.hpp"
#include "semrag/kgraph.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <functional>
#include <map>
#include <string>
#include <vector>

using namespace semrag;

namespace {

using test::FnLlm;

Chunk make_chunk(const std::string& id, const std::string& text) {
    Chunk c;
    c.id = id;
    c.doc_id = id.substr(0, id.find(':'));
    c.text = text;
    return c;
}

} // namespace

TEST_CASE("extract_elements: records, prose, and malformed lines") {
    FnLlm llm([](const LlmRequest&) {
        return std::string("Here are the results:\n"
                           "(\"entity\"|Ada Lovelace|person|Wrote the first program)\n"
                           "(\"entity\"|Analytical Engine|machine|Mechanical computer design)\n"
                           "(\"relation\"|Ada Lovelace|Analytical Engine|Ada programmed it)\n"
                           "(\"entity\"|too|few)\n"
                           "(\"banana\"|a|b|c)\n"
                           "some trailing prose\n");
    });
    auto result = extract_elements(make_chunk("d:1-2", "whatever"), llm);

    CHECK(result.skipped_records == 2); // wrong arity + unknown tag; prose is free
    REQUIRE(result.graph.entities.size() == 2);
    REQUIRE(result.graph.relations.size() == 1);

    const auto& ada = result.graph.entities.at("ada lovelace");
    CHECK(ada.name == "Ada Lovelace");
    CHECK(ada.entity_type == "person");
    CHECK(ada.description == "Wrote the first program");
    CHECK(ada.source_chunk_ids.count("d:1-2") == 1);

    RelationKey key{"ada lovelace", "analytical engine"};
    REQUIRE(result.graph.relations.count(key) == 1);
    CHECK(result.graph.relations.at(key).weight == 1);
}

TEST_CASE("extract_elements: undeclared relation endpoints become placeholders") {
    FnLlm llm([](const LlmRequest&) {
        return std::string("(\"relation\"|Alpha Corp|Beta Inc|Alpha acquired Beta)\n");
    });
    auto result = extract_elements(make_chunk("d:1-1", "t"), llm);
    REQUIRE(result.graph.entities.size() == 2);
    const auto& alpha = result.graph.entities.at("alpha corp");
    CHECK(alpha.entity_type == ""); // placeholder
    CHECK(alpha.description == "Alpha Corp");
    CHECK(result.graph.relations.size() == 1);
}

TEST_CASE("extract_elements: self-relations and blank names are skipped") {
    FnLlm llm([](const LlmRequest&) {
        return std::string("(\"relation\"|Same|same|self loop)\n"
                           "(\"entity\"| |x|blank name)\n"
                           "(\"entity\"|Ok|t|fine)\n");
    });
    auto result = extract_elements(make_chunk("d:1-1", "t"), llm);
    CHECK(result.skipped_records == 2);
    CHECK(result.graph.entities.size() == 1);
    CHECK(result.graph.relations.empty());
}

TEST_CASE("extract_elements: prompt carries the chunk text; failure is wrapped") {
    std::string seen_prompt;
    FnLlm llm([&](const LlmRequest& req) {
        seen_prompt = req.prompt;
        return std::string("no records");
    });
    extract_elements(make_chunk("d:3-5", "The quick fox."), llm);
    CHECK(seen_prompt.find("The quick fox.") != std::string::npos);

    FnLlm failing([](const LlmRequest&) -> std::string {
        throw ProviderError("socket closed");
    });
    CHECK_THROWS_WITH_AS(extract_elements(make_chunk("d:9-9", "t"), failing),
                         doctest::Contains("chunk d:9-9"), ProviderError);
}

TEST_CASE("entity merge: smallest surface form, type precedence, joined parts") {
    KnowledgeGraph g;
    g.add_entity("ada LOVELACE", "", "seen second", "c2");
    g.add_entity("Ada Lovelace", "person", "seen first", "c1");
    REQUIRE(g.entities.size() == 1);
    const auto& e = g.entities.at("ada lovelace");
    CHECK(e.name == "Ada Lovelace"); // 'A' < 'a'
    CHECK(e.entity_type == "person"); // empty loses
    // Parts sorted by (chunk, text) and joined with newlines.
    CHECK(e.description == "seen first\nseen second");
    CHECK(e.source_chunk_ids.size() == 2);

    g.add_entity("Ada Lovelace", "person", "seen first", "c1"); // exact duplicate
    CHECK(g.entities.at("ada lovelace").description == "seen first\nseen second");
}

TEST_CASE("entity merge: conflicting types resolve to the smallest") {
    KnowledgeGraph g;
    g.add_entity("X", "writer", "d1", "c1");
    g.add_entity("X", "mathematician", "d2", "c2");
    CHECK(g.entities.at("x").entity_type == "mathematician");
}

TEST_CASE("relation merge: canonical endpoint order and weight accumulation") {
    KnowledgeGraph g;
    g.add_relation("Zeta", "Alpha", "z to a", "c1");
    g.add_relation("Alpha", "Zeta", "a to z", "c2", 2);
    REQUIRE(g.relations.size() == 1);
    RelationKey key{"alpha", "zeta"};
    REQUIRE(g.relations.count(key) == 1);
    const auto& r = g.relations.at(key);
    CHECK(r.weight == 3);
    // Parts sort by source chunk: c1's text precedes c2's.
    CHECK(r.description == "z to a\na to z");

    CHECK_THROWS_AS(g.add_relation("Same", "SAME", "d", "c"), Error);
}

TEST_CASE("merge_graphs: permutation invariant") {
    auto build_parts = [] {
        KnowledgeGraph a, b, c;
        a.add_entity("N1", "t", "from a", "c1");
        a.add_relation("N1", "N2", "r1", "c1");
        b.add_entity("N2", "u", "from b", "c2");
        b.add_entity("N1", "t", "more", "c2");
        c.add_relation("N2", "N3", "r2", "c3");
        c.add_entity("N3", "", "placeholder", "c3");
        return std::vector<KnowledgeGraph>{a, b, c};
    };
    auto parts = build_parts();
    KnowledgeGraph m1 = merge_graphs({parts[0], parts[1], parts[2]});
    KnowledgeGraph m2 = merge_graphs({parts[2], parts[0], parts[1]});
    KnowledgeGraph m3 = merge_graphs({parts[1], parts[2], parts[0]});

    auto fingerprint = [](const KnowledgeGraph& g) {
        std::string s;
        for (const auto& [id, e] : g.entities)
            s += id + "|" + e.name + "|" + e.entity_type + "|" + e.description + ";";
        for (const auto& [k, r] : g.relations)
            s += k.first + "-" + k.second + "|" + r.description + "|" +
                 std::to_string(r.weight) + ";";
        return s;
    };
    CHECK(fingerprint(m1) == fingerprint(m2));
    CHECK(fingerprint(m2) == fingerprint(m3));
    CHECK(m1.entities.size() == 3);
    CHECK(m1.relations.size() == 2);
}

TEST_CASE("detect_communities: two triangles, ids, members, parents") {
    KnowledgeGraph g;
    // Triangle 1: a-b-c; triangle 2: x-y-z; bridge c-x.
    for (const char* n : {"a", "b", "c", "x", "y", "z"}) g.add_entity(n, "t", "node", "c1");
    for (auto [s, d] : std::vector<std::pair<const char*, const char*>>{
             {"a", "b"}, {"b", "c"}, {"a", "c"}, {"x", "y"}, {"y", "z"}, {"x", "z"}}) {
        g.add_relation(s, d, "link", "c1", 3);
    }
    g.add_relation("c", "x", "bridge", "c1", 1);

    auto communities = detect_communities(g, 3, 7);
    REQUIRE(!communities.empty());

    // Ordered by (level, index); ids run 0..K-1 within each level.
    for (std::size_t i = 1; i < communities.size(); ++i) {
        CHECK(communities[i - 1].level <= communities[i].level);
    }
    std::map<int, int> next_index;
    for (const auto& c : communities) {
        CHECK(c.id == "c" + std::to_string(c.level) + "_" +
                          std::to_string(next_index[c.level]++));
        CHECK(std::is_sorted(c.members.begin(), c.members.end()));
        // Internal relations connect members only.
        for (const auto& [s, d] : c.internal_relations) {
            CHECK(std::binary_search(c.members.begin(), c.members.end(), s));
            CHECK(std::binary_search(c.members.begin(), c.members.end(), d));
        }
    }

    // Level 0 separates the triangles.
    std::vector<const Community*> level0;
    for (const auto& c : communities)
        if (c.level == 0) level0.push_back(&c);
    REQUIRE(level0.size() == 2);
    std::vector<std::string> left{"a", "b", "c"}, right{"x", "y", "z"};
    CHECK((level0[0]->members == left || level0[0]->members == right));

    // Parents, when present, contain every member.
    for (const auto& c : communities) {
        if (!c.parent) continue;
        auto parent_it = std::find_if(communities.begin(), communities.end(),
                                      [&](const Community& p) { return p.id == *c.parent; });
        REQUIRE(parent_it != communities.end());
        CHECK(parent_it->level == c.level + 1);
        for (const auto& m : c.members)
            CHECK(std::binary_search(parent_it->members.begin(), parent_it->members.end(), m));
    }
}

TEST_CASE("detect_communities: isolated entity forms a singleton") {
    KnowledgeGraph g;
    g.add_entity("loner", "t", "alone", "c1");
    auto communities = detect_communities(g, 3, 0);
    REQUIRE(communities.size() == 1);
    CHECK(communities[0].members == std::vector<std::string>{"loner"});
    CHECK(communities[0].internal_relations.empty());
    CHECK(communities[0].level == 0);
    CHECK_FALSE(communities[0].parent.has_value());
}

TEST_CASE("default_community_rank: internal weight over size plus one") {
    KnowledgeGraph g;
    g.add_entity("a", "t", "d", "c1");
    g.add_entity("b", "t", "d", "c1");
    g.add_relation("a", "b", "r", "c1", 6);
    Community c;
    c.members = {"a", "b"};
    c.internal_relations = {{"a", "b"}};
    CHECK(default_community_rank(c, g) == doctest::Approx(6.0 / 3.0));

    Community empty;
    empty.members = {"a"};
    CHECK(default_community_rank(empty, g) == doctest::Approx(0.0));
}

TEST_CASE("summarize_community: prompt lists entities then relations in id order") {
    KnowledgeGraph g;
    g.add_entity("alpha", "type-a", "first entity", "c1");
    g.add_entity("beta", "type-b", "second entity", "c1");
    g.add_relation("alpha", "beta", "linked", "c1", 2);

    Community c;
    c.id = "c0_0";
    c.level = 0;
    c.members = {"alpha", "beta"};
    c.internal_relations = {{"alpha", "beta"}};

    std::string seen;
    FnLlm llm([&](const LlmRequest& req) {
        seen = req.prompt;
        return std::string("a tidy summary");
    });
    test::PlantedEmbedder embedder{8};

    auto report = summarize_community(c, g, llm, embedder);
    CHECK(report.community_id == "c0_0");
    CHECK(report.summary_text == "a tidy summary");
    CHECK(report.embedding.size() == 8);
    CHECK(report.rank == doctest::Approx(2.0 / 3.0));

    auto pos_alpha = seen.find("alpha");
    auto pos_beta = seen.find("beta");
    auto pos_linked = seen.find("linked");
    REQUIRE(pos_alpha != std::string::npos);
    REQUIRE(pos_beta != std::string::npos);
    REQUIRE(pos_linked != std::string::npos);
    CHECK(pos_alpha < pos_beta);
    CHECK(pos_beta < pos_linked);
}

TEST_CASE("summarize_community: custom rank function and failure wrapping") {
    KnowledgeGraph g;
    g.add_entity("solo", "t", "d", "c1");
    Community c;
    c.id = "c0_3";
    c.members = {"solo"};

    FnLlm llm([](const LlmRequest&) { return std::string("s"); });
    test::PlantedEmbedder embedder{4};
    auto report = summarize_community(c, g, llm, embedder,
                                      [](const Community&, const KnowledgeGraph&) { return 9.5; });
    CHECK(report.rank == doctest::Approx(9.5));

    FnLlm failing([](const LlmRequest&) -> std::string { throw ProviderError("down"); });
    CHECK_THROWS_WITH_AS(summarize_community(c, g, failing, embedder),
                         doctest::Contains("c0_3"), ProviderError);
}

TEST_CASE("condense_descriptions: rewrites only over-cap descriptions") {
    KnowledgeGraph g;
    std::string longdesc;
    for (int i = 0; i < 60; ++i) longdesc += "word" + std::to_string(i) + " ";
    g.add_entity("big", "t", longdesc, "c1");
    g.add_entity("small", "t", "short", "c1");
    g.add_relation("big", "small", longdesc, "c1");

    FnLlm llm([](const LlmRequest&) { return std::string("condensed"); });
    int rewritten = condense_descriptions(g, llm, /*cap_tokens=*/50, 2);
    CHECK(rewritten == 2);
    CHECK(g.entities.at("big").description == "condensed");
    CHECK(g.entities.at("small").description == "short");
    CHECK(g.relations.begin()->second.description == "condensed");
    CHECK(llm.calls == 2);
}

TEST_CASE("build_graph: end-to-end over scripted chunks") {
    FnLlm llm([](const LlmRequest& req) -> std::string {
        if (req.prompt.find("TEXT:\nchunk one") != std::string::npos) {
            return "(\"entity\"|A|t|in one)\n(\"entity\"|B|t|also one)\n"
                   "(\"relation\"|A|B|one links)";
        }
        if (req.prompt.find("TEXT:\nchunk two") != std::string::npos) {
            return "(\"entity\"|B|t|in two)\n(\"entity\"|C|t|new in two)\n"
                   "(\"relation\"|B|C|two links)";
        }
        if (req.prompt.find("Summarize the following knowledge graph") != std::string::npos ||
            req.system.find("community reports") != std::string::npos) {
            return "summary text";
        }
        return "Insufficient information.";
    });
    test::PlantedEmbedder embedder{8};

    std::vector<Chunk> chunks{make_chunk("d:1-1", "chunk one"), make_chunk("d:2-2", "chunk two")};
    BuildOptions options;
    options.max_levels = 2;
    options.seed = 5;
    auto result = build_graph(chunks, llm, embedder, options);

    CHECK(result.graph.entities.size() == 3);
    CHECK(result.graph.relations.size() == 2);
    CHECK(result.failed_chunks.empty());
    CHECK(result.skipped_records == 0);
    REQUIRE(!result.communities.empty());
    for (const auto& c : result.communities) {
        REQUIRE(c.report.has_value());
        CHECK(c.report->summary_text == "summary text");
        CHECK(c.report->embedding.size() == 8);
    }
    // Entity embeddings were set from name + description.
    for (const auto& [id, e] : result.graph.entities) CHECK(e.embedding.size() == 8);
}

TEST_CASE("build_graph: per-chunk failures collected; total failure throws") {
    FnLlm llm([](const LlmRequest& req) -> std::string {
        if (req.prompt.find("TEXT:\nbad") != std::string::npos) throw ProviderError("nope");
        if (req.system.find("extract") != std::string::npos) {
            return "(\"entity\"|E|t|good)";
        }
        return "summary";
    });
    test::PlantedEmbedder embedder{4};

    std::vector<Chunk> chunks{make_chunk("d:1-1", "good text"), make_chunk("d:2-2", "bad")};
    auto result = build_graph(chunks, llm, embedder, {});
    REQUIRE(result.failed_chunks.size() == 1);
    CHECK(result.failed_chunks[0].find("d:2-2") != std::string::npos);
    CHECK(result.graph.entities.size() == 1);

    FnLlm always_fail([](const LlmRequest&) -> std::string { throw ProviderError("down"); });
    CHECK_THROWS_AS(build_graph(chunks, always_fail, embedder, {}), ProviderError);
}

TEST_CASE("build_graph: deterministic for a fixed seed") {
    auto run = [] {
        FnLlm llm([](const LlmRequest& req) -> std::string {
            if (req.system.find("extract") != std::string::npos) {
                return "(\"entity\"|P|t|d)\n(\"entity\"|Q|t|d)\n(\"relation\"|P|Q|r)";
            }
            return "summary";
        });
        test::PlantedEmbedder embedder{8};
        std::vector<Chunk> chunks{make_chunk("d:1-1", "x"), make_chunk("d:2-2", "y")};
        BuildOptions options;
        options.seed = 11;
        auto result = build_graph(chunks, llm, embedder, options);
        std::string s;
        for (const auto& c : result.communities) {
            s += c.id + "[";
            for (const auto& m : c.members) s += m + ",";
            s += "]";
            if (c.report) s += std::to_string(c.report->rank);
        }
        return s;
    };
    CHECK(run() == run());
}
