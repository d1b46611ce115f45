#include "semrag/error.hpp"
#include "semrag/retrieval.hpp"
#include "semrag/text.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <functional>
#include <string>
#include <utility>
#include <vector>

using namespace semrag;

namespace {

using test::FnLlm;

std::string words(int n, const std::string& prefix) {
    std::string out;
    for (int i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += prefix + std::to_string(i);
    }
    return out;
}

Chunk make_chunk(const std::string& id, const std::string& text, Vec v) {
    Chunk c;
    c.id = id;
    c.doc_id = id.substr(0, id.find(':'));
    c.text = text;
    c.token_count = count_tokens(text);
    c.range_lo = 1;
    c.range_hi = 1;
    c.embedding = std::move(v);
    return c;
}

} // namespace

TEST_CASE("naive_search matches a brute-force ranking oracle") {
    const int n = 200;
    StubEmbedder stub(16, 5);
    std::vector<Chunk> chunks;
    for (int i = 0; i < n; ++i) {
        const std::string text = "passage " + std::to_string(i);
        chunks.push_back(make_chunk("d" + std::to_string(i) + ":1-1", text,
                                    stub.embed_one(text)));
    }
    auto index = make_index(chunks);
    Query query{"what is the topic?", {}};
    const Vec qv = stub.embed_one(query.text);

    std::vector<std::pair<std::string, double>> oracle;
    for (const auto& c : chunks) oracle.emplace_back(c.id, cosine_similarity(qv, c.embedding));
    std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });

    for (int k : {1, 5, 50}) {
        auto ctx = naive_search(query, index, k, stub);
        CHECK(ctx.mode == "naive");
        REQUIRE(ctx.items.size() == static_cast<std::size_t>(k));
        int expected_tokens = 0;
        for (int i = 0; i < k; ++i) {
            CHECK(ctx.items[static_cast<std::size_t>(i)].source_id ==
                  oracle[static_cast<std::size_t>(i)].first);
            CHECK(ctx.items[static_cast<std::size_t>(i)].score ==
                  doctest::Approx(oracle[static_cast<std::size_t>(i)].second).epsilon(1e-12));
            CHECK(ctx.items[static_cast<std::size_t>(i)].kind == ContextItem::Kind::chunk);
            expected_tokens += count_tokens(ctx.items[static_cast<std::size_t>(i)].text);
        }
        CHECK(ctx.total_tokens == expected_tokens);
    }

    CHECK(naive_search(query, index, 0, stub).items.empty());
    CHECK(naive_search(query, make_index({}), 5, stub).items.empty());
}

TEST_CASE("naive_search: window packing skips overflow and keeps scanning") {
    test::PlantedEmbedder pe(8);
    Query query{"what?", {}};
    pe.plant(query.text, pe.axis(0));

    auto index = make_index({
        make_chunk("a:1-1", words(30, "a"), pe.with_cosine(0.9)),
        make_chunk("b:1-1", words(100, "b"), pe.with_cosine(0.6)),
        make_chunk("c:1-1", words(10, "c"), pe.with_cosine(0.3)),
    });

    auto ctx = naive_search(query, index, 5, pe, /*window_L=*/45);
    REQUIRE(ctx.items.size() == 2);
    CHECK(ctx.items[0].source_id == "a:1-1"); // 30 tokens fit
    CHECK(ctx.items[1].source_id == "c:1-1"); // 100-token chunk skipped, 10 fits after
    CHECK(ctx.total_tokens == 40);

    // window_L = 0 disables packing.
    CHECK(naive_search(query, index, 5, pe, 0).items.size() == 3);
}

TEST_CASE("naive_search ignores history; local_search includes it") {
    test::PlantedEmbedder pe(8);
    Query query{"follow up", {"earlier question"}};
    pe.plant("follow up", pe.axis(0));
    pe.plant("earlier question\nfollow up", pe.axis(1));

    auto index = make_index({make_chunk("d:1-1", "text", pe.axis(0))});
    auto ctx = naive_search(query, index, 1, pe);
    REQUIRE(ctx.items.size() == 1);
    CHECK(ctx.items[0].score == doctest::Approx(1.0).epsilon(1e-6)); // bare text embedded

    KnowledgeGraph g;
    g.add_entity("probe", "t", "watches axis one", "c1");
    g.entities.at("probe").embedding = pe.axis(1);
    LocalSearchConfig cfg;
    cfg.tau_e = 0.5;
    auto local = local_search(query, g, make_index({}), cfg, pe);
    REQUIRE(local.items.size() == 1); // history-joined embedding matched axis 1
    CHECK(local.items[0].score == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("local_search: hand-computed entity gating, admission, and ranking") {
    test::PlantedEmbedder pe(8);
    Query query{"which birds?", {}};
    pe.plant(query.text, pe.axis(0));

    KnowledgeGraph g;
    g.add_entity("heron", "bird", "wading bird", "d1:1-1");
    g.add_entity("otter", "mammal", "river mammal", "d2:1-1");
    g.add_entity("pylon", "structure", "steel tower", "d2:1-1");
    g.entities.at("heron").embedding = pe.with_cosine(0.9);
    g.entities.at("otter").embedding = pe.with_cosine(0.6);
    g.entities.at("pylon").embedding = pe.with_cosine(0.1);

    auto index = make_index({
        make_chunk("d1:1-1", "The heron stood in the reeds.", pe.with_cosine(0.8)),
        make_chunk("d1:2-2", "It speared a fish at dawn.", pe.with_cosine(0.7)),
        make_chunk("d2:1-1", "Pylons march across the moor.", pe.axis(2)),
    });

    LocalSearchConfig cfg;
    cfg.tau_e = 0.5; // heron, otter pass; pylon gated out
    cfg.tau_d = 0.5; // the axis-2 chunk is orthogonal to every candidate
    cfg.k = 10;
    cfg.window_L = 4096;

    auto ctx = local_search(query, g, index, cfg, pe);
    CHECK(ctx.mode == "local");
    REQUIRE(ctx.items.size() == 4);
    CHECK(ctx.items[0].source_id == "entity:heron");
    CHECK(ctx.items[0].kind == ContextItem::Kind::entity);
    CHECK(ctx.items[0].text == "heron: wading bird");
    CHECK(ctx.items[0].score == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(ctx.items[1].source_id == "d1:1-1");
    CHECK(ctx.items[1].score == doctest::Approx(0.8).epsilon(1e-6));
    CHECK(ctx.items[2].source_id == "d1:2-2");
    CHECK(ctx.items[3].source_id == "entity:otter");

    // k truncates the pooled ranking, not each kind separately.
    cfg.k = 2;
    auto top2 = local_search(query, g, index, cfg, pe);
    REQUIRE(top2.items.size() == 2);
    CHECK(top2.items[0].source_id == "entity:heron");
    CHECK(top2.items[1].source_id == "d1:1-1");

    // Entity gate is strict: similarity exactly tau_e is excluded.
    LocalSearchConfig edge;
    edge.tau_e = cosine_similarity(pe.with_cosine(0.6), pe.axis(0));
    edge.tau_d = 2.0; // no chunk can qualify
    auto gated = local_search(query, g, index, edge, pe);
    REQUIRE(gated.items.size() == 1); // only heron (0.9 > 0.6); otter sits on the threshold
    CHECK(gated.items[0].source_id == "entity:heron");

    // Unreachable tau_e yields an empty context: no entities, hence no chunks.
    LocalSearchConfig closed;
    closed.tau_e = 1.1;
    auto none = local_search(query, g, index, closed, pe);
    CHECK(none.items.empty());
    CHECK(none.total_tokens == 0);
}

TEST_CASE("local_search: linkage affinity admits only source chunks") {
    test::PlantedEmbedder pe(8);
    Query query{"which birds?", {}};
    pe.plant(query.text, pe.axis(0));

    KnowledgeGraph g;
    g.add_entity("heron", "bird", "wading bird", "d1:1-1"); // linked to d1:1-1 only
    g.entities.at("heron").embedding = pe.with_cosine(0.9);

    auto index = make_index({
        make_chunk("d1:1-1", "linked chunk", pe.axis(3)),  // orthogonal embedding
        make_chunk("d1:2-2", "similar chunk", pe.with_cosine(0.9)),
    });

    LocalSearchConfig cfg;
    cfg.tau_e = 0.5;
    cfg.tau_d = -1.0;
    cfg.affinity = LocalSearchConfig::Affinity::linkage;
    auto ctx = local_search(query, g, index, cfg, pe);

    std::vector<std::string> ids;
    for (const auto& item : ctx.items) ids.push_back(item.source_id);
    CHECK(std::find(ids.begin(), ids.end(), "d1:1-1") != ids.end());
    CHECK(std::find(ids.begin(), ids.end(), "d1:2-2") == ids.end()); // similar but unlinked
}

TEST_CASE("local_search with open thresholds equals pooled brute-force top-k") {
    StubEmbedder stub(12, 8);
    KnowledgeGraph g;
    for (int i = 0; i < 10; ++i) {
        const std::string name = "ent" + std::to_string(i);
        g.add_entity(name, "t", "entity " + std::to_string(i), "c1");
        g.entities.at(name).embedding = stub.embed_one(name);
    }
    std::vector<Chunk> chunks;
    for (int i = 0; i < 50; ++i) {
        const std::string text = "chunk body " + std::to_string(i);
        chunks.push_back(make_chunk("d" + std::to_string(i) + ":1-1", text,
                                    stub.embed_one(text)));
    }
    auto index = make_index(chunks);

    Query query{"pooled ranking probe", {}};
    const Vec qv = stub.embed_one(query.text);

    std::vector<std::pair<double, std::string>> oracle;
    for (const auto& [id, e] : g.entities) {
        oracle.emplace_back(cosine_similarity(e.embedding, qv), "entity:" + id);
    }
    for (const auto& c : chunks) {
        oracle.emplace_back(cosine_similarity(c.embedding, qv), c.id);
    }
    std::sort(oracle.begin(), oracle.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });

    LocalSearchConfig cfg;
    cfg.tau_e = -1.0;
    cfg.tau_d = -1.0;
    cfg.k = 7;
    cfg.window_L = 1 << 20;
    auto ctx = local_search(query, g, index, cfg, stub);
    REQUIRE(ctx.items.size() == 7);
    for (int i = 0; i < 7; ++i) {
        CHECK(ctx.items[static_cast<std::size_t>(i)].source_id ==
              oracle[static_cast<std::size_t>(i)].second);
        CHECK(ctx.items[static_cast<std::size_t>(i)].score ==
              doctest::Approx(oracle[static_cast<std::size_t>(i)].first).epsilon(1e-12));
    }
}

TEST_CASE("search config validation") {
    LocalSearchConfig local;
    local.k = -1;
    CHECK_THROWS_AS(local.validate(), ConfigError);
    local.k = 5;
    local.window_L = 0;
    CHECK_THROWS_AS(local.validate(), ConfigError);

    GlobalSearchConfig global;
    global.top_K_reports = 0;
    CHECK_THROWS_AS(global.validate(), ConfigError);
    global.top_K_reports = 1;
    global.k_points = -1;
    CHECK_THROWS_AS(global.validate(), ConfigError);
    global.k_points = 1;
    global.rank_weight = 1.5;
    CHECK_THROWS_AS(global.validate(), ConfigError);
    global.rank_weight = 0.3;
    global.window_L = -1;
    CHECK_THROWS_AS(global.validate(), ConfigError);
}

TEST_CASE("split_report_points: paragraphs, trimming, sentence windows") {
    CHECK(split_report_points("") == std::vector<std::string>{});
    CHECK(split_report_points("One point only.") ==
          std::vector<std::string>{"One point only."});

    auto pts = split_report_points("Alpha one.\n\n  Beta two.  \n\n\n\nGamma.");
    REQUIRE(pts.size() == 3);
    CHECK(pts[0] == "Alpha one.");
    CHECK(pts[1] == "Beta two."); // outer whitespace trimmed
    CHECK(pts[2] == "Gamma.");

    // 30 sentences of 5 tokens each: 150 > 100, windows close at 100 tokens.
    std::string para;
    std::vector<std::string> sentences;
    for (int i = 0; i < 30; ++i) {
        std::string s = "alpha beta gamma delta" + std::to_string(i) + ".";
        REQUIRE(count_tokens(s) == 5);
        sentences.push_back(s);
        if (i) para += ' ';
        para += s;
    }
    auto windows = split_report_points(para);
    REQUIRE(windows.size() == 2);
    CHECK(count_tokens(windows[0]) == 100);
    CHECK(count_tokens(windows[1]) == 50);
    std::string first20;
    for (int i = 0; i < 20; ++i) {
        if (i) first20 += ' ';
        first20 += sentences[static_cast<std::size_t>(i)];
    }
    CHECK(windows[0] == first20);

    // A single sentence over the cap stands alone rather than being split.
    const std::string longone = words(120, "w");
    auto alone = split_report_points(longone);
    REQUIRE(alone.size() == 1);
    CHECK(count_tokens(alone[0]) == 120);
}

TEST_CASE("score_point: integer replies, out-of-range and fallback paths") {
    test::PlantedEmbedder pe(8);
    Query query{"the question", {}};
    const std::string point = "the point";
    pe.plant(query.text, pe.axis(0));
    pe.plant(point, pe.with_cosine(0.5));

    FnLlm plain([](const LlmRequest&) { return std::string("85"); });
    auto s = score_point(point, query, &plain, pe);
    CHECK(s.score == doctest::Approx(0.85));
    CHECK_FALSE(s.used_fallback);

    FnLlm wordy([](const LlmRequest&) { return std::string("Rating: 92 out of 100."); });
    CHECK(score_point(point, query, &wordy, pe).score == doctest::Approx(0.92));

    // Fallback: embedding similarity mapped from [-1,1] to [0,1].
    const double expected = (cosine_similarity(pe.with_cosine(0.5), pe.axis(0)) + 1.0) / 2.0;
    for (const char* reply : {"150", "7777", "no digits here"}) {
        FnLlm bad([reply](const LlmRequest&) { return std::string(reply); });
        auto fb = score_point(point, query, &bad, pe);
        CHECK(fb.used_fallback);
        CHECK(fb.score == doctest::Approx(expected).epsilon(1e-9));
    }

    // Embedding mode: no LLM, same mapping, not flagged as fallback.
    pe.calls = 0;
    pe.texts_seen.clear();
    auto em = score_point(point, query, nullptr, pe);
    CHECK_FALSE(em.used_fallback);
    CHECK(em.score == doctest::Approx(expected).epsilon(1e-9));
    CHECK(pe.calls == 1); // point and query embedded in one batch
    REQUIRE(pe.texts_seen.size() == 2);
    CHECK(pe.texts_seen[0] == point);
    CHECK(pe.texts_seen[1] == query.text);

    // The LLM prompt carries both the question and the point.
    std::string seen;
    FnLlm capture([&](const LlmRequest& req) {
        seen = req.prompt;
        return std::string("50");
    });
    score_point(point, query, &capture, pe);
    CHECK(seen.find("QUESTION: the question") != std::string::npos);
    CHECK(seen.find("POINT: the point") != std::string::npos);
}

namespace {

std::vector<Community> two_report_communities(test::PlantedEmbedder& pe, double rank0,
                                              double rank1) {
    std::vector<Community> communities(2);
    communities[0].id = "c0_0";
    communities[0].members = {"a"};
    CommunityReport r0;
    r0.community_id = "c0_0";
    r0.summary_text = "Point alpha.\n\nPoint beta.";
    r0.rank = rank0;
    r0.embedding = pe.with_cosine(0.5);
    communities[0].report = r0;

    communities[1].id = "c0_1";
    communities[1].members = {"b"};
    CommunityReport r1;
    r1.community_id = "c0_1";
    r1.summary_text = "Point gamma.";
    r1.rank = rank1;
    r1.embedding = pe.with_cosine(0.9);
    communities[1].report = r1;
    return communities;
}

} // namespace

TEST_CASE("global_search: rank/similarity blend picks reports, points ranked") {
    test::PlantedEmbedder pe(8);
    Query query{"what happened?", {}};
    pe.plant(query.text, pe.axis(0));

    // blend(c0_0) = 0.3*1 + 0.7*0.5 = 0.65; blend(c0_1) = 0.3*0 + 0.7*0.9 = 0.63
    auto communities = two_report_communities(pe, 4.0, 2.0);

    FnLlm scorer([](const LlmRequest& req) -> std::string {
        if (req.prompt.find("POINT: Point alpha.") != std::string::npos) return "80";
        if (req.prompt.find("POINT: Point beta.") != std::string::npos) return "60";
        return "10";
    });

    GlobalSearchConfig cfg;
    cfg.top_K_reports = 1;
    cfg.k_points = 10;
    cfg.window_L = 4096;
    auto ctx = global_search(query, communities, cfg, &scorer, pe);

    CHECK(ctx.mode == "global");
    CHECK(ctx.metadata.at("point_scoring") == "llm");
    CHECK(ctx.metadata.at("score_fallbacks") == "0");
    REQUIRE(ctx.items.size() == 2); // only c0_0 made the cut; its two points scored
    CHECK(ctx.items[0].source_id == "c0_0:p0");
    CHECK(ctx.items[0].text == "Point alpha.");
    CHECK(ctx.items[0].score == doctest::Approx(0.8));
    CHECK(ctx.items[0].kind == ContextItem::Kind::report_point);
    CHECK(ctx.items[1].source_id == "c0_0:p1");
    CHECK(ctx.items[1].score == doctest::Approx(0.6));

    // Equal ranks normalize to 1.0 everywhere: similarity alone decides.
    auto flat = two_report_communities(pe, 3.0, 3.0);
    auto ctx2 = global_search(query, flat, cfg, &scorer, pe);
    REQUIRE(ctx2.items.size() == 1);
    CHECK(ctx2.items[0].source_id == "c0_1:p0"); // 0.9 similarity wins

    // k_points truncates after scoring.
    auto k1 = cfg;
    k1.k_points = 1;
    auto ctx3 = global_search(query, communities, k1, &scorer, pe);
    REQUIRE(ctx3.items.size() == 1);
    CHECK(ctx3.items[0].source_id == "c0_0:p0");

    // k_points = 0 short-circuits to an empty context with metadata intact.
    auto k0 = cfg;
    k0.k_points = 0;
    auto ctx4 = global_search(query, communities, k0, &scorer, pe);
    CHECK(ctx4.items.empty());
    CHECK(ctx4.metadata.at("score_fallbacks") == "0");
}

TEST_CASE("global_search: blend ties break by community id, fallbacks counted") {
    test::PlantedEmbedder pe(8);
    Query query{"what happened?", {}};
    pe.plant(query.text, pe.axis(0));

    auto communities = two_report_communities(pe, 1.0, 1.0);
    communities[1].report->embedding = pe.with_cosine(0.5); // identical blends now

    FnLlm unparseable([](const LlmRequest&) { return std::string("maybe?"); });
    GlobalSearchConfig cfg;
    cfg.top_K_reports = 1;
    auto ctx = global_search(query, communities, cfg, &unparseable, pe);
    REQUIRE(!ctx.items.empty());
    CHECK(ctx.items[0].source_id.rfind("c0_0:", 0) == 0); // id ascending on the tie
    CHECK(ctx.metadata.at("score_fallbacks") == "2");     // both points fell back

    // Embedding scoring mode never consults the LLM.
    FnLlm tripwire([](const LlmRequest&) -> std::string {
        throw ProviderError("must not be called");
    });
    auto emb = cfg;
    emb.point_scoring = GlobalSearchConfig::PointScoring::embedding;
    auto ctx2 = global_search(query, communities, emb, &tripwire, pe);
    CHECK(ctx2.metadata.at("point_scoring") == "embedding");
    CHECK(ctx2.metadata.at("score_fallbacks") == "0");
    CHECK(tripwire.calls == 0);
    REQUIRE(!ctx2.items.empty());

    // A community without a report is a build defect, reported as config error.
    communities[0].report.reset();
    CHECK_THROWS_WITH_AS(global_search(query, communities, cfg, &unparseable, pe),
                         doctest::Contains("has no report"), ConfigError);

    // No communities at all is a valid empty result.
    auto none = global_search(query, {}, cfg, &unparseable, pe);
    CHECK(none.items.empty());
    CHECK(none.metadata.at("point_scoring") == "llm");
}

TEST_CASE("assemble_prompt: exact layout, empty sentinel, unknown template") {
    Query query{"What?", {}};
    RetrievedContext ctx;
    ctx.items.push_back({ContextItem::Kind::chunk, "text one", 0.9, "d:1-1"});
    ctx.items.push_back({ContextItem::Kind::entity, "text two", 0.5, "entity:x"});

    CHECK(assemble_prompt(ctx, query) ==
          "Answer the question using only the provided context.\n\nCONTEXT:\n"
          "[d:1-1] text one\n"
          "[entity:x] text two\n"
          "\nQUESTION: What?");

    RetrievedContext empty;
    CHECK(assemble_prompt(empty, query) ==
          "Answer the question using only the provided context.\n\nCONTEXT:\n"
          "NO CONTEXT\n"
          "\nQUESTION: What?");

    CHECK_THROWS_WITH_AS(assemble_prompt(ctx, query, "fancy"),
                         doctest::Contains("unknown prompt template"), ConfigError);
}

TEST_CASE("answer_query: dispatch, store isolation, and validation") {
    test::PlantedEmbedder pe(8);
    pe.plant("q?", pe.axis(0));

    Stores stores;
    stores.index = make_index({make_chunk("d:1-1", "only chunk", pe.axis(0))});

    FnLlm echo([](const LlmRequest& req) { return req.prompt; });

    QueryOptions options;
    options.mode = "naive";
    options.k = 3;
    auto result = answer_query({"q?", {}}, options, stores, echo, pe);
    CHECK(result.answer == result.prompt); // the LLM saw exactly the assembled prompt
    CHECK(result.prompt == assemble_prompt(result.context, {"q?", {}}, "default"));
    CHECK(result.context.mode == "naive");
    CHECK(stores.index_reads == 1);
    CHECK(stores.graph_reads == 0);
    CHECK(stores.community_reads == 0);

    // naive packing honors the local window budget.
    Stores wide;
    wide.index = make_index({
        make_chunk("a:1-1", words(30, "a"), pe.with_cosine(0.9)),
        make_chunk("b:1-1", words(100, "b"), pe.with_cosine(0.6)),
    });
    options.local.window_L = 45;
    auto packed = answer_query({"q?", {}}, options, wide, echo, pe);
    REQUIRE(packed.context.items.size() == 1);
    CHECK(packed.context.items[0].source_id == "a:1-1");

    CHECK_THROWS_AS(answer_query({"", {}}, options, stores, echo, pe), ConfigError);
    options.mode = "psychic";
    CHECK_THROWS_WITH_AS(answer_query({"q?", {}}, options, stores, echo, pe),
                         doctest::Contains("unknown retrieval mode"), ConfigError);

    // Missing artifacts are named per mode (one store absent at a time).
    Stores bare;
    options.mode = "naive";
    CHECK_THROWS_WITH_AS(answer_query({"q?", {}}, options, bare, echo, pe),
                         doctest::Contains("chunk index not built"), ConfigError);
    Stores graphless;
    graphless.index = make_index({make_chunk("d:1-1", "only chunk", pe.axis(0))});
    options.mode = "local";
    CHECK_THROWS_WITH_AS(answer_query({"q?", {}}, options, graphless, echo, pe),
                         doctest::Contains("knowledge graph not built"), ConfigError);
    options.mode = "global";
    CHECK_THROWS_WITH_AS(answer_query({"q?", {}}, options, bare, echo, pe),
                         doctest::Contains("community reports not built"), ConfigError);

    // local touches graph + index, never communities.
    Stores both;
    both.index = make_index({make_chunk("d:1-1", "only chunk", pe.axis(0))});
    both.graph = KnowledgeGraph{};
    options.mode = "local";
    answer_query({"q?", {}}, options, both, echo, pe);
    CHECK(both.graph_reads == 1);
    CHECK(both.index_reads == 1);
    CHECK(both.community_reads == 0);

    // global touches communities only.
    Stores global_only;
    global_only.communities = std::vector<Community>{};
    options.mode = "global";
    answer_query({"q?", {}}, options, global_only, echo, pe);
    CHECK(global_only.community_reads == 1);
    CHECK(global_only.index_reads == 0);
    CHECK(global_only.graph_reads == 0);
}
