#include "securekb/knowledge_base.hpp"

#include "support/kb_fixture.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace securekb::test {
namespace {

using testsupport::fresh_temp_dir;

TEST(Bm25, AbsentQueryTermGivesEmptyResult)
{
    SparseIndex index;
    index.add_document("d1", {{"alpha", 1}});
    auto results = bm25_score(index, {{"missing", 1}});
    EXPECT_TRUE(results.empty());
    EXPECT_TRUE(bm25_score(index, {}).empty());
}

TEST(Bm25, SingleDocClosedForm)
{
    SparseIndex index;
    index.add_document("d1", {{"alpha", 2}});
    auto results = bm25_score(index, {{"alpha", 1}});
    ASSERT_EQ(results.size(), 1U);
    // idf = ln((1 - 1 + 0.5)/(1 + 0.5) + 1); tf part = 2*2.2/(2 + 1.2*1.0).
    double expected = std::log(0.5 / 1.5 + 1.0) * (2.0 * 2.2 / (2.0 + 1.2));
    EXPECT_NEAR(results[0].second, expected, 1e-12);
}

// Independent Okapi reference, written from the formula.
double reference_bm25(const std::map<std::string, TermMultiset>& docs,
                      const std::string& doc_id, const TermMultiset& query, double k1,
                      double b)
{
    double n_docs = static_cast<double>(docs.size());
    double total_len = 0;
    for (const auto& [id, terms] : docs) {
        for (const auto& [t, c] : terms) {
            total_len += c;
        }
    }
    double avg = total_len / n_docs;
    const TermMultiset& d = docs.at(doc_id);
    double dl = 0;
    for (const auto& [t, c] : d) {
        dl += c;
    }
    double score = 0;
    for (const auto& [term, qtf] : query) {
        auto it = d.find(term);
        if (it == d.end()) {
            continue;
        }
        double df = 0;
        for (const auto& [id, terms] : docs) {
            if (terms.count(term) != 0) {
                df += 1;
            }
        }
        double idf = std::log((n_docs - df + 0.5) / (df + 0.5) + 1.0);
        double tf = it->second;
        score += qtf * idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avg));
    }
    return score;
}

TEST(Bm25, ThreeDocCorpusMatchesReference)
{
    std::map<std::string, TermMultiset> docs{
        {"d1", {{"yaml.safe_load", 2}, {"yaml", 2}, {"open", 1}}},
        {"d2", {{"pickle.loads", 1}, {"open", 3}, {"json.loads", 1}}},
        {"d3", {{"yaml", 1}, {"json.loads", 2}, {"execute", 4}}}};
    SparseIndex index;
    index.documents = docs;
    index.rebuild_statistics();

    TermMultiset query{{"yaml", 2}, {"json.loads", 1}, {"execute", 1}};
    auto results = bm25_score(index, query);
    ASSERT_FALSE(results.empty());
    for (const auto& [doc_id, score] : results) {
        EXPECT_NEAR(score, reference_bm25(docs, doc_id, query, index.k1, index.b), 1e-9)
            << doc_id;
    }
    for (std::size_t i = 1; i < results.size(); ++i) {
        EXPECT_GE(results[i - 1].second, results[i].second);
    }
}

TEST(Bm25, SerializationRoundTrip)
{
    SparseIndex index;
    index.add_document("a", {{"x", 1}, {"y", 2}});
    index.add_document("b", {{"y", 1}});
    SparseIndex copy = sparse_index_from_json(sparse_index_to_json(index));
    EXPECT_EQ(copy.documents, index.documents);
    EXPECT_EQ(copy.document_frequency, index.document_frequency);
    EXPECT_DOUBLE_EQ(copy.average_doc_length, index.average_doc_length);
}

TEST(ApiTerms, DotSplittingExpandsSegments)
{
    TermMultiset terms = api_terms({"yaml.safe_load", "open"}, true);
    EXPECT_EQ(terms["yaml.safe_load"], 1);
    EXPECT_EQ(terms["yaml"], 1);
    EXPECT_EQ(terms["safe_load"], 1);
    EXPECT_EQ(terms["open"], 1);
    TermMultiset plain = api_terms({"yaml.safe_load"}, false);
    EXPECT_EQ(plain.size(), 1U);
}

TEST(RrfFuse, SingleFacetRankOneIsOneOverSixtyOne)
{
    std::map<Facet, std::vector<FacetScore>> lists;
    lists[Facet::cause] = rank_facet(Facet::cause, {{"CWE-1", 0.9}});
    auto fused = rrf_fuse(lists);
    ASSERT_EQ(fused.size(), 1U);
    EXPECT_NEAR(fused[0].fused_score, 1.0 / 61.0, 1e-15);
}

TEST(RrfFuse, BelowThresholdEverywhereIsAbsent)
{
    std::map<Facet, std::vector<FacetScore>> lists;
    lists[Facet::cause] = rank_facet(Facet::cause, {{"CWE-1", 0.5}});
    lists[Facet::api] = rank_facet(Facet::api, {{"CWE-1", 3.0}});
    EXPECT_TRUE(rrf_fuse(lists).empty());
}

TEST(RrfFuse, TwoFacetRankOneBeatsAnySingleFacet)
{
    std::map<Facet, std::vector<FacetScore>> lists;
    lists[Facet::cause] = rank_facet(Facet::cause, {{"CWE-1", 0.9}, {"CWE-2", 0.85}});
    lists[Facet::api] = rank_facet(Facet::api, {{"CWE-1", 9.0}});
    auto fused = rrf_fuse(lists);
    ASSERT_EQ(fused.size(), 2U);
    EXPECT_EQ(fused[0].candidate_id, "CWE-1");
    EXPECT_NEAR(fused[0].fused_score, 2.0 / 61.0, 1e-15);
    EXPECT_GT(fused[0].fused_score, fused[1].fused_score);
}

TEST(RrfFuse, RankCapGatesDeepCandidates)
{
    std::vector<std::pair<std::string, double>> scored;
    for (int i = 0; i < 15; ++i) {
        scored.emplace_back("CWE-" + std::to_string(100 + i), 10.0 - i * 0.1);
    }
    std::map<Facet, std::vector<FacetScore>> lists;
    lists[Facet::api] = rank_facet(Facet::api, scored);
    auto fused = rrf_fuse(lists);
    EXPECT_EQ(fused.size(), 10U);  // rank cap 10
}

TEST(RrfFuse, RaisingThresholdNeverAddsCandidates)
{
    std::mt19937 rng(11);
    for (int round = 0; round < 40; ++round) {
        std::map<Facet, std::vector<FacetScore>> lists;
        for (Facet facet : {Facet::api, Facet::cause, Facet::code}) {
            std::vector<std::pair<std::string, double>> scored;
            int m = 1 + static_cast<int>(rng() % 20);
            for (int i = 0; i < m; ++i) {
                scored.emplace_back("c" + std::to_string(i),
                                    static_cast<double>(rng() % 1000) / 100.0);
            }
            lists[facet] = rank_facet(facet, std::move(scored));
        }
        FusionParams low;
        low.thresholds = {{Facet::api, 1.0}, {Facet::cause, 1.0}, {Facet::code, 1.0}};
        FusionParams high = low;
        high.thresholds[Facet::api] = 5.0;
        high.thresholds[Facet::cause] = 5.0;
        high.thresholds[Facet::code] = 5.0;
        std::set<std::string> low_ids;
        for (const auto& c : rrf_fuse(lists, low)) {
            low_ids.insert(c.candidate_id);
        }
        for (const auto& c : rrf_fuse(lists, high)) {
            EXPECT_TRUE(low_ids.count(c.candidate_id) != 0);
        }
    }
}

// Direct evaluation of the gated RRF formula, independent of rrf_fuse.
std::vector<std::pair<std::string, double>>
brute_force_rrf(const std::map<Facet, std::vector<FacetScore>>& lists,
                const FusionParams& params)
{
    std::map<std::string, double> scores;
    for (const auto& [facet, entries] : lists) {
        double tau = params.thresholds.at(facet);
        for (const auto& fs : entries) {
            double v = (fs.raw_score > tau && fs.rank <= params.rank_cap) ? 1.0 : 0.0;
            scores[fs.candidate_id] += v * (1.0 / (fs.rank + params.alpha));
        }
    }
    std::vector<std::pair<std::string, double>> out;
    for (const auto& [id, s] : scores) {
        if (s > 0) {
            out.emplace_back(id, s);
        }
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });
    return out;
}

TEST(RrfFuse, MatchesBruteForceOnRandomInstances)
{
    std::mt19937 rng(5150);
    for (int round = 0; round < 100; ++round) {
        int n_cand = 1 + static_cast<int>(rng() % 50);
        std::map<Facet, std::vector<FacetScore>> lists;
        for (Facet facet : {Facet::api, Facet::cause, Facet::code}) {
            std::vector<std::pair<std::string, double>> scored;
            for (int i = 0; i < n_cand; ++i) {
                if (rng() % 3 == 0) {
                    continue;  // facet need not cover every candidate
                }
                scored.emplace_back("cand" + std::to_string(i),
                                    static_cast<double>(rng() % 2000) / 200.0);
            }
            lists[facet] = rank_facet(facet, std::move(scored));
        }
        FusionParams params;
        params.thresholds = {{Facet::api, 4.0}, {Facet::cause, 0.75}, {Facet::code, 0.65}};
        auto fused = rrf_fuse(lists, params);
        auto expected = brute_force_rrf(lists, params);
        ASSERT_EQ(fused.size(), expected.size()) << "round " << round;
        for (std::size_t i = 0; i < fused.size(); ++i) {
            EXPECT_EQ(fused[i].candidate_id, expected[i].first);
            EXPECT_NEAR(fused[i].fused_score, expected[i].second, 1e-12);
        }
    }
}

TEST(RrfFuse, RanksInvariantUnderPositiveMonotoneTransform)
{
    std::mt19937 rng(31);
    std::vector<std::pair<std::string, double>> scored;
    for (int i = 0; i < 20; ++i) {
        scored.emplace_back("c" + std::to_string(i),
                            static_cast<double>(rng() % 500) / 10.0);
    }
    auto ranked = rank_facet(Facet::api, scored);
    std::vector<std::pair<std::string, double>> transformed;
    for (const auto& [id, s] : scored) {
        transformed.emplace_back(id, 2.0 * s + 1.0);
    }
    auto ranked2 = rank_facet(Facet::api, transformed);
    ASSERT_EQ(ranked.size(), ranked2.size());
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        EXPECT_EQ(ranked[i].candidate_id, ranked2[i].candidate_id);
        EXPECT_EQ(ranked[i].rank, ranked2[i].rank);
    }
}

TEST(VectorTable, BinaryRoundTrip)
{
    auto dir = fresh_temp_dir("securekb_vectors_test");
    VectorTable table;
    table.dim = 4;
    table.append("a", {1.0F, -2.5F, 0.0F, 3.25F});
    table.append("b", {0.5F, 0.5F, 0.5F, 0.5F});
    write_vector_table(dir / "t.bin", table, "hash-test");
    VectorTable loaded = read_vector_table(dir / "t.bin");
    EXPECT_EQ(loaded.ids, table.ids);
    EXPECT_EQ(loaded.dim, table.dim);
    EXPECT_EQ(loaded.data, table.data);
    std::filesystem::remove_all(dir);
}

TEST(HashingProvider, SelfSimilarityIsOne)
{
    HashingEmbeddingProvider provider(128);
    auto v1 = provider.embed("use parameterized queries");
    auto v2 = provider.embed("use parameterized queries");
    EXPECT_NEAR(cosine_similarity(v1, v2), 1.0, 1e-6);
    auto v3 = provider.embed("entirely unrelated words here");
    EXPECT_LT(cosine_similarity(v1, v3), 0.75);
    EXPECT_EQ(cosine_similarity({}, {}), 0.0);
}

// -------- retrieval over a hand-built KB --------

struct RetrievalFixture {
    std::filesystem::path dir;
    RunConfig config;
    HashingEmbeddingProvider provider{256};
    KnowledgeBase kb;

    RetrievalFixture()
    {
        dir = fresh_temp_dir("securekb_retrieval_fixture");
        config.kb_dir = dir;

        // Four single-member CWE clusters with controlled vocabularies and
        // cause texts. Python examples double as code-level candidates.
        std::vector<VulnFixInstance> instances;
        auto add = [&](const std::string& id, const std::string& cwe,
                       const std::string& vuln_line, const std::string& sec_line) {
            VulnFixInstance inst;
            inst.id = id;
            inst.cwe_id = cwe;
            inst.language = Lang::python;
            inst.vulnerable_code = "def handler(arg):\n    " + vuln_line + "\n    return arg\n";
            inst.secure_code = "def handler(arg):\n    " + sec_line + "\n    return arg\n";
            inst.patch = testsupport::make_unified_diff(inst.vulnerable_code,
                                                        inst.secure_code);
            instances.push_back(inst);
        };
        add("ex-a", "CWE-100", "data = yaml.load(arg)", "data = yaml.safe_load(arg)");
        add("ex-b", "CWE-200", "cur.execute('x' + arg)", "cur.execute('x', (arg,))");
        add("ex-c", "CWE-300", "os.system(arg)", "subprocess.run([arg])");
        add("ex-d", "CWE-400", "h = hashlib.md5(arg)", "h = hashlib.sha256(arg)");

        write_kb_corpus(dir, instances);
        for (const auto& inst : instances) {
            write_kb_slice(dir, slice_instance(inst, config.hop_limit));
        }
        auto entry = [&](const std::string& cwe, const std::string& cause,
                         TermMultiset vocab, const std::string& member) {
            CweEntry e;
            e.cwe_id = cwe;
            e.guideline = "- guideline for " + cwe;
            e.cause_summary = cause;
            e.api_vocabulary = std::move(vocab);
            e.member_ids = {member};
            write_kb_entry(dir, e);
        };
        entry("CWE-100",
              "unsafe deserialization of untrusted yaml input allows object construction "
              "and code execution extra",
              {{"yaml.safe_load", 3}, {"yaml.load", 2}}, "ex-a");
        entry("CWE-200",
              "unsafe deserialization of untrusted yaml input allows object construction "
              "and code execution",
              {{"cursor.execute", 3}, {"sqlite3.connect", 1}}, "ex-b");
        entry("CWE-300", "shell command built from user input runs arbitrary programs",
              {{"os.system", 2}, {"subprocess.run", 2}}, "ex-c");
        entry("CWE-400", "weak hash algorithm fingerprints secrets",
              {{"hashlib.md5", 2}, {"hashlib.sha256", 2}}, "ex-d");

        build_kb_index(dir, provider, config);
        kb = load_kb(dir, provider.identity());
    }

    ~RetrievalFixture() { std::filesystem::remove_all(dir); }
};

TEST(RetrieveCwe, IdenticalCauseTextRanksFirstInCauseFacet)
{
    RetrievalFixture fx;
    ProactiveAnalysis analysis;
    analysis.language = Lang::python;
    analysis.cause_text = "weak hash algorithm fingerprints secrets";  // CWE-400's text
    auto results = retrieve_cwe(fx.kb, analysis, 4, fx.config.fusion, fx.provider,
                                fx.config.api_dot_split);
    ASSERT_FALSE(results.empty());
    EXPECT_EQ(results[0].cwe_id, "CWE-400");
}

TEST(RetrieveCwe, AllGatedOutGivesEmptyResult)
{
    RetrievalFixture fx;
    ProactiveAnalysis analysis;
    analysis.language = Lang::python;
    analysis.cause_text = "zzz qqq completely unrelated wording";
    analysis.draft_apis = {"unrelated.call"};
    auto results = retrieve_cwe(fx.kb, analysis, 4, fx.config.fusion, fx.provider,
                                fx.config.api_dot_split);
    EXPECT_TRUE(results.empty());
}

TEST(RetrieveCwe, FusedOrderMatchesHandComputedTable)
{
    RetrievalFixture fx;
    ProactiveAnalysis analysis;
    analysis.language = Lang::python;
    // Cause text equals CWE-200's summary; CWE-100's differs by one word, so
    // it lands at rank 2 with high similarity. APIs match CWE-100 only.
    analysis.cause_text = "unsafe deserialization of untrusted yaml input allows object "
                          "construction and code execution";
    analysis.draft_apis = {"yaml.safe_load", "yaml.load"};
    auto results = retrieve_cwe(fx.kb, analysis, 4, fx.config.fusion, fx.provider,
                                fx.config.api_dot_split);
    ASSERT_GE(results.size(), 2U);
    // Hand table: CWE-100 = 1/61 (api rank 1) + 1/62 (cause rank 2);
    //             CWE-200 = 1/61 (cause rank 1).
    EXPECT_EQ(results[0].cwe_id, "CWE-100");
    EXPECT_EQ(results[1].cwe_id, "CWE-200");
    EXPECT_NEAR(results[0].fused_score, 1.0 / 61.0 + 1.0 / 62.0, 1e-12);
    EXPECT_NEAR(results[1].fused_score, 1.0 / 61.0, 1e-12);
}

TEST(RetrieveCwe, EmptyKbIsError)
{
    auto dir = fresh_temp_dir("securekb_empty_kb");
    KnowledgeBase kb;
    kb.dir = dir;
    ProactiveAnalysis analysis;
    HashingEmbeddingProvider provider(64);
    EXPECT_THROW(retrieve_cwe(kb, analysis, 4, FusionParams{}, provider, true), KbError);
    std::filesystem::remove_all(dir);
}

TEST(RetrieveCwe, EmptyDraftApisUsesCauseOnly)
{
    RetrievalFixture fx;
    ProactiveAnalysis analysis;
    analysis.language = Lang::python;
    analysis.cause_text = "shell command built from user input runs arbitrary programs";
    analysis.draft_apis = {};
    auto results = retrieve_cwe(fx.kb, analysis, 4, fx.config.fusion, fx.provider,
                                fx.config.api_dot_split);
    ASSERT_EQ(results.size(), 1U);
    EXPECT_EQ(results[0].cwe_id, "CWE-300");
    EXPECT_NEAR(results[0].fused_score, 1.0 / 61.0, 1e-12);
}

TEST(RetrieveExample, SingleCandidateAboveGatesWins)
{
    RetrievalFixture fx;
    SlicedPair pair = fx.kb.slices.at("ex-c");
    ProactiveAnalysis analysis;
    analysis.language = Lang::python;
    analysis.cause_text = "shell command built from user input runs arbitrary programs";
    analysis.draft_code = pair.secure_slice;
    analysis.draft_apis = extract_api_calls(pair.secure_slice, Lang::python);
    auto selection = retrieve_example(fx.kb, analysis, {"CWE-300"}, fx.config.fusion,
                                      fx.provider, fx.config.api_dot_split);
    ASSERT_TRUE(selection.has_value());
    EXPECT_EQ(selection->example_id, "ex-c");
    EXPECT_EQ(selection->cwe_id, "CWE-300");
}

TEST(RetrieveExample, EmptyShortlistGivesNone)
{
    RetrievalFixture fx;
    ProactiveAnalysis analysis;
    analysis.language = Lang::python;
    EXPECT_FALSE(retrieve_example(fx.kb, analysis, {}, fx.config.fusion, fx.provider,
                                  fx.config.api_dot_split)
                     .has_value());
}

TEST(RetrieveExample, AllBelowThresholdsGivesNone)
{
    RetrievalFixture fx;
    ProactiveAnalysis analysis;
    analysis.language = Lang::python;
    analysis.cause_text = "nothing in common with stored causes";
    analysis.draft_code = "completely = different()\n";
    analysis.draft_apis = {"different"};
    auto selection = retrieve_example(fx.kb, analysis, {"CWE-100", "CWE-200"},
                                      fx.config.fusion, fx.provider,
                                      fx.config.api_dot_split);
    EXPECT_FALSE(selection.has_value());
}

TEST(RetrieveExample, LanguageFilterExcludesOtherLanguages)
{
    RetrievalFixture fx;
    SlicedPair pair = fx.kb.slices.at("ex-a");
    ProactiveAnalysis analysis;
    analysis.language = Lang::c;  // no C examples exist in the fixture
    analysis.draft_code = pair.secure_slice;
    auto selection = retrieve_example(fx.kb, analysis, {"CWE-100"}, fx.config.fusion,
                                      fx.provider, fx.config.api_dot_split);
    EXPECT_FALSE(selection.has_value());
}

TEST(RetrieveExample, ThreeExampleHandComputedFusion)
{
    auto dir = fresh_temp_dir("securekb_three_examples");
    RunConfig config;
    config.kb_dir = dir;
    HashingEmbeddingProvider provider(config.embedding_dim);

    std::vector<VulnFixInstance> instances;
    auto add = [&](const std::string& id, const std::string& line_v,
                   const std::string& line_s) {
        VulnFixInstance inst;
        inst.id = id;
        inst.cwe_id = "CWE-500";
        inst.language = Lang::python;
        inst.vulnerable_code = "def go(x):\n    " + line_v + "\n    return x\n";
        inst.secure_code = "def go(x):\n    " + line_s + "\n    return x\n";
        inst.patch = testsupport::make_unified_diff(inst.vulnerable_code, inst.secure_code);
        instances.push_back(inst);
    };
    add("ex-1", "a = alpha.load(x)", "a = alpha.safe(x)");
    add("ex-2", "b = beta.parse(x)", "b = beta.check(x)");
    add("ex-3", "c = gamma.read(x)", "c = gamma.verify(x)");
    write_kb_corpus(dir, instances);
    for (const auto& inst : instances) {
        write_kb_slice(dir, slice_instance(inst, config.hop_limit));
    }
    CweEntry entry;
    entry.cwe_id = "CWE-500";
    entry.guideline = "- validate input";
    entry.cause_summary = "shared cause text for this vulnerability class";
    entry.api_vocabulary = {{"alpha.safe", 1}, {"beta.check", 1}, {"gamma.verify", 1}};
    entry.member_ids = {"ex-1", "ex-2", "ex-3"};
    write_kb_entry(dir, entry);
    build_kb_index(dir, provider, config);
    KnowledgeBase kb = load_kb(dir, provider.identity());

    // Query: draft code identical to ex-1's slice (code rank 1), APIs match
    // ex-2 (api rank 1), cause text matches the shared summary, so the cause
    // facet ties at similarity 1.0 and ranks by id: ex-1, ex-2, ex-3.
    ProactiveAnalysis analysis;
    analysis.language = Lang::python;
    analysis.cause_text = "shared cause text for this vulnerability class";
    analysis.draft_code = kb.slices.at("ex-1").secure_slice;
    analysis.draft_apis = {"beta.check", "beta.parse"};

    auto selection =
        retrieve_example(kb, analysis, {"CWE-500"}, config.fusion, provider, true);
    ASSERT_TRUE(selection.has_value());
    // Hand table (alpha=60): ex-1 = code 1/61 + cause 1/61 = 2/61;
    // ex-2 = api 1/61 + cause 1/62; ex-3 = cause 1/63 only.
    EXPECT_EQ(selection->example_id, "ex-1");
    EXPECT_NEAR(selection->fused_score, 2.0 / 61.0, 1e-12);
    std::filesystem::remove_all(dir);
}

TEST(Manifest, ProviderMismatchRejected)
{
    auto dir = fresh_temp_dir("securekb_manifest_test");
    auto corpus = testsupport::fixture_corpus();
    testsupport::build_fixture_kb(dir, corpus);
    EXPECT_NO_THROW(load_kb(dir, "hash-fnv1a-256"));
    EXPECT_THROW(load_kb(dir, "hash-fnv1a-512"), ProviderMismatchError);
    std::filesystem::remove_all(dir);
}

TEST(Manifest, MissingStagesNameTheCommand)
{
    auto dir = fresh_temp_dir("securekb_missing_stage");
    try {
        load_kb(dir);
        FAIL();
    } catch (const KbError& e) {
        EXPECT_NE(std::string(e.what()).find("ingest"), std::string::npos);
    }
    write_kb_corpus(dir, testsupport::fixture_corpus());
    try {
        load_kb(dir);
        FAIL();
    } catch (const KbError& e) {
        EXPECT_NE(std::string(e.what()).find("slice"), std::string::npos);
    }
    std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace securekb::test
