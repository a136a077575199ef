// Acceptance suite: one self-contained check per release criterion, each
// printed as a pass/fail line. Exits nonzero if any criterion fails.

#include "securekb/knowledge_base.hpp"
#include "securekb/metrics.hpp"
#include "securekb/pipeline.hpp"
#include "securekb/slicer.hpp"

#include "support/diff_builder.hpp"
#include "support/fixture_corpus.hpp"
#include "support/kb_fixture.hpp"

#include <chrono>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

namespace {

using namespace securekb;

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void check(bool condition, const std::string& message)
{
    if (!condition) {
        throw CheckFailure(message);
    }
}

void check_near(double actual, double expected, double tolerance, const std::string& what)
{
    if (std::abs(actual - expected) > tolerance) {
        std::ostringstream oss;
        oss << what << ": got " << actual << ", expected " << expected << " (tol "
            << tolerance << ")";
        throw CheckFailure(oss.str());
    }
}

// ---- criterion 1: estimator vs exhaustive subset enumeration ----

double subset_enumeration(int n, int good, int k)
{
    std::vector<int> idx(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        idx[static_cast<std::size_t>(i)] = i;
    }
    long total = 0;
    long hits = 0;
    while (true) {
        ++total;
        bool has_good = false;
        for (int i : idx) {
            if (i < good) {
                has_good = true;
                break;
            }
        }
        if (has_good) {
            ++hits;
        }
        int pos = k - 1;
        while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == n - k + pos) {
            --pos;
        }
        if (pos < 0) {
            break;
        }
        ++idx[static_cast<std::size_t>(pos)];
        for (int j = pos + 1; j < k; ++j) {
            idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

void criterion_estimator_equivalence()
{
    auto start = std::chrono::steady_clock::now();
    for (int n = 1; n <= 12; ++n) {
        for (int sp = 0; sp <= n; ++sp) {
            for (int k = 1; k <= n; ++k) {
                double fast = secure_pass_at_k(n, sp, k);
                double oracle = subset_enumeration(n, sp, k);
                check_near(fast, oracle, 1e-12,
                           "n=" + std::to_string(n) + " sp=" + std::to_string(sp)
                               + " k=" + std::to_string(k));
            }
        }
    }
    auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - start)
                       .count();
    check(elapsed < 5000, "full sweep took " + std::to_string(elapsed) + " ms (>= 5 s)");
}

// ---- criterion 2: gated RRF vs brute-force formula ----

void criterion_rrf_equivalence()
{
    // Closed forms at alpha = 60.
    {
        std::map<Facet, std::vector<FacetScore>> lists;
        lists[Facet::cause] = rank_facet(Facet::cause, {{"only", 0.9}});
        auto fused = rrf_fuse(lists);
        check(fused.size() == 1, "closed form: expected one survivor");
        check_near(fused[0].fused_score, 1.0 / 61.0, 1e-15, "single-facet rank 1");

        lists[Facet::api] = rank_facet(Facet::api, {{"only", 9.0}});
        fused = rrf_fuse(lists);
        check_near(fused[0].fused_score, 2.0 / 61.0, 1e-15, "two-facet rank 1");
    }

    std::mt19937 rng(777);
    for (int round = 0; round < 1000; ++round) {
        int n_cand = 1 + static_cast<int>(rng() % 50);
        std::map<Facet, std::vector<FacetScore>> lists;
        for (Facet facet : {Facet::api, Facet::cause, Facet::code}) {
            std::vector<std::pair<std::string, double>> scored;
            for (int i = 0; i < n_cand; ++i) {
                if (rng() % 4 == 0) {
                    continue;
                }
                scored.emplace_back("cand" + std::to_string(i),
                                    static_cast<double>(rng() % 2000) / 200.0);
            }
            lists[facet] = rank_facet(facet, std::move(scored));
        }
        FusionParams params;  // reference thresholds, alpha 60, cap 10

        // Independent brute-force evaluation of the gated sum.
        std::map<std::string, double> expected;
        for (const auto& [facet, entries] : lists) {
            double tau = params.thresholds.at(facet);
            for (const auto& fs : entries) {
                if (fs.raw_score > tau && fs.rank <= params.rank_cap) {
                    expected[fs.candidate_id] += 1.0 / (fs.rank + params.alpha);
                }
            }
        }
        std::vector<std::pair<std::string, double>> expected_sorted;
        for (const auto& [id, score] : expected) {
            if (score > 0) {
                expected_sorted.emplace_back(id, score);
            }
        }
        std::sort(expected_sorted.begin(), expected_sorted.end(),
                  [](const auto& a, const auto& b) {
                      if (a.second != b.second) {
                          return a.second > b.second;
                      }
                      return a.first < b.first;
                  });

        auto fused = rrf_fuse(lists, params);
        check(fused.size() == expected_sorted.size(),
              "round " + std::to_string(round) + ": size mismatch");
        for (std::size_t i = 0; i < fused.size(); ++i) {
            check(fused[i].candidate_id == expected_sorted[i].first,
                  "round " + std::to_string(round) + ": order mismatch at "
                      + std::to_string(i));
            check_near(fused[i].fused_score, expected_sorted[i].second, 1e-12,
                       "round " + std::to_string(round) + " score");
        }
    }
}

// ---- criterion 3: slicing vs path enumeration, monotonicity, fixture ----

std::set<int> path_enumeration_slice(const ProgramDependenceGraph& pdg,
                                     const std::set<int>& pois, int h)
{
    auto out_adj = pdg.out_adjacency();
    auto in_adj = pdg.in_adjacency();
    std::set<int> result = pois;
    std::function<bool(int, int, const std::vector<std::vector<int>>&)> can_reach =
        [&](int node, int depth, const std::vector<std::vector<int>>& adj) -> bool {
        if (depth >= h) {
            return false;
        }
        for (int next : adj[static_cast<std::size_t>(node)]) {
            if (pois.count(next) != 0 || can_reach(next, depth + 1, adj)) {
                return true;
            }
        }
        return false;
    };
    for (const auto& node : pdg.nodes) {
        if (can_reach(node.node_id, 0, out_adj) || can_reach(node.node_id, 0, in_adj)) {
            result.insert(node.node_id);
        }
    }
    return result;
}

void criterion_slicing_correctness()
{
    std::mt19937 rng(1234);
    for (int round = 0; round < 300; ++round) {
        int n = 2 + static_cast<int>(rng() % 29);
        ProgramDependenceGraph pdg;
        for (int i = 0; i < n; ++i) {
            StatementNode node;
            node.node_id = i;
            node.start_line = i + 1;
            node.end_line = i + 1;
            pdg.nodes.push_back(node);
        }
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                if (rng() % 100 < 15) {
                    pdg.edges.push_back(
                        {i, j, (rng() % 2) != 0U ? EdgeKind::data : EdgeKind::control});
                }
            }
        }
        std::set<int> pois;
        for (int p = 0; p < 1 + static_cast<int>(rng() % 3); ++p) {
            pois.insert(static_cast<int>(rng() % static_cast<unsigned>(n)));
        }
        int h = 1 + static_cast<int>(rng() % 4);
        check(slice(pdg, pois, h) == path_enumeration_slice(pdg, pois, h),
              "random DAG round " + std::to_string(round));
    }

    for (const auto& inst : testsupport::fixture_corpus()) {
        for (PatchSide side : {PatchSide::vulnerable, PatchSide::secure}) {
            const std::string& source = side == PatchSide::vulnerable
                                            ? inst.vulnerable_code
                                            : inst.secure_code;
            ProgramDependenceGraph pdg = build_pdg(source, inst.language);
            std::set<int> pois = locate_pois(pdg, parse_patch(inst), side);
            if (pois.empty()) {
                continue;
            }
            std::set<int> prev;
            for (int h = 1; h <= 4; ++h) {
                std::set<int> cur = slice(pdg, pois, h);
                check(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()),
                      inst.id + ": S(h) not within S(h+1)");
                prev = std::move(cur);
            }
        }
    }

    SlicedPair pair = slice_instance(testsupport::fixture_corpus()[0], 2);
    check(pair.secure_slice.find("yaml.safe_load") != std::string::npos,
          "reference fixture slice lost the safe_load line");
    check(pair.secure_slice.find("classes = result['value']") != std::string::npos,
          "reference fixture slice lost the data-dependence line");
    check(pair.secure_slice.find("REPLACE INTO") == std::string::npos,
          "reference fixture slice kept the persistence line");
}

// ---- criterion 4: size reduction direction ----

void criterion_size_reduction()
{
    auto corpus = testsupport::fixture_corpus();
    check(corpus.size() >= 10, "fixture corpus must hold at least 10 pairs");
    std::vector<SlicedPair> pairs;
    for (const auto& inst : corpus) {
        pairs.push_back(slice_instance(inst, 2));
    }
    double ratio = mean_kept_ratio(corpus, pairs);
    check(ratio > 0.0, "mean kept ratio degenerate");
    check(ratio < 0.5, "mean kept ratio " + std::to_string(ratio) + " >= 0.5");
}

// ---- criterion 5: summarization call accounting ----

class CountingClient : public TextClient {
public:
    long calls = 0;

    std::string complete(const std::string&) override
    {
        ++calls;
        return "s";
    }

    std::string name() const override { return "counting"; }
};

void criterion_call_accounting()
{
    auto noop = [](const std::vector<std::string>&) { return std::string(); };
    const std::pair<int, long> cases[] = {{1, 1}, {23, 4}, {100, 11}};
    for (const auto& [size, expected] : cases) {
        CountingClient client;
        std::vector<std::string> items(static_cast<std::size_t>(size), "x");
        hierarchical_summarize(items, client, 10, noop, noop);
        check(client.calls == expected,
              "cluster " + std::to_string(size) + ": " + std::to_string(client.calls)
                  + " calls, expected " + std::to_string(expected));
    }
    // Termination for every cluster size up to 10,000, with the level-sum
    // call count.
    for (int n = 1; n <= 10000; n += (n < 200 ? 1 : 137)) {
        CountingClient client;
        std::vector<std::string> items(static_cast<std::size_t>(n), "");
        hierarchical_summarize(items, client, 10, noop, noop);
        long expected = 0;
        int level = n;
        while (true) {
            int batches = (level + 9) / 10;
            expected += batches;
            if (batches == 1) {
                break;
            }
            level = batches;
        }
        check(client.calls == expected, "cluster " + std::to_string(n) + " call count");
    }
    CountingClient big;
    std::vector<std::string> items(10000, "");
    hierarchical_summarize(items, big, 10, noop, noop);
    check(big.calls == 1000 + 100 + 10 + 1, "cluster 10000 call count");
}

// ---- criterion 6: BM25 against an independent reference ----

void criterion_bm25_fidelity()
{
    std::map<std::string, TermMultiset> docs{
        {"doc-a", {{"yaml.safe_load", 2}, {"yaml", 2}, {"open", 1}}},
        {"doc-b", {{"pickle.loads", 1}, {"open", 3}, {"json.loads", 1}}},
        {"doc-c", {{"yaml", 1}, {"json.loads", 2}, {"execute", 4}}}};
    SparseIndex index;
    index.documents = docs;
    index.rebuild_statistics();
    TermMultiset query{{"yaml", 2}, {"json.loads", 1}, {"execute", 1}, {"open", 1}};

    auto results = bm25_score(index, query);
    check(!results.empty(), "reference corpus scored empty");
    for (const auto& [doc_id, score] : results) {
        // Independent Okapi evaluation.
        const TermMultiset& d = docs.at(doc_id);
        double dl = 0;
        for (const auto& [t, c] : d) {
            dl += c;
        }
        double total_len = 0;
        for (const auto& [id, terms] : docs) {
            for (const auto& [t, c] : terms) {
                total_len += c;
            }
        }
        double avg = total_len / 3.0;
        double expected = 0;
        for (const auto& [term, qtf] : query) {
            auto it = d.find(term);
            if (it == d.end()) {
                continue;
            }
            double df = 0;
            for (const auto& [id, terms] : docs) {
                df += terms.count(term) != 0 ? 1 : 0;
            }
            double idf = std::log((3.0 - df + 0.5) / (df + 0.5) + 1.0);
            expected += qtf * idf * (it->second * (1.2 + 1.0))
                        / (it->second + 1.2 * (1.0 - 0.75 + 0.75 * dl / avg));
        }
        check_near(score, expected, 1e-9, "bm25 " + doc_id);
    }
}

// ---- criterion 7: end-to-end determinism through the CLI ----

int run_command(const std::string& command)
{
    int status = std::system((command + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void criterion_end_to_end_determinism()
{
    auto start = std::chrono::steady_clock::now();
    auto root = testsupport::fresh_temp_dir("securekb_acceptance_e2e");
    auto corpus_file = root / "corpus.jsonl";
    testsupport::write_corpus_jsonl(corpus_file.string(), testsupport::fixture_corpus());

    auto tasks_file = root / "tasks.jsonl";
    {
        std::ofstream out(tasks_file);
        out << R"x({"id":"t1","language":"python","code":"def parse_config(raw):"})x"
            << "\n";
        out << R"x({"id":"t2","language":"python","code":"def run_ping(host):"})x" << "\n";
        out << R"x({"id":"t3","language":"c","code":"int hash_secret(const char *s)"})x"
            << "\n";
    }
    auto verdicts_file = root / "verdicts.jsonl";
    {
        std::ofstream out(verdicts_file);
        for (int i = 0; i < 4; ++i) {
            out << nlohmann::json{{"task_id", "t1"},
                                  {"sample_id", std::to_string(i)},
                                  {"functional_pass", i < 3},
                                  {"security_pass", i < 2}}
                       .dump()
                << "\n";
        }
    }

    const std::string cli = SECUREKB_CLI_PATH;
    auto run_chain = [&](const std::filesystem::path& kb) {
        check(run_command(cli + " ingest --corpus \"" + corpus_file.string() + "\" --kb \""
                          + kb.string() + "\"")
                  == 0,
              "ingest failed");
        check(run_command(cli + " slice --hops 2 --kb \"" + kb.string() + "\"") == 0,
              "slice failed");
        check(run_command(cli + " distill --client stub --kb \"" + kb.string() + "\"") == 0,
              "distill failed");
        check(run_command(cli + " index --provider hash --kb \"" + kb.string() + "\"")
                  == 0,
              "index failed");
        check(run_command(cli + " generate --tasks \"" + tasks_file.string()
                          + "\" --client stub --deterministic --samples 2 --run-id run "
                            "--kb \""
                          + kb.string() + "\"")
                  == 0,
              "generate failed");
        check(run_command(cli + " evaluate --verdicts \"" + verdicts_file.string()
                          + "\" --k 1 --json")
                  == 0,
              "evaluate failed");
        return read_text_file(kb / "runs" / "run" / "records.jsonl");
    };

    std::string first = run_chain(root / "kb_a");
    std::string second = run_chain(root / "kb_b");
    check(!first.empty(), "no records produced");
    check(first == second, "records.jsonl differs across identical runs");

    auto elapsed = std::chrono::duration_cast<std::chrono::seconds>(
                       std::chrono::steady_clock::now() - start)
                       .count();
    check(elapsed < 60, "pipeline took " + std::to_string(elapsed) + " s (>= 60 s)");
    std::filesystem::remove_all(root);
}

// ---- criterion 8: degradation totality over facet subsets ----

void criterion_degradation_totality()
{
    auto root = testsupport::fresh_temp_dir("securekb_acceptance_degrade");
    RunConfig config = testsupport::build_fixture_kb(root, testsupport::fixture_corpus());
    config.deterministic_timings = true;
    HashingEmbeddingProvider provider(config.embedding_dim);
    KnowledgeBase kb = load_kb(root, provider.identity());

    CodingTask task;
    task.id = "degrade";
    task.language = Lang::python;
    task.code = "def load_settings(path):";

    for (int bits = 0; bits < 8; ++bits) {
        FacetMask mask;
        mask.api = (bits & 1) != 0;
        mask.cause = (bits & 2) != 0;
        mask.code = (bits & 4) != 0;
        StubClient client("digest");
        auto records = run_task(task, kb, client, provider, config, mask);
        check(records.size() == 1,
              "facet subset " + std::to_string(bits) + " produced no record");
        check_no_placeholders(records[0].prompt);
        if (bits == 0) {
            check(!records[0].context.has_value(),
                  "all-facets-failed run still carried a context");
            check(records[0].prompt == task.code,
                  "all-facets-failed run did not fall back to zero-shot");
        }
    }

    // Hard client failures must degrade, not abort. Drafting is the first
    // zero-shot call; later zero-shot calls are the fallback generation.
    class FailingDraftClient : public TextClient {
    public:
        bool draft_seen = false;
        std::string complete(const std::string& prompt) override
        {
            bool zero_shot =
                prompt.find("Identify and summarize the cause") == std::string::npos
                && prompt.find("# General Security Guidelines") == std::string::npos;
            if (zero_shot && !draft_seen) {
                draft_seen = true;
                throw ClientError("draft down");
            }
            return "text";
        }
        std::string name() const override { return "fail-draft"; }
    } failing_draft;
    auto records = run_task(task, kb, failing_draft, provider, config);
    check(records.size() == 1, "draft failure aborted the task");

    class FailingCauseClient : public TextClient {
    public:
        std::string complete(const std::string& prompt) override
        {
            if (prompt.find("Identify and summarize the cause") != std::string::npos) {
                throw ClientError("cause down");
            }
            return "draft";
        }
        std::string name() const override { return "fail-cause"; }
    } failing_cause;
    records = run_task(task, kb, failing_cause, provider, config);
    check(records.size() == 1, "cause failure aborted the task");

    std::filesystem::remove_all(root);
}

// ---- criterion 9: prompt fidelity against golden files ----

void criterion_prompt_fidelity()
{
    auto golden = [](const std::string& name) {
        return read_text_file(std::filesystem::path(SECUREKB_TEST_DATA_DIR) / "golden"
                              / name);
    };
    CodingTask task;
    task.id = "golden";
    task.language = Lang::python;
    task.code = "def load_config(text):";

    SecurityContext context;
    context.cwe_id = "CWE-502";
    context.guideline = "- Use yaml.safe_load to parse untrusted YAML input.";
    context.example_id = "ex";
    context.secure_example = "import yaml\ndata = yaml.safe_load(classes)";
    context.example_language = "python";

    check(assemble_prompt(task, context, false) == golden("completion_prompt.txt"),
          "completion prompt differs from the golden file");
    check(assemble_prompt(task, context, true) == golden("chat_prompt.txt"),
          "chat prompt differs from the golden file");
    check(assemble_prompt(task, std::nullopt, true) == golden("zero_shot_prompt.txt"),
          "zero-shot prompt differs from the golden file");
}

struct Criterion {
    int number;
    std::string description;
    std::function<void()> run;
};

}  // namespace

int main()
{
    const Criterion criteria[] = {
        {1, "secure-pass estimator matches exhaustive subset enumeration (n <= 12)",
         criterion_estimator_equivalence},
        {2, "gated RRF matches brute-force fusion on 1000 random instances",
         criterion_rrf_equivalence},
        {3, "hop-bounded slicing matches path enumeration; reference fixture slices hold",
         criterion_slicing_correctness},
        {4, "mean kept-line ratio over the fixture corpus stays below 0.5",
         criterion_size_reduction},
        {5, "batched summarization call counts are exactly the level sums",
         criterion_call_accounting},
        {6, "BM25 scores match an independent Okapi reference to 1e-9",
         criterion_bm25_fidelity},
        {7, "full CLI pipeline is byte-deterministic and finishes under 60 s",
         criterion_end_to_end_determinism},
        {8, "every facet-failure subset still yields a generation record",
         criterion_degradation_totality},
        {9, "assembled prompts byte-match the golden template files",
         criterion_prompt_fidelity},
    };

    int failures = 0;
    for (const auto& criterion : criteria) {
        auto start = std::chrono::steady_clock::now();
        try {
            criterion.run();
            auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - start)
                          .count();
            std::cout << "[PASS] " << criterion.number << ". " << criterion.description
                      << " (" << ms << " ms)\n";
        } catch (const std::exception& e) {
            ++failures;
            std::cout << "[FAIL] " << criterion.number << ". " << criterion.description
                      << ": " << e.what() << "\n";
        }
    }
    if (failures != 0) {
        std::cout << failures << " criterion(s) failed\n";
    }
    return failures == 0 ? 0 : 1;
}
