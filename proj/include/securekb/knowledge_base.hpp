#pragma once

#include "securekb/config.hpp"
#include "securekb/corpus.hpp"
#include "securekb/distiller.hpp"
#include "securekb/embedding.hpp"
#include "securekb/fusion.hpp"
#include "securekb/slicer.hpp"
#include "securekb/sparse_index.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace securekb {

class KbError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ProviderMismatchError : public KbError {
public:
    using KbError::KbError;
};

/// Per-task facts gathered before retrieval: the draft completion, its API
/// calls, and the analyzed vulnerability cause.
struct ProactiveAnalysis {
    std::string task_id;
    std::string task_text;
    Lang language = Lang::python;
    std::string draft_code;
    std::vector<std::string> draft_apis;
    std::string cause_text;
};

/// Which retrieval facets participate; disabling facets drives both the
/// ablation switches and fault degradation.
struct FacetMask {
    bool api = true;
    bool cause = true;
    bool code = true;
};

struct CweCandidate {
    std::string cwe_id;
    double fused_score = 0.0;
};

struct ExampleSelection {
    std::string example_id;
    std::string cwe_id;
    double fused_score = 0.0;
};

// -------- on-disk layout --------

inline std::filesystem::path kb_corpus_path(const std::filesystem::path& kb) { return kb / "corpus.jsonl"; }
inline std::filesystem::path kb_slices_dir(const std::filesystem::path& kb) { return kb / "slices"; }
inline std::filesystem::path kb_cwe_dir(const std::filesystem::path& kb) { return kb / "cwe"; }
inline std::filesystem::path kb_vectors_dir(const std::filesystem::path& kb) { return kb / "vectors"; }
inline std::filesystem::path kb_sparse_path(const std::filesystem::path& kb) { return kb / "sparse" / "api_index.json"; }
inline std::filesystem::path kb_manifest_path(const std::filesystem::path& kb) { return kb / "manifest.json"; }
inline std::filesystem::path kb_transcripts_dir(const std::filesystem::path& kb) { return kb / "transcripts"; }
inline std::filesystem::path kb_runs_dir(const std::filesystem::path& kb) { return kb / "runs"; }

inline std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw KbError("cannot open file: " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text)
{
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw KbError("cannot write file: " + path.string());
    }
    out << text;
}

inline void write_kb_corpus(const std::filesystem::path& kb_dir,
                            const std::vector<VulnFixInstance>& instances)
{
    write_text_file(kb_corpus_path(kb_dir), serialize_corpus(instances));
}

inline nlohmann::json sliced_pair_to_json(const SlicedPair& pair)
{
    return nlohmann::json{{"instance_id", pair.instance_id},
                          {"hop_limit", pair.hop_limit},
                          {"vulnerable_slice", pair.vulnerable_slice},
                          {"secure_slice", pair.secure_slice},
                          {"kept_lines_vuln", pair.kept_lines_vuln},
                          {"kept_lines_sec", pair.kept_lines_sec},
                          {"warnings", pair.unmatched_context_warnings}};
}

inline SlicedPair sliced_pair_from_json(const nlohmann::json& j)
{
    SlicedPair pair;
    pair.instance_id = j.at("instance_id").get<std::string>();
    pair.hop_limit = j.at("hop_limit").get<int>();
    pair.vulnerable_slice = j.at("vulnerable_slice").get<std::string>();
    pair.secure_slice = j.at("secure_slice").get<std::string>();
    pair.kept_lines_vuln = j.at("kept_lines_vuln").get<std::vector<int>>();
    pair.kept_lines_sec = j.at("kept_lines_sec").get<std::vector<int>>();
    pair.unmatched_context_warnings = j.value("warnings", 0);
    return pair;
}

inline void write_kb_slice(const std::filesystem::path& kb_dir, const SlicedPair& pair)
{
    write_text_file(kb_slices_dir(kb_dir) / (pair.instance_id + ".json"),
                    sliced_pair_to_json(pair).dump(2) + "\n");
}

inline void write_kb_entry(const std::filesystem::path& kb_dir, const CweEntry& entry)
{
    std::filesystem::path dir = kb_cwe_dir(kb_dir) / entry.cwe_id;
    write_text_file(dir / "guideline.md", entry.guideline);
    write_text_file(dir / "cause.md", entry.cause_summary);
    nlohmann::json apis;
    nlohmann::json terms;
    for (const auto& [term, count] : entry.api_vocabulary) {
        terms[term] = count;
    }
    apis["terms"] = terms;
    apis["member_ids"] = entry.member_ids;
    write_text_file(dir / "apis.json", apis.dump(2) + "\n");
}

/// In-memory view of a fully built knowledge base.
struct KnowledgeBase {
    std::filesystem::path dir;
    nlohmann::json manifest;
    std::vector<VulnFixInstance> instances;
    std::map<std::string, SlicedPair> slices;       // instance id -> pair
    std::vector<CweEntry> entries;                  // sorted by cwe id
    SparseIndex cwe_api_index;
    std::map<std::string, TermMultiset> example_api_terms;
    VectorTable cause_vectors;                      // rows keyed by cwe id
    VectorTable code_vectors;                       // rows keyed by instance id
    std::map<std::string, std::size_t> cause_rows;
    std::map<std::string, std::size_t> code_rows;
    std::map<std::string, std::size_t> instance_index;

    const CweEntry* entry_for(const std::string& cwe_id) const
    {
        for (const auto& e : entries) {
            if (e.cwe_id == cwe_id) {
                return &e;
            }
        }
        return nullptr;
    }

    const VulnFixInstance* instance_for(const std::string& id) const
    {
        auto it = instance_index.find(id);
        return it == instance_index.end() ? nullptr : &instances[it->second];
    }
};

inline std::string corpus_fingerprint(const std::string& corpus_text)
{
    return to_hex(fnv1a64(corpus_text));
}

/// Builds the retrieval indexes over the distilled KB artifacts and writes
/// vectors, the sparse API index and the manifest.
inline void build_kb_index(const std::filesystem::path& kb_dir, EmbeddingProvider& provider,
                           const RunConfig& config)
{
    if (!std::filesystem::exists(kb_corpus_path(kb_dir))) {
        throw KbError("missing normalized corpus — run `securekb ingest` first");
    }
    if (!std::filesystem::exists(kb_cwe_dir(kb_dir))) {
        throw KbError("missing distilled entries — run `securekb distill` first");
    }
    if (!std::filesystem::exists(kb_slices_dir(kb_dir))) {
        throw KbError("missing slices — run `securekb slice` first");
    }

    std::string corpus_text = read_text_file(kb_corpus_path(kb_dir));
    CorpusLoadResult corpus = load_corpus_text(corpus_text);

    CachedEmbedder embedder(provider, kb_vectors_dir(kb_dir) / "cache");

    // CWE level: cause-summary vectors plus the API sparse index.
    VectorTable cause_table;
    cause_table.dim = provider.dimensionality();
    SparseIndex cwe_index;
    std::vector<std::filesystem::path> cwe_dirs;
    for (const auto& dir_entry : std::filesystem::directory_iterator(kb_cwe_dir(kb_dir))) {
        if (dir_entry.is_directory()) {
            cwe_dirs.push_back(dir_entry.path());
        }
    }
    std::sort(cwe_dirs.begin(), cwe_dirs.end());
    for (const auto& dir : cwe_dirs) {
        std::string cwe_id = dir.filename().string();
        std::string cause = read_text_file(dir / "cause.md");
        cause_table.append(cwe_id, embedder.embed(cause));
        nlohmann::json apis = nlohmann::json::parse(read_text_file(dir / "apis.json"));
        std::vector<std::string> names;
        for (const auto& [term, count] : apis.at("terms").items()) {
            for (int i = 0; i < count.get<int>(); ++i) {
                names.push_back(term);
            }
        }
        cwe_index.documents[cwe_id] = api_terms(names, config.api_dot_split);
    }
    cwe_index.rebuild_statistics();

    // Code level: secure-slice vectors plus per-example API terms. Instances
    // with empty slices stay out of the code-level index.
    VectorTable code_table;
    code_table.dim = provider.dimensionality();
    nlohmann::json example_terms;
    for (const auto& inst : corpus.instances) {
        std::filesystem::path slice_path = kb_slices_dir(kb_dir) / (inst.id + ".json");
        if (!std::filesystem::exists(slice_path)) {
            continue;
        }
        SlicedPair pair =
            sliced_pair_from_json(nlohmann::json::parse(read_text_file(slice_path)));
        if (pair.empty() || trim(pair.secure_slice).empty()) {
            continue;
        }
        code_table.append(inst.id, embedder.embed(pair.secure_slice));
        TermMultiset terms =
            api_terms(extract_api_calls(pair.secure_slice, inst.language),
                      config.api_dot_split);
        nlohmann::json t;
        for (const auto& [term, count] : terms) {
            t[term] = count;
        }
        example_terms[inst.id] = t;
    }

    write_vector_table(kb_vectors_dir(kb_dir) / "cause.bin", cause_table,
                       provider.identity());
    write_vector_table(kb_vectors_dir(kb_dir) / "code.bin", code_table, provider.identity());

    nlohmann::json sparse{{"cwe", sparse_index_to_json(cwe_index)},
                          {"examples", example_terms}};
    write_text_file(kb_sparse_path(kb_dir), sparse.dump(2) + "\n");

    nlohmann::json thresholds{
        {"api", config.fusion.thresholds.at(Facet::api)},
        {"cause", config.fusion.thresholds.at(Facet::cause)},
        {"code", config.fusion.thresholds.at(Facet::code)}};
    nlohmann::json manifest{{"schema_version", 1},
                            {"provider", provider.identity()},
                            {"embedding_dim", provider.dimensionality()},
                            {"corpus_hash", corpus_fingerprint(corpus_text)},
                            {"parameters",
                             {{"hops", config.hop_limit},
                              {"batch", config.batch_size},
                              {"top_k", config.top_k},
                              {"alpha", config.fusion.alpha},
                              {"rank_cap", config.fusion.rank_cap},
                              {"thresholds", thresholds},
                              {"bm25_k1", cwe_index.k1},
                              {"bm25_b", cwe_index.b},
                              {"api_dot_split", config.api_dot_split}}}};
    write_text_file(kb_manifest_path(kb_dir), manifest.dump(2) + "\n");
}

/// Loads a built KB. Missing artifacts raise errors that name the stage to
/// run; a provider identity mismatch is a hard error.
inline KnowledgeBase load_kb(const std::filesystem::path& kb_dir,
                             const std::string& expected_provider = "")
{
    KnowledgeBase kb;
    kb.dir = kb_dir;
    if (!std::filesystem::exists(kb_corpus_path(kb_dir))) {
        throw KbError("missing normalized corpus — run `securekb ingest` first");
    }
    CorpusLoadResult corpus = load_corpus_text(read_text_file(kb_corpus_path(kb_dir)));
    kb.instances = std::move(corpus.instances);
    for (std::size_t i = 0; i < kb.instances.size(); ++i) {
        kb.instance_index[kb.instances[i].id] = i;
    }

    if (!std::filesystem::exists(kb_slices_dir(kb_dir))) {
        throw KbError("missing slices — run `securekb slice` first");
    }
    for (const auto& entry : std::filesystem::directory_iterator(kb_slices_dir(kb_dir))) {
        if (entry.path().extension() != ".json") {
            continue;
        }
        SlicedPair pair =
            sliced_pair_from_json(nlohmann::json::parse(read_text_file(entry.path())));
        kb.slices[pair.instance_id] = std::move(pair);
    }

    if (!std::filesystem::exists(kb_cwe_dir(kb_dir))) {
        throw KbError("missing distilled entries — run `securekb distill` first");
    }
    std::vector<std::filesystem::path> cwe_dirs;
    for (const auto& entry : std::filesystem::directory_iterator(kb_cwe_dir(kb_dir))) {
        if (entry.is_directory()) {
            cwe_dirs.push_back(entry.path());
        }
    }
    std::sort(cwe_dirs.begin(), cwe_dirs.end());
    for (const auto& dir : cwe_dirs) {
        CweEntry entry;
        entry.cwe_id = dir.filename().string();
        entry.guideline = read_text_file(dir / "guideline.md");
        entry.cause_summary = read_text_file(dir / "cause.md");
        nlohmann::json apis = nlohmann::json::parse(read_text_file(dir / "apis.json"));
        for (const auto& [term, count] : apis.at("terms").items()) {
            entry.api_vocabulary[term] = count.get<int>();
        }
        if (apis.contains("member_ids")) {
            entry.member_ids = apis["member_ids"].get<std::vector<std::string>>();
        }
        kb.entries.push_back(std::move(entry));
    }

    if (!std::filesystem::exists(kb_manifest_path(kb_dir))
        || !std::filesystem::exists(kb_sparse_path(kb_dir))) {
        throw KbError("missing retrieval index — run `securekb index` first");
    }
    kb.manifest = nlohmann::json::parse(read_text_file(kb_manifest_path(kb_dir)));
    if (!expected_provider.empty()) {
        std::string indexed = kb.manifest.value("provider", "");
        if (indexed != expected_provider) {
            throw ProviderMismatchError("index was built with provider '" + indexed
                                        + "' but query uses '" + expected_provider + "'");
        }
    }
    nlohmann::json sparse = nlohmann::json::parse(read_text_file(kb_sparse_path(kb_dir)));
    kb.cwe_api_index = sparse_index_from_json(sparse.at("cwe"));
    if (sparse.contains("examples")) {
        for (const auto& [doc_id, terms] : sparse["examples"].items()) {
            TermMultiset t;
            for (const auto& [term, count] : terms.items()) {
                t[term] = count.get<int>();
            }
            kb.example_api_terms[doc_id] = std::move(t);
        }
    }
    kb.cause_vectors = read_vector_table(kb_vectors_dir(kb_dir) / "cause.bin");
    kb.code_vectors = read_vector_table(kb_vectors_dir(kb_dir) / "code.bin");
    for (std::size_t i = 0; i < kb.cause_vectors.ids.size(); ++i) {
        kb.cause_rows[kb.cause_vectors.ids[i]] = i;
    }
    for (std::size_t i = 0; i < kb.code_vectors.ids.size(); ++i) {
        kb.code_rows[kb.code_vectors.ids[i]] = i;
    }
    return kb;
}

/// CWE-level retrieval: the cause facet scores cosine similarity against
/// stored cause summaries, the API facet scores draft-code APIs against the
/// per-CWE vocabulary via BM25, and the two are fused with the gated RRF.
inline std::vector<CweCandidate>
retrieve_cwe(const KnowledgeBase& kb, const ProactiveAnalysis& analysis, int k,
             const FusionParams& params, EmbeddingProvider& provider, bool api_dot_split,
             const FacetMask& mask = FacetMask{})
{
    if (kb.entries.empty()) {
        throw KbError("knowledge base has no CWE entries");
    }
    if (k < 1) {
        throw std::invalid_argument("k must be >= 1");
    }
    std::map<Facet, std::vector<FacetScore>> facet_lists;

    if (mask.cause && !analysis.cause_text.empty()) {
        std::vector<float> query = provider.embed(analysis.cause_text);
        std::vector<std::pair<std::string, double>> scored;
        for (const auto& [cwe_id, row] : kb.cause_rows) {
            double sim = cosine_similarity(query, kb.cause_vectors.row(row));
            scored.emplace_back(cwe_id, sim);
        }
        facet_lists[Facet::cause] = rank_facet(Facet::cause, std::move(scored));
    }
    if (mask.api && !analysis.draft_apis.empty()) {
        TermMultiset query = api_terms(analysis.draft_apis, api_dot_split);
        facet_lists[Facet::api] = rank_facet(Facet::api, bm25_score(kb.cwe_api_index, query));
    }

    std::vector<FusedCandidate> fused = rrf_fuse(facet_lists, params);
    std::vector<CweCandidate> out;
    for (const auto& cand : fused) {
        if (static_cast<int>(out.size()) >= k) {
            break;
        }
        out.push_back({cand.candidate_id, cand.fused_score});
    }
    return out;
}

/// Code-level retrieval within a CWE shortlist: api, cause and code facets
/// over sliced secure examples, fused with the same gated RRF. Returns the
/// best survivor or nothing when every candidate is gated out.
inline std::optional<ExampleSelection>
retrieve_example(const KnowledgeBase& kb, const ProactiveAnalysis& analysis,
                 const std::vector<std::string>& cwe_shortlist, const FusionParams& params,
                 EmbeddingProvider& provider, bool api_dot_split,
                 const FacetMask& mask = FacetMask{})
{
    if (cwe_shortlist.empty()) {
        return std::nullopt;
    }
    std::set<std::string> shortlist(cwe_shortlist.begin(), cwe_shortlist.end());

    struct Candidate {
        std::string id;
        std::string cwe_id;
    };
    std::vector<Candidate> candidates;
    for (const auto& inst : kb.instances) {
        if (shortlist.count(inst.cwe_id) == 0 || inst.language != analysis.language) {
            continue;
        }
        if (kb.code_rows.count(inst.id) == 0) {
            continue;  // empty slice, excluded from the code-level index
        }
        candidates.push_back({inst.id, inst.cwe_id});
    }
    if (candidates.empty()) {
        return std::nullopt;
    }

    std::map<Facet, std::vector<FacetScore>> facet_lists;

    if (mask.api && !analysis.draft_apis.empty()) {
        SparseIndex subset;
        for (const auto& cand : candidates) {
            auto it = kb.example_api_terms.find(cand.id);
            if (it != kb.example_api_terms.end()) {
                subset.documents[cand.id] = it->second;
            }
        }
        subset.rebuild_statistics();
        TermMultiset query = api_terms(analysis.draft_apis, api_dot_split);
        facet_lists[Facet::api] = rank_facet(Facet::api, bm25_score(subset, query));
    }
    if (mask.cause && !analysis.cause_text.empty()) {
        std::vector<float> query = provider.embed(analysis.cause_text);
        std::vector<std::pair<std::string, double>> scored;
        for (const auto& cand : candidates) {
            auto row = kb.cause_rows.find(cand.cwe_id);
            double sim = row == kb.cause_rows.end()
                             ? 0.0
                             : cosine_similarity(query, kb.cause_vectors.row(row->second));
            scored.emplace_back(cand.id, sim);
        }
        facet_lists[Facet::cause] = rank_facet(Facet::cause, std::move(scored));
    }
    if (mask.code && !analysis.draft_code.empty()) {
        std::vector<float> query = provider.embed(analysis.draft_code);
        std::vector<std::pair<std::string, double>> scored;
        for (const auto& cand : candidates) {
            auto row = kb.code_rows.find(cand.id);
            double sim = row == kb.code_rows.end()
                             ? 0.0
                             : cosine_similarity(query, kb.code_vectors.row(row->second));
            scored.emplace_back(cand.id, sim);
        }
        facet_lists[Facet::code] = rank_facet(Facet::code, std::move(scored));
    }

    std::vector<FusedCandidate> fused = rrf_fuse(facet_lists, params);
    if (fused.empty()) {
        return std::nullopt;
    }
    const FusedCandidate& best = fused.front();
    for (const auto& cand : candidates) {
        if (cand.id == best.candidate_id) {
            return ExampleSelection{cand.id, cand.cwe_id, best.fused_score};
        }
    }
    return std::nullopt;
}

}  // namespace securekb
