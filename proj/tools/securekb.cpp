// securekb — build a security knowledge base from vulnerability-fix data and
// use it to steer code generation toward secure output.
//
// Subcommands follow the KB lifecycle:
//   ingest -> slice -> distill -> index -> query/generate -> evaluate
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 client/provider error.

#include "securekb/clients.hpp"
#include "securekb/config.hpp"
#include "securekb/corpus.hpp"
#include "securekb/distiller.hpp"
#include "securekb/knowledge_base.hpp"
#include "securekb/metrics.hpp"
#include "securekb/pipeline.hpp"
#include "securekb/slicer.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <limits>

#include <filesystem>
#include <iostream>
#include <memory>
#include <string>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitClient = 3;

using namespace securekb;

std::unique_ptr<EmbeddingProvider> make_provider(const std::string& name, int dim)
{
    if (name == "hash") {
        return std::make_unique<HashingEmbeddingProvider>(dim);
    }
    throw std::invalid_argument("unknown embedding provider: " + name
                                + " (available: hash)");
}

int cmd_ingest(const RunConfig& config)
{
    CorpusLoadResult result = load_corpus(config.corpus_path);
    auto reject_path = write_reject_file(config.corpus_path, result);
    write_kb_corpus(config.kb_dir, result.instances);
    nlohmann::json report{{"instances", result.instances.size()},
                          {"rejected", result.rejected.size()},
                          {"dropped_empty", result.dropped_empty},
                          {"dropped_duplicates", result.dropped_duplicates},
                          {"skipped_language", result.skipped_language}};
    std::cout << report.dump() << '\n';
    if (reject_path) {
        std::cerr << "quarantined records written to " << reject_path->string() << '\n';
    }
    return kExitOk;
}

int cmd_slice(const RunConfig& config)
{
    CorpusLoadResult corpus = load_corpus(kb_corpus_path(config.kb_dir));
    int written = 0;
    int empty = 0;
    for (const auto& inst : corpus.instances) {
        SlicedPair pair = slice_instance(inst, config.hop_limit);
        write_kb_slice(config.kb_dir, pair);
        ++written;
        if (pair.empty()) {
            ++empty;
        }
    }
    std::cout << nlohmann::json{{"slices", written}, {"empty", empty}}.dump() << '\n';
    return kExitOk;
}

int cmd_distill(const RunConfig& config, const std::string& run_id, bool force)
{
    CorpusLoadResult corpus = load_corpus(kb_corpus_path(config.kb_dir));
    auto clusters = cluster(corpus.instances);
    auto transcript_path = kb_transcripts_dir(config.kb_dir) / (run_id + ".jsonl");
    TranscriptRecorder client(make_client(config.summarizer_client), transcript_path);

    int built = 0;
    int skipped = 0;
    std::vector<std::string> failed;
    for (const auto& [cwe_id, members] : clusters) {
        std::filesystem::path done_marker = kb_cwe_dir(config.kb_dir) / cwe_id / "guideline.md";
        if (!force && std::filesystem::exists(done_marker)) {
            ++skipped;  // resumable: completed clusters are not redistilled
            continue;
        }
        try {
            std::map<std::string, std::vector<VulnFixInstance>> one{{cwe_id, members}};
            std::vector<CweEntry> entries = build_entries(one, client, config.batch_size);
            for (const auto& entry : entries) {
                write_kb_entry(config.kb_dir, entry);
            }
            ++built;
        } catch (const ClientError& e) {
            // The cluster aborts; finished clusters stay on disk, so a rerun
            // resumes from here.
            failed.push_back(cwe_id);
            std::cerr << "cluster " << cwe_id << " aborted: " << e.what() << '\n';
        }
    }
    std::cout << nlohmann::json{{"clusters", clusters.size()},
                                {"distilled", built},
                                {"resumed_skip", skipped},
                                {"failed", failed}}
                     .dump()
              << '\n';
    return failed.empty() ? kExitOk : kExitClient;
}

int cmd_index(const RunConfig& config, const std::string& provider_name)
{
    auto provider = make_provider(provider_name, config.embedding_dim);
    build_kb_index(config.kb_dir, *provider, config);
    std::cout << nlohmann::json{{"provider", provider->identity()}}.dump() << '\n';
    return kExitOk;
}

CodingTask load_task_file(const std::filesystem::path& path)
{
    nlohmann::json j = nlohmann::json::parse(read_text_file(path));
    CodingTask task;
    task.id = j.value("id", path.stem().string());
    auto lang = lang_from_string(j.at("language").get<std::string>());
    if (!lang) {
        throw std::runtime_error("unsupported task language");
    }
    task.language = *lang;
    task.code = j.at("code").get<std::string>();
    return task;
}

int cmd_query(const RunConfig& config, const std::string& provider_name,
              const std::filesystem::path& task_path)
{
    auto provider = make_provider(provider_name, config.embedding_dim);
    nlohmann::json output{{"cwe_candidates", nlohmann::json::array()},
                          {"example", nullptr}};
    KnowledgeBase kb;
    try {
        kb = load_kb(config.kb_dir, provider->identity());
    } catch (const ProviderMismatchError&) {
        throw;
    } catch (const KbError& e) {
        std::cout << output.dump() << '\n';
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }

    CodingTask task = load_task_file(task_path);
    auto client = make_client(config.generation_client);

    ProactiveAnalysis analysis;
    analysis.task_id = task.id;
    analysis.task_text = task.code;
    analysis.language = task.language;
    try {
        analysis.draft_code = draft_generate(task, *client, config.chat_style);
        analysis.draft_apis = extract_api_calls(analysis.draft_code, task.language);
    } catch (const std::exception&) {
    }
    try {
        analysis.cause_text = analyze_cause(task, *client);
    } catch (const std::exception&) {
    }

    std::vector<CweCandidate> candidates;
    try {
        candidates = retrieve_cwe(kb, analysis, config.top_k, config.fusion, *provider,
                                  config.api_dot_split);
    } catch (const KbError& e) {
        std::cout << output.dump() << '\n';
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    for (const auto& cand : candidates) {
        output["cwe_candidates"].push_back(
            {{"cwe_id", cand.cwe_id}, {"fused_score", cand.fused_score}});
    }
    if (!candidates.empty()) {
        std::vector<std::string> shortlist;
        for (const auto& cand : candidates) {
            shortlist.push_back(cand.cwe_id);
        }
        auto selection = retrieve_example(kb, analysis, shortlist, config.fusion, *provider,
                                          config.api_dot_split);
        if (selection) {
            output["example"] = {{"example_id", selection->example_id},
                                 {"cwe_id", selection->cwe_id},
                                 {"fused_score", selection->fused_score}};
        }
    }
    std::cout << output.dump() << '\n';
    return kExitOk;
}

int cmd_generate(const RunConfig& config, const std::string& provider_name,
                 const std::filesystem::path& tasks_path, const std::string& run_id,
                 const FacetMask& mask)
{
    auto provider = make_provider(provider_name, config.embedding_dim);
    KnowledgeBase kb = load_kb(config.kb_dir, provider->identity());
    auto client = make_client(config.generation_client);
    std::vector<CodingTask> tasks = parse_tasks_jsonl(read_text_file(tasks_path));

    std::filesystem::path out_path = kb_runs_dir(config.kb_dir) / run_id / "records.jsonl";
    std::filesystem::create_directories(out_path.parent_path());
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);

    int records = 0;
    for (const auto& task : tasks) {
        auto task_records = run_task(task, kb, *client, *provider, config, mask);
        for (const auto& record : task_records) {
            out << generation_record_to_json(record).dump() << '\n';
            ++records;
        }
    }
    std::cout << nlohmann::json{{"tasks", tasks.size()},
                                {"records", records},
                                {"output", out_path.string()}}
                     .dump()
              << '\n';
    return kExitOk;
}

int cmd_evaluate(const std::filesystem::path& verdicts_path, const std::vector<int>& ks,
                 bool json_output)
{
    std::vector<SampleVerdict> verdicts =
        parse_verdicts_jsonl(read_text_file(verdicts_path));
    MetricReport report = aggregate(verdicts, ks.empty() ? std::vector<int>{1} : ks);
    if (json_output) {
        std::cout << report_to_json(report).dump(2) << '\n';
    } else {
        std::cout << report_to_table(report);
    }
    return kExitOk;
}

int cmd_inspect(const RunConfig& config, bool json_output, const std::string& pdg_of,
                const std::string& pdg_side)
{
    nlohmann::json output;
    std::filesystem::path corpus_file = kb_corpus_path(config.kb_dir);
    if (!std::filesystem::exists(corpus_file)) {
        throw KbError("missing normalized corpus — run `securekb ingest` first");
    }
    CorpusLoadResult corpus = load_corpus(corpus_file);

    if (!pdg_of.empty()) {
        // Debug dump of one instance's dependence graph.
        for (const auto& inst : corpus.instances) {
            if (inst.id != pdg_of) {
                continue;
            }
            const std::string& source =
                pdg_side == "vulnerable" ? inst.vulnerable_code : inst.secure_code;
            std::cout << pdg_to_debug_text(build_pdg(source, inst.language));
            return kExitOk;
        }
        throw KbError("no instance with id " + pdg_of);
    }

    output["instances"] = corpus.instances.size();

    nlohmann::json cluster_sizes;
    for (const auto& [cwe_id, members] : cluster(corpus.instances)) {
        cluster_sizes[cwe_id] = members.size();
    }
    output["clusters"] = cluster_sizes;

    if (std::filesystem::exists(kb_slices_dir(config.kb_dir))) {
        std::vector<SlicedPair> pairs;
        std::vector<VulnFixInstance> matched;
        for (const auto& inst : corpus.instances) {
            std::filesystem::path p = kb_slices_dir(config.kb_dir) / (inst.id + ".json");
            if (std::filesystem::exists(p)) {
                pairs.push_back(
                    sliced_pair_from_json(nlohmann::json::parse(read_text_file(p))));
                matched.push_back(inst);
            }
        }
        output["slices"] = pairs.size();
        double ratio = mean_kept_ratio(matched, pairs);
        output["mean_kept_ratio"] = ratio;
        output["mean_line_reduction"] = 1.0 - ratio;
    }
    if (std::filesystem::exists(kb_manifest_path(config.kb_dir))) {
        output["manifest"] =
            nlohmann::json::parse(read_text_file(kb_manifest_path(config.kb_dir)));
    }
    if (json_output) {
        std::cout << output.dump(2) << '\n';
    } else {
        std::cout << "instances: " << output["instances"] << '\n';
        std::cout << "clusters:\n";
        for (const auto& [cwe, size] : output["clusters"].items()) {
            std::cout << "  " << cwe << ": " << size << '\n';
        }
        if (output.contains("mean_kept_ratio")) {
            std::cout << "slices: " << output["slices"] << '\n';
            std::cout << "mean kept-line ratio: " << output["mean_kept_ratio"] << '\n';
            std::cout << "mean line reduction: " << output["mean_line_reduction"] << '\n';
        }
        if (output.contains("manifest")) {
            std::cout << "provider: " << output["manifest"]["provider"] << '\n';
            std::cout << "corpus hash: " << output["manifest"]["corpus_hash"] << '\n';
        }
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"hierarchical security knowledge base toolkit"};
    app.require_subcommand(1);

    std::string config_file;

    RunConfig config;

    // Flags write into locals first; they only override config-file values
    // when actually passed.
    constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();
    std::string kb_dir;
    std::string corpus;
    int hops = 0;
    int batch = 0;
    int top_k = 0;
    double alpha = 0;
    int rank_cap = 0;
    double tau_api = kUnset;
    double tau_cause = kUnset;
    double tau_code = kUnset;
    int dim = 0;
    int samples = 0;
    std::string client_kind;
    std::string model;
    double temperature = -1;
    bool chat_style = false;
    bool deterministic = false;
    std::string provider_name = "hash";
    std::string run_id;
    std::string task_file;
    std::string tasks_file;
    std::string verdicts_file;
    std::vector<int> ks;
    bool json_output = false;
    bool force = false;
    bool no_api_facet = false;
    bool no_cause_facet = false;
    bool no_code_facet = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_file, "JSON config file (flags take precedence)");
        cmd->add_option("--kb", kb_dir, "knowledge base directory");
        cmd->add_flag("--json", json_output, "machine-readable output");
    };
    auto add_client_opts = [&](CLI::App* cmd) {
        cmd->add_option("--client", client_kind, "client kind: stub | http | replay");
        cmd->add_option("--model", model, "model name for http clients");
        cmd->add_option("--temperature", temperature, "sampling temperature");
    };

    CLI::App* ingest = app.add_subcommand("ingest", "validate and normalize a corpus");
    add_common(ingest);
    ingest->add_option("--corpus", corpus, "JSONL corpus file")->required();

    CLI::App* slice_cmd = app.add_subcommand("slice", "build slices around patch lines");
    add_common(slice_cmd);
    slice_cmd->add_option("--hops", hops, "dependence hops to include");

    CLI::App* distill = app.add_subcommand("distill", "summarize clusters into guidelines");
    add_common(distill);
    add_client_opts(distill);
    distill->add_option("--batch", batch, "summarization batch size");
    distill->add_option("--run-id", run_id, "transcript identifier");
    distill->add_flag("--force", force, "redistill clusters that already have entries");

    CLI::App* index = app.add_subcommand("index", "build retrieval indexes");
    add_common(index);
    index->add_option("--provider", provider_name, "embedding provider (hash)");
    index->add_option("--dim", dim, "embedding dimensionality");

    CLI::App* query = app.add_subcommand("query", "diagnostic retrieval for one task");
    add_common(query);
    add_client_opts(query);
    query->add_option("--provider", provider_name, "embedding provider (hash)");
    query->add_option("--dim", dim, "embedding dimensionality");
    query->add_option("--task", task_file, "task JSON file")->required();
    query->add_option("--top-k", top_k, "CWE shortlist size");

    CLI::App* generate = app.add_subcommand("generate", "augmented generation for tasks");
    add_common(generate);
    add_client_opts(generate);
    generate->add_option("--provider", provider_name, "embedding provider (hash)");
    generate->add_option("--dim", dim, "embedding dimensionality");
    generate->add_option("--tasks", tasks_file, "tasks JSONL file")->required();
    generate->add_option("--run-id", run_id, "run identifier");
    generate->add_option("--samples", samples, "samples per task");
    generate->add_option("--top-k", top_k, "CWE shortlist size");
    generate->add_flag("--chat", chat_style, "use the chat prompt templates");
    generate->add_flag("--deterministic", deterministic,
                       "record zero timings for reproducible output");
    generate->add_flag("--no-api-facet", no_api_facet, "disable the API facet");
    generate->add_flag("--no-cause-facet", no_cause_facet, "disable the cause facet");
    generate->add_flag("--no-code-facet", no_code_facet, "disable the code facet");

    CLI::App* evaluate = app.add_subcommand("evaluate", "metrics from external verdicts");
    add_common(evaluate);
    evaluate->add_option("--verdicts", verdicts_file, "verdict JSONL file")->required();
    evaluate->add_option("--k", ks, "k values for pass@k / securepass@k");

    std::string pdg_of;
    std::string pdg_side = "secure";
    CLI::App* inspect = app.add_subcommand("inspect", "KB manifest and statistics");
    add_common(inspect);
    inspect->add_option("--pdg", pdg_of, "dump the dependence graph of one instance id");
    inspect->add_option("--side", pdg_side, "graph side: vulnerable | secure")
        ->check(CLI::IsMember({"vulnerable", "secure"}));

    // Shared tuning flags for retrieval-bearing commands.
    for (CLI::App* cmd : {query, generate}) {
        cmd->add_option("--alpha", alpha, "RRF smoothing parameter");
        cmd->add_option("--rank-cap", rank_cap, "RRF rank cap");
        cmd->add_option("--threshold-api", tau_api, "API facet threshold");
        cmd->add_option("--threshold-cause", tau_cause, "cause facet threshold");
        cmd->add_option("--threshold-code", tau_code, "code facet threshold");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (!config_file.empty()) {
            load_config_file(config, config_file);
        }
        // Command line beats config file beats defaults.
        if (!kb_dir.empty()) config.kb_dir = kb_dir;
        if (!corpus.empty()) config.corpus_path = corpus;
        if (hops > 0) config.hop_limit = hops;
        if (batch > 0) config.batch_size = batch;
        if (top_k > 0) config.top_k = top_k;
        if (alpha > 0) config.fusion.alpha = alpha;
        if (rank_cap > 0) config.fusion.rank_cap = rank_cap;
        if (!std::isnan(tau_api)) config.fusion.thresholds[Facet::api] = tau_api;
        if (!std::isnan(tau_cause)) config.fusion.thresholds[Facet::cause] = tau_cause;
        if (!std::isnan(tau_code)) config.fusion.thresholds[Facet::code] = tau_code;
        if (dim > 0) config.embedding_dim = dim;
        if (samples > 0) config.samples_per_task = samples;
        if (!client_kind.empty()) {
            config.generation_client.kind = client_kind;
            config.summarizer_client.kind = client_kind;
        }
        if (!model.empty()) {
            config.generation_client.model = model;
            config.summarizer_client.model = model;
        }
        if (temperature >= 0) {
            config.generation_client.temperature = temperature;
            config.summarizer_client.temperature = temperature;
        }
        if (chat_style) config.chat_style = true;
        if (deterministic) config.deterministic_timings = true;

        FacetMask mask;
        mask.api = !no_api_facet;
        mask.cause = !no_cause_facet;
        mask.code = !no_code_facet;

        if (ingest->parsed()) {
            return cmd_ingest(config);
        }
        if (slice_cmd->parsed()) {
            return cmd_slice(config);
        }
        if (distill->parsed()) {
            return cmd_distill(config, run_id.empty() ? "distill" : run_id, force);
        }
        if (index->parsed()) {
            return cmd_index(config, provider_name);
        }
        if (query->parsed()) {
            return cmd_query(config, provider_name, task_file);
        }
        if (generate->parsed()) {
            return cmd_generate(config, provider_name, tasks_file,
                                run_id.empty() ? "run" : run_id, mask);
        }
        if (evaluate->parsed()) {
            return cmd_evaluate(verdicts_file, ks, json_output);
        }
        if (inspect->parsed()) {
            return cmd_inspect(config, json_output, pdg_of, pdg_side);
        }
        std::cerr << "error: no subcommand\n";
        return kExitUsage;
    } catch (const ClientError& e) {
        std::cerr << "client error: " << e.what() << '\n';
        return kExitClient;
    } catch (const ProviderMismatchError& e) {
        std::cerr << "provider error: " << e.what() << '\n';
        return kExitClient;
    } catch (const std::invalid_argument& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
}
