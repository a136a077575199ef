#pragma once

#include "securekb/clients.hpp"
#include "securekb/fusion.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <string>

namespace securekb {

/// Layered run configuration. Defaults are the reference operating point:
/// h=2, b=10, top_k=4, thresholds {4.0, 0.75, 0.65}, alpha=60, rank cap 10,
/// generation temperature 0.2.
struct RunConfig {
    std::filesystem::path corpus_path;
    std::filesystem::path kb_dir = "kb";

    int hop_limit = 2;
    int batch_size = 10;
    int top_k = 4;
    FusionParams fusion;  // thresholds/alpha/rank_cap defaults live there
    bool api_dot_split = true;
    int embedding_dim = 256;
    int samples_per_task = 1;
    int concurrency_limit = 1;
    bool chat_style = false;
    bool deterministic_timings = false;

    ClientConfig generation_client;   // temperature 0.2 default
    ClientConfig summarizer_client;   // distillation runs at temperature 0

    RunConfig()
    {
        summarizer_client.temperature = 0.0;
        generation_client.temperature = 0.2;
    }
};

inline void apply_config_json(RunConfig& config, const nlohmann::json& j)
{
    if (j.contains("corpus")) config.corpus_path = j["corpus"].get<std::string>();
    if (j.contains("kb_dir")) config.kb_dir = j["kb_dir"].get<std::string>();
    if (j.contains("hops")) config.hop_limit = j["hops"].get<int>();
    if (j.contains("batch")) config.batch_size = j["batch"].get<int>();
    if (j.contains("top_k")) config.top_k = j["top_k"].get<int>();
    if (j.contains("alpha")) config.fusion.alpha = j["alpha"].get<double>();
    if (j.contains("rank_cap")) config.fusion.rank_cap = j["rank_cap"].get<int>();
    if (j.contains("threshold_api"))
        config.fusion.thresholds[Facet::api] = j["threshold_api"].get<double>();
    if (j.contains("threshold_cause"))
        config.fusion.thresholds[Facet::cause] = j["threshold_cause"].get<double>();
    if (j.contains("threshold_code"))
        config.fusion.thresholds[Facet::code] = j["threshold_code"].get<double>();
    if (j.contains("api_dot_split")) config.api_dot_split = j["api_dot_split"].get<bool>();
    if (j.contains("embedding_dim")) config.embedding_dim = j["embedding_dim"].get<int>();
    if (j.contains("samples")) config.samples_per_task = j["samples"].get<int>();
    if (j.contains("concurrency")) config.concurrency_limit = j["concurrency"].get<int>();
    if (j.contains("chat_style")) config.chat_style = j["chat_style"].get<bool>();
    if (j.contains("deterministic_timings"))
        config.deterministic_timings = j["deterministic_timings"].get<bool>();

    auto apply_client = [](ClientConfig& c, const nlohmann::json& cj) {
        if (cj.contains("kind")) c.kind = cj["kind"].get<std::string>();
        if (cj.contains("base_url")) c.base_url = cj["base_url"].get<std::string>();
        if (cj.contains("model")) c.model = cj["model"].get<std::string>();
        if (cj.contains("temperature")) c.temperature = cj["temperature"].get<double>();
        if (cj.contains("max_retries")) c.max_retries = cj["max_retries"].get<int>();
        if (cj.contains("retry_backoff_ms"))
            c.retry_backoff_ms = cj["retry_backoff_ms"].get<int>();
        if (cj.contains("min_request_interval_ms"))
            c.min_request_interval_ms = cj["min_request_interval_ms"].get<int>();
        if (cj.contains("stub_mode")) c.stub_mode = cj["stub_mode"].get<std::string>();
        if (cj.contains("stub_text")) c.stub_text = cj["stub_text"].get<std::string>();
        if (cj.contains("replay_transcript"))
            c.replay_transcript = cj["replay_transcript"].get<std::string>();
    };
    if (j.contains("generation_client")) apply_client(config.generation_client, j["generation_client"]);
    if (j.contains("summarizer_client")) apply_client(config.summarizer_client, j["summarizer_client"]);
}

inline void load_config_file(RunConfig& config, const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open config file: " + path.string());
    }
    nlohmann::json j = nlohmann::json::parse(in);
    apply_config_json(config, j);
}

}  // namespace securekb
