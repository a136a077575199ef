#pragma once

#include "securekb/clients.hpp"
#include "securekb/knowledge_base.hpp"
#include "securekb/prompts.hpp"

#include <chrono>
#include <optional>
#include <string>
#include <vector>

namespace securekb {

/// The knowledge injected into the generation prompt: the selected CWE's
/// guideline plus one sliced secure example.
struct SecurityContext {
    std::string cwe_id;
    std::string guideline;
    std::string example_id;
    std::string secure_example;
    std::string example_language;
};

struct StageTimings {
    long draft_ms = 0;
    long cause_ms = 0;
    long cwe_retrieval_ms = 0;
    long code_retrieval_ms = 0;
    long generation_ms = 0;
};

struct GenerationRecord {
    std::string task_id;
    int sample_index = 0;
    ProactiveAnalysis analysis;
    std::optional<SecurityContext> context;
    std::string prompt;
    std::string completion;
    StageTimings timings;
    std::vector<std::string> stage_errors;
};

struct CodingTask {
    std::string id;
    Lang language = Lang::python;
    std::string code;  // snippet/description the model completes
};

/// Zero-shot draft: completion-style models get the raw task text, chat
/// models get the zero-shot template. Code fences are stripped from the
/// response.
inline std::string draft_generate(const CodingTask& task, TextClient& client,
                                  bool chat_style)
{
    std::string prompt = chat_style
                             ? zero_shot_prompt(lang_to_string(task.language), task.code)
                             : task.code;
    return strip_code_fence(client.complete(prompt));
}

/// Vulnerability-cause analysis for the task; plain-paragraph output.
inline std::string analyze_cause(const CodingTask& task, TextClient& client)
{
    return client.complete(cause_analysis_prompt(lang_to_string(task.language), task.code));
}

/// Instantiates the augmented template (or the zero-shot form when there is
/// no context) for the chosen style.
inline std::string assemble_prompt(const CodingTask& task,
                                   const std::optional<SecurityContext>& context,
                                   bool chat_style)
{
    if (!context) {
        return chat_style ? zero_shot_prompt(lang_to_string(task.language), task.code)
                          : task.code;
    }
    if (context->guideline.empty() || context->secure_example.empty()) {
        throw PromptAssemblyError("security context must carry a guideline and an example");
    }
    return augmented_prompt(chat_style, context->guideline, context->example_language,
                            context->secure_example, lang_to_string(task.language),
                            task.code);
}

namespace detail {

class StageClock {
public:
    explicit StageClock(bool frozen) : frozen_(frozen) {}

    template <typename F>
    long measure(F&& f) const
    {
        if (frozen_) {
            f();
            return 0;
        }
        auto start = std::chrono::steady_clock::now();
        f();
        auto end = std::chrono::steady_clock::now();
        return std::chrono::duration_cast<std::chrono::milliseconds>(end - start).count();
    }

private:
    bool frozen_;
};

}  // namespace detail

/// Full online pass for one task: draft, cause analysis, two-level
/// retrieval, prompt assembly, and n augmented generations sharing one
/// analysis. Every facet failure degrades; only a generation-client hard
/// failure aborts.
inline std::vector<GenerationRecord>
run_task(const CodingTask& task, const KnowledgeBase& kb, TextClient& generation_client,
         EmbeddingProvider& provider, const RunConfig& config,
         const FacetMask& mask = FacetMask{})
{
    detail::StageClock clock(config.deterministic_timings);
    GenerationRecord base;
    base.task_id = task.id;
    base.analysis.task_id = task.id;
    base.analysis.task_text = task.code;
    base.analysis.language = task.language;

    bool api_available = mask.api;
    bool cause_available = mask.cause;
    bool code_available = mask.code;

    base.timings.draft_ms = clock.measure([&] {
        try {
            base.analysis.draft_code = draft_generate(task, generation_client,
                                                      config.chat_style);
            base.analysis.draft_apis =
                extract_api_calls(base.analysis.draft_code, task.language);
        } catch (const std::exception& e) {
            base.stage_errors.push_back(std::string("draft: ") + e.what());
            base.analysis.draft_code.clear();
            base.analysis.draft_apis.clear();
        }
    });
    if (base.analysis.draft_apis.empty()) {
        api_available = false;
    }
    if (base.analysis.draft_code.empty()) {
        code_available = false;
    }

    base.timings.cause_ms = clock.measure([&] {
        try {
            base.analysis.cause_text = analyze_cause(task, generation_client);
        } catch (const std::exception& e) {
            base.stage_errors.push_back(std::string("cause: ") + e.what());
            base.analysis.cause_text.clear();
        }
    });
    if (base.analysis.cause_text.empty()) {
        cause_available = false;
    }

    FacetMask effective{api_available, cause_available, code_available};

    std::vector<CweCandidate> shortlist;
    base.timings.cwe_retrieval_ms = clock.measure([&] {
        try {
            if (effective.api || effective.cause) {
                shortlist = retrieve_cwe(kb, base.analysis, config.top_k, config.fusion,
                                         provider, config.api_dot_split, effective);
            }
        } catch (const std::exception& e) {
            base.stage_errors.push_back(std::string("cwe_retrieval: ") + e.what());
            shortlist.clear();
        }
    });

    std::optional<ExampleSelection> selection;
    base.timings.code_retrieval_ms = clock.measure([&] {
        try {
            if (!shortlist.empty()) {
                std::vector<std::string> ids;
                ids.reserve(shortlist.size());
                for (const auto& cand : shortlist) {
                    ids.push_back(cand.cwe_id);
                }
                selection = retrieve_example(kb, base.analysis, ids, config.fusion,
                                             provider, config.api_dot_split, effective);
            }
        } catch (const std::exception& e) {
            base.stage_errors.push_back(std::string("code_retrieval: ") + e.what());
            selection.reset();
        }
    });

    if (selection) {
        const CweEntry* entry = kb.entry_for(selection->cwe_id);
        const VulnFixInstance* inst = kb.instance_for(selection->example_id);
        auto slice_it = kb.slices.find(selection->example_id);
        if (entry != nullptr && slice_it != kb.slices.end()
            && !trim(slice_it->second.secure_slice).empty()
            && !trim(entry->guideline).empty()) {
            SecurityContext context;
            context.cwe_id = selection->cwe_id;
            context.guideline = entry->guideline;
            context.example_id = selection->example_id;
            context.secure_example = slice_it->second.secure_slice;
            context.example_language =
                inst != nullptr ? lang_to_string(inst->language)
                                : lang_to_string(task.language);
            base.context = std::move(context);
        }
    }

    base.prompt = assemble_prompt(task, base.context, config.chat_style);

    std::vector<GenerationRecord> records;
    int n = std::max(1, config.samples_per_task);
    for (int sample = 0; sample < n; ++sample) {
        GenerationRecord record = base;
        record.sample_index = sample;
        record.timings.generation_ms = clock.measure([&] {
            record.completion = generation_client.complete(record.prompt);
        });
        records.push_back(std::move(record));
    }
    return records;
}

inline nlohmann::json generation_record_to_json(const GenerationRecord& record)
{
    nlohmann::json analysis{{"task_id", record.analysis.task_id},
                            {"task_text", record.analysis.task_text},
                            {"language", lang_to_string(record.analysis.language)},
                            {"draft_code", record.analysis.draft_code},
                            {"draft_apis", record.analysis.draft_apis},
                            {"cause_text", record.analysis.cause_text}};
    nlohmann::json context;
    if (record.context) {
        context = nlohmann::json{{"cwe_id", record.context->cwe_id},
                                 {"guideline", record.context->guideline},
                                 {"example_id", record.context->example_id},
                                 {"secure_example", record.context->secure_example},
                                 {"example_language", record.context->example_language}};
    }
    return nlohmann::json{{"task_id", record.task_id},
                          {"sample_index", record.sample_index},
                          {"analysis", analysis},
                          {"context", context},
                          {"prompt", record.prompt},
                          {"completion", record.completion},
                          {"timings",
                           {{"draft_ms", record.timings.draft_ms},
                            {"cause_ms", record.timings.cause_ms},
                            {"cwe_retrieval_ms", record.timings.cwe_retrieval_ms},
                            {"code_retrieval_ms", record.timings.code_retrieval_ms},
                            {"generation_ms", record.timings.generation_ms}}},
                          {"stage_errors", record.stage_errors}};
}

inline std::vector<CodingTask> parse_tasks_jsonl(const std::string& text)
{
    std::vector<CodingTask> tasks;
    for (const auto& line : split_lines(text)) {
        if (trim(line).empty()) {
            continue;
        }
        nlohmann::json j = nlohmann::json::parse(line);
        CodingTask task;
        task.id = j.at("id").get<std::string>();
        auto lang = lang_from_string(j.at("language").get<std::string>());
        if (!lang) {
            throw std::runtime_error("task " + task.id + ": unsupported language");
        }
        task.language = *lang;
        task.code = j.at("code").get<std::string>();
        tasks.push_back(std::move(task));
    }
    return tasks;
}

}  // namespace securekb
