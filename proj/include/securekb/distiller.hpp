#pragma once

#include "securekb/clients.hpp"
#include "securekb/corpus.hpp"
#include "securekb/program_graph.hpp"
#include "securekb/prompts.hpp"
#include "securekb/sparse_index.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace securekb {

/// Distilled per-CWE knowledge: a guideline, a cause summary, the cluster's
/// API vocabulary (with frequencies, for BM25), and its member instances.
struct CweEntry {
    std::string cwe_id;
    std::string guideline;
    std::string cause_summary;
    TermMultiset api_vocabulary;
    std::vector<std::string> member_ids;
};

/// Groups instances by CWE type. Order within a cluster preserves corpus
/// order; clusters iterate in CWE-id order.
inline std::map<std::string, std::vector<VulnFixInstance>>
cluster(const std::vector<VulnFixInstance>& instances)
{
    std::map<std::string, std::vector<VulnFixInstance>> clusters;
    for (const auto& inst : instances) {
        clusters[inst.cwe_id].push_back(inst);
    }
    return clusters;
}

using PromptBuilder = std::function<std::string(const std::vector<std::string>&)>;

/// Bottom-up batched summarization: fixed-size batches of at most b are
/// summarized, then the outputs are recursively merged until one snippet
/// remains. Returns that snippet. Call count per level is ceil(n/b).
inline std::string hierarchical_summarize(const std::vector<std::string>& items,
                                          TextClient& client, int batch_size,
                                          const PromptBuilder& initial_prompt,
                                          const PromptBuilder& merge_prompt)
{
    if (batch_size < 2) {
        throw std::invalid_argument("batch size must be >= 2");
    }
    if (items.empty()) {
        return "";
    }
    std::vector<std::string> level;
    for (std::size_t start = 0; start < items.size();
         start += static_cast<std::size_t>(batch_size)) {
        std::size_t end = std::min(items.size(), start + static_cast<std::size_t>(batch_size));
        std::vector<std::string> batch(items.begin() + static_cast<std::ptrdiff_t>(start),
                                       items.begin() + static_cast<std::ptrdiff_t>(end));
        level.push_back(client.complete(initial_prompt(batch)));
    }
    while (level.size() > 1) {
        std::vector<std::string> next;
        for (std::size_t start = 0; start < level.size();
             start += static_cast<std::size_t>(batch_size)) {
            std::size_t end =
                std::min(level.size(), start + static_cast<std::size_t>(batch_size));
            std::vector<std::string> batch(level.begin() + static_cast<std::ptrdiff_t>(start),
                                           level.begin() + static_cast<std::ptrdiff_t>(end));
            next.push_back(client.complete(merge_prompt(batch)));
        }
        level = std::move(next);
    }
    return level.front();
}

namespace detail {

inline std::vector<std::string> case_texts(const std::vector<VulnFixInstance>& members)
{
    // Each item carries one case; the prompt builders reassemble the
    // numbered case list per batch.
    std::vector<std::string> out;
    out.reserve(members.size());
    for (const auto& inst : members) {
        out.push_back(inst.vulnerable_code + "\x1f" + inst.patch);
    }
    return out;
}

inline std::vector<CasePayload> split_case_texts(const std::vector<std::string>& items)
{
    std::vector<CasePayload> cases;
    cases.reserve(items.size());
    for (const auto& item : items) {
        std::size_t sep = item.find('\x1f');
        CasePayload c;
        if (sep == std::string::npos) {
            c.vulnerable_code = item;
        } else {
            c.vulnerable_code = item.substr(0, sep);
            c.patch = item.substr(sep + 1);
        }
        cases.push_back(std::move(c));
    }
    return cases;
}

}  // namespace detail

struct ClusterSummary {
    std::string guideline;
    std::string cause_summary;
};

/// Runs the recursion twice over one cluster: once with the guideline
/// prompts, once with the cause prompts.
inline ClusterSummary summarize_cluster(const std::vector<VulnFixInstance>& members,
                                        TextClient& client, int batch_size)
{
    std::vector<std::string> items = detail::case_texts(members);
    ClusterSummary summary;
    summary.guideline = hierarchical_summarize(
        items, client, batch_size,
        [](const std::vector<std::string>& batch) {
            return guideline_extraction_prompt(detail::split_case_texts(batch));
        },
        [](const std::vector<std::string>& batch) { return guideline_merge_prompt(batch); });
    summary.cause_summary = hierarchical_summarize(
        items, client, batch_size,
        [](const std::vector<std::string>& batch) {
            return cause_extraction_prompt(detail::split_case_texts(batch));
        },
        [](const std::vector<std::string>& batch) { return cause_merge_prompt(batch); });
    return summary;
}

/// Builds one CweEntry per cluster. The API vocabulary is the multiset union
/// of extracted calls over every member's vulnerable and secure code.
inline std::vector<CweEntry>
build_entries(const std::map<std::string, std::vector<VulnFixInstance>>& clusters,
              TextClient& client, int batch_size)
{
    std::vector<CweEntry> entries;
    for (const auto& [cwe_id, members] : clusters) {
        CweEntry entry;
        entry.cwe_id = cwe_id;
        for (const auto& inst : members) {
            entry.member_ids.push_back(inst.id);
            for (const auto& call : extract_api_calls(inst.vulnerable_code, inst.language)) {
                ++entry.api_vocabulary[call];
            }
            for (const auto& call : extract_api_calls(inst.secure_code, inst.language)) {
                ++entry.api_vocabulary[call];
            }
        }
        ClusterSummary summary = summarize_cluster(members, client, batch_size);
        entry.guideline = summary.guideline;
        entry.cause_summary = summary.cause_summary;
        entries.push_back(std::move(entry));
    }
    return entries;
}

}  // namespace securekb
