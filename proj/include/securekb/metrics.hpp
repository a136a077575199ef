#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace securekb {

/// Externally supplied per-sample facts; never recomputed here.
struct SampleVerdict {
    std::string task_id;
    std::string sample_id;
    bool functional_pass = false;
    bool security_pass = false;
};

/// Unbiased estimator of P(at least one of k draws is a secure pass):
/// 1 - C(n-sp, k)/C(n, k), evaluated as a running product so large n never
/// overflows.
inline double secure_pass_at_k(int n, int sp, int k)
{
    if (sp < 0 || sp > n) {
        throw std::invalid_argument("sp must satisfy 0 <= sp <= n");
    }
    if (k < 1 || k > n) {
        throw std::invalid_argument("k must satisfy 1 <= k <= n");
    }
    if (sp == 0) {
        return 0.0;
    }
    if (n - sp < k) {
        return 1.0;
    }
    double ratio = 1.0;
    for (int i = 0; i < k; ++i) {
        ratio *= static_cast<double>(n - sp - i) / static_cast<double>(n - i);
    }
    return 1.0 - ratio;
}

/// Same estimator with functional passes in place of secure passes.
inline double pass_at_k(int n, int c, int k)
{
    return secure_pass_at_k(n, c, k);
}

struct TaskMetrics {
    std::string task_id;
    int n = 0;
    int functional_passes = 0;
    int secure_passes = 0;  // pass both functional and security checks
    int security_passes = 0;
    double secure_rate = 0.0;
    std::map<int, double> pass_at_k;
    std::map<int, double> secure_pass_at_k;
};

struct MetricReport {
    std::vector<TaskMetrics> per_task;
    std::vector<std::string> excluded_tasks;  // fewer samples than max k
    double secure_rate_micro = 0.0;           // over all samples
    double secure_rate_macro = 0.0;           // mean of per-task rates
    std::map<int, double> pass_at_k;          // unweighted mean over tasks
    std::map<int, double> secure_pass_at_k;
};

/// Per-task metrics plus unweighted means across tasks. Tasks with fewer
/// samples than max(ks) are excluded and listed in the report header.
inline MetricReport aggregate(const std::vector<SampleVerdict>& verdicts,
                              const std::vector<int>& ks)
{
    if (ks.empty()) {
        throw std::invalid_argument("at least one k is required");
    }
    int max_k = *std::max_element(ks.begin(), ks.end());

    std::map<std::string, std::vector<const SampleVerdict*>> by_task;
    std::vector<std::string> task_order;
    for (const auto& v : verdicts) {
        if (by_task.find(v.task_id) == by_task.end()) {
            task_order.push_back(v.task_id);
        }
        by_task[v.task_id].push_back(&v);
    }

    MetricReport report;
    long total_samples = 0;
    long total_security_passes = 0;
    for (const auto& task_id : task_order) {
        const auto& samples = by_task[task_id];
        if (static_cast<int>(samples.size()) < max_k) {
            report.excluded_tasks.push_back(task_id);
            continue;
        }
        TaskMetrics tm;
        tm.task_id = task_id;
        tm.n = static_cast<int>(samples.size());
        for (const auto* s : samples) {
            if (s->functional_pass) {
                ++tm.functional_passes;
            }
            if (s->security_pass) {
                ++tm.security_passes;
            }
            if (s->functional_pass && s->security_pass) {
                ++tm.secure_passes;
            }
        }
        tm.secure_rate = static_cast<double>(tm.security_passes) / tm.n;
        for (int k : ks) {
            tm.pass_at_k[k] = pass_at_k(tm.n, tm.functional_passes, k);
            tm.secure_pass_at_k[k] = secure_pass_at_k(tm.n, tm.secure_passes, k);
        }
        total_samples += tm.n;
        total_security_passes += tm.security_passes;
        report.per_task.push_back(std::move(tm));
    }

    if (!report.per_task.empty()) {
        double macro = 0.0;
        for (int k : ks) {
            double pk = 0.0;
            double spk = 0.0;
            for (const auto& tm : report.per_task) {
                pk += tm.pass_at_k.at(k);
                spk += tm.secure_pass_at_k.at(k);
            }
            report.pass_at_k[k] = pk / static_cast<double>(report.per_task.size());
            report.secure_pass_at_k[k] = spk / static_cast<double>(report.per_task.size());
        }
        for (const auto& tm : report.per_task) {
            macro += tm.secure_rate;
        }
        report.secure_rate_macro = macro / static_cast<double>(report.per_task.size());
    }
    if (total_samples > 0) {
        report.secure_rate_micro =
            static_cast<double>(total_security_passes) / static_cast<double>(total_samples);
    }
    return report;
}

inline std::vector<SampleVerdict> parse_verdicts_jsonl(const std::string& text)
{
    std::vector<SampleVerdict> out;
    std::size_t start = 0;
    int line_no = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        std::string line = end == std::string::npos ? text.substr(start)
                                                    : text.substr(start, end - start);
        ++line_no;
        if (!line.empty() && line.find_first_not_of(" \t\r") != std::string::npos) {
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object()) {
                throw std::runtime_error("verdicts line " + std::to_string(line_no)
                                         + ": malformed JSON");
            }
            SampleVerdict v;
            v.task_id = j.at("task_id").get<std::string>();
            v.sample_id = j.value("sample_id", std::to_string(line_no));
            v.functional_pass = j.at("functional_pass").get<bool>();
            v.security_pass = j.at("security_pass").get<bool>();
            out.push_back(std::move(v));
        }
        if (end == std::string::npos) {
            break;
        }
        start = end + 1;
    }
    return out;
}

inline nlohmann::json report_to_json(const MetricReport& report)
{
    nlohmann::json per_task = nlohmann::json::array();
    for (const auto& tm : report.per_task) {
        nlohmann::json pat;
        nlohmann::json spat;
        for (const auto& [k, v] : tm.pass_at_k) {
            pat[std::to_string(k)] = v;
        }
        for (const auto& [k, v] : tm.secure_pass_at_k) {
            spat[std::to_string(k)] = v;
        }
        per_task.push_back({{"task_id", tm.task_id},
                            {"n", tm.n},
                            {"functional_passes", tm.functional_passes},
                            {"secure_passes", tm.secure_passes},
                            {"security_passes", tm.security_passes},
                            {"secure_rate", tm.secure_rate},
                            {"pass_at_k", pat},
                            {"secure_pass_at_k", spat}});
    }
    nlohmann::json agg_pat;
    nlohmann::json agg_spat;
    for (const auto& [k, v] : report.pass_at_k) {
        agg_pat[std::to_string(k)] = v;
    }
    for (const auto& [k, v] : report.secure_pass_at_k) {
        agg_spat[std::to_string(k)] = v;
    }
    return nlohmann::json{{"excluded_tasks", report.excluded_tasks},
                          {"secure_rate_micro", report.secure_rate_micro},
                          {"secure_rate_macro", report.secure_rate_macro},
                          {"pass_at_k", agg_pat},
                          {"secure_pass_at_k", agg_spat},
                          {"per_task", per_task}};
}

/// Plain-text table for terminal display. SecureRate is shown micro-averaged
/// (share of all samples); the macro mean is reported alongside.
inline std::string report_to_table(const MetricReport& report)
{
    std::string out;
    if (!report.excluded_tasks.empty()) {
        out += "warning: excluded tasks with fewer samples than max k:";
        for (const auto& t : report.excluded_tasks) {
            out += ' ' + t;
        }
        out += '\n';
    }
    char buf[160];
    out += "task                n     secure_rate";
    for (const auto& [k, v] : report.pass_at_k) {
        (void)v;
        std::snprintf(buf, sizeof(buf), "  pass@%-4d  securepass@%-4d", k, k);
        out += buf;
    }
    out += '\n';
    for (const auto& tm : report.per_task) {
        std::snprintf(buf, sizeof(buf), "%-18s %5d  %10.4f", tm.task_id.c_str(), tm.n,
                      tm.secure_rate);
        out += buf;
        for (const auto& [k, v] : tm.pass_at_k) {
            std::snprintf(buf, sizeof(buf), "  %9.4f  %15.4f", v,
                          tm.secure_pass_at_k.at(k));
            out += buf;
        }
        out += '\n';
    }
    std::snprintf(buf, sizeof(buf), "%-18s %5s  %10.4f", "aggregate", "",
                  report.secure_rate_micro);
    out += buf;
    for (const auto& [k, v] : report.pass_at_k) {
        std::snprintf(buf, sizeof(buf), "  %9.4f  %15.4f", v, report.secure_pass_at_k.at(k));
        out += buf;
    }
    out += '\n';
    std::snprintf(buf, sizeof(buf), "secure_rate macro mean: %.4f\n",
                  report.secure_rate_macro);
    out += buf;
    return out;
}

}  // namespace securekb
