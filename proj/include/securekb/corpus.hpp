#pragma once

#include "securekb/util.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace securekb {

enum class Lang { python, c, cpp };

inline std::optional<Lang> lang_from_string(std::string_view s)
{
    if (s == "python") return Lang::python;
    if (s == "c") return Lang::c;
    if (s == "cpp" || s == "c++") return Lang::cpp;
    return std::nullopt;
}

inline std::string lang_to_string(Lang l)
{
    switch (l) {
        case Lang::python: return "python";
        case Lang::c: return "c";
        case Lang::cpp: return "cpp";
    }
    return "python";
}

/// One raw security record: a vulnerable/secure code pair plus the patch
/// relating them.
struct VulnFixInstance {
    std::string id;
    std::string cwe_id;
    Lang language = Lang::python;
    std::string vulnerable_code;
    std::string secure_code;
    std::string patch;
};

/// Line-level view of a patch. Deleted lines are numbered in the vulnerable
/// source, added lines in the secure source; both lists are 1-based and
/// strictly increasing.
struct PatchLineSets {
    std::vector<std::pair<int, std::string>> deleted_lines;
    std::vector<std::pair<int, std::string>> added_lines;

    bool empty() const { return deleted_lines.empty() && added_lines.empty(); }
};

class PatchParseError : public std::runtime_error {
public:
    PatchParseError(int hunk, const std::string& message)
        : std::runtime_error("hunk " + std::to_string(hunk) + ": " + message), hunk_(hunk)
    {
    }

    int hunk() const { return hunk_; }

private:
    int hunk_;
};

inline bool valid_cwe_id(std::string_view s)
{
    if (s.size() < 5 || s.substr(0, 4) != "CWE-") {
        return false;
    }
    return std::all_of(s.begin() + 4, s.end(),
                       [](unsigned char c) { return std::isdigit(c) != 0; });
}

namespace detail {

struct HunkHeader {
    int old_start = 0;
    int old_count = 0;
    int new_start = 0;
    int new_count = 0;
};

inline std::optional<HunkHeader> parse_hunk_header(const std::string& line)
{
    // @@ -l[,c] +l[,c] @@
    if (line.rfind("@@ -", 0) != 0) {
        return std::nullopt;
    }
    HunkHeader h;
    std::size_t pos = 4;
    auto read_int = [&](int& out) -> bool {
        std::size_t begin = pos;
        while (pos < line.size() && std::isdigit(static_cast<unsigned char>(line[pos])) != 0) {
            ++pos;
        }
        if (pos == begin) {
            return false;
        }
        out = std::stoi(line.substr(begin, pos - begin));
        return true;
    };
    if (!read_int(h.old_start)) return std::nullopt;
    h.old_count = 1;
    if (pos < line.size() && line[pos] == ',') {
        ++pos;
        if (!read_int(h.old_count)) return std::nullopt;
    }
    if (pos + 1 >= line.size() || line[pos] != ' ' || line[pos + 1] != '+') {
        return std::nullopt;
    }
    pos += 2;
    if (!read_int(h.new_start)) return std::nullopt;
    h.new_count = 1;
    if (pos < line.size() && line[pos] == ',') {
        ++pos;
        if (!read_int(h.new_count)) return std::nullopt;
    }
    return h;
}

}  // namespace detail

/// Parses a unified diff into line-level add/delete sets. Context lines are
/// excluded. Throws PatchParseError when a hunk's body disagrees with its
/// header, and std::invalid_argument for multi-file diffs.
inline PatchLineSets parse_patch(const std::string& patch_text)
{
    PatchLineSets sets;
    std::string normalized = normalize_newlines(patch_text);
    if (trim(normalized).empty()) {
        return sets;
    }
    std::vector<std::string> lines = split_lines(normalized);

    int file_headers = 0;
    int hunk_index = 0;
    bool in_hunk = false;
    int old_line = 0;
    int new_line = 0;
    int old_remaining = 0;
    int new_remaining = 0;

    auto finish_hunk = [&]() {
        if (in_hunk && (old_remaining != 0 || new_remaining != 0)) {
            throw PatchParseError(hunk_index, "body shorter than header counts");
        }
        in_hunk = false;
    };

    for (const auto& line : lines) {
        if (line.rfind("--- ", 0) == 0) {
            finish_hunk();
            ++file_headers;
            if (file_headers > 1) {
                throw std::invalid_argument("multi-file patches are not supported");
            }
            continue;
        }
        if (line.rfind("+++ ", 0) == 0 || line.rfind("diff ", 0) == 0
            || line.rfind("index ", 0) == 0) {
            continue;
        }
        if (auto header = detail::parse_hunk_header(line)) {
            finish_hunk();
            in_hunk = true;
            ++hunk_index;
            old_line = header->old_start;
            new_line = header->new_start;
            old_remaining = header->old_count;
            new_remaining = header->new_count;
            continue;
        }
        if (!in_hunk) {
            if (is_blank(line)) {
                continue;
            }
            throw PatchParseError(hunk_index, "content outside any hunk: " + line);
        }
        if (line.rfind("\\", 0) == 0) {
            continue;  // "\ No newline at end of file"
        }
        char tag = line.empty() ? ' ' : line[0];
        std::string body = line.empty() ? std::string() : line.substr(1);
        switch (tag) {
            case ' ':
                if (old_remaining <= 0 || new_remaining <= 0) {
                    throw PatchParseError(hunk_index, "body longer than header counts");
                }
                ++old_line;
                ++new_line;
                --old_remaining;
                --new_remaining;
                break;
            case '-':
                if (old_remaining <= 0) {
                    throw PatchParseError(hunk_index, "more deletions than header declares");
                }
                sets.deleted_lines.emplace_back(old_line, body);
                ++old_line;
                --old_remaining;
                break;
            case '+':
                if (new_remaining <= 0) {
                    throw PatchParseError(hunk_index, "more additions than header declares");
                }
                sets.added_lines.emplace_back(new_line, body);
                ++new_line;
                --new_remaining;
                break;
            default:
                throw PatchParseError(hunk_index, "unexpected line prefix: " + line);
        }
        if (old_remaining == 0 && new_remaining == 0) {
            in_hunk = false;
        }
    }
    finish_hunk();
    return sets;
}

inline PatchLineSets parse_patch(const VulnFixInstance& instance)
{
    return parse_patch(instance.patch);
}

/// Applies the line sets to the vulnerable source: deleted lines are removed,
/// added lines are inserted at their secure positions, all remaining lines
/// keep their relative order.
inline std::string reconstruct(const std::string& vulnerable_code, const PatchLineSets& sets)
{
    std::vector<std::string> vuln_lines = split_lines(normalize_newlines(vulnerable_code));
    std::set<int> deleted;
    for (const auto& [line_no, text] : sets.deleted_lines) {
        deleted.insert(line_no);
    }
    std::vector<std::string> kept;
    kept.reserve(vuln_lines.size());
    for (std::size_t i = 0; i < vuln_lines.size(); ++i) {
        if (deleted.count(static_cast<int>(i) + 1) == 0) {
            kept.push_back(vuln_lines[i]);
        }
    }
    std::size_t total = kept.size() + sets.added_lines.size();
    std::vector<std::string> out(total);
    std::vector<bool> filled(total, false);
    for (const auto& [line_no, text] : sets.added_lines) {
        std::size_t idx = static_cast<std::size_t>(line_no) - 1;
        if (idx >= total) {
            // Inconsistent sets; fall back to appending so the validator can
            // still flag the mismatch.
            out.push_back(text);
            filled.push_back(true);
            total = out.size();
            continue;
        }
        out[idx] = text;
        filled[idx] = true;
    }
    std::size_t next_kept = 0;
    for (std::size_t i = 0; i < total; ++i) {
        if (!filled[i] && next_kept < kept.size()) {
            out[i] = kept[next_kept++];
            filled[i] = true;
        }
    }
    return join_lines(out);
}

/// Checks that deleting/adding the patch's lines turns vulnerable_code into
/// secure_code, line for line. Returns the failure reason, or nothing on
/// success.
inline std::optional<std::string> validate_patch(const VulnFixInstance& instance)
{
    try {
        PatchLineSets sets = parse_patch(instance);
        std::string rebuilt = reconstruct(instance.vulnerable_code, sets);
        if (canonical_text(rebuilt) != canonical_text(instance.secure_code)) {
            return "patch does not reconstruct secure code";
        }
        return std::nullopt;
    } catch (const std::exception& e) {
        return std::string(e.what());
    }
}

inline bool patch_reconstructs(const VulnFixInstance& instance)
{
    return !validate_patch(instance).has_value();
}

struct RejectedRecord {
    int line_number = 0;
    std::string reason;
    std::string raw;
};

struct CorpusLoadResult {
    std::vector<VulnFixInstance> instances;
    std::vector<RejectedRecord> rejected;
    int dropped_empty = 0;
    int dropped_duplicates = 0;
    int skipped_language = 0;
};

inline nlohmann::json instance_to_json(const VulnFixInstance& inst)
{
    return nlohmann::json{{"id", inst.id},
                          {"cwe_id", inst.cwe_id},
                          {"language", lang_to_string(inst.language)},
                          {"vulnerable_code", inst.vulnerable_code},
                          {"secure_code", inst.secure_code},
                          {"patch", inst.patch}};
}

inline std::string serialize_corpus(const std::vector<VulnFixInstance>& instances)
{
    std::string out;
    for (const auto& inst : instances) {
        out += instance_to_json(inst).dump();
        out += '\n';
    }
    return out;
}

/// Loads a JSONL corpus: normalizes line endings, drops empty-code records,
/// removes duplicates, skips unsupported languages, and quarantines records
/// whose patch fails the reconstruction check.
inline CorpusLoadResult load_corpus_text(const std::string& text)
{
    CorpusLoadResult result;
    std::set<std::uint64_t> seen;
    std::vector<std::string> lines = split_lines(normalize_newlines(text));
    for (std::size_t i = 0; i < lines.size(); ++i) {
        int line_no = static_cast<int>(i) + 1;
        const std::string& line = lines[i];
        if (is_blank(line)) {
            continue;
        }
        nlohmann::json record = nlohmann::json::parse(line, nullptr, false);
        if (record.is_discarded() || !record.is_object()) {
            result.rejected.push_back({line_no, "malformed JSON", line});
            continue;
        }
        const char* required[] = {"id", "cwe_id", "language", "vulnerable_code",
                                  "secure_code", "patch"};
        bool missing = false;
        for (const char* field : required) {
            if (!record.contains(field) || !record[field].is_string()) {
                result.rejected.push_back(
                    {line_no, std::string("missing or non-string field: ") + field, line});
                missing = true;
                break;
            }
        }
        if (missing) {
            continue;
        }
        auto lang = lang_from_string(record["language"].get<std::string>());
        if (!lang) {
            ++result.skipped_language;
            continue;
        }
        VulnFixInstance inst;
        inst.id = record["id"].get<std::string>();
        inst.cwe_id = record["cwe_id"].get<std::string>();
        inst.language = *lang;
        inst.vulnerable_code = normalize_newlines(record["vulnerable_code"].get<std::string>());
        inst.secure_code = normalize_newlines(record["secure_code"].get<std::string>());
        inst.patch = normalize_newlines(record["patch"].get<std::string>());
        if (trim(inst.vulnerable_code).empty() || trim(inst.secure_code).empty()) {
            ++result.dropped_empty;
            continue;
        }
        if (!valid_cwe_id(inst.cwe_id)) {
            result.rejected.push_back({line_no, "invalid CWE id: " + inst.cwe_id, line});
            continue;
        }
        std::uint64_t key = fnv1a64(inst.cwe_id,
                                    fnv1a64(inst.secure_code, fnv1a64(inst.vulnerable_code)));
        if (!seen.insert(key).second) {
            ++result.dropped_duplicates;
            continue;
        }
        if (auto failure = validate_patch(inst)) {
            result.rejected.push_back({line_no, *failure, line});
            continue;
        }
        result.instances.push_back(std::move(inst));
    }
    return result;
}

inline CorpusLoadResult load_corpus(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open corpus file: " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return load_corpus_text(buffer.str());
}

/// Writes quarantined records next to the input as `<input>.rejected.jsonl`.
/// Returns the reject file path; no file is written when nothing was rejected.
inline std::optional<std::filesystem::path>
write_reject_file(const std::filesystem::path& input, const CorpusLoadResult& result)
{
    if (result.rejected.empty()) {
        return std::nullopt;
    }
    std::filesystem::path reject_path = input;
    reject_path += ".rejected.jsonl";
    std::ofstream out(reject_path, std::ios::binary);
    for (const auto& rec : result.rejected) {
        nlohmann::json j{{"line", rec.line_number}, {"reason", rec.reason}, {"record", rec.raw}};
        out << j.dump() << '\n';
    }
    return reject_path;
}

}  // namespace securekb
