#pragma once

#include "securekb/corpus.hpp"
#include "securekb/program_graph.hpp"

#include <deque>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace securekb {

/// Parallel vulnerable/secure code slices reconstructed around patch lines.
struct SlicedPair {
    std::string instance_id;
    std::string vulnerable_slice;
    std::string secure_slice;
    int hop_limit = 0;
    std::vector<int> kept_lines_vuln;
    std::vector<int> kept_lines_sec;
    int unmatched_context_warnings = 0;

    bool empty() const { return kept_lines_vuln.empty() && kept_lines_sec.empty(); }
};

enum class PatchSide { vulnerable, secure };

/// Nodes whose span contains at least one patch line for the given side.
/// Whitespace-only patch lines never select a node.
inline std::set<int> locate_pois(const ProgramDependenceGraph& pdg,
                                 const PatchLineSets& lines, PatchSide side)
{
    const auto& patch_lines =
        side == PatchSide::vulnerable ? lines.deleted_lines : lines.added_lines;
    std::set<int> pois;
    for (const auto& [line_no, text] : patch_lines) {
        if (is_blank(text)) {
            continue;
        }
        for (const auto& node : pdg.nodes) {
            if (node.start_line <= line_no && line_no <= node.end_line) {
                pois.insert(node.node_id);
            }
        }
    }
    return pois;
}

/// Hop-bounded bidirectional slice: the POIs plus everything that reaches
/// them within h edges plus everything they reach within h edges (forward
/// reachability is backward reachability on the reversed graph).
inline std::set<int> slice(const ProgramDependenceGraph& pdg, const std::set<int>& pois,
                           int h)
{
    if (h < 1) {
        throw std::invalid_argument("hop limit must be >= 1");
    }
    for (int poi : pois) {
        if (poi < 0 || poi >= static_cast<int>(pdg.nodes.size())) {
            throw std::invalid_argument("unknown node id in POI set: " + std::to_string(poi));
        }
    }
    if (pois.empty()) {
        return {};
    }

    auto bounded_bfs = [&](const std::vector<std::vector<int>>& adj) {
        std::set<int> reached(pois.begin(), pois.end());
        std::deque<std::pair<int, int>> queue;
        for (int poi : pois) {
            queue.emplace_back(poi, 0);
        }
        std::set<int> visited(pois.begin(), pois.end());
        while (!queue.empty()) {
            auto [node, depth] = queue.front();
            queue.pop_front();
            if (depth >= h) {
                continue;
            }
            for (int next : adj[static_cast<std::size_t>(node)]) {
                if (visited.insert(next).second) {
                    reached.insert(next);
                    queue.emplace_back(next, depth + 1);
                }
            }
        }
        return reached;
    };

    std::set<int> backward = bounded_bfs(pdg.in_adjacency());
    std::set<int> forward = bounded_bfs(pdg.out_adjacency());
    std::set<int> out = backward;
    out.insert(forward.begin(), forward.end());
    return out;
}

namespace detail {

/// Collects the source lines for a sliced node set, always retaining every
/// enclosing block header, chain heads of kept chain members, module-level
/// imports, and closing-brace lines so the slice stays parseable.
inline std::set<int> kept_lines_for(const ProgramDependenceGraph& pdg,
                                    const std::set<int>& slice_nodes)
{
    if (slice_nodes.empty()) {
        return {};
    }
    std::set<int> kept_nodes = slice_nodes;
    bool changed = true;
    while (changed) {
        changed = false;
        std::set<int> additions;
        for (int id : kept_nodes) {
            const StatementNode& node = pdg.nodes[static_cast<std::size_t>(id)];
            if (node.parent >= 0 && kept_nodes.count(node.parent) == 0) {
                additions.insert(node.parent);
            }
            if (node.chain_head >= 0 && kept_nodes.count(node.chain_head) == 0) {
                additions.insert(node.chain_head);
            }
            // A kept `try:` needs at least one handler to stay parseable;
            // keep the textually first member of its chain.
            if (node.kind == NodeKind::other) {
                int first_member = -1;
                bool member_kept = false;
                for (const auto& other : pdg.nodes) {
                    if (other.chain_head == id) {
                        if (first_member < 0) {
                            first_member = other.node_id;
                        }
                        if (kept_nodes.count(other.node_id) != 0) {
                            member_kept = true;
                        }
                    }
                }
                if (first_member >= 0 && !member_kept) {
                    additions.insert(first_member);
                }
            }
        }
        if (!additions.empty()) {
            kept_nodes.insert(additions.begin(), additions.end());
            changed = true;
        }
    }
    for (const auto& node : pdg.nodes) {
        if (node.is_import && node.parent < 0) {
            kept_nodes.insert(node.node_id);
        }
    }

    std::set<int> lines;
    for (int id : kept_nodes) {
        const StatementNode& node = pdg.nodes[static_cast<std::size_t>(id)];
        for (int l = node.start_line; l <= node.end_line; ++l) {
            lines.insert(l);
        }
        if (node.close_line > 0) {
            lines.insert(node.close_line);
        }
    }
    return lines;
}

/// Pairs up unchanged lines across the two versions in order. Returns maps
/// in both directions; positions with mismatching text are dropped and
/// counted.
struct ContextAlignment {
    std::map<int, int> vuln_to_sec;
    std::map<int, int> sec_to_vuln;
    int mismatches = 0;
};

inline ContextAlignment align_context(const std::vector<std::string>& vuln_lines,
                                      const std::vector<std::string>& sec_lines,
                                      const PatchLineSets& sets)
{
    std::set<int> deleted;
    for (const auto& [line_no, text] : sets.deleted_lines) {
        deleted.insert(line_no);
    }
    std::set<int> added;
    for (const auto& [line_no, text] : sets.added_lines) {
        added.insert(line_no);
    }
    std::vector<int> vuln_ctx;
    for (std::size_t i = 0; i < vuln_lines.size(); ++i) {
        int line_no = static_cast<int>(i) + 1;
        if (deleted.count(line_no) == 0) {
            vuln_ctx.push_back(line_no);
        }
    }
    std::vector<int> sec_ctx;
    for (std::size_t i = 0; i < sec_lines.size(); ++i) {
        int line_no = static_cast<int>(i) + 1;
        if (added.count(line_no) == 0) {
            sec_ctx.push_back(line_no);
        }
    }
    ContextAlignment out;
    std::size_t pairs = std::min(vuln_ctx.size(), sec_ctx.size());
    if (vuln_ctx.size() != sec_ctx.size()) {
        out.mismatches += static_cast<int>(
            std::max(vuln_ctx.size(), sec_ctx.size()) - pairs);
    }
    for (std::size_t i = 0; i < pairs; ++i) {
        const std::string& v = vuln_lines[static_cast<std::size_t>(vuln_ctx[i]) - 1];
        const std::string& s = sec_lines[static_cast<std::size_t>(sec_ctx[i]) - 1];
        if (v != s) {
            ++out.mismatches;
            continue;
        }
        out.vuln_to_sec[vuln_ctx[i]] = sec_ctx[i];
        out.sec_to_vuln[sec_ctx[i]] = vuln_ctx[i];
    }
    return out;
}

/// Emits kept lines in source order. Python headers whose body contributed
/// nothing get a synthesized `pass` so the slice still parses.
inline std::string emit_slice(const ProgramDependenceGraph& pdg,
                              const std::vector<std::string>& source_lines,
                              const std::set<int>& kept, Lang lang)
{
    std::vector<std::string> out;
    std::set<int> pass_after;  // line numbers needing a pass right after
    if (lang == Lang::python) {
        for (const auto& node : pdg.nodes) {
            bool header_kept = kept.count(node.start_line) != 0;
            if (!header_kept) {
                continue;
            }
            bool opens = false;
            bool body_content = false;
            for (const auto& other : pdg.nodes) {
                if (other.parent == node.node_id) {
                    opens = true;
                    if (kept.count(other.start_line) != 0) {
                        body_content = true;
                        break;
                    }
                }
            }
            if (!opens && node.end_line >= 1
                && node.end_line <= static_cast<int>(source_lines.size())) {
                // Headers whose body was nothing but comments have no child
                // nodes; the trailing colon still demands a body.
                std::string_view last = source_lines[static_cast<std::size_t>(node.end_line) - 1];
                while (!last.empty()
                       && std::isspace(static_cast<unsigned char>(last.back())) != 0) {
                    last.remove_suffix(1);
                }
                opens = !last.empty() && last.back() == ':';
            }
            if (opens && !body_content) {
                pass_after.insert(node.end_line);
            }
        }
    }
    for (int line_no : kept) {
        if (line_no < 1 || line_no > static_cast<int>(source_lines.size())) {
            continue;
        }
        const std::string& text = source_lines[static_cast<std::size_t>(line_no) - 1];
        out.push_back(text);
        if (pass_after.count(line_no) != 0) {
            std::size_t indent = 0;
            while (indent < text.size() && (text[indent] == ' ' || text[indent] == '\t')) {
                ++indent;
            }
            out.push_back(text.substr(0, indent) + "    pass");
        }
    }
    return join_lines(out);
}

}  // namespace detail

/// Builds the parallel slice pair: each side keeps its own sliced lines plus
/// the counterpart's sliced lines outside the patch, matched by identical
/// text of unchanged lines.
inline SlicedPair reconstruct_pair(const VulnFixInstance& instance,
                                   const ProgramDependenceGraph& vuln_pdg,
                                   const ProgramDependenceGraph& sec_pdg,
                                   const std::set<int>& vuln_slice_nodes,
                                   const std::set<int>& sec_slice_nodes,
                                   const PatchLineSets& sets, int hop_limit)
{
    SlicedPair pair;
    pair.instance_id = instance.id;
    pair.hop_limit = hop_limit;
    if (vuln_slice_nodes.empty() && sec_slice_nodes.empty()) {
        return pair;
    }

    std::vector<std::string> vuln_lines = split_lines(instance.vulnerable_code);
    std::vector<std::string> sec_lines = split_lines(instance.secure_code);

    std::set<int> vuln_kept = detail::kept_lines_for(vuln_pdg, vuln_slice_nodes);
    std::set<int> sec_kept = detail::kept_lines_for(sec_pdg, sec_slice_nodes);

    detail::ContextAlignment alignment = detail::align_context(vuln_lines, sec_lines, sets);
    pair.unmatched_context_warnings = alignment.mismatches;

    // Complement each side with the counterpart's out-of-patch lines.
    std::set<int> vuln_final = vuln_kept;
    std::set<int> sec_final = sec_kept;
    for (int line_no : vuln_kept) {
        auto it = alignment.vuln_to_sec.find(line_no);
        if (it != alignment.vuln_to_sec.end()) {
            sec_final.insert(it->second);
        }
    }
    for (int line_no : sec_kept) {
        auto it = alignment.sec_to_vuln.find(line_no);
        if (it != alignment.sec_to_vuln.end()) {
            vuln_final.insert(it->second);
        }
    }

    pair.kept_lines_vuln.assign(vuln_final.begin(), vuln_final.end());
    pair.kept_lines_sec.assign(sec_final.begin(), sec_final.end());
    pair.vulnerable_slice =
        detail::emit_slice(vuln_pdg, vuln_lines, vuln_final, instance.language);
    pair.secure_slice = detail::emit_slice(sec_pdg, sec_lines, sec_final, instance.language);
    return pair;
}

/// End-to-end slicing for one corpus instance.
inline SlicedPair slice_instance(const VulnFixInstance& instance, int hop_limit)
{
    PatchLineSets sets = parse_patch(instance);
    ProgramDependenceGraph vuln_pdg = build_pdg(instance.vulnerable_code, instance.language);
    ProgramDependenceGraph sec_pdg = build_pdg(instance.secure_code, instance.language);
    std::set<int> vuln_pois = locate_pois(vuln_pdg, sets, PatchSide::vulnerable);
    std::set<int> sec_pois = locate_pois(sec_pdg, sets, PatchSide::secure);
    std::set<int> vuln_nodes =
        vuln_pois.empty() ? std::set<int>{} : slice(vuln_pdg, vuln_pois, hop_limit);
    std::set<int> sec_nodes =
        sec_pois.empty() ? std::set<int>{} : slice(sec_pdg, sec_pois, hop_limit);
    return reconstruct_pair(instance, vuln_pdg, sec_pdg, vuln_nodes, sec_nodes, sets,
                            hop_limit);
}

/// Mean kept-lines over original-lines across non-empty slice pairs.
inline double mean_kept_ratio(const std::vector<VulnFixInstance>& instances,
                              const std::vector<SlicedPair>& pairs)
{
    double total = 0;
    int counted = 0;
    for (std::size_t i = 0; i < pairs.size() && i < instances.size(); ++i) {
        if (pairs[i].empty()) {
            continue;
        }
        double orig = static_cast<double>(split_lines(instances[i].vulnerable_code).size()
                                          + split_lines(instances[i].secure_code).size());
        if (orig == 0) {
            continue;
        }
        double kept = static_cast<double>(pairs[i].kept_lines_vuln.size()
                                          + pairs[i].kept_lines_sec.size());
        total += kept / orig;
        ++counted;
    }
    return counted == 0 ? 0.0 : total / counted;
}

}  // namespace securekb
