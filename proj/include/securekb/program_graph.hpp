#pragma once

#include "securekb/corpus.hpp"
#include "securekb/detail/c_frontend.hpp"
#include "securekb/detail/python_frontend.hpp"
#include "securekb/detail/source_scan.hpp"

#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace securekb {

enum class EdgeKind { data, control };

inline std::string edge_kind_to_string(EdgeKind k)
{
    return k == EdgeKind::data ? "data" : "control";
}

struct StatementNode {
    int node_id = 0;
    int start_line = 0;
    int end_line = 0;
    NodeKind kind = NodeKind::simple;
    std::set<std::string> defined_vars;
    std::set<std::string> used_vars;
    bool is_import = false;
    int parent = -1;      // enclosing block owner, -1 at top level
    int chain_head = -1;  // if-chain head for elif/else members
    int close_line = 0;   // closing brace line for brace bodies (0 = none)
};

struct DependenceEdge {
    int src = 0;
    int dst = 0;
    EdgeKind kind = EdgeKind::data;

    bool operator<(const DependenceEdge& o) const
    {
        return std::tie(src, dst, kind) < std::tie(o.src, o.dst, o.kind);
    }
    bool operator==(const DependenceEdge& o) const
    {
        return src == o.src && dst == o.dst && kind == o.kind;
    }
};

struct ProgramDependenceGraph {
    Lang language = Lang::python;
    std::vector<StatementNode> nodes;
    std::vector<DependenceEdge> edges;

    std::vector<std::vector<int>> out_adjacency() const
    {
        std::vector<std::vector<int>> adj(nodes.size());
        for (const auto& e : edges) {
            adj[static_cast<std::size_t>(e.src)].push_back(e.dst);
        }
        return adj;
    }

    std::vector<std::vector<int>> in_adjacency() const
    {
        std::vector<std::vector<int>> adj(nodes.size());
        for (const auto& e : edges) {
            adj[static_cast<std::size_t>(e.dst)].push_back(e.src);
        }
        return adj;
    }
};

class GraphParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

/// Reaching-definition environment. Levels mirror syntactic blocks: a
/// definition replaces earlier ones at its own level but never kills
/// inherited ones, and a closing non-function block merges its definitions
/// upward. This keeps every definition that may reach a use on some path.
class ScopeEnv {
public:
    ScopeEnv() { levels_.emplace_back(); }

    std::set<int> lookup(const std::string& var) const
    {
        std::set<int> out;
        for (const auto& level : levels_) {
            auto it = level.find(var);
            if (it != level.end()) {
                out.insert(it->second.begin(), it->second.end());
            }
        }
        return out;
    }

    void bind(const std::string& var, int node)
    {
        levels_.back()[var] = {node};
    }

    void push() { levels_.emplace_back(); }

    void pop_merge()
    {
        auto top = std::move(levels_.back());
        levels_.pop_back();
        for (auto& [var, defs] : top) {
            auto& slot = levels_.back()[var];
            slot.insert(defs.begin(), defs.end());
        }
    }

    void pop_discard() { levels_.pop_back(); }

private:
    std::vector<std::map<std::string, std::set<int>>> levels_;
};

inline bool is_guard_kind(NodeKind k)
{
    return k == NodeKind::branch_head || k == NodeKind::loop_head
           || k == NodeKind::def_header;
}

inline ProgramDependenceGraph
build_graph_from_statements(const std::vector<RawStatement>& stmts, Lang lang)
{
    ProgramDependenceGraph pdg;
    pdg.language = lang;
    pdg.nodes.reserve(stmts.size());
    for (std::size_t i = 0; i < stmts.size(); ++i) {
        StatementNode node;
        node.node_id = static_cast<int>(i);
        node.start_line = stmts[i].start_line;
        node.end_line = stmts[i].end_line;
        node.kind = stmts[i].kind;
        node.is_import = stmts[i].is_import;
        node.parent = stmts[i].parent;
        node.chain_head = stmts[i].chain_head;
        node.close_line = stmts[i].close_line;
        node.defined_vars = stmts[i].defs;
        node.defined_vars.insert(stmts[i].inner_defs.begin(), stmts[i].inner_defs.end());
        node.used_vars = stmts[i].uses;
        pdg.nodes.push_back(std::move(node));
    }

    std::vector<std::vector<int>> children(stmts.size());
    std::vector<int> top_level;
    for (std::size_t i = 0; i < stmts.size(); ++i) {
        if (stmts[i].parent < 0) {
            top_level.push_back(static_cast<int>(i));
        } else {
            children[static_cast<std::size_t>(stmts[i].parent)].push_back(
                static_cast<int>(i));
        }
    }

    std::set<DependenceEdge> edges;
    ScopeEnv env;

    auto visit = [&](auto&& self, int id) -> void {
        const RawStatement& st = stmts[static_cast<std::size_t>(id)];
        for (const auto& var : st.uses) {
            for (int def : env.lookup(var)) {
                if (def != id) {
                    edges.insert({def, id, EdgeKind::data});
                }
            }
        }
        bool has_body = !children[static_cast<std::size_t>(id)].empty() || st.opens_block;
        if (has_body) {
            for (const auto& var : st.defs) {
                env.bind(var, id);
            }
            env.push();
            for (const auto& var : st.inner_defs) {
                env.bind(var, id);
            }
            for (int child : children[static_cast<std::size_t>(id)]) {
                self(self, child);
            }
            if (st.kind == NodeKind::def_header) {
                env.pop_discard();
            } else {
                env.pop_merge();
            }
        } else {
            for (const auto& var : st.defs) {
                env.bind(var, id);
            }
            for (const auto& var : st.inner_defs) {
                env.bind(var, id);
            }
        }
    };
    for (int id : top_level) {
        visit(visit, id);
    }

    // Control dependence: every enclosing guard governs the statement, and
    // chain members (elif/else) hang off their chain head.
    for (std::size_t i = 0; i < stmts.size(); ++i) {
        int anc = stmts[i].parent;
        while (anc >= 0) {
            if (is_guard_kind(stmts[static_cast<std::size_t>(anc)].kind)) {
                edges.insert({anc, static_cast<int>(i), EdgeKind::control});
            }
            anc = stmts[static_cast<std::size_t>(anc)].parent;
        }
        int chain = stmts[i].chain_head;
        if (chain >= 0 && chain != static_cast<int>(i)
            && is_guard_kind(stmts[static_cast<std::size_t>(chain)].kind)) {
            edges.insert({chain, static_cast<int>(i), EdgeKind::control});
        }
    }

    pdg.edges.assign(edges.begin(), edges.end());
    return pdg;
}

inline std::vector<RawStatement> segment_source(const std::string& source, Lang lang)
{
    if (source.find('\0') != std::string::npos) {
        throw GraphParseError("source contains NUL bytes");
    }
    std::string normalized = normalize_newlines(source);
    if (lang == Lang::python) {
        return py_segment(normalized);
    }
    return c_segment(normalized);
}

}  // namespace detail

/// Builds the statement-level Program Dependence Graph for one code unit.
/// One node per statement; data edges follow def-use chains, control edges
/// run from each guard to the statements it governs.
inline ProgramDependenceGraph build_pdg(const std::string& source, Lang lang)
{
    return detail::build_graph_from_statements(detail::segment_source(source, lang), lang);
}

/// All function/method call names in source order, deduplicated keeping the
/// first occurrence. Attribute chains are flattened to dotted names.
inline std::vector<std::string> extract_api_calls(const std::string& source, Lang lang)
{
    std::vector<detail::RawStatement> stmts = detail::segment_source(source, lang);
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& st : stmts) {
        for (const auto& call : st.calls) {
            if (seen.insert(call).second) {
                out.push_back(call);
            }
        }
    }
    return out;
}

/// Line-oriented debug dump: `NODE <id> <start>-<end> <kind>` and
/// `EDGE <src> <dst> <kind>`.
inline std::string pdg_to_debug_text(const ProgramDependenceGraph& pdg)
{
    std::ostringstream out;
    for (const auto& node : pdg.nodes) {
        out << "NODE " << node.node_id << ' ' << node.start_line << '-' << node.end_line
            << ' ' << node_kind_to_string(node.kind) << '\n';
    }
    for (const auto& edge : pdg.edges) {
        out << "EDGE " << edge.src << ' ' << edge.dst << ' '
            << edge_kind_to_string(edge.kind) << '\n';
    }
    return out.str();
}

}  // namespace securekb
