#pragma once

#include "securekb/util.hpp"

#include <set>
#include <string>
#include <vector>

namespace securekb {

enum class NodeKind { simple, branch_head, loop_head, def_header, ret, other };

inline std::string node_kind_to_string(NodeKind k)
{
    switch (k) {
        case NodeKind::simple: return "simple";
        case NodeKind::branch_head: return "branch_head";
        case NodeKind::loop_head: return "loop_head";
        case NodeKind::def_header: return "def_header";
        case NodeKind::ret: return "return";
        case NodeKind::other: return "other";
    }
    return "other";
}

namespace detail {

struct Tok {
    enum Kind { Ident, Number, Str, Op } kind = Op;
    std::string text;
    int line = 0;
};

/// One syntactic statement as produced by a language frontend, before
/// dependence analysis.
struct RawStatement {
    int start_line = 0;
    int end_line = 0;
    NodeKind kind = NodeKind::simple;
    bool is_import = false;
    bool opens_block = false;
    int parent = -1;      // index into the frontend's statement list
    int chain_head = -1;  // head of an if/elif/else chain, when applicable
    int close_line = 0;   // closing brace line for brace-delimited bodies
    std::set<std::string> defs;        // bound in the enclosing scope
    std::set<std::string> inner_defs;  // bound in the statement's own body scope
    std::set<std::string> uses;
    std::vector<std::string> calls;  // qualified call names, source order
};

inline bool is_op(const Tok& t, const char* text)
{
    return t.kind == Tok::Op && t.text == text;
}

inline bool is_kw(const Tok& t, const char* text)
{
    return t.kind == Tok::Ident && t.text == text;
}

/// Maximal-munch operator scan over a fixed operator inventory shared by both
/// frontends (a superset per language is harmless).
inline std::size_t match_operator(std::string_view s)
{
    static const char* three[] = {"**=", "//=", ">>=", "<<=", "...", "->*"};
    static const char* two[] = {"**", "//", ">>", "<<", "<=", ">=", "==", "!=", "+=", "-=",
                                "*=", "/=", "%=", "&=", "|=", "^=", ":=", "->", "::", "&&",
                                "||", "++", "--", "@="};
    for (const char* op : three) {
        if (s.substr(0, 3) == op) return 3;
    }
    for (const char* op : two) {
        if (s.substr(0, 2) == op) return 2;
    }
    return s.empty() ? 0 : 1;
}

}  // namespace detail
}  // namespace securekb
