#pragma once

#include "securekb/detail/source_scan.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace securekb::detail {

inline const std::set<std::string>& python_keywords()
{
    static const std::set<std::string> kws = {
        "False", "None",   "True",   "and",      "as",     "assert", "async",
        "await", "break",  "class",  "continue", "def",    "del",    "elif",
        "else",  "except", "finally", "for",     "from",   "global", "if",
        "import", "in",    "is",     "lambda",   "nonlocal", "not",  "or",
        "pass",  "raise",  "return", "try",      "while",  "with",   "yield"};
    return kws;
}

struct PyLogicalLine {
    int start_line = 0;
    int end_line = 0;
    int indent = 0;
    std::vector<Tok> tokens;
};

/// Scans Python source into logical lines, tracking bracket depth, string
/// literals (incl. triple quotes), comments and backslash continuation.
inline std::vector<PyLogicalLine> py_scan_logical_lines(const std::string& source)
{
    std::vector<PyLogicalLine> out;
    std::vector<std::string> lines = split_lines(source);

    std::size_t li = 0;
    while (li < lines.size()) {
        // Skip blank and comment-only lines between statements.
        std::size_t first = lines[li].find_first_not_of(" \t");
        if (first == std::string::npos || lines[li][first] == '#') {
            ++li;
            continue;
        }

        PyLogicalLine ll;
        ll.start_line = static_cast<int>(li) + 1;
        int indent = 0;
        for (char c : lines[li]) {
            if (c == ' ') {
                ++indent;
            } else if (c == '\t') {
                indent = (indent / 8 + 1) * 8;
            } else {
                break;
            }
        }
        ll.indent = indent;

        int depth = 0;
        bool explicit_continue = false;
        std::size_t col = 0;
        bool done = false;
        while (!done && li < lines.size()) {
            const std::string& line = lines[li];
            if (col >= line.size()) {
                if (depth > 0 || explicit_continue) {
                    ++li;
                    col = 0;
                    explicit_continue = false;
                    continue;
                }
                break;
            }
            char c = line[col];
            if (c == '#') {
                col = line.size();
                continue;
            }
            if (c == '\\' && col + 1 == line.size()) {
                explicit_continue = true;
                ++col;
                continue;
            }
            if (c == '\'' || c == '"') {
                char quote = c;
                bool triple = line.compare(col, 3, std::string(3, quote)) == 0;
                int str_line = static_cast<int>(li) + 1;
                col += triple ? 3 : 1;
                bool closed = false;
                while (!closed && li < lines.size()) {
                    const std::string& cur = lines[li];
                    if (col >= cur.size()) {
                        if (triple && li + 1 < lines.size()) {
                            ++li;
                            col = 0;
                            continue;
                        }
                        break;  // single-quoted strings end at EOL; tolerate
                    }
                    if (cur[col] == '\\') {
                        col += 2;
                        continue;
                    }
                    if (triple ? cur.compare(col, 3, std::string(3, quote)) == 0
                               : cur[col] == quote) {
                        col += triple ? 3 : 1;
                        closed = true;
                        break;
                    }
                    ++col;
                }
                ll.tokens.push_back({Tok::Str, "", str_line});
                continue;
            }
            if (is_ident_start(c)) {
                std::size_t q = col;
                while (q < line.size() && is_ident_char(line[q])) {
                    ++q;
                }
                std::string word = line.substr(col, q - col);
                // String prefixes like f"", rb'' attach to the literal.
                if (q < line.size() && (line[q] == '"' || line[q] == '\'') && word.size() <= 2) {
                    std::string lower;
                    for (char w : word) {
                        lower += static_cast<char>(std::tolower(static_cast<unsigned char>(w)));
                    }
                    if (lower.find_first_not_of("frbu") == std::string::npos) {
                        col = q;
                        continue;
                    }
                }
                ll.tokens.push_back({Tok::Ident, word, static_cast<int>(li) + 1});
                col = q;
                continue;
            }
            if (std::isdigit(static_cast<unsigned char>(c)) != 0) {
                std::size_t q = col;
                while (q < line.size() && (is_ident_char(line[q]) || line[q] == '.')) {
                    ++q;
                }
                ll.tokens.push_back({Tok::Number, line.substr(col, q - col),
                                     static_cast<int>(li) + 1});
                col = q;
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(c)) != 0) {
                ++col;
                continue;
            }
            if (c == '(' || c == '[' || c == '{') {
                ++depth;
            } else if (c == ')' || c == ']' || c == '}') {
                --depth;
            }
            std::size_t len = match_operator(std::string_view(line).substr(col));
            ll.tokens.push_back({Tok::Op, line.substr(col, len), static_cast<int>(li) + 1});
            col += len;
        }
        ll.end_line = static_cast<int>(std::min(li, lines.size() - 1)) + 1;
        ++li;
        out.push_back(std::move(ll));
    }
    return out;
}

// -------- token-level defs/uses/calls extraction --------

struct PyLineFacts {
    std::set<std::string> defs;
    std::set<std::string> inner_defs;
    std::set<std::string> uses;
    std::vector<std::string> calls;
};

/// Collects qualified call names and general identifier uses from an
/// expression region [begin, end). Attribute chains contribute the base
/// identifier as a use and the dotted chain as a call when invoked.
inline void py_collect_expr(const std::vector<Tok>& toks, std::size_t begin, std::size_t end,
                            PyLineFacts& facts)
{
    int depth = 0;
    std::size_t i = begin;
    bool in_lambda_params = false;
    int lambda_depth = 0;
    while (i < end) {
        const Tok& t = toks[i];
        if (t.kind == Tok::Op) {
            if (t.text == "(" || t.text == "[" || t.text == "{") {
                ++depth;
            } else if (t.text == ")" || t.text == "]" || t.text == "}") {
                --depth;
            } else if (t.text == ":" && in_lambda_params && depth == lambda_depth) {
                in_lambda_params = false;
            }
            ++i;
            continue;
        }
        if (t.kind != Tok::Ident) {
            ++i;
            continue;
        }
        if (is_kw(t, "lambda")) {
            in_lambda_params = true;
            lambda_depth = depth;
            ++i;
            continue;
        }
        if (python_keywords().count(t.text) != 0) {
            ++i;
            continue;
        }
        bool after_dot = i > begin && is_op(toks[i - 1], ".");
        if (after_dot) {
            ++i;
            continue;
        }
        if (in_lambda_params) {
            ++i;
            continue;
        }
        // Keyword-argument name: ident '=' inside parentheses, not '=='.
        if (depth > 0 && i + 1 < end && is_op(toks[i + 1], "=")) {
            bool prev_delim = i == begin || is_op(toks[i - 1], "(") || is_op(toks[i - 1], ",")
                              || is_op(toks[i - 1], "*") || is_op(toks[i - 1], "**");
            if (prev_delim) {
                i += 2;
                continue;
            }
        }
        // Walrus target.
        if (i + 1 < end && is_op(toks[i + 1], ":=")) {
            facts.defs.insert(t.text);
            i += 2;
            continue;
        }
        // Attribute chain; records a call when followed by '('.
        std::string chain = t.text;
        std::size_t j = i + 1;
        while (j + 1 < end && is_op(toks[j], ".") && toks[j + 1].kind == Tok::Ident) {
            chain += ".";
            chain += toks[j + 1].text;
            j += 2;
        }
        if (j < end && is_op(toks[j], "(")) {
            facts.calls.push_back(chain);
        }
        facts.uses.insert(t.text);
        i = j;
    }
}

/// Parses an assignment-target region: bare names are definitions, subscript
/// or attribute bases are defined and used, index expressions are uses.
inline void py_collect_targets(const std::vector<Tok>& toks, std::size_t begin, std::size_t end,
                               PyLineFacts& facts)
{
    // Annotation part of `x: T` is an expression, not a target.
    std::size_t anno = end;
    int d = 0;
    for (std::size_t i = begin; i < end; ++i) {
        if (toks[i].kind == Tok::Op) {
            const std::string& s = toks[i].text;
            if (s == "(" || s == "[" || s == "{") ++d;
            else if (s == ")" || s == "]" || s == "}") --d;
            else if (s == ":" && d == 0) {
                anno = i;
                break;
            }
        }
    }
    if (anno != end) {
        py_collect_expr(toks, anno + 1, end, facts);
        end = anno;
    }

    std::size_t i = begin;
    int depth = 0;
    while (i < end) {
        const Tok& t = toks[i];
        if (t.kind == Tok::Op) {
            if (t.text == "(" || t.text == "[" || t.text == "{") ++depth;
            else if (t.text == ")" || t.text == "]" || t.text == "}") --depth;
            ++i;
            continue;
        }
        if (t.kind != Tok::Ident || python_keywords().count(t.text) != 0) {
            ++i;
            continue;
        }
        bool after_dot = i > begin && is_op(toks[i - 1], ".");
        if (after_dot) {
            ++i;
            continue;
        }
        // Trailing subscript/attribute makes this a mutation of the base.
        bool has_trailer = false;
        std::size_t j = i + 1;
        while (j < end && toks[j].kind == Tok::Op
               && (toks[j].text == "[" || toks[j].text == ".")) {
            has_trailer = true;
            if (toks[j].text == "[") {
                int bd = 1;
                std::size_t k = j + 1;
                std::size_t sub_begin = k;
                while (k < end && bd > 0) {
                    if (is_op(toks[k], "[")) ++bd;
                    else if (is_op(toks[k], "]")) --bd;
                    ++k;
                }
                py_collect_expr(toks, sub_begin, k > 0 ? k - 1 : k, facts);
                j = k;
            } else {
                j += 2;  // skip '.' and the attribute name
            }
        }
        facts.defs.insert(t.text);
        if (has_trailer) {
            facts.uses.insert(t.text);
        }
        i = j;
    }
}

inline std::size_t py_find_toplevel(const std::vector<Tok>& toks, std::size_t begin,
                                    std::size_t end, const char* text)
{
    int depth = 0;
    for (std::size_t i = begin; i < end; ++i) {
        // Match before updating depth so an opening bracket at top level is
        // itself findable.
        if (depth == 0 && toks[i].text == text
            && (toks[i].kind == Tok::Op || toks[i].kind == Tok::Ident)) {
            return i;
        }
        if (toks[i].kind == Tok::Op) {
            const std::string& s = toks[i].text;
            if (s == "(" || s == "[" || s == "{") ++depth;
            else if (s == ")" || s == "]" || s == "}") --depth;
        }
    }
    return end;
}

inline bool py_is_aug_assign(const Tok& t)
{
    static const std::set<std::string> ops = {"+=", "-=", "*=", "/=",  "//=", "%=",
                                              "**=", "&=", "|=", "^=", ">>=", "<<=", "@="};
    return t.kind == Tok::Op && ops.count(t.text) != 0;
}

struct PyStatementInfo {
    NodeKind kind = NodeKind::simple;
    bool opens_block = false;
    bool is_import = false;
    bool is_chain_member = false;  // elif / else / except / finally
    bool is_chain_start = false;   // if / try / for / while
    PyLineFacts facts;
};

/// Classifies one logical line and extracts its variable facts.
inline PyStatementInfo py_analyze_line(const std::vector<Tok>& toks)
{
    PyStatementInfo info;
    if (toks.empty()) {
        info.kind = NodeKind::other;
        return info;
    }
    std::size_t start = 0;
    if (is_kw(toks[0], "async") && toks.size() > 1) {
        start = 1;
    }
    const Tok& head = toks[start];
    std::size_t n = toks.size();
    bool ends_colon = is_op(toks[n - 1], ":");

    auto expr_rest = [&](std::size_t from, std::size_t to) {
        py_collect_expr(toks, from, to, info.facts);
    };

    if (is_kw(head, "import") || is_kw(head, "from")) {
        info.is_import = true;
        info.kind = NodeKind::simple;
        // `import a.b as c` defines c; `import a.b` defines a;
        // `from m import x as y, z` defines y and z.
        bool from_form = is_kw(head, "from");
        std::size_t i = start + 1;
        if (from_form) {
            while (i < n && !is_kw(toks[i], "import")) {
                ++i;
            }
            ++i;
        }
        while (i < n) {
            if (toks[i].kind == Tok::Ident && python_keywords().count(toks[i].text) == 0) {
                std::string first = toks[i].text;
                std::size_t j = i + 1;
                while (j + 1 < n && is_op(toks[j], ".") && toks[j + 1].kind == Tok::Ident) {
                    j += 2;
                }
                if (j < n && is_kw(toks[j], "as") && j + 1 < n) {
                    info.facts.defs.insert(toks[j + 1].text);
                    i = j + 2;
                } else {
                    if (first != "*") {
                        info.facts.defs.insert(first);
                    }
                    i = j;
                }
            } else {
                ++i;
            }
        }
        return info;
    }
    if (is_kw(head, "def")) {
        info.kind = NodeKind::def_header;
        info.opens_block = ends_colon;
        if (start + 1 < n && toks[start + 1].kind == Tok::Ident) {
            info.facts.defs.insert(toks[start + 1].text);
        }
        // Parameter list: names at paren depth 1; defaults and annotations
        // are outer-scope expressions.
        std::size_t open = py_find_toplevel(toks, start + 1, n, "(");
        if (open != n) {
            int depth = 0;
            bool expect_param = true;
            for (std::size_t i = open; i < n; ++i) {
                const Tok& t = toks[i];
                if (t.kind == Tok::Op) {
                    if (t.text == "(" || t.text == "[" || t.text == "{") ++depth;
                    else if (t.text == ")" || t.text == "]" || t.text == "}") {
                        --depth;
                        if (depth == 0) break;
                    } else if (t.text == "," && depth == 1) expect_param = true;
                    else if ((t.text == "=" || t.text == ":") && depth == 1) {
                        // default / annotation expression until next comma
                        std::size_t j = i + 1;
                        int d2 = depth;
                        while (j < n) {
                            if (toks[j].kind == Tok::Op) {
                                const std::string& s = toks[j].text;
                                if (s == "(" || s == "[" || s == "{") ++d2;
                                else if (s == ")" || s == "]" || s == "}") {
                                    if (--d2 == 0) break;
                                } else if (s == "," && d2 == 1) break;
                            }
                            ++j;
                        }
                        py_collect_expr(toks, i + 1, j, info.facts);
                        i = j - 1;
                        expect_param = false;
                    }
                    continue;
                }
                if (t.kind == Tok::Ident && depth == 1 && expect_param
                    && python_keywords().count(t.text) == 0) {
                    info.facts.inner_defs.insert(t.text);
                    expect_param = false;
                }
            }
        }
        return info;
    }
    if (is_kw(head, "class")) {
        info.kind = NodeKind::def_header;
        info.opens_block = ends_colon;
        if (start + 1 < n && toks[start + 1].kind == Tok::Ident) {
            info.facts.defs.insert(toks[start + 1].text);
        }
        std::size_t open = py_find_toplevel(toks, start + 1, n, "(");
        if (open != n) {
            expr_rest(open + 1, n - 1);
        }
        return info;
    }
    if (is_kw(head, "if")) {
        info.kind = NodeKind::branch_head;
        info.opens_block = ends_colon;
        info.is_chain_start = true;
        expr_rest(start + 1, ends_colon ? n - 1 : n);
        return info;
    }
    if (is_kw(head, "elif")) {
        info.kind = NodeKind::branch_head;
        info.opens_block = ends_colon;
        info.is_chain_member = true;
        expr_rest(start + 1, ends_colon ? n - 1 : n);
        return info;
    }
    if (is_kw(head, "else")) {
        info.kind = NodeKind::branch_head;
        info.opens_block = ends_colon;
        info.is_chain_member = true;
        return info;
    }
    if (is_kw(head, "while")) {
        info.kind = NodeKind::loop_head;
        info.opens_block = ends_colon;
        info.is_chain_start = true;
        expr_rest(start + 1, ends_colon ? n - 1 : n);
        return info;
    }
    if (is_kw(head, "for")) {
        info.kind = NodeKind::loop_head;
        info.opens_block = ends_colon;
        info.is_chain_start = true;
        std::size_t in_pos = py_find_toplevel(toks, start + 1, n, "in");
        std::size_t limit = ends_colon ? n - 1 : n;
        for (std::size_t i = start + 1; i < in_pos && i < n; ++i) {
            if (toks[i].kind == Tok::Ident && python_keywords().count(toks[i].text) == 0
                && !(i > 0 && is_op(toks[i - 1], "."))) {
                info.facts.inner_defs.insert(toks[i].text);
            }
        }
        if (in_pos < n) {
            expr_rest(in_pos + 1, limit);
        }
        return info;
    }
    if (is_kw(head, "try") || is_kw(head, "finally")) {
        info.kind = NodeKind::other;
        info.opens_block = ends_colon;
        info.is_chain_start = is_kw(head, "try");
        info.is_chain_member = is_kw(head, "finally");
        return info;
    }
    if (is_kw(head, "except")) {
        info.kind = NodeKind::other;
        info.opens_block = ends_colon;
        info.is_chain_member = true;
        std::size_t as_pos = py_find_toplevel(toks, start + 1, n, "as");
        std::size_t limit = ends_colon ? n - 1 : n;
        expr_rest(start + 1, std::min(as_pos, limit));
        if (as_pos < n && as_pos + 1 < n && toks[as_pos + 1].kind == Tok::Ident) {
            info.facts.inner_defs.insert(toks[as_pos + 1].text);
        }
        return info;
    }
    if (is_kw(head, "with")) {
        info.kind = NodeKind::other;
        info.opens_block = ends_colon;
        std::size_t limit = ends_colon ? n - 1 : n;
        std::size_t i = start + 1;
        while (i < limit) {
            std::size_t as_pos = py_find_toplevel(toks, i, limit, "as");
            std::size_t comma = py_find_toplevel(toks, i, limit, ",");
            std::size_t seg_end = std::min(comma, limit);
            expr_rest(i, std::min(as_pos, seg_end));
            if (as_pos < seg_end && as_pos + 1 < limit
                && toks[as_pos + 1].kind == Tok::Ident) {
                info.facts.inner_defs.insert(toks[as_pos + 1].text);
            }
            i = seg_end + 1;
        }
        return info;
    }
    if (is_kw(head, "return")) {
        info.kind = NodeKind::ret;
        expr_rest(start + 1, n);
        return info;
    }
    if (is_kw(head, "raise") || is_kw(head, "assert") || is_kw(head, "del")
        || is_kw(head, "yield") || is_kw(head, "await")) {
        info.kind = NodeKind::simple;
        expr_rest(start + 1, n);
        return info;
    }
    if (is_kw(head, "global") || is_kw(head, "nonlocal") || is_kw(head, "pass")
        || is_kw(head, "break") || is_kw(head, "continue")) {
        info.kind = NodeKind::simple;
        return info;
    }

    // Assignment or expression statement.
    for (std::size_t i = 0; i < n; ++i) {
        if (py_is_aug_assign(toks[i])) {
            int depth = 0;
            bool top = true;
            for (std::size_t j = 0; j < i; ++j) {
                if (toks[j].kind == Tok::Op) {
                    const std::string& s = toks[j].text;
                    if (s == "(" || s == "[" || s == "{") ++depth;
                    else if (s == ")" || s == "]" || s == "}") --depth;
                }
            }
            top = depth == 0;
            if (top) {
                py_collect_targets(toks, 0, i, info.facts);
                // Augmented assignment also reads the target.
                for (std::size_t j = 0; j < i; ++j) {
                    if (toks[j].kind == Tok::Ident
                        && python_keywords().count(toks[j].text) == 0
                        && !(j > 0 && is_op(toks[j - 1], "."))) {
                        info.facts.uses.insert(toks[j].text);
                        break;
                    }
                }
                expr_rest(i + 1, n);
                return info;
            }
        }
    }
    std::vector<std::size_t> eqs;
    {
        int depth = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (toks[i].kind != Tok::Op) continue;
            const std::string& s = toks[i].text;
            if (s == "(" || s == "[" || s == "{") ++depth;
            else if (s == ")" || s == "]" || s == "}") --depth;
            else if (s == "=" && depth == 0) eqs.push_back(i);
        }
    }
    if (!eqs.empty()) {
        std::size_t prev = 0;
        for (std::size_t eq : eqs) {
            py_collect_targets(toks, prev, eq, info.facts);
            prev = eq + 1;
        }
        expr_rest(eqs.back() + 1, n);
        return info;
    }
    expr_rest(0, n);
    return info;
}

/// Segments Python source into RawStatements with parent/chain structure.
inline std::vector<RawStatement> py_segment(const std::string& source)
{
    std::vector<PyLogicalLine> logical = py_scan_logical_lines(source);
    std::vector<RawStatement> stmts;

    struct OpenBlock {
        int node = -1;
        int header_indent = 0;
    };
    std::vector<OpenBlock> stack;
    // Last chain-start statement per (parent, indent), for elif/else/except.
    std::map<std::pair<int, int>, int> chain_heads;

    std::size_t i = 0;
    while (i < logical.size()) {
        PyLogicalLine& ll = logical[i];
        while (!stack.empty() && ll.indent <= stack.back().header_indent) {
            stack.pop_back();
        }
        int parent = stack.empty() ? -1 : stack.back().node;

        // Decorators fold into the following def/class statement.
        int span_start = ll.start_line;
        bool decorated = false;
        while (i < logical.size() && !logical[i].tokens.empty()
               && is_op(logical[i].tokens[0], "@")) {
            decorated = true;
            ++i;
        }
        if (i >= logical.size()) {
            // Trailing decorator without a def; emit as plain statement.
            RawStatement st;
            st.start_line = span_start;
            st.end_line = logical.back().end_line;
            st.kind = NodeKind::other;
            st.parent = parent;
            stmts.push_back(st);
            break;
        }
        PyLogicalLine& body_ll = logical[i];

        PyStatementInfo info = py_analyze_line(body_ll.tokens);
        if (decorated) {
            for (std::size_t d = 0; d < i; ++d) {
                if (logical[d].start_line >= span_start) {
                    PyLineFacts deco;
                    py_collect_expr(logical[d].tokens, 1, logical[d].tokens.size(), deco);
                    info.facts.uses.insert(deco.uses.begin(), deco.uses.end());
                    for (auto& c : deco.calls) {
                        info.facts.calls.push_back(c);
                    }
                }
            }
        }

        RawStatement st;
        st.start_line = span_start;
        st.end_line = body_ll.end_line;
        st.kind = info.kind;
        st.is_import = info.is_import;
        st.opens_block = info.opens_block;
        st.parent = parent;
        st.defs = info.facts.defs;
        st.inner_defs = info.facts.inner_defs;
        st.uses = info.facts.uses;
        st.calls = info.facts.calls;

        auto chain_key = std::make_pair(parent, body_ll.indent);
        if (info.is_chain_member) {
            auto it = chain_heads.find(chain_key);
            if (it != chain_heads.end()) {
                st.chain_head = it->second;
            }
        }
        int id = static_cast<int>(stmts.size());
        if (info.is_chain_start) {
            chain_heads[chain_key] = id;
        }
        stmts.push_back(std::move(st));
        if (info.opens_block) {
            stack.push_back({id, body_ll.indent});
        }
        ++i;
    }
    return stmts;
}

}  // namespace securekb::detail
