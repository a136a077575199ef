#pragma once

#include "securekb/detail/source_scan.hpp"

#include <map>
#include <string>
#include <vector>

namespace securekb::detail {

inline const std::set<std::string>& c_keywords()
{
    static const std::set<std::string> kws = {
        "alignas", "alignof", "asm", "auto", "bool", "break", "case", "catch", "char",
        "class", "const", "constexpr", "const_cast", "continue", "decltype", "default",
        "delete", "do", "double", "dynamic_cast", "else", "enum", "explicit", "export",
        "extern", "false", "float", "for", "friend", "goto", "if", "inline", "int",
        "long", "mutable", "namespace", "new", "noexcept", "nullptr", "operator",
        "private", "protected", "public", "register", "reinterpret_cast", "return",
        "short", "signed", "sizeof", "static", "static_assert", "static_cast", "struct",
        "switch", "template", "this", "thread_local", "throw", "true", "try", "typedef",
        "typeid", "typename", "union", "unsigned", "using", "virtual", "void",
        "volatile", "wchar_t", "while", "NULL"};
    return kws;
}

inline bool c_is_type_keyword(const std::string& s)
{
    static const std::set<std::string> types = {"void", "char", "short", "int", "long",
                                                "float", "double", "signed", "unsigned",
                                                "bool", "const", "static", "struct",
                                                "union", "enum", "auto", "register",
                                                "volatile", "extern", "inline", "constexpr"};
    return types.count(s) != 0;
}

struct CScan {
    std::vector<Tok> tokens;
    // Preprocessor directives, pulled out before tokenizing.
    struct Directive {
        int start_line = 0;
        int end_line = 0;
        bool is_include = false;
    };
    std::vector<Directive> directives;
};

inline CScan c_tokenize(const std::string& source)
{
    CScan scan;
    std::vector<std::string> lines = split_lines(source);

    // Pass 1: lift preprocessor directives (with continuations) out.
    std::vector<bool> is_directive_line(lines.size(), false);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::size_t first = lines[i].find_first_not_of(" \t");
        if (first == std::string::npos || lines[i][first] != '#') {
            continue;
        }
        CScan::Directive d;
        d.start_line = static_cast<int>(i) + 1;
        d.is_include = lines[i].compare(first, 8, "#include") == 0;
        while (i < lines.size()) {
            is_directive_line[i] = true;
            bool cont = !lines[i].empty() && lines[i].back() == '\\';
            d.end_line = static_cast<int>(i) + 1;
            if (!cont) {
                break;
            }
            ++i;
        }
        scan.directives.push_back(d);
    }

    // Pass 2: tokenize the rest, skipping comments and string contents.
    bool in_block_comment = false;
    for (std::size_t li = 0; li < lines.size(); ++li) {
        if (is_directive_line[li]) {
            continue;
        }
        const std::string& line = lines[li];
        int line_no = static_cast<int>(li) + 1;
        std::size_t p = 0;
        while (p < line.size()) {
            if (in_block_comment) {
                std::size_t close = line.find("*/", p);
                if (close == std::string::npos) {
                    p = line.size();
                } else {
                    p = close + 2;
                    in_block_comment = false;
                }
                continue;
            }
            char c = line[p];
            if (c == '/' && p + 1 < line.size() && line[p + 1] == '/') {
                break;
            }
            if (c == '/' && p + 1 < line.size() && line[p + 1] == '*') {
                in_block_comment = true;
                p += 2;
                continue;
            }
            if (c == '"' || c == '\'') {
                char quote = c;
                std::size_t q = p + 1;
                while (q < line.size()) {
                    if (line[q] == '\\') {
                        q += 2;
                        continue;
                    }
                    if (line[q] == quote) {
                        ++q;
                        break;
                    }
                    ++q;
                }
                scan.tokens.push_back({Tok::Str, "", line_no});
                p = q;
                continue;
            }
            if (is_ident_start(c)) {
                std::size_t q = p;
                while (q < line.size() && is_ident_char(line[q])) {
                    ++q;
                }
                scan.tokens.push_back({Tok::Ident, line.substr(p, q - p), line_no});
                p = q;
                continue;
            }
            if (std::isdigit(static_cast<unsigned char>(c)) != 0) {
                std::size_t q = p;
                while (q < line.size() && (is_ident_char(line[q]) || line[q] == '.')) {
                    ++q;
                }
                scan.tokens.push_back({Tok::Number, line.substr(p, q - p), line_no});
                p = q;
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(c)) != 0) {
                ++p;
                continue;
            }
            std::size_t len = match_operator(std::string_view(line).substr(p));
            scan.tokens.push_back({Tok::Op, line.substr(p, len), line_no});
            p += len;
        }
    }
    return scan;
}

// -------- expression facts --------

struct CFacts {
    std::set<std::string> defs;
    std::set<std::string> inner_defs;
    std::set<std::string> uses;
    std::vector<std::string> calls;
};

/// Uses and calls within an expression region. Member accesses contribute the
/// base identifier; `a::b->c(...)` records the call "a.b.c".
inline void c_collect_expr(const std::vector<Tok>& toks, std::size_t begin, std::size_t end,
                           CFacts& facts)
{
    std::size_t i = begin;
    while (i < end) {
        const Tok& t = toks[i];
        if (t.kind != Tok::Ident) {
            ++i;
            continue;
        }
        bool after_access = i > begin && toks[i - 1].kind == Tok::Op
                            && (toks[i - 1].text == "." || toks[i - 1].text == "->"
                                || toks[i - 1].text == "::");
        if (after_access) {
            ++i;
            continue;
        }
        if (c_keywords().count(t.text) != 0) {
            ++i;
            continue;
        }
        std::string chain = t.text;
        std::size_t j = i + 1;
        while (j + 1 < end && toks[j].kind == Tok::Op
               && (toks[j].text == "." || toks[j].text == "->" || toks[j].text == "::")
               && toks[j + 1].kind == Tok::Ident) {
            chain += ".";
            chain += toks[j + 1].text;
            j += 2;
        }
        if (j < end && is_op(toks[j], "(")) {
            facts.calls.push_back(chain);
        }
        facts.uses.insert(t.text);
        // Increment/decrement makes the base a definition too.
        if ((j < end && (is_op(toks[j], "++") || is_op(toks[j], "--")))
            || (i > begin && (is_op(toks[i - 1], "++") || is_op(toks[i - 1], "--")))) {
            facts.defs.insert(t.text);
        }
        i = j;
    }
}

/// Assignment-target region: finds the written base identifier. `*p = x`
/// defines p; `buf[i] = c` defines buf and uses buf, i.
inline void c_collect_target(const std::vector<Tok>& toks, std::size_t begin, std::size_t end,
                             CFacts& facts)
{
    // Scan right to left past member/subscript trailers to the base.
    std::size_t i = end;
    int bracket = 0;
    bool saw_trailer = false;
    std::size_t base = end;
    while (i > begin) {
        --i;
        const Tok& t = toks[i];
        if (t.kind == Tok::Op) {
            if (t.text == "]") {
                ++bracket;
                saw_trailer = true;
            } else if (t.text == "[") {
                --bracket;
            } else if (bracket == 0
                       && (t.text == "." || t.text == "->" || t.text == "*")) {
                // Deref writes (`*p = x`) resolve to the pointer token and
                // count as definitions of it.
                saw_trailer = saw_trailer || t.text != "*";
            }
            continue;
        }
        if (bracket > 0) {
            if (t.kind == Tok::Ident && c_keywords().count(t.text) == 0) {
                facts.uses.insert(t.text);
            }
            continue;
        }
        if (t.kind == Tok::Ident && c_keywords().count(t.text) == 0) {
            base = i;
            // Continue left: `p->f` should resolve to p, not f.
            if (i > begin && toks[i - 1].kind == Tok::Op
                && (toks[i - 1].text == "." || toks[i - 1].text == "->"
                    || toks[i - 1].text == "::")) {
                saw_trailer = true;
                continue;
            }
            break;
        }
    }
    if (base != end) {
        facts.defs.insert(toks[base].text);
        bool deref = false;
        for (std::size_t k = begin; k < base; ++k) {
            if (is_op(toks[k], "*")) {
                deref = true;
            }
        }
        // Declarations (`int x = ...`) are fresh bindings; mutations through
        // trailers or derefs also read the base.
        bool declaration = false;
        for (std::size_t k = begin; k < base; ++k) {
            if (toks[k].kind == Tok::Ident && c_is_type_keyword(toks[k].text)) {
                declaration = true;
            }
        }
        if ((saw_trailer || deref) && !declaration) {
            facts.uses.insert(toks[base].text);
        }
    }
}

inline bool c_is_aug_assign(const Tok& t)
{
    static const std::set<std::string> ops = {"+=", "-=", "*=", "/=", "%=",
                                              "&=", "|=", "^=", ">>=", "<<="};
    return t.kind == Tok::Op && ops.count(t.text) != 0;
}

/// Extracts defs/uses/calls from a brace-free C statement (token region).
inline CFacts c_statement_facts(const std::vector<Tok>& toks, std::size_t begin,
                                std::size_t end)
{
    CFacts facts;
    if (begin >= end) {
        return facts;
    }
    if (is_kw(toks[begin], "return") || is_kw(toks[begin], "throw")
        || is_kw(toks[begin], "delete")) {
        c_collect_expr(toks, begin + 1, end, facts);
        return facts;
    }
    if (is_kw(toks[begin], "goto") || is_kw(toks[begin], "break")
        || is_kw(toks[begin], "continue") || is_kw(toks[begin], "using")
        || is_kw(toks[begin], "typedef")) {
        return facts;
    }

    // Split on top-level commas only when an '=' exists at depth 0 or the
    // statement is a paren-free declaration (int a, b;).
    std::vector<std::size_t> eqs;
    bool has_paren = false;
    {
        int depth = 0;
        for (std::size_t i = begin; i < end; ++i) {
            if (toks[i].kind != Tok::Op) continue;
            const std::string& s = toks[i].text;
            if (s == "(" || s == "[" || s == "{") {
                ++depth;
                if (s == "(") has_paren = true;
            } else if (s == ")" || s == "]" || s == "}") {
                --depth;
            } else if (s == "=" && depth == 0) {
                eqs.push_back(i);
            } else if (c_is_aug_assign(toks[i]) && depth == 0) {
                c_collect_target(toks, begin, i, facts);
                // Compound assignment reads the target.
                CFacts lhs;
                c_collect_expr(toks, begin, i, lhs);
                facts.uses.insert(lhs.uses.begin(), lhs.uses.end());
                c_collect_expr(toks, i + 1, end, facts);
                return facts;
            }
        }
    }
    if (!eqs.empty()) {
        // Handle possible multi-declarator statements by splitting on
        // top-level commas: each segment with an '=' is target = expr.
        std::vector<std::size_t> commas;
        int depth = 0;
        for (std::size_t i = begin; i < end; ++i) {
            if (toks[i].kind != Tok::Op) continue;
            const std::string& s = toks[i].text;
            if (s == "(" || s == "[" || s == "{") ++depth;
            else if (s == ")" || s == "]" || s == "}") --depth;
            else if (s == "," && depth == 0) commas.push_back(i);
        }
        std::size_t seg_start = begin;
        commas.push_back(end);
        for (std::size_t comma : commas) {
            std::size_t eq = comma;
            int d2 = 0;
            for (std::size_t i = seg_start; i < comma; ++i) {
                if (toks[i].kind != Tok::Op) continue;
                const std::string& s = toks[i].text;
                if (s == "(" || s == "[" || s == "{") ++d2;
                else if (s == ")" || s == "]" || s == "}") --d2;
                else if (s == "=" && d2 == 0) {
                    eq = i;
                    break;
                }
            }
            if (eq != comma) {
                c_collect_target(toks, seg_start, eq, facts);
                c_collect_expr(toks, eq + 1, comma, facts);
            } else {
                c_collect_expr(toks, seg_start, comma, facts);
            }
            seg_start = comma + 1;
        }
        return facts;
    }

    if (!has_paren) {
        // Possible declaration: `int a, b;` defines trailing identifiers.
        // Only a type keyword or two adjacent identifiers (`MyType x`) count
        // as declaration shape; `i < n` is an expression.
        std::vector<std::string> idents;
        for (std::size_t i = begin; i < end; ++i) {
            if (toks[i].kind == Tok::Ident && c_keywords().count(toks[i].text) == 0
                && !(i > begin && toks[i - 1].kind == Tok::Op
                     && (toks[i - 1].text == "." || toks[i - 1].text == "->"
                         || toks[i - 1].text == "::"))) {
                idents.push_back(toks[i].text);
            }
        }
        bool has_type_kw = false;
        bool adjacent_idents = false;
        for (std::size_t i = begin; i < end; ++i) {
            if (toks[i].kind == Tok::Ident && c_is_type_keyword(toks[i].text)) {
                has_type_kw = true;
            }
            if (i + 1 < end && toks[i].kind == Tok::Ident
                && toks[i + 1].kind == Tok::Ident
                && c_keywords().count(toks[i + 1].text) == 0) {
                adjacent_idents = true;
            }
        }
        bool decl_shape = has_type_kw || adjacent_idents;
        if (decl_shape && !idents.empty()) {
            int depth = 0;
            std::string last;
            for (std::size_t i = begin; i < end; ++i) {
                if (toks[i].kind == Tok::Op) {
                    const std::string& s = toks[i].text;
                    if (s == "[" ) ++depth;
                    else if (s == "]") --depth;
                    else if (s == "," && depth == 0 && !last.empty()) {
                        facts.defs.insert(last);
                        last.clear();
                    }
                    continue;
                }
                if (depth == 0 && toks[i].kind == Tok::Ident
                    && c_keywords().count(toks[i].text) == 0) {
                    last = toks[i].text;
                } else if (depth > 0 && toks[i].kind == Tok::Ident
                           && c_keywords().count(toks[i].text) == 0) {
                    facts.uses.insert(toks[i].text);  // array extent
                }
            }
            if (!last.empty()) {
                facts.defs.insert(last);
            }
            return facts;
        }
        c_collect_expr(toks, begin, end, facts);
        return facts;
    }

    // Expression statement (typically a call).
    c_collect_expr(toks, begin, end, facts);
    return facts;
}

// -------- segmentation --------

struct CSegmenter {
    const std::vector<Tok>& toks;
    std::vector<RawStatement> stmts;
    std::size_t pos = 0;

    explicit CSegmenter(const std::vector<Tok>& t) : toks(t) {}

    bool eof() const { return pos >= toks.size(); }
    const Tok& cur() const { return toks[pos]; }

    std::size_t find_matching_paren(std::size_t open) const
    {
        int depth = 0;
        for (std::size_t i = open; i < toks.size(); ++i) {
            if (is_op(toks[i], "(")) ++depth;
            else if (is_op(toks[i], ")")) {
                if (--depth == 0) return i;
            }
        }
        return toks.size();
    }

    /// Parses statements until a closing '}' (consumed) or EOF.
    void parse_block(int parent, bool stop_at_brace, int* close_line)
    {
        int chain_head = -1;
        while (!eof()) {
            if (is_op(cur(), "}")) {
                if (close_line != nullptr) {
                    *close_line = cur().line;
                }
                ++pos;
                if (stop_at_brace) {
                    return;
                }
                continue;  // stray brace at top level
            }
            if (is_op(cur(), ";")) {
                ++pos;
                continue;
            }
            parse_statement(parent, &chain_head);
        }
    }

    int new_statement(int parent, int start_line, NodeKind kind)
    {
        RawStatement st;
        st.parent = parent;
        st.start_line = start_line;
        st.end_line = start_line;
        st.kind = kind;
        stmts.push_back(st);
        return static_cast<int>(stmts.size()) - 1;
    }

    /// Parses a single statement (simple, or a header plus its body).
    /// `chain_head` carries the active if-chain across siblings.
    void parse_statement(int parent, int* chain_head)
    {
        const Tok& head = cur();
        int start_line = head.line;

        if (is_kw(head, "if") || is_kw(head, "while") || is_kw(head, "switch")
            || is_kw(head, "for")) {
            bool is_loop = is_kw(head, "while") || is_kw(head, "for");
            int id = new_statement(parent, start_line,
                                   is_loop ? NodeKind::loop_head : NodeKind::branch_head);
            if (is_kw(head, "if") || is_kw(head, "switch")) {
                *chain_head = id;
            }
            ++pos;
            std::size_t cond_begin = pos;
            std::size_t cond_end = cond_begin;
            if (!eof() && is_op(cur(), "(")) {
                cond_end = find_matching_paren(pos);
                CFacts facts;
                if (is_kw(head, "for")) {
                    parse_for_clauses(cond_begin + 1, cond_end, facts);
                } else {
                    c_collect_expr(toks, cond_begin + 1, cond_end, facts);
                }
                stmts[id].defs = facts.defs;
                stmts[id].inner_defs = facts.inner_defs;
                stmts[id].uses = facts.uses;
                stmts[id].calls = facts.calls;
                pos = cond_end + 1;
            }
            stmts[id].end_line = pos > 0 && pos - 1 < toks.size() ? toks[pos - 1].line
                                                                  : start_line;
            parse_body(id);
            return;
        }
        if (is_kw(head, "else")) {
            bool else_if = pos + 1 < toks.size() && is_kw(toks[pos + 1], "if");
            int id = new_statement(parent, start_line, NodeKind::branch_head);
            stmts[id].chain_head = *chain_head;
            ++pos;
            if (else_if) {
                ++pos;
                if (!eof() && is_op(cur(), "(")) {
                    std::size_t cond_end = find_matching_paren(pos);
                    CFacts facts;
                    c_collect_expr(toks, pos + 1, cond_end, facts);
                    stmts[id].uses = facts.uses;
                    stmts[id].calls = facts.calls;
                    pos = cond_end + 1;
                }
            }
            stmts[id].end_line = pos > 0 && pos - 1 < toks.size() ? toks[pos - 1].line
                                                                  : start_line;
            parse_body(id);
            return;
        }
        if (is_kw(head, "do")) {
            int id = new_statement(parent, start_line, NodeKind::loop_head);
            ++pos;
            parse_body(id);
            // Trailing while(cond); folds into the do node.
            if (!eof() && is_kw(cur(), "while")) {
                ++pos;
                if (!eof() && is_op(cur(), "(")) {
                    std::size_t cond_end = find_matching_paren(pos);
                    CFacts facts;
                    c_collect_expr(toks, pos + 1, cond_end, facts);
                    stmts[id].uses.insert(facts.uses.begin(), facts.uses.end());
                    pos = cond_end + 1;
                }
                if (!eof() && is_op(cur(), ";")) {
                    ++pos;
                }
            }
            return;
        }
        if (is_kw(head, "case") || is_kw(head, "default")
            || (head.kind == Tok::Ident && pos + 1 < toks.size()
                && is_op(toks[pos + 1], ":") && c_keywords().count(head.text) == 0
                && !(pos + 2 < toks.size() && is_op(toks[pos + 2], ":")))) {
            int id = new_statement(parent, start_line, NodeKind::other);
            std::size_t begin = pos;
            while (!eof() && !is_op(cur(), ":")) {
                ++pos;
            }
            CFacts facts;
            c_collect_expr(toks, begin + 1, pos, facts);
            stmts[id].uses = facts.uses;
            if (!eof()) {
                stmts[id].end_line = cur().line;
                ++pos;
            }
            return;
        }

        // Generic statement: collect tokens to ';' or a block-opening '{'.
        std::size_t begin = pos;
        int depth = 0;
        bool saw_eq = false;
        while (!eof()) {
            const Tok& t = cur();
            if (t.kind == Tok::Op) {
                if (t.text == "(" || t.text == "[") {
                    ++depth;
                } else if (t.text == ")" || t.text == "]") {
                    --depth;
                } else if (t.text == "=" && depth == 0) {
                    saw_eq = true;
                } else if (t.text == ";" && depth == 0) {
                    int id = new_statement(parent, start_line, NodeKind::simple);
                    CFacts facts = c_statement_facts(toks, begin, pos);
                    if (is_kw(toks[begin], "return")) {
                        stmts[id].kind = NodeKind::ret;
                    }
                    stmts[id].defs = facts.defs;
                    stmts[id].uses = facts.uses;
                    stmts[id].calls = facts.calls;
                    stmts[id].end_line = t.line;
                    ++pos;
                    return;
                } else if (t.text == "{" && depth == 0) {
                    if (saw_eq) {
                        // Brace initializer: consume to matching '}' and on
                        // to the terminating ';'.
                        int bd = 0;
                        while (!eof()) {
                            if (is_op(cur(), "{")) ++bd;
                            else if (is_op(cur(), "}")) {
                                if (--bd == 0) {
                                    ++pos;
                                    break;
                                }
                            }
                            ++pos;
                        }
                        continue;
                    }
                    parse_block_owner(parent, begin, pos, chain_head);
                    return;
                } else if (t.text == "}" && depth == 0) {
                    // Malformed statement; close out what we have.
                    if (pos > begin) {
                        int id = new_statement(parent, start_line, NodeKind::other);
                        stmts[id].end_line = toks[pos - 1].line;
                    }
                    return;
                }
            }
            ++pos;
        }
        if (pos > begin) {
            int id = new_statement(parent, start_line, NodeKind::other);
            CFacts facts = c_statement_facts(toks, begin, pos);
            stmts[id].defs = facts.defs;
            stmts[id].uses = facts.uses;
            stmts[id].calls = facts.calls;
            stmts[id].end_line = toks[pos - 1].line;
        }
    }

    /// `for (init; cond; step)` clauses share the header node.
    void parse_for_clauses(std::size_t begin, std::size_t end, CFacts& facts)
    {
        std::vector<std::size_t> semis;
        int depth = 0;
        for (std::size_t i = begin; i < end; ++i) {
            if (toks[i].kind != Tok::Op) continue;
            const std::string& s = toks[i].text;
            if (s == "(" || s == "[") ++depth;
            else if (s == ")" || s == "]") --depth;
            else if (s == ";" && depth == 0) semis.push_back(i);
        }
        std::size_t prev = begin;
        std::vector<std::pair<std::size_t, std::size_t>> clauses;
        for (std::size_t s : semis) {
            clauses.emplace_back(prev, s);
            prev = s + 1;
        }
        clauses.emplace_back(prev, end);
        for (std::size_t ci = 0; ci < clauses.size(); ++ci) {
            CFacts part = c_statement_facts(toks, clauses[ci].first, clauses[ci].second);
            if (ci == 0) {
                // Loop variables bind inside the body.
                facts.inner_defs.insert(part.defs.begin(), part.defs.end());
            } else {
                facts.defs.insert(part.defs.begin(), part.defs.end());
            }
            facts.uses.insert(part.uses.begin(), part.uses.end());
            for (auto& c : part.calls) {
                facts.calls.push_back(c);
            }
        }
    }

    /// Header tokens [begin, brace) followed by '{': function definition,
    /// aggregate/namespace, or anonymous block.
    void parse_block_owner(int parent, std::size_t begin, std::size_t brace, int* chain_head)
    {
        (void)chain_head;
        int start_line = toks[begin].line;
        if (brace == begin) {
            // Anonymous block: children attach to the surrounding owner.
            ++pos;
            int ignored = 0;
            parse_block(parent, true, &ignored);
            return;
        }

        bool aggregate = is_kw(toks[begin], "struct") || is_kw(toks[begin], "class")
                         || is_kw(toks[begin], "union") || is_kw(toks[begin], "enum")
                         || is_kw(toks[begin], "namespace");
        // Function definition: trailing (...) group right before the brace
        // (allowing const/noexcept/override between).
        std::size_t close_paren = brace;
        for (std::size_t i = brace; i > begin; --i) {
            if (is_op(toks[i - 1], ")")) {
                close_paren = i - 1;
                break;
            }
            if (toks[i - 1].kind != Tok::Ident) {
                break;
            }
        }
        bool function = !aggregate && close_paren != brace;

        RawStatement st;
        st.parent = parent;
        st.start_line = start_line;
        st.end_line = toks[brace].line;
        st.opens_block = true;
        if (function) {
            st.kind = NodeKind::def_header;
            // Name = identifier chain before the matching '('.
            std::size_t open_paren = begin;
            int depth = 0;
            for (std::size_t i = close_paren + 1; i > begin; --i) {
                if (is_op(toks[i - 1], ")")) ++depth;
                else if (is_op(toks[i - 1], "(")) {
                    if (--depth == 0) {
                        open_paren = i - 1;
                        break;
                    }
                }
            }
            if (open_paren > begin && toks[open_paren - 1].kind == Tok::Ident) {
                st.defs.insert(toks[open_paren - 1].text);
            }
            // Parameters: last identifier of each comma group.
            int d = 0;
            std::string last;
            for (std::size_t i = open_paren; i <= close_paren; ++i) {
                const Tok& t = toks[i];
                if (t.kind == Tok::Op) {
                    if (t.text == "(") ++d;
                    else if (t.text == ")") {
                        if (--d == 0 && !last.empty()) {
                            st.inner_defs.insert(last);
                            last.clear();
                        }
                    } else if (t.text == "," && d == 1) {
                        if (!last.empty()) {
                            st.inner_defs.insert(last);
                            last.clear();
                        }
                    }
                    continue;
                }
                if (d == 1 && t.kind == Tok::Ident && c_keywords().count(t.text) == 0) {
                    last = t.text;
                }
            }
        } else if (aggregate) {
            st.kind = NodeKind::other;
            for (std::size_t i = begin; i < brace; ++i) {
                if (toks[i].kind == Tok::Ident && c_keywords().count(toks[i].text) == 0) {
                    st.defs.insert(toks[i].text);
                    break;
                }
            }
        } else {
            st.kind = NodeKind::other;
            CFacts facts = c_statement_facts(toks, begin, brace);
            st.defs = facts.defs;
            st.uses = facts.uses;
            st.calls = facts.calls;
        }
        int id = static_cast<int>(stmts.size());
        stmts.push_back(std::move(st));
        ++pos;  // consume '{'
        int close_line = 0;
        parse_block(id, true, &close_line);
        stmts[id].close_line = close_line;
        // Aggregates may carry a trailing `;` (struct X { ... };).
        if (!eof() && is_op(cur(), ";")) {
            ++pos;
        }
    }

    /// A guard's body: braced block or a single statement.
    void parse_body(int owner)
    {
        if (eof()) {
            return;
        }
        if (is_op(cur(), "{")) {
            ++pos;
            int close_line = 0;
            parse_block(owner, true, &close_line);
            stmts[owner].opens_block = true;
            stmts[owner].close_line = close_line;
            return;
        }
        if (is_op(cur(), ";")) {
            ++pos;  // empty body
            stmts[owner].opens_block = true;
            return;
        }
        stmts[owner].opens_block = true;
        int chain = -1;
        parse_statement(owner, &chain);
    }
};

/// Segments C/C++ source into RawStatements.
inline std::vector<RawStatement> c_segment(const std::string& source)
{
    CScan scan = c_tokenize(source);
    CSegmenter seg(scan.tokens);
    seg.parse_block(-1, false, nullptr);

    // Preprocessor directives become top-level nodes; merge them in line
    // order with the parsed statements.
    std::vector<RawStatement> merged;
    std::size_t di = 0;
    auto flush_directives_before = [&](int line) {
        while (di < scan.directives.size() && scan.directives[di].start_line < line) {
            RawStatement st;
            st.start_line = scan.directives[di].start_line;
            st.end_line = scan.directives[di].end_line;
            st.kind = NodeKind::other;
            st.is_import = scan.directives[di].is_include;
            st.parent = -1;
            merged.push_back(st);
            ++di;
        }
    };
    // Parent indices shift as directives are interleaved; remap afterwards.
    std::vector<int> remap(seg.stmts.size(), -1);
    for (std::size_t i = 0; i < seg.stmts.size(); ++i) {
        flush_directives_before(seg.stmts[i].start_line);
        remap[i] = static_cast<int>(merged.size());
        merged.push_back(seg.stmts[i]);
    }
    flush_directives_before(1 << 30);
    for (auto& st : merged) {
        if (st.parent >= 0) {
            st.parent = remap[static_cast<std::size_t>(st.parent)];
        }
        if (st.chain_head >= 0) {
            st.chain_head = remap[static_cast<std::size_t>(st.chain_head)];
        }
    }
    return merged;
}

}  // namespace securekb::detail
