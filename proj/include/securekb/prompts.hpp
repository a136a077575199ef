#pragma once

#include "securekb/util.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace securekb {

class PromptAssemblyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace prompts {

// NB: several templates intentionally carry a trailing space after an
// opening ``` and uneven blank lines; they are reproduced verbatim.

inline constexpr const char* kZeroShotChat =
    R"PROMPT(Generate the following {lang} code.

### Code Snippet and Task Requirement
```{lang}
{code}
```)PROMPT";

inline constexpr const char* kCauseAnalysis =
    R"PROMPT(Identify and summarize the cause of the potential vulnerability in a concise and informative paragraph before proceeding with code generation. The output should at least include the name of the vulnerability and its cause. Focus solely on the underlying cause of the vulnerability without mentioning any fixing information.
The output should be a text-only paragraph, without any other structure.

# Example
** Input **:
```python 
def build_board(conn, game,size):
    # we'll build the empty board, and then fill in with the move list that
    # we get from the DB.
    board = []
    for i in range(size):
        board.append([""]*size)


    # search for all moves that have happenend during this game.
    cursor = conn.cursor()
```

** Output **:
The potential vulnerability is related to an SQL Injection vulnerability. This vulnerability occurs because the code implies the execution of SQL queries based on user-supplied inputs without implementing proper validation or sanitization mechanisms. The use of `conn.cursor()` to execute presumably dynamic SQL commands indicates that if user inputs are directly incorporated into those commands, it could lead to unauthorized access or manipulation of the database. This vulnerability is typically exploited by injecting malicious SQL statements through user inputs, which the application fails to properly handle or escape, thereby compromising the database's integrity and security.

Please identify and summarize the task below:
```{lang}
{code}
```)PROMPT";

inline constexpr const char* kAugmentedCompletion =
    "# General Security Guidelines\n"
    "``` \n"
    "{security_guidelines}\n"
    "```\n"
    "\n"
    "# Example\n"
    "## Secure Code Example\n"
    "```{language}\n"
    "{secure_code}\n"
    "```\n"
    "\n"
    "## Secure Code Example\n"
    "```{lang}\n"
    "{code}\n";

inline constexpr const char* kAugmentedChat =
    "Given the security knowledge:\n"
    "```markdown\n"
    "# General Security Guidelines\n"
    "``` \n"
    "{security_guidelines}\n"
    "```\n"
    "\n"
    "# Example\n"
    "## Secure Code Example\n"
    "```{language}\n"
    "{secure_code}\n"
    "```\n"
    "```\n"
    "\n"
    "Your task is to complete the following {lang} code.\n"
    "### Code Snippet\n"
    "```{lang}\n"
    "{code}\n"
    "```\n"
    "\n"
    "When completing, you should consider the following:\n"
    "1. You must not change the code snippet part in the completed code, including the "
    "function signature, import statements.\n"
    "2. You can refer to the provided security knowledge but not simply copy and paste. "
    "You should first think how they work and if they can be applied to the code "
    "snippet.\n"
    "\n"
    "Your response should start with ```{lang}";

inline constexpr const char* kGuidelineExtractionHeader =
    R"PROMPT(Extract common security knowledge from the provided multiple cases. Identify and summarize distinctive guidelines.

# Output Format
Provide a clear and concise summary of each guideline in a sentence. Ensure that each guideline is distinct.

# Output Example
- Use parameterized queries instead of string interpolation or concatenation to prevent SQL injection attacks.


Extract security guidelines from the following cases:

# Vulnerability-Fix Data List
)PROMPT";

inline constexpr const char* kGuidelineMergeHeader =
    R"PROMPT(Merge extracted security guidelines by combining those with identical meanings into a single, clear, and concise sentence for each guideline.
)PROMPT";

inline constexpr const char* kCauseExtractionHeader =
    R"PROMPT(Identify and summarize the cause of the potential vulnerability in a concise and informative paragraph. The output should at least include the name of the vulnerability and its cause. Focus solely on the underlying cause of the vulnerability without mentioning any fixing information.
The output should be a text-only paragraph, without any other structure.

Identify and summarize vulnerability causes from the following cases:

# Vulnerability-Fix Data List
)PROMPT";

inline constexpr const char* kCauseMergeHeader =
    R"PROMPT(Merge the extracted vulnerability causes by combining those with identical meanings into a single, clear, and concise paragraph.
)PROMPT";

}  // namespace prompts

/// Raises when a known placeholder survived substitution.
inline void check_no_placeholders(const std::string& prompt)
{
    static const char* placeholders[] = {"{security_guidelines}", "{secure_code}",
                                         "{language}", "{lang}", "{code}"};
    for (const char* p : placeholders) {
        if (prompt.find(p) != std::string::npos) {
            throw PromptAssemblyError(std::string("unsubstituted placeholder: ") + p);
        }
    }
}

inline std::string zero_shot_prompt(const std::string& lang, const std::string& code)
{
    std::string out = replace_all(prompts::kZeroShotChat, "{lang}", lang);
    out = replace_all(out, "{code}", code);
    check_no_placeholders(out);
    return out;
}

inline std::string cause_analysis_prompt(const std::string& lang, const std::string& code)
{
    std::string out = replace_all(prompts::kCauseAnalysis, "{lang}", lang);
    out = replace_all(out, "{code}", code);
    check_no_placeholders(out);
    return out;
}

struct CasePayload {
    std::string vulnerable_code;
    std::string patch;
};

inline std::string case_list(const std::vector<CasePayload>& cases)
{
    std::string out;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        out += "\n## Case " + std::to_string(i + 1) + "\n### Vulnerable Code\n";
        out += cases[i].vulnerable_code;
        if (!cases[i].vulnerable_code.empty() && cases[i].vulnerable_code.back() != '\n') {
            out += '\n';
        }
        out += "\n### Security Patch\n";
        out += cases[i].patch;
        if (!cases[i].patch.empty() && cases[i].patch.back() != '\n') {
            out += '\n';
        }
    }
    return out;
}

inline std::string snippet_sections(const std::string& label,
                                    const std::vector<std::string>& snippets)
{
    std::string out;
    for (std::size_t i = 0; i < snippets.size(); ++i) {
        out += "\n# " + label + " " + std::to_string(i + 1) + "\n";
        out += snippets[i];
        if (!snippets[i].empty() && snippets[i].back() != '\n') {
            out += '\n';
        }
    }
    return out;
}

inline std::string guideline_extraction_prompt(const std::vector<CasePayload>& cases)
{
    return prompts::kGuidelineExtractionHeader + case_list(cases);
}

inline std::string guideline_merge_prompt(const std::vector<std::string>& snippets)
{
    return prompts::kGuidelineMergeHeader
           + snippet_sections("Extracted Guidelines", snippets);
}

inline std::string cause_extraction_prompt(const std::vector<CasePayload>& cases)
{
    return prompts::kCauseExtractionHeader + case_list(cases);
}

inline std::string cause_merge_prompt(const std::vector<std::string>& snippets)
{
    return prompts::kCauseMergeHeader + snippet_sections("Extracted Causes", snippets);
}

inline std::string augmented_prompt(bool chat_style, const std::string& guidelines,
                                    const std::string& example_language,
                                    const std::string& secure_code, const std::string& lang,
                                    const std::string& code)
{
    std::string out = chat_style ? prompts::kAugmentedChat : prompts::kAugmentedCompletion;
    out = replace_all(out, "{security_guidelines}", guidelines);
    out = replace_all(out, "{language}", example_language);
    out = replace_all(out, "{secure_code}", secure_code);
    out = replace_all(out, "{lang}", lang);
    out = replace_all(out, "{code}", code);
    check_no_placeholders(out);
    return out;
}

/// Pulls the body out of the first fenced code block; without fences the
/// trimmed text is returned as-is.
inline std::string strip_code_fence(const std::string& response)
{
    std::size_t open = response.find("```");
    if (open == std::string::npos) {
        std::string out = response;
        while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) {
            out.pop_back();
        }
        return out;
    }
    std::size_t body_start = response.find('\n', open);
    if (body_start == std::string::npos) {
        return "";
    }
    ++body_start;
    std::size_t close = response.find("```", body_start);
    std::string body = close == std::string::npos
                           ? response.substr(body_start)
                           : response.substr(body_start, close - body_start);
    while (!body.empty() && body.back() == '\n') {
        body.pop_back();
    }
    return body;
}

}  // namespace securekb
