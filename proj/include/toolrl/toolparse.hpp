#pragma once

// Tool-call wire format: serializer, strict parser, repair passes for
// malformed strings, and the strict format-quality metric.
//
// Grammar (the whole string, nothing around it):
//   <tool_call>{"name": "<tool>", "arguments": {...}}</tool_call>
//   <answer>K</answer>                  (K = non-negative choice index)
// Arguments are {} for browse/frame_pick/zoom_in and {"query": [decimals]}
// for segment_retrieve.

#include <cctype>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "toolrl/core.hpp"

namespace toolrl::toolparse {

enum class ParseStatus { Parsed, Repaired, Failed };

struct ParseOutcome {
    ParseStatus status = ParseStatus::Failed;
    AgentAction action = AnswerAction{0};
    std::vector<std::string> passes;  // repair passes that changed the string
    std::string reason;               // first violation when Failed

    bool ok() const { return status != ParseStatus::Failed; }
};

// ---------------------------------------------------------------------------
// Serialization

inline std::string serialize(const AgentAction& action) {
    if (is_answer(action))
        return "<answer>" + std::to_string(std::get<AnswerAction>(action).choice) + "</answer>";
    const auto& inv = std::get<InvokeAction>(action);
    std::string args = "{}";
    if (inv.tool == ToolKind::SegmentRetrieve) {
        const Embedding& q = inv.args.query ? *inv.args.query : Embedding{};
        args = "{\"query\": " + json(q).dump() + "}";
    }
    return std::string("<tool_call>{\"name\": \"") + tool_name(inv.tool) +
           "\", \"arguments\": " + args + "}</tool_call>";
}

// ---------------------------------------------------------------------------
// Strict parsing

namespace detail {

inline bool scan_in_string(std::string_view s, size_t upto) {
    // Whether position `upto` falls inside a double-quoted JSON string.
    bool in = false;
    for (size_t i = 0; i < upto && i < s.size(); ++i) {
        char c = s[i];
        if (in) {
            if (c == '\\') ++i;
            else if (c == '"') in = false;
        } else if (c == '"') {
            in = true;
        }
    }
    return in;
}

inline bool has_trailing_comma(std::string_view body) {
    bool in = false;
    for (size_t i = 0; i < body.size(); ++i) {
        char c = body[i];
        if (in) {
            if (c == '\\') ++i;
            else if (c == '"') in = false;
            continue;
        }
        if (c == '"') { in = true; continue; }
        if (c == ',') {
            size_t j = i + 1;
            while (j < body.size() && std::isspace(static_cast<unsigned char>(body[j]))) ++j;
            if (j < body.size() && (body[j] == '}' || body[j] == ']')) return true;
        }
    }
    return false;
}

inline ParseOutcome fail(std::string reason) {
    ParseOutcome o;
    o.status = ParseStatus::Failed;
    o.reason = std::move(reason);
    return o;
}

inline ParseOutcome parsed(AgentAction a) {
    ParseOutcome o;
    o.status = ParseStatus::Parsed;
    o.action = std::move(a);
    return o;
}

}  // namespace detail

inline ParseOutcome parse_strict(std::string_view s) {
    using detail::fail;
    constexpr std::string_view kToolOpen = "<tool_call>";
    constexpr std::string_view kToolClose = "</tool_call>";
    constexpr std::string_view kAnsOpen = "<answer>";
    constexpr std::string_view kAnsClose = "</answer>";

    if (s.starts_with(kAnsOpen)) {
        size_t close = s.find(kAnsClose);
        if (close == std::string_view::npos) return fail("missing-close-tag");
        if (close + kAnsClose.size() != s.size()) return fail("trailing-text");
        std::string_view body = s.substr(kAnsOpen.size(), close - kAnsOpen.size());
        if (body.empty()) return fail("bad-answer-body");
        for (char c : body)
            if (!std::isdigit(static_cast<unsigned char>(c))) return fail("bad-answer-body");
        if (body.size() > 9) return fail("bad-answer-body");
        int choice = 0;
        for (char c : body) choice = choice * 10 + (c - '0');
        return detail::parsed(AnswerAction{choice});
    }

    if (s.starts_with(kToolOpen)) {
        size_t close = s.find(kToolClose);
        if (close == std::string_view::npos) return fail("missing-close-tag");
        if (close + kToolClose.size() != s.size()) return fail("trailing-text");
        std::string_view body = s.substr(kToolOpen.size(), close - kToolOpen.size());

        json j = json::parse(body, nullptr, /*allow_exceptions=*/false);
        if (j.is_discarded()) {
            if (detail::has_trailing_comma(body)) return fail("trailing-comma");
            return fail("invalid-json");
        }
        if (!j.is_object()) return fail("not-an-object");
        if (!j.contains("name")) return fail("missing-name");
        if (!j.contains("arguments")) return fail("missing-arguments");
        for (const auto& [key, value] : j.items())
            if (key != "name" && key != "arguments") return fail("unexpected-key");
        if (!j["name"].is_string()) return fail("unknown-tool");
        auto kind = tool_from_name(j["name"].get<std::string>());
        if (!kind) return fail("unknown-tool");
        const json& args = j["arguments"];
        if (!args.is_object()) return fail("bad-arguments");

        InvokeAction inv;
        inv.tool = *kind;
        if (*kind == ToolKind::SegmentRetrieve) {
            if (args.size() != 1 || !args.contains("query")) return fail("bad-arguments");
            const json& q = args["query"];
            if (!q.is_array() || q.empty()) return fail("bad-arguments");
            Embedding vec;
            vec.reserve(q.size());
            for (const auto& v : q) {
                if (!v.is_number()) return fail("bad-arguments");
                vec.push_back(v.get<double>());
            }
            inv.args.query = std::move(vec);
        } else {
            if (!args.empty()) return fail("bad-arguments");
        }
        return detail::parsed(AgentAction{inv});
    }

    if (s.find(kToolOpen) != std::string_view::npos || s.find(kAnsOpen) != std::string_view::npos)
        return fail("leading-text");
    return fail("no-tag");
}

// ---------------------------------------------------------------------------
// Repair passes. Applied cumulatively, in this fixed order; the first prefix
// after which strict parsing succeeds wins.

namespace repair {

inline std::string strip_fence(const std::string& s) {
    auto trim = [](std::string text) {
        size_t b = text.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return std::string();
        size_t e = text.find_last_not_of(" \t\r\n");
        return text.substr(b, e - b + 1);
    };
    std::string out = trim(s);
    if (out.starts_with("```")) {
        size_t nl = out.find('\n');
        out = (nl == std::string::npos) ? out.substr(3) : out.substr(nl + 1);
        size_t fence = out.rfind("```");
        if (fence != std::string::npos) out = out.substr(0, fence);
        out = trim(out);
    }
    return out;
}

inline std::string quote_normalize(const std::string& s) {
    // Single-quoted strings become double-quoted; content of existing
    // double-quoted strings is left untouched.
    std::string out;
    out.reserve(s.size());
    bool in_double = false, in_single = false;
    for (size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (in_double) {
            out += c;
            if (c == '\\' && i + 1 < s.size()) { out += s[++i]; }
            else if (c == '"') in_double = false;
            continue;
        }
        if (in_single) {
            if (c == '\\' && i + 1 < s.size() && s[i + 1] == '\'') { out += '\''; ++i; }
            else if (c == '\'') { out += '"'; in_single = false; }
            else if (c == '"') { out += "\\\""; }
            else out += c;
            continue;
        }
        if (c == '"') { in_double = true; out += c; }
        else if (c == '\'') { in_single = true; out += '"'; }
        else out += c;
    }
    return out;
}

inline std::string quote_keys(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool in_string = false;
    std::vector<char> stack;
    char last_structural = 0;
    for (size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (in_string) {
            out += c;
            if (c == '\\' && i + 1 < s.size()) out += s[++i];
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') { in_string = true; out += c; continue; }
        if (c == '{' || c == '[') { stack.push_back(c); last_structural = c; out += c; continue; }
        if (c == '}' || c == ']') { if (!stack.empty()) stack.pop_back(); last_structural = c; out += c; continue; }
        if (c == ',' || c == ':') { last_structural = c; out += c; continue; }
        bool in_object = !stack.empty() && stack.back() == '{';
        bool key_position = in_object && (last_structural == '{' || last_structural == ',');
        if (key_position && (std::isalpha(static_cast<unsigned char>(c)) || c == '_')) {
            size_t j = i;
            while (j < s.size() &&
                   (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
            size_t k = j;
            while (k < s.size() && std::isspace(static_cast<unsigned char>(s[k]))) ++k;
            if (k < s.size() && s[k] == ':') {
                out += '"';
                out.append(s, i, j - i);
                out += '"';
                i = j - 1;
                last_structural = 0;
                continue;
            }
        }
        out += c;
    }
    return out;
}

inline std::string strip_trailing_comma(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool in_string = false;
    for (size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (in_string) {
            out += c;
            if (c == '\\' && i + 1 < s.size()) out += s[++i];
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') { in_string = true; out += c; continue; }
        if (c == ',') {
            size_t j = i + 1;
            while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
            if (j < s.size() && (s[j] == '}' || s[j] == ']')) continue;  // drop it
        }
        out += c;
    }
    return out;
}

inline std::string balance_delims(const std::string& s) {
    std::string out = s;
    // Close an unterminated string first, then unbalanced braces/brackets,
    // then the missing close tag.
    bool in_string = false;
    std::vector<char> stack;
    for (size_t i = 0; i < out.size(); ++i) {
        char c = out[i];
        if (in_string) {
            if (c == '\\') ++i;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{' || c == '[') stack.push_back(c);
        else if (c == '}' || c == ']') { if (!stack.empty()) stack.pop_back(); }
    }
    if (in_string) {
        if (!out.empty() && out.back() == '\\') out.pop_back();
        out += '"';
    }
    for (auto it = stack.rbegin(); it != stack.rend(); ++it) out += (*it == '{') ? '}' : ']';
    if (out.find("<tool_call>") != std::string::npos &&
        out.find("</tool_call>") == std::string::npos)
        out += "</tool_call>";
    if (out.find("<answer>") != std::string::npos && out.find("</answer>") == std::string::npos)
        out += "</answer>";
    return out;
}

struct Pass {
    const char* name;
    std::string (*fn)(const std::string&);
};

inline std::span<const Pass> passes() {
    static const Pass table[] = {
        {"strip-fence", &strip_fence},
        {"quote-normalize", &quote_normalize},
        {"quote-keys", &quote_keys},
        {"strip-trailing-comma", &strip_trailing_comma},
        {"balance-delims", &balance_delims},
    };
    return table;
}

}  // namespace repair

inline ParseOutcome parse_with_repair(std::string_view s) {
    ParseOutcome strict = parse_strict(s);
    if (strict.ok()) return strict;

    std::string cur(s);
    std::vector<std::string> applied;
    std::string last_reason = strict.reason;
    for (const auto& pass : repair::passes()) {
        std::string next = pass.fn(cur);
        if (next == cur) continue;
        cur = std::move(next);
        applied.push_back(pass.name);
        ParseOutcome attempt = parse_strict(cur);
        if (attempt.ok()) {
            attempt.status = ParseStatus::Repaired;
            attempt.passes = applied;
            return attempt;
        }
        last_reason = attempt.reason;
    }
    ParseOutcome out = detail::fail(last_reason);
    out.passes = applied;
    return out;
}

// ---------------------------------------------------------------------------
// Format quality: fraction of episodes whose every action string parses
// strictly. Repairs do not count.

inline double format_quality(std::span<const Trajectory> episodes) {
    if (episodes.empty())
        throw std::invalid_argument("format_quality: empty episode list");
    int clean = 0;
    for (const auto& t : episodes) {
        bool all_strict = true;
        for (const auto& turn : t.turns)
            if (parse_strict(turn.raw).status != ParseStatus::Parsed) { all_strict = false; break; }
        if (all_strict) ++clean;
    }
    return static_cast<double>(clean) / static_cast<double>(episodes.size());
}

}  // namespace toolrl::toolparse
