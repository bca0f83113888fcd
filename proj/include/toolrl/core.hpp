#pragma once

// Shared domain types: trajectories, tool calls, rewards, advantages.
// Everything here is a plain value type; finalized records are immutable by
// convention and safe to share across workers.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace toolrl {

using Embedding = std::vector<double>;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Enumerations

enum class ToolKind { Browse = 0, SegmentRetrieve = 1, FramePick = 2, ZoomIn = 3 };
inline constexpr int kToolKindCount = 4;

enum class IntentCue { Global = 0, Local = 1 };

// Retrieval depth reached by an episode. The grounding chain goes
// SegmentSelected -> FrameSelected -> RegionSelected; Browsed is the global
// route's terminal stage.
enum class Granularity {
    Coarse = 0,
    Browsed = 1,
    SegmentSelected = 2,
    FrameSelected = 3,
    RegionSelected = 4
};
inline constexpr int kGranularityCount = 5;

inline const char* tool_name(ToolKind k) {
    switch (k) {
        case ToolKind::Browse: return "browse";
        case ToolKind::SegmentRetrieve: return "segment_retrieve";
        case ToolKind::FramePick: return "frame_pick";
        case ToolKind::ZoomIn: return "zoom_in";
    }
    return "?";
}

inline std::optional<ToolKind> tool_from_name(const std::string& name) {
    if (name == "browse") return ToolKind::Browse;
    if (name == "segment_retrieve") return ToolKind::SegmentRetrieve;
    if (name == "frame_pick") return ToolKind::FramePick;
    if (name == "zoom_in") return ToolKind::ZoomIn;
    return std::nullopt;
}

inline const char* cue_name(IntentCue c) { return c == IntentCue::Global ? "global" : "local"; }

inline IntentCue cue_from_name(const std::string& s) {
    if (s == "global") return IntentCue::Global;
    if (s == "local") return IntentCue::Local;
    throw std::invalid_argument("unknown intent cue: " + s);
}

inline const char* granularity_name(Granularity g) {
    switch (g) {
        case Granularity::Coarse: return "coarse";
        case Granularity::Browsed: return "browsed";
        case Granularity::SegmentSelected: return "segment";
        case Granularity::FrameSelected: return "frame";
        case Granularity::RegionSelected: return "region";
    }
    return "?";
}

inline Granularity granularity_from_name(const std::string& s) {
    if (s == "coarse") return Granularity::Coarse;
    if (s == "browsed") return Granularity::Browsed;
    if (s == "segment") return Granularity::SegmentSelected;
    if (s == "frame") return Granularity::FrameSelected;
    if (s == "region") return Granularity::RegionSelected;
    throw std::invalid_argument("unknown granularity: " + s);
}

// ---------------------------------------------------------------------------
// Actions

// Only segment retrieval carries arguments (the query embedding).
struct ToolArgs {
    std::optional<Embedding> query;
    bool operator==(const ToolArgs&) const = default;
};

struct AnswerAction {
    int choice = 0;
    bool operator==(const AnswerAction&) const = default;
};

struct InvokeAction {
    ToolKind tool = ToolKind::Browse;
    ToolArgs args;
    bool operator==(const InvokeAction&) const = default;
};

using AgentAction = std::variant<AnswerAction, InvokeAction>;

inline bool is_answer(const AgentAction& a) { return std::holds_alternative<AnswerAction>(a); }
inline bool is_invoke(const AgentAction& a) { return std::holds_alternative<InvokeAction>(a); }

// ---------------------------------------------------------------------------
// Episode records

// Environment feedback for one turn.
struct Observation {
    std::string id;
    bool ok = true;
    std::string error;  // "", "budget-exceeded", "chain-order-violation", "bad-query",
                        // "parse-error", "choice-out-of-range"
    bool redundant = false;
    Granularity granularity = Granularity::Coarse;
    std::optional<int> segment;
    std::optional<int> frame;
    std::optional<int> region;
    bool evidence_visible = false;
    std::optional<int> disclosed_choice;
    long long tokens_consumed = 0;
    bool operator==(const Observation&) const = default;
};

// Discretized environment state as seen by the policy, snapshotted per turn.
struct StateSnapshot {
    IntentCue cue = IntentCue::Global;
    Granularity granularity = Granularity::Coarse;
    bool evidence_visible = false;
    int turn_index = 0;
    bool operator==(const StateSnapshot&) const = default;
};

struct Turn {
    StateSnapshot state;
    std::string raw;  // the emitted action string, verbatim
    std::optional<AgentAction> action;  // absent when parsing failed even after repair
    std::optional<int> sampled_head;    // policy action-head id, when policy-driven
    std::vector<std::string> repair_passes;  // repair passes that fired on this turn
    Observation observation;
    bool operator==(const Turn&) const = default;
};

struct ToolCall {
    ToolKind tool = ToolKind::Browse;
    int step_index = 0;  // 1-based position within the trajectory's call sequence
    ToolArgs args;
    bool parse_valid = true;         // strict-parsed without repair
    bool precondition_valid = true;  // chain order and budget held
    std::string observation_id;
    bool operator==(const ToolCall&) const = default;
};

struct RewardBreakdown {
    int acc = 0;
    int fmt = 0;
    double tool_bonus = 0.0;
    double total = 0.0;
    bool operator==(const RewardBreakdown&) const = default;
};

struct PerCallAdvantage {
    int step_index = 0;
    ToolKind tool = ToolKind::Browse;
    double advantage = 0.0;
    bool operator==(const PerCallAdvantage&) const = default;
};

struct AdvantageBreakdown {
    double grpo = 0.0;
    double tagpo = 0.0;
    std::vector<PerCallAdvantage> per_call;
    double composite = 0.0;  // grpo + tagpo, exactly
    bool operator==(const AdvantageBreakdown&) const = default;
};

struct Trajectory {
    std::string id;
    std::string question_id;
    std::vector<Turn> turns;
    std::vector<ToolCall> tool_calls;
    std::optional<int> final_answer;
    bool truncated = false;
    int judged_acc = 0;  // sandbox judgment, fixed at finalization
    std::optional<RewardBreakdown> rewards;
    std::optional<AdvantageBreakdown> advantage;

    bool finalized() const { return final_answer.has_value() || truncated; }
    int call_count() const { return static_cast<int>(tool_calls.size()); }
    bool operator==(const Trajectory&) const = default;
};

struct RolloutGroup {
    std::string question_id;
    std::vector<Trajectory> trajectories;
    int size() const { return static_cast<int>(trajectories.size()); }
};

// ---------------------------------------------------------------------------
// Operations

struct TrajectorySummary {
    int turn_count = 0;
    int tool_call_count = 0;  // L
    std::array<int, kToolKindCount> per_tool{};
    double reward = 0.0;  // 0 when rewards not attached yet
    bool truncated = false;
    bool operator==(const TrajectorySummary&) const = default;
};

inline TrajectorySummary trajectory_summary(const Trajectory& t) {
    if (!t.finalized())
        throw std::invalid_argument("trajectory_summary: trajectory is not finalized");
    TrajectorySummary s;
    s.turn_count = static_cast<int>(t.turns.size());
    int invokes = 0;
    for (const auto& turn : t.turns)
        if (turn.action && is_invoke(*turn.action)) ++invokes;
    if (invokes != t.call_count())
        throw std::logic_error("trajectory_summary: tool-call list disagrees with turns");
    s.tool_call_count = invokes;
    for (const auto& call : t.tool_calls) s.per_tool[static_cast<int>(call.tool)]++;
    if (t.rewards) s.reward = t.rewards->total;
    s.truncated = t.truncated;
    return s;
}

// ---------------------------------------------------------------------------
// Record persistence: one self-describing JSON object per line. nlohmann
// emits shortest round-trip decimals, so numeric fields survive bit-exactly.

inline json to_json(const ToolArgs& a) {
    json j = json::object();
    if (a.query) j["query"] = *a.query;
    return j;
}

inline ToolArgs tool_args_from_json(const json& j) {
    ToolArgs a;
    if (j.contains("query")) a.query = j.at("query").get<Embedding>();
    return a;
}

inline json to_json(const AgentAction& a) {
    if (is_answer(a)) return json{{"answer", std::get<AnswerAction>(a).choice}};
    const auto& inv = std::get<InvokeAction>(a);
    return json{{"invoke", {{"tool", tool_name(inv.tool)}, {"args", to_json(inv.args)}}}};
}

inline AgentAction action_from_json(const json& j) {
    if (j.contains("answer")) return AnswerAction{j.at("answer").get<int>()};
    const auto& inv = j.at("invoke");
    auto kind = tool_from_name(inv.at("tool").get<std::string>());
    if (!kind) throw std::invalid_argument("action_from_json: unknown tool");
    return InvokeAction{*kind, tool_args_from_json(inv.at("args"))};
}

inline json to_json(const Observation& o) {
    json j{{"id", o.id},
           {"ok", o.ok},
           {"error", o.error},
           {"redundant", o.redundant},
           {"granularity", granularity_name(o.granularity)},
           {"evidence_visible", o.evidence_visible},
           {"tokens_consumed", o.tokens_consumed}};
    if (o.segment) j["segment"] = *o.segment;
    if (o.frame) j["frame"] = *o.frame;
    if (o.region) j["region"] = *o.region;
    if (o.disclosed_choice) j["disclosed_choice"] = *o.disclosed_choice;
    return j;
}

inline Observation observation_from_json(const json& j) {
    Observation o;
    o.id = j.at("id").get<std::string>();
    o.ok = j.at("ok").get<bool>();
    o.error = j.at("error").get<std::string>();
    o.redundant = j.at("redundant").get<bool>();
    o.granularity = granularity_from_name(j.at("granularity").get<std::string>());
    o.evidence_visible = j.at("evidence_visible").get<bool>();
    o.tokens_consumed = j.at("tokens_consumed").get<long long>();
    if (j.contains("segment")) o.segment = j.at("segment").get<int>();
    if (j.contains("frame")) o.frame = j.at("frame").get<int>();
    if (j.contains("region")) o.region = j.at("region").get<int>();
    if (j.contains("disclosed_choice")) o.disclosed_choice = j.at("disclosed_choice").get<int>();
    return o;
}

inline json to_json(const StateSnapshot& s) {
    return json{{"cue", cue_name(s.cue)},
                {"granularity", granularity_name(s.granularity)},
                {"evidence_visible", s.evidence_visible},
                {"turn_index", s.turn_index}};
}

inline StateSnapshot state_from_json(const json& j) {
    StateSnapshot s;
    s.cue = cue_from_name(j.at("cue").get<std::string>());
    s.granularity = granularity_from_name(j.at("granularity").get<std::string>());
    s.evidence_visible = j.at("evidence_visible").get<bool>();
    s.turn_index = j.at("turn_index").get<int>();
    return s;
}

inline json to_json(const Turn& t) {
    json j{{"state", to_json(t.state)}, {"raw", t.raw}, {"observation", to_json(t.observation)}};
    if (t.action) j["action"] = to_json(*t.action);
    if (t.sampled_head) j["sampled_head"] = *t.sampled_head;
    if (!t.repair_passes.empty()) j["repair_passes"] = t.repair_passes;
    return j;
}

inline Turn turn_from_json(const json& j) {
    Turn t;
    t.state = state_from_json(j.at("state"));
    t.raw = j.at("raw").get<std::string>();
    t.observation = observation_from_json(j.at("observation"));
    if (j.contains("action")) t.action = action_from_json(j.at("action"));
    if (j.contains("sampled_head")) t.sampled_head = j.at("sampled_head").get<int>();
    if (j.contains("repair_passes"))
        t.repair_passes = j.at("repair_passes").get<std::vector<std::string>>();
    return t;
}

inline json to_json(const ToolCall& c) {
    return json{{"tool", tool_name(c.tool)},
                {"step_index", c.step_index},
                {"args", to_json(c.args)},
                {"parse_valid", c.parse_valid},
                {"precondition_valid", c.precondition_valid},
                {"observation_id", c.observation_id}};
}

inline ToolCall tool_call_from_json(const json& j) {
    ToolCall c;
    auto kind = tool_from_name(j.at("tool").get<std::string>());
    if (!kind) throw std::invalid_argument("tool_call_from_json: unknown tool");
    c.tool = *kind;
    c.step_index = j.at("step_index").get<int>();
    c.args = tool_args_from_json(j.at("args"));
    c.parse_valid = j.at("parse_valid").get<bool>();
    c.precondition_valid = j.at("precondition_valid").get<bool>();
    c.observation_id = j.at("observation_id").get<std::string>();
    return c;
}

inline json to_json(const RewardBreakdown& r) {
    return json{{"acc", r.acc}, {"fmt", r.fmt}, {"tool_bonus", r.tool_bonus}, {"total", r.total}};
}

inline RewardBreakdown rewards_from_json(const json& j) {
    RewardBreakdown r;
    r.acc = j.at("acc").get<int>();
    r.fmt = j.at("fmt").get<int>();
    r.tool_bonus = j.at("tool_bonus").get<double>();
    r.total = j.at("total").get<double>();
    return r;
}

inline json to_json(const AdvantageBreakdown& a) {
    json per = json::array();
    for (const auto& c : a.per_call)
        per.push_back(json{{"step_index", c.step_index},
                           {"tool", tool_name(c.tool)},
                           {"advantage", c.advantage}});
    return json{{"grpo", a.grpo}, {"tagpo", a.tagpo}, {"per_call", per}, {"composite", a.composite}};
}

inline AdvantageBreakdown advantage_from_json(const json& j) {
    AdvantageBreakdown a;
    a.grpo = j.at("grpo").get<double>();
    a.tagpo = j.at("tagpo").get<double>();
    a.composite = j.at("composite").get<double>();
    for (const auto& c : j.at("per_call")) {
        PerCallAdvantage p;
        p.step_index = c.at("step_index").get<int>();
        p.tool = *tool_from_name(c.at("tool").get<std::string>());
        p.advantage = c.at("advantage").get<double>();
        a.per_call.push_back(p);
    }
    return a;
}

inline json to_json(const Trajectory& t) {
    json turns = json::array();
    for (const auto& turn : t.turns) turns.push_back(to_json(turn));
    json calls = json::array();
    for (const auto& call : t.tool_calls) calls.push_back(to_json(call));
    json j{{"id", t.id},
           {"question_id", t.question_id},
           {"turns", turns},
           {"tool_calls", calls},
           {"truncated", t.truncated},
           {"judged_acc", t.judged_acc}};
    if (t.final_answer) j["final_answer"] = *t.final_answer;
    if (t.rewards) j["rewards"] = to_json(*t.rewards);
    if (t.advantage) j["advantage"] = to_json(*t.advantage);
    return j;
}

inline Trajectory trajectory_from_json(const json& j) {
    Trajectory t;
    t.id = j.at("id").get<std::string>();
    t.question_id = j.at("question_id").get<std::string>();
    for (const auto& turn : j.at("turns")) t.turns.push_back(turn_from_json(turn));
    for (const auto& call : j.at("tool_calls")) t.tool_calls.push_back(tool_call_from_json(call));
    t.truncated = j.at("truncated").get<bool>();
    t.judged_acc = j.at("judged_acc").get<int>();
    if (j.contains("final_answer")) t.final_answer = j.at("final_answer").get<int>();
    if (j.contains("rewards")) t.rewards = rewards_from_json(j.at("rewards"));
    if (j.contains("advantage")) t.advantage = advantage_from_json(j.at("advantage"));
    return t;
}

inline std::string trajectory_to_line(const Trajectory& t) { return to_json(t).dump(); }

inline Trajectory trajectory_from_line(const std::string& line) {
    return trajectory_from_json(json::parse(line));
}

}  // namespace toolrl
