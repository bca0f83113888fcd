#include <catch2/catch_amalgamated.hpp>

#include "toolrl/core.hpp"
#include "toolrl/rng.hpp"

using namespace toolrl;

namespace {

Turn make_turn(AgentAction action, int turn_index) {
    Turn t;
    t.state.cue = IntentCue::Local;
    t.state.turn_index = turn_index;
    t.raw = "<answer>0</answer>";
    t.action = action;
    t.observation.id = "obs-" + std::to_string(turn_index);
    return t;
}

Trajectory make_trajectory(const std::vector<AgentAction>& actions, bool truncated) {
    Trajectory t;
    t.id = "t0";
    t.question_id = "q0";
    int step = 0;
    for (size_t i = 0; i < actions.size(); ++i) {
        t.turns.push_back(make_turn(actions[i], static_cast<int>(i)));
        if (is_invoke(actions[i])) {
            ToolCall call;
            call.tool = std::get<InvokeAction>(actions[i]).tool;
            call.step_index = ++step;
            call.observation_id = t.turns.back().observation.id;
            t.tool_calls.push_back(call);
        } else {
            t.final_answer = std::get<AnswerAction>(actions[i]).choice;
        }
    }
    t.truncated = truncated;
    return t;
}

Trajectory random_trajectory(Rng& rng) {
    Trajectory t;
    t.id = "t" + std::to_string(rng.uniform_int(1000));
    t.question_id = "q" + std::to_string(rng.uniform_int(1000));
    int turns = 1 + rng.uniform_int(4);
    int step = 0;
    for (int i = 0; i < turns; ++i) {
        Turn turn;
        turn.state.cue = rng.bernoulli(0.5) ? IntentCue::Global : IntentCue::Local;
        turn.state.granularity = static_cast<Granularity>(rng.uniform_int(kGranularityCount));
        turn.state.evidence_visible = rng.bernoulli(0.3);
        turn.state.turn_index = i;
        turn.raw = "<tool_call>{\"name\": \"browse\", \"arguments\": {}}</tool_call>";
        turn.sampled_head = rng.uniform_int(5);
        if (rng.bernoulli(0.2)) turn.repair_passes = {"quote-normalize"};
        turn.observation.id = "obs-" + std::to_string(i);
        turn.observation.tokens_consumed = rng.uniform_int(1961);
        turn.observation.evidence_visible = turn.state.evidence_visible;
        if (rng.bernoulli(0.5)) turn.observation.segment = rng.uniform_int(8);
        bool last = i == turns - 1;
        if (!last || rng.bernoulli(0.7)) {
            InvokeAction inv;
            inv.tool = static_cast<ToolKind>(rng.uniform_int(kToolKindCount));
            if (inv.tool == ToolKind::SegmentRetrieve) {
                Embedding q(16);
                for (auto& x : q) x = rng.normal();
                inv.args.query = q;
            }
            turn.action = inv;
            ToolCall call;
            call.tool = inv.tool;
            call.step_index = ++step;
            call.args = inv.args;
            call.parse_valid = rng.bernoulli(0.9);
            call.precondition_valid = rng.bernoulli(0.9);
            call.observation_id = turn.observation.id;
            t.tool_calls.push_back(call);
        } else {
            int choice = rng.uniform_int(4);
            turn.action = AnswerAction{choice};
            t.final_answer = choice;
        }
        t.turns.push_back(std::move(turn));
    }
    if (!t.final_answer) t.truncated = true;
    t.judged_acc = rng.bernoulli(0.5) ? 1 : 0;
    RewardBreakdown r;
    r.acc = t.judged_acc;
    r.fmt = 1;
    r.tool_bonus = r.acc && !t.tool_calls.empty() ? 0.5 : 0.0;
    r.total = r.acc + r.fmt + r.tool_bonus;
    t.rewards = r;
    if (rng.bernoulli(0.6)) {
        AdvantageBreakdown a;
        a.grpo = rng.normal();
        a.tagpo = rng.normal();
        for (const auto& call : t.tool_calls)
            a.per_call.push_back({call.step_index, call.tool, rng.normal()});
        a.composite = a.grpo + a.tagpo;
        t.advantage = a;
    }
    return t;
}

}  // namespace

TEST_CASE("trajectory summary counts turns and calls", "[core]") {
    auto t = make_trajectory({InvokeAction{ToolKind::SegmentRetrieve, {}},
                              InvokeAction{ToolKind::FramePick, {}}, AnswerAction{1}},
                             false);
    auto s = trajectory_summary(t);
    CHECK(s.tool_call_count == 2);
    CHECK(s.turn_count == 3);
    CHECK(s.per_tool[static_cast<int>(ToolKind::SegmentRetrieve)] == 1);
    CHECK(s.per_tool[static_cast<int>(ToolKind::FramePick)] == 1);
    CHECK_FALSE(s.truncated);
}

TEST_CASE("trajectory summary handles the no-tool episode", "[core]") {
    auto t = make_trajectory({AnswerAction{2}}, false);
    auto s = trajectory_summary(t);
    CHECK(s.tool_call_count == 0);
    CHECK(s.turn_count == 1);
}

TEST_CASE("trajectory summary on a truncated four-invoke episode", "[core]") {
    // Hand enumeration of the 4-turn cap: four invokes, no answer.
    auto t = make_trajectory({InvokeAction{ToolKind::Browse, {}}, InvokeAction{ToolKind::Browse, {}},
                              InvokeAction{ToolKind::SegmentRetrieve, {}},
                              InvokeAction{ToolKind::FramePick, {}}},
                             true);
    auto s = trajectory_summary(t);
    CHECK(s.tool_call_count == 4);
    CHECK(s.turn_count == 4);
    CHECK(s.truncated);
    CHECK_FALSE(t.final_answer.has_value());
}

TEST_CASE("trajectory summary rejects non-finalized trajectories", "[core]") {
    Trajectory t;
    t.id = "t";
    CHECK_THROWS_AS(trajectory_summary(t), std::invalid_argument);
}

TEST_CASE("L equals the count of invoke actions for finalized trajectories", "[core]") {
    Rng rng(11);
    for (int i = 0; i < 100; ++i) {
        auto t = random_trajectory(rng);
        int invokes = 0;
        for (const auto& turn : t.turns)
            if (turn.action && is_invoke(*turn.action)) ++invokes;
        CHECK(t.call_count() == invokes);
    }
}

TEST_CASE("trajectory records round-trip bit-exactly", "[core]") {
    Rng rng(42);
    for (int i = 0; i < 200; ++i) {
        Trajectory t = random_trajectory(rng);
        std::string line = trajectory_to_line(t);
        CHECK(line.find('\n') == std::string::npos);
        Trajectory back = trajectory_from_line(line);
        REQUIRE(back == t);
        // re-serialization is byte-identical
        CHECK(trajectory_to_line(back) == line);
    }
}

TEST_CASE("composite weight is the exact sum of components", "[core]") {
    Rng rng(7);
    for (int i = 0; i < 50; ++i) {
        auto t = random_trajectory(rng);
        if (!t.advantage) continue;
        CHECK(t.advantage->composite == t.advantage->grpo + t.advantage->tagpo);
    }
}
