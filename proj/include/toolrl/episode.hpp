#pragma once

// Multi-turn episode driver: feeds raw action strings through parse -> repair
// -> execute, records turns and tool calls, and finalizes the trajectory at
// the answer or the turn cap. The trainer, the synthesis pipeline, and replay
// verification all run episodes through this one loop.

#include <string>
#include <utility>

#include "toolrl/core.hpp"
#include "toolrl/rng.hpp"
#include "toolrl/sandbox.hpp"
#include "toolrl/toolkit.hpp"
#include "toolrl/toolparse.hpp"

namespace toolrl {

class EpisodeDriver {
public:
    EpisodeDriver(const sandbox::VideoQuestion& vq, std::string trajectory_id, int max_turns,
                  bool guess_mode)
        : vq_(vq), max_turns_(max_turns), guess_mode_(guess_mode) {
        trajectory_.id = std::move(trajectory_id);
        trajectory_.question_id = vq.question.id;
    }

    const sandbox::ObservationState& obs() const { return obs_; }
    const toolkit::BudgetLedger& ledger() const { return ledger_; }
    int turn_index() const { return static_cast<int>(trajectory_.turns.size()); }
    bool done() const { return answered_ || turn_index() >= max_turns_; }

    StateSnapshot current_state() const {
        StateSnapshot s;
        s.cue = vq_.question.cue;
        s.granularity = obs_.granularity;
        s.evidence_visible = obs_.evidence_visible;
        s.turn_index = turn_index();
        return s;
    }

    struct StepResult {
        toolparse::ParseOutcome outcome;
        Observation observation;
        bool answered = false;
    };

    // Consumes one emitted action string. judge_rng is only drawn from in
    // guess mode on a blind answer.
    StepResult step(const std::string& raw, std::optional<int> sampled_head, Rng& judge_rng) {
        if (done()) throw std::logic_error("EpisodeDriver::step on a finished episode");
        obs_.turn_index = turn_index();

        Turn turn;
        turn.state = current_state();
        turn.raw = raw;
        turn.sampled_head = sampled_head;

        StepResult result;
        result.outcome = toolparse::parse_with_repair(raw);
        turn.repair_passes = result.outcome.passes;
        std::string obs_id = "obs-" + std::to_string(turn_index());

        if (!result.outcome.ok()) {
            Observation o = toolkit::detail::snapshot(obs_, obs_id, toolkit::ToolError::None);
            o.ok = false;
            o.error = "parse-error";
            turn.observation = o;
            result.observation = std::move(o);
            trajectory_.turns.push_back(std::move(turn));
            return result;
        }

        const AgentAction& action = result.outcome.action;
        turn.action = action;
        if (is_invoke(action)) {
            const auto& inv = std::get<InvokeAction>(action);
            toolkit::ToolResult tr = toolkit::execute_tool(inv.tool, vq_.video, vq_.question,
                                                           inv.args, obs_, ledger_, obs_id);
            ToolCall call;
            call.tool = inv.tool;
            call.step_index = trajectory_.call_count() + 1;
            call.args = inv.args;
            call.parse_valid = result.outcome.status == toolparse::ParseStatus::Parsed;
            call.precondition_valid = tr.ok;
            call.observation_id = obs_id;
            trajectory_.tool_calls.push_back(std::move(call));
            turn.observation = tr.observation;
            result.observation = std::move(tr.observation);
            trajectory_.turns.push_back(std::move(turn));
            return result;
        }

        // Answer: finalize.
        int choice = std::get<AnswerAction>(action).choice;
        Observation o = toolkit::detail::snapshot(obs_, obs_id, toolkit::ToolError::None);
        if (choice < 0 || choice >= vq_.question.choice_count) {
            o.ok = false;
            o.error = "choice-out-of-range";
            trajectory_.judged_acc = 0;
        } else {
            trajectory_.judged_acc = sandbox::judge_answer(vq_.question, vq_.video.evidence, choice,
                                                           obs_, guess_mode_, judge_rng);
        }
        trajectory_.final_answer = choice;
        answered_ = true;
        result.answered = true;
        turn.observation = o;
        result.observation = std::move(o);
        trajectory_.turns.push_back(std::move(turn));
        return result;
    }

    // Marks the trajectory truncated if the turn cap was hit without an
    // answer. Truncated episodes carry no final answer and acc = 0.
    Trajectory finish() {
        if (!answered_) {
            trajectory_.truncated = true;
            trajectory_.judged_acc = 0;
        }
        return std::move(trajectory_);
    }

private:
    const sandbox::VideoQuestion& vq_;
    int max_turns_;
    bool guess_mode_;
    sandbox::ObservationState obs_;
    toolkit::BudgetLedger ledger_;
    Trajectory trajectory_;
    bool answered_ = false;
};

}  // namespace toolrl
