#pragma once

// Episode-level reward (accuracy + format + gated tool bonus) and per-call
// tool rewards (success-gated, decayed by distance from the final answer).

#include <cmath>
#include <vector>

#include "toolrl/core.hpp"
#include "toolrl/toolparse.hpp"

namespace toolrl::rewards {

struct RewardConfig {
    double tool_bonus_value = 0.5;
    double gamma = 0.9;  // per-call decay, in (0, 1]
    bool accept_repaired_format = true;  // format reward tolerates repaired strings
    double acc_weight = 1.0;
    double fmt_weight = 1.0;
};

inline void validate(const RewardConfig& c) {
    if (!(c.gamma > 0.0 && c.gamma <= 1.0))
        throw std::invalid_argument("reward config: gamma must lie in (0, 1]");
    if (c.tool_bonus_value < 0.0)
        throw std::invalid_argument("reward config: tool_bonus_value must be >= 0");
    if (c.acc_weight < 0.0 || c.fmt_weight < 0.0)
        throw std::invalid_argument("reward config: component weights must be >= 0");
}

// R = acc + fmt + [acc > 0] * bonus; the bonus is also zero for call-free
// trajectories.
inline RewardBreakdown compose_reward(int acc, int fmt, int tool_call_count,
                                      const RewardConfig& cfg) {
    RewardBreakdown r;
    r.acc = acc;
    r.fmt = fmt;
    r.tool_bonus = (acc > 0 && tool_call_count >= 1) ? cfg.tool_bonus_value : 0.0;
    r.total = cfg.acc_weight * acc + cfg.fmt_weight * fmt + r.tool_bonus;
    return r;
}

// 1 iff every emitted string in the episode is acceptable under the config.
// Evaluated on truncated episodes too.
inline int format_flag(const Trajectory& t, const RewardConfig& cfg) {
    for (const auto& turn : t.turns) {
        auto outcome = toolparse::parse_with_repair(turn.raw);
        if (outcome.status == toolparse::ParseStatus::Parsed) continue;
        if (outcome.status == toolparse::ParseStatus::Repaired && cfg.accept_repaired_format)
            continue;
        return 0;
    }
    return 1;
}

inline RewardBreakdown episode_reward(Trajectory& t, const RewardConfig& cfg) {
    if (!t.finalized()) throw std::invalid_argument("episode_reward: trajectory not finalized");
    RewardBreakdown r = compose_reward(t.judged_acc, format_flag(t, cfg), t.call_count(), cfg);
    t.rewards = r;
    return r;
}

// ---------------------------------------------------------------------------
// Per-call rewards: R^k_{i,j} = [acc_i > 0] * gamma^(L_i - j) * R_i. Failed
// trajectories contribute all-zero rewards; every call appears exactly once.

struct PerCallReward {
    int trajectory_index = 0;
    int step_index = 0;
    ToolKind tool = ToolKind::Browse;
    double reward = 0.0;
};

inline std::vector<PerCallReward> per_call_rewards(const RolloutGroup& group,
                                                   const RewardConfig& cfg) {
    validate(cfg);
    std::vector<PerCallReward> table;
    for (int i = 0; i < group.size(); ++i) {
        const Trajectory& t = group.trajectories[i];
        if (!t.rewards)
            throw std::invalid_argument("per_call_rewards: trajectory missing episode reward");
        const int calls = t.call_count();
        for (const auto& call : t.tool_calls) {
            PerCallReward r;
            r.trajectory_index = i;
            r.step_index = call.step_index;
            r.tool = call.tool;
            r.reward = t.rewards->acc > 0
                           ? std::pow(cfg.gamma, calls - call.step_index) * t.rewards->total
                           : 0.0;
            table.push_back(r);
        }
    }
    return table;
}

}  // namespace toolrl::rewards
