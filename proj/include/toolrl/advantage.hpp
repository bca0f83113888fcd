#pragma once

// Group-relative advantage estimation: episode-level standard scores, per
// tool-group per-call standard scores with trajectory aggregation, composite
// weights, and online rollout filtering. All statistics are population
// moments over a single question's rollout group; zero-variance pools yield
// zero advantage.

#include <array>
#include <cmath>
#include <vector>

#include "toolrl/core.hpp"
#include "toolrl/rewards.hpp"

namespace toolrl::advantage {

struct GroupStats {
    double episode_mean = 0.0;
    double episode_stddev = 0.0;  // population
    std::array<double, kToolKindCount> tool_mean{};
    std::array<double, kToolKindCount> tool_stddev{};
    std::array<int, kToolKindCount> tool_call_count{};
};

namespace detail {

inline double population_stddev(const std::vector<double>& xs, double mean) {
    if (xs.empty()) return 0.0;
    double acc = 0.0;
    for (double x : xs) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(xs.size()));
}

inline double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double acc = 0.0;
    for (double x : xs) acc += x;
    return acc / static_cast<double>(xs.size());
}

}  // namespace detail

inline GroupStats group_stats(const RolloutGroup& group,
                              const std::vector<rewards::PerCallReward>& table) {
    GroupStats stats;
    std::vector<double> episode;
    episode.reserve(group.size());
    for (const auto& t : group.trajectories) {
        if (!t.rewards) throw std::invalid_argument("group_stats: trajectory missing reward");
        episode.push_back(t.rewards->total);
    }
    stats.episode_mean = detail::mean_of(episode);
    stats.episode_stddev = detail::population_stddev(episode, stats.episode_mean);

    std::array<std::vector<double>, kToolKindCount> pools;
    for (const auto& r : table) pools[static_cast<int>(r.tool)].push_back(r.reward);
    for (int k = 0; k < kToolKindCount; ++k) {
        stats.tool_call_count[k] = static_cast<int>(pools[k].size());
        stats.tool_mean[k] = detail::mean_of(pools[k]);
        stats.tool_stddev[k] = detail::population_stddev(pools[k], stats.tool_mean[k]);
    }
    return stats;
}

// ---------------------------------------------------------------------------

struct GrpoResult {
    std::vector<double> advantages;  // per trajectory
    bool degenerate = false;         // all episode rewards identical
};

inline GrpoResult grpo_advantages(const RolloutGroup& group) {
    if (group.size() < 2)
        throw std::invalid_argument("grpo_advantages: group needs at least two rollouts");
    std::vector<double> rewards_vec;
    rewards_vec.reserve(group.size());
    for (const auto& t : group.trajectories) {
        if (!t.rewards) throw std::invalid_argument("grpo_advantages: trajectory missing reward");
        rewards_vec.push_back(t.rewards->total);
    }
    double mean = detail::mean_of(rewards_vec);
    double sd = detail::population_stddev(rewards_vec, mean);
    GrpoResult out;
    out.advantages.resize(group.size(), 0.0);
    if (sd == 0.0) {
        out.degenerate = true;
        return out;
    }
    for (int i = 0; i < group.size(); ++i) out.advantages[i] = (rewards_vec[i] - mean) / sd;
    return out;
}

struct TagpoResult {
    // Per-call advantages grouped by trajectory, in call order.
    std::vector<std::vector<PerCallAdvantage>> per_call;
    std::vector<double> tagpo;  // per-trajectory mean; 0 for call-free trajectories
};

inline TagpoResult tagpo_advantages(const RolloutGroup& group, const rewards::RewardConfig& cfg) {
    auto table = rewards::per_call_rewards(group, cfg);
    GroupStats stats = group_stats(group, table);

    TagpoResult out;
    out.per_call.resize(group.size());
    out.tagpo.resize(group.size(), 0.0);
    std::vector<double> sums(group.size(), 0.0);
    std::vector<int> counts(group.size(), 0);
    for (const auto& r : table) {
        int k = static_cast<int>(r.tool);
        double adv = stats.tool_stddev[k] == 0.0
                         ? 0.0
                         : (r.reward - stats.tool_mean[k]) / stats.tool_stddev[k];
        out.per_call[r.trajectory_index].push_back({r.step_index, r.tool, adv});
        sums[r.trajectory_index] += adv;
        counts[r.trajectory_index] += 1;
    }
    for (int i = 0; i < group.size(); ++i)
        if (counts[i] > 0) out.tagpo[i] = sums[i] / counts[i];
    return out;
}

inline std::vector<double> composite_weights(const GrpoResult& grpo, const TagpoResult& tagpo) {
    std::vector<double> w(grpo.advantages.size(), 0.0);
    for (size_t i = 0; i < w.size(); ++i) w[i] = grpo.advantages[i] + tagpo.tagpo[i];
    return w;
}

// Computes both advantage sets and writes the breakdown into each trajectory.
inline void attach_advantages(RolloutGroup& group, const rewards::RewardConfig& cfg) {
    GrpoResult grpo = grpo_advantages(group);
    TagpoResult tagpo = tagpo_advantages(group, cfg);
    for (int i = 0; i < group.size(); ++i) {
        AdvantageBreakdown b;
        b.grpo = grpo.advantages[i];
        b.tagpo = tagpo.tagpo[i];
        b.per_call = tagpo.per_call[i];
        b.composite = b.grpo + b.tagpo;
        group.trajectories[i].advantage = b;
    }
}

// Online rollout filtering: groups whose episode rewards are all identical
// carry no learning signal and are dropped from the update.
inline bool is_degenerate(const RolloutGroup& group) {
    for (int i = 1; i < group.size(); ++i) {
        if (!group.trajectories[i].rewards || !group.trajectories[0].rewards)
            throw std::invalid_argument("is_degenerate: trajectory missing reward");
        if (group.trajectories[i].rewards->total != group.trajectories[0].rewards->total)
            return false;
    }
    return true;
}

inline std::vector<RolloutGroup> rollout_filter(std::vector<RolloutGroup> groups) {
    std::vector<RolloutGroup> retained;
    retained.reserve(groups.size());
    for (auto& g : groups)
        if (!is_degenerate(g)) retained.push_back(std::move(g));
    return retained;
}

}  // namespace toolrl::advantage
