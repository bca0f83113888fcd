#pragma once

// Multi-turn rollout engine over the sandbox, a tabular softmax policy, the
// composite-advantage policy update, and training/evaluation metrics.

#include <algorithm>
#include <array>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "toolrl/advantage.hpp"
#include "toolrl/core.hpp"
#include "toolrl/episode.hpp"
#include "toolrl/rewards.hpp"
#include "toolrl/rng.hpp"
#include "toolrl/sandbox.hpp"

namespace toolrl::trainer {

// Action heads the policy chooses among. Answer-choice selection is not
// learned: a visible answer is read off the observation, a blind one is a
// guess.
enum class Head { Answer = 0, Browse = 1, Segment = 2, Frame = 3, Zoom = 4 };
inline constexpr int kHeadCount = 5;

inline const char* head_name(Head h) {
    switch (h) {
        case Head::Answer: return "answer";
        case Head::Browse: return "browse";
        case Head::Segment: return "segment";
        case Head::Frame: return "frame";
        case Head::Zoom: return "zoom";
    }
    return "?";
}

inline Head head_from_name(const std::string& s) {
    for (int h = 0; h < kHeadCount; ++h)
        if (s == head_name(static_cast<Head>(h))) return static_cast<Head>(h);
    throw std::invalid_argument("unknown head: " + s);
}

using PolicyState = StateSnapshot;

enum class Algo { Grpo, Tagpo, Composite };

inline const char* algo_name(Algo a) {
    switch (a) {
        case Algo::Grpo: return "grpo";
        case Algo::Tagpo: return "tagpo";
        case Algo::Composite: return "composite";
    }
    return "?";
}

inline Algo algo_from_name(const std::string& s) {
    if (s == "grpo") return Algo::Grpo;
    if (s == "tagpo") return Algo::Tagpo;
    if (s == "composite") return Algo::Composite;
    throw std::invalid_argument("unknown algorithm selector: " + s);
}

struct TrainerConfig {
    int max_turns = 4;
    int rollouts = 8;  // N per question
    double learning_rate = 0.1;
    int steps = 200;
    int batch_size = 32;  // questions per step
    std::uint64_t seed = 1;
    double corruption_rate = 0.02;  // action-string noise between serialize and parse
    bool guess_mode = true;         // blind answers judged as 1/C guesses while training
    Algo algo = Algo::Composite;
    rewards::RewardConfig reward;
};

inline void validate(const TrainerConfig& c) {
    if (c.max_turns < 1) throw std::invalid_argument("trainer config: max_turns must be >= 1");
    if (c.rollouts < 2) throw std::invalid_argument("trainer config: rollouts must be >= 2");
    if (!(c.learning_rate > 0.0))
        throw std::invalid_argument("trainer config: learning_rate must be > 0");
    if (c.steps < 1) throw std::invalid_argument("trainer config: steps must be >= 1");
    if (c.batch_size < 1) throw std::invalid_argument("trainer config: batch_size must be >= 1");
    if (c.corruption_rate < 0.0 || c.corruption_rate > 1.0)
        throw std::invalid_argument("trainer config: corruption_rate must lie in [0, 1]");
    rewards::validate(c.reward);
}

// ---------------------------------------------------------------------------
// Policy table: softmax preferences over 2 x 5 x 2 x max_turns states.

class PolicyTable {
public:
    explicit PolicyTable(int max_turns = 4)
        : max_turns_(max_turns),
          theta_(static_cast<size_t>(state_count()) * kHeadCount, 0.0) {}

    int max_turns() const { return max_turns_; }
    int state_count() const { return 2 * kGranularityCount * 2 * max_turns_; }
    int parameter_count() const { return state_count() * kHeadCount; }

    int state_index(const PolicyState& s) const {
        int turn = std::clamp(s.turn_index, 0, max_turns_ - 1);
        return ((static_cast<int>(s.cue) * kGranularityCount + static_cast<int>(s.granularity)) * 2 +
                (s.evidence_visible ? 1 : 0)) *
                   max_turns_ +
               turn;
    }

    double preference(const PolicyState& s, int head) const {
        return theta_[static_cast<size_t>(state_index(s)) * kHeadCount + head];
    }
    double& preference(const PolicyState& s, int head) {
        return theta_[static_cast<size_t>(state_index(s)) * kHeadCount + head];
    }
    double& raw(int state, int head) {
        return theta_[static_cast<size_t>(state) * kHeadCount + head];
    }
    double raw(int state, int head) const {
        return theta_[static_cast<size_t>(state) * kHeadCount + head];
    }

    std::array<double, kHeadCount> probs(const PolicyState& s) const {
        return probs_at(state_index(s));
    }

    std::array<double, kHeadCount> probs_at(int state) const {
        std::array<double, kHeadCount> p{};
        double mx = raw(state, 0);
        for (int h = 1; h < kHeadCount; ++h) mx = std::max(mx, raw(state, h));
        double sum = 0.0;
        for (int h = 0; h < kHeadCount; ++h) {
            p[h] = std::exp(raw(state, h) - mx);
            sum += p[h];
        }
        for (auto& x : p) x /= sum;
        return p;
    }

    int sample_head(const PolicyState& s, Rng& rng) const {
        auto p = probs(s);
        double u = rng.uniform01();
        double acc = 0.0;
        for (int h = 0; h < kHeadCount; ++h) {
            acc += p[h];
            if (u < acc) return h;
        }
        return kHeadCount - 1;
    }

    // Plain-text persistence: one row per (state, head) preference.
    void save(std::ostream& out) const {
        out << "# policy table: cue granularity evidence_visible turn head preference\n";
        out << "max_turns " << max_turns_ << "\n";
        for (int cue = 0; cue < 2; ++cue)
            for (int g = 0; g < kGranularityCount; ++g)
                for (int vis = 0; vis < 2; ++vis)
                    for (int turn = 0; turn < max_turns_; ++turn)
                        for (int h = 0; h < kHeadCount; ++h) {
                            PolicyState s{static_cast<IntentCue>(cue), static_cast<Granularity>(g),
                                          vis == 1, turn};
                            char buf[40];
                            std::snprintf(buf, sizeof(buf), "%.17g", preference(s, h));
                            out << cue_name(s.cue) << ' ' << granularity_name(s.granularity) << ' '
                                << vis << ' ' << turn << ' ' << head_name(static_cast<Head>(h))
                                << ' ' << buf << "\n";
                        }
    }

    static PolicyTable load(std::istream& in) {
        std::string line;
        int max_turns = -1;
        PolicyTable table(4);
        bool sized = false;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::istringstream row(line);
            std::string first;
            row >> first;
            if (first == "max_turns") {
                row >> max_turns;
                if (max_turns < 1) throw std::invalid_argument("policy file: bad max_turns");
                table = PolicyTable(max_turns);
                sized = true;
                continue;
            }
            if (!sized) throw std::invalid_argument("policy file: missing max_turns header");
            std::string gran, head;
            int vis = 0, turn = 0;
            double value = 0.0;
            row >> gran >> vis >> turn >> head >> value;
            if (row.fail()) throw std::invalid_argument("policy file: malformed row: " + line);
            PolicyState s{cue_from_name(first), granularity_from_name(gran), vis == 1, turn};
            table.preference(s, static_cast<int>(head_from_name(head))) = value;
        }
        if (!sized) throw std::invalid_argument("policy file: empty");
        return table;
    }
};

// ---------------------------------------------------------------------------
// Action-string corruption noise, injected between serialize and parse to
// exercise the format reward end to end. Some corruptions are repairable,
// some are not.

inline std::string corrupt_action_string(const std::string& raw, Rng& rng) {
    switch (rng.uniform_int(5)) {
        case 0: return "```json\n" + raw + "\n```";
        case 1: {  // double -> single quotes
            std::string out = raw;
            for (auto& c : out)
                if (c == '"') c = '\'';
            return out;
        }
        case 2: {  // strip quotes around object keys
            std::string out;
            size_t i = 0;
            while (i < raw.size()) {
                if (raw[i] == '"') {
                    size_t close = raw.find('"', i + 1);
                    if (close != std::string::npos) {
                        size_t next = close + 1;
                        while (next < raw.size() &&
                               std::isspace(static_cast<unsigned char>(raw[next]))) ++next;
                        if (next < raw.size() && raw[next] == ':') {
                            out.append(raw, i + 1, close - i - 1);
                            i = close + 1;
                            continue;
                        }
                    }
                }
                out += raw[i++];
            }
            return out;
        }
        case 3: {  // trailing comma before a closing brace
            size_t pos = raw.rfind('}');
            if (pos == std::string::npos) return raw + " ";
            std::string out = raw;
            out.insert(pos, ",");
            return out;
        }
        default: {  // truncate somewhere in the tail
            size_t keep = raw.size() - 1 - rng.uniform_int(static_cast<int>(raw.size() / 3) + 1);
            return raw.substr(0, std::max<size_t>(keep, 1));
        }
    }
}

// ---------------------------------------------------------------------------
// Rollouts

inline AgentAction head_to_action(Head head, const sandbox::ObservationState& obs,
                                  const sandbox::VideoQuestion& vq, bool guess_mode, Rng& rng) {
    switch (head) {
        case Head::Answer: {
            int choice;
            if (obs.evidence_visible && obs.disclosed_choice) choice = *obs.disclosed_choice;
            else if (guess_mode) choice = rng.uniform_int(vq.question.choice_count);
            else choice = 0;
            return AnswerAction{choice};
        }
        case Head::Browse: return InvokeAction{ToolKind::Browse, {}};
        case Head::Segment:
            return InvokeAction{ToolKind::SegmentRetrieve, {vq.question.query_embedding}};
        case Head::Frame: return InvokeAction{ToolKind::FramePick, {}};
        case Head::Zoom: return InvokeAction{ToolKind::ZoomIn, {}};
    }
    return AnswerAction{0};
}

inline Trajectory run_episode(const PolicyTable& policy, const sandbox::VideoQuestion& vq,
                              const TrainerConfig& cfg, Rng& rng, std::string trajectory_id) {
    EpisodeDriver driver(vq, std::move(trajectory_id), cfg.max_turns, cfg.guess_mode);
    while (!driver.done()) {
        PolicyState state = driver.current_state();
        int head = policy.sample_head(state, rng);
        AgentAction action =
            head_to_action(static_cast<Head>(head), driver.obs(), vq, cfg.guess_mode, rng);
        std::string raw = toolparse::serialize(action);
        if (cfg.corruption_rate > 0.0 && rng.bernoulli(cfg.corruption_rate))
            raw = corrupt_action_string(raw, rng);
        driver.step(raw, head, rng);
    }
    Trajectory t = driver.finish();
    rewards::episode_reward(t, cfg.reward);
    return t;
}

// N independent episodes on the same question, each with its own substream.
inline RolloutGroup rollout_group(const PolicyTable& policy, const sandbox::VideoQuestion& vq,
                                  const TrainerConfig& cfg, std::uint64_t stream) {
    RolloutGroup group;
    group.question_id = vq.question.id;
    group.trajectories.reserve(cfg.rollouts);
    for (int i = 0; i < cfg.rollouts; ++i) {
        Rng rng(derive_seed(stream, hash_string(vq.question.id), static_cast<std::uint64_t>(i)));
        group.trajectories.push_back(
            run_episode(policy, vq, cfg, rng, vq.question.id + "-r" + std::to_string(i)));
    }
    return group;
}

inline double update_weight(const Trajectory& t, Algo algo) {
    if (!t.advantage) throw std::invalid_argument("update_weight: advantages not attached");
    switch (algo) {
        case Algo::Grpo: return t.advantage->grpo;
        case Algo::Tagpo: return t.advantage->tagpo;
        case Algo::Composite: return t.advantage->composite;
    }
    return 0.0;
}

// Synchronous batch update of the softmax preferences: the gradient is
// accumulated against the pre-update probabilities, then applied once. Every
// decision step of a trajectory shares the trajectory's weight.
inline void policy_update(PolicyTable& policy, const std::vector<RolloutGroup>& groups, double eta,
                          Algo algo) {
    std::vector<double> delta(static_cast<size_t>(policy.parameter_count()), 0.0);
    for (const auto& group : groups) {
        for (const auto& t : group.trajectories) {
            double w = update_weight(t, algo);
            if (w == 0.0) continue;
            for (const auto& turn : t.turns) {
                if (!turn.sampled_head) continue;
                int state = policy.state_index(turn.state);
                auto p = policy.probs_at(state);
                for (int h = 0; h < kHeadCount; ++h) {
                    double indicator = h == *turn.sampled_head ? 1.0 : 0.0;
                    delta[static_cast<size_t>(state) * kHeadCount + h] +=
                        eta * w * (indicator - p[h]);
                }
            }
        }
    }
    for (int s = 0; s < policy.state_count(); ++s)
        for (int h = 0; h < kHeadCount; ++h)
            policy.raw(s, h) += delta[static_cast<size_t>(s) * kHeadCount + h];
}

// ---------------------------------------------------------------------------
// Metrics

struct StepMetrics {
    int step = 0;
    double mean_reward = 0.0;
    double accuracy = 0.0;
    double format_quality = 0.0;
    double valid_tool_reward = 0.0;  // calls in correct trajectories / all calls
    double mean_tool_calls = 0.0;
    long long browse_calls = 0;
    long long segment_calls = 0;
    long long frame_calls = 0;
    long long zoom_calls = 0;
    double global_first_browse = 0.0;  // routing split by intent cue
    double local_first_segment = 0.0;
    double mean_abs_grpo = 0.0;
    double mean_abs_tagpo = 0.0;
    int retained_groups = 0;
    int filtered_groups = 0;
};

inline const char* metrics_csv_header() {
    return "step,mean_reward,accuracy,format_quality,valid_tool_reward,mean_tool_calls,"
           "browse_calls,segment_calls,frame_calls,zoom_calls,global_first_browse,"
           "local_first_segment,mean_abs_grpo,mean_abs_tagpo,retained_groups,filtered_groups";
}

inline std::string metrics_csv_row(const StepMetrics& m) {
    auto num = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    std::string row = std::to_string(m.step);
    for (double v : {m.mean_reward, m.accuracy, m.format_quality, m.valid_tool_reward,
                     m.mean_tool_calls})
        row += "," + num(v);
    for (long long v : {m.browse_calls, m.segment_calls, m.frame_calls, m.zoom_calls})
        row += "," + std::to_string(v);
    for (double v : {m.global_first_browse, m.local_first_segment, m.mean_abs_grpo,
                     m.mean_abs_tagpo})
        row += "," + num(v);
    row += "," + std::to_string(m.retained_groups) + "," + std::to_string(m.filtered_groups);
    return row;
}

inline StepMetrics metrics_from_csv_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (cells.size() != 16) throw std::invalid_argument("metrics row: wrong column count");
    StepMetrics m;
    int i = 0;
    m.step = std::stoi(cells[i++]);
    m.mean_reward = std::stod(cells[i++]);
    m.accuracy = std::stod(cells[i++]);
    m.format_quality = std::stod(cells[i++]);
    m.valid_tool_reward = std::stod(cells[i++]);
    m.mean_tool_calls = std::stod(cells[i++]);
    m.browse_calls = std::stoll(cells[i++]);
    m.segment_calls = std::stoll(cells[i++]);
    m.frame_calls = std::stoll(cells[i++]);
    m.zoom_calls = std::stoll(cells[i++]);
    m.global_first_browse = std::stod(cells[i++]);
    m.local_first_segment = std::stod(cells[i++]);
    m.mean_abs_grpo = std::stod(cells[i++]);
    m.mean_abs_tagpo = std::stod(cells[i++]);
    m.retained_groups = std::stoi(cells[i++]);
    m.filtered_groups = std::stoi(cells[i++]);
    return m;
}

inline Head first_head(const Trajectory& t) {
    if (!t.turns.empty() && t.turns.front().sampled_head)
        return static_cast<Head>(*t.turns.front().sampled_head);
    return Head::Answer;
}

inline StepMetrics compute_metrics(int step, const std::vector<RolloutGroup>& groups,
                                   const std::map<std::string, IntentCue>& cue_by_question) {
    StepMetrics m;
    m.step = step;
    long long episodes = 0, total_calls = 0, valid_calls = 0;
    long long global_eps = 0, global_browse = 0, local_eps = 0, local_segment = 0;
    std::vector<Trajectory> all;
    for (const auto& g : groups) {
        IntentCue cue = cue_by_question.at(g.question_id);
        for (const auto& t : g.trajectories) {
            ++episodes;
            m.mean_reward += t.rewards->total;
            m.accuracy += t.rewards->acc;
            total_calls += t.call_count();
            if (t.rewards->acc > 0) valid_calls += t.call_count();
            for (const auto& call : t.tool_calls) {
                switch (call.tool) {
                    case ToolKind::Browse: ++m.browse_calls; break;
                    case ToolKind::SegmentRetrieve: ++m.segment_calls; break;
                    case ToolKind::FramePick: ++m.frame_calls; break;
                    case ToolKind::ZoomIn: ++m.zoom_calls; break;
                }
            }
            Head first = first_head(t);
            if (cue == IntentCue::Global) {
                ++global_eps;
                if (first == Head::Browse) ++global_browse;
            } else {
                ++local_eps;
                if (first == Head::Segment) ++local_segment;
            }
            if (t.advantage) {
                m.mean_abs_grpo += std::abs(t.advantage->grpo);
                m.mean_abs_tagpo += std::abs(t.advantage->tagpo);
            }
            all.push_back(t);
        }
    }
    if (episodes > 0) {
        m.mean_reward /= episodes;
        m.accuracy /= episodes;
        m.mean_tool_calls = static_cast<double>(total_calls) / static_cast<double>(episodes);
        m.mean_abs_grpo /= episodes;
        m.mean_abs_tagpo /= episodes;
        m.format_quality = toolparse::format_quality(all);
    }
    m.valid_tool_reward =
        total_calls > 0 ? static_cast<double>(valid_calls) / static_cast<double>(total_calls) : 0.0;
    m.global_first_browse =
        global_eps > 0 ? static_cast<double>(global_browse) / static_cast<double>(global_eps) : 0.0;
    m.local_first_segment =
        local_eps > 0 ? static_cast<double>(local_segment) / static_cast<double>(local_eps) : 0.0;
    return m;
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainResult {
    std::vector<StepMetrics> metrics;
    PolicyTable policy{4};
};

inline TrainResult train(const TrainerConfig& cfg,
                         const std::vector<sandbox::VideoQuestion>& corpus) {
    validate(cfg);
    if (corpus.empty()) throw std::invalid_argument("train: corpus is empty");

    std::map<std::string, IntentCue> cue_by_question;
    for (const auto& vq : corpus) cue_by_question[vq.question.id] = vq.question.cue;

    TrainResult result;
    result.policy = PolicyTable(cfg.max_turns);
    result.metrics.reserve(cfg.steps);

    for (int step = 0; step < cfg.steps; ++step) {
        Rng batch_rng(derive_seed(cfg.seed, 0xba7c4ULL, static_cast<std::uint64_t>(step)));
        std::vector<RolloutGroup> groups;
        groups.reserve(cfg.batch_size);
        for (int b = 0; b < cfg.batch_size; ++b) {
            const auto& vq = corpus[batch_rng.uniform_int(static_cast<int>(corpus.size()))];
            std::uint64_t stream = derive_seed(cfg.seed, 0x9011ULL,
                                               static_cast<std::uint64_t>(step),
                                               static_cast<std::uint64_t>(b));
            groups.push_back(rollout_group(result.policy, vq, cfg, stream));
        }
        for (auto& g : groups) advantage::attach_advantages(g, cfg.reward);

        StepMetrics m = compute_metrics(step, groups, cue_by_question);
        auto retained = advantage::rollout_filter(std::move(groups));
        m.retained_groups = static_cast<int>(retained.size());
        m.filtered_groups = cfg.batch_size - m.retained_groups;
        result.metrics.push_back(m);

        policy_update(result.policy, retained, cfg.learning_rate, cfg.algo);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation: sampled rollouts with deterministic judging and no corruption.

struct EvalConfig {
    int rollouts_per_question = 4;
    int max_turns = 4;
    std::uint64_t seed = 77;
    rewards::RewardConfig reward;
};

struct EvalReport {
    double accuracy = 0.0;
    double format_quality = 0.0;
    double valid_tool_reward = 0.0;
    double mean_tool_calls = 0.0;
    // first-action counts: [cue][head]
    std::array<std::array<long long, kHeadCount>, 2> routing{};
    long long episodes = 0;
    // per evidence granularity: successful-episode count and their mean calls
    std::array<long long, sandbox::kEvidenceGranularityCount> success_count{};
    std::array<double, sandbox::kEvidenceGranularityCount> success_mean_calls{};
};

inline EvalReport evaluate(const PolicyTable& policy,
                           const std::vector<sandbox::VideoQuestion>& corpus,
                           const EvalConfig& cfg) {
    if (corpus.empty()) throw std::invalid_argument("evaluate: corpus is empty");
    TrainerConfig ep;
    ep.max_turns = cfg.max_turns;
    ep.guess_mode = false;
    ep.corruption_rate = 0.0;
    ep.reward = cfg.reward;

    EvalReport report;
    std::array<long long, sandbox::kEvidenceGranularityCount> success_calls{};
    std::vector<Trajectory> all;
    long long total_calls = 0, valid_calls = 0;
    for (size_t qi = 0; qi < corpus.size(); ++qi) {
        const auto& vq = corpus[qi];
        for (int r = 0; r < cfg.rollouts_per_question; ++r) {
            Rng rng(derive_seed(cfg.seed, 0xe7a1ULL, static_cast<std::uint64_t>(qi),
                                static_cast<std::uint64_t>(r)));
            Trajectory t = run_episode(policy, vq, ep, rng,
                                       vq.question.id + "-e" + std::to_string(r));
            ++report.episodes;
            report.accuracy += t.rewards->acc;
            report.mean_tool_calls += t.call_count();
            total_calls += t.call_count();
            if (t.rewards->acc > 0) valid_calls += t.call_count();
            report.routing[static_cast<int>(vq.question.cue)][static_cast<int>(first_head(t))]++;
            int g = static_cast<int>(vq.video.evidence.granularity);
            if (t.rewards->acc > 0) {
                report.success_count[g]++;
                success_calls[g] += t.call_count();
            }
            all.push_back(std::move(t));
        }
    }
    report.accuracy /= static_cast<double>(report.episodes);
    report.mean_tool_calls /= static_cast<double>(report.episodes);
    report.format_quality = toolparse::format_quality(all);
    report.valid_tool_reward =
        total_calls > 0 ? static_cast<double>(valid_calls) / static_cast<double>(total_calls) : 0.0;
    for (int g = 0; g < sandbox::kEvidenceGranularityCount; ++g)
        if (report.success_count[g] > 0)
            report.success_mean_calls[g] =
                static_cast<double>(success_calls[g]) / static_cast<double>(report.success_count[g]);
    return report;
}

}  // namespace toolrl::trainer
