#pragma once

// Five-stage sandbox trajectory synthesis: tool-necessity filtering, tool
// order prediction, system-prompt rewriting, stepwise trajectory generation,
// and adjudication, followed by difficulty-band curation. The pipeline is a
// pure function of (corpus, client script, seed) under the mock client.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "toolrl/core.hpp"
#include "toolrl/episode.hpp"
#include "toolrl/model_client.hpp"
#include "toolrl/rewards.hpp"
#include "toolrl/sandbox.hpp"
#include "toolrl/toolparse.hpp"

namespace toolrl::synth {

struct SynthConfig {
    int retry_cap = 2;          // attempts per client-dependent request
    int candidates_per_item = 3;
    int curation_trials = 10;
    int max_turns = 4;
    rewards::RewardConfig reward;
};

inline void validate(const SynthConfig& c) {
    if (c.retry_cap < 1) throw std::invalid_argument("synth config: retry_cap must be >= 1");
    if (c.candidates_per_item < 1)
        throw std::invalid_argument("synth config: candidates_per_item must be >= 1");
    if (c.curation_trials < 1)
        throw std::invalid_argument("synth config: curation_trials must be >= 1");
    if (c.max_turns < 1) throw std::invalid_argument("synth config: max_turns must be >= 1");
    rewards::validate(c.reward);
}

inline std::string default_system_prompt() {
    return "You answer multiple-choice questions about a long video by invoking retrieval "
           "tools. Available tools: browse, segment_retrieve, frame_pick, zoom_in. The "
           "grounding chain requires segment_retrieve before frame_pick and frame_pick before "
           "zoom_in. Emit exactly one action per turn, either "
           "<tool_call>{\"name\": \"<tool>\", \"arguments\": {...}}</tool_call> or "
           "<answer>K</answer> with K the choice index.";
}

// A rewrite must keep every tool name and the tag grammar intact.
inline bool rewrite_is_valid(const std::string& text) {
    for (const char* marker : {"<tool_call>", "</tool_call>", "<answer>", "</answer>", "browse",
                               "segment_retrieve", "frame_pick", "zoom_in"})
        if (text.find(marker) == std::string::npos) return false;
    return true;
}

struct SynthItem {
    int corpus_index = 0;
    std::string question_id;
    std::string necessity;  // "direct" | "needs-tools" | "failed"
    std::vector<ToolKind> predicted_order;
    std::string system_prompt;
    bool rewrite_flagged = false;
    std::vector<Trajectory> candidates;
    int discarded_candidates = 0;
    std::vector<int> ranked;  // surviving candidate indices, best first
    std::optional<Trajectory> exemplar;
    int curation_correct = -1;
    bool kept = false;
    std::map<std::string, std::string> stage_status;
};

struct StageCounts {
    int processed = 0;
    int passed = 0;
    int failed = 0;
    int set_aside = 0;  // necessity only: direct-answerable
};

struct SynthResult {
    std::vector<SynthItem> items;
    std::vector<Trajectory> exemplars;  // kept, in item order
    std::map<std::string, StageCounts> stages;
};

// ---------------------------------------------------------------------------
// Prompt plumbing

namespace detail {

inline std::string question_text(const sandbox::VideoQuestion& vq) {
    return "question " + vq.question.id + " cue=" + cue_name(vq.question.cue) +
           " choices=" + std::to_string(vq.question.choice_count) +
           " query=" + json(vq.question.query_embedding).dump();
}

// Retries on client failure only; a well-formed but useless completion is the
// caller's problem.
inline ClientResult submit_with_retry(ModelClient& client, const std::string& prompt,
                                      const std::vector<ChatMessage>& context, int retry_cap) {
    ClientResult last;
    for (int attempt = 0; attempt < retry_cap; ++attempt) {
        last = client.submit(prompt, context);
        if (last.ok) return last;
    }
    return last;
}

// Last tagged action inside a completion; everything before it is reasoning.
inline std::string extract_action_string(const std::string& completion) {
    size_t tool_pos = completion.rfind("<tool_call>");
    size_t ans_pos = completion.rfind("<answer>");
    size_t begin;
    const char* close;
    if (tool_pos == std::string::npos && ans_pos == std::string::npos) return completion;
    if (ans_pos == std::string::npos || (tool_pos != std::string::npos && tool_pos > ans_pos)) {
        begin = tool_pos;
        close = "</tool_call>";
    } else {
        begin = ans_pos;
        close = "</answer>";
    }
    size_t end = completion.find(close, begin);
    if (end == std::string::npos) return completion.substr(begin);
    return completion.substr(begin, end + std::string(close).size() - begin);
}

inline std::optional<std::vector<ToolKind>> parse_tool_order(const std::string& text) {
    std::vector<ToolKind> order;
    std::string token;
    auto flush = [&](bool final) -> bool {
        if (token.empty()) return true;
        std::optional<ToolKind> kind;
        if (token == "browse") kind = ToolKind::Browse;
        else if (token == "segment" || token == "segment_retrieve" || token == "seg")
            kind = ToolKind::SegmentRetrieve;
        else if (token == "frame" || token == "frame_pick") kind = ToolKind::FramePick;
        else if (token == "zoom" || token == "zoom_in") kind = ToolKind::ZoomIn;
        if (!kind) return false;
        order.push_back(*kind);
        token.clear();
        (void)final;
        return true;
    };
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') token += c;
        else if (!flush(false)) return std::nullopt;
    }
    if (!flush(true)) return std::nullopt;
    if (order.empty()) return std::nullopt;
    return order;
}

// Frame pick needs an earlier segment retrieve; zoom needs an earlier frame
// pick.
inline bool chain_order_legal(const std::vector<ToolKind>& order) {
    bool seg = false, frame = false;
    for (ToolKind k : order) {
        if (k == ToolKind::FramePick && !seg) return false;
        if (k == ToolKind::ZoomIn && !frame) return false;
        if (k == ToolKind::SegmentRetrieve) seg = true;
        if (k == ToolKind::FramePick) frame = true;
    }
    return true;
}

inline std::optional<int> parse_answer_choice(const std::string& completion) {
    auto outcome = toolparse::parse_with_repair(extract_action_string(completion));
    if (!outcome.ok() || !is_answer(outcome.action)) return std::nullopt;
    return std::get<AnswerAction>(outcome.action).choice;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages

// Stage 1: prompt the client to answer without tools; correct answers mark
// the item direct-answerable.
inline void filter_necessity(SynthItem& item, const sandbox::VideoQuestion& vq,
                             ModelClient& client, const SynthConfig& cfg) {
    std::string prompt = "[necessity question=" + vq.question.id +
                         "] Answer directly without tools. " + detail::question_text(vq);
    auto res = detail::submit_with_retry(client, prompt, {}, cfg.retry_cap);
    if (!res.ok) {
        item.necessity = "failed";
        item.stage_status["necessity"] = "failed:" + res.error;
        return;
    }
    auto choice = detail::parse_answer_choice(res.text);
    bool correct = choice && *choice == vq.video.evidence.correct_choice;
    item.necessity = correct ? "direct" : "needs-tools";
    item.stage_status["necessity"] = item.necessity;
}

// Stage 2: ask for a plausible tool order; chain-violating or unparseable
// sequences are re-requested up to the retry cap.
inline bool predict_order(SynthItem& item, const sandbox::VideoQuestion& vq, ModelClient& client,
                          const SynthConfig& cfg) {
    std::string prompt = "[order question=" + vq.question.id +
                         "] Predict the tool invocation order. " + detail::question_text(vq);
    for (int attempt = 0; attempt < cfg.retry_cap; ++attempt) {
        auto res = client.submit(prompt, {});
        if (!res.ok) continue;
        auto order = detail::parse_tool_order(res.text);
        if (!order || !detail::chain_order_legal(*order)) continue;
        item.predicted_order = *order;
        item.stage_status["order"] = "passed";
        return true;
    }
    item.stage_status["order"] = "failed";
    return false;
}

// Stage 3: rewrite the system prompt; a rewrite that loses tool names or tag
// grammar is discarded and the original kept.
inline void rewrite_prompt(SynthItem& item, const sandbox::VideoQuestion& vq, ModelClient& client,
                           const SynthConfig& cfg) {
    item.system_prompt = default_system_prompt();
    std::string prompt = "[rewrite question=" + vq.question.id +
                         "] Rewrite this system prompt, keeping tool names and tags: " +
                         item.system_prompt;
    auto res = detail::submit_with_retry(client, prompt, {}, cfg.retry_cap);
    if (!res.ok || !rewrite_is_valid(res.text)) {
        item.rewrite_flagged = true;
        item.stage_status["rewrite"] = res.ok ? "flagged" : "flagged:" + res.error;
        return;
    }
    item.system_prompt = res.text;
    item.stage_status["rewrite"] = "passed";
}

// Stage 4: stepwise generation inside the sandbox. Candidates whose action
// string cannot be parsed even after repair are discarded.
inline std::optional<Trajectory> generate_candidate(const SynthItem& item,
                                                    const sandbox::VideoQuestion& vq,
                                                    ModelClient& client, const SynthConfig& cfg,
                                                    int candidate_index) {
    EpisodeDriver driver(vq, vq.question.id + "-c" + std::to_string(candidate_index),
                         cfg.max_turns, /*guess_mode=*/false);
    std::vector<ChatMessage> context;
    context.push_back({"system", item.system_prompt});
    context.push_back({"user", detail::question_text(vq)});
    std::string order_text;
    for (ToolKind k : item.predicted_order) {
        if (!order_text.empty()) order_text += ", ";
        order_text += tool_name(k);
    }
    Rng unused_rng(0);  // deterministic judging; never drawn from
    while (!driver.done()) {
        std::string prompt = "[turn question=" + vq.question.id +
                             " candidate=" + std::to_string(candidate_index) +
                             " turn=" + std::to_string(driver.turn_index()) +
                             "] Planned order: " + order_text + ". Emit the next action.";
        auto res = detail::submit_with_retry(client, prompt, context, cfg.retry_cap);
        if (!res.ok) return std::nullopt;
        std::string raw = detail::extract_action_string(res.text);
        auto step = driver.step(raw, std::nullopt, unused_rng);
        if (!step.outcome.ok()) return std::nullopt;  // unparseable even after repair
        context.push_back({"assistant", res.text});
        context.push_back({"tool", to_json(step.observation).dump()});
    }
    Trajectory t = driver.finish();
    rewards::episode_reward(t, cfg.reward);
    return t;
}

inline void generate_trajectories(SynthItem& item, const sandbox::VideoQuestion& vq,
                                  ModelClient& client, const SynthConfig& cfg) {
    for (int c = 0; c < cfg.candidates_per_item; ++c) {
        auto candidate = generate_candidate(item, vq, client, cfg, c);
        if (candidate) item.candidates.push_back(std::move(*candidate));
        else item.discarded_candidates++;
    }
    item.stage_status["generate"] =
        item.candidates.empty() ? "failed" : "passed:" + std::to_string(item.candidates.size());
}

// A candidate is minimal when it answered correctly, issued no call after the
// evidence became visible, and violated no tool precondition.
inline bool candidate_is_minimal(const Trajectory& t) {
    if (t.judged_acc != 1 || !t.final_answer) return false;
    for (const auto& call : t.tool_calls)
        if (!call.precondition_valid) return false;
    for (const auto& turn : t.turns)
        if (turn.action && is_invoke(*turn.action) && turn.state.evidence_visible) return false;
    return true;
}

// Stage 5: rule-based minimality pre-filter, then client ranking with
// fewer-calls / fewer-turns tie-breaks.
inline void adjudicate(SynthItem& item, const sandbox::VideoQuestion& vq, ModelClient& client,
                       const SynthConfig& cfg) {
    std::vector<int> survivors;
    for (int i = 0; i < static_cast<int>(item.candidates.size()); ++i)
        if (candidate_is_minimal(item.candidates[i])) survivors.push_back(i);
    if (survivors.empty()) {
        item.stage_status["adjudicate"] = "failed";
        return;
    }

    std::vector<int> client_rank(item.candidates.size(), 0);
    if (survivors.size() > 1) {
        std::string prompt = "[rank question=" + vq.question.id +
                             "] Rank these candidates by conciseness and precision, best first, "
                             "as comma-separated indices:";
        for (size_t i = 0; i < survivors.size(); ++i) {
            const auto& t = item.candidates[survivors[i]];
            prompt += " " + std::to_string(i) + "=(calls " + std::to_string(t.call_count()) +
                      ", turns " + std::to_string(t.turns.size()) + ")";
        }
        auto res = detail::submit_with_retry(client, prompt, {}, cfg.retry_cap);
        if (res.ok) {
            std::vector<int> order;
            std::string token;
            for (char c : res.text + ",") {
                if (std::isdigit(static_cast<unsigned char>(c))) token += c;
                else if (!token.empty()) {
                    order.push_back(std::stoi(token));
                    token.clear();
                }
            }
            std::vector<bool> seen(survivors.size(), false);
            bool permutation = order.size() == survivors.size();
            for (int idx : order)
                if (idx < 0 || idx >= static_cast<int>(survivors.size()) || seen[idx])
                    permutation = false;
                else seen[idx] = true;
            if (permutation)
                for (size_t pos = 0; pos < order.size(); ++pos)
                    client_rank[survivors[order[pos]]] = static_cast<int>(pos);
        }
    }

    std::sort(survivors.begin(), survivors.end(), [&](int a, int b) {
        if (client_rank[a] != client_rank[b]) return client_rank[a] < client_rank[b];
        const auto& ta = item.candidates[a];
        const auto& tb = item.candidates[b];
        if (ta.call_count() != tb.call_count()) return ta.call_count() < tb.call_count();
        if (ta.turns.size() != tb.turns.size()) return ta.turns.size() < tb.turns.size();
        return a < b;
    });
    item.ranked = survivors;
    item.exemplar = item.candidates[survivors.front()];
    item.stage_status["adjudicate"] = "passed";
}

// ---------------------------------------------------------------------------
// Difficulty-band curation: `trials` direct answers per question, kept only
// when the correct count lies strictly inside (3, 7).

inline int curation_correct_count(const sandbox::VideoQuestion& vq, ModelClient& client,
                                  const SynthConfig& cfg) {
    int correct = 0;
    for (int k = 0; k < cfg.curation_trials; ++k) {
        std::string prompt = "[trial question=" + vq.question.id + " trial=" + std::to_string(k) +
                             "] Answer directly. " + detail::question_text(vq);
        auto res = detail::submit_with_retry(client, prompt, {}, cfg.retry_cap);
        if (!res.ok) continue;
        auto choice = detail::parse_answer_choice(res.text);
        if (choice && *choice == vq.video.evidence.correct_choice) ++correct;
    }
    return correct;
}

inline bool in_difficulty_band(int correct) { return correct > 3 && correct < 7; }

inline std::vector<int> curate_difficulty(const std::vector<sandbox::VideoQuestion>& questions,
                                          ModelClient& client, int trials = 10) {
    SynthConfig cfg;
    cfg.curation_trials = trials;
    std::vector<int> kept;
    for (int i = 0; i < static_cast<int>(questions.size()); ++i)
        if (in_difficulty_band(curation_correct_count(questions[i], client, cfg)))
            kept.push_back(i);
    return kept;
}

// ---------------------------------------------------------------------------
// Full pipeline

inline SynthResult run_pipeline(const std::vector<sandbox::VideoQuestion>& corpus,
                                ModelClient& client, const SynthConfig& cfg) {
    validate(cfg);
    SynthResult result;
    for (int i = 0; i < static_cast<int>(corpus.size()); ++i) {
        const auto& vq = corpus[i];
        SynthItem item;
        item.corpus_index = i;
        item.question_id = vq.question.id;

        auto& necessity = result.stages["1-necessity"];
        necessity.processed++;
        filter_necessity(item, vq, client, cfg);
        if (item.necessity == "failed") {
            necessity.failed++;
            result.items.push_back(std::move(item));
            continue;
        }
        if (item.necessity == "direct") {
            necessity.set_aside++;  // no-tool exemplar bucket
            result.items.push_back(std::move(item));
            continue;
        }
        necessity.passed++;

        auto& order = result.stages["2-order"];
        order.processed++;
        if (!predict_order(item, vq, client, cfg)) {
            order.failed++;
            result.items.push_back(std::move(item));
            continue;
        }
        order.passed++;

        auto& rewrite = result.stages["3-rewrite"];
        rewrite.processed++;
        rewrite_prompt(item, vq, client, cfg);
        if (item.rewrite_flagged) rewrite.failed++;
        else rewrite.passed++;

        auto& generate = result.stages["4-generate"];
        generate.processed++;
        generate_trajectories(item, vq, client, cfg);
        if (item.candidates.empty()) {
            generate.failed++;
            result.items.push_back(std::move(item));
            continue;
        }
        generate.passed++;

        auto& adjudicatec = result.stages["5-adjudicate"];
        adjudicatec.processed++;
        adjudicate(item, vq, client, cfg);
        if (!item.exemplar) {
            adjudicatec.failed++;
            result.items.push_back(std::move(item));
            continue;
        }
        adjudicatec.passed++;

        auto& curate = result.stages["6-curate"];
        curate.processed++;
        item.curation_correct = curation_correct_count(vq, client, cfg);
        item.kept = in_difficulty_band(item.curation_correct);
        if (item.kept) {
            curate.passed++;
            result.exemplars.push_back(*item.exemplar);
        } else {
            curate.failed++;
        }
        result.items.push_back(std::move(item));
    }
    return result;
}

// Provenance sidecar: one record per item.
inline json sidecar_record(const SynthItem& item) {
    json stages = json::object();
    for (const auto& [stage, status] : item.stage_status) stages[stage] = status;
    json order = json::array();
    for (ToolKind k : item.predicted_order) order.push_back(tool_name(k));
    json repairs = json::array();
    if (item.exemplar)
        for (const auto& turn : item.exemplar->turns)
            for (const auto& pass : turn.repair_passes) repairs.push_back(pass);
    return json{{"question_id", item.question_id},
                {"necessity", item.necessity},
                {"predicted_order", order},
                {"rewrite_flagged", item.rewrite_flagged},
                {"candidates", item.candidates.size()},
                {"discarded_candidates", item.discarded_candidates},
                {"ranked", item.ranked},
                {"curation_correct", item.curation_correct},
                {"kept", item.kept},
                {"stages", stages},
                {"exemplar_repairs", repairs}};
}

// ---------------------------------------------------------------------------
// Deterministic scripted client that plays the sandbox well enough to drive
// the whole pipeline from the CLI: near-optimal chains with occasional
// repairable formatting slips, and seeded per-question difficulty for the
// curation band.

class ScriptedSandboxClient : public ModelClient {
public:
    ScriptedSandboxClient(const std::vector<sandbox::VideoQuestion>& corpus, std::uint64_t seed)
        : seed_(seed) {
        for (int i = 0; i < static_cast<int>(corpus.size()); ++i)
            by_id_[corpus[i].question.id] = &corpus[i];
    }

    ClientResult submit(const std::string& prompt, const std::vector<ChatMessage>&) override {
        std::string marker = MockClient::extract_marker(prompt);
        std::string qid = field(prompt, "question=");
        auto it = by_id_.find(qid);
        if (it == by_id_.end()) return {false, "", "unknown-question"};
        const auto& vq = *it->second;

        if (marker == "necessity") {
            Rng rng(derive_seed(seed_, 0x9ecULL, hash_string(qid)));
            bool correct = rng.bernoulli(0.1);
            return {true, answer_string(vq, correct), ""};
        }
        if (marker == "order") {
            std::string text;
            for (const auto& a : sandbox::scripted_optimal_actions(vq)) {
                if (!is_invoke(a)) continue;
                if (!text.empty()) text += ", ";
                text += tool_name(std::get<InvokeAction>(a).tool);
            }
            return {true, text.empty() ? "browse" : text, ""};
        }
        if (marker == "rewrite")
            return {true, default_system_prompt() + " Keep answers short.", ""};
        if (marker == "turn") {
            int candidate = std::stoi(field(prompt, "candidate="));
            int turn = std::stoi(field(prompt, "turn="));
            return {true, turn_completion(vq, candidate, turn), ""};
        }
        if (marker == "rank") return {true, "0, 1", ""};
        if (marker == "trial") {
            int trial = std::stoi(field(prompt, "trial="));
            Rng rng(derive_seed(seed_, 0x721a1ULL, hash_string(qid),
                                static_cast<std::uint64_t>(trial)));
            double p = question_difficulty(qid);
            return {true, answer_string(vq, rng.bernoulli(p)), ""};
        }
        return {false, "", "unknown-stage"};
    }

    double question_difficulty(const std::string& qid) const {
        Rng rng(derive_seed(seed_, 0xd1ffULL, hash_string(qid)));
        return 0.2 + 0.6 * rng.uniform01();
    }

private:
    static std::string field(const std::string& prompt, const std::string& key) {
        size_t pos = prompt.find(key);
        if (pos == std::string::npos) return "";
        pos += key.size();
        size_t end = pos;
        while (end < prompt.size() && prompt[end] != ' ' && prompt[end] != ']') ++end;
        return prompt.substr(pos, end - pos);
    }

    static std::string answer_string(const sandbox::VideoQuestion& vq, bool correct) {
        int choice = vq.video.evidence.correct_choice;
        if (!correct) choice = (choice + 1) % vq.question.choice_count;
        return "<answer>" + std::to_string(choice) + "</answer>";
    }

    // Candidate 0 plays the optimal chain, candidate 1 inserts one redundant
    // call after the evidence is already visible, candidate 2 answers blind.
    std::string turn_completion(const sandbox::VideoQuestion& vq, int candidate, int turn) const {
        auto plan = sandbox::scripted_optimal_actions(vq);
        if (candidate == 1 && plan.size() >= 2) {
            AgentAction extra = plan[plan.size() - 2];  // repeat the deepest tool
            plan.insert(plan.end() - 1, extra);
        }
        if (candidate >= 2) plan = {AnswerAction{vq.video.evidence.correct_choice}};
        if (turn >= static_cast<int>(plan.size())) plan.push_back(plan.back());
        std::string raw = toolparse::serialize(plan[turn]);
        Rng rng(derive_seed(seed_, 0x7e27ULL, hash_string(vq.question.id),
                            static_cast<std::uint64_t>(candidate),
                            static_cast<std::uint64_t>(turn)));
        if (rng.bernoulli(0.15)) {
            // repairable slip: single quotes
            for (auto& c : raw)
                if (c == '"') c = '\'';
        }
        return "Looking at the evidence. " + raw;
    }

    std::uint64_t seed_;
    std::map<std::string, const sandbox::VideoQuestion*> by_id_;
};

}  // namespace toolrl::synth
