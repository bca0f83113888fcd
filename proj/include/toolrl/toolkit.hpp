#pragma once

// Executable semantics of the hierarchical tools: browse, segment retrieve,
// frame pick, zoom in. Chain-order violations and budget overflows are soft
// errors: the call is recorded as invalid and the episode continues.

#include <string>

#include "toolrl/core.hpp"
#include "toolrl/sandbox.hpp"

namespace toolrl::toolkit {

using sandbox::ObservationState;
using sandbox::Question;
using sandbox::SyntheticVideo;

// Token accounting. Browsing doubles both the frame count (capped) and the
// per-frame cost, so each successive browse costs 4x the previous one; the
// grounding tools bill at the current per-frame cost (segment retrieval loads
// one segment, frame pick and zoom one frame-equivalent each). The initial
// coarse context is free.
struct BudgetLedger {
    long long total_budget = 1960;
    long long per_frame_cost = 196;
    long long consumed = 0;
    int resolution_level = 0;
    int frames_loaded = 8;
    int frame_cap = 32;

    long long remaining() const { return total_budget - consumed; }
};

enum class ToolError { None, BudgetExceeded, ChainOrderViolation, BadQuery };

inline const char* tool_error_name(ToolError e) {
    switch (e) {
        case ToolError::None: return "";
        case ToolError::BudgetExceeded: return "budget-exceeded";
        case ToolError::ChainOrderViolation: return "chain-order-violation";
        case ToolError::BadQuery: return "bad-query";
    }
    return "?";
}

struct ToolResult {
    bool ok = true;
    ToolError error = ToolError::None;
    Observation observation;
};

namespace detail {

inline void refresh_visibility(const SyntheticVideo& video, ObservationState& obs) {
    if (!obs.evidence_visible && sandbox::reveal_rule(video.evidence, obs)) {
        obs.evidence_visible = true;
        obs.disclosed_choice = video.evidence.correct_choice;
    }
}

inline Observation snapshot(const ObservationState& obs, std::string id, ToolError error,
                            bool redundant = false) {
    Observation o;
    o.id = std::move(id);
    o.ok = error == ToolError::None;
    o.error = tool_error_name(error);
    o.redundant = redundant;
    o.granularity = obs.granularity;
    o.segment = obs.selected_segment;
    o.frame = obs.selected_frame;
    o.region = obs.selected_region;
    o.evidence_visible = obs.evidence_visible;
    o.disclosed_choice = obs.disclosed_choice;
    o.tokens_consumed = obs.tokens_consumed;
    return o;
}

inline ToolResult reject(const ObservationState& obs, std::string id, ToolError error,
                         bool redundant = false) {
    ToolResult r;
    r.ok = false;
    r.error = error;
    r.observation = snapshot(obs, std::move(id), error, redundant);
    return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline ToolResult execute_browse(const SyntheticVideo& video, ObservationState& obs,
                                 BudgetLedger& ledger, std::string obs_id) {
    bool redundant = obs.granularity != Granularity::Coarse || ledger.resolution_level > 0;
    long long cost = static_cast<long long>(ledger.frames_loaded) * ledger.per_frame_cost;
    if (ledger.consumed + cost > ledger.total_budget)
        return detail::reject(obs, std::move(obs_id), ToolError::BudgetExceeded, redundant);

    ledger.consumed += cost;
    ledger.resolution_level += 1;
    ledger.per_frame_cost *= 2;
    ledger.frames_loaded = std::min(ledger.frames_loaded * 2, ledger.frame_cap);
    obs.tokens_consumed = ledger.consumed;
    obs.granularity = Granularity::Browsed;
    detail::refresh_visibility(video, obs);

    ToolResult r;
    r.observation = detail::snapshot(obs, std::move(obs_id), ToolError::None, redundant);
    return r;
}

inline ToolResult execute_segment_retrieve(const SyntheticVideo& video, const ToolArgs& args,
                                           ObservationState& obs, BudgetLedger& ledger,
                                           std::string obs_id) {
    if (!args.query || static_cast<int>(args.query->size()) != video.embedding_dim ||
        sandbox::norm(*args.query) < 1e-12)
        return detail::reject(obs, std::move(obs_id), ToolError::BadQuery);
    long long cost = static_cast<long long>(video.segment_size) * ledger.per_frame_cost;
    if (ledger.consumed + cost > ledger.total_budget)
        return detail::reject(obs, std::move(obs_id), ToolError::BudgetExceeded);

    ledger.consumed += cost;
    obs.tokens_consumed = ledger.consumed;
    int best = 0;
    double best_sim = -2.0;
    for (int s = 0; s < video.segment_count(); ++s) {
        double sim = sandbox::cosine(*args.query, video.segment_means[s]);
        if (sim > best_sim) { best_sim = sim; best = s; }  // ties keep the lowest index
    }
    obs.selected_segment = best;
    obs.selected_frame.reset();
    obs.selected_region.reset();
    obs.granularity = Granularity::SegmentSelected;
    detail::refresh_visibility(video, obs);

    ToolResult r;
    r.observation = detail::snapshot(obs, std::move(obs_id), ToolError::None);
    return r;
}

inline ToolResult execute_frame_pick(const SyntheticVideo& video, const Question& question,
                                     ObservationState& obs, BudgetLedger& ledger,
                                     std::string obs_id) {
    if (!obs.selected_segment)
        return detail::reject(obs, std::move(obs_id), ToolError::ChainOrderViolation);
    long long cost = ledger.per_frame_cost;
    if (ledger.consumed + cost > ledger.total_budget)
        return detail::reject(obs, std::move(obs_id), ToolError::BudgetExceeded);

    ledger.consumed += cost;
    obs.tokens_consumed = ledger.consumed;
    int lo = *obs.selected_segment * video.segment_size;
    int best = lo;
    double best_sim = -2.0;
    for (int f = lo; f < lo + video.segment_size; ++f) {
        double sim = sandbox::cosine(question.query_embedding, video.frame_embeddings[f]);
        if (sim > best_sim) { best_sim = sim; best = f; }
    }
    obs.selected_frame = best;
    obs.selected_region.reset();
    obs.granularity = Granularity::FrameSelected;
    detail::refresh_visibility(video, obs);

    ToolResult r;
    r.observation = detail::snapshot(obs, std::move(obs_id), ToolError::None);
    return r;
}

inline ToolResult execute_zoom_in(const SyntheticVideo& video, const Question& question,
                                  ObservationState& obs, BudgetLedger& ledger,
                                  std::string obs_id) {
    if (!obs.selected_frame)
        return detail::reject(obs, std::move(obs_id), ToolError::ChainOrderViolation);
    long long cost = ledger.per_frame_cost;
    if (ledger.consumed + cost > ledger.total_budget)
        return detail::reject(obs, std::move(obs_id), ToolError::BudgetExceeded);

    ledger.consumed += cost;
    obs.tokens_consumed = ledger.consumed;
    int frame = *obs.selected_frame;
    int best = 0;
    double best_sim = -2.0;
    for (int r = 0; r < video.regions_per_frame; ++r) {
        double sim = sandbox::cosine(question.query_embedding, video.region_embeddings[frame][r]);
        if (sim > best_sim) { best_sim = sim; best = r; }
    }
    obs.selected_region = best;
    obs.granularity = Granularity::RegionSelected;
    detail::refresh_visibility(video, obs);

    ToolResult r;
    r.observation = detail::snapshot(obs, std::move(obs_id), ToolError::None);
    return r;
}

inline ToolResult execute_tool(ToolKind kind, const SyntheticVideo& video,
                               const Question& question, const ToolArgs& args,
                               ObservationState& obs, BudgetLedger& ledger, std::string obs_id) {
    switch (kind) {
        case ToolKind::Browse: return execute_browse(video, obs, ledger, std::move(obs_id));
        case ToolKind::SegmentRetrieve:
            return execute_segment_retrieve(video, args, obs, ledger, std::move(obs_id));
        case ToolKind::FramePick:
            return execute_frame_pick(video, question, obs, ledger, std::move(obs_id));
        case ToolKind::ZoomIn: return execute_zoom_in(video, question, obs, ledger, std::move(obs_id));
    }
    return detail::reject(obs, std::move(obs_id), ToolError::ChainOrderViolation);
}

}  // namespace toolrl::toolkit
