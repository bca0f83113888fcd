#pragma once

// Synthetic long-video environment. A video is a timeline of unit-norm frame
// embeddings (plus per-frame region embeddings) with exactly one planted
// evidence location; questions are embedding queries whose answers require a
// specific retrieval depth. Everything is a pure function of (seed, config).

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "toolrl/core.hpp"
#include "toolrl/rng.hpp"

namespace toolrl::sandbox {

enum class EvidenceGranularity { Global = 0, Segment = 1, Frame = 2, Region = 3 };
inline constexpr int kEvidenceGranularityCount = 4;

inline const char* evidence_granularity_name(EvidenceGranularity g) {
    switch (g) {
        case EvidenceGranularity::Global: return "global";
        case EvidenceGranularity::Segment: return "segment";
        case EvidenceGranularity::Frame: return "frame";
        case EvidenceGranularity::Region: return "region";
    }
    return "?";
}

inline EvidenceGranularity evidence_granularity_from_name(const std::string& s) {
    if (s == "global") return EvidenceGranularity::Global;
    if (s == "segment") return EvidenceGranularity::Segment;
    if (s == "frame") return EvidenceGranularity::Frame;
    if (s == "region") return EvidenceGranularity::Region;
    throw std::invalid_argument("unknown evidence granularity: " + s);
}

struct SandboxConfig {
    int frame_count = 64;       // T
    int segment_size = 8;       // frames per segment
    int embedding_dim = 16;     // D
    int regions_per_frame = 4;  // G
    int choice_count = 4;       // C
    double distractor_margin = 0.6;  // m: distractor cosine stays strictly below
    // global, segment, frame, region proportions for corpus generation
    std::array<double, 4> granularity_weights{0.25, 0.25, 0.25, 0.25};
    std::optional<EvidenceGranularity> forced_granularity;
};

inline void validate(const SandboxConfig& c) {
    if (c.frame_count < 1) throw std::invalid_argument("sandbox config: frame_count must be >= 1");
    if (c.segment_size < 1) throw std::invalid_argument("sandbox config: segment_size must be >= 1");
    if (c.frame_count % c.segment_size != 0)
        throw std::invalid_argument("sandbox config: frame_count must be divisible by segment_size");
    if (c.embedding_dim < 4) throw std::invalid_argument("sandbox config: embedding_dim must be >= 4");
    if (c.regions_per_frame < 1)
        throw std::invalid_argument("sandbox config: regions_per_frame must be >= 1");
    if (c.choice_count < 2) throw std::invalid_argument("sandbox config: choice_count must be >= 2");
    if (!(c.distractor_margin > 0.0 && c.distractor_margin < 0.9))
        throw std::invalid_argument("sandbox config: distractor_margin must lie in (0, 0.9)");
    double wsum = 0.0;
    for (double w : c.granularity_weights) {
        if (w < 0.0) throw std::invalid_argument("sandbox config: granularity weights must be >= 0");
        wsum += w;
    }
    if (wsum <= 0.0) throw std::invalid_argument("sandbox config: granularity weights sum to zero");
}

struct EvidenceSpec {
    EvidenceGranularity granularity = EvidenceGranularity::Global;
    std::optional<int> segment_index;
    std::optional<int> frame_index;  // global frame index
    std::optional<int> region_index; // within the evidence frame
    int correct_choice = 0;
    bool operator==(const EvidenceSpec&) const = default;
};

struct SyntheticVideo {
    int frame_count = 0;
    int segment_size = 0;
    int embedding_dim = 0;
    int regions_per_frame = 0;
    std::vector<Embedding> frame_embeddings;               // [T]
    std::vector<std::vector<Embedding>> region_embeddings; // [T][G]
    EvidenceSpec evidence;
    std::uint64_t seed = 0;
    std::vector<Embedding> segment_means;  // derived, [T / segment_size]

    int segment_count() const { return frame_count / segment_size; }
    bool operator==(const SyntheticVideo&) const = default;
};

struct Question {
    std::string id;
    Embedding query_embedding;
    IntentCue cue = IntentCue::Global;
    int choice_count = 4;
    std::string video_ref;
    bool operator==(const Question&) const = default;
};

struct VideoQuestion {
    SyntheticVideo video;
    Question question;
    bool operator==(const VideoQuestion&) const = default;
};

// Per-episode retrieval state.
struct ObservationState {
    Granularity granularity = Granularity::Coarse;
    std::optional<int> selected_segment;
    std::optional<int> selected_frame;   // global frame index
    std::optional<int> selected_region;  // within the selected frame
    bool evidence_visible = false;
    std::optional<int> disclosed_choice;
    long long tokens_consumed = 0;
    int turn_index = 0;
};

// ---------------------------------------------------------------------------
// Vector helpers

inline double dot(const Embedding& a, const Embedding& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const Embedding& a) { return std::sqrt(dot(a, a)); }

inline double cosine(const Embedding& a, const Embedding& b) {
    double na = norm(a), nb = norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

inline Embedding random_unit(int dim, Rng& rng) {
    Embedding v(dim);
    for (;;) {
        for (auto& x : v) x = rng.normal();
        double n = norm(v);
        if (n > 1e-9) {
            for (auto& x : v) x /= n;
            return v;
        }
    }
}

// Unit vector with an exact cosine against `anchor`, built by removing the
// anchor component from a random draw and recombining (Gram-Schmidt), so the
// similarity holds by construction rather than by rejection.
inline Embedding embed_with_cosine(const Embedding& anchor, double target, Rng& rng) {
    const int dim = static_cast<int>(anchor.size());
    for (;;) {
        Embedding v(dim);
        for (auto& x : v) x = rng.normal();
        double along = dot(v, anchor);
        for (int i = 0; i < dim; ++i) v[i] -= along * anchor[i];
        double n = norm(v);
        if (n < 1e-9) continue;
        double ortho = std::sqrt(std::max(0.0, 1.0 - target * target));
        Embedding out(dim);
        for (int i = 0; i < dim; ++i) out[i] = target * anchor[i] + ortho * v[i] / n;
        return out;
    }
}

// ---------------------------------------------------------------------------
// Reveal rule: instantaneous check whether the current selections expose the
// evidence. Global evidence is exposed only by the browse stage itself;
// callers latch visibility so later chain steps never hide it again.

inline bool reveal_rule(const EvidenceSpec& evidence, const ObservationState& obs) {
    switch (evidence.granularity) {
        case EvidenceGranularity::Global:
            return obs.granularity == Granularity::Browsed;
        case EvidenceGranularity::Segment:
            return obs.selected_segment && *obs.selected_segment == *evidence.segment_index;
        case EvidenceGranularity::Frame:
            return obs.selected_frame && *obs.selected_frame == *evidence.frame_index;
        case EvidenceGranularity::Region:
            return obs.selected_frame && *obs.selected_frame == *evidence.frame_index &&
                   obs.selected_region && *obs.selected_region == *evidence.region_index;
    }
    return false;
}

// ---------------------------------------------------------------------------
// Judging

inline int judge_answer(const Question& q, const EvidenceSpec& evidence, int choice,
                        const ObservationState& obs, bool guess_mode, Rng& rng) {
    if (choice < 0 || choice >= q.choice_count)
        throw std::invalid_argument("judge_answer: choice out of range");
    if (obs.evidence_visible) return choice == evidence.correct_choice ? 1 : 0;
    if (!guess_mode) return 0;
    return rng.uniform01() < 1.0 / static_cast<double>(q.choice_count) ? 1 : 0;
}

// ---------------------------------------------------------------------------
// Generation

namespace detail {

inline double band_sample(Rng& rng, double lo, double hi, double margin) {
    double h = std::min(hi, margin - 0.02);
    double l = std::min(lo, h - 0.05);
    return l + rng.uniform01() * (h - l);
}

// Retrieval must land on the planted indices for the scripted chain to work;
// the per-embedding margins already hold by construction, this validates the
// aggregate argmaxes (segment means mix random perpendicular parts).
inline bool retrieval_solvable(const SyntheticVideo& v, const Embedding& query) {
    const auto& ev = v.evidence;
    if (ev.granularity == EvidenceGranularity::Global) return true;
    int best_seg = 0;
    double best = -2.0;
    for (int s = 0; s < v.segment_count(); ++s) {
        double c = cosine(query, v.segment_means[s]);
        if (c > best) { best = c; best_seg = s; }
    }
    if (best_seg != *ev.segment_index) return false;
    if (ev.granularity == EvidenceGranularity::Segment) return true;
    int lo = best_seg * v.segment_size;
    int best_frame = lo;
    best = -2.0;
    for (int f = lo; f < lo + v.segment_size; ++f) {
        double c = cosine(query, v.frame_embeddings[f]);
        if (c > best) { best = c; best_frame = f; }
    }
    if (best_frame != *ev.frame_index) return false;
    if (ev.granularity == EvidenceGranularity::Frame) return true;
    int best_region = 0;
    best = -2.0;
    for (int r = 0; r < v.regions_per_frame; ++r) {
        double c = cosine(query, v.region_embeddings[best_frame][r]);
        if (c > best) { best = c; best_region = r; }
    }
    return best_region == *ev.region_index;
}

}  // namespace detail

inline VideoQuestion generate_video(std::uint64_t seed, const SandboxConfig& config) {
    validate(config);
    Rng rng(derive_seed(seed, 0x5eedULL));

    EvidenceGranularity granularity;
    if (config.forced_granularity) {
        granularity = *config.forced_granularity;
    } else {
        double wsum = 0.0;
        for (double w : config.granularity_weights) wsum += w;
        double u = rng.uniform01() * wsum;
        int g = 0;
        for (; g < 3; ++g) {
            u -= config.granularity_weights[g];
            if (u < 0.0) break;
        }
        granularity = static_cast<EvidenceGranularity>(g);
    }

    const int segments = config.frame_count / config.segment_size;
    Embedding query = random_unit(config.embedding_dim, rng);
    int correct_choice = rng.uniform_int(config.choice_count);
    int ev_segment = rng.uniform_int(segments);
    int ev_frame = ev_segment * config.segment_size + rng.uniform_int(config.segment_size);
    int ev_region = rng.uniform_int(config.regions_per_frame);
    const double m = config.distractor_margin;
    const bool has_local = granularity != EvidenceGranularity::Global;

    for (int attempt = 0; attempt < 32; ++attempt) {
        SyntheticVideo v;
        v.frame_count = config.frame_count;
        v.segment_size = config.segment_size;
        v.embedding_dim = config.embedding_dim;
        v.regions_per_frame = config.regions_per_frame;
        v.seed = seed;
        v.evidence.granularity = granularity;
        v.evidence.correct_choice = correct_choice;
        if (has_local) v.evidence.segment_index = ev_segment;
        if (granularity == EvidenceGranularity::Frame || granularity == EvidenceGranularity::Region)
            v.evidence.frame_index = ev_frame;
        if (granularity == EvidenceGranularity::Region) v.evidence.region_index = ev_region;

        v.frame_embeddings.reserve(config.frame_count);
        for (int f = 0; f < config.frame_count; ++f) {
            bool in_ev_segment = has_local && f / config.segment_size == ev_segment;
            double c;
            if (has_local && f == ev_frame) {
                c = 0.92 + rng.uniform01() * 0.06;  // the evidence carrier
            } else if (in_ev_segment) {
                c = detail::band_sample(rng, 0.15, 0.45, m);  // supportive but sub-margin
            } else {
                c = detail::band_sample(rng, -0.45, 0.05, m);
            }
            v.frame_embeddings.push_back(embed_with_cosine(query, c, rng));
        }

        v.region_embeddings.resize(config.frame_count);
        for (int f = 0; f < config.frame_count; ++f) {
            v.region_embeddings[f].reserve(config.regions_per_frame);
            for (int r = 0; r < config.regions_per_frame; ++r) {
                bool is_evidence = granularity == EvidenceGranularity::Region && f == ev_frame &&
                                   r == ev_region;
                double c = is_evidence ? 0.92 + rng.uniform01() * 0.06
                                       : detail::band_sample(rng, -0.45, 0.05, m);
                v.region_embeddings[f].push_back(embed_with_cosine(query, c, rng));
            }
        }

        v.segment_means.assign(segments, Embedding(config.embedding_dim, 0.0));
        for (int f = 0; f < config.frame_count; ++f) {
            auto& mean = v.segment_means[f / config.segment_size];
            for (int d = 0; d < config.embedding_dim; ++d)
                mean[d] += v.frame_embeddings[f][d] / config.segment_size;
        }

        if (!detail::retrieval_solvable(v, query)) continue;

        Question q;
        q.id = "q" + std::to_string(seed);
        q.query_embedding = query;
        q.cue = granularity == EvidenceGranularity::Global ? IntentCue::Global : IntentCue::Local;
        q.choice_count = config.choice_count;
        q.video_ref = "v" + std::to_string(seed);
        return VideoQuestion{std::move(v), std::move(q)};
    }
    throw std::runtime_error("generate_video: could not satisfy retrieval solvability");
}

// Exact granularity mix via largest-remainder allocation, order shuffled
// deterministically from the corpus seed.
inline std::vector<EvidenceGranularity> allocate_granularities(const SandboxConfig& config,
                                                               int count, std::uint64_t seed) {
    double wsum = 0.0;
    for (double w : config.granularity_weights) wsum += w;
    std::array<int, 4> counts{};
    std::array<double, 4> remainder{};
    int assigned = 0;
    for (int g = 0; g < 4; ++g) {
        double exact = count * config.granularity_weights[g] / wsum;
        counts[g] = static_cast<int>(exact);
        remainder[g] = exact - counts[g];
        assigned += counts[g];
    }
    while (assigned < count) {
        int best = 0;
        for (int g = 1; g < 4; ++g)
            if (remainder[g] > remainder[best]) best = g;
        counts[best]++;
        remainder[best] = -1.0;
        ++assigned;
    }
    std::vector<EvidenceGranularity> out;
    out.reserve(count);
    for (int g = 0; g < 4; ++g)
        out.insert(out.end(), counts[g], static_cast<EvidenceGranularity>(g));
    Rng rng(derive_seed(seed, 0xa110cULL));
    for (int i = static_cast<int>(out.size()) - 1; i > 0; --i)
        std::swap(out[i], out[rng.uniform_int(i + 1)]);
    return out;
}

inline std::vector<VideoQuestion> generate_corpus(std::uint64_t seed, const SandboxConfig& config,
                                                  int count) {
    validate(config);
    if (count < 1) throw std::invalid_argument("generate_corpus: count must be >= 1");
    auto granularities = allocate_granularities(config, count, seed);
    std::vector<VideoQuestion> corpus;
    corpus.reserve(count);
    for (int i = 0; i < count; ++i) {
        SandboxConfig c = config;
        c.forced_granularity = granularities[i];
        VideoQuestion vq = generate_video(derive_seed(seed, 0xc0de, static_cast<std::uint64_t>(i)), c);
        char buf[16];
        std::snprintf(buf, sizeof(buf), "q%05d", i);
        vq.question.id = buf;
        vq.question.video_ref = "v" + std::to_string(i);
        corpus.push_back(std::move(vq));
    }
    return corpus;
}

// The optimal scripted chain: Browse for global questions, the grounding
// chain cut at the evidence granularity otherwise, then the disclosed answer.
inline std::vector<AgentAction> scripted_optimal_actions(const VideoQuestion& vq) {
    std::vector<AgentAction> actions;
    switch (vq.video.evidence.granularity) {
        case EvidenceGranularity::Global:
            actions.push_back(InvokeAction{ToolKind::Browse, {}});
            break;
        case EvidenceGranularity::Region:
            actions.push_back(InvokeAction{ToolKind::SegmentRetrieve, {vq.question.query_embedding}});
            actions.push_back(InvokeAction{ToolKind::FramePick, {}});
            actions.push_back(InvokeAction{ToolKind::ZoomIn, {}});
            break;
        case EvidenceGranularity::Frame:
            actions.push_back(InvokeAction{ToolKind::SegmentRetrieve, {vq.question.query_embedding}});
            actions.push_back(InvokeAction{ToolKind::FramePick, {}});
            break;
        case EvidenceGranularity::Segment:
            actions.push_back(InvokeAction{ToolKind::SegmentRetrieve, {vq.question.query_embedding}});
            break;
    }
    actions.push_back(AnswerAction{vq.video.evidence.correct_choice});
    return actions;
}

// ---------------------------------------------------------------------------
// Corpus persistence: one video+question record per line.

inline json to_json(const EvidenceSpec& e) {
    json j{{"granularity", evidence_granularity_name(e.granularity)},
           {"correct_choice", e.correct_choice}};
    if (e.segment_index) j["segment_index"] = *e.segment_index;
    if (e.frame_index) j["frame_index"] = *e.frame_index;
    if (e.region_index) j["region_index"] = *e.region_index;
    return j;
}

inline EvidenceSpec evidence_from_json(const json& j) {
    EvidenceSpec e;
    e.granularity = evidence_granularity_from_name(j.at("granularity").get<std::string>());
    e.correct_choice = j.at("correct_choice").get<int>();
    if (j.contains("segment_index")) e.segment_index = j.at("segment_index").get<int>();
    if (j.contains("frame_index")) e.frame_index = j.at("frame_index").get<int>();
    if (j.contains("region_index")) e.region_index = j.at("region_index").get<int>();
    return e;
}

inline json to_json(const VideoQuestion& vq) {
    const auto& v = vq.video;
    const auto& q = vq.question;
    return json{{"question",
                 {{"id", q.id},
                  {"query_embedding", q.query_embedding},
                  {"cue", cue_name(q.cue)},
                  {"choice_count", q.choice_count},
                  {"video_ref", q.video_ref}}},
                {"video",
                 {{"frame_count", v.frame_count},
                  {"segment_size", v.segment_size},
                  {"embedding_dim", v.embedding_dim},
                  {"regions_per_frame", v.regions_per_frame},
                  {"frame_embeddings", v.frame_embeddings},
                  {"region_embeddings", v.region_embeddings},
                  {"evidence", to_json(v.evidence)},
                  {"seed", v.seed}}}};
}

inline VideoQuestion video_question_from_json(const json& j) {
    VideoQuestion vq;
    const json& q = j.at("question");
    vq.question.id = q.at("id").get<std::string>();
    vq.question.query_embedding = q.at("query_embedding").get<Embedding>();
    vq.question.cue = cue_from_name(q.at("cue").get<std::string>());
    vq.question.choice_count = q.at("choice_count").get<int>();
    vq.question.video_ref = q.at("video_ref").get<std::string>();
    const json& v = j.at("video");
    vq.video.frame_count = v.at("frame_count").get<int>();
    vq.video.segment_size = v.at("segment_size").get<int>();
    vq.video.embedding_dim = v.at("embedding_dim").get<int>();
    vq.video.regions_per_frame = v.at("regions_per_frame").get<int>();
    vq.video.frame_embeddings = v.at("frame_embeddings").get<std::vector<Embedding>>();
    vq.video.region_embeddings =
        v.at("region_embeddings").get<std::vector<std::vector<Embedding>>>();
    vq.video.evidence = evidence_from_json(v.at("evidence"));
    vq.video.seed = v.at("seed").get<std::uint64_t>();
    const int segments = vq.video.segment_count();
    vq.video.segment_means.assign(segments, Embedding(vq.video.embedding_dim, 0.0));
    for (int f = 0; f < vq.video.frame_count; ++f)
        for (int d = 0; d < vq.video.embedding_dim; ++d)
            vq.video.segment_means[f / vq.video.segment_size][d] +=
                vq.video.frame_embeddings[f][d] / vq.video.segment_size;
    return vq;
}

}  // namespace toolrl::sandbox
