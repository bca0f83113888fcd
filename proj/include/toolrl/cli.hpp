#pragma once

// Command implementations behind the CLI binary: sandbox corpus generation,
// training, evaluation, trajectory synthesis, and run comparison reports.
// Every command is a pure function of its flags and seed; outputs are
// byte-identical across reruns.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "toolrl/advantage.hpp"
#include "toolrl/core.hpp"
#include "toolrl/model_client.hpp"
#include "toolrl/sandbox.hpp"
#include "toolrl/synth.hpp"
#include "toolrl/trainer.hpp"

namespace toolrl::cli {

namespace fs = std::filesystem;

inline std::string fmt6(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

inline std::ofstream open_out(const std::string& path) {
    if (auto dir = fs::path(path).parent_path(); !dir.empty()) {
        std::error_code ec;
        fs::create_directories(dir, ec);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write to " + path);
    return out;
}

inline std::vector<sandbox::VideoQuestion> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read corpus " + path);
    std::vector<sandbox::VideoQuestion> corpus;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        corpus.push_back(sandbox::video_question_from_json(json::parse(line)));
    }
    if (corpus.empty()) throw std::runtime_error("corpus is empty: " + path);
    return corpus;
}

// ---------------------------------------------------------------------------
// gen-sandbox

struct GenSandboxConfig {
    int count = 200;
    std::uint64_t seed = 7;
    std::string out = "corpus.jsonl";
    sandbox::SandboxConfig sandbox;
};

inline int cmd_gen_sandbox(const GenSandboxConfig& cfg, std::ostream& log = std::cout) {
    auto corpus = sandbox::generate_corpus(cfg.seed, cfg.sandbox, cfg.count);
    auto out = open_out(cfg.out);
    std::array<int, 4> mix{};
    double dist_min = 2.0, dist_max = -2.0, dist_sum = 0.0;
    for (const auto& vq : corpus) {
        out << sandbox::to_json(vq).dump() << "\n";
        mix[static_cast<int>(vq.video.evidence.granularity)]++;
        double worst = -2.0;  // largest distractor similarity in this video
        const auto& q = vq.question.query_embedding;
        const auto& ev = vq.video.evidence;
        for (int f = 0; f < vq.video.frame_count; ++f) {
            bool is_carrier = ev.frame_index && *ev.frame_index == f;
            if (ev.granularity == sandbox::EvidenceGranularity::Segment && ev.segment_index &&
                f / vq.video.segment_size == *ev.segment_index)
                is_carrier = is_carrier || sandbox::cosine(q, vq.video.frame_embeddings[f]) > 0.9;
            if (!is_carrier) worst = std::max(worst, sandbox::cosine(q, vq.video.frame_embeddings[f]));
            for (int r = 0; r < vq.video.regions_per_frame; ++r) {
                bool ev_region = ev.granularity == sandbox::EvidenceGranularity::Region &&
                                 ev.frame_index && *ev.frame_index == f && ev.region_index &&
                                 *ev.region_index == r;
                if (!ev_region)
                    worst = std::max(worst, sandbox::cosine(q, vq.video.region_embeddings[f][r]));
            }
        }
        dist_min = std::min(dist_min, worst);
        dist_max = std::max(dist_max, worst);
        dist_sum += worst;
    }
    log << "wrote " << corpus.size() << " records to " << cfg.out << "\n";
    log << "granularity mix: global " << mix[0] << ", segment " << mix[1] << ", frame " << mix[2]
        << ", region " << mix[3] << "\n";
    log << "max distractor cosine per video: min " << fmt6(dist_min) << ", mean "
        << fmt6(dist_sum / corpus.size()) << ", max " << fmt6(dist_max) << " (margin "
        << fmt6(cfg.sandbox.distractor_margin) << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainCliConfig {
    std::string corpus = "corpus.jsonl";
    std::string out_dir = "run";
    trainer::TrainerConfig trainer;
};

inline int cmd_train(const TrainCliConfig& cfg, std::ostream& log = std::cout) {
    auto corpus = load_corpus(cfg.corpus);
    auto result = trainer::train(cfg.trainer, corpus);

    auto metrics = open_out((fs::path(cfg.out_dir) / "metrics.csv").string());
    metrics << trainer::metrics_csv_header() << "\n";
    for (const auto& m : result.metrics) metrics << trainer::metrics_csv_row(m) << "\n";

    auto policy = open_out((fs::path(cfg.out_dir) / "policy.txt").string());
    result.policy.save(policy);

    const auto& last = result.metrics.back();
    log << "trained " << trainer::algo_name(cfg.trainer.algo) << " for " << cfg.trainer.steps
        << " steps (seed " << cfg.trainer.seed << ")\n";
    log << "final: accuracy " << fmt6(last.accuracy) << ", valid_tool_reward "
        << fmt6(last.valid_tool_reward) << ", mean_tool_calls " << fmt6(last.mean_tool_calls)
        << "\n";
    log << "outputs: " << (fs::path(cfg.out_dir) / "metrics.csv").string() << ", "
        << (fs::path(cfg.out_dir) / "policy.txt").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalCliConfig {
    std::string policy = "run/policy.txt";
    std::string corpus = "corpus.jsonl";
    std::string out;  // optional report file
    trainer::EvalConfig eval;
};

inline std::string render_eval_report(const trainer::EvalReport& r) {
    std::ostringstream out;
    out << "episodes: " << r.episodes << "\n";
    out << "accuracy: " << fmt6(r.accuracy) << "\n";
    out << "format_quality: " << fmt6(r.format_quality) << "\n";
    out << "valid_tool_reward: " << fmt6(r.valid_tool_reward) << "\n";
    out << "mean_tool_calls: " << fmt6(r.mean_tool_calls) << "\n";
    out << "routing (first action by intent cue):\n";
    out << "cue";
    for (int h = 0; h < trainer::kHeadCount; ++h)
        out << "\t" << trainer::head_name(static_cast<trainer::Head>(h));
    out << "\n";
    for (int cue = 0; cue < 2; ++cue) {
        out << cue_name(static_cast<IntentCue>(cue));
        for (int h = 0; h < trainer::kHeadCount; ++h) out << "\t" << r.routing[cue][h];
        out << "\n";
    }
    out << "successful episodes by evidence granularity (count, mean tool calls):\n";
    for (int g = 0; g < sandbox::kEvidenceGranularityCount; ++g)
        out << sandbox::evidence_granularity_name(static_cast<sandbox::EvidenceGranularity>(g))
            << "\t" << r.success_count[g] << "\t" << fmt6(r.success_mean_calls[g]) << "\n";
    return out.str();
}

inline int cmd_eval(const EvalCliConfig& cfg, std::ostream& log = std::cout) {
    std::ifstream in(cfg.policy);
    if (!in) throw std::runtime_error("cannot read policy " + cfg.policy);
    auto policy = trainer::PolicyTable::load(in);
    auto corpus = load_corpus(cfg.corpus);
    trainer::EvalConfig ec = cfg.eval;
    ec.max_turns = policy.max_turns();
    auto report = trainer::evaluate(policy, corpus, ec);
    std::string text = render_eval_report(report);
    log << text;
    if (!cfg.out.empty()) {
        auto out = open_out(cfg.out);
        out << text;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// synth

struct SynthCliConfig {
    std::string corpus = "corpus.jsonl";
    std::string out_dir = "synth";
    std::string client = "mock";  // mock | remote
    std::uint64_t seed = 3;
    synth::SynthConfig synth;
    synth::RemoteClientConfig remote;
};

inline int cmd_synth(const SynthCliConfig& cfg, std::ostream& log = std::cout) {
    auto corpus = load_corpus(cfg.corpus);
    std::unique_ptr<synth::ModelClient> client;
    if (cfg.client == "mock") {
        client = std::make_unique<synth::ScriptedSandboxClient>(corpus, cfg.seed);
    } else if (cfg.client == "remote") {
        client = std::make_unique<synth::RemoteClient>(cfg.remote);
    } else {
        throw std::runtime_error("unknown client kind: " + cfg.client);
    }

    auto result = synth::run_pipeline(corpus, *client, cfg.synth);

    auto exemplars = open_out((fs::path(cfg.out_dir) / "exemplars.jsonl").string());
    for (const auto& t : result.exemplars) exemplars << trajectory_to_line(t) << "\n";
    auto sidecar = open_out((fs::path(cfg.out_dir) / "provenance.jsonl").string());
    for (const auto& item : result.items) sidecar << synth::sidecar_record(item).dump() << "\n";

    for (const auto& [stage, counts] : result.stages) {
        log << stage << ": processed " << counts.processed << ", passed " << counts.passed
            << ", failed " << counts.failed;
        if (counts.set_aside > 0) log << ", set aside " << counts.set_aside;
        log << "\n";
    }
    log << "kept exemplars: " << result.exemplars.size() << " of " << corpus.size() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// report

struct ReportCliConfig {
    std::vector<std::string> metrics_files;
    std::string out_dir = "report";
    double threshold = 0.45;  // valid-tool-reward crossing level
};

struct RunSeries {
    std::string label;
    std::vector<trainer::StepMetrics> rows;
};

inline RunSeries load_metrics(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read metrics " + path);
    std::string header;
    if (!std::getline(in, header) || header != trainer::metrics_csv_header())
        throw std::runtime_error("mismatched schemas: " + path);
    RunSeries series;
    series.label = path;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) series.rows.push_back(trainer::metrics_from_csv_row(line));
    if (series.rows.empty()) throw std::runtime_error("metrics file has no rows: " + path);
    return series;
}

inline int cmd_report(const ReportCliConfig& cfg, std::ostream& log = std::cout) {
    if (cfg.metrics_files.empty()) throw std::runtime_error("report needs at least one metrics file");
    std::vector<RunSeries> runs;
    for (const auto& path : cfg.metrics_files) runs.push_back(load_metrics(path));

    struct Column {
        const char* name;
        double (*get)(const trainer::StepMetrics&);
    };
    const Column columns[] = {
        {"valid_tool_reward", [](const trainer::StepMetrics& m) { return m.valid_tool_reward; }},
        {"accuracy", [](const trainer::StepMetrics& m) { return m.accuracy; }},
        {"mean_tool_calls", [](const trainer::StepMetrics& m) { return m.mean_tool_calls; }},
        {"format_quality", [](const trainer::StepMetrics& m) { return m.format_quality; }},
        {"mean_reward", [](const trainer::StepMetrics& m) { return m.mean_reward; }},
    };
    size_t max_rows = 0;
    for (const auto& run : runs) max_rows = std::max(max_rows, run.rows.size());
    for (const auto& col : columns) {
        auto out = open_out((fs::path(cfg.out_dir) / (std::string(col.name) + ".tsv")).string());
        out << "step";
        for (const auto& run : runs) out << "\t" << run.label;
        out << "\n";
        for (size_t i = 0; i < max_rows; ++i) {
            out << i;
            for (const auto& run : runs) {
                out << "\t";
                if (i < run.rows.size()) {
                    char buf[40];
                    std::snprintf(buf, sizeof(buf), "%.17g", col.get(run.rows[i]));
                    out << buf;
                }
            }
            out << "\n";
        }
    }

    std::ostringstream summary;
    summary << "threshold (valid_tool_reward): " << fmt6(cfg.threshold) << "\n";
    for (const auto& run : runs) {
        int crossing = -1;
        for (const auto& m : run.rows)
            if (m.valid_tool_reward >= cfg.threshold) { crossing = m.step; break; }
        const auto& last = run.rows.back();
        summary << run.label << ": crossing_step ";
        if (crossing < 0) summary << "none";
        else summary << crossing;
        summary << ", final_accuracy " << fmt6(last.accuracy) << ", final_mean_tool_calls "
                << fmt6(last.mean_tool_calls) << ", final_valid_tool_reward "
                << fmt6(last.valid_tool_reward) << "\n";
    }
    auto out = open_out((fs::path(cfg.out_dir) / "summary.txt").string());
    out << summary.str();
    log << summary.str();
    return 0;
}

}  // namespace toolrl::cli
