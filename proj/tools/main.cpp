// toolrl command-line interface.

#include <CLI11.hpp>

#include "toolrl/cli.hpp"

using namespace toolrl;

int main(int argc, char** argv) {
    CLI::App app{"Tool-use RL laboratory over a synthetic long-video sandbox"};
    app.require_subcommand(1);

    // gen-sandbox -------------------------------------------------------
    cli::GenSandboxConfig gen;
    std::vector<double> weights{0.25, 0.25, 0.25, 0.25};
    auto* gen_cmd = app.add_subcommand("gen-sandbox", "Generate a video+question corpus");
    gen_cmd->set_config("--config", "", "Read options from an INI file (flags win)");
    gen_cmd->add_option("--count", gen.count, "Number of records")->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed, "Corpus seed")->capture_default_str();
    gen_cmd->add_option("--out", gen.out, "Output corpus file (one record per line)")
        ->capture_default_str();
    gen_cmd->add_option("--frames", gen.sandbox.frame_count, "Frames per video")
        ->capture_default_str();
    gen_cmd->add_option("--segment-size", gen.sandbox.segment_size, "Frames per segment")
        ->capture_default_str();
    gen_cmd->add_option("--dim", gen.sandbox.embedding_dim, "Embedding dimension")
        ->capture_default_str();
    gen_cmd->add_option("--regions", gen.sandbox.regions_per_frame, "Regions per frame")
        ->capture_default_str();
    gen_cmd->add_option("--choices", gen.sandbox.choice_count, "Answer choices per question")
        ->capture_default_str();
    gen_cmd->add_option("--margin", gen.sandbox.distractor_margin,
                        "Distractor cosine stays strictly below this")
        ->capture_default_str();
    gen_cmd->add_option("--weights", weights,
                        "Granularity proportions: global,segment,frame,region")
        ->delimiter(',')
        ->expected(4)
        ->capture_default_str();

    // train --------------------------------------------------------------
    cli::TrainCliConfig train;
    std::string algo = "composite";
    auto* train_cmd = app.add_subcommand("train", "Train the tabular policy on a corpus");
    train_cmd->set_config("--config", "", "Read options from an INI file (flags win)");
    train_cmd->add_option("--corpus", train.corpus, "Corpus file")->capture_default_str();
    train_cmd->add_option("--out-dir", train.out_dir, "Output directory")->capture_default_str();
    train_cmd->add_option("--algo", algo, "Advantage estimator: grpo | tagpo | composite")
        ->capture_default_str();
    train_cmd->add_option("--steps", train.trainer.steps, "Training steps")->capture_default_str();
    train_cmd->add_option("--seed", train.trainer.seed, "Run seed")->capture_default_str();
    train_cmd->add_option("--batch-size", train.trainer.batch_size, "Questions per step")
        ->capture_default_str();
    train_cmd->add_option("--rollouts", train.trainer.rollouts, "Rollouts per question")
        ->capture_default_str();
    train_cmd->add_option("--max-turns", train.trainer.max_turns, "Turn cap per episode")
        ->capture_default_str();
    train_cmd->add_option("--lr", train.trainer.learning_rate, "Learning rate")
        ->capture_default_str();
    train_cmd->add_option("--gamma", train.trainer.reward.gamma, "Per-call reward decay")
        ->capture_default_str();
    train_cmd->add_option("--tool-bonus", train.trainer.reward.tool_bonus_value,
                          "Tool-use bonus on correct episodes")
        ->capture_default_str();
    train_cmd->add_option("--corruption", train.trainer.corruption_rate,
                          "Action-string corruption probability")
        ->capture_default_str();
    train_cmd->add_flag("--guess,!--no-guess", train.trainer.guess_mode,
                        "Judge blind answers as 1/C guesses")
        ->capture_default_str();
    train_cmd
        ->add_flag("--accept-repaired,!--strict-format", train.trainer.reward.accept_repaired_format,
                   "Format reward tolerates repaired strings")
        ->capture_default_str();

    // eval ---------------------------------------------------------------
    cli::EvalCliConfig eval;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a saved policy on a corpus");
    eval_cmd->set_config("--config", "", "Read options from an INI file (flags win)");
    eval_cmd->add_option("--policy", eval.policy, "Policy file")->capture_default_str();
    eval_cmd->add_option("--corpus", eval.corpus, "Corpus file")->capture_default_str();
    eval_cmd->add_option("--out", eval.out, "Optional report file")->capture_default_str();
    eval_cmd->add_option("--rollouts", eval.eval.rollouts_per_question, "Rollouts per question")
        ->capture_default_str();
    eval_cmd->add_option("--seed", eval.eval.seed, "Evaluation seed")->capture_default_str();

    // synth ----------------------------------------------------------------
    cli::SynthCliConfig synth;
    auto* synth_cmd = app.add_subcommand("synth", "Run the trajectory-synthesis pipeline");
    synth_cmd->set_config("--config", "", "Read options from an INI file (flags win)");
    synth_cmd->add_option("--corpus", synth.corpus, "Corpus file")->capture_default_str();
    synth_cmd->add_option("--out-dir", synth.out_dir, "Output directory")->capture_default_str();
    synth_cmd->add_option("--client", synth.client, "Model client: mock | remote")
        ->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed, "Mock client seed")->capture_default_str();
    synth_cmd->add_option("--candidates", synth.synth.candidates_per_item, "Candidates per item")
        ->capture_default_str();
    synth_cmd->add_option("--trials", synth.synth.curation_trials, "Curation trials per question")
        ->capture_default_str();
    synth_cmd->add_option("--retry-cap", synth.synth.retry_cap, "Attempts per client request")
        ->capture_default_str();
    synth_cmd->add_option("--max-turns", synth.synth.max_turns, "Turn cap per candidate")
        ->capture_default_str();
    synth_cmd->add_option("--endpoint", synth.remote.base_url, "Remote endpoint base URL")
        ->capture_default_str();
    synth_cmd->add_option("--endpoint-path", synth.remote.path, "Remote endpoint path")
        ->capture_default_str();
    synth_cmd->add_option("--model", synth.remote.model, "Remote model name")
        ->capture_default_str();
    synth_cmd->add_option("--temperature", synth.remote.temperature, "Remote decoding temperature")
        ->capture_default_str();
    synth_cmd->add_option("--timeout", synth.remote.timeout_seconds, "Remote timeout (seconds)")
        ->capture_default_str();
    synth_cmd->add_option("--retries", synth.remote.max_retries, "Remote transport retries")
        ->capture_default_str();
    synth_cmd->add_option("--token-env", synth.remote.token_env_var,
                          "Environment variable holding the bearer token")
        ->capture_default_str();

    // report ---------------------------------------------------------------
    cli::ReportCliConfig report;
    auto* report_cmd = app.add_subcommand("report", "Compare training runs");
    report_cmd->set_config("--config", "", "Read options from an INI file (flags win)");
    report_cmd->add_option("metrics", report.metrics_files, "Metrics CSV files")->required();
    report_cmd->add_option("--out-dir", report.out_dir, "Output directory")->capture_default_str();
    report_cmd->add_option("--threshold", report.threshold, "Valid-tool-reward crossing level")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_cmd->parsed()) {
            for (int g = 0; g < 4; ++g) gen.sandbox.granularity_weights[g] = weights[g];
            return cli::cmd_gen_sandbox(gen);
        }
        if (train_cmd->parsed()) {
            train.trainer.algo = trainer::algo_from_name(algo);
            return cli::cmd_train(train);
        }
        if (eval_cmd->parsed()) return cli::cmd_eval(eval);
        if (synth_cmd->parsed()) return cli::cmd_synth(synth);
        if (report_cmd->parsed()) return cli::cmd_report(report);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
