#include <CLI11.hpp>

#include "fedstream/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"fedstream: federated continual-learning simulator on drifting streams"};
    app.require_subcommand(1);

    fedstream::RunOptions opt;
    std::uint64_t seed = 0;
    long eval_interval = 0;
    bool parallel = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opt.config_path, "scenario config file")->required();
        cmd->add_option("--seed", seed, "master seed override");
        cmd->add_option("--out", opt.out_dir, "output directory");
    };

    auto* run = app.add_subcommand("run", "run a scenario and write metrics/events");
    add_common(run);
    run->add_flag("--parallel", parallel, "ingest devices concurrently (per-iteration barrier)");
    run->add_option("--eval-interval", eval_interval, "iterations between evaluations");

    auto* gen = app.add_subcommand("gen", "materialize synthetic streams and the test set");
    add_common(gen);

    std::string replay_path;
    int delta = 100;
    double alpha = 0.05;
    auto* replay = app.add_subcommand("drift-replay", "replay a confidence log through the detector");
    replay->add_option("file", replay_path, "one confidence per line, values in (0,1)")->required();
    replay->add_option("--delta", delta, "detector delta");
    replay->add_option("--alpha", alpha, "detector sensitivity");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) {
        if (run->count("--seed")) opt.seed = seed;
        if (run->count("--parallel")) opt.parallel = true;
        if (run->count("--eval-interval")) opt.eval_interval = eval_interval;
        return fedstream::cmd_run(opt);
    }
    if (gen->parsed()) {
        if (gen->count("--seed")) opt.seed = seed;
        return fedstream::cmd_gen(opt);
    }
    return fedstream::cmd_drift_replay(replay_path, delta, alpha);
}
