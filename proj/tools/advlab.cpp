#include <cstdio>
#include <cstdlib>
#include <string>

#include "CLI11.hpp"

#include "advlab/config.hpp"
#include "advlab/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"advlab: adversarial robustness laboratory"};
    app.fallthrough();
    app.require_subcommand(1);

    std::string config_path, out_dir, stage;
    unsigned long long seed = 0;
    int jobs = 0;
    auto* opt_config = app.add_option("--config", config_path, "experiment config file")->required();
    auto* opt_out = app.add_option("--out", out_dir, "output directory (overrides the config)");
    auto* opt_seed = app.add_option("--seed", seed, "global seed (overrides the config)");
    app.add_option("--stage", stage, "recompute from this stage onward");
    app.add_option("--jobs", jobs, "worker threads for batched linear algebra")->check(CLI::Range(1, 256));

    app.add_subcommand("train", "build the dataset, train the regular and both adversarial models");
    app.add_subcommand("attack", "additionally evaluate the accuracy grid over all models");
    app.add_subcommand("distill", "additionally distill robust datasets and train robust models");
    app.add_subcommand("analyze", "run the full pipeline including representation analysis");
    app.add_subcommand("pipeline", "run every stage end to end");
    app.add_subcommand("report", "regenerate report.json from persisted artifacts");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }
    (void)opt_config;

    advlab::ExperimentConfig cfg;
    try {
        cfg = advlab::load_experiment_config(config_path);
    } catch (const advlab::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    }
    if (opt_seed->count() > 0) cfg.seed = seed;
    if (opt_out->count() > 0) cfg.out_dir = out_dir;
    if (const char* env = std::getenv("ADVLAB_OUT"); env != nullptr && *env != '\0') cfg.out_dir = env;

    advlab::RunOptions options;
    options.resume_stage = stage;
    options.jobs = jobs;
    const std::string cmd = app.get_subcommands().at(0)->get_name();
    return advlab::run_command(cmd, cfg, options);
}
