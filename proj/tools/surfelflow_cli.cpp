// surfelflow command line: gen-scene | train | extract-mesh | eval.
// Thin shell over the C API; every subcommand takes --config and optional
// --seed / --threads / --lora-rank overrides.

#include <CLI11.hpp>

#include <cstdio>

#include "surfelflow/surfelflow.h"

namespace {

struct CommonArgs {
    std::string config;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
    int lora_rank = -1;  // -1: keep config value
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config, "run config file (json)")->required();
    cmd->add_option("--seed", args.seed, "override config seed")->each([&](const std::string&) {
        args.seed_set = true;
    });
    cmd->add_option("--threads", args.threads, "worker threads, 0 = auto");
    cmd->add_option("--lora-rank", args.lora_rank, "override LoRA rank (0 disables IMT)");
}

int run_stage(const CommonArgs& args, sf_status (*stage)(sf_run*)) {
    if (sf_set_threads(args.threads) != SF_OK) {
        std::fprintf(stderr, "error: %s\n", sf_last_error());
        return SF_ERR_CONFIG;
    }
    sf_run* run = nullptr;
    sf_status st = sf_run_open(args.config.c_str(), &run);
    if (st != SF_OK) {
        std::fprintf(stderr, "error: %s\n", sf_last_error());
        return st;
    }
    if (st == SF_OK && args.seed_set) st = sf_run_set_seed(run, args.seed);
    if (st == SF_OK && args.lora_rank >= 0) st = sf_run_set_lora_rank(run, args.lora_rank);
    if (st == SF_OK) st = stage(run);
    if (st != SF_OK) std::fprintf(stderr, "error: %s\n", sf_last_error());
    sf_run_close(run);
    return st;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dynamic surface reconstruction with 2D Gaussian surfels"};
    app.require_subcommand(1);

    CommonArgs gen_args, train_args, extract_args, eval_args;
    CLI::App* gen = app.add_subcommand("gen-scene", "render a synthetic dataset");
    add_common(gen, gen_args);
    CLI::App* train = app.add_subcommand("train", "train surfels and velocity fields");
    add_common(train, train_args);
    CLI::App* extract = app.add_subcommand("extract-mesh", "fuse and mesh all non-virtual timesteps");
    add_common(extract, extract_args);
    CLI::App* eval = app.add_subcommand("eval", "evaluate meshes against the analytic scene");
    add_common(eval, eval_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        // CLI11's own exit codes are not part of our contract; fold parse
        // failures into the config-error code, keep --help at 0.
        return code == 0 ? 0 : SF_ERR_CONFIG;
    }

    if (gen->parsed()) return run_stage(gen_args, sf_run_generate_scene);
    if (train->parsed()) return run_stage(train_args, sf_run_train);
    if (extract->parsed()) return run_stage(extract_args, sf_run_extract_meshes);
    if (eval->parsed()) return run_stage(eval_args, sf_run_evaluate);
    return SF_ERR_CONFIG;
}
