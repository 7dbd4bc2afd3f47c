// specfed: collaborative wideband spectrum sensing and scheduling simulator.
// Subcommands cover the full pipeline: dataset generation, CL/LL/FL
// training, fusion evaluation, RL scheduling, convergence-bound
// verification and report aggregation.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "specfed/experiment.hpp"

namespace {

specfed::ExperimentConfig load(const std::string& config_path, std::uint64_t seed_override,
                               bool has_seed) {
    auto cfg = specfed::load_config(config_path);
    if (has_seed) {
        cfg.seed = seed_override;
        cfg.gen.seed = seed_override;
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"collaborative wideband spectrum sensing and scheduling simulator"};
    app.require_subcommand(1);

    std::string config_path = "configs/default.json";
    std::string out_dir, data_dir, models_dir, artifact_dir;
    std::uint64_t seed = 0;
    bool has_seed = false;

    auto add_common = [&](CLI::App* cmd, bool needs_out) {
        cmd->add_option("--config", config_path, "experiment config (JSON)")->capture_default_str();
        cmd->add_option_function<std::uint64_t>(
               "--seed", [&](std::uint64_t v) { seed = v; has_seed = true; }, "master seed override");
        if (needs_out) cmd->add_option("--out", out_dir, "output directory");
    };

    auto* gen = app.add_subcommand("gen", "generate the synthetic multi-cell I/Q dataset");
    add_common(gen, true);

    auto* train = app.add_subcommand("train", "train sensing models (cl | ll | fl)");
    add_common(train, true);
    std::string regime, aggregation;
    train->add_option("--regime", regime, "cl | ll | fl (overrides config)");
    train->add_option("--agg", aggregation, "fedavg | pwfedavg (overrides config)");
    train->add_option("--data", data_dir, "directory with uav<k>.spcf files")->required();

    auto* fuse = app.add_subcommand("fuse-eval", "evaluate n-out-of-K fusion on eval slots");
    add_common(fuse, true);
    int fusion_n = 0;
    fuse->add_option("--data", data_dir, "directory with uav<k>.spcf files")->required();
    fuse->add_option("--models", models_dir, "directory with model checkpoints")->required();
    fuse->add_option("--n", fusion_n, "fusion threshold override");

    auto* rl = app.add_subcommand("rl", "train a spectrum scheduling agent");
    add_common(rl, true);
    std::string agent;
    int uavs = 0;
    std::uint64_t episodes = 0;
    rl->add_option("--agent", agent, "tabular | dqn | ddqn | ddqn-soft (overrides config)");
    rl->add_option("--uavs", uavs, "number of scheduled UAVs (overrides config)");
    rl->add_option("--episodes", episodes, "training episodes (overrides config)");
    rl->add_option("--models", models_dir, "checkpoints for fused observation mode");

    auto* bounds = app.add_subcommand("verify-bounds", "verify Lemmas 1-3 and Theorem 1 numerically");
    add_common(bounds, true);

    auto* report = app.add_subcommand("report", "aggregate artifacts into summary tables");
    report->add_option("--dir", artifact_dir, "artifact directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            auto cfg = load(config_path, seed, has_seed);
            if (out_dir.empty()) out_dir = cfg.output_dir + "/data";
            specfed::cmd_gen(cfg, out_dir);
            std::cout << "dataset written to " << out_dir << "\n";
        } else if (train->parsed()) {
            auto cfg = load(config_path, seed, has_seed);
            if (!regime.empty()) cfg.train.regime = regime;
            if (cfg.train.regime != "cl" && cfg.train.regime != "ll" && cfg.train.regime != "fl")
                throw std::invalid_argument("train.regime must be cl, ll or fl");
            if (!aggregation.empty()) cfg.train.rule = specfed::aggregation_from_string(aggregation);
            if (out_dir.empty()) out_dir = cfg.output_dir + "/train";
            specfed::cmd_train(cfg, data_dir, out_dir);
            std::cout << "models and metrics written to " << out_dir << "\n";
        } else if (fuse->parsed()) {
            auto cfg = load(config_path, seed, has_seed);
            if (fusion_n > 0) cfg.fusion_n = fusion_n;
            if (out_dir.empty()) out_dir = cfg.output_dir + "/fusion";
            specfed::cmd_fuse_eval(cfg, data_dir, models_dir, out_dir);
            std::cout << "fusion metrics written to " << out_dir << "\n";
        } else if (rl->parsed()) {
            auto cfg = load(config_path, seed, has_seed);
            if (!agent.empty()) cfg.rl.agent = specfed::agent_variant_from_string(agent);
            if (uavs > 0) cfg.rl.run.num_uavs = uavs;
            if (episodes > 0) cfg.rl.run.episodes = episodes;
            if (out_dir.empty()) out_dir = cfg.output_dir + "/rl";
            specfed::cmd_rl(cfg, out_dir, models_dir);
            std::cout << "episode logs written to " << out_dir << "\n";
        } else if (bounds->parsed()) {
            auto cfg = load(config_path, seed, has_seed);
            if (out_dir.empty()) out_dir = cfg.output_dir + "/bounds";
            specfed::cmd_verify_bounds(cfg, out_dir);
            std::cout << "bound traces written to " << out_dir << "\n";
        } else if (report->parsed()) {
            specfed::cmd_report(artifact_dir);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
