#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "specfed/convergence.hpp"
#include "specfed/federation.hpp"
#include "specfed/fusion.hpp"
#include "specfed/scheduling.hpp"
#include "specfed/specgen.hpp"

namespace specfed {

using json = nlohmann::json;

/// Schema errors name the offending key so a typo is visible immediately.
inline void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& context) {
    if (!obj.is_object()) throw std::invalid_argument("config section '" + context + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (!allowed.count(key))
            throw std::invalid_argument("unknown config key '" + key + "' in " + context);
    }
}

inline std::vector<TransitionMatrix> parse_markov(const json& j, int num_subchannels,
                                                  const std::string& context) {
    check_keys(j, {"p01", "p10"}, context);
    const auto p01 = j.at("p01").get<std::vector<double>>();
    const auto p10 = j.at("p10").get<std::vector<double>>();
    if (static_cast<int>(p01.size()) != num_subchannels || static_cast<int>(p10.size()) != num_subchannels)
        throw std::invalid_argument(context + ": p01/p10 need one entry per subchannel");
    std::vector<TransitionMatrix> out;
    out.reserve(p01.size());
    for (std::size_t m = 0; m < p01.size(); ++m) out.push_back(TransitionMatrix::from_rates(p01[m], p10[m]));
    return out;
}

/// Default per-subchannel dynamics: moderately persistent chains with
/// occupancy rates spread over roughly [0.17, 0.42] so vacancies dominate
/// but every subchannel stays active.
inline std::vector<TransitionMatrix> default_markov(int num_subchannels) {
    std::vector<TransitionMatrix> out;
    out.reserve(static_cast<std::size_t>(num_subchannels));
    for (int m = 0; m < num_subchannels; ++m) {
        const double f = num_subchannels > 1 ? static_cast<double>(m) / (num_subchannels - 1) : 0.0;
        const double p01 = 0.06 + 0.10 * f;
        const double p10 = 0.30 - 0.08 * f;
        out.push_back(TransitionMatrix::from_rates(p01, p10));
    }
    return out;
}

/// Default link gains: UAV 0 sits at a weak location that barely hears the
/// neighbouring stations; UAVs 1 and 2 receive strong, balanced signals.
inline std::vector<std::vector<double>> default_link_gain(int num_uavs, int num_stations) {
    std::vector<std::vector<double>> g(static_cast<std::size_t>(num_uavs),
                                       std::vector<double>(static_cast<std::size_t>(num_stations), 1.0));
    for (int k = 0; k < num_uavs; ++k) {
        for (int b = 0; b < num_stations; ++b) {
            double v;
            if (k == 0) {
                v = (b == 0) ? 0.4 : 0.05;  // weak overall, nearly deaf to the other cells
            } else {
                v = (b == k % num_stations) ? 1.0 : 0.75;
            }
            g[static_cast<std::size_t>(k)][static_cast<std::size_t>(b)] = v;
        }
    }
    return g;
}

struct TrainConfig {
    std::string regime = "fl";  // cl | ll | fl
    AggregationRule rule = AggregationRule::PwFedAvg;
    int epochs = 25;
    int batch_size = 64;
    double lr = 0.05;
    std::uint64_t rounds = 1500;
    int local_epochs = 1;
    double local_lr = 0.05;
    GammaSchedule gamma;
    PowerMode power_mode = PowerMode::Batch;
};

struct ModelConfig {
    int base_filters = 16;
    int kernel = 3;
};

struct RlConfig {
    AgentVariant agent = AgentVariant::DdqnSoft;
    RlRunConfig run;
    DqnConfig dqn;
    double tabular_lr = 0.1;
    bool observe_truth = true;
    std::vector<TransitionMatrix> matrices;
    std::vector<std::vector<double>> snr_db;  // K x M utility-table SNRs
    double t_a = 1e-3;
    double fused_snr_db = 10.0;  // capture SNR when the observation is fused
    int fusion_n = 2;
};

struct ConvergenceConfig {
    int dimension = 4;
    int clients = 3;
    std::uint64_t steps = 10000;
    std::uint64_t envelope_steps = 100000;
    std::vector<double> noise_rho = {0.5, 1.0, 1.5};
    std::vector<double> powers = {4.0, 1.0, 1.0};
    int replicates = 1000;
    int lemma2_rounds = 16;
    double lambda_min = 0.5;
    double lambda_max = 2.0;
    double center_spread = 1.0;
    StepSchedule::Kind schedule = StepSchedule::Kind::Proof;
    double constant_gamma = 0.1;
    std::uint64_t fit_lo = 1000;
    std::uint64_t fit_hi = 100000;
    int fit_runs = 16;
    std::uint64_t stochastic_steps = 2000;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    GenerationConfig gen;
    ModelConfig model;
    TrainConfig train;
    int fusion_n = 2;
    CostModel costs;
    RlConfig rl;
    ConvergenceConfig convergence;
};

inline AggregationRule aggregation_from_string(const std::string& s) {
    if (s == "fedavg") return AggregationRule::FedAvg;
    if (s == "pwfedavg") return AggregationRule::PwFedAvg;
    throw std::invalid_argument("unknown aggregation rule: " + s);
}

inline ExperimentConfig parse_config(const json& root) {
    check_keys(root, {"seed", "output_dir", "gen", "model", "train", "fusion", "costs", "rl", "convergence"},
               "config root");
    ExperimentConfig cfg;
    cfg.seed = root.value("seed", std::uint64_t{0});
    cfg.output_dir = root.value("output_dir", std::string("out"));

    if (root.contains("gen")) {
        const auto& g = root.at("gen");
        check_keys(g,
                   {"slots", "subchannels", "subcarriers_per_subchannel", "bandwidth_hz", "stations",
                    "uavs", "samples_per_record", "snr_grid_db", "train_fraction", "debug_occupancy",
                    "markov", "channel"},
                   "gen");
        cfg.gen.slots = g.value("slots", std::uint64_t{1000});
        cfg.gen.plan.num_subchannels = g.value("subchannels", 16);
        cfg.gen.plan.subcarriers_per_subchannel = g.value("subcarriers_per_subchannel", 4);
        cfg.gen.plan.bandwidth_hz = g.value("bandwidth_hz", 10e6);
        cfg.gen.plan.num_stations = g.value("stations", 3);
        cfg.gen.plan.num_uavs = g.value("uavs", 3);
        cfg.gen.samples_per_record = g.value("samples_per_record", 32);
        if (g.contains("snr_grid_db")) cfg.gen.snr_grid_db = g.at("snr_grid_db").get<std::vector<double>>();
        cfg.gen.train_fraction = g.value("train_fraction", 0.7);
        cfg.gen.debug_occupancy = g.value("debug_occupancy", false);
        if (g.contains("markov"))
            cfg.gen.markov = parse_markov(g.at("markov"), cfg.gen.plan.num_subchannels, "gen.markov");
        if (g.contains("channel")) {
            const auto& c = g.at("channel");
            check_keys(c, {"taps", "delay_spread", "decay", "link_gain"}, "gen.channel");
            cfg.gen.channel.taps = c.value("taps", 3);
            cfg.gen.channel.delay_spread = c.value("delay_spread", 3);
            cfg.gen.channel.decay = c.value("decay", 0.5);
            if (c.contains("link_gain"))
                cfg.gen.channel.link_gain = c.at("link_gain").get<std::vector<std::vector<double>>>();
        }
    }
    if (cfg.gen.markov.empty()) cfg.gen.markov = default_markov(cfg.gen.plan.num_subchannels);
    if (cfg.gen.channel.link_gain.empty())
        cfg.gen.channel.link_gain = default_link_gain(cfg.gen.plan.num_uavs, cfg.gen.plan.num_stations);
    cfg.gen.seed = cfg.seed;

    if (root.contains("model")) {
        const auto& m = root.at("model");
        check_keys(m, {"base_filters", "kernel"}, "model");
        cfg.model.base_filters = m.value("base_filters", 16);
        cfg.model.kernel = m.value("kernel", 3);
    }

    if (root.contains("train")) {
        const auto& t = root.at("train");
        check_keys(t,
                   {"regime", "aggregation", "epochs", "batch_size", "lr", "rounds", "local_epochs",
                    "local_lr", "gamma", "power_mode"},
                   "train");
        cfg.train.regime = t.value("regime", std::string("fl"));
        if (cfg.train.regime != "cl" && cfg.train.regime != "ll" && cfg.train.regime != "fl")
            throw std::invalid_argument("train.regime must be cl, ll or fl");
        cfg.train.rule = aggregation_from_string(t.value("aggregation", std::string("pwfedavg")));
        cfg.train.epochs = t.value("epochs", 25);
        cfg.train.batch_size = t.value("batch_size", 64);
        cfg.train.lr = t.value("lr", 0.05);
        cfg.train.rounds = t.value("rounds", std::uint64_t{1500});
        cfg.train.local_epochs = t.value("local_epochs", 1);
        cfg.train.local_lr = t.value("local_lr", 0.05);
        if (t.contains("gamma")) {
            const auto& ga = t.at("gamma");
            check_keys(ga, {"kind", "value", "beta", "smoothness"}, "train.gamma");
            const std::string kind = ga.value("kind", std::string("constant"));
            if (kind == "constant") {
                cfg.train.gamma.kind = GammaSchedule::Kind::Constant;
            } else if (kind == "proof") {
                cfg.train.gamma.kind = GammaSchedule::Kind::Proof;
            } else {
                throw std::invalid_argument("train.gamma.kind must be constant or proof");
            }
            cfg.train.gamma.value = ga.value("value", 0.05);
            cfg.train.gamma.beta = ga.value("beta", 1.0);
            cfg.train.gamma.smoothness = ga.value("smoothness", 1.0);
        } else {
            cfg.train.gamma.kind = GammaSchedule::Kind::Constant;
            cfg.train.gamma.value = cfg.train.lr;
        }
        const std::string pm = t.value("power_mode", std::string("batch"));
        if (pm == "batch") cfg.train.power_mode = PowerMode::Batch;
        else if (pm == "dataset") cfg.train.power_mode = PowerMode::Dataset;
        else throw std::invalid_argument("train.power_mode must be batch or dataset");
    } else {
        cfg.train.gamma.kind = GammaSchedule::Kind::Constant;
        cfg.train.gamma.value = cfg.train.lr;
    }

    if (root.contains("fusion")) {
        const auto& f = root.at("fusion");
        check_keys(f, {"n"}, "fusion");
        cfg.fusion_n = f.value("n", 2);
    }

    if (root.contains("costs")) {
        const auto& c = root.at("costs");
        check_keys(c, {"t_s", "t_b", "t_a", "t_req", "v_cc", "p_tx"}, "costs");
        cfg.costs.t_s = c.value("t_s", 1e-3);
        cfg.costs.t_b = c.value("t_b", 1e-3);
        cfg.costs.t_a = c.value("t_a", 1e-3);
        cfg.costs.t_req = c.value("t_req", 1e-3);
        cfg.costs.v_cc = c.value("v_cc", 1.0);
        cfg.costs.p_tx = c.value("p_tx", 0.2);
    }
    cfg.costs.subchannel_bandwidth_hz = cfg.gen.plan.subchannel_bandwidth_hz();

    if (root.contains("rl")) {
        const auto& r = root.at("rl");
        check_keys(r,
                   {"agent", "uavs", "episodes", "steps_per_episode", "gamma", "lr", "batch_size",
                    "replay_capacity", "polyak", "target_period", "hidden", "eps_start", "eps_end",
                    "eps_decay_fraction", "observe", "markov", "snr_db", "t_a", "tabular_lr",
                    "fused_snr_db", "fusion_n"},
                   "rl");
        cfg.rl.agent = agent_variant_from_string(r.value("agent", std::string("ddqn-soft")));
        cfg.rl.run.num_uavs = r.value("uavs", 1);
        cfg.rl.run.episodes = r.value("episodes", std::uint64_t{1500});
        cfg.rl.run.steps_per_episode = r.value("steps_per_episode", std::uint64_t{64});
        cfg.rl.dqn.gamma = r.value("gamma", 0.9);
        cfg.rl.dqn.lr = r.value("lr", 1e-3);
        cfg.rl.dqn.batch_size = r.value("batch_size", 64);
        cfg.rl.dqn.replay_capacity = r.value("replay_capacity", std::size_t{10000});
        cfg.rl.dqn.polyak = r.value("polyak", 0.01);
        cfg.rl.dqn.target_period = r.value("target_period", 100);
        cfg.rl.dqn.hidden = r.value("hidden", 64);
        cfg.rl.run.eps_start = r.value("eps_start", 1.0);
        cfg.rl.run.eps_end = r.value("eps_end", 0.05);
        cfg.rl.run.eps_decay_fraction = r.value("eps_decay_fraction", 0.8);
        cfg.rl.tabular_lr = r.value("tabular_lr", 0.1);
        const std::string obs = r.value("observe", std::string("truth"));
        if (obs == "truth") cfg.rl.observe_truth = true;
        else if (obs == "fused") cfg.rl.observe_truth = false;
        else throw std::invalid_argument("rl.observe must be truth or fused");
        if (r.contains("markov"))
            cfg.rl.matrices = parse_markov(r.at("markov"), cfg.gen.plan.num_subchannels, "rl.markov");
        if (r.contains("snr_db")) cfg.rl.snr_db = r.at("snr_db").get<std::vector<std::vector<double>>>();
        cfg.rl.t_a = r.value("t_a", 1e-3);
        cfg.rl.fused_snr_db = r.value("fused_snr_db", 10.0);
        cfg.rl.fusion_n = r.value("fusion_n", cfg.fusion_n);
    }
    if (cfg.rl.matrices.empty()) cfg.rl.matrices = cfg.gen.markov;

    if (root.contains("convergence")) {
        const auto& c = root.at("convergence");
        check_keys(c,
                   {"dimension", "clients", "steps", "envelope_steps", "noise_rho", "powers",
                    "replicates", "lemma2_rounds", "lambda_min", "lambda_max", "center_spread",
                    "schedule", "constant_gamma", "fit_lo", "fit_hi", "fit_runs", "stochastic_steps"},
                   "convergence");
        auto& cc = cfg.convergence;
        cc.dimension = c.value("dimension", 4);
        cc.clients = c.value("clients", 3);
        cc.steps = c.value("steps", std::uint64_t{10000});
        cc.envelope_steps = c.value("envelope_steps", std::uint64_t{100000});
        if (c.contains("noise_rho")) cc.noise_rho = c.at("noise_rho").get<std::vector<double>>();
        if (c.contains("powers")) cc.powers = c.at("powers").get<std::vector<double>>();
        cc.replicates = c.value("replicates", 1000);
        cc.lemma2_rounds = c.value("lemma2_rounds", 16);
        cc.lambda_min = c.value("lambda_min", 0.5);
        cc.lambda_max = c.value("lambda_max", 2.0);
        cc.center_spread = c.value("center_spread", 1.0);
        const std::string sched = c.value("schedule", std::string("proof"));
        if (sched == "proof") cc.schedule = StepSchedule::Kind::Proof;
        else if (sched == "statement") cc.schedule = StepSchedule::Kind::Statement;
        else if (sched == "constant") cc.schedule = StepSchedule::Kind::Constant;
        else throw std::invalid_argument("convergence.schedule must be proof, statement or constant");
        cc.constant_gamma = c.value("constant_gamma", 0.1);
        cc.fit_lo = c.value("fit_lo", std::uint64_t{1000});
        cc.fit_hi = c.value("fit_hi", std::uint64_t{100000});
        cc.fit_runs = c.value("fit_runs", 16);
        cc.stochastic_steps = c.value("stochastic_steps", std::uint64_t{2000});
        if (cc.noise_rho.size() != static_cast<std::size_t>(cc.clients) ||
            cc.powers.size() != static_cast<std::size_t>(cc.clients))
            throw std::invalid_argument("convergence.noise_rho and powers need one entry per client");
    }

    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    json root;
    try {
        root = json::parse(is);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config is not valid JSON: " + std::string(e.what()));
    }
    return parse_config(root);
}

}  // namespace specfed
