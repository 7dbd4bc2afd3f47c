#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "specfed/config.hpp"
#include "specfed/convergence.hpp"
#include "specfed/federation.hpp"
#include "specfed/fusion.hpp"
#include "specfed/scheduling.hpp"
#include "specfed/sensing.hpp"
#include "specfed/specgen.hpp"

namespace specfed {

namespace fs = std::filesystem;

inline std::vector<Dataset> load_all_datasets(const std::string& data_dir, int num_uavs) {
    std::vector<Dataset> out;
    out.reserve(static_cast<std::size_t>(num_uavs));
    for (int k = 0; k < num_uavs; ++k) out.push_back(load_dataset(dataset_path(data_dir, k), k));
    return out;
}

inline void write_json(const json& j, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// gen

inline json cmd_gen(const ExperimentConfig& cfg, const std::string& out_dir) {
    auto data = generate_dataset(cfg.gen, out_dir);
    json summary;
    summary["slots"] = cfg.gen.slots;
    summary["uavs"] = cfg.gen.plan.num_uavs;
    summary["snr_levels"] = cfg.gen.snr_grid_db;
    json per_uav = json::array();
    for (const auto& ds : data.per_uav) {
        json d;
        d["records"] = ds.records.size();
        d["train_records"] = ds.train_indices().size();
        double power = 0.0;
        for (const auto& r : ds.records) power += r.avg_power;
        d["mean_avg_power"] = ds.records.empty() ? 0.0 : power / static_cast<double>(ds.records.size());
        per_uav.push_back(d);
    }
    summary["per_uav"] = per_uav;
    write_json(summary, out_dir + "/summary_gen.json");
    return summary;
}

// ---------------------------------------------------------------------------
// train

inline std::string fl_regime_name(AggregationRule rule) {
    return rule == AggregationRule::FedAvg ? "fl-fedavg" : "fl-pwfedavg";
}

/// Trains one model per UAV on its own data (LL regime helper, reused by
/// fuse-eval defaults). Clients run in parallel.
inline std::vector<ModelWeights> train_local_models(const std::vector<Dataset>& datasets,
                                                    const ExperimentConfig& cfg) {
    const Layout layout = sensing_layout(datasets.front().num_subchannels,
                                         datasets.front().samples_per_record, cfg.model.base_filters,
                                         cfg.model.kernel);
    std::vector<ModelWeights> models(datasets.size());
    std::vector<SampleMatrix> samples(datasets.size());
    parallel_for(datasets.size(), [&](std::size_t k) {
        auto init_rng = RandomStream::child(cfg.seed, StreamDomain::ModelInit, 10 + k);
        models[k] = init_weights(layout, init_rng);
        samples[k] = to_samples(datasets[k]);
        TrainOptions opt{cfg.train.epochs, cfg.train.batch_size, cfg.train.lr,
                         derive_seed(cfg.seed, StreamDomain::Shuffle, 10 + k)};
        const auto train_idx = datasets[k].train_indices();
        train_local(models[k], samples[k], train_idx, opt);
    });
    return models;
}

inline FederationResult train_federated_model(const std::vector<Dataset>& datasets,
                                              const ExperimentConfig& cfg, AggregationRule rule) {
    const Layout layout = sensing_layout(datasets.front().num_subchannels,
                                         datasets.front().samples_per_record, cfg.model.base_filters,
                                         cfg.model.kernel);
    std::vector<ClientState> clients;
    for (std::size_t k = 0; k < datasets.size(); ++k)
        clients.push_back(make_client(static_cast<int>(k), datasets[k], layout));
    auto init_rng = RandomStream::child(cfg.seed, StreamDomain::ModelInit, 1);
    ModelWeights global = init_weights(layout, init_rng);
    FederationConfig fc;
    fc.rounds = cfg.train.rounds;
    fc.local_epochs = cfg.train.local_epochs;
    fc.batch_size = cfg.train.batch_size;
    fc.local_lr = cfg.train.local_lr;
    fc.gamma = cfg.train.gamma;
    fc.rule = rule;
    fc.power_mode = cfg.train.power_mode;
    fc.seed = cfg.seed;
    return run_federated(clients, std::move(global), fc);
}

inline json cmd_train(const ExperimentConfig& cfg, const std::string& data_dir,
                      const std::string& out_dir) {
    const auto datasets = load_all_datasets(data_dir, cfg.gen.plan.num_uavs);
    fs::create_directories(out_dir);
    const Layout layout = sensing_layout(datasets.front().num_subchannels,
                                         datasets.front().samples_per_record, cfg.model.base_filters,
                                         cfg.model.kernel);
    json summary;
    summary["regime"] = cfg.train.regime;
    std::vector<MetricsReport> rows;

    if (cfg.train.regime == "cl") {
        // pool every UAV's data into one training run
        SampleMatrix pooled;
        pooled.input_size = 2 * datasets.front().samples_per_record;
        pooled.target_size = datasets.front().num_subchannels;
        std::vector<std::size_t> train_idx;
        for (const auto& ds : datasets) {
            const std::size_t base = pooled.size();
            auto m = to_samples(ds);
            pooled.inputs.insert(pooled.inputs.end(), m.inputs.begin(), m.inputs.end());
            pooled.targets.insert(pooled.targets.end(), m.targets.begin(), m.targets.end());
            for (auto i : ds.train_indices()) train_idx.push_back(base + i);
        }
        auto init_rng = RandomStream::child(cfg.seed, StreamDomain::ModelInit, 0);
        ModelWeights model = init_weights(layout, init_rng);
        TrainOptions opt{cfg.train.epochs, cfg.train.batch_size, cfg.train.lr,
                         derive_seed(cfg.seed, StreamDomain::Shuffle, 0)};
        const auto curve = train_local(model, pooled, train_idx, opt);
        save_weights(model, out_dir + "/model_cl.spnn");
        summary["final_loss"] = curve.back();
        for (std::size_t k = 0; k < datasets.size(); ++k) {
            auto r = evaluate_per_snr(model, datasets[k], "cl", static_cast<int>(k));
            rows.insert(rows.end(), r.begin(), r.end());
        }
        write_metrics_csv(rows, out_dir + "/metrics_cl.csv");
    } else if (cfg.train.regime == "ll") {
        const auto models = train_local_models(datasets, cfg);
        for (std::size_t k = 0; k < models.size(); ++k) {
            save_weights(models[k], out_dir + "/model_ll_uav" + std::to_string(k) + ".spnn");
            auto r = evaluate_per_snr(models[k], datasets[k], "ll", static_cast<int>(k));
            rows.insert(rows.end(), r.begin(), r.end());
        }
        // cross-location matrix: model trained at location k, tested everywhere
        for (std::size_t k = 0; k < models.size(); ++k) {
            for (std::size_t j = 0; j < datasets.size(); ++j) {
                if (j == k) continue;
                auto r = evaluate_per_snr(models[k], datasets[j], "ll_model" + std::to_string(k),
                                          static_cast<int>(j));
                rows.insert(rows.end(), r.begin(), r.end());
            }
        }
        write_metrics_csv(rows, out_dir + "/metrics_ll.csv");
    } else {
        const auto result = train_federated_model(datasets, cfg, cfg.train.rule);
        const std::string regime = fl_regime_name(cfg.train.rule);
        save_weights(result.global, out_dir + "/model_" + regime + ".spnn");
        write_round_log(result.history, out_dir + "/rounds_" + regime + ".csv");
        for (std::size_t k = 0; k < datasets.size(); ++k) {
            auto r = evaluate_per_snr(result.global, datasets[k], regime, static_cast<int>(k));
            rows.insert(rows.end(), r.begin(), r.end());
        }
        write_metrics_csv(rows, out_dir + "/metrics_" + regime + ".csv");
        summary["rounds"] = result.history.size();
        summary["final_global_loss"] = result.history.empty() ? 0.0 : result.history.back().global_loss;
        summary["regime"] = regime;
    }

    json jrows = json::array();
    for (const auto& r : rows) {
        json jr;
        jr["regime"] = r.regime;
        jr["uav"] = r.uav;
        jr["snr_db"] = r.snr_db;
        jr["f1"] = r.f1;
        jrows.push_back(jr);
    }
    summary["metrics"] = jrows;
    write_json(summary, out_dir + "/summary_train_" + summary["regime"].get<std::string>() + ".json");
    return summary;
}

// ---------------------------------------------------------------------------
// fuse-eval

struct FusionEvalResult {
    std::vector<MetricsReport> rows;        // fused + individual, per SNR
    std::vector<std::vector<FusionFrame>> frames_per_snr;
};

/// Evaluates n-out-of-K fusion on time-aligned eval slots: each UAV's model
/// predicts on its own capture of the same slot, votes are fused and scored
/// against the shared ground truth.
inline FusionEvalResult evaluate_fusion(const std::vector<Dataset>& datasets,
                                        const std::vector<ModelWeights>& models, int fusion_n) {
    const int m_n = datasets.front().num_subchannels;
    const int k_n = static_cast<int>(datasets.size());
    FusionEvalResult res;
    for (std::size_t si = 0; si < datasets.front().snr_levels_db.size(); ++si) {
        const double snr = datasets.front().snr_levels_db[si];
        std::vector<std::vector<std::size_t>> idx(static_cast<std::size_t>(k_n));
        for (int k = 0; k < k_n; ++k) {
            idx[static_cast<std::size_t>(k)] = datasets[static_cast<std::size_t>(k)].eval_indices_at_snr(snr);
            if (idx[static_cast<std::size_t>(k)].size() != idx[0].size())
                throw std::runtime_error("eval slots are not aligned across UAVs");
        }
        const std::size_t slots = idx[0].size();
        // per-UAV hard predictions, parallel over records
        std::vector<std::vector<std::uint32_t>> preds(static_cast<std::size_t>(k_n));
        for (int k = 0; k < k_n; ++k)
            preds[static_cast<std::size_t>(k)] =
                predict_hard(models[static_cast<std::size_t>(k)], datasets[static_cast<std::size_t>(k)],
                             idx[static_cast<std::size_t>(k)]);

        std::vector<std::uint32_t> fused(slots), labels(slots);
        std::vector<FusionFrame> frames(slots);
        std::uint32_t z_prev = ~0u;  // nothing declared vacant before the first slot
        for (std::size_t s = 0; s < slots; ++s) {
            std::vector<std::uint32_t> votes(static_cast<std::size_t>(k_n));
            const std::uint64_t slot = datasets[0].records[idx[0][s]].slot;
            const std::uint32_t label = datasets[0].records[idx[0][s]].label;
            for (int k = 0; k < k_n; ++k) {
                const auto& rec = datasets[static_cast<std::size_t>(k)].records[idx[static_cast<std::size_t>(k)][s]];
                if (rec.slot != slot || rec.label != label)
                    throw std::runtime_error("record alignment mismatch across UAVs");
                votes[static_cast<std::size_t>(k)] = preds[static_cast<std::size_t>(k)][s];
            }
            const std::uint32_t z = fuse(votes, fusion_n, m_n);
            fused[s] = z;
            labels[s] = label;
            FusionFrame f;
            f.t = slot;
            f.preds = std::move(votes);
            f.z = z;
            f.z_true = label;
            f.c = collision_indicator(label, z_prev, m_n);
            f.n = fusion_n;
            frames[s] = std::move(f);
            z_prev = z;
        }

        auto fused_row = micro_metrics(fused, labels, m_n);
        fused_row.regime = "fused-n" + std::to_string(fusion_n);
        fused_row.uav = -1;
        fused_row.snr_db = snr;
        res.rows.push_back(std::move(fused_row));
        for (int k = 0; k < k_n; ++k) {
            auto row = micro_metrics(preds[static_cast<std::size_t>(k)], labels, m_n);
            row.regime = "individual";
            row.uav = k;
            row.snr_db = snr;
            res.rows.push_back(std::move(row));
        }
        res.frames_per_snr.push_back(std::move(frames));
    }
    return res;
}

inline json cmd_fuse_eval(const ExperimentConfig& cfg, const std::string& data_dir,
                          const std::string& models_dir, const std::string& out_dir) {
    const auto datasets = load_all_datasets(data_dir, cfg.gen.plan.num_uavs);
    fs::create_directories(out_dir);
    const Layout layout = sensing_layout(datasets.front().num_subchannels,
                                         datasets.front().samples_per_record, cfg.model.base_filters,
                                         cfg.model.kernel);
    std::vector<ModelWeights> models;
    for (int k = 0; k < cfg.gen.plan.num_uavs; ++k) {
        const std::string per_uav = models_dir + "/model_ll_uav" + std::to_string(k) + ".spnn";
        if (fs::exists(per_uav)) {
            models.push_back(load_weights(layout, per_uav));
            continue;
        }
        // fall back to a shared model deployed at every UAV
        for (const char* shared : {"/model_cl.spnn", "/model_fl-pwfedavg.spnn", "/model_fl-fedavg.spnn"}) {
            if (fs::exists(models_dir + shared)) {
                models.push_back(load_weights(layout, models_dir + shared));
                break;
            }
        }
        if (static_cast<int>(models.size()) != k + 1)
            throw std::runtime_error("no usable model checkpoint found in " + models_dir);
    }

    auto res = evaluate_fusion(datasets, models, cfg.fusion_n);
    write_metrics_csv(res.rows, out_dir + "/metrics_fused.csv");
    for (std::size_t si = 0; si < res.frames_per_snr.size(); ++si)
        write_fusion_trace(res.frames_per_snr[si], datasets.front().num_subchannels,
                           out_dir + "/fusion_snr" + std::to_string(si) + ".csv");

    json summary;
    summary["fusion_n"] = cfg.fusion_n;
    json jrows = json::array();
    for (const auto& r : res.rows) {
        json jr;
        jr["regime"] = r.regime;
        jr["uav"] = r.uav;
        jr["snr_db"] = r.snr_db;
        jr["f1"] = r.f1;
        jrows.push_back(jr);
    }
    summary["metrics"] = jrows;
    write_json(summary, out_dir + "/summary_fusion.json");
    return summary;
}

// ---------------------------------------------------------------------------
// rl

/// Per-(UAV, subchannel) SNR from the scenario channels: the link's
/// frequency response magnitude at the subchannel center, normalized so the
/// mean linear SNR across the table matches the reference level (the
/// normalizer plays the role of the noise variance).
inline std::vector<std::vector<double>> derive_snr_table(const GenerationConfig& gen,
                                                         double ref_mean_snr_db) {
    const auto channels = make_scenario_channels(gen);
    const int k_n = gen.plan.num_uavs;
    const int m_n = gen.plan.num_subchannels;
    const int nfft = gen.plan.fft_size();
    std::vector<std::vector<double>> gain(static_cast<std::size_t>(k_n),
                                          std::vector<double>(static_cast<std::size_t>(m_n), 0.0));
    double total = 0.0;
    for (int k = 0; k < k_n; ++k) {
        for (int m = 0; m < m_n; ++m) {
            const double f_center =
                (static_cast<double>(m) + 0.5) * gen.plan.subcarriers_per_subchannel / nfft;
            double g = 0.0;
            for (int b = 0; b < gen.plan.num_stations; ++b) {
                std::complex<double> h{0.0, 0.0};
                for (const auto& tap : channels[static_cast<std::size_t>(k)][static_cast<std::size_t>(b)].taps) {
                    const double ang = -2.0 * std::numbers::pi * f_center * tap.delay;
                    h += tap.gain * std::complex<double>(std::cos(ang), std::sin(ang));
                }
                g += std::norm(h);
            }
            gain[static_cast<std::size_t>(k)][static_cast<std::size_t>(m)] = g;
            total += g;
        }
    }
    const double mean_gain = total / static_cast<double>(k_n * m_n);
    const double ref = std::pow(10.0, ref_mean_snr_db / 10.0);
    std::vector<std::vector<double>> snr = gain;
    for (auto& row : snr)
        for (auto& v : row) v = v / mean_gain * ref;  // linear SNR
    return snr;
}

inline std::vector<std::vector<double>> utility_table_from_snr(
    const std::vector<std::vector<double>>& snr_linear, double t_a, double subchannel_bw) {
    std::vector<std::vector<double>> u(snr_linear.size());
    for (std::size_t k = 0; k < snr_linear.size(); ++k) {
        u[k].reserve(snr_linear[k].size());
        for (double s : snr_linear[k]) u[k].push_back(utility(t_a, subchannel_bw, s));
    }
    return u;
}

struct RlSetup {
    MdpEnvConfig env;
    DqnConfig dqn;
    RlRunConfig run;
};

inline RlSetup make_rl_setup(const ExperimentConfig& cfg, int num_uavs_override = 0) {
    RlSetup s;
    s.env.matrices = cfg.rl.matrices;
    const int num_uavs = num_uavs_override > 0 ? num_uavs_override : cfg.rl.run.num_uavs;
    std::vector<std::vector<double>> snr_linear;
    if (!cfg.rl.snr_db.empty()) {
        for (const auto& row : cfg.rl.snr_db) {
            std::vector<double> lin;
            for (double db : row) lin.push_back(std::pow(10.0, db / 10.0));
            snr_linear.push_back(std::move(lin));
        }
    } else {
        snr_linear = derive_snr_table(cfg.gen, 10.0);
    }
    snr_linear.resize(static_cast<std::size_t>(num_uavs), snr_linear.back());
    s.env.utility_table =
        utility_table_from_snr(snr_linear, cfg.rl.t_a, cfg.gen.plan.subchannel_bandwidth_hz());
    s.env.observe_truth = cfg.rl.observe_truth;
    s.env.num_stations = cfg.rl.observe_truth ? 1 : cfg.gen.plan.num_stations;
    s.dqn = cfg.rl.dqn;
    double u_max = 0.0;
    for (const auto& row : s.env.utility_table)
        for (double v : row) u_max = std::max(u_max, v);
    s.dqn.reward_scale = u_max > 0.0 ? 1.0 / u_max : 1.0;
    s.run = cfg.rl.run;
    s.run.num_uavs = num_uavs;
    s.run.seed = cfg.seed;
    return s;
}

/// Builds the Algorithm-2 observer: per-station waveforms for the slot,
/// per-UAV capture and noise, model inference, n-out-of-K fusion.
inline MdpEnv::FusedObserver make_fused_observer(const ExperimentConfig& cfg,
                                                 std::vector<ModelWeights> models) {
    const auto channels = make_scenario_channels(cfg.gen);
    const auto plan = cfg.gen.plan;
    const int j_n = cfg.gen.samples_per_record;
    const double snr_db = cfg.rl.fused_snr_db;
    const int fusion_n = cfg.rl.fusion_n;
    const std::uint64_t seed = derive_seed(cfg.seed, StreamDomain::EnvInit, 0xf05ed);
    return [=, models = std::move(models)](std::span<const std::uint32_t> station_masks,
                                           std::uint64_t slot) -> std::uint32_t {
        std::vector<std::vector<std::complex<double>>> signals(station_masks.size());
        for (std::size_t b = 0; b < station_masks.size(); ++b) {
            auto rng = RandomStream::child(seed, StreamDomain::Waveform, slot * station_masks.size() + b);
            signals[b] = synth_waveform(plan, station_masks[b], rng);
        }
        std::vector<std::uint32_t> votes(models.size());
        for (std::size_t k = 0; k < models.size(); ++k) {
            auto rx = propagate(std::span(channels[k]), std::span(signals));
            rx.resize(static_cast<std::size_t>(j_n));
            auto rng = RandomStream::child(seed, StreamDomain::Noise, slot * models.size() + k);
            IqRecord rec;
            rec.iq = mean_power(rx) > 0.0 ? add_noise_at_snr(rx, snr_db, rng).first : rx;
            votes[k] = predict(models[k], rec).hard;
        }
        return fuse(votes, fusion_n, plan.num_subchannels);
    };
}

inline std::string agent_name(AgentVariant v) {
    switch (v) {
        case AgentVariant::Tabular: return "tabular";
        case AgentVariant::Dqn: return "dqn";
        case AgentVariant::Ddqn: return "ddqn";
        case AgentVariant::DdqnSoft: return "ddqn-soft";
    }
    return "unknown";
}

inline double mean_tail(const std::vector<double>& v, std::size_t tail) {
    if (v.empty()) return 0.0;
    const std::size_t n = std::min(tail, v.size());
    double acc = 0.0;
    for (std::size_t i = v.size() - n; i < v.size(); ++i) acc += v[i];
    return acc / static_cast<double>(n);
}

inline json cmd_rl(const ExperimentConfig& cfg, const std::string& out_dir,
                   const std::string& models_dir = "") {
    fs::create_directories(out_dir);
    auto setup = make_rl_setup(cfg);
    MdpEnv env(setup.env, cfg.seed);
    if (!cfg.rl.observe_truth) {
        if (models_dir.empty())
            throw std::invalid_argument("fused observation requires --models with trained checkpoints");
        const Layout layout = sensing_layout(cfg.gen.plan.num_subchannels, cfg.gen.samples_per_record,
                                             cfg.model.base_filters, cfg.model.kernel);
        std::vector<ModelWeights> models;
        for (int k = 0; k < cfg.gen.plan.num_uavs; ++k)
            models.push_back(load_weights(layout, models_dir + "/model_ll_uav" + std::to_string(k) + ".spnn"));
        env.set_fused_observer(make_fused_observer(cfg, std::move(models)));
    }

    RlResult result;
    if (cfg.rl.agent == AgentVariant::Tabular) {
        QTable table(setup.env.num_subchannels());
        result = run_tabular_training(env, table, setup.run, cfg.rl.tabular_lr, cfg.rl.dqn.gamma);
    } else {
        DqnAgent agent(cfg.rl.agent, setup.env.num_subchannels(), setup.dqn, cfg.seed);
        result = run_dqn_training(env, agent, setup.run, setup.dqn);
    }
    const std::string name = agent_name(cfg.rl.agent) + "_" + std::to_string(setup.run.num_uavs) + "uav";
    write_episode_log(result.log, out_dir + "/episodes_" + name + ".csv");

    // genie reference on an identical environment realization
    MdpEnv genie_env(setup.env, cfg.seed);
    auto genie = run_genie(genie_env, setup.run);

    const std::size_t tail = std::min<std::size_t>(500, setup.run.episodes);
    json summary;
    summary["agent"] = agent_name(cfg.rl.agent);
    summary["uavs"] = setup.run.num_uavs;
    summary["episodes"] = setup.run.episodes;
    summary["mean_utility_final"] = mean_tail(result.episode_utility, tail);
    summary["genie_mean_utility_final"] = mean_tail(genie.episode_utility, tail);
    summary["utility_vs_genie"] =
        mean_tail(genie.episode_utility, tail) > 0.0
            ? mean_tail(result.episode_utility, tail) / mean_tail(genie.episode_utility, tail)
            : 0.0;
    write_json(summary, out_dir + "/summary_rl_" + name + ".json");
    return summary;
}

// ---------------------------------------------------------------------------
// verify-bounds

inline QuadraticFederatedProblem make_quadratic_problem(const ConvergenceConfig& cc,
                                                        std::uint64_t seed) {
    auto rng = RandomStream::child(seed, StreamDomain::ModelInit, 77);
    std::vector<QuadraticClient> clients;
    for (int k = 0; k < cc.clients; ++k) {
        QuadraticClient cl;
        cl.hessian = make_random_spd(cc.dimension, cc.lambda_min, cc.lambda_max, rng);
        cl.center.resize(static_cast<std::size_t>(cc.dimension));
        for (auto& v : cl.center) v = cc.center_spread * rng.normal();
        cl.rho = cc.noise_rho[static_cast<std::size_t>(k)];
        clients.push_back(std::move(cl));
    }
    double alpha_sum = 0.0;
    for (double p : cc.powers) alpha_sum += std::sqrt(p);
    std::vector<double> weights;
    for (double p : cc.powers) weights.push_back(std::sqrt(p) / alpha_sum);
    return {std::move(clients), std::move(weights)};
}

inline json cmd_verify_bounds(const ExperimentConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const auto& cc = cfg.convergence;
    auto problem = make_quadratic_problem(cc, cfg.seed);
    StepSchedule sched;
    sched.kind = cc.schedule;
    sched.constant = cc.constant_gamma;
    sched.beta = problem.strong_convexity();
    sched.smoothness = problem.smoothness();
    const auto est = estimate_assumptions(problem, sched.at(0));

    std::vector<double> omega0(static_cast<std::size_t>(cc.dimension), 0.0);
    auto init_rng = RandomStream::child(cfg.seed, StreamDomain::ModelInit, 78);
    for (auto& v : omega0) v = 2.0 * init_rng.normal();

    // deterministic full-batch checks
    const auto full_trace = run_descent(problem, sched, cc.steps, omega0, false, cfg.seed);
    const auto lemma3_full = verify_lemma3_fullbatch(full_trace, est);

    // stochastic checks on a noisy reference run
    const auto noisy_trace = run_descent(problem, sched, cc.stochastic_steps, omega0, true,
                                         derive_seed(cfg.seed, StreamDomain::GradientNoise, 1));
    const auto lemma3_stoch = verify_lemma3_stochastic(problem, noisy_trace, est, cc.replicates,
                                                       derive_seed(cfg.seed, StreamDomain::GradientNoise, 2));
    std::vector<std::vector<double>> lemma2_states;
    const std::size_t stride = std::max<std::size_t>(1, noisy_trace.omega.size() / cc.lemma2_rounds);
    for (std::size_t i = 0; i < noisy_trace.omega.size() && lemma2_states.size() < static_cast<std::size_t>(cc.lemma2_rounds);
         i += stride)
        lemma2_states.push_back(noisy_trace.omega[i]);
    const auto lemma2 = verify_lemma2(problem, lemma2_states, cc.replicates,
                                      derive_seed(cfg.seed, StreamDomain::GradientNoise, 3));

    // theorem-1 envelope over the long horizon plus the decay-rate fit
    const auto envelope_trace = run_descent(problem, sched, cc.envelope_steps, omega0, false, cfg.seed);
    const auto theorem = verify_theorem1(problem, envelope_trace, est, cc.fit_lo, cc.fit_hi, cc.fit_runs,
                                         derive_seed(cfg.seed, StreamDomain::GradientNoise, 4));

    write_bound_trace(envelope_trace, est, out_dir + "/bounds.csv",
                      std::max<std::uint64_t>(1, cc.envelope_steps / 10000));

    json verdicts;
    verdicts["estimates"] = {{"smoothness", est.smoothness},
                             {"strong_convexity", est.strong_convexity},
                             {"tau", est.tau},
                             {"kappa", est.kappa},
                             {"G", compute_Gt(est, problem.weights())}};
    verdicts["lemma2"] = {{"bound", lemma2.bound},
                          {"rounds_checked", lemma2.rounds_checked},
                          {"rounds_passed", lemma2.rounds_passed},
                          {"pass", lemma2.rounds_passed == lemma2.rounds_checked}};
    verdicts["lemma3_fullbatch"] = {{"steps", lemma3_full.steps_checked},
                                    {"holding", lemma3_full.steps_holding},
                                    {"hypothesis_violations", lemma3_full.hypothesis_violations},
                                    {"pass", lemma3_full.steps_holding == lemma3_full.steps_checked}};
    verdicts["lemma3_stochastic"] = {
        {"steps", lemma3_stoch.steps_checked},
        {"holding", lemma3_stoch.steps_holding},
        {"pass", static_cast<double>(lemma3_stoch.steps_holding) >=
                     0.99 * static_cast<double>(lemma3_stoch.steps_checked)}};
    verdicts["theorem1"] = {{"max_gap_ratio", theorem.max_gap_ratio},
                            {"envelope_ok", theorem.envelope_ok},
                            {"slope", theorem.slope},
                            {"slope_pass", theorem.slope >= -1.2 && theorem.slope <= -0.8}};
    write_json(verdicts, out_dir + "/verdicts.json");
    return verdicts;
}

// ---------------------------------------------------------------------------
// report

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        throw std::runtime_error("missing CSV column: " + name);
    }
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (first) {
            t.header = std::move(fields);
            first = false;
        } else {
            t.rows.push_back(std::move(fields));
        }
    }
    return t;
}

/// Aggregates a finished run's artifacts into one summary table. F1 values
/// are recomputed from the raw confusion counts and cross-checked against
/// the stored column before being re-emitted.
inline json cmd_report(const std::string& artifact_dir, std::ostream& out = std::cout) {
    std::vector<std::string> metric_files;
    if (fs::exists(artifact_dir))
        for (const auto& entry : fs::recursive_directory_iterator(artifact_dir)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("metrics_", 0) == 0 && entry.path().extension() == ".csv")
                metric_files.push_back(entry.path().string());
        }
    std::sort(metric_files.begin(), metric_files.end());

    std::vector<std::string> rl_files, verdict_files;
    if (fs::exists(artifact_dir))
        for (const auto& entry : fs::recursive_directory_iterator(artifact_dir)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("summary_rl_", 0) == 0) rl_files.push_back(entry.path().string());
            if (name == "verdicts.json") verdict_files.push_back(entry.path().string());
        }
    std::sort(rl_files.begin(), rl_files.end());
    std::sort(verdict_files.begin(), verdict_files.end());

    if (metric_files.empty() && rl_files.empty() && verdict_files.empty())
        throw std::runtime_error("no artifacts found in " + artifact_dir);

    json report;
    json sensing_rows = json::array();
    CsvWriter csv(artifact_dir + "/report.csv", "regime,uav,snr_db,precision,recall,f1,n");
    out << "sensing metrics\n";
    out << "  regime            uav  snr_db  precision  recall      f1\n";
    for (const auto& file : metric_files) {
        const auto t = read_csv(file);
        const int c_regime = t.column("regime"), c_uav = t.column("uav"), c_snr = t.column("snr_db");
        const int c_f1 = t.column("f1");
        const int c_tp = t.column("tp"), c_fp = t.column("fp"), c_fn = t.column("fn");
        const int c_n = t.column("n");
        for (const auto& row : t.rows) {
            const double tp = std::stod(row[static_cast<std::size_t>(c_tp)]);
            const double fp = std::stod(row[static_cast<std::size_t>(c_fp)]);
            const double fn = std::stod(row[static_cast<std::size_t>(c_fn)]);
            const double p = (tp + fp) > 0 ? tp / (tp + fp) : (tp == 0 ? 1.0 : 0.0);
            const double r = (tp + fn) > 0 ? tp / (tp + fn) : (tp == 0 ? 1.0 : 0.0);
            const double f1 = (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
            const double stored_f1 = std::stod(row[static_cast<std::size_t>(c_f1)]);
            if (std::abs(f1 - stored_f1) > 1e-9)
                throw std::runtime_error("stored F1 disagrees with recomputation in " + file);
            csv.row(row[static_cast<std::size_t>(c_regime)], row[static_cast<std::size_t>(c_uav)],
                    row[static_cast<std::size_t>(c_snr)], p, r, f1, row[static_cast<std::size_t>(c_n)]);
            json jr;
            jr["regime"] = row[static_cast<std::size_t>(c_regime)];
            jr["uav"] = std::stoi(row[static_cast<std::size_t>(c_uav)]);
            jr["snr_db"] = std::stod(row[static_cast<std::size_t>(c_snr)]);
            jr["precision"] = p;
            jr["recall"] = r;
            jr["f1"] = f1;
            sensing_rows.push_back(jr);
            char buf[160];
            std::snprintf(buf, sizeof(buf), "  %-16s %4d  %6.1f     %6.4f  %6.4f  %6.4f\n",
                          row[static_cast<std::size_t>(c_regime)].c_str(),
                          std::stoi(row[static_cast<std::size_t>(c_uav)]),
                          std::stod(row[static_cast<std::size_t>(c_snr)]), p, r, f1);
            out << buf;
        }
    }
    report["sensing"] = sensing_rows;

    json rl_rows = json::array();
    for (const auto& file : rl_files) {
        std::ifstream is(file);
        json j = json::parse(is);
        rl_rows.push_back(j);
        out << "rl " << j.value("agent", std::string("?")) << " x" << j.value("uavs", 0)
            << ": mean utility " << j.value("mean_utility_final", 0.0) << " (genie "
            << j.value("genie_mean_utility_final", 0.0) << ")\n";
    }
    report["rl"] = rl_rows;

    json verdicts = json::array();
    for (const auto& file : verdict_files) {
        std::ifstream is(file);
        json j = json::parse(is);
        verdicts.push_back(j);
        out << "bounds: lemma2 " << (j["lemma2"]["pass"].get<bool>() ? "pass" : "FAIL") << ", lemma3 "
            << (j["lemma3_fullbatch"]["pass"].get<bool>() ? "pass" : "FAIL") << "/"
            << (j["lemma3_stochastic"]["pass"].get<bool>() ? "pass" : "FAIL") << ", theorem1 "
            << (j["theorem1"]["envelope_ok"].get<bool>() ? "pass" : "FAIL") << " slope "
            << j["theorem1"]["slope"].get<double>() << "\n";
    }
    report["bounds"] = verdicts;

    write_json(report, artifact_dir + "/report.json");
    return report;
}

}  // namespace specfed
