#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "specfed/csv.hpp"
#include "specfed/fusion.hpp"
#include "specfed/markov.hpp"
#include "specfed/nn.hpp"
#include "specfed/replay.hpp"
#include "specfed/rng.hpp"

namespace specfed {

/// Spectrum scheduling environment over M binary-Markov subchannels.
/// Actions picked at slot t are transmissions during slot t+1: the reward of
/// an action on channel m is +U if the channel is still vacant after the
/// Markov step and -U if a primary user took it back (the collision
/// indicator applied to the utility). Observations are either the true
/// state or a fused prediction of it.
struct MdpEnvConfig {
    std::vector<TransitionMatrix> matrices;           // one chain per subchannel (the z-bar process)
    std::vector<std::vector<double>> utility_table;   // K x M: U_{k,m}
    bool observe_truth = true;
    int num_stations = 1;  // >1 runs the specgen B x M process; truth is the union

    int num_subchannels() const { return static_cast<int>(matrices.size()); }
    int num_uavs() const { return static_cast<int>(utility_table.size()); }

    void validate() const {
        if (matrices.empty()) throw std::invalid_argument("environment needs subchannels");
        for (const auto& p : matrices) p.validate();
        if (utility_table.empty()) throw std::invalid_argument("environment needs at least one UAV");
        for (const auto& row : utility_table)
            if (row.size() != matrices.size())
                throw std::invalid_argument("utility table must be K x M");
        if (num_stations < 1) throw std::invalid_argument("need at least one station");
    }
};

class MdpEnv {
public:
    /// Maps (per-station occupancy, slot) to a fused observation; installed
    /// when the environment should expose sensing predictions instead of
    /// the truth.
    using FusedObserver =
        std::function<std::uint32_t(std::span<const std::uint32_t> station_masks, std::uint64_t slot)>;

    MdpEnv(MdpEnvConfig cfg, std::uint64_t seed)
        : cfg_(std::move(cfg)),
          process_(cfg_.matrices, cfg_.num_stations),
          rng_(RandomStream::child(seed, StreamDomain::EnvInit)) {
        cfg_.validate();
    }

    void set_fused_observer(FusedObserver obs) { fused_ = std::move(obs); }

    int num_subchannels() const { return cfg_.num_subchannels(); }
    int num_uavs() const { return cfg_.num_uavs(); }
    std::uint32_t truth() const { return make_label(process_.state()); }
    const MdpEnvConfig& config() const { return cfg_; }

    /// Starts an episode: the occupancy is drawn from its stationary
    /// distribution, and the agent sees the reserved initial state (no
    /// channel was allocated in a previous slot, so only idle is valid).
    Observation reset() {
        process_.reset_stationary(rng_);
        last_obs_ = Observation{0, true};
        return last_obs_;
    }

    struct StepResult {
        Observation obs;          // observation after the Markov step
        double reward = 0.0;      // sum over UAVs of c * U
        int collisions = 0;       // actions that hit a reoccupied channel
        int transmissions = 0;    // non-idle actions
        std::vector<double> per_uav_reward;
    };

    /// Advances the occupancy one step and settles the transmissions chosen
    /// from the previous observation. Actions must be idle or a channel the
    /// previous observation declared vacant, one UAV per channel.
    StepResult step(std::span<const int> actions) {
        if (static_cast<int>(actions.size()) != cfg_.num_uavs())
            throw std::invalid_argument("one action per UAV required");
        const std::uint32_t mask = admissible_mask(last_obs_, num_subchannels());
        std::uint32_t taken = 0;
        for (int a : actions) {
            if (a < 0 || a > num_subchannels()) throw std::invalid_argument("action out of range");
            if (a == kIdleAction) continue;
            if (!((mask >> a) & 1u))
                throw std::invalid_argument("action on a channel outside the previous vacancy set");
            const std::uint32_t bit = 1u << (a - 1);
            if (taken & bit) throw std::invalid_argument("two UAVs scheduled on one channel");
            taken |= bit;
        }

        const std::uint32_t z_prev_obs = last_obs_.initial ? ~0u : last_obs_.bits;
        const std::uint32_t z_true = make_label(process_.step(rng_));
        const auto c = collision_indicator(z_true, z_prev_obs, num_subchannels());

        StepResult res;
        res.per_uav_reward.resize(actions.size(), 0.0);
        for (std::size_t k = 0; k < actions.size(); ++k) {
            const int a = actions[k];
            if (a == kIdleAction) continue;
            const int m = a - 1;
            const double u = cfg_.utility_table[k][static_cast<std::size_t>(m)];
            const double r = static_cast<double>(c[static_cast<std::size_t>(m)]) * u;
            res.per_uav_reward[k] = r;
            res.reward += r;
            res.transmissions += 1;
            if (c[static_cast<std::size_t>(m)] < 0) res.collisions += 1;
        }

        ++slot_;
        Observation obs;
        obs.initial = false;
        obs.bits = (cfg_.observe_truth || !fused_) ? z_true : fused_(process_.state(), slot_);
        last_obs_ = obs;
        res.obs = obs;
        return res;
    }

    const Observation& last_observation() const { return last_obs_; }

private:
    MdpEnvConfig cfg_;
    OccupancyProcess process_;
    RandomStream rng_;
    Observation last_obs_{0, true};
    std::uint64_t slot_ = 0;
    FusedObserver fused_;
};

/// Epsilon-greedy over the admissible actions; greedy ties break toward the
/// lowest action index.
inline int select_action(std::span<const double> qvals, double epsilon, RandomStream& rng,
                         std::uint32_t mask) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must be in [0,1]");
    std::vector<int> admissible;
    admissible.reserve(qvals.size());
    for (int a = 0; a < static_cast<int>(qvals.size()); ++a)
        if ((mask >> a) & 1u) admissible.push_back(a);
    if (admissible.empty()) throw std::invalid_argument("no admissible action");
    if (rng.uniform() < epsilon)
        return admissible[static_cast<std::size_t>(rng.uniform_int(admissible.size()))];
    int best = admissible.front();
    for (int a : admissible)
        if (qvals[static_cast<std::size_t>(a)] > qvals[static_cast<std::size_t>(best)]) best = a;
    return best;
}

/// Dense Q table over (2^M + 1) states (all occupancies plus the reserved
/// initial state) and M + 1 actions.
class QTable {
public:
    explicit QTable(int num_subchannels)
        : m_(num_subchannels),
          actions_(num_subchannels + 1),
          q_((static_cast<std::size_t>(1) << num_subchannels) * actions_ + actions_, 0.0) {
        if (num_subchannels < 1 || num_subchannels > 20)
            throw std::invalid_argument("tabular Q supports 1..20 subchannels");
    }

    std::size_t num_states() const { return (static_cast<std::size_t>(1) << m_) + 1; }
    int num_actions() const { return static_cast<int>(actions_); }

    std::size_t state_index(const Observation& obs) const {
        return obs.initial ? (static_cast<std::size_t>(1) << m_) : obs.bits;
    }

    double& q(std::size_t state, int action) { return q_[state * actions_ + static_cast<std::size_t>(action)]; }
    double q(std::size_t state, int action) const { return q_[state * actions_ + static_cast<std::size_t>(action)]; }

    double max_q(std::size_t state, std::uint32_t mask) const {
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < num_actions(); ++a)
            if ((mask >> a) & 1u) best = std::max(best, q(state, a));
        return best;
    }

    std::vector<double> row(std::size_t state) const {
        return {q_.begin() + static_cast<std::ptrdiff_t>(state * actions_),
                q_.begin() + static_cast<std::ptrdiff_t>((state + 1) * actions_)};
    }

private:
    int m_;
    std::size_t actions_;
    std::vector<double> q_;
};

/// Tabular Q-learning update. The bootstrap maximum runs over the actions
/// admissible in the next state (the action set of this MDP is
/// state-dependent).
inline void tabular_q_update(QTable& table, const Experience& exp, double lr, double gamma) {
    const std::size_t s = table.state_index(exp.state);
    const std::size_t s2 = table.state_index(exp.next_state);
    double& q = table.q(s, exp.action);
    q += lr * (exp.reward + gamma * table.max_q(s2, exp.next_mask) - q);
}

/// Polyak-averaged target tracking: theta'' = rho theta + (1-rho) theta'.
inline void soft_update(ModelWeights& target, const ModelWeights& primary, double rho_polyak) {
    if (!(rho_polyak >= 0.0 && rho_polyak <= 1.0)) throw std::invalid_argument("polyak factor must be in [0,1]");
    if (target.values.size() != primary.values.size()) throw std::invalid_argument("dimension mismatch");
    for (std::size_t i = 0; i < target.values.size(); ++i)
        target.values[i] = rho_polyak * primary.values[i] + (1.0 - rho_polyak) * target.values[i];
}

enum class AgentVariant { Tabular, Dqn, Ddqn, DdqnSoft };

inline AgentVariant agent_variant_from_string(const std::string& s) {
    if (s == "tabular") return AgentVariant::Tabular;
    if (s == "dqn") return AgentVariant::Dqn;
    if (s == "ddqn") return AgentVariant::Ddqn;
    if (s == "ddqn-soft") return AgentVariant::DdqnSoft;
    throw std::invalid_argument("unknown agent variant: " + s);
}

struct DqnConfig {
    int hidden = 64;           // two hidden layers of this width
    double lr = 1e-3;
    double gamma = 0.9;
    int batch_size = 64;
    std::size_t replay_capacity = 10000;
    double polyak = 0.01;      // DDQN-soft
    int target_period = 100;   // DQN / DDQN hard-copy period (train steps)
    double reward_scale = 1.0; // rewards are scaled for training only
};

inline Layout qnetwork_layout(int num_subchannels, int hidden) {
    return Layout({1, num_subchannels},
                  {LayerSpec::dense(hidden), LayerSpec::relu(), LayerSpec::dense(hidden),
                   LayerSpec::relu(), LayerSpec::dense(num_subchannels + 1)});
}

/// Observation encoding for the Q network: occupied 1, vacant 0, reserved
/// initial state all -1.
inline std::vector<double> encode_observation(const Observation& obs, int num_subchannels) {
    std::vector<double> x(static_cast<std::size_t>(num_subchannels), obs.initial ? -1.0 : 0.0);
    if (!obs.initial)
        for (int m = 0; m < num_subchannels; ++m)
            x[static_cast<std::size_t>(m)] = ((obs.bits >> m) & 1u) ? 1.0 : 0.0;
    return x;
}

/// Replay-trained Q network with a periodically or softly updated target.
class DqnAgent {
public:
    DqnAgent(AgentVariant variant, int num_subchannels, const DqnConfig& cfg, std::uint64_t seed)
        : variant_(variant),
          m_(num_subchannels),
          cfg_(cfg),
          replay_(cfg.replay_capacity),
          rng_(RandomStream::child(seed, StreamDomain::Replay)) {
        if (variant == AgentVariant::Tabular) throw std::invalid_argument("use QTable for the tabular agent");
        auto init_rng = RandomStream::child(seed, StreamDomain::ModelInit);
        primary_ = init_weights(qnetwork_layout(num_subchannels, cfg.hidden), init_rng);
        target_ = primary_;
    }

    ReplayBuffer& replay() { return replay_; }
    const ModelWeights& primary() const { return primary_; }
    ModelWeights& primary() { return primary_; }
    const ModelWeights& target() const { return target_; }

    std::vector<double> qvalues(const Observation& obs) const {
        return forward(primary_, encode_observation(obs, m_));
    }

    /// One optimization step on a replayed mini-batch; returns the batch
    /// mean squared TD error. Targets never propagate gradient (the target
    /// network is held fixed within the step).
    double train_step() {
        if (replay_.size() < static_cast<std::size_t>(cfg_.batch_size))
            throw std::runtime_error("replay holds fewer experiences than one batch");
        const auto batch = replay_.sample(static_cast<std::size_t>(cfg_.batch_size), rng_);
        std::vector<double> grad(primary_.layout.dim(), 0.0);
        double loss = 0.0;
        ForwardTrace trace;
        const double inv_b = 1.0 / static_cast<double>(batch.size());
        for (const Experience* e : batch) {
            const auto x2 = encode_observation(e->next_state, m_);
            double bootstrap = 0.0;
            if (cfg_.gamma != 0.0) {
                const auto q_target = forward(target_, x2);
                if (variant_ == AgentVariant::Dqn) {
                    double best = -std::numeric_limits<double>::infinity();
                    for (int a = 0; a < m_ + 1; ++a)
                        if ((e->next_mask >> a) & 1u) best = std::max(best, q_target[static_cast<std::size_t>(a)]);
                    bootstrap = best;
                } else {  // double Q: primary argmax, target evaluation
                    const auto q_primary = forward(primary_, x2);
                    int best = -1;
                    for (int a = 0; a < m_ + 1; ++a) {
                        if (!((e->next_mask >> a) & 1u)) continue;
                        if (best < 0 || q_primary[static_cast<std::size_t>(a)] > q_primary[static_cast<std::size_t>(best)])
                            best = a;
                    }
                    bootstrap = q_target[static_cast<std::size_t>(best)];
                }
            }
            const double target_value = e->reward * cfg_.reward_scale + cfg_.gamma * bootstrap;
            const auto q = forward(primary_, encode_observation(e->state, m_), &trace);
            const double td = q[static_cast<std::size_t>(e->action)] - target_value;
            loss += td * td * inv_b;
            std::vector<double> grad_out(static_cast<std::size_t>(m_ + 1), 0.0);
            grad_out[static_cast<std::size_t>(e->action)] = 2.0 * td * inv_b;
            backward_sample(primary_, trace, std::move(grad_out), grad);
        }
        sgd_step(primary_, grad, cfg_.lr);
        ++train_steps_;
        if (variant_ == AgentVariant::DdqnSoft) {
            soft_update(target_, primary_, cfg_.polyak);
        } else if (train_steps_ % static_cast<std::uint64_t>(cfg_.target_period) == 0) {
            target_ = primary_;
        }
        return loss;
    }

private:
    AgentVariant variant_;
    int m_;
    DqnConfig cfg_;
    ModelWeights primary_, target_;
    ReplayBuffer replay_;
    RandomStream rng_;
    std::uint64_t train_steps_ = 0;
};

/// Distinct channels for num_uavs UAVs: the top admissible non-idle actions
/// by Q value, ties to the lower index; UAVs beyond the number of available
/// holes idle.
inline std::vector<int> allocate_multi(std::span<const double> qvals, int num_uavs,
                                       std::uint32_t mask) {
    std::vector<int> candidates;
    for (int a = 1; a < static_cast<int>(qvals.size()); ++a)
        if ((mask >> a) & 1u) candidates.push_back(a);
    std::sort(candidates.begin(), candidates.end(), [&](int a, int b) {
        if (qvals[static_cast<std::size_t>(a)] != qvals[static_cast<std::size_t>(b)])
            return qvals[static_cast<std::size_t>(a)] > qvals[static_cast<std::size_t>(b)];
        return a < b;
    });
    std::vector<int> actions(static_cast<std::size_t>(num_uavs), kIdleAction);
    for (int k = 0; k < num_uavs && k < static_cast<int>(candidates.size()); ++k)
        actions[static_cast<std::size_t>(k)] = candidates[static_cast<std::size_t>(k)];
    return actions;
}

/// Genie baseline: the utility-maximizing feasible assignment of currently
/// vacant channels to UAVs, found by exhaustive search.
inline std::vector<int> oracle_allocation(std::uint32_t z_true,
                                          const std::vector<std::vector<double>>& utility_table,
                                          int num_uavs) {
    const int m_n = static_cast<int>(utility_table.empty() ? 0 : utility_table.front().size());
    std::vector<int> vacant;
    for (int m = 0; m < m_n; ++m)
        if (!((z_true >> m) & 1u)) vacant.push_back(m);

    std::vector<int> best(static_cast<std::size_t>(num_uavs), kIdleAction);
    double best_utility = 0.0;
    std::vector<int> current(static_cast<std::size_t>(num_uavs), kIdleAction);
    std::uint32_t used = 0;

    const std::function<void(int, double)> search = [&](int k, double acc) {
        if (k == num_uavs) {
            if (acc > best_utility) {
                best_utility = acc;
                best = current;
            }
            return;
        }
        current[static_cast<std::size_t>(k)] = kIdleAction;
        search(k + 1, acc);
        for (int m : vacant) {
            const std::uint32_t bit = 1u << m;
            if (used & bit) continue;
            used |= bit;
            current[static_cast<std::size_t>(k)] = m + 1;
            search(k + 1, acc + utility_table[static_cast<std::size_t>(k)][static_cast<std::size_t>(m)]);
            used &= ~bit;
        }
        current[static_cast<std::size_t>(k)] = kIdleAction;
    };
    search(0, 0.0);
    return best;
}

struct EpisodeLogRow {
    std::uint64_t episode = 0;
    std::uint64_t step = 0;
    double reward = 0.0;    // training-scaled
    double utility = 0.0;   // raw signed utility
    int collisions = 0;
    double epsilon = 0.0;
    double loss = 0.0;
};

inline void write_episode_log(std::span<const EpisodeLogRow> rows, const std::string& path) {
    CsvWriter csv(path, "episode,step,reward,utility,collisions,epsilon,loss");
    for (const auto& r : rows)
        csv.row(r.episode, r.step, r.reward, r.utility, r.collisions, r.epsilon, r.loss);
}

struct RlRunConfig {
    std::uint64_t episodes = 1500;
    std::uint64_t steps_per_episode = 64;
    int num_uavs = 1;
    double eps_start = 1.0;
    double eps_end = 0.05;
    double eps_decay_fraction = 0.8;  // of total episodes
    std::uint64_t seed = 0;

    double epsilon_at(std::uint64_t episode) const {
        const double horizon = eps_decay_fraction * static_cast<double>(episodes);
        if (horizon <= 0.0) return eps_end;
        const double f = std::min(1.0, static_cast<double>(episode) / horizon);
        return eps_start + f * (eps_end - eps_start);
    }
};

struct RlResult {
    std::vector<double> episode_utility;  // raw signed utility per episode
    std::vector<EpisodeLogRow> log;
};

/// Trains a replay-based agent on the environment (Algorithm 2 phase 2 with
/// the agent in the allocator seat). Multi-UAV allocation extracts the top
/// actions of the single network; every per-UAV transition is stored.
inline RlResult run_dqn_training(MdpEnv& env, DqnAgent& agent, const RlRunConfig& run,
                                 const DqnConfig& cfg) {
    RlResult res;
    auto policy_rng = RandomStream::child(run.seed, StreamDomain::Policy);
    const int m_n = env.num_subchannels();
    for (std::uint64_t ep = 0; ep < run.episodes; ++ep) {
        const double eps = run.epsilon_at(ep);
        Observation obs = env.reset();
        double ep_utility = 0.0;
        for (std::uint64_t st = 0; st < run.steps_per_episode; ++st) {
            const std::uint32_t mask = admissible_mask(obs, m_n);
            std::vector<int> actions;
            if (run.num_uavs == 1) {
                actions = {select_action(agent.qvalues(obs), eps, policy_rng, mask)};
            } else if (policy_rng.uniform() < eps) {
                // exploration: a random feasible assignment of distinct channels
                std::vector<int> admissible;
                for (int a = 1; a <= m_n; ++a)
                    if ((mask >> a) & 1u) admissible.push_back(a);
                policy_rng.shuffle(admissible);
                actions.assign(static_cast<std::size_t>(run.num_uavs), kIdleAction);
                for (int k = 0; k < run.num_uavs && k < static_cast<int>(admissible.size()); ++k)
                    actions[static_cast<std::size_t>(k)] = admissible[static_cast<std::size_t>(k)];
            } else {
                actions = allocate_multi(agent.qvalues(obs), run.num_uavs, mask);
            }
            const auto sr = env.step(actions);
            const std::uint32_t next_mask = admissible_mask(sr.obs, m_n);
            for (std::size_t k = 0; k < actions.size(); ++k)
                agent.replay().push({obs, actions[k], sr.per_uav_reward[k], sr.obs, next_mask});
            double loss = 0.0;
            if (agent.replay().size() >= static_cast<std::size_t>(cfg.batch_size)) loss = agent.train_step();
            ep_utility += sr.reward;
            res.log.push_back({ep, st, sr.reward * cfg.reward_scale, sr.reward, sr.collisions, eps, loss});
            obs = sr.obs;
        }
        res.episode_utility.push_back(ep_utility);
    }
    return res;
}

/// Online tabular Q-learning on the environment (single UAV).
inline RlResult run_tabular_training(MdpEnv& env, QTable& table, const RlRunConfig& run, double lr,
                                     double gamma) {
    RlResult res;
    auto policy_rng = RandomStream::child(run.seed, StreamDomain::Policy);
    const int m_n = env.num_subchannels();
    for (std::uint64_t ep = 0; ep < run.episodes; ++ep) {
        const double eps = run.epsilon_at(ep);
        Observation obs = env.reset();
        double ep_utility = 0.0;
        for (std::uint64_t st = 0; st < run.steps_per_episode; ++st) {
            const std::uint32_t mask = admissible_mask(obs, m_n);
            const auto qrow = table.row(table.state_index(obs));
            const int action = select_action(qrow, eps, policy_rng, mask);
            const auto sr = env.step({&action, 1});
            const Experience exp{obs, action, sr.reward, sr.obs, admissible_mask(sr.obs, m_n)};
            tabular_q_update(table, exp, lr, gamma);
            ep_utility += sr.reward;
            res.log.push_back({ep, st, sr.reward, sr.reward, sr.collisions, eps, 0.0});
            obs = sr.obs;
        }
        res.episode_utility.push_back(ep_utility);
    }
    return res;
}

/// Runs the genie policy (oracle over the revealed truth) for reference.
inline RlResult run_genie(MdpEnv& env, const RlRunConfig& run) {
    RlResult res;
    for (std::uint64_t ep = 0; ep < run.episodes; ++ep) {
        env.reset();
        double ep_utility = 0.0;
        for (std::uint64_t st = 0; st < run.steps_per_episode; ++st) {
            // first step after reset must idle (nothing allocated yet)
            std::vector<int> actions(static_cast<std::size_t>(run.num_uavs), kIdleAction);
            if (!env.last_observation().initial)
                actions = oracle_allocation(env.truth(), env.config().utility_table, run.num_uavs);
            const auto sr = env.step(actions);
            ep_utility += sr.reward;
            res.log.push_back({ep, st, sr.reward, sr.reward, sr.collisions, 0.0, 0.0});
        }
        res.episode_utility.push_back(ep_utility);
    }
    return res;
}

}  // namespace specfed
