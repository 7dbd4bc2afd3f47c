#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "specfed/csv.hpp"
#include "specfed/dataset.hpp"
#include "specfed/nn.hpp"
#include "specfed/parallel.hpp"
#include "specfed/rng.hpp"
#include "specfed/sensing.hpp"

namespace specfed {

enum class AggregationRule { FedAvg, PwFedAvg };

/// Whether the pwFedAvg power average is taken over the round's batch (the
/// paper's reading) or the whole local dataset.
enum class PowerMode { Batch, Dataset };

/// One federated participant: its dataset view, per-record received powers
/// and the local model replica.
struct ClientState {
    int id = 0;
    SampleMatrix data;
    std::vector<std::size_t> train_indices;
    std::vector<double> record_power;  // aligned with data rows
    ModelWeights weights;

    double dataset_mean_power() const {
        if (train_indices.empty()) return 0.0;
        double acc = 0.0;
        for (auto i : train_indices) acc += record_power[i];
        return acc / static_cast<double>(train_indices.size());
    }
};

inline ClientState make_client(int id, const Dataset& ds, const Layout& layout) {
    ClientState c;
    c.id = id;
    c.data = to_samples(ds);
    c.train_indices = ds.train_indices();
    c.record_power.reserve(ds.records.size());
    for (const auto& r : ds.records) c.record_power.push_back(r.avg_power);
    c.weights = zero_weights(layout);
    return c;
}

struct ClientUpdate {
    int client_id = 0;
    GradientVector grad;
    double mean_power = 0.0;  // P-bar_k^t
    std::size_t dataset_size = 0;
};

/// One round of local work (Algorithm 1 lines 4-7): adopt the global
/// weights, draw a batch, and return the gradient plus the batch mean
/// received power. With local_epochs == 1 this is the exact stochastic
/// gradient at the global weights; with more epochs it is the
/// pseudo-gradient (omega_t - omega_after) / local_lr.
inline ClientUpdate client_update(ClientState& client, const ModelWeights& global, int local_epochs,
                                  int batch_size, double local_lr, std::uint64_t round,
                                  std::uint64_t seed, PowerMode power_mode = PowerMode::Batch) {
    if (client.train_indices.empty()) throw std::invalid_argument("client has no training data");
    if (local_epochs < 1) throw std::invalid_argument("local epochs must be >= 1");
    client.weights = global;

    // batch xi_k^t: uniform subset without replacement, derived from (seed, round, client)
    auto rng = RandomStream::child(seed, StreamDomain::Batch,
                                   round * 4096u + static_cast<std::uint64_t>(client.id));
    std::vector<std::size_t> batch(client.train_indices.begin(), client.train_indices.end());
    const std::size_t take = std::min(batch.size(), static_cast<std::size_t>(batch_size));
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_int(batch.size() - i));
        std::swap(batch[i], batch[j]);
    }
    batch.resize(take);

    ClientUpdate up;
    up.client_id = client.id;
    up.dataset_size = client.train_indices.size();
    if (power_mode == PowerMode::Dataset) {
        up.mean_power = client.dataset_mean_power();
    } else {
        double acc = 0.0;
        for (auto i : batch) acc += client.record_power[i];
        up.mean_power = acc / static_cast<double>(batch.size());
    }

    if (local_epochs == 1) {
        up.grad = backward(client.weights, client.data, batch);
        return up;
    }
    if (!(local_lr > 0.0)) throw std::invalid_argument("pseudo-gradient requires positive local lr");
    double first_loss = 0.0;
    for (int e = 0; e < local_epochs; ++e) {
        auto g = backward(client.weights, client.data, batch);
        if (e == 0) first_loss = g.mean_loss;
        sgd_step(client.weights, g.values, local_lr);
    }
    up.grad.values.resize(global.values.size());
    for (std::size_t i = 0; i < global.values.size(); ++i)
        up.grad.values[i] = (global.values[i] - client.weights.values[i]) / local_lr;
    up.grad.batch_size = static_cast<int>(batch.size());
    up.grad.mean_loss = first_loss;
    return up;
}

struct AggregateResult {
    GradientVector grad;
    std::vector<double> weights;  // per client, in ascending client-id order
    std::vector<int> client_ids;
    double weighted_loss = 0.0;
    bool degenerate_uniform = false;  // all-zero powers under pwFedAvg
};

/// Convex combination of client gradients. FedAvg weights by dataset-size
/// fraction, pwFedAvg by alpha_k/alpha with alpha_k = sqrt(P-bar_k^t).
/// Summation runs in ascending client-id order so the result is independent
/// of input permutation, bit for bit.
inline AggregateResult aggregate(std::vector<ClientUpdate> updates, AggregationRule rule) {
    if (updates.empty()) throw std::invalid_argument("no client updates to aggregate");
    std::sort(updates.begin(), updates.end(),
              [](const ClientUpdate& a, const ClientUpdate& b) { return a.client_id < b.client_id; });
    const std::size_t d = updates.front().grad.values.size();
    for (const auto& u : updates)
        if (u.grad.values.size() != d) throw std::invalid_argument("gradient dimension mismatch");

    AggregateResult res;
    res.weights.resize(updates.size());
    if (rule == AggregationRule::FedAvg) {
        double total = 0.0;
        for (const auto& u : updates) total += static_cast<double>(u.dataset_size);
        if (!(total > 0.0)) throw std::invalid_argument("empty federation");
        for (std::size_t k = 0; k < updates.size(); ++k)
            res.weights[k] = static_cast<double>(updates[k].dataset_size) / total;
    } else {
        double alpha_sum = 0.0;
        for (const auto& u : updates) {
            if (u.mean_power < 0.0) throw std::invalid_argument("negative received power");
            alpha_sum += std::sqrt(u.mean_power);
        }
        if (alpha_sum > 0.0) {
            for (std::size_t k = 0; k < updates.size(); ++k)
                res.weights[k] = std::sqrt(updates[k].mean_power) / alpha_sum;
        } else {
            // degenerate all-zero powers: fall back to uniform weights
            res.degenerate_uniform = true;
            std::fill(res.weights.begin(), res.weights.end(), 1.0 / static_cast<double>(updates.size()));
        }
    }

    res.grad.values.assign(d, 0.0);
    res.grad.batch_size = 0;
    for (std::size_t k = 0; k < updates.size(); ++k) {
        const double wk = res.weights[k];
        const auto& g = updates[k].grad.values;
        for (std::size_t i = 0; i < d; ++i) res.grad.values[i] += wk * g[i];
        res.weighted_loss += wk * updates[k].grad.mean_loss;
        res.grad.batch_size += updates[k].grad.batch_size;
        res.client_ids.push_back(updates[k].client_id);
    }
    res.grad.mean_loss = res.weighted_loss;
    return res;
}

/// Global model update, Eq-style: omega_{t+1} = omega_t - gamma_t * grad.
inline void global_step(ModelWeights& global, const GradientVector& grad, double gamma) {
    sgd_step(global, grad.values, gamma);
}

struct GammaSchedule {
    enum class Kind { Constant, Proof };  // Proof: 2 / (beta * t + 2 L)
    Kind kind = Kind::Constant;
    double value = 0.05;
    double beta = 1.0;
    double smoothness = 1.0;

    double at(std::uint64_t t) const {
        if (kind == Kind::Constant) return value;
        return 2.0 / (beta * static_cast<double>(t) + 2.0 * smoothness);
    }
};

struct RoundRecord {
    std::uint64_t round = 0;
    std::vector<int> client_ids;
    std::vector<double> client_weight;
    std::vector<double> client_grad_norm;
    std::vector<double> client_loss;
    double global_loss = 0.0;
    double gamma = 0.0;
    std::uint64_t weight_hash = 0;
};

inline std::uint64_t hash_weights(const ModelWeights& w) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (double v : w.values) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, 8);
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xff;
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

struct FederationConfig {
    std::uint64_t rounds = 500;
    int local_epochs = 1;
    int batch_size = 64;
    double local_lr = 0.05;
    GammaSchedule gamma;
    AggregationRule rule = AggregationRule::PwFedAvg;
    PowerMode power_mode = PowerMode::Batch;
    std::uint64_t seed = 0;
};

struct FederationResult {
    ModelWeights global;
    std::vector<RoundRecord> history;
};

/// Algorithm-1 loop: client updates in parallel, aggregation barrier,
/// global step, broadcast. Deterministic for a fixed (clients, init, cfg).
inline FederationResult run_federated(std::vector<ClientState>& clients, ModelWeights init,
                                      const FederationConfig& cfg) {
    if (clients.empty()) throw std::invalid_argument("no federation clients");
    FederationResult res;
    res.global = std::move(init);
    res.history.reserve(cfg.rounds);
    for (std::uint64_t t = 0; t < cfg.rounds; ++t) {
        std::vector<ClientUpdate> updates(clients.size());
        parallel_for(clients.size(), [&](std::size_t k) {
            updates[k] = client_update(clients[k], res.global, cfg.local_epochs, cfg.batch_size,
                                       cfg.local_lr, t, cfg.seed, cfg.power_mode);
        });
        std::sort(updates.begin(), updates.end(),
                  [](const ClientUpdate& a, const ClientUpdate& b) { return a.client_id < b.client_id; });

        RoundRecord rec;
        rec.round = t;
        for (const auto& u : updates) {
            double norm2 = 0.0;
            for (double v : u.grad.values) norm2 += v * v;
            rec.client_grad_norm.push_back(std::sqrt(norm2));
            rec.client_loss.push_back(u.grad.mean_loss);
        }

        auto agg = aggregate(std::move(updates), cfg.rule);
        const double gamma = cfg.gamma.at(t);
        global_step(res.global, agg.grad, gamma);
        for (auto& c : clients) c.weights = res.global;  // broadcast

        rec.client_ids = agg.client_ids;
        rec.client_weight = agg.weights;
        rec.gamma = gamma;
        rec.global_loss = agg.weighted_loss;
        rec.weight_hash = hash_weights(res.global);
        res.history.push_back(std::move(rec));
    }
    return res;
}

inline void write_round_log(const std::vector<RoundRecord>& history, const std::string& path) {
    CsvWriter csv(path, "round,client,weight,grad_norm,loss,gamma");
    for (const auto& r : history)
        for (std::size_t k = 0; k < r.client_ids.size(); ++k)
            csv.row(r.round, r.client_ids[k], r.client_weight[k],
                    k < r.client_grad_norm.size() ? r.client_grad_norm[k] : 0.0,
                    k < r.client_loss.size() ? r.client_loss[k] : 0.0, r.gamma);
}

/// Centralized baseline: all client datasets pooled into one local run.
inline SampleMatrix pool_samples(std::span<const Dataset* const> datasets) {
    if (datasets.empty()) throw std::invalid_argument("no datasets to pool");
    SampleMatrix pooled;
    pooled.input_size = 2 * datasets.front()->samples_per_record;
    pooled.target_size = datasets.front()->num_subchannels;
    for (const Dataset* ds : datasets) {
        auto m = to_samples(*ds);
        if (m.input_size != pooled.input_size || m.target_size != pooled.target_size)
            throw std::invalid_argument("dataset shapes differ; cannot pool");
        pooled.inputs.insert(pooled.inputs.end(), m.inputs.begin(), m.inputs.end());
        pooled.targets.insert(pooled.targets.end(), m.targets.begin(), m.targets.end());
    }
    return pooled;
}

}  // namespace specfed
