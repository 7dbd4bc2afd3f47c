#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "specfed/csv.hpp"
#include "specfed/linalg.hpp"
#include "specfed/parallel.hpp"
#include "specfed/rng.hpp"

namespace specfed {

/// One federated client with quadratic loss L_k(w) = 1/2 (w-c)^T A (w-c)
/// and an explicit stochastic-gradient noise level: sampled gradients are
/// grad + (rho/sqrt(d)) N(0, I), so E||noise||^2 = rho^2 exactly.
struct QuadraticClient {
    Matrix hessian;              // A_k, symmetric positive-definite
    std::vector<double> center;  // c_k = argmin L_k
    double rho = 0.0;
};

/// Federated strongly-convex test problem with fixed aggregation weights.
/// Everything the bounds need (optima, smoothness, strong convexity) is
/// computable in closed form here.
class QuadraticFederatedProblem {
public:
    QuadraticFederatedProblem(std::vector<QuadraticClient> clients, std::vector<double> weights)
        : clients_(std::move(clients)), weights_(std::move(weights)) {
        if (clients_.empty()) throw std::invalid_argument("need at least one client");
        if (weights_.size() != clients_.size()) throw std::invalid_argument("one weight per client required");
        dim_ = clients_.front().hessian.n;
        double wsum = 0.0;
        for (double w : weights_) {
            if (w < 0.0) throw std::invalid_argument("weights must be non-negative");
            wsum += w;
        }
        if (std::abs(wsum - 1.0) > 1e-12) throw std::invalid_argument("weights must sum to 1");
        Matrix abar(dim_);
        std::vector<double> rhs(static_cast<std::size_t>(dim_), 0.0);
        smoothness_ = -1.0;
        strong_convexity_ = -1.0;
        for (std::size_t k = 0; k < clients_.size(); ++k) {
            const auto& cl = clients_[k];
            if (cl.hessian.n != dim_ || static_cast<int>(cl.center.size()) != dim_)
                throw std::invalid_argument("client dimension mismatch");
            const double lmax = max_eigenvalue(cl.hessian);
            const double lmin = min_eigenvalue(cl.hessian);
            if (!(lmin > 0.0)) throw std::invalid_argument("client Hessian must be positive definite");
            smoothness_ = std::max(smoothness_, lmax);
            strong_convexity_ = strong_convexity_ < 0.0 ? lmin : std::min(strong_convexity_, lmin);
            abar = abar.scaled_add(cl.hessian, weights_[k]);
            const auto ac = cl.hessian.mul(cl.center);
            for (int i = 0; i < dim_; ++i) rhs[static_cast<std::size_t>(i)] += weights_[k] * ac[static_cast<std::size_t>(i)];
        }
        optimum_ = solve_spd(abar, rhs);
        optimal_loss_ = global_loss(optimum_);
    }

    int dim() const { return dim_; }
    const std::vector<QuadraticClient>& clients() const { return clients_; }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<double>& optimum() const { return optimum_; }
    double optimal_loss() const { return optimal_loss_; }
    double smoothness() const { return smoothness_; }           // L
    double strong_convexity() const { return strong_convexity_; }  // beta

    double client_loss(std::size_t k, const std::vector<double>& w) const {
        const auto& cl = clients_[k];
        std::vector<double> e(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) e[i] = w[i] - cl.center[i];
        const auto ae = cl.hessian.mul(e);
        double acc = 0.0;
        for (std::size_t i = 0; i < e.size(); ++i) acc += e[i] * ae[i];
        return 0.5 * acc;
    }

    double global_loss(const std::vector<double>& w) const {
        double acc = 0.0;
        for (std::size_t k = 0; k < clients_.size(); ++k) acc += weights_[k] * client_loss(k, w);
        return acc;
    }

    std::vector<double> client_gradient(std::size_t k, const std::vector<double>& w) const {
        const auto& cl = clients_[k];
        std::vector<double> e(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) e[i] = w[i] - cl.center[i];
        return cl.hessian.mul(e);
    }

    /// Weighted full gradient (the virtual sequence a-bar).
    std::vector<double> full_gradient(const std::vector<double>& w) const {
        std::vector<double> g(w.size(), 0.0);
        for (std::size_t k = 0; k < clients_.size(); ++k) {
            const auto gk = client_gradient(k, w);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += weights_[k] * gk[i];
        }
        return g;
    }

    /// Weighted stochastic gradient (the virtual sequence a): full gradient
    /// plus per-client injected noise.
    std::vector<double> stochastic_gradient(const std::vector<double>& w, RandomStream& rng) const {
        std::vector<double> g = full_gradient(w);
        for (std::size_t k = 0; k < clients_.size(); ++k) {
            const double scale = weights_[k] * clients_[k].rho / std::sqrt(static_cast<double>(dim_));
            if (scale == 0.0) continue;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * rng.normal();
        }
        return g;
    }

private:
    std::vector<QuadraticClient> clients_;
    std::vector<double> weights_;
    int dim_ = 0;
    std::vector<double> optimum_;
    double optimal_loss_ = 0.0;
    double smoothness_ = 0.0;
    double strong_convexity_ = 0.0;
};

struct AssumptionEstimates {
    double smoothness = 0.0;        // L
    double strong_convexity = 0.0;  // beta
    std::vector<double> rho;
    double tau = 0.0;
    double kappa = 0.0;
    int dim = 0;
};

/// tau = max_k { (L d / 2) (max_i |w*_i - w*_{k,i}|)^2 } with w*_k = c_k.
inline double compute_tau(const QuadraticFederatedProblem& p) {
    const auto& opt = p.optimum();
    double tau = 0.0;
    for (const auto& cl : p.clients()) {
        double max_abs = 0.0;
        for (std::size_t i = 0; i < opt.size(); ++i)
            max_abs = std::max(max_abs, std::abs(opt[i] - cl.center[i]));
        tau = std::max(tau, 0.5 * p.smoothness() * static_cast<double>(p.dim()) * max_abs * max_abs);
    }
    return tau;
}

/// G^t = 2 kappa tau + sum_k (alpha_k/alpha)^2 [rho_k^2 - 2 L tau].
inline double compute_Gt(const AssumptionEstimates& est, std::span<const double> weights) {
    double acc = 2.0 * est.kappa * est.tau;
    for (std::size_t k = 0; k < weights.size(); ++k)
        acc += weights[k] * weights[k] * (est.rho[k] * est.rho[k] - 2.0 * est.smoothness * est.tau);
    return acc;
}

/// kappa is instantiated as 1/gamma^0, the reciprocal of the largest step
/// size of a non-increasing schedule.
inline AssumptionEstimates estimate_assumptions(const QuadraticFederatedProblem& p, double gamma0) {
    AssumptionEstimates est;
    est.smoothness = p.smoothness();
    est.strong_convexity = p.strong_convexity();
    est.dim = p.dim();
    for (const auto& cl : p.clients()) est.rho.push_back(cl.rho);
    est.tau = compute_tau(p);
    est.kappa = 1.0 / gamma0;
    return est;
}

/// Learning-rate schedules for the descent loop. Proof follows the
/// appendix: gamma_t = 2 / (beta t + 2 L); Statement is the alternative in
/// the theorem text: gamma_t = 1 / (beta t + L).
struct StepSchedule {
    enum class Kind { Constant, Proof, Statement };
    Kind kind = Kind::Proof;
    double constant = 0.1;
    double beta = 1.0;
    double smoothness = 1.0;

    double at(std::uint64_t t) const {
        switch (kind) {
            case Kind::Constant: return constant;
            case Kind::Proof: return 2.0 / (beta * static_cast<double>(t) + 2.0 * smoothness);
            case Kind::Statement: return 1.0 / (beta * static_cast<double>(t) + smoothness);
        }
        return constant;
    }

    static StepSchedule proof(const QuadraticFederatedProblem& p) {
        return {Kind::Proof, 0.0, p.strong_convexity(), p.smoothness()};
    }
};

/// Per-round trajectory data of one descent run.
struct BoundTrace {
    std::vector<std::vector<double>> omega;  // T+1 iterates
    std::vector<double> gamma;               // T
    std::vector<double> delta;               // T+1, ||w_t - w*||^2
    std::vector<double> gap;                 // T+1, L(w_t) - L*
    std::vector<double> g_t;                 // T, per-step G (constant weights here)
    std::vector<double> rhs_lemma3;          // T, (1-beta gamma) delta_t + gamma^2 G_t
    double envelope_constant = 0.0;          // 2G/beta + L delta_0
};

inline double theorem1_envelope(const AssumptionEstimates& est, double envelope_constant,
                                std::uint64_t t) {
    return est.smoothness /
           (est.strong_convexity * static_cast<double>(t) + 2.0 * est.smoothness) * envelope_constant;
}

/// Runs T federated descent steps from omega0. With stochastic=false every
/// step uses the exact weighted gradient.
inline BoundTrace run_descent(const QuadraticFederatedProblem& p, const StepSchedule& schedule,
                              std::uint64_t steps, const std::vector<double>& omega0, bool stochastic,
                              std::uint64_t seed) {
    const auto est = estimate_assumptions(p, schedule.at(0));
    const double g_const = compute_Gt(est, p.weights());
    BoundTrace tr;
    tr.omega.reserve(steps + 1);
    tr.omega.push_back(omega0);
    tr.delta.push_back(squared_distance(omega0, p.optimum()));
    tr.gap.push_back(p.global_loss(omega0) - p.optimal_loss());
    tr.envelope_constant = 2.0 * g_const / est.strong_convexity + est.smoothness * tr.delta[0];
    auto rng = RandomStream::child(seed, StreamDomain::GradientNoise);
    std::vector<double> w = omega0;
    for (std::uint64_t t = 0; t < steps; ++t) {
        const double gamma = schedule.at(t);
        const auto g = stochastic ? p.stochastic_gradient(w, rng) : p.full_gradient(w);
        tr.rhs_lemma3.push_back((1.0 - est.strong_convexity * gamma) * tr.delta.back() + gamma * gamma * g_const);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= gamma * g[i];
        tr.gamma.push_back(gamma);
        tr.g_t.push_back(g_const);
        tr.omega.push_back(w);
        tr.delta.push_back(squared_distance(w, p.optimum()));
        tr.gap.push_back(p.global_loss(w) - p.optimal_loss());
    }
    return tr;
}

struct Lemma2Report {
    std::vector<double> empirical;  // mean ||a - a_bar||^2 per checked round
    std::vector<double> stderr_mean;
    double bound = 0.0;  // sum (alpha_k/alpha)^2 rho_k^2
    int rounds_passed = 0;
    int rounds_checked = 0;
};

/// Monte-Carlo check of the aggregated-gradient variance bound at the given
/// iterates. The bound does not depend on the iterate (additive noise); the
/// states are still swept to exercise the statistic along a real run.
inline Lemma2Report verify_lemma2(const QuadraticFederatedProblem& p,
                                  std::span<const std::vector<double>> states, int resamples,
                                  std::uint64_t seed) {
    Lemma2Report rep;
    for (std::size_t k = 0; k < p.clients().size(); ++k) {
        const double w = p.weights()[k];
        rep.bound += w * w * p.clients()[k].rho * p.clients()[k].rho;
    }
    rep.rounds_checked = static_cast<int>(states.size());
    for (std::size_t s = 0; s < states.size(); ++s) {
        auto rng = RandomStream::child(seed, StreamDomain::GradientNoise, s);
        const auto abar = p.full_gradient(states[s]);
        double mean = 0.0, m2 = 0.0;
        for (int r = 0; r < resamples; ++r) {
            const auto a = p.stochastic_gradient(states[s], rng);
            double dist = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) {
                const double d = a[i] - abar[i];
                dist += d * d;
            }
            const double delta = dist - mean;
            mean += delta / static_cast<double>(r + 1);
            m2 += delta * (dist - mean);
        }
        const double se = std::sqrt(m2 / static_cast<double>(resamples - 1) / static_cast<double>(resamples));
        rep.empirical.push_back(mean);
        rep.stderr_mean.push_back(se);
        if (mean <= rep.bound + 3.0 * se) ++rep.rounds_passed;
    }
    return rep;
}

struct Lemma3Report {
    std::uint64_t steps_checked = 0;
    std::uint64_t steps_holding = 0;
    std::uint64_t hypothesis_violations = 0;  // steps where 1/kappa <= gamma_t fails
    std::vector<std::uint8_t> holds;
};

/// Deterministic per-step check on a full-batch run:
/// delta_{t+1} <= (1 - beta gamma_t) delta_t + gamma_t^2 G_t.
/// The literal hypothesis 1/kappa <= gamma_t is counted and reported, never
/// silently skipped (with kappa = 1/gamma^0 it only holds where the
/// schedule equals its initial step).
inline Lemma3Report verify_lemma3_fullbatch(const BoundTrace& tr, const AssumptionEstimates& est) {
    Lemma3Report rep;
    rep.steps_checked = tr.gamma.size();
    rep.holds.resize(tr.gamma.size(), 0);
    for (std::size_t t = 0; t < tr.gamma.size(); ++t) {
        if (1.0 / est.kappa > tr.gamma[t] + 1e-15) ++rep.hypothesis_violations;
        const bool ok = tr.delta[t + 1] <= tr.rhs_lemma3[t] * (1.0 + 1e-12) + 1e-15;
        rep.holds[t] = ok ? 1 : 0;
        if (ok) ++rep.steps_holding;
    }
    return rep;
}

/// Stochastic per-step check in empirical expectation: from each iterate of
/// a reference run, the mean of ||w_t - gamma (grad + noise) - w*||^2 over
/// replicate single steps must stay within 3 standard errors of the bound.
inline Lemma3Report verify_lemma3_stochastic(const QuadraticFederatedProblem& p, const BoundTrace& tr,
                                             const AssumptionEstimates& est, int replicates,
                                             std::uint64_t seed) {
    Lemma3Report rep;
    const std::size_t steps = tr.gamma.size();
    rep.steps_checked = steps;
    rep.holds.resize(steps, 0);
    std::vector<std::uint8_t> hypothesis_bad(steps, 0);
    parallel_for(steps, [&](std::size_t t) {
        const double gamma = tr.gamma[t];
        if (1.0 / est.kappa > gamma + 1e-15) hypothesis_bad[t] = 1;
        auto rng = RandomStream::child(seed, StreamDomain::GradientNoise, t);
        const auto& w = tr.omega[t];
        double mean = 0.0, m2 = 0.0;
        for (int r = 0; r < replicates; ++r) {
            const auto g = p.stochastic_gradient(w, rng);
            std::vector<double> next(w.size());
            for (std::size_t i = 0; i < w.size(); ++i) next[i] = w[i] - gamma * g[i];
            const double dist = squared_distance(next, p.optimum());
            const double delta = dist - mean;
            mean += delta / static_cast<double>(r + 1);
            m2 += delta * (dist - mean);
        }
        const double se = std::sqrt(m2 / static_cast<double>(replicates - 1) / static_cast<double>(replicates));
        const double rhs = (1.0 - est.strong_convexity * gamma) * tr.delta[t] + gamma * gamma * tr.g_t[t];
        rep.holds[t] = mean <= rhs + 3.0 * se ? 1 : 0;
    });
    for (std::size_t t = 0; t < steps; ++t) {
        rep.steps_holding += rep.holds[t];
        rep.hypothesis_violations += hypothesis_bad[t];
    }
    return rep;
}

struct Theorem1Report {
    double max_gap_ratio = 0.0;  // max over t of gap / envelope (full batch)
    bool envelope_ok = false;
    double slope = 0.0;          // log-log decay of the noisy-run gap
    std::uint64_t slope_points = 0;
};

/// Envelope check on a full-batch trace plus an O(1/T) decay fit on noisy
/// companion runs (the noiseless gap decays much faster than 1/T, so the
/// rate is measured where the noise floor drives it).
inline Theorem1Report verify_theorem1(const QuadraticFederatedProblem& p, const BoundTrace& fullbatch,
                                      const AssumptionEstimates& est, std::uint64_t fit_lo,
                                      std::uint64_t fit_hi, int fit_runs, std::uint64_t seed) {
    Theorem1Report rep;
    rep.envelope_ok = true;
    for (std::size_t t = 0; t < fullbatch.gap.size(); ++t) {
        const double env = theorem1_envelope(est, fullbatch.envelope_constant, t);
        if (env > 0.0) {
            const double ratio = fullbatch.gap[t] / env;
            rep.max_gap_ratio = std::max(rep.max_gap_ratio, ratio);
            if (fullbatch.gap[t] > env * (1.0 + 1e-9)) rep.envelope_ok = false;
        } else if (fullbatch.gap[t] > 1e-15) {
            rep.envelope_ok = false;
        }
    }

    // noisy runs for the decay fit
    StepSchedule sched = StepSchedule::proof(p);
    std::vector<std::uint64_t> checkpoints;
    const int points = 40;
    for (int i = 0; i < points; ++i) {
        const double f = static_cast<double>(i) / (points - 1);
        const auto t = static_cast<std::uint64_t>(
            std::llround(std::exp(std::log(static_cast<double>(fit_lo)) +
                                  f * (std::log(static_cast<double>(fit_hi)) - std::log(static_cast<double>(fit_lo))))));
        if (checkpoints.empty() || t > checkpoints.back()) checkpoints.push_back(t);
    }
    std::vector<double> mean_gap(checkpoints.size(), 0.0);
    std::vector<std::vector<double>> run_gaps(static_cast<std::size_t>(fit_runs));
    parallel_for(static_cast<std::size_t>(fit_runs), [&](std::size_t r) {
        auto rng = RandomStream::child(seed, StreamDomain::GradientNoise, 1000 + r);
        std::vector<double> w = fullbatch.omega.front();
        auto& gaps = run_gaps[r];
        gaps.resize(checkpoints.size(), 0.0);
        std::size_t next_cp = 0;
        for (std::uint64_t t = 0; t <= fit_hi && next_cp < checkpoints.size(); ++t) {
            if (t == checkpoints[next_cp]) gaps[next_cp++] = p.global_loss(w) - p.optimal_loss();
            const auto g = p.stochastic_gradient(w, rng);
            const double gamma = sched.at(t);
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= gamma * g[i];
        }
    });
    for (const auto& gaps : run_gaps)
        for (std::size_t i = 0; i < checkpoints.size(); ++i) mean_gap[i] += gaps[i] / fit_runs;

    // least squares on log gap vs log t
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < checkpoints.size(); ++i) {
        if (!(mean_gap[i] > 0.0)) continue;
        const double x = std::log(static_cast<double>(checkpoints[i]));
        const double y = std::log(mean_gap[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    if (n >= 2) rep.slope = (static_cast<double>(n) * sxy - sx * sy) / (static_cast<double>(n) * sxx - sx * sx);
    rep.slope_points = n;
    return rep;
}

/// Bound trace CSV: t,gamma,delta,rhs_lemma3,gap,envelope,Gt.
inline void write_bound_trace(const BoundTrace& tr, const AssumptionEstimates& est,
                              const std::string& path, std::uint64_t stride = 1) {
    CsvWriter csv(path, "t,gamma,delta,rhs_lemma3,gap,envelope,Gt");
    for (std::size_t t = 0; t < tr.gamma.size(); t += stride)
        csv.row(t, tr.gamma[t], tr.delta[t], tr.rhs_lemma3[t], tr.gap[t],
                theorem1_envelope(est, tr.envelope_constant, t), tr.g_t[t]);
}

}  // namespace specfed
