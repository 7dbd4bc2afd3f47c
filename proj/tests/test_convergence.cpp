#include <catch2/catch_amalgamated.hpp>

#include "specfed/convergence.hpp"
#include "support/oracles.hpp"

using namespace specfed;

namespace {

Matrix scalar_matrix(double v) {
    Matrix m(1);
    m.at(0, 0) = v;
    return m;
}

QuadraticFederatedProblem two_client_line(double a, double c0, double c1) {
    std::vector<QuadraticClient> clients(2);
    clients[0].hessian = scalar_matrix(a);
    clients[0].center = {c0};
    clients[1].hessian = scalar_matrix(a);
    clients[1].center = {c1};
    return {std::move(clients), {0.5, 0.5}};
}

QuadraticFederatedProblem random_problem(int d, int k, double rho, std::uint64_t seed,
                                         std::vector<double> weights = {}) {
    RandomStream rng(seed);
    std::vector<QuadraticClient> clients;
    for (int i = 0; i < k; ++i) {
        QuadraticClient c;
        c.hessian = make_random_spd(d, 0.5, 2.0, rng);
        c.center.resize(static_cast<std::size_t>(d));
        for (auto& v : c.center) v = rng.normal();
        c.rho = rho;
        clients.push_back(std::move(c));
    }
    if (weights.empty()) weights.assign(static_cast<std::size_t>(k), 1.0 / k);
    return {std::move(clients), std::move(weights)};
}

}  // namespace

TEST_CASE("smoothness and strong convexity match power-iteration oracles") {
    const auto p = random_problem(4, 3, 0.0, 61);
    double oracle_l = 0.0, oracle_beta = 1e300;
    for (const auto& c : p.clients()) {
        oracle_l = std::max(oracle_l, oracle::power_iteration_max(c.hessian));
        oracle_beta = std::min(oracle_beta, oracle::power_iteration_min(c.hessian));
    }
    REQUIRE(p.smoothness() == Catch::Approx(oracle_l).margin(1e-8));
    REQUIRE(p.strong_convexity() == Catch::Approx(oracle_beta).margin(1e-8));
    REQUIRE(p.strong_convexity() > 0.0);
    REQUIRE(p.strong_convexity() <= p.smoothness());
}

TEST_CASE("global optimum zeroes the weighted gradient") {
    const auto p = random_problem(5, 3, 0.0, 62, {0.5, 0.3, 0.2});
    const auto g = p.full_gradient(p.optimum());
    for (double v : g) REQUIRE(std::abs(v) < 1e-10);
    // per-client optimum is the center
    for (std::size_t k = 0; k < p.clients().size(); ++k) {
        const auto gk = p.client_gradient(k, p.clients()[k].center);
        for (double v : gk) REQUIRE(v == 0.0);
    }
    // no iterate does better than the optimum
    RandomStream rng(63);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> w(5);
        for (auto& v : w) v = 3.0 * rng.normal();
        REQUIRE(p.global_loss(w) >= p.optimal_loss() - 1e-12);
    }
}

TEST_CASE("tau closed forms") {
    SECTION("identical centers give zero gap") {
        auto p = two_client_line(2.0, 0.7, 0.7);
        REQUIRE(compute_tau(p) == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("d=1 hand-computed value") {
        // L = 2, centers 0 and 1, uniform weights: optimum 0.5,
        // tau = (L d / 2) (0.5)^2 = 0.25
        auto p = two_client_line(2.0, 0.0, 1.0);
        REQUIRE(p.optimum()[0] == Catch::Approx(0.5).margin(1e-12));
        REQUIRE(compute_tau(p) == Catch::Approx(0.25).margin(1e-12));
    }
    SECTION("client reordering leaves tau unchanged") {
        auto p = random_problem(3, 3, 0.0, 64);
        std::vector<QuadraticClient> reordered{p.clients()[2], p.clients()[0], p.clients()[1]};
        QuadraticFederatedProblem q(reordered, p.weights());
        REQUIRE(compute_tau(p) == Catch::Approx(compute_tau(q)).margin(1e-12));
    }
}

TEST_CASE("G formula substitutions") {
    SECTION("tau zero, equal noise, uniform weights") {
        AssumptionEstimates est;
        est.smoothness = 2.0;
        est.tau = 0.0;
        est.kappa = 5.0;
        est.rho = {1.5, 1.5, 1.5};
        const std::vector<double> w(3, 1.0 / 3.0);
        REQUIRE(compute_Gt(est, w) == Catch::Approx(1.5 * 1.5 / 3.0).margin(1e-12));
    }
    SECTION("all noise and heterogeneity off") {
        AssumptionEstimates est;
        est.smoothness = 2.0;
        est.tau = 0.0;
        est.kappa = 5.0;
        est.rho = {0.0, 0.0};
        const std::vector<double> w(2, 0.5);
        REQUIRE(compute_Gt(est, w) == 0.0);
    }
    SECTION("hand substitution") {
        // K=2, kappa=10, tau=0.25, rho=[1,2], weights [0.5,0.5], L=2
        AssumptionEstimates est;
        est.smoothness = 2.0;
        est.tau = 0.25;
        est.kappa = 10.0;
        est.rho = {1.0, 2.0};
        const std::vector<double> w(2, 0.5);
        REQUIRE(compute_Gt(est, w) == Catch::Approx(5.75).margin(1e-12));
    }
}

TEST_CASE("lemma 2 bound on the aggregated gradient noise") {
    SECTION("no noise, both sides zero") {
        auto p = random_problem(3, 2, 0.0, 65);
        std::vector<std::vector<double>> states{std::vector<double>(3, 1.0)};
        const auto rep = verify_lemma2(p, states, 200, 66);
        REQUIRE(rep.bound == 0.0);
        REQUIRE(rep.empirical[0] == 0.0);
        REQUIRE(rep.rounds_passed == 1);
    }
    SECTION("single client matches its own variance") {
        auto p = random_problem(4, 1, 1.2, 67);
        std::vector<std::vector<double>> states{std::vector<double>(4, 0.5)};
        const auto rep = verify_lemma2(p, states, 3000, 68);
        REQUIRE(rep.bound == Catch::Approx(1.2 * 1.2).margin(1e-12));
        REQUIRE(rep.empirical[0] == Catch::Approx(rep.bound).epsilon(0.1));
        REQUIRE(rep.rounds_passed == 1);
    }
    SECTION("uniform weights, equal noise: bound is rho^2 / K") {
        auto p = random_problem(4, 4, 0.8, 69);
        std::vector<std::vector<double>> states{std::vector<double>(4, 0.0)};
        const auto rep = verify_lemma2(p, states, 1000, 70);
        REQUIRE(rep.bound == Catch::Approx(0.8 * 0.8 / 4.0).margin(1e-12));
        REQUIRE(rep.rounds_passed == 1);
    }
}

TEST_CASE("lemma 3 contraction checks") {
    SECTION("single client, constant step below 1/L") {
        auto p = random_problem(4, 1, 0.0, 71);
        StepSchedule sched;
        sched.kind = StepSchedule::Kind::Constant;
        sched.constant = 0.9 / p.smoothness();
        const auto tr = run_descent(p, sched, 400, std::vector<double>(4, 2.0), false, 72);
        const auto est = estimate_assumptions(p, sched.at(0));
        const auto rep = verify_lemma3_fullbatch(tr, est);
        REQUIRE(rep.steps_holding == rep.steps_checked);
        REQUIRE(rep.hypothesis_violations == 0);  // constant schedule satisfies 1/kappa <= gamma
    }
    SECTION("zero tau and noise reduce the bound to pure contraction") {
        auto p = two_client_line(2.0, 0.3, 0.3);
        StepSchedule sched = StepSchedule::proof(p);
        const auto tr = run_descent(p, sched, 100, {5.0}, false, 73);
        const auto est = estimate_assumptions(p, sched.at(0));
        REQUIRE(est.tau == Catch::Approx(0.0).margin(1e-15));
        for (std::size_t t = 0; t < tr.gamma.size(); ++t)
            REQUIRE(tr.rhs_lemma3[t] ==
                    Catch::Approx((1.0 - est.strong_convexity * tr.gamma[t]) * tr.delta[t]).margin(1e-12));
        const auto rep = verify_lemma3_fullbatch(tr, est);
        REQUIRE(rep.steps_holding == rep.steps_checked);
    }
    SECTION("identical clients behave as a single client") {
        RandomStream rng(74);
        auto a = make_random_spd(3, 0.5, 2.0, rng);
        std::vector<QuadraticClient> one{{a, {1.0, -1.0, 0.5}, 0.0}};
        std::vector<QuadraticClient> three(3, one[0]);
        QuadraticFederatedProblem p1(one, {1.0});
        QuadraticFederatedProblem p3(three, {1.0 / 3, 1.0 / 3, 1.0 / 3});
        StepSchedule sched = StepSchedule::proof(p1);
        const std::vector<double> w0(3, 2.0);
        const auto t1 = run_descent(p1, sched, 50, w0, false, 75);
        const auto t3 = run_descent(p3, sched, 50, w0, false, 75);
        for (std::size_t t = 0; t < t1.delta.size(); ++t)
            REQUIRE(t1.delta[t] == Catch::Approx(t3.delta[t]).margin(1e-12));
    }
    SECTION("stochastic verification within three standard errors") {
        auto p = random_problem(3, 2, 0.6, 76);
        StepSchedule sched = StepSchedule::proof(p);
        const auto tr = run_descent(p, sched, 60, std::vector<double>(3, 1.5), true, 77);
        const auto est = estimate_assumptions(p, sched.at(0));
        const auto rep = verify_lemma3_stochastic(p, tr, est, 800, 78);
        REQUIRE(rep.steps_checked == 60);
        REQUIRE(static_cast<double>(rep.steps_holding) >= 0.99 * 60.0);
    }
}

TEST_CASE("theorem 1 fixed point and envelope") {
    SECTION("starting at the optimum with no noise stays at zero gap") {
        auto p = two_client_line(2.0, 0.4, 0.4);  // tau = 0
        StepSchedule sched = StepSchedule::proof(p);
        const auto tr = run_descent(p, sched, 200, p.optimum(), false, 79);
        for (double g : tr.gap) REQUIRE(std::abs(g) < 1e-14);
        const auto est = estimate_assumptions(p, sched.at(0));
        const auto rep = verify_theorem1(p, tr, est, 10, 100, 2, 80);
        REQUIRE(rep.envelope_ok);
        REQUIRE(rep.max_gap_ratio < 1e-9);
    }
    SECTION("full-batch gap stays under the envelope") {
        auto p = random_problem(4, 3, 0.5, 81, {0.5, 0.25, 0.25});
        StepSchedule sched = StepSchedule::proof(p);
        const auto tr = run_descent(p, sched, 5000, std::vector<double>(4, 3.0), false, 82);
        const auto est = estimate_assumptions(p, sched.at(0));
        const auto rep = verify_theorem1(p, tr, est, 100, 5000, 4, 83);
        REQUIRE(rep.envelope_ok);
        REQUIRE(rep.max_gap_ratio <= 1.0 + 1e-9);
        // the noisy companion runs decay like 1/T
        REQUIRE(rep.slope > -1.6);
        REQUIRE(rep.slope < -0.5);
    }
}

TEST_CASE("linear algebra building blocks") {
    RandomStream rng(84);
    SECTION("jacobi eigenvalues against residual oracle") {
        const auto m = make_random_spd(5, 0.3, 4.0, rng);
        auto eig = jacobi_eigenvalues(m);
        std::sort(eig.begin(), eig.end());
        REQUIRE(eig.front() == Catch::Approx(0.3).margin(1e-9));
        REQUIRE(eig.back() == Catch::Approx(4.0).margin(1e-9));
        // trace equals eigenvalue sum
        double trace = 0.0, esum = 0.0;
        for (int i = 0; i < 5; ++i) trace += m.at(i, i);
        for (double e : eig) esum += e;
        REQUIRE(trace == Catch::Approx(esum).margin(1e-9));
    }
    SECTION("spd solve") {
        const auto m = make_random_spd(4, 0.5, 2.0, rng);
        std::vector<double> x{1.0, -2.0, 0.5, 3.0};
        const auto b = m.mul(x);
        const auto solved = solve_spd(m, b);
        for (int i = 0; i < 4; ++i) REQUIRE(solved[static_cast<std::size_t>(i)] == Catch::Approx(x[static_cast<std::size_t>(i)]).margin(1e-10));
    }
    SECTION("non positive definite rejected") {
        Matrix bad(2);
        bad.at(0, 0) = 1.0;
        bad.at(1, 1) = -1.0;
        REQUIRE_THROWS_AS(solve_spd(bad, {1.0, 1.0}), std::invalid_argument);
    }
}

TEST_CASE("problem construction rejects bad inputs") {
    RandomStream rng(85);
    std::vector<QuadraticClient> clients{{make_random_spd(2, 0.5, 1.0, rng), {0.0, 0.0}, 0.0}};
    REQUIRE_THROWS_AS(QuadraticFederatedProblem(clients, {0.5, 0.5}), std::invalid_argument);
    REQUIRE_THROWS_AS(QuadraticFederatedProblem(clients, {0.9}), std::invalid_argument);  // not summing to 1
    Matrix not_pd(2);
    not_pd.at(0, 0) = 1.0;
    not_pd.at(1, 1) = 0.0;
    std::vector<QuadraticClient> bad{{not_pd, {0.0, 0.0}, 0.0}};
    REQUIRE_THROWS_AS(QuadraticFederatedProblem(bad, {1.0}), std::invalid_argument);
}
