#include <catch2/catch_amalgamated.hpp>

#include "specfed/fusion.hpp"
#include "specfed/rng.hpp"

using namespace specfed;

TEST_CASE("n-out-of-K fusion rule on single columns") {
    // K=3 predictions over one subchannel; bit set = occupied vote
    SECTION("two vacant votes clear the channel at n=2") {
        std::vector<std::uint32_t> preds{0u, 0u, 1u};
        REQUIRE(fuse(preds, 2, 1) == 0u);
    }
    SECTION("n=3 requires unanimity on vacant") {
        std::vector<std::uint32_t> preds{0u, 0u, 1u};
        REQUIRE(fuse(preds, 3, 1) == 1u);
    }
    SECTION("n=1 is the OR rule: any vacant vote clears") {
        std::vector<std::uint32_t> preds{1u, 1u, 0u};
        REQUIRE(fuse(preds, 1, 1) == 0u);
        std::vector<std::uint32_t> all_occupied{1u, 1u, 1u};
        REQUIRE(fuse(all_occupied, 1, 1) == 1u);
    }
    SECTION("threshold bounds are enforced") {
        std::vector<std::uint32_t> preds{0u, 0u};
        REQUIRE_THROWS_AS(fuse(preds, 0, 1), std::invalid_argument);
        REQUIRE_THROWS_AS(fuse(preds, 3, 1), std::invalid_argument);
    }
}

TEST_CASE("fusion properties over random votes") {
    RandomStream rng(90);
    for (int rep = 0; rep < 200; ++rep) {
        const int m = 8;
        std::vector<std::uint32_t> preds(3);
        for (auto& p : preds) p = static_cast<std::uint32_t>(rng.uniform_int(1u << m));
        // the vacant set shrinks weakly as n grows
        std::uint32_t prev = fuse(preds, 1, m);
        for (int n = 2; n <= 3; ++n) {
            const std::uint32_t cur = fuse(preds, n, m);
            REQUIRE((cur & prev) == prev);  // everything occupied at n-1 stays occupied
            prev = cur;
        }
        // unanimous votes survive every threshold
        std::vector<std::uint32_t> unanimous(3, preds[0]);
        for (int n = 1; n <= 3; ++n) REQUIRE(fuse(unanimous, n, m) == preds[0]);
    }
}

TEST_CASE("collision indicator cases") {
    // c_m = +1 when truly vacant and declared vacant
    REQUIRE(collision_indicator(0u, 0u, 1)[0] == 1);
    // c_m = -1 when truly occupied but declared vacant
    REQUIRE(collision_indicator(1u, 0u, 1)[0] == -1);
    // not declared vacant: 0 either way
    REQUIRE(collision_indicator(0u, 1u, 1)[0] == 0);
    REQUIRE(collision_indicator(1u, 1u, 1)[0] == 0);
}

TEST_CASE("transmission utility formula") {
    REQUIRE(utility(1.0, 1.0, 0.0) == 0.0);
    REQUIRE(utility(1.0, 1.0, 1.0) == Catch::Approx(1.0).margin(1e-15));
    REQUIRE(utility(1e-3, 625e3, 3.0) == Catch::Approx(1250.0).margin(1e-9));
    REQUIRE_THROWS_AS(utility(1.0, 1.0, -0.1), std::invalid_argument);
}

TEST_CASE("sensing and access cost formulas") {
    CostModel m;
    m.t_s = 1e-3;
    m.v_cc = 1.0;
    m.subchannel_bandwidth_hz = 625e3;
    m.t_a = 1e-3;
    m.p_tx = 0.2;
    const auto c = costs(m);
    REQUIRE(c.sensing == Catch::Approx(625.0).margin(1e-12));
    REQUIRE(c.access == Catch::Approx(2e-4).margin(1e-18));

    m.t_s = 0.0;  // zero sensing slot is a valid degenerate case
    REQUIRE(costs(m).sensing == 0.0);

    m.subchannel_bandwidth_hz = -1.0;
    REQUIRE_THROWS_AS(costs(m), std::invalid_argument);
}

TEST_CASE("energy efficiency objective") {
    SECTION("empty history") {
        std::vector<EeSlot> history;
        REQUIRE(ee_objective(history, 4) == 0.0);
    }
    SECTION("single successful transmission") {
        EeSlot slot;
        slot.allocation = {0b0001u};
        slot.c = {1, 0, 0, 0};
        slot.utilities = {{1250.0, 0.0, 0.0, 0.0}};
        slot.access_cost = 2e-4;
        slot.sensing_cost = 625.0;
        slot.fused = 0b1110u;  // one hole available
        std::vector<EeSlot> history{slot};
        REQUIRE(ee_objective(history, 4) == Catch::Approx(1250.0 / 625.0002).margin(1e-9));
        // a collision contributes the same magnitude, negated
        history[0].c[0] = -1;
        REQUIRE(ee_objective(history, 4) == Catch::Approx(-1250.0 / 625.0002).margin(1e-9));
    }
    SECTION("constraint violations are rejected with the offending slot named") {
        EeSlot slot;
        slot.allocation = {0b0011u};  // one UAV on two channels
        slot.c = {1, 1, 0, 0};
        slot.utilities = {{1.0, 1.0, 1.0, 1.0}};
        slot.access_cost = 1.0;
        slot.sensing_cost = 1.0;
        slot.fused = 0u;
        std::vector<EeSlot> history{slot};
        REQUIRE_THROWS_WITH(ee_objective(history, 4), Catch::Matchers::ContainsSubstring("slot 0"));

        slot.allocation = {0b0001u, 0b0001u};  // shared channel
        slot.utilities = {{1.0, 1.0, 1.0, 1.0}, {1.0, 1.0, 1.0, 1.0}};
        history[0] = slot;
        REQUIRE_THROWS_WITH(ee_objective(history, 4), Catch::Matchers::ContainsSubstring("more than one UAV"));
    }
    SECTION("vacancy budget") {
        // 3 of 4 channels occupied in z: only one UAV may transmit
        EeSlot slot;
        slot.allocation = {0b0001u, 0b0010u};
        slot.c = {1, 1, 0, 0};
        slot.utilities = {{1.0, 1.0, 1.0, 1.0}, {1.0, 1.0, 1.0, 1.0}};
        slot.access_cost = 1.0;
        slot.sensing_cost = 1.0;
        slot.fused = 0b1101u;
        std::vector<EeSlot> history{slot};
        REQUIRE_THROWS_WITH(ee_objective(history, 4), Catch::Matchers::ContainsSubstring("spectrum holes"));
        history[0].allocation = {0b0010u, 0u};
        REQUIRE_NOTHROW(ee_objective(history, 4));
    }
    SECTION("matches a term-by-term oracle on random histories") {
        RandomStream rng(91);
        const int m = 4, k = 2;
        std::vector<EeSlot> history;
        double expected = 0.0;
        for (int t = 0; t < 20; ++t) {
            EeSlot slot;
            slot.fused = static_cast<std::uint32_t>(rng.uniform_int(1u << m));
            std::vector<int> holes;
            for (int i = 0; i < m; ++i)
                if (!((slot.fused >> i) & 1u)) holes.push_back(i);
            slot.allocation.assign(k, 0u);
            std::uint32_t used = 0;
            for (int kk = 0; kk < k && kk < static_cast<int>(holes.size()); ++kk) {
                const int ch = holes[static_cast<std::size_t>(kk)];
                if (rng.bernoulli(0.7)) {
                    slot.allocation[static_cast<std::size_t>(kk)] = 1u << ch;
                    used |= 1u << ch;
                }
            }
            slot.c.resize(m);
            for (auto& c : slot.c) c = static_cast<int>(rng.uniform_int(3)) - 1;
            slot.utilities.assign(k, std::vector<double>(m));
            for (auto& row : slot.utilities)
                for (auto& u : row) u = rng.uniform(0.0, 100.0);
            slot.access_cost = rng.uniform(0.1, 1.0);
            slot.sensing_cost = rng.uniform(0.1, 1.0);
            // oracle: enumerate (k, m) pairs directly
            for (int kk = 0; kk < k; ++kk)
                for (int mm = 0; mm < m; ++mm)
                    if ((slot.allocation[static_cast<std::size_t>(kk)] >> mm) & 1u)
                        expected += slot.c[static_cast<std::size_t>(mm)] *
                                    slot.utilities[static_cast<std::size_t>(kk)][static_cast<std::size_t>(mm)] /
                                    (slot.access_cost + slot.sensing_cost);
            history.push_back(std::move(slot));
        }
        REQUIRE(ee_objective(history, m) == Catch::Approx(expected).margin(1e-9));
    }
}
