#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "specfed/rng.hpp"

namespace specfed {

/// 2x2 row-stochastic transition matrix of one binary subchannel chain.
/// State 0 = vacant, 1 = occupied.
struct TransitionMatrix {
    double p00 = 1.0, p01 = 0.0;
    double p10 = 0.0, p11 = 1.0;

    static TransitionMatrix from_rates(double p01, double p10) {
        return {1.0 - p01, p01, p10, 1.0 - p10};
    }

    void validate() const {
        const double entries[4] = {p00, p01, p10, p11};
        for (double e : entries) {
            if (!(e >= 0.0 && e <= 1.0)) throw std::invalid_argument("transition entry outside [0,1]");
        }
        if (std::abs(p00 + p01 - 1.0) > 1e-12 || std::abs(p10 + p11 - 1.0) > 1e-12)
            throw std::invalid_argument("transition rows must sum to 1");
    }

    /// Long-run fraction of time in state 1; p01/(p01+p10) when the chain is
    /// irreducible. For a frozen chain (p01 = p10 = 0) the occupancy never
    /// leaves its initial state and we return 0.5 as a convention.
    double stationary_occupied() const {
        const double denom = p01 + p10;
        return denom > 0.0 ? p01 / denom : 0.5;
    }
};

/// Per-subchannel binary Markov chains replicated independently across B
/// base stations. All stations share the same P_m for subchannel m; the
/// state is a B x M bit matrix stored as one mask per station.
class OccupancyProcess {
public:
    OccupancyProcess(std::vector<TransitionMatrix> matrices, int num_stations)
        : matrices_(std::move(matrices)), state_(static_cast<std::size_t>(num_stations), 0u) {
        if (matrices_.empty()) throw std::invalid_argument("need at least one subchannel");
        if (matrices_.size() > 32) throw std::invalid_argument("at most 32 subchannels supported");
        if (num_stations < 1) throw std::invalid_argument("need at least one station");
        for (const auto& p : matrices_) p.validate();
    }

    int num_subchannels() const { return static_cast<int>(matrices_.size()); }
    int num_stations() const { return static_cast<int>(state_.size()); }
    const std::vector<TransitionMatrix>& matrices() const { return matrices_; }

    /// Current B x M occupancy, one bitmask per station (bit m = subchannel m).
    const std::vector<std::uint32_t>& state() const { return state_; }

    void set_state(const std::vector<std::uint32_t>& s) {
        if (s.size() != state_.size()) throw std::invalid_argument("state size mismatch");
        state_ = s;
    }

    /// Draws every bit independently from its stationary distribution.
    void reset_stationary(RandomStream& rng) {
        for (auto& mask : state_) {
            mask = 0;
            for (std::size_t m = 0; m < matrices_.size(); ++m)
                if (rng.bernoulli(matrices_[m].stationary_occupied())) mask |= (1u << m);
        }
    }

    /// Advances every (station, subchannel) bit one step under P_m.
    const std::vector<std::uint32_t>& step(RandomStream& rng) {
        for (auto& mask : state_) {
            std::uint32_t next = 0;
            for (std::size_t m = 0; m < matrices_.size(); ++m) {
                const bool occupied = (mask >> m) & 1u;
                const double p_to_occupied = occupied ? matrices_[m].p11 : matrices_[m].p01;
                if (rng.bernoulli(p_to_occupied)) next |= (1u << m);
            }
            mask = next;
        }
        return state_;
    }

private:
    std::vector<TransitionMatrix> matrices_;
    std::vector<std::uint32_t> state_;
};

/// One Markov step; returns the new B x M occupancy.
inline const std::vector<std::uint32_t>& step_occupancy(OccupancyProcess& proc, RandomStream& rng) {
    return proc.step(rng);
}

/// Union occupancy across stations: bit m set iff any station occupies m.
inline std::uint32_t make_label(const std::vector<std::uint32_t>& station_masks) {
    std::uint32_t h = 0;
    for (auto mask : station_masks) h |= mask;
    return h;
}

}  // namespace specfed
