#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "specfed/csv.hpp"

namespace specfed {

/// Vacant-vote count for one subchannel across K predictions.
inline int vacant_votes(std::span<const std::uint32_t> preds, int subchannel) {
    int votes = 0;
    for (auto p : preds)
        if (!((p >> subchannel) & 1u)) ++votes;
    return votes;
}

/// n-out-of-K fusion: subchannel m is declared vacant (z_m = 0) iff at
/// least n of the K predictions vote vacant. n = 1 is the OR rule on vacant
/// votes, n = K the AND rule.
inline std::uint32_t fuse(std::span<const std::uint32_t> preds, int n, int num_subchannels) {
    const int k = static_cast<int>(preds.size());
    if (k < 1) throw std::invalid_argument("fusion needs at least one prediction");
    if (n < 1 || n > k) throw std::invalid_argument("fusion threshold must be in [1, K]");
    std::uint32_t z = 0;
    for (int m = 0; m < num_subchannels; ++m)
        if (vacant_votes(preds, m) < n) z |= (1u << m);
    return z;
}

/// Spectrum access collision indicator per subchannel:
///   +1 if truly vacant and previously declared vacant (successful reuse),
///   -1 if truly occupied but previously declared vacant (collision),
///    0 if the subchannel was not declared vacant.
inline std::vector<int> collision_indicator(std::uint32_t z_true, std::uint32_t z_prev,
                                            int num_subchannels) {
    std::vector<int> c(static_cast<std::size_t>(num_subchannels), 0);
    for (int m = 0; m < num_subchannels; ++m) {
        const bool declared_vacant = !((z_prev >> m) & 1u);
        if (!declared_vacant) continue;
        const bool truly_vacant = !((z_true >> m) & 1u);
        c[static_cast<std::size_t>(m)] = truly_vacant ? 1 : -1;
    }
    return c;
}

/// Transmission utility in bits: t_a * W_m * log2(1 + SNR).
inline double utility(double t_a, double subchannel_bandwidth_hz, double snr_linear) {
    if (snr_linear < 0.0) throw std::invalid_argument("SNR must be non-negative");
    return t_a * subchannel_bandwidth_hz * std::log2(1.0 + snr_linear);
}

/// Slot sub-durations and radio constants of the cost model. t_req and t_b
/// only participate in slot-time accounting; no cost formula uses them.
struct CostModel {
    double t_s = 1e-3;    // sensing sub-slot [s]
    double t_b = 1e-3;    // broadcast sub-slot [s]
    double t_a = 1e-3;    // access sub-slot [s]
    double t_req = 1e-3;  // request sub-slot [s]
    double v_cc = 1.0;    // receiver voltage
    double p_tx = 0.2;    // transmit power [W]
    double subchannel_bandwidth_hz = 625e3;

    void validate() const {
        const double vals[6] = {t_s, t_b, t_a, t_req, v_cc, p_tx};
        for (double v : vals)
            if (!(v >= 0.0)) throw std::invalid_argument("cost model entries must be non-negative");
        if (!(subchannel_bandwidth_hz > 0.0))
            throw std::invalid_argument("subchannel bandwidth must be positive");
    }
};

struct Costs {
    double sensing = 0.0;  // SC = t_s V_cc^2 W_m
    double access = 0.0;   // AC = t_a P_tx
};

inline Costs costs(const CostModel& m) {
    m.validate();
    return {m.t_s * m.v_cc * m.v_cc * m.subchannel_bandwidth_hz, m.t_a * m.p_tx};
}

/// Per-slot evaluation context of the fusion stage.
struct FusionFrame {
    std::uint64_t t = 0;
    std::vector<std::uint32_t> preds;  // K hard predictions
    std::uint32_t z = 0;               // fused vector for this slot
    std::uint32_t z_true = 0;          // ground truth
    std::vector<int> c;                // collision indicator vs z(t-1)
    int n = 1;
};

inline void write_fusion_trace(std::span<const FusionFrame> frames, int num_subchannels,
                               const std::string& path) {
    CsvWriter csv(path, "t,channel,votes_vacant,z,z_true,c");
    for (const auto& f : frames)
        for (int m = 0; m < num_subchannels; ++m)
            csv.row(f.t, m, vacant_votes(f.preds, m), (f.z >> m) & 1u, (f.z_true >> m) & 1u,
                    f.c[static_cast<std::size_t>(m)]);
}

/// One slot of the energy-efficiency ledger.
struct EeSlot {
    std::vector<std::uint32_t> allocation;      // y: one mask per UAV, bit m set if scheduled on m
    std::vector<int> c;                         // M collision indicators
    std::vector<std::vector<double>> utilities; // K x M
    double access_cost = 0.0;                   // AC
    double sensing_cost = 0.0;                  // SC
    std::uint32_t fused = 0;                    // z(t), sets the vacancy budget
};

/// Overall EE: sum over (t, k, m) of y c U / (y AC + SC), after checking
/// the allocation constraints of every slot. Violations throw with a
/// message naming the slot and the constraint.
inline double ee_objective(std::span<const EeSlot> history, int num_subchannels) {
    double total = 0.0;
    for (std::size_t t = 0; t < history.size(); ++t) {
        const auto& slot = history[t];
        const int k_n = static_cast<int>(slot.allocation.size());
        std::uint32_t channel_use = 0;
        int scheduled = 0;
        for (int k = 0; k < k_n; ++k) {
            const std::uint32_t y = slot.allocation[static_cast<std::size_t>(k)];
            if (std::popcount(y) > 1)
                throw std::invalid_argument("slot " + std::to_string(t) + ": UAV " + std::to_string(k) +
                                            " scheduled on more than one subchannel");
            if (y & channel_use)
                throw std::invalid_argument("slot " + std::to_string(t) +
                                            ": subchannel scheduled to more than one UAV");
            channel_use |= y;
            scheduled += std::popcount(y);
        }
        const int holes = num_subchannels - std::popcount(slot.fused);
        if (scheduled > holes)
            throw std::invalid_argument("slot " + std::to_string(t) + ": " + std::to_string(scheduled) +
                                        " UAVs scheduled but only " + std::to_string(holes) +
                                        " detected spectrum holes");
        for (int k = 0; k < k_n; ++k) {
            const std::uint32_t y = slot.allocation[static_cast<std::size_t>(k)];
            for (int m = 0; m < num_subchannels; ++m) {
                if (!((y >> m) & 1u)) continue;
                const double u = slot.utilities[static_cast<std::size_t>(k)][static_cast<std::size_t>(m)];
                total += static_cast<double>(slot.c[static_cast<std::size_t>(m)]) * u /
                         (slot.access_cost + slot.sensing_cost);
            }
        }
    }
    return total;
}

}  // namespace specfed
