#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "specfed/channel.hpp"
#include "specfed/dataset.hpp"
#include "specfed/markov.hpp"
#include "specfed/noise.hpp"
#include "specfed/parallel.hpp"
#include "specfed/rng.hpp"
#include "specfed/waveform.hpp"

namespace specfed {

/// Tapped-delay channel generation parameters. link_gain[k][b] scales every
/// tap of the (station b, UAV k) link; it is the knob that makes receive
/// power heterogeneous across UAV locations.
struct ChannelConfig {
    int taps = 3;
    int delay_spread = 3;  // max sample gap between consecutive taps
    double decay = 0.5;    // magnitude ratio between consecutive taps
    std::vector<std::vector<double>> link_gain;  // K x B, default all 1.0

    double gain(int uav, int station) const {
        if (link_gain.empty()) return 1.0;
        return link_gain.at(static_cast<std::size_t>(uav)).at(static_cast<std::size_t>(station));
    }
};

struct GenerationConfig {
    std::uint64_t seed = 0;
    std::uint64_t slots = 1000;
    SubchannelPlan plan;
    std::vector<TransitionMatrix> markov;  // one per subchannel
    ChannelConfig channel;
    std::vector<double> snr_grid_db = {-10.0, 0.0, 10.0, 20.0};
    int samples_per_record = 32;  // J
    double train_fraction = 0.7;
    bool debug_occupancy = false;

    void validate() const {
        plan.validate();
        if (markov.size() != static_cast<std::size_t>(plan.num_subchannels))
            throw std::invalid_argument("need one transition matrix per subchannel");
        for (const auto& p : markov) p.validate();
        if (snr_grid_db.empty()) throw std::invalid_argument("SNR grid must be non-empty");
        if (samples_per_record < 1 || samples_per_record > plan.fft_size())
            throw std::invalid_argument("samples per record must be in [1, fft_size]");
        if (!(train_fraction >= 0.0 && train_fraction <= 1.0))
            throw std::invalid_argument("train fraction must be in [0,1]");
        if (!channel.link_gain.empty()) {
            if (channel.link_gain.size() != static_cast<std::size_t>(plan.num_uavs))
                throw std::invalid_argument("link_gain must have one row per UAV");
            for (const auto& row : channel.link_gain)
                if (row.size() != static_cast<std::size_t>(plan.num_stations))
                    throw std::invalid_argument("link_gain row must have one entry per station");
        }
        if (channel.taps < 1) throw std::invalid_argument("channel needs at least one tap");
    }
};

/// All channels of the scenario, indexed [uav][station]. Deterministic in
/// (seed, uav, station); independent of slot count and thread schedule.
inline std::vector<std::vector<MultipathChannel>> make_scenario_channels(const GenerationConfig& cfg) {
    std::vector<std::vector<MultipathChannel>> channels(static_cast<std::size_t>(cfg.plan.num_uavs));
    for (int k = 0; k < cfg.plan.num_uavs; ++k) {
        channels[static_cast<std::size_t>(k)].reserve(static_cast<std::size_t>(cfg.plan.num_stations));
        for (int b = 0; b < cfg.plan.num_stations; ++b) {
            auto rng = RandomStream::child(cfg.seed, StreamDomain::ChannelTaps,
                                           static_cast<std::uint64_t>(k) * 1000u + static_cast<std::uint64_t>(b));
            channels[static_cast<std::size_t>(k)].push_back(make_random_channel(
                cfg.channel.taps, cfg.channel.delay_spread, cfg.channel.decay, cfg.channel.gain(k, b), rng));
        }
    }
    return channels;
}

struct GeneratedData {
    std::vector<Dataset> per_uav;
    std::vector<std::vector<std::uint32_t>> occupancy;  // [slot][station] masks (pre-union)
};

/// Runs the full synthesis pipeline: occupancy evolution, per-station
/// waveforms, multipath propagation, per-record noise calibration across the
/// SNR grid, capture and labeling. Occupancy advances sequentially (it is a
/// Markov chain); everything downstream is parallel across slots with
/// per-slot derived streams, so the output is schedule-independent.
inline GeneratedData generate_datasets(const GenerationConfig& cfg) {
    cfg.validate();
    const int K = cfg.plan.num_uavs;
    const int B = cfg.plan.num_stations;
    const int J = cfg.samples_per_record;
    const std::uint64_t S = cfg.slots;

    GeneratedData out;
    out.occupancy.resize(S);
    {
        OccupancyProcess proc(cfg.markov, B);
        auto rng = RandomStream::child(cfg.seed, StreamDomain::Occupancy);
        proc.reset_stationary(rng);
        for (std::uint64_t s = 0; s < S; ++s) out.occupancy[s] = step_occupancy(proc, rng);
    }

    const auto channels = make_scenario_channels(cfg);

    // pass 1: noise-free captures and their powers, parallel across slots
    std::vector<std::vector<std::vector<std::complex<double>>>> captures(S);  // [slot][uav][J]
    std::vector<std::vector<double>> capture_power(S);                        // [slot][uav]
    parallel_for(S, [&](std::size_t s) {
        std::vector<std::vector<std::complex<double>>> signals(static_cast<std::size_t>(B));
        for (int b = 0; b < B; ++b) {
            auto rng = RandomStream::child(cfg.seed, StreamDomain::Waveform,
                                           static_cast<std::uint64_t>(s) * static_cast<std::uint64_t>(B) + static_cast<std::uint64_t>(b));
            signals[static_cast<std::size_t>(b)] = synth_waveform(cfg.plan, out.occupancy[s][static_cast<std::size_t>(b)], rng);
        }
        captures[s].resize(static_cast<std::size_t>(K));
        capture_power[s].resize(static_cast<std::size_t>(K));
        for (int k = 0; k < K; ++k) {
            auto rx = propagate(std::span(channels[static_cast<std::size_t>(k)]), std::span(signals));
            rx.resize(static_cast<std::size_t>(J));  // capture J samples from the slot start
            capture_power[s][static_cast<std::size_t>(k)] = mean_power(rx);
            captures[s][static_cast<std::size_t>(k)] = std::move(rx);
        }
    });

    // reference power per UAV for silent slots: mean over non-silent slots,
    // accumulated in slot order so the result is schedule-independent
    std::vector<double> ref_power(static_cast<std::size_t>(K), 1.0);
    for (int k = 0; k < K; ++k) {
        double acc = 0.0;
        std::uint64_t n = 0;
        for (std::uint64_t s = 0; s < S; ++s) {
            const double p = capture_power[s][static_cast<std::size_t>(k)];
            if (p > 0.0) {
                acc += p;
                ++n;
            }
        }
        if (n > 0) ref_power[static_cast<std::size_t>(k)] = acc / static_cast<double>(n);
    }

    // pass 2: per-record noise across the SNR grid
    const std::size_t levels = cfg.snr_grid_db.size();
    out.per_uav.resize(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        auto& ds = out.per_uav[static_cast<std::size_t>(k)];
        ds.num_subchannels = cfg.plan.num_subchannels;
        ds.samples_per_record = J;
        ds.snr_levels_db = cfg.snr_grid_db;
        ds.split = SplitRule{S, cfg.train_fraction};
        ds.records.resize(S * levels);
    }
    parallel_for(S, [&](std::size_t s) {
        const std::uint32_t label = make_label(out.occupancy[s]);
        for (int k = 0; k < K; ++k) {
            const auto& clean = captures[s][static_cast<std::size_t>(k)];
            const double power = capture_power[s][static_cast<std::size_t>(k)];
            for (std::size_t si = 0; si < levels; ++si) {
                const double snr_db = cfg.snr_grid_db[si];
                auto rng = RandomStream::child(
                    cfg.seed, StreamDomain::Noise,
                    (static_cast<std::uint64_t>(s) * static_cast<std::uint64_t>(K) + static_cast<std::uint64_t>(k)) * levels + si);
                const double base = power > 0.0 ? power : ref_power[static_cast<std::size_t>(k)];
                const double sigma2 = noise_variance_for_snr(base, snr_db);
                IqRecord rec;
                rec.slot = s;
                rec.snr_db = snr_db;
                rec.avg_power = power;
                rec.label = label;
                rec.uav_id = k;
                rec.iq = add_noise_with_variance(clean, sigma2, rng);
                out.per_uav[static_cast<std::size_t>(k)].records[s * levels + si] = std::move(rec);
            }
        }
    });
    return out;
}

inline std::string dataset_path(const std::string& out_dir, int uav) {
    return out_dir + "/uav" + std::to_string(uav) + ".spcf";
}

inline constexpr char kOccupancyMagic[4] = {'S', 'P', 'O', 'C'};

/// Debug sidecar with the pre-union B x M occupancy of every slot.
inline void save_occupancy(const std::vector<std::vector<std::uint32_t>>& occupancy, int num_stations,
                           int num_subchannels, const std::string& path) {
    auto os = open_output(path);
    write_bytes(os, kOccupancyMagic, 4);
    write_u16(os, 1);
    write_u16(os, static_cast<std::uint16_t>(num_stations));
    write_u16(os, static_cast<std::uint16_t>(num_subchannels));
    write_u64(os, occupancy.size());
    for (const auto& masks : occupancy)
        for (auto m : masks) write_u32(os, m);
}

inline std::vector<std::vector<std::uint32_t>> load_occupancy(const std::string& path) {
    auto is = open_input(path);
    char magic[4];
    read_bytes(is, magic, 4);
    if (!std::equal(magic, magic + 4, kOccupancyMagic)) throw std::runtime_error("bad occupancy magic");
    if (read_u16(is) != 1) throw std::runtime_error("unsupported occupancy version");
    const int B = read_u16(is);
    read_u16(is);  // M, informational
    const std::uint64_t slots = read_u64(is);
    std::vector<std::vector<std::uint32_t>> occ(slots, std::vector<std::uint32_t>(static_cast<std::size_t>(B)));
    for (auto& masks : occ)
        for (auto& m : masks) m = read_u32(is);
    return occ;
}

/// Generates and persists the per-UAV dataset files (plus the occupancy
/// sidecar in debug mode). Byte-identical output for identical (cfg, seed).
inline GeneratedData generate_dataset(const GenerationConfig& cfg, const std::string& out_dir) {
    auto data = generate_datasets(cfg);
    std::filesystem::create_directories(out_dir);
    for (int k = 0; k < cfg.plan.num_uavs; ++k)
        save_dataset(data.per_uav[static_cast<std::size_t>(k)], dataset_path(out_dir, k));
    if (cfg.debug_occupancy)
        save_occupancy(data.occupancy, cfg.plan.num_stations, cfg.plan.num_subchannels, out_dir + "/occupancy.spoc");
    return data;
}

}  // namespace specfed
