#pragma once

#include <algorithm>
#include <complex>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "specfed/binio.hpp"

namespace specfed {

inline constexpr char kDatasetMagic[4] = {'S', 'P', 'C', 'F'};
inline constexpr std::uint16_t kDatasetVersion = 1;

/// One training sample: J complex baseband samples, the M-bit occupancy
/// label, and capture metadata. avg_power is the mean |.|^2 of the
/// noise-free component over the captured window (the received power used
/// by power-weighted aggregation).
struct IqRecord {
    std::uint64_t slot = 0;
    double snr_db = 0.0;
    double avg_power = 0.0;
    std::uint32_t label = 0;  // low M bits
    std::vector<std::complex<double>> iq;
    int uav_id = 0;
};

/// Fixed 70/30 train/eval partition: a record is in the training split iff
/// its slot index falls in the leading fraction of the slot range. The rule
/// is shared by every UAV and SNR level so records of the same slot always
/// land on the same side (fusion evaluates time-aligned eval slots).
struct SplitRule {
    std::uint64_t num_slots = 0;
    double train_fraction = 0.7;

    bool is_train(std::uint64_t slot) const {
        return slot < train_boundary();
    }
    std::uint64_t train_boundary() const {
        return static_cast<std::uint64_t>(static_cast<double>(num_slots) * train_fraction);
    }
};

/// Per-UAV record set plus the metadata needed to interpret it.
struct Dataset {
    int num_subchannels = 0;  // M
    int samples_per_record = 0;  // J
    std::vector<double> snr_levels_db;
    std::vector<IqRecord> records;
    SplitRule split;

    std::vector<std::size_t> train_indices() const { return indices(true); }
    std::vector<std::size_t> eval_indices() const { return indices(false); }

    std::vector<std::size_t> indices(bool train) const {
        std::vector<std::size_t> out;
        out.reserve(records.size());
        for (std::size_t i = 0; i < records.size(); ++i)
            if (split.is_train(records[i].slot) == train) out.push_back(i);
        return out;
    }

    std::vector<std::size_t> eval_indices_at_snr(double snr_db) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < records.size(); ++i)
            if (!split.is_train(records[i].slot) && records[i].snr_db == snr_db) out.push_back(i);
        return out;
    }
};

/// Binary dataset format, little-endian:
///   magic "SPCF", version u16, M u16, J u16, record_count u64,
///   snr_level_count u16, snr_level_count x f32,
///   then per record: slot u64, snr_db f32, avg_power f32,
///   label u32 (low M bits), 2*J f32 interleaved I,Q.
inline void save_dataset(const Dataset& ds, const std::string& path) {
    auto os = open_output(path);
    write_bytes(os, kDatasetMagic, 4);
    write_u16(os, kDatasetVersion);
    write_u16(os, static_cast<std::uint16_t>(ds.num_subchannels));
    write_u16(os, static_cast<std::uint16_t>(ds.samples_per_record));
    write_u64(os, ds.records.size());
    write_u16(os, static_cast<std::uint16_t>(ds.snr_levels_db.size()));
    for (double s : ds.snr_levels_db) write_f32(os, static_cast<float>(s));
    for (const auto& r : ds.records) {
        if (static_cast<int>(r.iq.size()) != ds.samples_per_record)
            throw std::invalid_argument("record sample count does not match dataset J");
        write_u64(os, r.slot);
        write_f32(os, static_cast<float>(r.snr_db));
        write_f32(os, static_cast<float>(r.avg_power));
        write_u32(os, r.label);
        for (const auto& c : r.iq) {
            write_f32(os, static_cast<float>(c.real()));
            write_f32(os, static_cast<float>(c.imag()));
        }
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline Dataset load_dataset(const std::string& path, int uav_id = 0) {
    auto is = open_input(path);
    char magic[4];
    read_bytes(is, magic, 4);
    if (!std::equal(magic, magic + 4, kDatasetMagic)) throw std::runtime_error("bad dataset magic: " + path);
    const std::uint16_t version = read_u16(is);
    if (version != kDatasetVersion) throw std::runtime_error("unsupported dataset version");
    Dataset ds;
    ds.num_subchannels = read_u16(is);
    ds.samples_per_record = read_u16(is);
    const std::uint64_t count = read_u64(is);
    const std::uint16_t snr_count = read_u16(is);
    ds.snr_levels_db.resize(snr_count);
    for (auto& s : ds.snr_levels_db) s = read_f32(is);
    ds.records.resize(count);
    std::uint64_t max_slot = 0;
    for (auto& r : ds.records) {
        r.slot = read_u64(is);
        r.snr_db = read_f32(is);
        r.avg_power = read_f32(is);
        r.label = read_u32(is);
        r.uav_id = uav_id;
        r.iq.resize(static_cast<std::size_t>(ds.samples_per_record));
        for (auto& c : r.iq) {
            const double re = read_f32(is);
            const double im = read_f32(is);
            c = {re, im};
        }
        max_slot = std::max(max_slot, r.slot);
    }
    ds.split.num_slots = ds.records.empty() ? 0 : max_slot + 1;
    return ds;
}

}  // namespace specfed
