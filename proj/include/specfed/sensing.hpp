#pragma once

#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "specfed/csv.hpp"
#include "specfed/dataset.hpp"
#include "specfed/nn.hpp"
#include "specfed/parallel.hpp"
#include "specfed/rng.hpp"

namespace specfed {

/// Spectrum-hole classifier head size M, input 2 x J (I and Q as two real
/// channels). Two conv blocks, the second at doubled width, then a dense
/// sigmoid readout.
inline Layout sensing_layout(int num_subchannels, int samples_per_record, int base_filters = 16,
                             int kernel = 3) {
    return Layout({2, samples_per_record},
                  {LayerSpec::conv1d(base_filters, kernel), LayerSpec::relu(),
                   LayerSpec::conv1d(base_filters, kernel), LayerSpec::relu(), LayerSpec::maxpool1d(2),
                   LayerSpec::conv1d(2 * base_filters, kernel), LayerSpec::relu(),
                   LayerSpec::conv1d(2 * base_filters, kernel), LayerSpec::relu(), LayerSpec::maxpool1d(2),
                   LayerSpec::dense(num_subchannels), LayerSpec::sigmoid()});
}

/// Record -> network input: channel 0 carries I, channel 1 carries Q,
/// normalized to unit RMS. Receive power varies by orders of magnitude
/// across locations and noise levels; the per-record scale is metadata
/// (avg_power), not a classification feature.
inline void fill_input(const IqRecord& rec, std::span<double> dst) {
    const std::size_t j = rec.iq.size();
    if (dst.size() != 2 * j) throw std::invalid_argument("input buffer size mismatch");
    double power = 0.0;
    for (const auto& v : rec.iq) power += std::norm(v);
    const double scale = power > 0.0 ? 1.0 / std::sqrt(power / static_cast<double>(j)) : 1.0;
    for (std::size_t i = 0; i < j; ++i) {
        dst[i] = scale * rec.iq[i].real();
        dst[j + i] = scale * rec.iq[i].imag();
    }
}

/// Materializes a dataset as a dense training matrix.
inline SampleMatrix to_samples(const Dataset& ds) {
    SampleMatrix m;
    m.input_size = 2 * ds.samples_per_record;
    m.target_size = ds.num_subchannels;
    m.inputs.resize(ds.records.size() * static_cast<std::size_t>(m.input_size));
    m.targets.resize(ds.records.size() * static_cast<std::size_t>(m.target_size));
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        fill_input(ds.records[i], {m.inputs.data() + i * static_cast<std::size_t>(m.input_size),
                                   static_cast<std::size_t>(m.input_size)});
        for (int b = 0; b < ds.num_subchannels; ++b)
            m.targets[i * static_cast<std::size_t>(m.target_size) + static_cast<std::size_t>(b)] =
                (ds.records[i].label >> b) & 1u ? 1.0 : 0.0;
    }
    return m;
}

struct PredictionVector {
    std::vector<double> probs;
    std::uint32_t hard = 0;  // bit m set iff probs[m] >= 0.5
};

inline PredictionVector to_prediction(std::vector<double> probs) {
    PredictionVector p;
    p.probs = std::move(probs);
    for (std::size_t m = 0; m < p.probs.size(); ++m)
        if (p.probs[m] >= 0.5) p.hard |= (1u << m);
    return p;
}

inline PredictionVector predict(const ModelWeights& model, const IqRecord& rec) {
    std::vector<double> input(2 * rec.iq.size());
    fill_input(rec, input);
    return to_prediction(forward(model, input));
}

struct TrainOptions {
    int epochs = 25;
    int batch_size = 64;
    double lr = 0.05;
    std::uint64_t seed = 0;
};

/// Mini-batch SGD over the given sample indices, shuffled each epoch with a
/// stream derived from (seed, epoch). Returns the per-epoch mean loss.
inline std::vector<double> train_local(ModelWeights& model, const SampleMatrix& data,
                                       std::span<const std::size_t> train_indices,
                                       const TrainOptions& opt) {
    if (train_indices.empty()) throw std::invalid_argument("empty training set");
    if (opt.epochs < 1) throw std::invalid_argument("need at least one epoch");
    if (opt.batch_size < 1) throw std::invalid_argument("batch size must be positive");
    std::vector<std::size_t> order(train_indices.begin(), train_indices.end());
    std::vector<double> epoch_loss;
    epoch_loss.reserve(static_cast<std::size_t>(opt.epochs));
    for (int e = 0; e < opt.epochs; ++e) {
        auto rng = RandomStream::child(opt.seed, StreamDomain::Shuffle, static_cast<std::uint64_t>(e));
        rng.shuffle(order);
        double loss_acc = 0.0;
        for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(opt.batch_size)) {
            const std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(opt.batch_size));
            auto grad = backward(model, data, {order.data() + lo, hi - lo});
            sgd_step(model, grad.values, opt.lr);
            loss_acc += grad.mean_loss * static_cast<double>(hi - lo);
        }
        epoch_loss.push_back(loss_acc / static_cast<double>(order.size()));
    }
    return epoch_loss;
}

/// Confusion counts per subchannel plus micro-averaged scores. Positive
/// class is "occupied" (label bit 1).
struct MetricsReport {
    std::vector<std::uint64_t> tp, fp, fn, tn;  // per subchannel
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    std::uint64_t n = 0;  // evaluated sample count
    std::string regime;
    int uav = -1;
    double snr_db = 0.0;

    std::uint64_t total_tp() const { return std::accumulate(tp.begin(), tp.end(), std::uint64_t{0}); }
    std::uint64_t total_fp() const { return std::accumulate(fp.begin(), fp.end(), std::uint64_t{0}); }
    std::uint64_t total_fn() const { return std::accumulate(fn.begin(), fn.end(), std::uint64_t{0}); }
    std::uint64_t total_tn() const { return std::accumulate(tn.begin(), tn.end(), std::uint64_t{0}); }
};

/// Micro P/R/F1 from aligned hard predictions and labels. A zero
/// denominator is vacuous (no positive predictions / no positive labels)
/// and scores 1.0 when the numerator is 0, else 0.0; F1 is 0 when P+R = 0.
inline MetricsReport micro_metrics(std::span<const std::uint32_t> preds,
                                   std::span<const std::uint32_t> labels, int num_subchannels) {
    if (preds.size() != labels.size()) throw std::invalid_argument("prediction/label count mismatch");
    MetricsReport r;
    const auto m_sz = static_cast<std::size_t>(num_subchannels);
    r.tp.assign(m_sz, 0);
    r.fp.assign(m_sz, 0);
    r.fn.assign(m_sz, 0);
    r.tn.assign(m_sz, 0);
    r.n = preds.size();
    for (std::size_t i = 0; i < preds.size(); ++i) {
        for (int m = 0; m < num_subchannels; ++m) {
            const bool p = (preds[i] >> m) & 1u;
            const bool y = (labels[i] >> m) & 1u;
            auto mi = static_cast<std::size_t>(m);
            if (p && y) ++r.tp[mi];
            else if (p && !y) ++r.fp[mi];
            else if (!p && y) ++r.fn[mi];
            else ++r.tn[mi];
        }
    }
    const auto tp = r.total_tp(), fp = r.total_fp(), fn = r.total_fn();
    r.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : (tp == 0 ? 1.0 : 0.0);
    r.recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : (tp == 0 ? 1.0 : 0.0);
    r.f1 = (r.precision + r.recall) > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
}

/// Hard predictions of a model over selected records, parallel across
/// records (index-owned output slots).
inline std::vector<std::uint32_t> predict_hard(const ModelWeights& model, const Dataset& ds,
                                               std::span<const std::size_t> indices) {
    std::vector<std::uint32_t> out(indices.size(), 0);
    parallel_for(indices.size(), [&](std::size_t i) {
        out[i] = predict(model, ds.records[indices[i]]).hard;
    });
    return out;
}

inline MetricsReport evaluate(const ModelWeights& model, const Dataset& ds,
                              std::span<const std::size_t> indices) {
    const auto preds = predict_hard(model, ds, indices);
    std::vector<std::uint32_t> labels(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) labels[i] = ds.records[indices[i]].label;
    return micro_metrics(preds, labels, ds.num_subchannels);
}

/// One model, one dataset: a metrics row per SNR level on the eval split.
inline std::vector<MetricsReport> evaluate_per_snr(const ModelWeights& model, const Dataset& ds,
                                                   const std::string& regime, int uav) {
    std::vector<MetricsReport> rows;
    for (double snr : ds.snr_levels_db) {
        const auto idx = ds.eval_indices_at_snr(snr);
        auto r = evaluate(model, ds, idx);
        r.regime = regime;
        r.uav = uav;
        r.snr_db = snr;
        rows.push_back(std::move(r));
    }
    return rows;
}

inline void write_metrics_csv(const std::vector<MetricsReport>& rows, const std::string& path) {
    CsvWriter csv(path, "regime,uav,snr_db,precision,recall,f1,tp,fp,fn,tn,n");
    for (const auto& r : rows)
        csv.row(r.regime, r.uav, r.snr_db, r.precision, r.recall, r.f1, r.total_tp(), r.total_fp(),
                r.total_fn(), r.total_tn(), r.n);
}

}  // namespace specfed
