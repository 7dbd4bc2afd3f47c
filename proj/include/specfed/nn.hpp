#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "specfed/binio.hpp"
#include "specfed/rng.hpp"

namespace specfed {

enum class LayerKind { Conv1D, Relu, MaxPool1D, Dense, Sigmoid };

struct LayerSpec {
    LayerKind kind = LayerKind::Dense;
    int filters = 0;  // Conv1D
    int kernel = 0;   // Conv1D window / MaxPool1D window
    int stride = 1;
    int units = 0;    // Dense

    static LayerSpec conv1d(int filters, int kernel, int stride = 1) {
        return {LayerKind::Conv1D, filters, kernel, stride, 0};
    }
    static LayerSpec relu() { return {LayerKind::Relu, 0, 0, 1, 0}; }
    static LayerSpec maxpool1d(int kernel, int stride = 0) {
        return {LayerKind::MaxPool1D, 0, kernel, stride > 0 ? stride : kernel, 0};
    }
    static LayerSpec dense(int units) { return {LayerKind::Dense, 0, 0, 1, units}; }
    static LayerSpec sigmoid() { return {LayerKind::Sigmoid, 0, 0, 1, 0}; }
};

/// Activation tensor shape between layers, stored channel-major
/// (value at [c, i] lives at c * length + i).
struct TensorShape {
    int channels = 0;
    int length = 0;
    int size() const { return channels * length; }
};

struct LayerLayout {
    LayerSpec spec;
    TensorShape in, out;
    std::size_t weight_offset = 0, weight_count = 0;
    std::size_t bias_offset = 0, bias_count = 0;
};

/// Resolved network structure: per-layer shapes and the mapping of each
/// layer's parameters into one flat weight vector.
class Layout {
public:
    Layout() = default;

    Layout(TensorShape input, std::vector<LayerSpec> specs) : input_(input) {
        if (input.channels < 1 || input.length < 1) throw std::invalid_argument("bad input shape");
        TensorShape shape = input;
        std::size_t offset = 0;
        layers_.reserve(specs.size());
        for (const auto& spec : specs) {
            LayerLayout ll;
            ll.spec = spec;
            ll.in = shape;
            switch (spec.kind) {
                case LayerKind::Conv1D: {
                    if (spec.filters < 1 || spec.kernel < 1 || spec.stride < 1)
                        throw std::invalid_argument("bad conv parameters");
                    if (spec.kernel > shape.length) throw std::invalid_argument("conv kernel exceeds input length");
                    ll.out = {spec.filters, (shape.length - spec.kernel) / spec.stride + 1};
                    ll.weight_offset = offset;
                    ll.weight_count = static_cast<std::size_t>(spec.filters) * shape.channels * spec.kernel;
                    ll.bias_offset = offset + ll.weight_count;
                    ll.bias_count = static_cast<std::size_t>(spec.filters);
                    break;
                }
                case LayerKind::Relu:
                case LayerKind::Sigmoid:
                    ll.out = shape;
                    break;
                case LayerKind::MaxPool1D: {
                    if (spec.kernel < 1 || spec.stride < 1) throw std::invalid_argument("bad pool parameters");
                    if (spec.kernel > shape.length) throw std::invalid_argument("pool window exceeds input length");
                    ll.out = {shape.channels, (shape.length - spec.kernel) / spec.stride + 1};
                    break;
                }
                case LayerKind::Dense: {
                    if (spec.units < 1) throw std::invalid_argument("bad dense units");
                    ll.out = {spec.units, 1};
                    ll.weight_offset = offset;
                    ll.weight_count = static_cast<std::size_t>(spec.units) * shape.size();
                    ll.bias_offset = offset + ll.weight_count;
                    ll.bias_count = static_cast<std::size_t>(spec.units);
                    break;
                }
            }
            offset += ll.weight_count + ll.bias_count;
            shape = ll.out;
            layers_.push_back(ll);
        }
        dim_ = offset;
    }

    const std::vector<LayerLayout>& layers() const { return layers_; }
    TensorShape input_shape() const { return input_; }
    TensorShape output_shape() const { return layers_.empty() ? input_ : layers_.back().out; }
    std::size_t dim() const { return dim_; }

    bool has_sigmoid_head() const { return !layers_.empty() && layers_.back().spec.kind == LayerKind::Sigmoid; }

    /// FNV-1a over the structural description; stored in checkpoints so a
    /// weight file is never loaded into an incompatible layout.
    std::uint64_t hash() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        auto mix = [&h](std::uint64_t v) {
            for (int i = 0; i < 8; ++i) {
                h ^= (v >> (8 * i)) & 0xff;
                h *= 0x100000001b3ull;
            }
        };
        mix(static_cast<std::uint64_t>(input_.channels));
        mix(static_cast<std::uint64_t>(input_.length));
        for (const auto& ll : layers_) {
            mix(static_cast<std::uint64_t>(ll.spec.kind));
            mix(static_cast<std::uint64_t>(ll.spec.filters));
            mix(static_cast<std::uint64_t>(ll.spec.kernel));
            mix(static_cast<std::uint64_t>(ll.spec.stride));
            mix(static_cast<std::uint64_t>(ll.spec.units));
        }
        return h;
    }

private:
    TensorShape input_{};
    std::vector<LayerLayout> layers_;
    std::size_t dim_ = 0;
};

/// Flat parameter vector plus the layout that interprets it. The flat view
/// is the unit of exchange in federated aggregation.
struct ModelWeights {
    Layout layout;
    std::vector<double> values;

    std::span<double> layer_weights(std::size_t i) {
        const auto& ll = layout.layers().at(i);
        return {values.data() + ll.weight_offset, ll.weight_count};
    }
    std::span<double> layer_bias(std::size_t i) {
        const auto& ll = layout.layers().at(i);
        return {values.data() + ll.bias_offset, ll.bias_count};
    }
    std::span<const double> layer_weights(std::size_t i) const {
        const auto& ll = layout.layers().at(i);
        return {values.data() + ll.weight_offset, ll.weight_count};
    }
    std::span<const double> layer_bias(std::size_t i) const {
        const auto& ll = layout.layers().at(i);
        return {values.data() + ll.bias_offset, ll.bias_count};
    }
};

/// Gradient of the mean batch loss, same flat indexing as ModelWeights.
struct GradientVector {
    std::vector<double> values;
    int batch_size = 0;
    double mean_loss = 0.0;
};

inline ModelWeights zero_weights(Layout layout) {
    ModelWeights w;
    w.values.assign(layout.dim(), 0.0);
    w.layout = std::move(layout);
    return w;
}

/// Glorot-uniform initialization, +-sqrt(6/(fan_in+fan_out)); biases zero.
inline ModelWeights init_weights(Layout layout, RandomStream& rng) {
    ModelWeights w = zero_weights(std::move(layout));
    for (std::size_t i = 0; i < w.layout.layers().size(); ++i) {
        const auto& ll = w.layout.layers()[i];
        double fan_in = 0.0, fan_out = 0.0;
        if (ll.spec.kind == LayerKind::Conv1D) {
            fan_in = static_cast<double>(ll.in.channels) * ll.spec.kernel;
            fan_out = static_cast<double>(ll.spec.filters) * ll.spec.kernel;
        } else if (ll.spec.kind == LayerKind::Dense) {
            fan_in = static_cast<double>(ll.in.size());
            fan_out = static_cast<double>(ll.spec.units);
        } else {
            continue;
        }
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (auto& v : w.layer_weights(i)) v = rng.uniform(-bound, bound);
    }
    return w;
}

/// Intermediate activations of one forward pass, kept for backprop.
/// acts[0] is the input; acts[i+1] the output of layer i. pool_argmax holds,
/// for each MaxPool1D layer index, the winning input position per output.
struct ForwardTrace {
    std::vector<std::vector<double>> acts;
    std::vector<std::vector<int>> pool_argmax;
};

namespace detail {

inline void layer_forward(const ModelWeights& w, std::size_t li, const std::vector<double>& in,
                          std::vector<double>& out, std::vector<int>* argmax) {
    const auto& ll = w.layout.layers()[li];
    switch (ll.spec.kind) {
        case LayerKind::Conv1D: {
            const auto weights = w.layer_weights(li);
            const auto bias = w.layer_bias(li);
            const int cin = ll.in.channels, lin = ll.in.length;
            const int k = ll.spec.kernel, stride = ll.spec.stride;
            const int lout = ll.out.length;
            out.assign(static_cast<std::size_t>(ll.out.size()), 0.0);
            for (int f = 0; f < ll.spec.filters; ++f) {
                double* dst = out.data() + static_cast<std::size_t>(f) * lout;
                const double* wf = weights.data() + static_cast<std::size_t>(f) * cin * k;
                for (int i = 0; i < lout; ++i) dst[i] = bias[static_cast<std::size_t>(f)];
                for (int c = 0; c < cin; ++c) {
                    const double* src = in.data() + static_cast<std::size_t>(c) * lin;
                    const double* wc = wf + static_cast<std::size_t>(c) * k;
                    for (int i = 0; i < lout; ++i) {
                        const double* s = src + static_cast<std::size_t>(i) * stride;
                        double acc = 0.0;
                        for (int t = 0; t < k; ++t) acc += wc[t] * s[t];
                        dst[i] += acc;
                    }
                }
            }
            break;
        }
        case LayerKind::Relu: {
            out.resize(in.size());
            for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
            break;
        }
        case LayerKind::MaxPool1D: {
            const int c_n = ll.in.channels, lin = ll.in.length;
            const int k = ll.spec.kernel, stride = ll.spec.stride;
            const int lout = ll.out.length;
            out.assign(static_cast<std::size_t>(ll.out.size()), 0.0);
            if (argmax) argmax->assign(static_cast<std::size_t>(ll.out.size()), 0);
            for (int c = 0; c < c_n; ++c) {
                const double* src = in.data() + static_cast<std::size_t>(c) * lin;
                for (int i = 0; i < lout; ++i) {
                    int best = i * stride;
                    double best_v = src[best];
                    for (int t = 1; t < k; ++t) {
                        const int pos = i * stride + t;
                        if (src[pos] > best_v) {  // ties keep the earliest position
                            best_v = src[pos];
                            best = pos;
                        }
                    }
                    out[static_cast<std::size_t>(c) * lout + i] = best_v;
                    if (argmax) (*argmax)[static_cast<std::size_t>(c) * lout + i] = c * lin + best;
                }
            }
            break;
        }
        case LayerKind::Dense: {
            const auto weights = w.layer_weights(li);
            const auto bias = w.layer_bias(li);
            const int n_in = ll.in.size();
            out.assign(static_cast<std::size_t>(ll.spec.units), 0.0);
            for (int u = 0; u < ll.spec.units; ++u) {
                const double* wu = weights.data() + static_cast<std::size_t>(u) * n_in;
                double acc = bias[static_cast<std::size_t>(u)];
                for (int i = 0; i < n_in; ++i) acc += wu[i] * in[static_cast<std::size_t>(i)];
                out[static_cast<std::size_t>(u)] = acc;
            }
            break;
        }
        case LayerKind::Sigmoid: {
            out.resize(in.size());
            for (std::size_t i = 0; i < in.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-in[i]));
            break;
        }
    }
}

}  // namespace detail

/// Pure forward pass. The input is channel-major with the layout's input
/// shape; the result has the layout's output shape.
inline std::vector<double> forward(const ModelWeights& w, std::span<const double> input,
                                   ForwardTrace* trace = nullptr) {
    if (static_cast<int>(input.size()) != w.layout.input_shape().size())
        throw std::invalid_argument("input size does not match layout");
    const auto& layers = w.layout.layers();
    ForwardTrace local;
    ForwardTrace& tr = trace ? *trace : local;
    tr.acts.assign(layers.size() + 1, {});
    tr.pool_argmax.assign(layers.size(), {});
    tr.acts[0].assign(input.begin(), input.end());
    for (std::size_t li = 0; li < layers.size(); ++li) {
        std::vector<int>* argmax = layers[li].spec.kind == LayerKind::MaxPool1D ? &tr.pool_argmax[li] : nullptr;
        detail::layer_forward(w, li, tr.acts[li], tr.acts[li + 1], argmax);
    }
    return tr.acts.back();
}

/// Chain rule through layers [0, n_layers) given dL/d(output of layer
/// n_layers-1) of one sample. Adds parameter gradients into grad_accum
/// (size layout.dim()). Loss heads evaluated on logits pass
/// n_layers = layers().size() - 1 to skip the output nonlinearity.
inline void backward_sample_partial(const ModelWeights& w, const ForwardTrace& trace,
                                    std::vector<double> grad_out, std::span<double> grad_accum,
                                    std::size_t n_layers) {
    const auto& layers = w.layout.layers();
    if (grad_accum.size() != w.layout.dim()) throw std::invalid_argument("gradient accumulator size mismatch");
    if (n_layers > layers.size()) throw std::invalid_argument("layer count out of range");
    for (std::size_t li = n_layers; li-- > 0;) {
        const auto& ll = layers[li];
        const auto& in = trace.acts[li];
        const auto& out = trace.acts[li + 1];
        std::vector<double> grad_in;
        switch (ll.spec.kind) {
            case LayerKind::Sigmoid: {
                grad_in.resize(in.size());
                for (std::size_t i = 0; i < in.size(); ++i) grad_in[i] = grad_out[i] * out[i] * (1.0 - out[i]);
                break;
            }
            case LayerKind::Relu: {
                grad_in.resize(in.size());
                for (std::size_t i = 0; i < in.size(); ++i) grad_in[i] = out[i] > 0.0 ? grad_out[i] : 0.0;
                break;
            }
            case LayerKind::MaxPool1D: {
                grad_in.assign(in.size(), 0.0);
                const auto& argmax = trace.pool_argmax[li];
                for (std::size_t i = 0; i < out.size(); ++i)
                    grad_in[static_cast<std::size_t>(argmax[i])] += grad_out[i];
                break;
            }
            case LayerKind::Dense: {
                const auto weights = w.layer_weights(li);
                const int n_in = ll.in.size();
                double* gw = grad_accum.data() + ll.weight_offset;
                double* gb = grad_accum.data() + ll.bias_offset;
                grad_in.assign(in.size(), 0.0);
                for (int u = 0; u < ll.spec.units; ++u) {
                    const double g = grad_out[static_cast<std::size_t>(u)];
                    if (g == 0.0) continue;
                    gb[u] += g;
                    double* gwu = gw + static_cast<std::size_t>(u) * n_in;
                    const double* wu = weights.data() + static_cast<std::size_t>(u) * n_in;
                    for (int i = 0; i < n_in; ++i) {
                        gwu[i] += g * in[static_cast<std::size_t>(i)];
                        grad_in[static_cast<std::size_t>(i)] += g * wu[i];
                    }
                }
                break;
            }
            case LayerKind::Conv1D: {
                const auto weights = w.layer_weights(li);
                const int cin = ll.in.channels, lin = ll.in.length;
                const int k = ll.spec.kernel, stride = ll.spec.stride;
                const int lout = ll.out.length;
                double* gw = grad_accum.data() + ll.weight_offset;
                double* gb = grad_accum.data() + ll.bias_offset;
                grad_in.assign(in.size(), 0.0);
                for (int f = 0; f < ll.spec.filters; ++f) {
                    const double* gout = grad_out.data() + static_cast<std::size_t>(f) * lout;
                    const double* wf = weights.data() + static_cast<std::size_t>(f) * cin * k;
                    double* gwf = gw + static_cast<std::size_t>(f) * cin * k;
                    for (int i = 0; i < lout; ++i) gb[f] += gout[i];
                    for (int c = 0; c < cin; ++c) {
                        const double* src = in.data() + static_cast<std::size_t>(c) * lin;
                        double* gsrc = grad_in.data() + static_cast<std::size_t>(c) * lin;
                        const double* wc = wf + static_cast<std::size_t>(c) * k;
                        double* gwc = gwf + static_cast<std::size_t>(c) * k;
                        for (int i = 0; i < lout; ++i) {
                            const double g = gout[i];
                            if (g == 0.0) continue;
                            const int base = i * stride;
                            for (int t = 0; t < k; ++t) {
                                gwc[t] += g * src[base + t];
                                gsrc[base + t] += g * wc[t];
                            }
                        }
                    }
                }
                break;
            }
        }
        grad_out = std::move(grad_in);
    }
}

/// Chain rule through every layer given dL/d(final output) of one sample.
inline void backward_sample(const ModelWeights& w, const ForwardTrace& trace,
                            std::vector<double> grad_out, std::span<double> grad_accum) {
    backward_sample_partial(w, trace, std::move(grad_out), grad_accum, w.layout.layers().size());
}

/// Dense matrix of ready-to-train samples (inputs channel-major, binary
/// targets as doubles).
struct SampleMatrix {
    int input_size = 0;
    int target_size = 0;
    std::vector<double> inputs;
    std::vector<double> targets;

    std::size_t size() const {
        return input_size ? inputs.size() / static_cast<std::size_t>(input_size) : 0;
    }
    std::span<const double> input(std::size_t i) const {
        return {inputs.data() + i * static_cast<std::size_t>(input_size), static_cast<std::size_t>(input_size)};
    }
    std::span<const double> target(std::size_t i) const {
        return {targets.data() + i * static_cast<std::size_t>(target_size), static_cast<std::size_t>(target_size)};
    }
};

/// Numerically stable mean binary cross-entropy from a logit:
/// max(x,0) - x y + log(1 + exp(-|x|)).
inline double bce_from_logit(double logit, double target) {
    return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

/// Gradient of the mean per-label binary cross-entropy over a batch.
/// Requires a sigmoid output head; the loss and its gradient are evaluated
/// from the pre-sigmoid logits for stability. Throws if activations go
/// non-finite (divergence is reported, never clamped).
inline GradientVector backward(const ModelWeights& w, const SampleMatrix& data,
                               std::span<const std::size_t> batch) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    if (!w.layout.has_sigmoid_head())
        throw std::invalid_argument("binary cross-entropy loss requires a sigmoid output layer");
    const int out_n = w.layout.output_shape().size();
    if (out_n != data.target_size) throw std::invalid_argument("target width does not match network output");

    GradientVector grad;
    grad.values.assign(w.layout.dim(), 0.0);
    grad.batch_size = static_cast<int>(batch.size());
    const std::size_t n_layers = w.layout.layers().size();
    const double inv_bn = 1.0 / (static_cast<double>(batch.size()) * out_n);

    double loss_acc = 0.0;
    ForwardTrace trace;
    for (const std::size_t idx : batch) {
        forward(w, data.input(idx), &trace);
        const auto& logits = trace.acts[n_layers - 1];  // input of the sigmoid head
        const auto target = data.target(idx);
        std::vector<double> grad_logits(static_cast<std::size_t>(out_n));
        for (int j = 0; j < out_n; ++j) {
            const double x = logits[static_cast<std::size_t>(j)];
            if (!std::isfinite(x)) throw std::runtime_error("non-finite activation in backward pass");
            loss_acc += bce_from_logit(x, target[static_cast<std::size_t>(j)]);
            const double p = 1.0 / (1.0 + std::exp(-x));
            grad_logits[static_cast<std::size_t>(j)] = (p - target[static_cast<std::size_t>(j)]) * inv_bn;
        }
        // back-propagate from the logits, skipping the sigmoid head
        backward_sample_partial(w, trace, std::move(grad_logits), grad.values, n_layers - 1);
    }
    grad.mean_loss = loss_acc * inv_bn;
    if (!std::isfinite(grad.mean_loss)) throw std::runtime_error("non-finite loss in backward pass");
    return grad;
}

/// Plain SGD: w' = w - lr * g, elementwise.
inline void sgd_step(ModelWeights& w, std::span<const double> grad, double lr) {
    if (grad.size() != w.values.size()) throw std::invalid_argument("gradient dimension mismatch");
    if (!(lr >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
    for (std::size_t i = 0; i < grad.size(); ++i) w.values[i] -= lr * grad[i];
}

inline constexpr char kWeightsMagic[4] = {'S', 'P', 'N', 'N'};
inline constexpr std::uint16_t kWeightsVersion = 1;

/// Checkpoint format: magic "SPNN", version u16, d u64, layout hash u64,
/// then d little-endian f64.
inline void save_weights(const ModelWeights& w, const std::string& path) {
    auto os = open_output(path);
    write_bytes(os, kWeightsMagic, 4);
    write_u16(os, kWeightsVersion);
    write_u64(os, w.values.size());
    write_u64(os, w.layout.hash());
    for (double v : w.values) write_f64(os, v);
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline ModelWeights load_weights(Layout layout, const std::string& path) {
    auto is = open_input(path);
    char magic[4];
    read_bytes(is, magic, 4);
    if (!std::equal(magic, magic + 4, kWeightsMagic)) throw std::runtime_error("bad checkpoint magic: " + path);
    if (read_u16(is) != kWeightsVersion) throw std::runtime_error("unsupported checkpoint version");
    const std::uint64_t d = read_u64(is);
    const std::uint64_t hash = read_u64(is);
    ModelWeights w = zero_weights(std::move(layout));
    if (d != w.values.size()) throw std::runtime_error("checkpoint dimension mismatch");
    if (hash != w.layout.hash()) throw std::runtime_error("checkpoint layout mismatch");
    for (auto& v : w.values) v = read_f64(is);
    return w;
}

}  // namespace specfed
