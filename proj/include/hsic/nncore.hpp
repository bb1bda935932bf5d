#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsic/io.hpp"
#include "hsic/matrix.hpp"

namespace hsic {

struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Activation : std::uint32_t { ReLU = 0, Identity = 1 };

enum class Mode { Train, Infer };

// One fully connected layer. weights is [n_out x n_in].
struct DenseLayer {
    Matrix weights;
    std::vector<double> biases;
    Activation activation = Activation::ReLU;

    std::size_t n_in() const { return weights.cols; }
    std::size_t n_out() const { return weights.rows; }
};

// Fully connected network with a designated feature layer (second to last).
// The feature layer has no activation; dropout applies to its outputs on the
// path to the output layer, during training only.
struct Network {
    std::vector<DenseLayer> layers;
    std::size_t feature_layer_index = 0;
    double dropout_ratio = 0.0;
    std::mt19937_64 dropout_rng{0};

    std::size_t input_size() const { return layers.front().n_in(); }
    std::size_t output_size() const { return layers.back().n_out(); }
    std::size_t feature_size() const { return layers[feature_layer_index].n_out(); }
};

struct Batch {
    Matrix inputs;            // [M x L]
    std::vector<int> labels;  // 1..K

    std::size_t size() const { return inputs.rows; }
};

// Per-layer caches from one forward pass, consumed by backward().
struct ForwardTrace {
    Mode mode = Mode::Infer;
    Matrix inputs;
    std::vector<Matrix> pre_activations;  // z per layer
    std::vector<Matrix> activations;      // a per layer
    Matrix dropout_mask;                  // [M x d], entries 0 or 1/(1-p); all ones in Infer
    Matrix dropped_features;              // feature activations after masking

    const Matrix& features() const;
    const Matrix& logits() const { return activations.back(); }

    std::size_t feature_layer_index = 0;
};

inline const Matrix& ForwardTrace::features() const { return activations[feature_layer_index]; }

// Weight/bias gradients, one entry per layer.
struct Gradients {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
};

inline Network init_network(const std::vector<std::size_t>& dims, std::uint64_t seed,
                            double dropout_ratio = 0.0) {
    if (dims.size() < 2) throw std::invalid_argument("init_network: need at least 2 layer sizes");
    for (std::size_t d : dims)
        if (d == 0) throw std::invalid_argument("init_network: zero layer size");

    Network net;
    net.dropout_ratio = dropout_ratio;
    if (dropout_ratio < 0.0 || dropout_ratio >= 1.0)
        throw std::invalid_argument("init_network: dropout ratio must be in [0,1)");
    net.dropout_rng.seed(seed ^ 0x9e3779b97f4a7c15ull);
    // Second-to-last layer is the feature layer; a single-layer net is its
    // own feature layer.
    net.feature_layer_index = dims.size() >= 4 ? dims.size() - 3 : 0;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 0.01);
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        DenseLayer layer;
        layer.weights = Matrix(dims[i + 1], dims[i]);
        for (double& w : layer.weights.data) w = gauss(rng);
        layer.biases.assign(dims[i + 1], 0.0);
        // Feature layer and output layer are linear, everything before is ReLU.
        const bool linear = (i == net.feature_layer_index) || (i + 2 == dims.size());
        layer.activation = linear ? Activation::Identity : Activation::ReLU;
        net.layers.push_back(std::move(layer));
    }
    return net;
}

inline ForwardTrace forward(Network& net, const Batch& batch, Mode mode) {
    if (batch.inputs.cols != net.input_size())
        throw std::invalid_argument("forward: input width " + std::to_string(batch.inputs.cols) +
                                    " does not match network input size " +
                                    std::to_string(net.input_size()));
    const std::size_t m = batch.size();

    ForwardTrace trace;
    trace.mode = mode;
    trace.inputs = batch.inputs;
    trace.feature_layer_index = net.feature_layer_index;

    const Matrix* current = &trace.inputs;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const DenseLayer& layer = net.layers[li];
        Matrix z = matmul_bt(*current, layer.weights);  // [M x n_out]
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < layer.n_out(); ++j) z(i, j) += layer.biases[j];
        trace.pre_activations.push_back(z);

        Matrix a = std::move(z);
        if (layer.activation == Activation::ReLU)
            for (double& v : a.data) v = v > 0.0 ? v : 0.0;
        trace.activations.push_back(std::move(a));

        if (li == net.feature_layer_index) {
            const std::size_t d = layer.n_out();
            trace.dropout_mask = Matrix(m, d, 1.0);
            if (mode == Mode::Train && net.dropout_ratio > 0.0) {
                std::uniform_real_distribution<double> unit(0.0, 1.0);
                const double keep_scale = 1.0 / (1.0 - net.dropout_ratio);
                for (double& v : trace.dropout_mask.data)
                    v = unit(net.dropout_rng) < net.dropout_ratio ? 0.0 : keep_scale;
            }
            trace.dropped_features = trace.activations.back();
            for (std::size_t i = 0; i < trace.dropped_features.data.size(); ++i)
                trace.dropped_features.data[i] *= trace.dropout_mask.data[i];
            current = &trace.dropped_features;
        } else {
            current = &trace.activations.back();
        }
    }
    return trace;
}

inline Batch single_sample_batch(std::span<const double> spectrum, int label = 1) {
    Batch b;
    b.inputs = Matrix(1, spectrum.size());
    std::copy(spectrum.begin(), spectrum.end(), b.inputs.data.begin());
    b.labels = {label};
    return b;
}

// Backpropagation through the trace. dloss_dfeatures enters at the feature
// layer unmasked (it targets the pre-dropout features); the logit-path
// gradient passes back through the stored dropout mask.
inline Gradients backward(const Network& net, const ForwardTrace& trace,
                          const Matrix& dloss_dlogits, const Matrix& dloss_dfeatures) {
    const std::size_t nlayers = net.layers.size();
    if (trace.activations.size() != nlayers)
        throw std::invalid_argument("backward: trace does not match network");
    if (dloss_dlogits.rows != trace.inputs.rows || dloss_dlogits.cols != net.output_size())
        throw std::invalid_argument("backward: logit gradient shape mismatch");
    if (dloss_dfeatures.rows != trace.inputs.rows ||
        dloss_dfeatures.cols != net.feature_size())
        throw std::invalid_argument("backward: feature gradient shape mismatch");

    Gradients grads;
    grads.weights.resize(nlayers);
    grads.biases.resize(nlayers);

    Matrix upstream = dloss_dlogits;  // d loss / d activation of current layer
    for (std::size_t li = nlayers; li-- > 0;) {
        const DenseLayer& layer = net.layers[li];
        Matrix dz = std::move(upstream);
        if (layer.activation == Activation::ReLU) {
            const Matrix& z = trace.pre_activations[li];
            for (std::size_t i = 0; i < dz.data.size(); ++i)
                if (z.data[i] <= 0.0) dz.data[i] = 0.0;  // subgradient 0 at the kink
        }

        const Matrix& layer_input = (li == 0) ? trace.inputs
                                  : (li - 1 == net.feature_layer_index)
                                      ? trace.dropped_features
                                      : trace.activations[li - 1];
        grads.weights[li] = matmul_at(dz, layer_input);  // [n_out x n_in]
        grads.biases[li].assign(layer.n_out(), 0.0);
        for (std::size_t i = 0; i < dz.rows; ++i)
            for (std::size_t j = 0; j < dz.cols; ++j) grads.biases[li][j] += dz(i, j);

        if (li == 0) break;
        upstream = matmul(dz, layer.weights);  // [M x n_in]
        if (li - 1 == net.feature_layer_index) {
            for (std::size_t i = 0; i < upstream.data.size(); ++i) {
                upstream.data[i] *= trace.dropout_mask.data[i];
                upstream.data[i] += dloss_dfeatures.data[i];
            }
        }
    }
    return grads;
}

inline void sgd_step(Network& net, const Gradients& grads, double lr) {
    if (lr < 0.0) throw std::invalid_argument("sgd_step: negative learning rate");
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        if (!all_finite(grads.weights[li]) || !all_finite(grads.biases[li]))
            throw DivergenceError("sgd_step: non-finite gradient in layer " + std::to_string(li));
    }
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        DenseLayer& layer = net.layers[li];
        const Matrix& gw = grads.weights[li];
        for (std::size_t i = 0; i < layer.weights.data.size(); ++i)
            layer.weights.data[i] -= lr * gw.data[i];
        for (std::size_t j = 0; j < layer.biases.size(); ++j)
            layer.biases[j] -= lr * grads.biases[li][j];
    }
}

// Checkpoint format: magic "HSICNET1", u32 layer count, per layer
// u32 n_in / u32 n_out / u32 activation code, then per layer the row-major
// f64 weight matrix followed by the f64 bias vector.
inline constexpr char kNetworkMagic[8] = {'H', 'S', 'I', 'C', 'N', 'E', 'T', '1'};

inline void save_network(const Network& net, const std::string& path) {
    io::Writer w(path);
    w.magic(kNetworkMagic);
    w.u32(static_cast<std::uint32_t>(net.layers.size()));
    for (const DenseLayer& l : net.layers) {
        w.u32(static_cast<std::uint32_t>(l.n_in()));
        w.u32(static_cast<std::uint32_t>(l.n_out()));
        w.u32(static_cast<std::uint32_t>(l.activation));
    }
    for (const DenseLayer& l : net.layers) {
        w.f64_array(l.weights.data.data(), l.weights.data.size());
        w.f64_array(l.biases.data(), l.biases.size());
    }
    w.close();
}

inline Network load_network(const std::string& path) {
    io::Reader r(path);
    r.expect_magic(kNetworkMagic);
    const std::uint32_t nlayers = r.u32();
    if (nlayers < 1) throw DataError(path + ": no layers");

    Network net;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> shapes;
    for (std::uint32_t i = 0; i < nlayers; ++i) {
        const std::uint32_t n_in = r.u32();
        const std::uint32_t n_out = r.u32();
        const std::uint32_t act = r.u32();
        if (n_in == 0 || n_out == 0) throw DataError(path + ": zero layer dimension");
        if (act > 1) throw DataError(path + ": unknown activation code");
        DenseLayer l;
        l.weights = Matrix(n_out, n_in);
        l.biases.assign(n_out, 0.0);
        l.activation = static_cast<Activation>(act);
        net.layers.push_back(std::move(l));
        shapes.emplace_back(n_in, n_out);
    }
    for (std::uint32_t i = 1; i < nlayers; ++i)
        if (shapes[i].first != shapes[i - 1].second)
            throw DataError(path + ": inconsistent layer shapes");
    for (DenseLayer& l : net.layers) {
        r.f64_array(l.weights.data.data(), l.weights.data.size());
        r.f64_array(l.biases.data(), l.biases.size());
    }
    net.feature_layer_index = net.layers.size() >= 2 ? net.layers.size() - 2 : 0;
    return net;
}

}  // namespace hsic
