#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "qgrasp/rng.hpp"
#include "qgrasp/tensor.hpp"

namespace qgrasp {

enum class LayerKind { Conv, Relu, Pool, Flatten, Fc };

struct LayerSpec {
    LayerKind kind;
    size_t out_channels = 0;  // Conv
    size_t kernel = 0;        // Conv
    size_t stride = 1;        // Conv
    size_t out_units = 0;     // Fc
};

// Sequential stack of layers over a [C,H,W] input.
struct NetworkSpec {
    size_t input_channels = 1;
    size_t input_height = 64;
    size_t input_width = 64;
    std::vector<LayerSpec> layers;

    // conv -> relu -> pool, three times, then flatten -> fc -> relu -> fc.
    static NetworkSpec standard(size_t height, size_t width,
                                std::array<size_t, 3> conv_channels,
                                std::array<size_t, 3> conv_kernels,
                                std::array<size_t, 3> conv_strides,
                                size_t hidden_units, size_t outputs = 14);

    // Throws std::invalid_argument when shapes do not chain; returns the
    // output shape after each layer otherwise.
    std::vector<std::vector<size_t>> shape_table() const;
    size_t output_size() const;
};

// Weight/bias tensors for each parameterized layer, in layer order.
struct NetworkParams {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;

    bool same_shape(const NetworkParams& o) const;
};

using NetworkGrads = NetworkParams;

NetworkParams init_params(const NetworkSpec& spec, Rng& rng);

struct ForwardCache {
    std::vector<Tensor> layer_inputs;            // input to each layer
    std::vector<std::vector<size_t>> pool_argmax;  // per layer; empty unless Pool
};

Tensor network_forward(const NetworkSpec& spec, const NetworkParams& params,
                       const Tensor& input, ForwardCache* cache = nullptr);

NetworkGrads network_backward(const NetworkSpec& spec,
                              const NetworkParams& params,
                              const ForwardCache& cache, const Tensor& d_output);

void accumulate(NetworkGrads& into, const NetworkGrads& g);
void scale(NetworkGrads& g, double factor);
double grad_norm(const NetworkGrads& g);
NetworkGrads zero_grads_like(const NetworkParams& params);

struct AdamState {
    std::vector<Tensor> m_weights, v_weights, m_biases, v_biases;
    long t = 0;
    double alpha = 6e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_params(const NetworkParams& params, double alpha);
};

// Bias-corrected Adam update in place. Rejects non-finite gradients.
void adam_step(NetworkParams& params, const NetworkGrads& grads, AdamState& state);

// Checkpoint container: named groups of tensors, little-endian f64 payload,
// byte-exact round trip.
struct TensorGroup {
    std::string name;
    std::vector<Tensor> tensors;
};

void save_checkpoint(const std::string& path,
                     const std::vector<TensorGroup>& groups);
std::vector<TensorGroup> load_checkpoint(const std::string& path);

// Convenience: params <-> two groups ("weights", "biases").
std::vector<TensorGroup> params_to_groups(const NetworkParams& params,
                                          const std::string& prefix);
NetworkParams params_from_groups(const std::vector<TensorGroup>& groups,
                                 const std::string& prefix);

}  // namespace qgrasp
