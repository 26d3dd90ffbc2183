#include "qgrasp/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace qgrasp {

NetworkSpec NetworkSpec::standard(size_t height, size_t width,
                                  std::array<size_t, 3> conv_channels,
                                  std::array<size_t, 3> conv_kernels,
                                  std::array<size_t, 3> conv_strides,
                                  size_t hidden_units, size_t outputs) {
    NetworkSpec s;
    s.input_channels = 1;
    s.input_height = height;
    s.input_width = width;
    for (int i = 0; i < 3; ++i) {
        s.layers.push_back({LayerKind::Conv, conv_channels[i], conv_kernels[i],
                            conv_strides[i], 0});
        s.layers.push_back({LayerKind::Relu});
        s.layers.push_back({LayerKind::Pool});
    }
    s.layers.push_back({LayerKind::Flatten});
    s.layers.push_back({LayerKind::Fc, 0, 0, 1, hidden_units});
    s.layers.push_back({LayerKind::Relu});
    s.layers.push_back({LayerKind::Fc, 0, 0, 1, outputs});
    s.shape_table();  // validates
    return s;
}

std::vector<std::vector<size_t>> NetworkSpec::shape_table() const {
    std::vector<std::vector<size_t>> shapes;
    std::vector<size_t> cur{input_channels, input_height, input_width};
    for (size_t li = 0; li < layers.size(); ++li) {
        const LayerSpec& l = layers[li];
        switch (l.kind) {
            case LayerKind::Conv: {
                if (cur.size() != 3)
                    throw std::invalid_argument("network: conv layer needs [C,H,W] input");
                if (l.stride == 0 || l.kernel == 0 || l.out_channels == 0 ||
                    l.kernel > cur[1] || l.kernel > cur[2])
                    throw std::invalid_argument(
                        "network: conv layer " + std::to_string(li) +
                        " does not fit its input");
                cur = {l.out_channels, (cur[1] - l.kernel) / l.stride + 1,
                       (cur[2] - l.kernel) / l.stride + 1};
                break;
            }
            case LayerKind::Pool: {
                if (cur.size() != 3 || cur[1] % 2 != 0 || cur[2] % 2 != 0 ||
                    cur[1] == 0 || cur[2] == 0)
                    throw std::invalid_argument(
                        "network: pool layer " + std::to_string(li) +
                        " requires even positive spatial extents");
                cur = {cur[0], cur[1] / 2, cur[2] / 2};
                break;
            }
            case LayerKind::Relu:
                break;
            case LayerKind::Flatten: {
                size_t n = 1;
                for (size_t e : cur) n *= e;
                cur = {n};
                break;
            }
            case LayerKind::Fc: {
                if (cur.size() != 1)
                    throw std::invalid_argument("network: fc layer needs flat input");
                if (l.out_units == 0)
                    throw std::invalid_argument("network: fc layer needs out_units");
                cur = {l.out_units};
                break;
            }
        }
        for (size_t e : cur)
            if (e == 0)
                throw std::invalid_argument("network: zero extent after layer " +
                                            std::to_string(li));
        shapes.push_back(cur);
    }
    return shapes;
}

size_t NetworkSpec::output_size() const {
    auto shapes = shape_table();
    size_t n = 1;
    for (size_t e : shapes.back()) n *= e;
    return n;
}

bool NetworkParams::same_shape(const NetworkParams& o) const {
    if (weights.size() != o.weights.size() || biases.size() != o.biases.size())
        return false;
    for (size_t i = 0; i < weights.size(); ++i)
        if (!weights[i].same_shape(o.weights[i])) return false;
    for (size_t i = 0; i < biases.size(); ++i)
        if (!biases[i].same_shape(o.biases[i])) return false;
    return true;
}

NetworkParams init_params(const NetworkSpec& spec, Rng& rng) {
    NetworkParams p;
    std::vector<size_t> cur{spec.input_channels, spec.input_height,
                            spec.input_width};
    auto shapes = spec.shape_table();
    for (size_t li = 0; li < spec.layers.size(); ++li) {
        const LayerSpec& l = spec.layers[li];
        if (l.kind == LayerKind::Conv) {
            size_t fan_in = cur[0] * l.kernel * l.kernel;
            double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
            Tensor w({l.out_channels, cur[0], l.kernel, l.kernel});
            for (double& v : w.data) v = sigma * rng.normal();
            p.weights.push_back(std::move(w));
            p.biases.push_back(Tensor({l.out_channels}));
        } else if (l.kind == LayerKind::Fc) {
            size_t fan_in = cur[0];
            double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
            Tensor w({l.out_units, fan_in});
            for (double& v : w.data) v = sigma * rng.normal();
            p.weights.push_back(std::move(w));
            p.biases.push_back(Tensor({l.out_units}));
        }
        cur = shapes[li];
    }
    return p;
}

Tensor network_forward(const NetworkSpec& spec, const NetworkParams& params,
                       const Tensor& input, ForwardCache* cache) {
    if (input.shape != std::vector<size_t>{spec.input_channels,
                                           spec.input_height, spec.input_width})
        throw std::invalid_argument("network_forward: input shape mismatch");
    Tensor cur = input;
    size_t pi = 0;
    if (cache) {
        cache->layer_inputs.clear();
        cache->pool_argmax.assign(spec.layers.size(), {});
    }
    for (size_t li = 0; li < spec.layers.size(); ++li) {
        const LayerSpec& l = spec.layers[li];
        if (cache) cache->layer_inputs.push_back(cur);
        switch (l.kind) {
            case LayerKind::Conv:
                cur = conv2d_forward(cur, params.weights[pi], params.biases[pi],
                                     l.stride);
                ++pi;
                break;
            case LayerKind::Relu:
                cur = relu_forward(cur);
                break;
            case LayerKind::Pool: {
                PoolResult r = maxpool2x2_forward(cur);
                if (cache) cache->pool_argmax[li] = std::move(r.argmax);
                cur = std::move(r.output);
                break;
            }
            case LayerKind::Flatten:
                cur.shape = {cur.size()};
                break;
            case LayerKind::Fc:
                cur = fc_forward(cur, params.weights[pi], params.biases[pi]);
                ++pi;
                break;
        }
    }
    return cur;
}

NetworkGrads network_backward(const NetworkSpec& spec,
                              const NetworkParams& params,
                              const ForwardCache& cache,
                              const Tensor& d_output) {
    NetworkGrads g = zero_grads_like(params);
    Tensor d = d_output;
    size_t pi = params.weights.size();
    for (size_t li = spec.layers.size(); li-- > 0;) {
        const LayerSpec& l = spec.layers[li];
        const Tensor& layer_in = cache.layer_inputs[li];
        switch (l.kind) {
            case LayerKind::Conv: {
                --pi;
                ConvGrads cg =
                    conv2d_backward(layer_in, params.weights[pi], l.stride, d);
                g.weights[pi] = std::move(cg.d_weights);
                g.biases[pi] = std::move(cg.d_bias);
                d = std::move(cg.d_input);
                break;
            }
            case LayerKind::Relu:
                d = relu_backward(layer_in, d);
                break;
            case LayerKind::Pool:
                d = maxpool2x2_backward(d, cache.pool_argmax[li], layer_in.shape);
                break;
            case LayerKind::Flatten:
                d.shape = layer_in.shape;
                break;
            case LayerKind::Fc: {
                --pi;
                FcGrads fg = fc_backward(layer_in, params.weights[pi], d);
                g.weights[pi] = std::move(fg.d_weights);
                g.biases[pi] = std::move(fg.d_bias);
                d = std::move(fg.d_input);
                break;
            }
        }
    }
    return g;
}

void accumulate(NetworkGrads& into, const NetworkGrads& g) {
    for (size_t i = 0; i < into.weights.size(); ++i)
        for (size_t j = 0; j < into.weights[i].size(); ++j)
            into.weights[i].data[j] += g.weights[i].data[j];
    for (size_t i = 0; i < into.biases.size(); ++i)
        for (size_t j = 0; j < into.biases[i].size(); ++j)
            into.biases[i].data[j] += g.biases[i].data[j];
}

void scale(NetworkGrads& g, double factor) {
    for (auto& t : g.weights)
        for (double& v : t.data) v *= factor;
    for (auto& t : g.biases)
        for (double& v : t.data) v *= factor;
}

double grad_norm(const NetworkGrads& g) {
    double s = 0.0;
    for (const auto& t : g.weights)
        for (double v : t.data) s += v * v;
    for (const auto& t : g.biases)
        for (double v : t.data) s += v * v;
    return std::sqrt(s);
}

NetworkGrads zero_grads_like(const NetworkParams& params) {
    NetworkGrads g;
    for (const auto& t : params.weights) g.weights.push_back(Tensor(t.shape));
    for (const auto& t : params.biases) g.biases.push_back(Tensor(t.shape));
    return g;
}

AdamState AdamState::for_params(const NetworkParams& params, double alpha_) {
    AdamState s;
    s.alpha = alpha_;
    for (const auto& t : params.weights) {
        s.m_weights.push_back(Tensor(t.shape));
        s.v_weights.push_back(Tensor(t.shape));
    }
    for (const auto& t : params.biases) {
        s.m_biases.push_back(Tensor(t.shape));
        s.v_biases.push_back(Tensor(t.shape));
    }
    return s;
}

namespace {

void adam_update(std::vector<double>& theta, const std::vector<double>& grad,
                 std::vector<double>& m, std::vector<double>& v,
                 const AdamState& s, double bc1, double bc2) {
    for (size_t i = 0; i < theta.size(); ++i) {
        m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * grad[i];
        v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * grad[i] * grad[i];
        double m_hat = m[i] / bc1;
        double v_hat = v[i] / bc2;
        theta[i] -= s.alpha * m_hat / (std::sqrt(v_hat) + s.eps);
    }
}

}  // namespace

void adam_step(NetworkParams& params, const NetworkGrads& grads,
               AdamState& state) {
    if (!params.same_shape(grads))
        throw std::invalid_argument("adam_step: gradient shapes do not match");
    for (const auto& t : grads.weights)
        if (!t.all_finite())
            throw std::invalid_argument("adam_step: non-finite weight gradient");
    for (const auto& t : grads.biases)
        if (!t.all_finite())
            throw std::invalid_argument("adam_step: non-finite bias gradient");
    state.t += 1;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.weights.size(); ++i)
        adam_update(params.weights[i].data, grads.weights[i].data,
                    state.m_weights[i].data, state.v_weights[i].data, state, bc1,
                    bc2);
    for (size_t i = 0; i < params.biases.size(); ++i)
        adam_update(params.biases[i].data, grads.biases[i].data,
                    state.m_biases[i].data, state.v_biases[i].data, state, bc1,
                    bc2);
}

namespace {

constexpr char kMagic[8] = {'Q', 'G', 'C', 'K', 'P', 'T', '1', '\n'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_f64(std::ostream& os, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64(os, bits);
}

double read_f64(std::istream& is) {
    std::uint64_t bits = read_u64(is);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<TensorGroup>& groups) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
    f.write(kMagic, sizeof(kMagic));
    write_u32(f, kVersion);
    write_u32(f, static_cast<std::uint32_t>(groups.size()));
    for (const auto& g : groups) {
        write_u32(f, static_cast<std::uint32_t>(g.name.size()));
        f.write(g.name.data(), static_cast<std::streamsize>(g.name.size()));
        write_u32(f, static_cast<std::uint32_t>(g.tensors.size()));
        for (const auto& t : g.tensors) {
            write_u32(f, static_cast<std::uint32_t>(t.shape.size()));
            for (size_t e : t.shape) write_u64(f, e);
            for (double v : t.data) write_f64(f, v);
        }
    }
    if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

std::vector<TensorGroup> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    std::uint32_t version = read_u32(f);
    if (version != kVersion)
        throw std::runtime_error("load_checkpoint: unsupported version in " + path);
    std::uint32_t ngroups = read_u32(f);
    std::vector<TensorGroup> groups(ngroups);
    for (auto& g : groups) {
        std::uint32_t name_len = read_u32(f);
        g.name.resize(name_len);
        f.read(g.name.data(), name_len);
        std::uint32_t nt = read_u32(f);
        g.tensors.resize(nt);
        for (auto& t : g.tensors) {
            std::uint32_t ndim = read_u32(f);
            t.shape.resize(ndim);
            size_t n = 1;
            for (auto& e : t.shape) {
                e = read_u64(f);
                n *= e;
            }
            t.data.resize(n);
            for (double& v : t.data) v = read_f64(f);
        }
        if (!f)
            throw std::runtime_error("load_checkpoint: truncated file " + path);
    }
    return groups;
}

std::vector<TensorGroup> params_to_groups(const NetworkParams& params,
                                          const std::string& prefix) {
    return {{prefix + ".weights", params.weights},
            {prefix + ".biases", params.biases}};
}

NetworkParams params_from_groups(const std::vector<TensorGroup>& groups,
                                 const std::string& prefix) {
    NetworkParams p;
    bool got_w = false, got_b = false;
    for (const auto& g : groups) {
        if (g.name == prefix + ".weights") {
            p.weights = g.tensors;
            got_w = true;
        } else if (g.name == prefix + ".biases") {
            p.biases = g.tensors;
            got_b = true;
        }
    }
    if (!got_w || !got_b)
        throw std::runtime_error("checkpoint is missing group '" + prefix + "'");
    return p;
}

}  // namespace qgrasp
