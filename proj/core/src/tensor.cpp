#include "qgrasp/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace qgrasp {

namespace {

size_t product(const std::vector<size_t>& s) {
    size_t p = 1;
    for (size_t e : s) p *= e;
    return p;
}

[[noreturn]] void shape_error(const std::string& op, const std::string& detail) {
    throw std::invalid_argument(op + ": shape mismatch, " + detail);
}

}  // namespace

Tensor::Tensor(std::vector<size_t> s) : shape(std::move(s)) {
    data.assign(product(shape), 0.0);
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weights,
                      const Tensor& bias, size_t stride) {
    if (input.shape.size() != 3) shape_error("conv2d", "input must be [C,H,W]");
    if (weights.shape.size() != 4)
        shape_error("conv2d", "weights must be [OC,C,kh,kw]");
    size_t C = input.shape[0], H = input.shape[1], W = input.shape[2];
    size_t OC = weights.shape[0], kh = weights.shape[2], kw = weights.shape[3];
    if (weights.shape[1] != C)
        shape_error("conv2d", "input channels " + std::to_string(C) +
                                  " vs kernel channels " +
                                  std::to_string(weights.shape[1]));
    if (bias.shape != std::vector<size_t>{OC})
        shape_error("conv2d", "bias length must equal out_channels " +
                                  std::to_string(OC));
    if (stride == 0 || kh > H || kw > W)
        shape_error("conv2d", "kernel " + std::to_string(kh) + "x" +
                                  std::to_string(kw) + " does not fit input " +
                                  std::to_string(H) + "x" + std::to_string(W));
    size_t OH = (H - kh) / stride + 1;
    size_t OW = (W - kw) / stride + 1;

    Tensor out({OC, OH, OW});
    const double* in = input.data.data();
    const double* wt = weights.data.data();
    for (size_t oc = 0; oc < OC; ++oc) {
        for (size_t oy = 0; oy < OH; ++oy) {
            for (size_t ox = 0; ox < OW; ++ox) {
                double acc = bias.data[oc];
                size_t iy0 = oy * stride, ix0 = ox * stride;
                for (size_t c = 0; c < C; ++c) {
                    const double* in_c = in + c * H * W;
                    const double* wt_c = wt + (oc * C + c) * kh * kw;
                    for (size_t ky = 0; ky < kh; ++ky) {
                        const double* row = in_c + (iy0 + ky) * W + ix0;
                        const double* wrow = wt_c + ky * kw;
                        for (size_t kx = 0; kx < kw; ++kx) acc += row[kx] * wrow[kx];
                    }
                }
                out.data[(oc * OH + oy) * OW + ox] = acc;
            }
        }
    }
    return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& weights,
                          size_t stride, const Tensor& d_output) {
    size_t C = input.shape[0], H = input.shape[1], W = input.shape[2];
    size_t OC = weights.shape[0], kh = weights.shape[2], kw = weights.shape[3];
    size_t OH = (H - kh) / stride + 1;
    size_t OW = (W - kw) / stride + 1;
    if (d_output.shape != std::vector<size_t>{OC, OH, OW})
        shape_error("conv2d_backward", "d_output shape does not match forward");

    ConvGrads g;
    g.d_input = Tensor({C, H, W});
    g.d_weights = Tensor(weights.shape);
    g.d_bias = Tensor({OC});

    const double* in = input.data.data();
    const double* wt = weights.data.data();
    for (size_t oc = 0; oc < OC; ++oc) {
        for (size_t oy = 0; oy < OH; ++oy) {
            for (size_t ox = 0; ox < OW; ++ox) {
                double go = d_output.data[(oc * OH + oy) * OW + ox];
                if (go == 0.0) continue;
                g.d_bias.data[oc] += go;
                size_t iy0 = oy * stride, ix0 = ox * stride;
                for (size_t c = 0; c < C; ++c) {
                    const double* in_c = in + c * H * W;
                    const double* wt_c = wt + (oc * C + c) * kh * kw;
                    double* dw_c = g.d_weights.data.data() + (oc * C + c) * kh * kw;
                    double* di_c = g.d_input.data.data() + c * H * W;
                    for (size_t ky = 0; ky < kh; ++ky) {
                        const double* row = in_c + (iy0 + ky) * W + ix0;
                        double* drow = di_c + (iy0 + ky) * W + ix0;
                        const double* wrow = wt_c + ky * kw;
                        double* dwrow = dw_c + ky * kw;
                        for (size_t kx = 0; kx < kw; ++kx) {
                            dwrow[kx] += go * row[kx];
                            drow[kx] += go * wrow[kx];
                        }
                    }
                }
            }
        }
    }
    return g;
}

PoolResult maxpool2x2_forward(const Tensor& input) {
    if (input.shape.size() != 3) shape_error("maxpool", "input must be [C,H,W]");
    size_t C = input.shape[0], H = input.shape[1], W = input.shape[2];
    if (H % 2 != 0 || W % 2 != 0)
        shape_error("maxpool", "spatial extents must be even, got " +
                                   std::to_string(H) + "x" + std::to_string(W));
    PoolResult r;
    r.output = Tensor({C, H / 2, W / 2});
    r.argmax.resize(r.output.size());
    for (size_t c = 0; c < C; ++c) {
        for (size_t oy = 0; oy < H / 2; ++oy) {
            for (size_t ox = 0; ox < W / 2; ++ox) {
                size_t best = (c * H + oy * 2) * W + ox * 2;
                double best_v = input.data[best];
                // ties break toward the smallest linear index
                const size_t candidates[3] = {best + 1, best + W, best + W + 1};
                for (size_t idx : candidates) {
                    if (input.data[idx] > best_v) {
                        best_v = input.data[idx];
                        best = idx;
                    }
                }
                size_t o = (c * (H / 2) + oy) * (W / 2) + ox;
                r.output.data[o] = best_v;
                r.argmax[o] = best;
            }
        }
    }
    return r;
}

Tensor maxpool2x2_backward(const Tensor& d_output,
                           const std::vector<size_t>& argmax,
                           const std::vector<size_t>& input_shape) {
    if (d_output.size() != argmax.size())
        shape_error("maxpool_backward", "d_output size does not match argmax");
    Tensor d_input(input_shape);
    for (size_t i = 0; i < argmax.size(); ++i)
        d_input.data[argmax[i]] += d_output.data[i];
    return d_input;
}

Tensor fc_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    if (weights.shape.size() != 2) shape_error("fc", "weights must be [out,in]");
    size_t out_n = weights.shape[0], in_n = weights.shape[1];
    if (input.size() != in_n)
        shape_error("fc", "input size " + std::to_string(input.size()) +
                              " vs weight columns " + std::to_string(in_n));
    if (bias.size() != out_n)
        shape_error("fc", "bias size must equal rows " + std::to_string(out_n));
    Tensor out({out_n});
    for (size_t o = 0; o < out_n; ++o) {
        double acc = bias.data[o];
        const double* row = weights.data.data() + o * in_n;
        for (size_t i = 0; i < in_n; ++i) acc += row[i] * input.data[i];
        out.data[o] = acc;
    }
    return out;
}

FcGrads fc_backward(const Tensor& input, const Tensor& weights,
                    const Tensor& d_output) {
    size_t out_n = weights.shape[0], in_n = weights.shape[1];
    if (d_output.size() != out_n)
        shape_error("fc_backward", "d_output size must equal rows");
    FcGrads g;
    g.d_input = Tensor(input.shape);
    g.d_weights = Tensor(weights.shape);
    g.d_bias = Tensor({out_n});
    for (size_t o = 0; o < out_n; ++o) {
        double go = d_output.data[o];
        g.d_bias.data[o] = go;
        const double* row = weights.data.data() + o * in_n;
        double* dwrow = g.d_weights.data.data() + o * in_n;
        for (size_t i = 0; i < in_n; ++i) {
            dwrow[i] = go * input.data.data()[i];
            g.d_input.data[i] += go * row[i];
        }
    }
    return g;
}

Tensor relu_forward(const Tensor& input) {
    Tensor out(input.shape);
    for (size_t i = 0; i < input.size(); ++i)
        out.data[i] = input.data[i] > 0.0 ? input.data[i] : 0.0;
    return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& d_output) {
    if (!input.same_shape(d_output))
        shape_error("relu_backward", "input and d_output differ");
    Tensor d_input(input.shape);
    for (size_t i = 0; i < input.size(); ++i)
        d_input.data[i] = input.data[i] > 0.0 ? d_output.data[i] : 0.0;
    return d_input;
}

}  // namespace qgrasp
