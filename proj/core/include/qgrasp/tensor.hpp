#pragma once

#include <cstddef>
#include <vector>

namespace qgrasp {

// Dense row-major double tensor.
struct Tensor {
    std::vector<size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<size_t> s);

    size_t size() const { return data.size(); }
    size_t extent(size_t i) const { return shape[i]; }

    static Tensor zeros(std::vector<size_t> s) { return Tensor(std::move(s)); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;
};

// 2D cross-correlation, no padding. input [C,H,W], weights [OC,C,kh,kw],
// bias [OC] -> output [OC,H',W'].
Tensor conv2d_forward(const Tensor& input, const Tensor& weights,
                      const Tensor& bias, size_t stride);

struct ConvGrads {
    Tensor d_input, d_weights, d_bias;
};
ConvGrads conv2d_backward(const Tensor& input, const Tensor& weights,
                          size_t stride, const Tensor& d_output);

struct PoolResult {
    Tensor output;
    std::vector<size_t> argmax;  // linear index into input, one per output cell
};
PoolResult maxpool2x2_forward(const Tensor& input);
Tensor maxpool2x2_backward(const Tensor& d_output,
                           const std::vector<size_t>& argmax,
                           const std::vector<size_t>& input_shape);

// Affine map: weights [out,in], bias [out], input [in].
Tensor fc_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);

struct FcGrads {
    Tensor d_input, d_weights, d_bias;
};
FcGrads fc_backward(const Tensor& input, const Tensor& weights,
                    const Tensor& d_output);

Tensor relu_forward(const Tensor& input);
// Passes gradient where the pre-activation input is strictly positive.
Tensor relu_backward(const Tensor& input, const Tensor& d_output);

}  // namespace qgrasp
