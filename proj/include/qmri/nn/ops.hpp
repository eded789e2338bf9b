#pragma once

#include <functional>

#include "qmri/nn/tensor.hpp"

namespace qmri::nn {

// Elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);

// Broadcast a one-element tensor over `a`.
Tensor mul_scalar(const Tensor& a, const Tensor& s);
Tensor div_scalar(const Tensor& a, const Tensor& s);

// Reductions to a one-element tensor
Tensor sum(const Tensor& a);
Tensor sum_squares(const Tensor& a);

enum class Activation { none, relu };

// 3×3 cross-correlation, stride 1, zero padding 1.
// x (B, Ci, H, W), w (Co, Ci, 3, 3), b (Co) -> (B, Co, H, W)
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, Activation act = Activation::none);

// (B, C, H, W) -> (B, C, H/2, W/2); H and W must be even.
Tensor maxpool2(const Tensor& x);
// (B, C, H, W) -> (B, C, 2H, 2W), nearest neighbour.
Tensor upsample2(const Tensor& x);
// Channel concatenation of (B, Ca, H, W) and (B, Cb, H, W).
Tensor concat_channels(const Tensor& a, const Tensor& b);
// Zero-pad at the bottom/right to (H', W') and the inverse crop.
Tensor pad_to(const Tensor& x, std::size_t h, std::size_t w);
Tensor crop_to(const Tensor& x, std::size_t h, std::size_t w);
// (B, C, H, W) -> (B, 1, H, W)
Tensor select_channel(const Tensor& x, std::size_t c);
// Mean of channel c over batch and space -> one element.
Tensor channel_mean(const Tensor& x, std::size_t c);

// Per-echo modulus of an (N, 2, H, W) real/imag stack -> (1, N, H, W).
// The subgradient at exact zeros is taken as 0.
Tensor complex_magnitude(const Tensor& x);

// y = L(x) for a linear map with known adjoint; backward applies the adjoint.
using LinearFn = std::function<void(std::span<const double> in, std::span<double> out)>;
Tensor linear_map(const Tensor& x, Shape out_shape, LinearFn forward, LinearFn adjoint);

}  // namespace qmri::nn
