#pragma once

#include "mdiqa/tensor.hpp"

#include <vector>

// Differentiable operations. Shapes must agree exactly; the only broadcasts
// are scalar-with-tensor in the elementwise ops and the bias add inside
// dense/conv2d.
namespace mdiqa::ops {

/// x [B,Cin] * W [Cin,Cout] + b [Cout]
Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Cross-correlation. x [B,C,H,W], kernels [O,C,kh,kw], bias [O].
Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias, std::size_t stride = 1,
              std::size_t padding = 0);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor sigmoid(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Throws NumericError on a zero divisor.
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);
Tensor square(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Sums out the listed axes; the remaining axes keep their order.
Tensor sum_over(const Tensor& x, const std::vector<std::size_t>& axes);

/// Non-overlapping k x k average pooling. H and W must be multiples of k.
Tensor avg_pool2d(const Tensor& x, std::size_t k);
/// [B,C,H,W] -> [B,C]
Tensor global_avg_pool(const Tensor& x);
/// [B,C] -> [B,C,H,W], copying each channel value over space.
Tensor broadcast_spatial(const Tensor& x, std::size_t height, std::size_t width);
/// Concatenate [B,C1,H,W] and [B,C2,H,W] along channels.
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor reshape(const Tensor& x, Shape shape);

} // namespace mdiqa::ops
