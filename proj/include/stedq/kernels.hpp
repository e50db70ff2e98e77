#pragma once

// Heavy layer kernels. The functions in `stedq` are OpenMP-parallel; the ones
// in `stedq::reference` are straightforward serial loops kept as test oracles
// and benchmark baselines. Parallel kernels split work only over independent
// output elements, so results do not depend on the thread count.

#include <cstddef>
#include <vector>

#include "stedq/tensor.hpp"

namespace stedq {

enum class Padding { kValid, kSame };

/// Zero-padding applied on each border for a kernel extent under `mode`.
std::size_t padding_amount(Padding mode, std::size_t kernel_extent);

/// Output spatial extent of a convolution; throws ShapeError if the kernel does not fit.
std::size_t conv_output_extent(std::size_t input_extent, std::size_t kernel_extent, Padding mode);

/// Output spatial extent of a pooling window; throws ShapeError if it does not fit.
std::size_t pool_output_extent(std::size_t input_extent, std::size_t kernel, std::size_t stride);

/// Cross-correlation of input [batch,in_ch,h,w] with kernels [out_ch,in_ch,kh,kw] plus bias [out_ch].
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, Padding padding);

/// Gradients of conv2d: input_grad, parameter_grads{"kernels","bias"}.
LayerGradients conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& output_grad,
                               Padding padding);

/// Affine map input [batch,n] * weights[m,n]^T + bias[m].
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

/// Gradients of dense: input_grad, parameter_grads{"weights","bias"}.
LayerGradients dense_backward(const Tensor& input, const Tensor& weights, const Tensor& output_grad);

struct MaxPoolResult {
  Tensor output;
  /// Flat input index of the selected element for every output element.
  std::vector<std::size_t> argmax;
};

/// Max pooling over square windows. Ties pick the first element in row-major order.
MaxPoolResult maxpool2d(const Tensor& input, std::size_t stride, std::size_t kernel = 2);

/// Routes each output gradient to its argmax position.
Tensor maxpool2d_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                          const Tensor& output_grad);

namespace reference {

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, Padding padding);
LayerGradients conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& output_grad,
                               Padding padding);
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);
LayerGradients dense_backward(const Tensor& input, const Tensor& weights, const Tensor& output_grad);
MaxPoolResult maxpool2d(const Tensor& input, std::size_t stride, std::size_t kernel = 2);

}  // namespace reference

}  // namespace stedq
