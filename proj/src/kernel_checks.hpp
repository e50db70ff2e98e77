#pragma once

#include <string>

#include "stedq/kernels.hpp"

namespace stedq::detail {

inline void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank)
    throw ShapeError(std::string(what) + " must have rank " + std::to_string(rank) + ", got shape " +
                     to_string(t.shape()));
}

struct ConvGeometry {
  std::size_t batch, in_ch, h, w;
  std::size_t out_ch, kh, kw;
  std::size_t pad, oh, ow;
};

inline ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernels, Padding padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  if (input.dim(1) != kernels.dim(1))
    throw ShapeError("conv2d input has " + std::to_string(input.dim(1)) + " channels but kernels " +
                     to_string(kernels.shape()) + " expect " + std::to_string(kernels.dim(1)));
  ConvGeometry g{};
  g.batch = input.dim(0);
  g.in_ch = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.out_ch = kernels.dim(0);
  g.kh = kernels.dim(2);
  g.kw = kernels.dim(3);
  g.pad = padding_amount(padding, g.kh);
  if (padding_amount(padding, g.kw) != g.pad)
    throw ShapeError("conv2d needs square kernels, got " + to_string(kernels.shape()));
  g.oh = conv_output_extent(g.h, g.kh, padding);
  g.ow = conv_output_extent(g.w, g.kw, padding);
  return g;
}

inline void check_bias(const Tensor& bias, std::size_t n, const char* what) {
  if (bias.rank() != 1 || bias.dim(0) != n)
    throw ShapeError(std::string(what) + " bias must have shape [" + std::to_string(n) + "], got " +
                     to_string(bias.shape()));
}

inline void check_output_grad(const Tensor& grad, const Shape& expected, const char* what) {
  if (grad.shape() != expected)
    throw ShapeError(std::string(what) + " output gradient shape " + to_string(grad.shape()) +
                     " does not match output shape " + to_string(expected));
}

inline void check_dense(const Tensor& input, const Tensor& weights) {
  require_rank(input, 2, "dense input");
  require_rank(weights, 2, "dense weights");
  if (input.dim(1) != weights.dim(1))
    throw ShapeError("dense input width " + std::to_string(input.dim(1)) + " does not match weights " +
                     to_string(weights.shape()));
}

}  // namespace stedq::detail
