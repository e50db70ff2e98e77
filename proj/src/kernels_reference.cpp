// Serial textbook loops. Kept simple on purpose: these are the oracles.
#include "kernel_checks.hpp"
#include "stedq/kernels.hpp"

namespace stedq::reference {

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, Padding padding) {
  const auto g = detail::conv_geometry(input, kernels, padding);
  detail::check_bias(bias, g.out_ch, "conv2d");
  Tensor out({g.batch, g.out_ch, g.oh, g.ow});
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_ch; ++o)
      for (std::size_t oy = 0; oy < g.oh; ++oy)
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          double acc = bias[o];
          for (std::size_t c = 0; c < g.in_ch; ++c)
            for (std::size_t ky = 0; ky < g.kh; ++ky)
              for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const long long iy = static_cast<long long>(oy + ky) - static_cast<long long>(g.pad);
                const long long ix = static_cast<long long>(ox + kx) - static_cast<long long>(g.pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long long>(g.h) || ix >= static_cast<long long>(g.w))
                  continue;
                acc += kernels.at(o, c, ky, kx) *
                       input.at(n, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              }
          out.at(n, o, oy, ox) = acc;
        }
  return out;
}

LayerGradients conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& output_grad,
                               Padding padding) {
  const auto g = detail::conv_geometry(input, kernels, padding);
  detail::check_output_grad(output_grad, {g.batch, g.out_ch, g.oh, g.ow}, "conv2d");
  Tensor dx(input.shape()), dk(kernels.shape()), db({g.out_ch});
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t o = 0; o < g.out_ch; ++o)
      for (std::size_t oy = 0; oy < g.oh; ++oy)
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          const double gy = output_grad.at(n, o, oy, ox);
          db[o] += gy;
          for (std::size_t c = 0; c < g.in_ch; ++c)
            for (std::size_t ky = 0; ky < g.kh; ++ky)
              for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const long long iy = static_cast<long long>(oy + ky) - static_cast<long long>(g.pad);
                const long long ix = static_cast<long long>(ox + kx) - static_cast<long long>(g.pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long long>(g.h) || ix >= static_cast<long long>(g.w))
                  continue;
                const auto y = static_cast<std::size_t>(iy), x = static_cast<std::size_t>(ix);
                dk.at(o, c, ky, kx) += gy * input.at(n, c, y, x);
                dx.at(n, c, y, x) += gy * kernels.at(o, c, ky, kx);
              }
        }
  LayerGradients result;
  result.input_grad = std::move(dx);
  result.parameter_grads.emplace("kernels", std::move(dk));
  result.parameter_grads.emplace("bias", std::move(db));
  return result;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  detail::check_dense(input, weights);
  const std::size_t batch = input.dim(0), n = input.dim(1), m = weights.dim(0);
  detail::check_bias(bias, m, "dense");
  Tensor out({batch, m});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < m; ++j) {
      double acc = bias[j];
      for (std::size_t i = 0; i < n; ++i) acc += input[b * n + i] * weights[j * n + i];
      out[b * m + j] = acc;
    }
  return out;
}

LayerGradients dense_backward(const Tensor& input, const Tensor& weights, const Tensor& output_grad) {
  detail::check_dense(input, weights);
  const std::size_t batch = input.dim(0), n = input.dim(1), m = weights.dim(0);
  detail::check_output_grad(output_grad, {batch, m}, "dense");
  Tensor dx(input.shape()), dw(weights.shape()), db({m});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t j = 0; j < m; ++j) {
      const double g = output_grad[b * m + j];
      db[j] += g;
      for (std::size_t i = 0; i < n; ++i) {
        dw[j * n + i] += g * input[b * n + i];
        dx[b * n + i] += g * weights[j * n + i];
      }
    }
  LayerGradients result;
  result.input_grad = std::move(dx);
  result.parameter_grads.emplace("weights", std::move(dw));
  result.parameter_grads.emplace("bias", std::move(db));
  return result;
}

MaxPoolResult maxpool2d(const Tensor& input, std::size_t stride, std::size_t kernel) {
  detail::require_rank(input, 4, "maxpool2d input");
  const std::size_t oh = pool_output_extent(input.dim(2), kernel, stride);
  const std::size_t ow = pool_output_extent(input.dim(3), kernel, stride);
  MaxPoolResult r{Tensor({input.dim(0), input.dim(1), oh, ow}), {}};
  for (std::size_t n = 0; n < input.dim(0); ++n)
    for (std::size_t c = 0; c < input.dim(1); ++c)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          std::size_t by = oy * stride, bx = ox * stride;
          for (std::size_t ky = 0; ky < kernel; ++ky)
            for (std::size_t kx = 0; kx < kernel; ++kx)
              if (input.at(n, c, oy * stride + ky, ox * stride + kx) > input.at(n, c, by, bx)) {
                by = oy * stride + ky;
                bx = ox * stride + kx;
              }
          r.output.at(n, c, oy, ox) = input.at(n, c, by, bx);
          r.argmax.push_back(((n * input.dim(1) + c) * input.dim(2) + by) * input.dim(3) + bx);
        }
  return r;
}

}  // namespace stedq::reference
