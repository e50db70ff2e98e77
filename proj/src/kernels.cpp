#include "stedq/kernels.hpp"

#include <algorithm>
#include <vector>

#include "kernel_checks.hpp"

namespace stedq {

using detail::ConvGeometry;

std::size_t padding_amount(Padding mode, std::size_t kernel_extent) {
  if (mode == Padding::kValid) return 0;
  if (kernel_extent % 2 == 0)
    throw ShapeError("same padding needs an odd kernel extent, got " + std::to_string(kernel_extent));
  return (kernel_extent - 1) / 2;
}

std::size_t conv_output_extent(std::size_t input_extent, std::size_t kernel_extent, Padding mode) {
  const std::size_t padded = input_extent + 2 * padding_amount(mode, kernel_extent);
  if (kernel_extent == 0 || kernel_extent > padded)
    throw ShapeError("kernel extent " + std::to_string(kernel_extent) + " does not fit input extent " +
                     std::to_string(input_extent));
  return padded - kernel_extent + 1;
}

std::size_t pool_output_extent(std::size_t input_extent, std::size_t kernel, std::size_t stride) {
  if (stride < 1) throw ShapeError("pooling stride must be at least 1");
  if (kernel < 1 || input_extent < kernel)
    throw ShapeError("pooling window " + std::to_string(kernel) + " does not fit input extent " +
                     std::to_string(input_extent));
  return (input_extent - kernel) / stride + 1;
}

namespace {

// Convolutions run on zero-padded planes of width wp. Output rows are computed "wide"
// (wp columns, the last wp - ow of them junk) so every tap is one long contiguous loop.
struct PaddedLayout {
  std::size_t hp, wp, plane, wide;
};

PaddedLayout padded_layout(const ConvGeometry& g) {
  const std::size_t hp = g.h + 2 * g.pad, wp = g.w + 2 * g.pad;
  return {hp, wp, hp * wp + g.kw, g.oh * wp};
}

std::vector<double> pad_planes(const double* src, std::size_t planes, const ConvGeometry& g, const PaddedLayout& p) {
  std::vector<double> out(planes * p.plane, 0.0);
#pragma omp parallel for schedule(static)
  for (long long q = 0; q < static_cast<long long>(planes); ++q) {
    const double* from = src + static_cast<std::size_t>(q) * g.h * g.w;
    double* to = out.data() + static_cast<std::size_t>(q) * p.plane;
    for (std::size_t y = 0; y < g.h; ++y)
      std::copy(from + y * g.w, from + (y + 1) * g.w, to + (y + g.pad) * p.wp + g.pad);
  }
  return out;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, Padding padding) {
  const ConvGeometry g = detail::conv_geometry(input, kernels, padding);
  detail::check_bias(bias, g.out_ch, "conv2d");
  Tensor output({g.batch, g.out_ch, g.oh, g.ow});
  const PaddedLayout p = padded_layout(g);
  const std::vector<double> padded = pad_planes(input.data().data(), g.batch * g.in_ch, g, p);

  const double* k = kernels.data().data();
  double* out_base = output.data().data();
  const long long jobs = static_cast<long long>(g.batch * g.out_ch);

#pragma omp parallel
  {
    std::vector<double> wide(p.wide);
#pragma omp for schedule(static)
    for (long long job = 0; job < jobs; ++job) {
      const std::size_t n = static_cast<std::size_t>(job) / g.out_ch;
      const std::size_t o = static_cast<std::size_t>(job) % g.out_ch;
      std::fill(wide.begin(), wide.end(), bias[o]);
      double* acc = wide.data();
      for (std::size_t c = 0; c < g.in_ch; ++c) {
        const double* plane = padded.data() + (n * g.in_ch + c) * p.plane;
        const double* taps = k + (o * g.in_ch + c) * g.kh * g.kw;
        for (std::size_t ky = 0; ky < g.kh; ++ky)
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const double wv = taps[ky * g.kw + kx];
            const double* src = plane + ky * p.wp + kx;
#pragma omp simd
            for (std::size_t i = 0; i < p.wide; ++i) acc[i] += wv * src[i];
          }
      }
      double* out = out_base + static_cast<std::size_t>(job) * g.oh * g.ow;
      for (std::size_t oy = 0; oy < g.oh; ++oy)
        std::copy(acc + oy * p.wp, acc + oy * p.wp + g.ow, out + oy * g.ow);
    }
  }
  return output;
}

LayerGradients conv2d_backward(const Tensor& input, const Tensor& kernels, const Tensor& output_grad,
                               Padding padding) {
  const ConvGeometry g = detail::conv_geometry(input, kernels, padding);
  detail::check_output_grad(output_grad, {g.batch, g.out_ch, g.oh, g.ow}, "conv2d");
  const PaddedLayout p = padded_layout(g);

  Tensor input_grad(input.shape());
  Tensor kernel_grad(kernels.shape());
  Tensor bias_grad({g.out_ch});

  const double* k = kernels.data().data();
  const double* dy = output_grad.data().data();
  double* dx = input_grad.data().data();
  double* dk = kernel_grad.data().data();
  const std::size_t plane_out = g.oh * g.ow;

  const std::vector<double> padded = pad_planes(input.data().data(), g.batch * g.in_ch, g, p);
  // Output gradient in wide layout, zero in the junk columns.
  std::vector<double> dy_wide(g.batch * g.out_ch * p.wide, 0.0);
#pragma omp parallel for schedule(static)
  for (long long q = 0; q < static_cast<long long>(g.batch * g.out_ch); ++q) {
    const double* from = dy + static_cast<std::size_t>(q) * plane_out;
    double* to = dy_wide.data() + static_cast<std::size_t>(q) * p.wide;
    for (std::size_t oy = 0; oy < g.oh; ++oy) std::copy(from + oy * g.ow, from + (oy + 1) * g.ow, to + oy * p.wp);
  }

  // Kernel gradients: one (out_ch, in_ch) pair per job, batch summed in order.
  const long long kjobs = static_cast<long long>(g.out_ch * g.in_ch);
#pragma omp parallel for schedule(static)
  for (long long job = 0; job < kjobs; ++job) {
    const std::size_t o = static_cast<std::size_t>(job) / g.in_ch;
    const std::size_t c = static_cast<std::size_t>(job) % g.in_ch;
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        double acc = 0.0;
        for (std::size_t n = 0; n < g.batch; ++n) {
          const double* src = padded.data() + (n * g.in_ch + c) * p.plane + ky * p.wp + kx;
          const double* grad = dy_wide.data() + (n * g.out_ch + o) * p.wide;
#pragma omp simd reduction(+ : acc)
          for (std::size_t i = 0; i < p.wide; ++i) acc += grad[i] * src[i];
        }
        dk[((o * g.in_ch + c) * g.kh + ky) * g.kw + kx] = acc;
      }
  }
  for (std::size_t o = 0; o < g.out_ch; ++o) {
    double acc = 0.0;
    for (std::size_t n = 0; n < g.batch; ++n) {
      const double* grad = dy + (n * g.out_ch + o) * plane_out;
      for (std::size_t i = 0; i < plane_out; ++i) acc += grad[i];
    }
    bias_grad[o] = acc;
  }

  // Input gradient: one (batch, in_ch) plane per job, scattered into a padded plane then cropped.
  const long long xjobs = static_cast<long long>(g.batch * g.in_ch);
#pragma omp parallel
  {
    std::vector<double> dpad(p.plane);
#pragma omp for schedule(static)
    for (long long job = 0; job < xjobs; ++job) {
      const std::size_t n = static_cast<std::size_t>(job) / g.in_ch;
      const std::size_t c = static_cast<std::size_t>(job) % g.in_ch;
      std::fill(dpad.begin(), dpad.end(), 0.0);
      for (std::size_t o = 0; o < g.out_ch; ++o) {
        const double* grad = dy_wide.data() + (n * g.out_ch + o) * p.wide;
        const double* taps = k + (o * g.in_ch + c) * g.kh * g.kw;
        for (std::size_t ky = 0; ky < g.kh; ++ky)
          for (std::size_t kx = 0; kx < g.kw; ++kx) {
            const double wv = taps[ky * g.kw + kx];
            double* dst = dpad.data() + ky * p.wp + kx;
#pragma omp simd
            for (std::size_t i = 0; i < p.wide; ++i) dst[i] += wv * grad[i];
          }
      }
      double* plane = dx + static_cast<std::size_t>(job) * g.h * g.w;
      for (std::size_t y = 0; y < g.h; ++y)
        std::copy(dpad.data() + (y + g.pad) * p.wp + g.pad, dpad.data() + (y + g.pad) * p.wp + g.pad + g.w,
                  plane + y * g.w);
    }
  }

  LayerGradients result;
  result.input_grad = std::move(input_grad);
  result.parameter_grads.emplace("kernels", std::move(kernel_grad));
  result.parameter_grads.emplace("bias", std::move(bias_grad));
  return result;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  detail::check_dense(input, weights);
  const std::size_t batch = input.dim(0), n = input.dim(1), m = weights.dim(0);
  detail::check_bias(bias, m, "dense");
  Tensor output({batch, m});
  const double* x = input.data().data();
  const double* wt = weights.data().data();
  double* y = output.data().data();

#pragma omp parallel for schedule(static)
  for (long long b = 0; b < static_cast<long long>(batch); ++b) {
    const double* xr = x + static_cast<std::size_t>(b) * n;
    for (std::size_t j = 0; j < m; ++j) {
      const double* wr = wt + j * n;
      double acc = bias[j];
      for (std::size_t i = 0; i < n; ++i) acc += xr[i] * wr[i];
      y[static_cast<std::size_t>(b) * m + j] = acc;
    }
  }
  return output;
}

LayerGradients dense_backward(const Tensor& input, const Tensor& weights, const Tensor& output_grad) {
  detail::check_dense(input, weights);
  const std::size_t batch = input.dim(0), n = input.dim(1), m = weights.dim(0);
  detail::check_output_grad(output_grad, {batch, m}, "dense");
  Tensor input_grad(input.shape());
  Tensor weight_grad(weights.shape());
  Tensor bias_grad({m});
  const double* x = input.data().data();
  const double* wt = weights.data().data();
  const double* dy = output_grad.data().data();
  double* dx = input_grad.data().data();
  double* dw = weight_grad.data().data();

#pragma omp parallel for schedule(static)
  for (long long j = 0; j < static_cast<long long>(m); ++j) {
    double* dwr = dw + static_cast<std::size_t>(j) * n;
    double db = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double g = dy[b * m + static_cast<std::size_t>(j)];
      db += g;
      const double* xr = x + b * n;
#pragma omp simd
      for (std::size_t i = 0; i < n; ++i) dwr[i] += g * xr[i];
    }
    bias_grad[static_cast<std::size_t>(j)] = db;
  }

#pragma omp parallel for schedule(static)
  for (long long b = 0; b < static_cast<long long>(batch); ++b) {
    double* dxr = dx + static_cast<std::size_t>(b) * n;
    for (std::size_t j = 0; j < m; ++j) {
      const double g = dy[static_cast<std::size_t>(b) * m + j];
      const double* wr = wt + j * n;
#pragma omp simd
      for (std::size_t i = 0; i < n; ++i) dxr[i] += g * wr[i];
    }
  }

  LayerGradients result;
  result.input_grad = std::move(input_grad);
  result.parameter_grads.emplace("weights", std::move(weight_grad));
  result.parameter_grads.emplace("bias", std::move(bias_grad));
  return result;
}

MaxPoolResult maxpool2d(const Tensor& input, std::size_t stride, std::size_t kernel) {
  detail::require_rank(input, 4, "maxpool2d input");
  const std::size_t batch = input.dim(0), ch = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t oh = pool_output_extent(h, kernel, stride);
  const std::size_t ow = pool_output_extent(w, kernel, stride);
  MaxPoolResult result{Tensor({batch, ch, oh, ow}), std::vector<std::size_t>(batch * ch * oh * ow)};
  const double* in = input.data().data();
  double* out = result.output.data().data();

#pragma omp parallel for schedule(static)
  for (long long p = 0; p < static_cast<long long>(batch * ch); ++p) {
    const std::size_t in_off = static_cast<std::size_t>(p) * h * w;
    const std::size_t out_off = static_cast<std::size_t>(p) * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = in_off + oy * stride * w + ox * stride;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          const std::size_t row = in_off + (oy * stride + ky) * w + ox * stride;
          for (std::size_t kx = 0; kx < kernel; ++kx)
            if (in[row + kx] > in[best]) best = row + kx;
        }
        out[out_off + oy * ow + ox] = in[best];
        result.argmax[out_off + oy * ow + ox] = best;
      }
    }
  }
  return result;
}

Tensor maxpool2d_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                          const Tensor& output_grad) {
  if (argmax.size() != output_grad.size())
    throw ShapeError("maxpool2d_backward: " + std::to_string(argmax.size()) + " routes for " +
                     std::to_string(output_grad.size()) + " output gradients");
  Tensor input_grad(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    if (argmax[i] >= input_grad.size()) throw ShapeError("maxpool2d_backward: route outside input");
    input_grad[argmax[i]] += output_grad[i];
  }
  return input_grad;
}

}  // namespace stedq
