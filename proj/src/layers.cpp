#include "stedq/layers.hpp"

#include <cmath>
#include <string>

namespace stedq {

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
double elu_derivative(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor elu(const Tensor& x) {
  Tensor y(x.shape());
  const auto in = x.data();
  auto out = y.data();
#pragma omp parallel for simd schedule(static)
  for (long long i = 0; i < static_cast<long long>(in.size()); ++i) out[i] = elu(in[i]);
  return y;
}

Tensor elu_backward(const Tensor& x, const Tensor& output_grad) {
  if (x.shape() != output_grad.shape())
    throw ShapeError("elu_backward: gradient shape " + to_string(output_grad.shape()) + " vs input " +
                     to_string(x.shape()));
  Tensor dx(x.shape());
  const auto in = x.data();
  const auto g = output_grad.data();
  auto out = dx.data();
#pragma omp parallel for simd schedule(static)
  for (long long i = 0; i < static_cast<long long>(in.size()); ++i) out[i] = g[i] * elu_derivative(in[i]);
  return dx;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
  return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& output_grad) {
  if (y.shape() != output_grad.shape())
    throw ShapeError("sigmoid_backward: gradient shape " + to_string(output_grad.shape()) + " vs output " +
                     to_string(y.shape()));
  Tensor dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = output_grad[i] * y[i] * (1.0 - y[i]);
  return dx;
}

RunningStats RunningStats::fresh(std::size_t channels) {
  return RunningStats{Tensor({channels}, 0.0), Tensor({channels}, 1.0)};
}

namespace {

struct ChannelLayout {
  std::size_t batch, channels, spatial;
};

ChannelLayout channel_layout(const Tensor& input) {
  if (input.rank() < 2)
    throw ShapeError("batchnorm input must be [batch, ch, ...], got " + to_string(input.shape()));
  std::size_t spatial = 1;
  for (std::size_t a = 2; a < input.rank(); ++a) spatial *= input.dim(a);
  return {input.dim(0), input.dim(1), spatial};
}

void check_channel_vector(const Tensor& t, std::size_t channels, const char* what) {
  if (t.rank() != 1 || t.dim(0) != channels)
    throw ShapeError(std::string("batchnorm ") + what + " must have shape [" + std::to_string(channels) +
                     "], got " + to_string(t.shape()));
}

}  // namespace

BatchNormResult batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta, RunningStats& stats,
                          Mode mode) {
  const auto [batch, channels, spatial] = channel_layout(input);
  check_channel_vector(gamma, channels, "gamma");
  check_channel_vector(beta, channels, "beta");
  check_channel_vector(stats.mean, channels, "running mean");
  check_channel_vector(stats.variance, channels, "running variance");
  if (mode == Mode::kTrain && batch < 2)
    throw ShapeError("batchnorm in train mode needs a batch of at least 2, got " + std::to_string(batch));

  BatchNormResult r{Tensor(input.shape()), BatchNormCache{mode, Tensor(input.shape()), std::vector<double>(channels)}};
  const double count = static_cast<double>(batch * spatial);
  const double* x = input.data().data();
  double* y = r.output.data().data();
  double* xhat = r.cache.normalized.data().data();

#pragma omp parallel for schedule(static)
  for (long long cl = 0; cl < static_cast<long long>(channels); ++cl) {
    const auto c = static_cast<std::size_t>(cl);
    double mean, inv_std;
    if (mode == Mode::kTrain) {
      double sum = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const double* p = x + (n * channels + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) sum += p[i];
      }
      mean = sum / count;
      double sq = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const double* p = x + (n * channels + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) sq += (p[i] - mean) * (p[i] - mean);
      }
      const double var = sq / count;
      inv_std = 1.0 / std::sqrt(var + kBatchNormEpsilon);
      stats.mean[c] = (1.0 - kBatchNormMomentum) * stats.mean[c] + kBatchNormMomentum * mean;
      stats.variance[c] =
          (1.0 - kBatchNormMomentum) * stats.variance[c] + kBatchNormMomentum * sq / (count - 1.0);
    } else {
      mean = stats.mean[c];
      inv_std = 1.0 / std::sqrt(stats.variance[c] + kBatchNormEpsilon);
    }
    r.cache.inv_std[c] = inv_std;
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t off = (n * channels + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        const double h = (x[off + i] - mean) * inv_std;
        xhat[off + i] = h;
        y[off + i] = gamma[c] * h + beta[c];
      }
    }
  }
  return r;
}

LayerGradients batchnorm_backward(const BatchNormCache& cache, const Tensor& gamma, const Tensor& output_grad) {
  if (output_grad.shape() != cache.normalized.shape())
    throw ShapeError("batchnorm_backward: gradient shape " + to_string(output_grad.shape()) + " vs input " +
                     to_string(cache.normalized.shape()));
  const auto [batch, channels, spatial] = channel_layout(output_grad);
  check_channel_vector(gamma, channels, "gamma");

  LayerGradients r;
  r.input_grad = Tensor(output_grad.shape());
  Tensor dgamma({channels}), dbeta({channels});
  const double count = static_cast<double>(batch * spatial);
  const double* dy = output_grad.data().data();
  const double* xhat = cache.normalized.data().data();
  double* dx = r.input_grad.data().data();

#pragma omp parallel for schedule(static)
  for (long long cl = 0; cl < static_cast<long long>(channels); ++cl) {
    const auto c = static_cast<std::size_t>(cl);
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t off = (n * channels + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        sum_dy += dy[off + i];
        sum_dy_xhat += dy[off + i] * xhat[off + i];
      }
    }
    dgamma[c] = sum_dy_xhat;
    dbeta[c] = sum_dy;
    const double scale = gamma[c] * cache.inv_std[c];
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t off = (n * channels + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        if (cache.mode == Mode::kTrain)
          dx[off + i] = scale * (dy[off + i] - sum_dy / count - xhat[off + i] * sum_dy_xhat / count);
        else
          dx[off + i] = scale * dy[off + i];
      }
    }
  }
  r.parameter_grads.emplace("gamma", std::move(dgamma));
  r.parameter_grads.emplace("beta", std::move(dbeta));
  return r;
}

LossResult mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.size() != target.size())
    throw ShapeError("mse_loss: prediction has " + std::to_string(pred.size()) + " elements, target " +
                     std::to_string(target.size()));
  if (pred.empty()) throw ShapeError("mse_loss: empty batch");
  const double n = static_cast<double>(pred.size());
  LossResult r{0.0, Tensor(pred.shape())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    r.value += d * d;
    r.grad[i] = 2.0 * d / n;
  }
  r.value /= n;
  return r;
}

}  // namespace stedq
