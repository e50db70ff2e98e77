#pragma once

#include <vector>

#include "stedq/tensor.hpp"

namespace stedq {

// ELU with a = 1.
Tensor elu(const Tensor& x);
/// Gradient of elu at `x` given the upstream gradient.
Tensor elu_backward(const Tensor& x, const Tensor& output_grad);
double elu(double x);
double elu_derivative(double x);

/// Logistic function, stable over the whole double range.
Tensor sigmoid(const Tensor& x);
/// Gradient through a sigmoid whose forward result was `y`.
Tensor sigmoid_backward(const Tensor& y, const Tensor& output_grad);
double sigmoid(double x);

enum class Mode { kTrain, kInfer };

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Per-channel running mean and (unbiased) variance.
struct RunningStats {
  Tensor mean;
  Tensor variance;

  static RunningStats fresh(std::size_t channels);
};

struct BatchNormCache {
  Mode mode = Mode::kTrain;
  Tensor normalized;            // x_hat, same shape as the input
  std::vector<double> inv_std;  // per channel
};

struct BatchNormResult {
  Tensor output;
  BatchNormCache cache;
};

/// Batch normalization over [batch, ch, ...]. Train mode normalizes with batch statistics
/// and updates `stats`; infer mode reads `stats` only. Train mode needs batch >= 2.
BatchNormResult batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta, RunningStats& stats,
                          Mode mode);

/// Gradients: input_grad, parameter_grads{"gamma","beta"}.
LayerGradients batchnorm_backward(const BatchNormCache& cache, const Tensor& gamma, const Tensor& output_grad);

struct LossResult {
  double value = 0.0;
  Tensor grad;
};

/// Mean squared error and its gradient with respect to `pred`.
LossResult mse_loss(const Tensor& pred, const Tensor& target);

}  // namespace stedq
