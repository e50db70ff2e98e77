#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stedq/kernels.hpp"
#include "stedq/layers.hpp"
#include "stedq/tensor.hpp"

namespace stedq {

inline constexpr std::size_t kConvLayers = 6;
inline constexpr std::size_t kDenseLayers = 2;

/// Architecture of the quality regressor: six conv blocks then two dense layers.
///
/// Layers are numbered 1..8 (conv1..conv6, fc1, fc2). Batch normalization follows
/// every layer whose number is >= `batchnorm_from_layer`, except the output layer.
struct NetworkConfig {
  std::size_t input_size = 224;
  std::vector<std::size_t> conv_channels{16, 32, 64, 64, 128, 128};
  std::size_t kernel_size = 3;
  Padding conv_padding = Padding::kSame;
  std::size_t pool_stride = 2;
  std::vector<std::size_t> dense_widths{128, 1};
  std::size_t batchnorm_from_layer = 2;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument (or ShapeError naming the layer) if unusable.
  void validate() const;
  /// Spatial extent entering conv1 followed by the extent after each block's pooling.
  std::vector<std::size_t> spatial_trace() const;
  std::size_t dense_input_width() const;
  bool has_batchnorm(std::size_t layer_number) const;

  std::string to_text() const;
  static NetworkConfig from_text(const std::string& text);

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Intermediate values of one forward pass, needed for backpropagation.
struct ForwardTrace {
  struct ConvBlock {
    Tensor input;
    Tensor pre_activation;  // conv (+ batch norm) output, fed to ELU
    bool has_bn = false;
    BatchNormCache bn;
    Shape pool_input_shape;
    std::vector<std::size_t> pool_argmax;
  };
  std::vector<ConvBlock> blocks;
  Tensor dense_input;     // flattened [batch, features]
  Tensor hidden_pre;      // fc1 (+ batch norm) output, fed to ELU
  bool hidden_has_bn = false;
  BatchNormCache hidden_bn;
  Tensor hidden;          // ELU(hidden_pre)
  Tensor output;          // sigmoid scores [batch, 1]
};

class Network {
 public:
  /// Builds and initializes parameters deterministically from `config.seed`.
  static Network build(const NetworkConfig& config);

  const NetworkConfig& config() const { return config_; }
  ParameterMap& parameters() { return parameters_; }
  const ParameterMap& parameters() const { return parameters_; }
  std::map<std::string, RunningStats>& running_stats() { return running_stats_; }
  const std::map<std::string, RunningStats>& running_stats() const { return running_stats_; }
  std::size_t parameter_count() const;

  /// Forward pass over [batch,1,s,s]. Train mode uses batch statistics and updates the
  /// running ones. Returns scores [batch,1]. `trace` is filled when non-null.
  Tensor forward(const Tensor& images, Mode mode, ForwardTrace* trace = nullptr);

  /// Parameter gradients given d(loss)/d(scores).
  ParameterMap backward(const ForwardTrace& trace, const Tensor& score_grad) const;

  /// Inference-mode scores in [0,1], one per image. Images must already be normalized.
  std::vector<double> predict(const Tensor& images) const;

 private:
  void check_input(const Tensor& images) const;
  // Infer mode with `stats == nullptr` works on copies of the running stats.
  Tensor run(const Tensor& images, Mode mode, ForwardTrace* trace,
             std::map<std::string, RunningStats>* stats) const;

  NetworkConfig config_;
  ParameterMap parameters_;
  std::map<std::string, RunningStats> running_stats_;
};

/// Parameter naming used by Network and checkpoints.
std::string conv_name(std::size_t layer_number);
std::string dense_name(std::size_t dense_index);

}  // namespace stedq
