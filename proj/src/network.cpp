#include "stedq/network.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "stedq/text.hpp"

namespace stedq {

std::string conv_name(std::size_t layer_number) { return "conv" + std::to_string(layer_number); }
std::string dense_name(std::size_t dense_index) { return "fc" + std::to_string(dense_index); }

void NetworkConfig::validate() const {
  if (conv_channels.size() != kConvLayers)
    throw std::invalid_argument("network needs exactly 6 conv layers, got " + std::to_string(conv_channels.size()));
  if (dense_widths.size() != kDenseLayers)
    throw std::invalid_argument("network needs exactly 2 dense layers, got " + std::to_string(dense_widths.size()));
  if (dense_widths[1] != 1) throw std::invalid_argument("final dense width must be 1");
  for (auto c : conv_channels)
    if (c == 0) throw std::invalid_argument("conv channel counts must be positive");
  if (dense_widths[0] == 0) throw std::invalid_argument("dense widths must be positive");
  if (kernel_size == 0 || kernel_size % 2 == 0) throw std::invalid_argument("kernel size must be odd and positive");
  if (pool_stride != 1 && pool_stride != 2) throw std::invalid_argument("pool stride must be 1 or 2");
  if (input_size == 0) throw std::invalid_argument("input size must be positive");
  if (batchnorm_from_layer == 0) throw std::invalid_argument("batchnorm_from_layer is 1-based");
  spatial_trace();
}

std::vector<std::size_t> NetworkConfig::spatial_trace() const {
  std::vector<std::size_t> trace{input_size};
  std::size_t extent = input_size;
  for (std::size_t layer = 1; layer <= kConvLayers; ++layer) {
    const std::size_t padded = extent + 2 * padding_amount(conv_padding, kernel_size);
    if (padded < kernel_size)
      throw ShapeError("conv layer " + std::to_string(layer) + ": spatial size " + std::to_string(extent) +
                       " is too small for kernel " + std::to_string(kernel_size));
    extent = padded - kernel_size + 1;
    if (extent < 2)
      throw ShapeError("conv layer " + std::to_string(layer) + ": spatial size " + std::to_string(extent) +
                       " is too small for 2x2 pooling");
    extent = (extent - 2) / pool_stride + 1;
    trace.push_back(extent);
  }
  return trace;
}

std::size_t NetworkConfig::dense_input_width() const {
  const std::size_t s = spatial_trace().back();
  return s * s * conv_channels.back();
}

bool NetworkConfig::has_batchnorm(std::size_t layer_number) const {
  return layer_number >= batchnorm_from_layer && layer_number < kConvLayers + kDenseLayers;
}

std::string NetworkConfig::to_text() const {
  KeyValueText kv;
  kv.set("input_size", std::to_string(input_size));
  kv.set("conv_channels", join_sizes(conv_channels));
  kv.set("kernel_size", std::to_string(kernel_size));
  kv.set("conv_padding", conv_padding == Padding::kSame ? "same" : "valid");
  kv.set("pool_stride", std::to_string(pool_stride));
  kv.set("dense_widths", join_sizes(dense_widths));
  kv.set("batchnorm_from_layer", std::to_string(batchnorm_from_layer));
  kv.set("seed", std::to_string(seed));
  return kv.str();
}

NetworkConfig NetworkConfig::from_text(const std::string& text) {
  const auto kv = KeyValueText::parse(text);
  NetworkConfig c;
  c.input_size = parse_uint(kv.get("input_size"));
  c.conv_channels = parse_size_list(kv.get("conv_channels"));
  c.kernel_size = parse_uint(kv.get("kernel_size"));
  const auto& padding = kv.get("conv_padding");
  if (padding == "same")
    c.conv_padding = Padding::kSame;
  else if (padding == "valid")
    c.conv_padding = Padding::kValid;
  else
    throw std::invalid_argument("unknown conv_padding '" + padding + "'");
  c.pool_stride = parse_uint(kv.get("pool_stride"));
  c.dense_widths = parse_size_list(kv.get("dense_widths"));
  c.batchnorm_from_layer = parse_uint(kv.get("batchnorm_from_layer"));
  c.seed = parse_uint(kv.get("seed"));
  c.validate();
  return c;
}

namespace {

// Uniform in +-sqrt(6 / fan_in) for ELU layers, +-sqrt(3 / fan_in) for the sigmoid head.
Tensor uniform_init(Shape shape, std::size_t fan_in, bool head, std::mt19937_64& rng) {
  const double bound = std::sqrt((head ? 3.0 : 6.0) / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace

Network Network::build(const NetworkConfig& config) {
  config.validate();
  Network net;
  net.config_ = config;
  std::mt19937_64 rng(config.seed);
  const std::size_t k = config.kernel_size;

  std::size_t in_ch = 1;
  for (std::size_t layer = 1; layer <= kConvLayers; ++layer) {
    const std::size_t out_ch = config.conv_channels[layer - 1];
    const auto name = conv_name(layer);
    net.parameters_[name + ".kernels"] = uniform_init({out_ch, in_ch, k, k}, in_ch * k * k, false, rng);
    net.parameters_[name + ".bias"] = Tensor({out_ch});
    if (config.has_batchnorm(layer)) {
      net.parameters_[name + ".gamma"] = Tensor({out_ch}, 1.0);
      net.parameters_[name + ".beta"] = Tensor({out_ch});
      net.running_stats_[name] = RunningStats::fresh(out_ch);
    }
    in_ch = out_ch;
  }

  const std::size_t features = config.dense_input_width();
  const std::size_t hidden = config.dense_widths[0];
  net.parameters_[dense_name(1) + ".weights"] = uniform_init({hidden, features}, features, false, rng);
  net.parameters_[dense_name(1) + ".bias"] = Tensor({hidden});
  if (config.has_batchnorm(kConvLayers + 1)) {
    net.parameters_[dense_name(1) + ".gamma"] = Tensor({hidden}, 1.0);
    net.parameters_[dense_name(1) + ".beta"] = Tensor({hidden});
    net.running_stats_[dense_name(1)] = RunningStats::fresh(hidden);
  }
  net.parameters_[dense_name(2) + ".weights"] = uniform_init({1, hidden}, hidden, true, rng);
  net.parameters_[dense_name(2) + ".bias"] = Tensor({1});
  return net;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : parameters_) n += t.size();
  return n;
}

void Network::check_input(const Tensor& images) const {
  const std::size_t s = config_.input_size;
  if (images.rank() != 4 || images.dim(1) != 1 || images.dim(2) != s || images.dim(3) != s)
    throw ShapeError("network expects images of shape [batch,1," + std::to_string(s) + "," + std::to_string(s) +
                     "], got " + to_string(images.shape()));
}

Tensor Network::forward(const Tensor& images, Mode mode, ForwardTrace* trace) {
  return run(images, mode, trace, &running_stats_);
}

Tensor Network::run(const Tensor& images, Mode mode, ForwardTrace* trace,
                    std::map<std::string, RunningStats>* stats) const {
  check_input(images);
  if (mode == Mode::kTrain && stats == nullptr) throw std::logic_error("train mode needs writable running stats");
  auto stats_for = [&](const std::string& name) -> RunningStats {
    return running_stats_.at(name);
  };
  if (trace) *trace = ForwardTrace{};
  Tensor x = images;

  for (std::size_t layer = 1; layer <= kConvLayers; ++layer) {
    const auto name = conv_name(layer);
    ForwardTrace::ConvBlock block;
    Tensor z = conv2d(x, parameters_.at(name + ".kernels"), parameters_.at(name + ".bias"), config_.conv_padding);
    if (config_.has_batchnorm(layer)) {
      RunningStats frozen;
      RunningStats& rs = stats ? stats->at(name) : (frozen = stats_for(name));
      auto bn = batchnorm(z, parameters_.at(name + ".gamma"), parameters_.at(name + ".beta"), rs, mode);
      z = std::move(bn.output);
      block.has_bn = true;
      block.bn = std::move(bn.cache);
    }
    Tensor a = elu(z);
    auto pooled = maxpool2d(a, config_.pool_stride);
    if (trace) {
      block.input = std::move(x);
      block.pre_activation = std::move(z);
      block.pool_input_shape = a.shape();
      block.pool_argmax = std::move(pooled.argmax);
      trace->blocks.push_back(std::move(block));
    }
    x = std::move(pooled.output);
  }

  const std::size_t batch = images.dim(0);
  Tensor flat = x.reshaped({batch, x.size() / batch});
  Tensor h = dense(flat, parameters_.at(dense_name(1) + ".weights"), parameters_.at(dense_name(1) + ".bias"));
  BatchNormCache hidden_cache;
  const bool hidden_bn = config_.has_batchnorm(kConvLayers + 1);
  if (hidden_bn) {
    RunningStats frozen;
    RunningStats& rs = stats ? stats->at(dense_name(1)) : (frozen = stats_for(dense_name(1)));
    auto bn = batchnorm(h, parameters_.at(dense_name(1) + ".gamma"), parameters_.at(dense_name(1) + ".beta"), rs,
                        mode);
    h = std::move(bn.output);
    hidden_cache = std::move(bn.cache);
  }
  Tensor hidden = elu(h);
  Tensor logits = dense(hidden, parameters_.at(dense_name(2) + ".weights"), parameters_.at(dense_name(2) + ".bias"));
  Tensor scores = sigmoid(logits);
  if (!scores.all_finite()) throw NumericError("network produced non-finite scores");

  if (trace) {
    trace->dense_input = std::move(flat);
    trace->hidden_pre = std::move(h);
    trace->hidden_has_bn = hidden_bn;
    trace->hidden_bn = std::move(hidden_cache);
    trace->hidden = std::move(hidden);
    trace->output = scores;
  }
  return scores;
}

ParameterMap Network::backward(const ForwardTrace& trace, const Tensor& score_grad) const {
  if (score_grad.shape() != trace.output.shape())
    throw ShapeError("score gradient shape " + to_string(score_grad.shape()) + " does not match scores " +
                     to_string(trace.output.shape()));
  ParameterMap grads;
  auto take = [&grads](const std::string& prefix, LayerGradients& lg) {
    for (auto& [k, v] : lg.parameter_grads) grads[prefix + "." + k] = std::move(v);
  };

  Tensor g = sigmoid_backward(trace.output, score_grad);
  auto fc2 = dense_backward(trace.hidden, parameters_.at(dense_name(2) + ".weights"), g);
  take(dense_name(2), fc2);
  g = elu_backward(trace.hidden_pre, fc2.input_grad);
  if (trace.hidden_has_bn) {
    auto bn = batchnorm_backward(trace.hidden_bn, parameters_.at(dense_name(1) + ".gamma"), g);
    take(dense_name(1), bn);
    g = std::move(bn.input_grad);
  }
  auto fc1 = dense_backward(trace.dense_input, parameters_.at(dense_name(1) + ".weights"), g);
  take(dense_name(1), fc1);
  g = std::move(fc1.input_grad);

  for (std::size_t i = trace.blocks.size(); i-- > 0;) {
    const auto& block = trace.blocks[i];
    const auto name = conv_name(i + 1);
    Shape pooled_shape = block.pool_input_shape;
    const std::size_t stride = config_.pool_stride;
    pooled_shape[2] = pool_output_extent(pooled_shape[2], 2, stride);
    pooled_shape[3] = pool_output_extent(pooled_shape[3], 2, stride);
    g = maxpool2d_backward(block.pool_input_shape, block.pool_argmax, g.reshaped(pooled_shape));
    g = elu_backward(block.pre_activation, g);
    if (block.has_bn) {
      auto bn = batchnorm_backward(block.bn, parameters_.at(name + ".gamma"), g);
      take(name, bn);
      g = std::move(bn.input_grad);
    }
    auto conv = conv2d_backward(block.input, parameters_.at(name + ".kernels"), g, config_.conv_padding);
    take(name, conv);
    g = std::move(conv.input_grad);
  }
  return grads;
}

std::vector<double> Network::predict(const Tensor& images) const {
  return run(images, Mode::kInfer, nullptr, nullptr).values();
}

}  // namespace stedq
