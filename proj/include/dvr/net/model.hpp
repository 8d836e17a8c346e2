#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dvr/frames.hpp"
#include "dvr/net/layers.hpp"

namespace dvr::nn {

enum class Variant { dvr2, dvr3, custom };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

/// Network input (frames, height, width, channels).
struct InputShape {
  std::size_t frames = 360;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 1;

  Volume volume() const { return Volume{frames, channels, height, width}; }
  bool operator==(const InputShape&) const = default;
};

struct DvrConfig {
  Variant variant = Variant::dvr3;
  InputShape input;
  std::size_t n_outputs = 1;
  /// Every filter and neuron count is divided by this (miniature networks).
  std::size_t width_divisor = 1;
  double fc_dropout = 0.15;
  std::vector<LayerSpec> layers;
};

/// The DVR3 layer table (nine convolutions, five pools and batchnorms, three
/// fully connected layers) or DVR2 with each (1,k,k)+(d,1,1) pair fused into a
/// single (d,k,k) convolution; a linear output head of `n_outputs` units follows FC3.
DvrConfig make_config(Variant variant, InputShape input, std::size_t n_outputs,
                      std::size_t width_divisor = 1, double fc_dropout = 0.15);

/// Shape of every layer output, in order (independent of weights).
std::vector<Volume> shape_chain(const DvrConfig& cfg);

class Model {
 public:
  /// He-normal weights, zero biases, deterministic in `seed`.
  Model(DvrConfig config, std::uint64_t seed);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const DvrConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t n_outputs() const { return config_.n_outputs; }
  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }

  /// [B x frames x H x W x C] batch (channel-minor frames) -> [B x n_outputs].
  Tensor forward(const Tensor& input, Mode mode);
  /// Back-propagates dL/d(output) of the last train-mode forward; parameter
  /// gradients accumulate until zero_grad().
  void backward(const Tensor& grad_output);
  void zero_grad();

  std::vector<Param*> params();
  std::vector<Param*> trainable_params();
  std::size_t count_params() const;

  /// Fixes dropout masks to identity (gradient checks).
  void freeze_dropout(bool frozen);

 private:
  DvrConfig config_;
  std::uint64_t seed_;
  std::vector<std::unique_ptr<Layer>> layers_;
  bool last_train_ = false;
};

/// Builds the canonical network: 360x32x32xC input.
Model build(Variant variant, std::size_t channels, std::size_t n_outputs, std::uint64_t seed);

std::size_t count_params(const Model& model);

/// Packs single-channel real frame sequences into a network input batch.
Tensor make_batch(const std::vector<const RealFrames*>& clips);

}  // namespace dvr::nn
