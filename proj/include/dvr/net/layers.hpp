#pragma once

#include <array>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dvr/net/tensor.hpp"

namespace dvr::nn {

enum class LayerKind { conv3d, maxpool3d, batchnorm, dense, dropout, flatten };
enum class Activation { linear, relu, tanh };
enum class Mode { train, eval };

std::string to_string(LayerKind k);
std::string to_string(Activation a);
LayerKind parse_layer_kind(const std::string& s);
Activation parse_activation(const std::string& s);

using Triple = std::array<std::size_t, 3>;  ///< (depth, height, width)

struct LayerSpec {
  LayerKind kind = LayerKind::conv3d;
  std::string name;
  std::size_t units = 0;       ///< filters (conv3d) or neurons (dense)
  Triple kernel{1, 1, 1};      ///< conv kernel or pool window
  Triple stride{1, 1, 1};      ///< pool stride (convolutions use stride 1)
  Activation activation = Activation::linear;
  double dropout_rate = 0.0;

  bool operator==(const LayerSpec&) const = default;
};

class Layer {
 public:
  explicit Layer(LayerSpec spec) : spec_(std::move(spec)) {}
  virtual ~Layer() = default;

  const LayerSpec& spec() const { return spec_; }
  virtual Volume output_shape(const Volume& in) const = 0;

  /// Forward pass. In train mode the layer keeps what backward needs.
  virtual void forward(const Tensor& in, Tensor& out, Mode mode) = 0;
  /// Accumulates parameter gradients; writes dL/d(input) when `grad_in` is set.
  virtual void backward(const Tensor& grad_out, Tensor* grad_in) = 0;

  virtual std::vector<Param*> params() { return {}; }

 protected:
  LayerSpec spec_;
};

/// Stride-1 3-D convolution with "same" padding (pad_before = (k-1)/2).
class Conv3d final : public Layer {
 public:
  Conv3d(LayerSpec spec, std::size_t in_channels);
  Volume output_shape(const Volume& in) const override;
  void forward(const Tensor& in, Tensor& out, Mode mode) override;
  void backward(const Tensor& grad_out, Tensor* grad_in) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  std::size_t in_channels() const { return in_channels_; }

 private:
  std::size_t in_channels_;
  Param weight_;  ///< [out][kd][in][kh][kw]
  Param bias_;
  Volume in_shape_{};
  std::size_t batch_ = 0;
  std::vector<Scalar> columns_;  ///< per-sample spatial im2col of the input
  Tensor output_;                ///< post-activation output (train mode)
};

/// Max pooling with window == stride; partial windows at the far edge are kept.
class MaxPool3d final : public Layer {
 public:
  explicit MaxPool3d(LayerSpec spec) : Layer(std::move(spec)) {}
  Volume output_shape(const Volume& in) const override;
  void forward(const Tensor& in, Tensor& out, Mode mode) override;
  void backward(const Tensor& grad_out, Tensor* grad_in) override;

 private:
  Volume in_shape_{};
  std::size_t batch_ = 0;
  std::vector<std::size_t> argmax_;
};

/// Per-channel batch normalization over (batch, depth, height, width).
class BatchNorm final : public Layer {
 public:
  BatchNorm(LayerSpec spec, std::size_t channels);
  Volume output_shape(const Volume& in) const override { return in; }
  void forward(const Tensor& in, Tensor& out, Mode mode) override;
  void backward(const Tensor& grad_out, Tensor* grad_in) override;
  std::vector<Param*> params() override { return {&gamma_, &beta_, &running_mean_, &running_var_}; }

  static constexpr Scalar kEpsilon = 1e-5;
  static constexpr Scalar kMomentum = 0.9;

 private:
  Param gamma_, beta_, running_mean_, running_var_;
  Volume shape_{};
  std::size_t batch_ = 0;
  std::vector<Scalar> xhat_;
  std::vector<Scalar> inv_std_;
};

class Dense final : public Layer {
 public:
  Dense(LayerSpec spec, std::size_t in_features);
  Volume output_shape(const Volume& in) const override;
  void forward(const Tensor& in, Tensor& out, Mode mode) override;
  void backward(const Tensor& grad_out, Tensor* grad_in) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }

 private:
  std::size_t in_features_;
  Param weight_;  ///< [out][in]
  Param bias_;
  Tensor input_;
  Tensor output_;
};

/// Inverted dropout; identity in eval mode.
class Dropout final : public Layer {
 public:
  Dropout(LayerSpec spec, std::uint64_t seed);
  Volume output_shape(const Volume& in) const override { return in; }
  void forward(const Tensor& in, Tensor& out, Mode mode) override;
  void backward(const Tensor& grad_out, Tensor* grad_in) override;

  /// Disables mask sampling (used by gradient checks).
  void freeze(bool frozen) { frozen_ = frozen; }

 private:
  std::mt19937_64 rng_;
  std::vector<Scalar> mask_;
  bool frozen_ = false;
};

class Flatten final : public Layer {
 public:
  explicit Flatten(LayerSpec spec) : Layer(std::move(spec)) {}
  Volume output_shape(const Volume& in) const override { return Volume{1, in.size(), 1, 1}; }
  void forward(const Tensor& in, Tensor& out, Mode mode) override;
  void backward(const Tensor& grad_out, Tensor* grad_in) override;

 private:
  Volume in_shape_{};
};

/// Output extent of a "same"-padded pooling axis: ceil(n / stride).
std::size_t pooled_extent(std::size_t n, std::size_t stride);

}  // namespace dvr::nn
