#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "uiattr/nn/tensor.hpp"
#include "uiattr/rng.hpp"

namespace uiattr::nn {

enum class Mode { kTrain, kEval };

enum class LayerType { kConv3x3, kRelu, kBatchNorm, kMaxPool2, kFlatten, kDense, kSoftmax };

struct LayerSpec {
  LayerType type;
  /// Output channels (conv3x3) or units (dense); softmax group count.
  int units = 0;

  bool operator==(const LayerSpec&) const = default;
};

/// A differentiable layer operating on a leading batch dimension.
///
/// forward() caches whatever backward() needs; backward() accumulates into the
/// parameter gradients and returns the gradient with respect to the input of
/// the most recent forward(). Layers may keep a pointer to the forward input,
/// so it must stay alive and unmodified until backward() returns.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerSpec spec() const = 0;
  /// Per-sample output shape for a per-sample input shape.
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual void forward(const Tensor& x, Tensor& y, Mode mode) = 0;
  virtual void backward(const Tensor& dy, Tensor& dx) = 0;

  virtual std::vector<Parameter*> parameters() { return {}; }
  /// Non-trainable state that belongs in checkpoints (batchnorm running stats).
  virtual std::vector<Tensor*> buffers() { return {}; }
  virtual void initialize(Rng& /*rng*/) {}

  /// When false, backward() may leave dx empty (first layer during training).
  void set_input_gradient(bool on) { input_gradient_ = on; }
  bool input_gradient() const { return input_gradient_; }

 private:
  bool input_gradient_ = true;
};

/// Builds a layer for a per-sample input shape; throws ShapeError when they do not chain.
std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const Shape& in);

/// 3x3 convolution, stride 1, zero padding 1.
class Conv3x3 final : public Layer {
 public:
  Conv3x3(std::size_t in_channels, std::size_t out_channels);
  LayerSpec spec() const override { return {LayerType::kConv3x3, static_cast<int>(out_)}; }
  Shape output_shape(const Shape& in) const override;
  void forward(const Tensor& x, Tensor& y, Mode mode) override;
  void backward(const Tensor& dy, Tensor& dx) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  void initialize(Rng& rng) override;

 private:
  std::size_t in_, out_;
  Parameter weight_;  // out x (in * 9)
  Parameter bias_;
  const Tensor* input_ = nullptr;
  std::vector<double> col_;
};

class Relu final : public Layer {
 public:
  LayerSpec spec() const override { return {LayerType::kRelu, 0}; }
  Shape output_shape(const Shape& in) const override { return in; }
  void forward(const Tensor& x, Tensor& y, Mode mode) override;
  void backward(const Tensor& dy, Tensor& dx) override;

 private:
  std::vector<std::uint8_t> active_;
  Shape shape_;
};

/// Per-channel batch normalization with learned scale and shift. Works on
/// (N, C, H, W) and on (N, F) inputs.
class BatchNorm final : public Layer {
 public:
  explicit BatchNorm(std::size_t channels);
  LayerSpec spec() const override { return {LayerType::kBatchNorm, 0}; }
  Shape output_shape(const Shape& in) const override { return in; }
  void forward(const Tensor& x, Tensor& y, Mode mode) override;
  void backward(const Tensor& dy, Tensor& dx) override;
  std::vector<Parameter*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<Tensor*> buffers() override { return {&running_mean_, &running_var_}; }

  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.1;

  /// Normalized activations of the last training-mode forward (before scale/shift).
  const Tensor& normalized() const { return xhat_; }

 private:
  std::size_t channels_;
  Parameter gamma_, beta_;
  Tensor running_mean_, running_var_;
  Tensor xhat_;
  std::vector<double> inv_std_;
  Mode last_mode_ = Mode::kEval;
};

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
class MaxPool2 final : public Layer {
 public:
  LayerSpec spec() const override { return {LayerType::kMaxPool2, 0}; }
  Shape output_shape(const Shape& in) const override;
  void forward(const Tensor& x, Tensor& y, Mode mode) override;
  void backward(const Tensor& dy, Tensor& dx) override;

 private:
  std::vector<std::size_t> argmax_;
  Shape in_shape_;
};

class Flatten final : public Layer {
 public:
  LayerSpec spec() const override { return {LayerType::kFlatten, 0}; }
  Shape output_shape(const Shape& in) const override { return {shape_size(in)}; }
  void forward(const Tensor& x, Tensor& y, Mode mode) override;
  void backward(const Tensor& dy, Tensor& dx) override;

 private:
  Shape in_shape_;
};

class Dense final : public Layer {
 public:
  Dense(std::size_t in, std::size_t out);
  LayerSpec spec() const override { return {LayerType::kDense, static_cast<int>(out_)}; }
  Shape output_shape(const Shape& in) const override;
  void forward(const Tensor& x, Tensor& y, Mode mode) override;
  void backward(const Tensor& dy, Tensor& dx) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  void initialize(Rng& rng) override;

 private:
  std::size_t in_, out_;
  Parameter weight_;  // out x in
  Parameter bias_;
  const Tensor* input_ = nullptr;
};

/// Softmax over `groups` equal, contiguous slices of the feature vector.
class Softmax final : public Layer {
 public:
  explicit Softmax(int groups = 1) : groups_(groups) {}
  LayerSpec spec() const override { return {LayerType::kSoftmax, groups_}; }
  Shape output_shape(const Shape& in) const override;
  void forward(const Tensor& x, Tensor& y, Mode mode) override;
  void backward(const Tensor& dy, Tensor& dx) override;

  static void apply(const double* x, double* y, std::size_t n);

 private:
  int groups_;
  Tensor output_;
};

}  // namespace uiattr::nn
