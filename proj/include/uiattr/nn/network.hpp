#pragma once

#include <memory>
#include <string>
#include <vector>

#include "uiattr/nn/layers.hpp"

namespace uiattr::nn {

/// Output head appended after the body layers.
struct Head {
  enum class Type { kNone, kClassification, kRegression };
  Type type = Type::kNone;
  /// Total output units (classes summed over groups for classification).
  int outputs = 0;
  /// Independent softmax groups of outputs / groups classes each.
  int groups = 1;

  static Head none() { return {}; }
  static Head classification(int classes, int groups = 1) {
    return {Type::kClassification, classes * groups, groups};
  }
  static Head regression(int outputs) { return {Type::kRegression, outputs, 1}; }

  bool operator==(const Head&) const = default;
};

/// Layer list + head for a per-sample input shape (C, H, W) or (F).
///
/// Text form, one directive per line:
///   input 3 48 96
///   conv3x3 8 / relu / batchnorm / maxpool2 / flatten / dense 256 / softmax 1
///   head classification 13 1 | head regression 1 | head none
struct ArchitectureSpec {
  Shape input;
  std::vector<LayerSpec> layers;
  Head head;

  /// Per-sample output shape; throws ShapeError when layers do not chain.
  Shape output_shape() const;
  std::string to_text() const;
  static ArchitectureSpec parse(const std::string& text);

  bool operator==(const ArchitectureSpec&) const = default;
};

/// conv3x3 -> relu -> batchnorm -> maxpool2 per entry. Pooling is dropped for
/// blocks whose input is already smaller than 2 in either spatial dimension.
std::vector<LayerSpec> conv_blocks(const Shape& input, const std::vector<int>& channels);

/// Prediction network: conv blocks, flatten, dense(hidden) -> relu, head.
ArchitectureSpec predictor_architecture(const Shape& input, const std::vector<int>& channels,
                                        int hidden, Head head);

class Network {
 public:
  Network() = default;
  explicit Network(ArchitectureSpec spec);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;
  Network(const Network& other);
  Network& operator=(const Network& other);

  const ArchitectureSpec& spec() const { return spec_; }
  void initialize(Rng& rng);

  /// Batched forward; classification heads return probabilities.
  const Tensor& forward(const Tensor& x, Mode mode);
  /// Forward excluding the final softmax (identical to forward() otherwise).
  const Tensor& forward_logits(const Tensor& x, Mode mode);
  /// Backpropagates a gradient with respect to the logits of the last
  /// forward; returns the gradient with respect to the input (empty when
  /// `input_gradient` is false, which skips that work).
  const Tensor& backward(const Tensor& dlogits, bool input_gradient = true);
  /// As backward() but `dy` refers to the softmax output.
  const Tensor& backward_through_softmax(const Tensor& dy, bool input_gradient = true);

  std::vector<Parameter*> parameters();
  std::vector<Tensor*> buffers();
  /// Parameters followed by buffers, in checkpoint order.
  std::vector<Tensor*> state();
  void zero_grad();
  std::size_t num_layers() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }

 private:
  void build();
  const Tensor& run(const Tensor& x, Mode mode, std::size_t end);
  const Tensor& run_backward(const Tensor& dy, std::size_t start, bool input_gradient);

  ArchitectureSpec spec_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::size_t softmax_index_ = 0;  // == layers_.size() when there is no softmax head
  std::vector<Tensor> acts_;
  std::vector<Tensor> grads_;
};

/// Two weight-sharing towers feeding a combiner and a classifier:
/// h = [hx; hr; hx + hr; hx - hr; hx * hr].
class SiameseNetwork {
 public:
  SiameseNetwork() = default;
  /// `encoder` must have no head; the classifier is dense(hidden) -> relu -> head.
  SiameseNetwork(ArchitectureSpec encoder, int hidden, Head head);
  SiameseNetwork(Network encoder, Network classifier);

  Network& encoder() { return encoder_; }
  Network& classifier() { return classifier_; }
  const Network& encoder() const { return encoder_; }
  const Network& classifier() const { return classifier_; }
  std::size_t feature_size() const;

  void initialize(Rng& rng);

  const Tensor& forward(const Tensor& a, const Tensor& b, Mode mode);
  const Tensor& forward_logits(const Tensor& a, const Tensor& b, Mode mode);
  void backward(const Tensor& dlogits);

  /// Eval-mode tower features, for caching one side across many calls.
  Tensor encode(const Tensor& x);
  /// Classifier probabilities from precomputed features (row counts must match).
  const Tensor& forward_features(const Tensor& hx, const Tensor& hr, Mode mode);

  /// The combined vector h for the last forward.
  const Tensor& combined() const { return h_; }

  std::vector<Parameter*> parameters();
  std::vector<Tensor*> buffers();
  std::vector<Tensor*> state();
  void zero_grad();

  std::string spec_text() const;

 private:
  void combine(const Tensor& hx, const Tensor& hr);
  const Tensor& run(const Tensor& a, const Tensor& b, Mode mode, bool logits);

  Network encoder_;
  Network classifier_;
  Tensor pair_, h_, hx_, hr_, dpair_;
  std::size_t batch_ = 0;
};

/// Copies body tensors from `src` to `dst` layer by layer while per-layer
/// shapes agree; stops at the first mismatch. Returns the number of layers copied.
std::size_t transfer_weights(Network& src, Network& dst);

}  // namespace uiattr::nn
