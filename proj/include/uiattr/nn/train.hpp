#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "uiattr/nn/network.hpp"

namespace uiattr::nn {

struct TrainSpec {
  int epochs = 500;
  int patience = 15;
  int batch_size = 128;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double plateau_factor = 0.1;
  int plateau_patience = 5;
  /// Global gradient-norm bound; 0 disables clipping.
  double clip_norm = 0.0;
  std::uint64_t seed = 1;
};

void validate(const TrainSpec& spec);

/// Training targets for n samples.
struct Targets {
  enum class Loss { kCrossEntropy, kMse };
  Loss loss = Loss::kCrossEntropy;
  /// Softmax groups per sample (cross-entropy) or outputs per sample (mse).
  int width = 1;
  /// Class index per sample and group (cross-entropy).
  std::vector<int> classes;
  /// Target value per sample and output (mse).
  std::vector<double> values;

  std::size_t size() const;
};

/// Model plus the sample store it trains on. Batches are requested by index.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual std::vector<Parameter*> parameters() = 0;
  virtual std::vector<Tensor*> state() = 0;
  /// Forward on the given samples; returns logits (or regression outputs), one row per sample.
  virtual const Tensor& forward(std::span<const std::size_t> samples, Mode mode) = 0;
  virtual void backward(const Tensor& dlogits) = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  /// Fraction of validation predictions with the right class (cross-entropy only).
  double val_accuracy = 0.0;
  double learning_rate = 0.0;
  /// Largest global gradient norm after clipping seen during the epoch.
  double max_grad_norm = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  bool early_stopped = false;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mean loss over a batch and d(loss)/d(logits) (same shape as logits).
double loss_and_gradient(const Tensor& logits, const Targets& targets,
                         std::span<const std::size_t> samples, Tensor* dlogits);

/// Number of rows whose per-group argmax matches the target class, summed over groups.
std::size_t count_correct(const Tensor& logits, const Targets& targets,
                          std::span<const std::size_t> samples);

/// Scales all gradients so their global L2 norm is at most `max_norm`; returns the post-clip norm.
double clip_gradients(std::span<Parameter* const> params, double max_norm);
double gradient_norm(std::span<Parameter* const> params);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Minibatch SGD with momentum, plateau decay and early stopping on
/// validation loss. On return the learner holds the best-validation weights.
/// Throws TrainingError on a non-finite loss.
TrainHistory train(Learner& learner, const Targets& targets, std::span<const std::size_t> train_idx,
                   std::span<const std::size_t> val_idx, const TrainSpec& spec,
                   const EpochCallback& on_epoch = {});

/// Deterministic split of [0, n) into (train, validation) index lists.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                            double val_fraction,
                                                                            std::uint64_t seed);

}  // namespace uiattr::nn
