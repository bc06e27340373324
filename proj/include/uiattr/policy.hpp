#pragma once

// Per-attribute delta policies: siamese networks that look at the original
// image and a rendering of the current guess and predict the clipped change
// that makes the two agree.

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

#include "uiattr/attributes.hpp"
#include "uiattr/dataset.hpp"
#include "uiattr/image.hpp"
#include "uiattr/nn/network.hpp"
#include "uiattr/nn/train.hpp"
#include "uiattr/predictor.hpp"

namespace uiattr {

/// Classes per softmax group: 2c + 1 deltas for comparable kinds, {equal, unequal} otherwise.
int policy_classes(AttributeKind kind, int clip);
/// Softmax groups: one per color channel, one otherwise.
int policy_groups(AttributeKind kind);

/// Class index of a delta (comparable: delta + clip; uncomparable: the 0/1 flag).
int delta_class(AttributeKind kind, int delta, int clip);
int class_delta(AttributeKind kind, int cls, int clip);

struct KindPolicy {
  AttributeKind kind = AttributeKind::kTextSize;
  int clip = 5;
  int input_width = 96;
  int input_height = 48;
  PaddingMode padding = PaddingMode::kEdge;
  nn::SiameseNetwork net;
};

struct PolicyBundle {
  std::array<std::optional<KindPolicy>, kNumKinds> policies;
  int clip = 5;

  KindPolicy* find(AttributeKind k) { return policies[index_of(k)] ? &*policies[index_of(k)] : nullptr; }
  KindSet kinds() const;
};

/// Per-group class distributions of one policy for one pair.
struct DeltaDistribution {
  std::vector<std::vector<double>> groups;
  /// Probability that no change is needed (product over groups of the zero class).
  double p_zero() const;
};

struct PolicyTrainOptions {
  std::vector<int> channels = {8, 8, 16, 16, 32, 32};
  int hidden = 256;
  nn::TrainSpec train = [] {
    nn::TrainSpec t;
    t.batch_size = 64;
    t.clip_norm = 3.0;
    return t;
  }();
  double val_fraction = 0.2;
  PaddingMode padding = PaddingMode::kEdge;
  /// Encoder initialization from a prediction network of the same body, when given.
  nn::Network* init_from = nullptr;
  /// Continue training this policy instead of a fresh one (DAgger rounds).
  KindPolicy* resume = nullptr;
};

/// Siamese encoder body matching the prediction network up to its hidden layer.
nn::ArchitectureSpec policy_encoder(int width, int height, const std::vector<int>& channels, int hidden);

KindPolicy train_kind_policy(AttributeKind kind, const DeltaDataset& data, const PolicyTrainOptions& options,
                             nn::TrainHistory* history = nullptr, const nn::EpochCallback& on_epoch = {});

/// Policy output for a single (original, rendered) pair.
DeltaDistribution evaluate_policy(KindPolicy& policy, const Image& original, const Image& rendered);

/// Same, with the original already encoded by policy.net.encode().
DeltaDistribution evaluate_policy_features(KindPolicy& policy, const nn::Tensor& original_features,
                                           const Image& rendered);

/// Encoder features of one image as prepared for `policy`.
nn::Tensor encode_image(KindPolicy& policy, const Image& image);

// Persistence: <dir>/policies.json plus one checkpoint per kind.
void save_policies(PolicyBundle& bundle, const std::filesystem::path& dir);
void save_kind_policy(KindPolicy& policy, const std::filesystem::path& dir);
PolicyBundle load_policies(const std::filesystem::path& dir);

}  // namespace uiattr
