#include "uiattr/policy.hpp"

#include <cmath>
#include <fstream>

#include "uiattr/nn/checkpoint.hpp"

namespace uiattr {

namespace fs = std::filesystem;
using nlohmann::json;

int policy_classes(AttributeKind kind, int clip) { return is_comparable(kind) ? 2 * clip + 1 : 2; }

int policy_groups(AttributeKind kind) { return delta_channels(kind); }

int delta_class(AttributeKind kind, int delta, int clip) {
  if (!is_comparable(kind)) {
    if (delta != 0 && delta != 1) throw std::invalid_argument("uncomparable delta must be 0 or 1");
    return delta;
  }
  if (delta < -clip || delta > clip) throw std::invalid_argument("delta outside [-clip, clip]");
  return delta + clip;
}

int class_delta(AttributeKind kind, int cls, int clip) { return is_comparable(kind) ? cls - clip : cls; }

KindSet PolicyBundle::kinds() const {
  KindSet s;
  for (auto k : kAllKinds) {
    if (policies[index_of(k)]) s.insert(k);
  }
  return s;
}

double DeltaDistribution::p_zero() const {
  // the zero class sits in the middle for deltas and first for equality flags
  double p = 1.0;
  for (const auto& g : groups) p *= g.size() == 2 ? g[0] : g[g.size() / 2];
  return p;
}

nn::ArchitectureSpec policy_encoder(int width, int height, const std::vector<int>& channels, int hidden) {
  auto spec = nn::predictor_architecture({3, static_cast<std::size_t>(height), static_cast<std::size_t>(width)},
                                         channels, hidden, nn::Head::none());
  return spec;
}

namespace {

class PairLearner final : public nn::Learner {
 public:
  PairLearner(KindPolicy& p, std::vector<Image> a, std::vector<Image> b)
      : p_(p), a_(std::move(a)), b_(std::move(b)) {}

  std::vector<nn::Parameter*> parameters() override { return p_.net.parameters(); }
  std::vector<nn::Tensor*> state() override { return p_.net.state(); }
  const nn::Tensor& forward(std::span<const std::size_t> samples, nn::Mode mode) override {
    const nn::Shape shape{samples.size(), 3, static_cast<std::size_t>(p_.input_height),
                          static_cast<std::size_t>(p_.input_width)};
    xa_.resize(shape);
    xb_.resize(shape);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      image_to_tensor(a_[samples[i]], xa_, i);
      image_to_tensor(b_[samples[i]], xb_, i);
    }
    return p_.net.forward_logits(xa_, xb_, mode);
  }
  void backward(const nn::Tensor& dlogits) override { p_.net.backward(dlogits); }

 private:
  KindPolicy& p_;
  std::vector<Image> a_, b_;
  nn::Tensor xa_, xb_;
};

DeltaDistribution split_groups(const nn::Tensor& probs, std::size_t row, int groups, int classes) {
  DeltaDistribution d;
  const std::size_t cols = probs.dim(1);
  for (int g = 0; g < groups; ++g) {
    const double* p = probs.data() + row * cols + static_cast<std::size_t>(g * classes);
    d.groups.emplace_back(p, p + classes);
  }
  return d;
}

}  // namespace

KindPolicy train_kind_policy(AttributeKind kind, const DeltaDataset& data, const PolicyTrainOptions& opt,
                             nn::TrainHistory* history, const nn::EpochCallback& on_epoch) {
  if (data.samples.size() < 2) throw std::invalid_argument("train_kind_policy: need at least 2 pairs");
  const int clip = data.clip;
  const int classes = policy_classes(kind, clip);
  const int groups = policy_groups(kind);

  KindPolicy p;
  if (opt.resume) {
    if (opt.resume->kind != kind || opt.resume->clip != clip) {
      throw std::invalid_argument("resumed policy does not match kind or clip");
    }
    p = *opt.resume;
  } else {
    p.kind = kind;
    p.clip = clip;
    p.input_width = data.samples.front().original.width();
    p.input_height = data.samples.front().original.height();
    p.padding = opt.padding;
    p.net = nn::SiameseNetwork(policy_encoder(p.input_width, p.input_height, opt.channels, opt.hidden), opt.hidden,
                               nn::Head::classification(classes, groups));
    Rng init(Rng::mix(opt.train.seed) ^ (0x100 + index_of(kind)));
    p.net.initialize(init);
    if (opt.init_from) nn::transfer_weights(*opt.init_from, p.net.encoder());
  }

  nn::Targets targets;
  targets.loss = nn::Targets::Loss::kCrossEntropy;
  targets.width = groups;
  std::vector<Image> a, b;
  a.reserve(data.samples.size());
  b.reserve(data.samples.size());
  for (const auto& s : data.samples) {
    a.push_back(prepare_input(s.original, p.input_width, p.input_height, p.padding));
    b.push_back(prepare_input(s.rendered, p.input_width, p.input_height, p.padding));
    for (int g = 0; g < groups; ++g) targets.classes.push_back(delta_class(kind, s.labels.at(kind, g), clip));
  }
  const auto [train_idx, val_idx] = nn::split_indices(data.samples.size(), opt.val_fraction, opt.train.seed);
  PairLearner learner(p, std::move(a), std::move(b));
  nn::TrainHistory h = nn::train(learner, targets, train_idx, val_idx, opt.train, on_epoch);
  if (history) *history = std::move(h);
  return p;
}

nn::Tensor encode_image(KindPolicy& p, const Image& image) {
  const Image in = prepare_input(image, p.input_width, p.input_height, p.padding);
  nn::Tensor x({1, 3, static_cast<std::size_t>(in.height()), static_cast<std::size_t>(in.width())});
  image_to_tensor(in, x, 0);
  return p.net.encode(x);
}

DeltaDistribution evaluate_policy_features(KindPolicy& p, const nn::Tensor& hx, const Image& rendered) {
  const nn::Tensor hr = encode_image(p, rendered);
  const nn::Tensor& probs = p.net.forward_features(hx, hr, nn::Mode::kEval);
  return split_groups(probs, 0, policy_groups(p.kind), policy_classes(p.kind, p.clip));
}

DeltaDistribution evaluate_policy(KindPolicy& p, const Image& original, const Image& rendered) {
  return evaluate_policy_features(p, encode_image(p, original), rendered);
}

// ----------------------------------------------------------------------------
// Persistence

namespace {

json policy_meta(const KindPolicy& p) {
  return {{"checkpoint", std::string(kind_name(p.kind)) + ".policy"},
          {"clip", p.clip},
          {"input", {p.input_width, p.input_height}},
          {"padding", padding_mode_name(p.padding)}};
}

json read_index(const fs::path& dir) {
  std::ifstream in(dir / "policies.json");
  if (!in) return json{{"clip", 5}, {"policies", json::object()}};
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupted policies.json in " + dir.string() + ": " + e.what());
  }
}

void write_index(const fs::path& dir, const json& j) {
  std::ofstream out(dir / "policies.json", std::ios::trunc);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write policies.json in " + dir.string());
}

}  // namespace

void save_kind_policy(KindPolicy& p, const fs::path& dir) {
  fs::create_directories(dir);
  nn::save_siamese(p.net, dir / (std::string(kind_name(p.kind)) + ".policy"));
  json j = read_index(dir);
  j["clip"] = p.clip;
  j["policies"][std::string(kind_name(p.kind))] = policy_meta(p);
  write_index(dir, j);
}

void save_policies(PolicyBundle& bundle, const fs::path& dir) {
  fs::create_directories(dir);
  json j{{"clip", bundle.clip}, {"policies", json::object()}};
  for (auto k : kAllKinds) {
    KindPolicy* p = bundle.find(k);
    if (!p) continue;
    if (p->clip != bundle.clip) throw std::invalid_argument("policy clip differs from bundle clip");
    nn::save_siamese(p->net, dir / (std::string(kind_name(k)) + ".policy"));
    j["policies"][std::string(kind_name(k))] = policy_meta(*p);
  }
  write_index(dir, j);
}

PolicyBundle load_policies(const fs::path& dir) {
  if (!fs::exists(dir / "policies.json")) throw std::runtime_error("no policies.json in " + dir.string());
  const json j = read_index(dir);
  PolicyBundle b;
  try {
    b.clip = j.at("clip").get<int>();
    for (const auto& [name, meta] : j.at("policies").items()) {
      const auto kind = parse_kind(name);
      if (!kind) throw std::runtime_error("policies.json lists unknown kind " + name);
      KindPolicy p;
      p.kind = *kind;
      p.clip = meta.at("clip").get<int>();
      if (p.clip != b.clip) throw std::runtime_error("policy " + name + " uses a different clip");
      p.input_width = meta.at("input").at(0).get<int>();
      p.input_height = meta.at("input").at(1).get<int>();
      p.padding = parse_padding_mode(meta.at("padding").get<std::string>());
      p.net = nn::load_siamese(dir / meta.at("checkpoint").get<std::string>());
      const auto out = p.net.classifier().spec().output_shape();
      const auto expect = static_cast<std::size_t>(policy_classes(p.kind, p.clip) * policy_groups(p.kind));
      if (out != nn::Shape{expect}) {
        throw std::runtime_error("policy for " + name + " has " + nn::shape_string(out) + " outputs, expected " +
                                 std::to_string(expect));
      }
      b.policies[index_of(*kind)] = std::move(p);
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed policies.json: " + std::string(e.what()));
  }
  return b;
}

}  // namespace uiattr
