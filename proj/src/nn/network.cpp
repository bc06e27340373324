#include "uiattr/nn/network.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace uiattr::nn {
namespace {

const char* layer_keyword(LayerType t) {
  switch (t) {
    case LayerType::kConv3x3: return "conv3x3";
    case LayerType::kRelu: return "relu";
    case LayerType::kBatchNorm: return "batchnorm";
    case LayerType::kMaxPool2: return "maxpool2";
    case LayerType::kFlatten: return "flatten";
    case LayerType::kDense: return "dense";
    case LayerType::kSoftmax: return "softmax";
  }
  return "?";
}

bool has_units(LayerType t) {
  return t == LayerType::kConv3x3 || t == LayerType::kDense || t == LayerType::kSoftmax;
}

std::vector<LayerSpec> with_head(const ArchitectureSpec& spec) {
  std::vector<LayerSpec> all = spec.layers;
  if (spec.head.type == Head::Type::kClassification) {
    all.push_back({LayerType::kDense, spec.head.outputs});
    all.push_back({LayerType::kSoftmax, spec.head.groups});
  } else if (spec.head.type == Head::Type::kRegression) {
    all.push_back({LayerType::kDense, spec.head.outputs});
  }
  return all;
}

void copy_tensor_values(const Tensor& from, Tensor& to) {
  if (from.shape() != to.shape()) {
    throw ShapeError("tensor copy " + shape_string(from.shape()) + " -> " + shape_string(to.shape()));
  }
  std::copy(from.data(), from.data() + from.size(), to.data());
}

}  // namespace

// ---------------------------------------------------------------------------
// ArchitectureSpec

Shape ArchitectureSpec::output_shape() const {
  if (input.empty()) throw ShapeError("architecture has no input shape");
  if (head.type == Head::Type::kClassification &&
      (head.groups < 1 || head.outputs < head.groups || head.outputs % head.groups != 0)) {
    throw ShapeError("classification head outputs must split evenly into groups");
  }
  if (head.type != Head::Type::kNone && head.outputs < 1) throw ShapeError("head needs outputs");
  Shape s = input;
  for (const LayerSpec& l : with_head(*this)) s = make_layer(l, s)->output_shape(s);
  return s;
}

std::string ArchitectureSpec::to_text() const {
  std::ostringstream out;
  out << "input";
  for (std::size_t d : input) out << ' ' << d;
  out << '\n';
  for (const LayerSpec& l : layers) {
    out << layer_keyword(l.type);
    if (has_units(l.type)) out << ' ' << l.units;
    out << '\n';
  }
  switch (head.type) {
    case Head::Type::kNone: out << "head none\n"; break;
    case Head::Type::kClassification:
      out << "head classification " << head.outputs / head.groups << ' ' << head.groups << '\n';
      break;
    case Head::Type::kRegression: out << "head regression " << head.outputs << '\n'; break;
  }
  return out.str();
}

ArchitectureSpec ArchitectureSpec::parse(const std::string& text) {
  ArchitectureSpec spec;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool saw_head = false;
  auto fail = [&](const std::string& msg) {
    throw std::invalid_argument("architecture line " + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word) || word[0] == '#') continue;
    if (saw_head) fail("directive after head");
    if (word == "input") {
      std::size_t d;
      while (ls >> d) spec.input.push_back(d);
      if (spec.input.empty() || spec.input.size() > 3) fail("input needs 1 to 3 dims");
      continue;
    }
    if (word == "head") {
      std::string kind;
      ls >> kind;
      if (kind == "none") {
        spec.head = Head::none();
      } else if (kind == "classification") {
        int classes = 0, groups = 1;
        if (!(ls >> classes)) fail("classification needs a class count");
        ls >> groups;
        spec.head = Head::classification(classes, groups);
      } else if (kind == "regression") {
        int n = 0;
        if (!(ls >> n)) fail("regression needs an output count");
        spec.head = Head::regression(n);
      } else {
        fail("unknown head '" + kind + "'");
      }
      saw_head = true;
      continue;
    }
    LayerSpec l{};
    bool found = false;
    for (LayerType t : {LayerType::kConv3x3, LayerType::kRelu, LayerType::kBatchNorm,
                        LayerType::kMaxPool2, LayerType::kFlatten, LayerType::kDense,
                        LayerType::kSoftmax}) {
      if (word == layer_keyword(t)) {
        l.type = t;
        found = true;
      }
    }
    if (!found) fail("unknown layer '" + word + "'");
    if (has_units(l.type) && !(ls >> l.units)) fail(word + " needs a size");
    spec.layers.push_back(l);
  }
  if (!saw_head) throw std::invalid_argument("architecture has no head line");
  spec.output_shape();
  return spec;
}

std::vector<LayerSpec> conv_blocks(const Shape& input, const std::vector<int>& channels) {
  if (input.size() != 3) throw ShapeError("conv blocks need a (C,H,W) input");
  std::vector<LayerSpec> out;
  std::size_t h = input[1], w = input[2];
  for (int c : channels) {
    out.push_back({LayerType::kConv3x3, c});
    out.push_back({LayerType::kRelu, 0});
    out.push_back({LayerType::kBatchNorm, 0});
    if (h >= 2 && w >= 2) {
      out.push_back({LayerType::kMaxPool2, 0});
      h /= 2;
      w /= 2;
    }
  }
  return out;
}

ArchitectureSpec predictor_architecture(const Shape& input, const std::vector<int>& channels,
                                        int hidden, Head head) {
  ArchitectureSpec spec;
  spec.input = input;
  spec.layers = conv_blocks(input, channels);
  spec.layers.push_back({LayerType::kFlatten, 0});
  spec.layers.push_back({LayerType::kDense, hidden});
  spec.layers.push_back({LayerType::kRelu, 0});
  spec.head = head;
  spec.output_shape();
  return spec;
}

// ---------------------------------------------------------------------------
// Network

Network::Network(ArchitectureSpec spec) : spec_(std::move(spec)) { build(); }

Network::Network(const Network& other) : spec_(other.spec_) {
  build();
  auto src = const_cast<Network&>(other).state();
  auto dst = state();
  for (std::size_t i = 0; i < src.size(); ++i) copy_tensor_values(*src[i], *dst[i]);
}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void Network::build() {
  spec_.output_shape();
  layers_.clear();
  Shape s = spec_.input;
  for (const LayerSpec& l : with_head(spec_)) {
    layers_.push_back(make_layer(l, s));
    s = layers_.back()->output_shape(s);
  }
  softmax_index_ = layers_.size();
  if (spec_.head.type == Head::Type::kClassification) softmax_index_ = layers_.size() - 1;
  acts_.assign(layers_.size(), Tensor());
  grads_.assign(layers_.size(), Tensor());
}

void Network::initialize(Rng& rng) {
  for (auto& l : layers_) l->initialize(rng);
}

const Tensor& Network::run(const Tensor& x, Mode mode, std::size_t end) {
  if (x.rank() != spec_.input.size() + 1 ||
      !std::equal(spec_.input.begin(), spec_.input.end(), x.shape().begin() + 1)) {
    throw ShapeError("network input " + shape_string(x.shape()) + " does not match " +
                     shape_string(spec_.input));
  }
  const Tensor* cur = &x;
  for (std::size_t i = 0; i < end; ++i) {
    layers_[i]->forward(*cur, acts_[i], mode);
    cur = &acts_[i];
  }
  return *cur;
}

const Tensor& Network::run_backward(const Tensor& dy, std::size_t start, bool input_gradient) {
  if (!layers_.empty()) layers_.front()->set_input_gradient(input_gradient);
  const Tensor* g = &dy;
  for (std::size_t i = start; i-- > 0;) {
    layers_[i]->backward(*g, grads_[i]);
    g = &grads_[i];
  }
  return *g;
}

const Tensor& Network::forward(const Tensor& x, Mode mode) { return run(x, mode, layers_.size()); }

const Tensor& Network::forward_logits(const Tensor& x, Mode mode) {
  return run(x, mode, softmax_index_);
}

const Tensor& Network::backward(const Tensor& dlogits, bool input_gradient) {
  return run_backward(dlogits, softmax_index_, input_gradient);
}

const Tensor& Network::backward_through_softmax(const Tensor& dy, bool input_gradient) {
  return run_backward(dy, layers_.size(), input_gradient);
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) {
    for (Parameter* p : l->parameters()) out.push_back(p);
  }
  return out;
}

std::vector<Tensor*> Network::buffers() {
  std::vector<Tensor*> out;
  for (auto& l : layers_) {
    for (Tensor* b : l->buffers()) out.push_back(b);
  }
  return out;
}

std::vector<Tensor*> Network::state() {
  std::vector<Tensor*> out;
  for (Parameter* p : parameters()) out.push_back(&p->value);
  for (Tensor* b : buffers()) out.push_back(b);
  return out;
}

void Network::zero_grad() {
  for (Parameter* p : parameters()) p->grad.fill(0.0);
}

// ---------------------------------------------------------------------------
// SiameseNetwork

SiameseNetwork::SiameseNetwork(ArchitectureSpec encoder, int hidden, Head head) {
  if (encoder.head.type != Head::Type::kNone) throw ShapeError("siamese encoder must have no head");
  const Shape feat = encoder.output_shape();
  if (feat.size() != 1) throw ShapeError("siamese encoder must produce a flat feature vector");
  ArchitectureSpec cls;
  cls.input = {feat[0] * 5};
  cls.layers = {{LayerType::kDense, hidden}, {LayerType::kRelu, 0}};
  cls.head = head;
  encoder_ = Network(std::move(encoder));
  classifier_ = Network(std::move(cls));
}

SiameseNetwork::SiameseNetwork(Network encoder, Network classifier)
    : encoder_(std::move(encoder)), classifier_(std::move(classifier)) {
  const Shape feat = encoder_.spec().output_shape();
  if (encoder_.spec().head.type != Head::Type::kNone || feat.size() != 1 ||
      classifier_.spec().input != Shape{feat[0] * 5}) {
    throw ShapeError("siamese encoder and classifier do not fit together");
  }
}

std::size_t SiameseNetwork::feature_size() const { return encoder_.spec().output_shape().at(0); }

void SiameseNetwork::initialize(Rng& rng) {
  encoder_.initialize(rng);
  classifier_.initialize(rng);
}

void SiameseNetwork::combine(const Tensor& hx, const Tensor& hr) {
  if (hx.shape() != hr.shape() || hx.rank() != 2) throw ShapeError("siamese features mismatch");
  const std::size_t n = hx.dim(0), f = hx.dim(1);
  h_.resize({n, 5 * f});
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = hx.data() + i * f;
    const double* r = hr.data() + i * f;
    double* h = h_.data() + i * 5 * f;
    for (std::size_t j = 0; j < f; ++j) {
      h[j] = x[j];
      h[f + j] = r[j];
      h[2 * f + j] = x[j] + r[j];
      h[3 * f + j] = x[j] - r[j];
      h[4 * f + j] = x[j] * r[j];
    }
  }
}

const Tensor& SiameseNetwork::run(const Tensor& a, const Tensor& b, Mode mode, bool logits) {
  if (a.shape() != b.shape() || a.rank() < 2) {
    throw ShapeError("siamese inputs " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()) + " differ");
  }
  batch_ = a.dim(0);
  Shape ps = a.shape();
  ps[0] = 2 * batch_;
  pair_.resize(ps);
  std::copy(a.data(), a.data() + a.size(), pair_.data());
  std::copy(b.data(), b.data() + b.size(), pair_.data() + a.size());
  const Tensor& feats = encoder_.forward(pair_, mode);
  const std::size_t f = feats.dim(1);
  hx_.resize({batch_, f});
  hr_.resize({batch_, f});
  std::copy(feats.data(), feats.data() + batch_ * f, hx_.data());
  std::copy(feats.data() + batch_ * f, feats.data() + 2 * batch_ * f, hr_.data());
  combine(hx_, hr_);
  return logits ? classifier_.forward_logits(h_, mode) : classifier_.forward(h_, mode);
}

const Tensor& SiameseNetwork::forward(const Tensor& a, const Tensor& b, Mode mode) {
  return run(a, b, mode, false);
}

const Tensor& SiameseNetwork::forward_logits(const Tensor& a, const Tensor& b, Mode mode) {
  return run(a, b, mode, true);
}

void SiameseNetwork::backward(const Tensor& dlogits) {
  const Tensor& dh = classifier_.backward(dlogits);
  const std::size_t n = batch_, f = hx_.dim(1);
  dpair_.resize({2 * n, f});
  for (std::size_t i = 0; i < n; ++i) {
    const double* d = dh.data() + i * 5 * f;
    const double* x = hx_.data() + i * f;
    const double* r = hr_.data() + i * f;
    double* gx = dpair_.data() + i * f;
    double* gr = dpair_.data() + (n + i) * f;
    for (std::size_t j = 0; j < f; ++j) {
      gx[j] = d[j] + d[2 * f + j] + d[3 * f + j] + d[4 * f + j] * r[j];
      gr[j] = d[f + j] + d[2 * f + j] - d[3 * f + j] + d[4 * f + j] * x[j];
    }
  }
  encoder_.backward(dpair_, false);
}

Tensor SiameseNetwork::encode(const Tensor& x) { return encoder_.forward(x, Mode::kEval); }

const Tensor& SiameseNetwork::forward_features(const Tensor& hx, const Tensor& hr, Mode mode) {
  hx_ = hx;
  hr_ = hr;
  batch_ = hx.dim(0);
  combine(hx_, hr_);
  return classifier_.forward(h_, mode);
}

std::vector<Parameter*> SiameseNetwork::parameters() {
  auto out = encoder_.parameters();
  for (Parameter* p : classifier_.parameters()) out.push_back(p);
  return out;
}

std::vector<Tensor*> SiameseNetwork::buffers() {
  auto out = encoder_.buffers();
  for (Tensor* b : classifier_.buffers()) out.push_back(b);
  return out;
}

std::vector<Tensor*> SiameseNetwork::state() {
  auto out = encoder_.state();
  for (Tensor* t : classifier_.state()) out.push_back(t);
  return out;
}

void SiameseNetwork::zero_grad() {
  encoder_.zero_grad();
  classifier_.zero_grad();
}

std::string SiameseNetwork::spec_text() const {
  return "siamese\n[encoder]\n" + encoder_.spec().to_text() + "[classifier]\n" +
         classifier_.spec().to_text();
}

// ---------------------------------------------------------------------------

std::size_t transfer_weights(Network& src, Network& dst) {
  std::size_t copied = 0;
  const std::size_t n = std::min(src.num_layers(), dst.num_layers());
  for (std::size_t i = 0; i < n; ++i) {
    Layer& a = src.layer(i);
    Layer& b = dst.layer(i);
    if (!(a.spec() == b.spec())) break;
    auto pa = a.parameters();
    auto pb = b.parameters();
    auto ba = a.buffers();
    auto bb = b.buffers();
    bool same = pa.size() == pb.size() && ba.size() == bb.size();
    for (std::size_t k = 0; same && k < pa.size(); ++k) same = pa[k]->value.shape() == pb[k]->value.shape();
    for (std::size_t k = 0; same && k < ba.size(); ++k) same = ba[k]->shape() == bb[k]->shape();
    if (!same) break;
    for (std::size_t k = 0; k < pa.size(); ++k) copy_tensor_values(pa[k]->value, pb[k]->value);
    for (std::size_t k = 0; k < ba.size(); ++k) copy_tensor_values(*ba[k], *bb[k]);
    ++copied;
  }
  return copied;
}

}  // namespace uiattr::nn
