#include "uiattr/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "uiattr/color.hpp"
#include "uiattr/nn/checkpoint.hpp"

namespace uiattr {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view head_kind_name(HeadKind h) {
  switch (h) {
    case HeadKind::kClassification: return "classification";
    case HeadKind::kRegression: return "regression";
    case HeadKind::kColor: return "color";
  }
  return "?";
}

HeadKind parse_head_kind(std::string_view s) {
  for (auto h : {HeadKind::kClassification, HeadKind::kRegression, HeadKind::kColor}) {
    if (s == head_kind_name(h)) return h;
  }
  throw std::invalid_argument("unknown head kind '" + std::string(s) + "'");
}

HeadKind default_head(AttributeKind kind) {
  if (is_color(kind)) return HeadKind::kColor;
  if (kind == AttributeKind::kWidth || kind == AttributeKind::kHeight) return HeadKind::kRegression;
  return HeadKind::kClassification;
}

int KindModel::outputs() const {
  switch (head) {
    case HeadKind::kClassification: return static_cast<int>(domain_values(kind).size());
    case HeadKind::kRegression: return 1;
    case HeadKind::kColor: return 3;
  }
  return 0;
}

std::string_view color_clip_mode_name(ColorClipMode m) {
  switch (m) {
    case ColorClipMode::kSaliencyTop5: return "saliency_top5";
    case ColorClipMode::kImageTop5: return "image_top5";
    case ColorClipMode::kImageAll: return "image_all";
    case ColorClipMode::kNone: return "none";
  }
  return "?";
}

ColorClipMode parse_color_clip_mode(std::string_view s) {
  for (auto m : {ColorClipMode::kSaliencyTop5, ColorClipMode::kImageTop5, ColorClipMode::kImageAll,
                 ColorClipMode::kNone}) {
    if (s == color_clip_mode_name(m)) return m;
  }
  throw std::invalid_argument("unknown color clip mode '" + std::string(s) + "'");
}

bool PredictorBundle::complete() const {
  return std::all_of(models.begin(), models.end(), [](const auto& m) { return m.has_value(); });
}

Image prepare_input(const Image& img, int width, int height, PaddingMode mode) {
  if (img.width() == width && img.height() == height) return img;
  if (img.width() > width || img.height() > height) {
    throw std::invalid_argument("image " + std::to_string(img.width()) + "x" +
                                std::to_string(img.height()) + " exceeds model input " +
                                std::to_string(width) + "x" + std::to_string(height));
  }
  return pad_image(img, width, height, mode);
}

void image_to_tensor(const Image& img, nn::Tensor& batch, std::size_t n) {
  const auto w = static_cast<std::size_t>(img.width());
  const auto h = static_cast<std::size_t>(img.height());
  if (batch.rank() != 4 || batch.dim(1) != 3 || batch.dim(2) != h || batch.dim(3) != w || n >= batch.dim(0)) {
    throw nn::ShapeError("image does not fit batch tensor " + nn::shape_string(batch.shape()));
  }
  const auto& px = img.pixels();
  double* out = batch.data() + n * 3 * h * w;
  const std::size_t hw = h * w;
  for (std::size_t i = 0; i < hw; ++i) {
    out[i] = px[3 * i] / 255.0;
    out[hw + i] = px[3 * i + 1] / 255.0;
    out[2 * hw + i] = px[3 * i + 2] / 255.0;
  }
}

// ----------------------------------------------------------------------------
// Training

namespace {

class ImageLearner final : public nn::Learner {
 public:
  ImageLearner(KindModel& model, std::vector<Image> inputs) : model_(model), inputs_(std::move(inputs)) {}

  std::vector<nn::Parameter*> parameters() override { return model_.net.parameters(); }
  std::vector<nn::Tensor*> state() override { return model_.net.state(); }
  const nn::Tensor& forward(std::span<const std::size_t> samples, nn::Mode mode) override {
    batch_.resize({samples.size(), 3, static_cast<std::size_t>(model_.input_height),
                   static_cast<std::size_t>(model_.input_width)});
    for (std::size_t i = 0; i < samples.size(); ++i) image_to_tensor(inputs_[samples[i]], batch_, i);
    return model_.net.forward_logits(batch_, mode);
  }
  void backward(const nn::Tensor& dlogits) override { model_.net.backward(dlogits, false); }

 private:
  KindModel& model_;
  std::vector<Image> inputs_;
  nn::Tensor batch_;
};

double scale_target(const KindModel& m, double v) { return (v - m.target_lo) / (m.target_hi - m.target_lo); }
double unscale_target(const KindModel& m, double v) { return m.target_lo + v * (m.target_hi - m.target_lo); }

nn::Head head_for(const KindModel& m) {
  if (m.head == HeadKind::kClassification) return nn::Head::classification(m.outputs());
  return nn::Head::regression(m.outputs());
}

}  // namespace

KindModel train_kind_model(AttributeKind kind, const PredictionDataset& data,
                           const PredictorTrainOptions& opt, nn::TrainHistory* history,
                           const nn::EpochCallback& on_epoch) {
  if (data.samples.size() < 2) throw std::invalid_argument("train_kind_model: need at least 2 samples");
  KindModel m;
  m.kind = kind;
  m.head = opt.head.value_or(default_head(kind));
  if (m.head == HeadKind::kColor && !is_color(kind)) throw std::invalid_argument("color head on a non-color kind");
  if (is_color(kind) && m.head != HeadKind::kColor) throw std::invalid_argument("color kinds need a color head");
  if (!is_comparable(kind) && m.head != HeadKind::kClassification) {
    throw std::invalid_argument("uncomparable kinds need a classification head");
  }
  m.input_width = data.samples.front().image.width();
  m.input_height = data.samples.front().image.height();
  m.padding = opt.padding;
  if (m.head == HeadKind::kColor) {
    m.target_lo = 0.0;
    m.target_hi = 255.0;
  } else {
    const auto range = opt.target_range.value_or(std::pair{domain_min(kind), domain_max(kind)});
    m.target_lo = range.first;
    m.target_hi = std::max(range.second, range.first + 1);
  }
  m.net = nn::Network(nn::predictor_architecture(
      {3, static_cast<std::size_t>(m.input_height), static_cast<std::size_t>(m.input_width)}, opt.channels,
      opt.hidden, head_for(m)));
  Rng init(Rng::mix(opt.train.seed) ^ (index_of(kind) + 1));
  m.net.initialize(init);

  nn::Targets targets;
  std::vector<Image> inputs;
  inputs.reserve(data.samples.size());
  for (const auto& s : data.samples) {
    inputs.push_back(prepare_input(s.image, m.input_width, m.input_height, m.padding));
    const AttributeValue v = s.label.get(kind);
    switch (m.head) {
      case HeadKind::kClassification:
        targets.loss = nn::Targets::Loss::kCrossEntropy;
        targets.width = 1;
        targets.classes.push_back(static_cast<int>(value_index(kind, std::get<int>(v))));
        break;
      case HeadKind::kRegression:
        targets.loss = nn::Targets::Loss::kMse;
        targets.width = 1;
        targets.values.push_back(scale_target(m, std::get<int>(v)));
        break;
      case HeadKind::kColor: {
        targets.loss = nn::Targets::Loss::kMse;
        targets.width = 3;
        const Rgb c = std::get<Rgb>(v);
        for (int ch : {int{c.r}, int{c.g}, int{c.b}}) targets.values.push_back(scale_target(m, ch));
        break;
      }
    }
  }
  const auto [train_idx, val_idx] = nn::split_indices(data.samples.size(), opt.val_fraction, opt.train.seed);
  ImageLearner learner(m, std::move(inputs));
  nn::TrainHistory h = nn::train(learner, targets, train_idx, val_idx, opt.train, on_epoch);
  if (history) *history = std::move(h);
  return m;
}

// ----------------------------------------------------------------------------
// Inference

namespace {

std::vector<std::pair<int, int>> draw_shifts(const PerturbationSpec& spec) {
  std::vector<std::pair<int, int>> out;
  Rng rng(spec.seed);
  for (int i = 0; i < spec.k; ++i) {
    if (i == 0 || spec.t == 0) {
      out.emplace_back(0, 0);
      continue;
    }
    const auto dx = static_cast<int>(rng.uniform_int(-spec.t, spec.t));
    const auto dy = static_cast<int>(rng.uniform_int(-spec.t, spec.t));
    out.emplace_back(dx, dy);
  }
  return out;
}

bool shift_keeps_inside(const Box& fg, int w, int h, int dx, int dy) {
  if (fg.empty()) return true;
  return fg.x + dx >= 0 && fg.y + dy >= 0 && fg.x + fg.w + dx <= w && fg.y + fg.h + dy <= h;
}

Rgb to_rgb(const double* v) {
  auto ch = [](double x) { return static_cast<std::uint8_t>(std::clamp(std::lround(x), 0L, 255L)); };
  return {ch(v[0]), ch(v[1]), ch(v[2])};
}

}  // namespace

KindPrediction ensemble_predict(KindModel& model, const Image& image, const PerturbationSpec& spec) {
  if (spec.k < 1 || spec.t < 0) throw std::invalid_argument("perturbation spec needs k >= 1 and t >= 0");
  const Image base = prepare_input(image, model.input_width, model.input_height, model.padding);
  const Box fg = foreground_box(base);
  std::vector<Image> shifted;
  for (const auto& [dx, dy] : draw_shifts(spec)) {
    if (!shift_keeps_inside(fg, base.width(), base.height(), dx, dy)) continue;
    shifted.push_back(dx == 0 && dy == 0 ? base : shift_image(base, dx, dy));
  }
  if (shifted.empty()) shifted.push_back(base);

  nn::Tensor batch({shifted.size(), 3, static_cast<std::size_t>(base.height()),
                    static_cast<std::size_t>(base.width())});
  for (std::size_t i = 0; i < shifted.size(); ++i) image_to_tensor(shifted[i], batch, i);
  const nn::Tensor& out = model.net.forward(batch, nn::Mode::kEval);
  const std::size_t n = shifted.size();
  const std::size_t cols = out.dim(1);

  KindPrediction p;
  p.used_shifts = static_cast<int>(n);
  if (model.head == HeadKind::kClassification) {
    const auto& members = domain_values(model.kind);
    p.distribution.assign(cols, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < cols; ++j) p.distribution[j] += out[i * cols + j] / static_cast<double>(n);
    }
    const auto best = static_cast<std::size_t>(
        std::max_element(p.distribution.begin(), p.distribution.end()) - p.distribution.begin());
    p.value = members[best];
    p.confidence = p.distribution[best];
    return p;
  }
  std::vector<double> mean(cols, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < cols; ++j) mean[j] += unscale_target(model, out[i * cols + j]) / static_cast<double>(n);
  }
  if (model.head == HeadKind::kColor) {
    const Rgb c = to_rgb(mean.data());
    p.value = c;
    int agree = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double v[3];
      for (int j = 0; j < 3; ++j) v[j] = unscale_target(model, out[i * cols + static_cast<std::size_t>(j)]);
      agree += delta_e76(to_rgb(v), c) <= perceivable_thresholds(model.kind).same_max;
    }
    p.confidence = static_cast<double>(agree) / static_cast<double>(n);
    return p;
  }
  const auto& members = domain_values(model.kind);
  const int direction = 0;
  const int value = snap_to_domain(model.kind, static_cast<int>(std::lround(mean[0])), direction);
  p.value = value;
  p.distribution.assign(members.size(), 0.0);
  p.distribution[value_index(model.kind, value)] = 1.0;
  int agree = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int vi = snap_to_domain(model.kind, static_cast<int>(std::lround(unscale_target(model, out[i * cols]))), 0);
    agree += vi == value;
  }
  p.confidence = static_cast<double>(agree) / static_cast<double>(n);
  return p;
}

SaliencyMap saliency_map(KindModel& model, const Image& image) {
  const Image in = prepare_input(image, model.input_width, model.input_height, model.padding);
  const auto w = static_cast<std::size_t>(in.width());
  const auto h = static_cast<std::size_t>(in.height());
  nn::Tensor batch({1, 3, h, w});
  image_to_tensor(in, batch, 0);
  const nn::Tensor& logits = model.net.forward_logits(batch, nn::Mode::kEval);
  nn::Tensor d(logits.shape(), 0.0);
  if (model.head == HeadKind::kClassification) {
    const auto best = static_cast<std::size_t>(
        std::max_element(logits.data(), logits.data() + logits.size()) - logits.data());
    d[best] = 1.0;
  } else {
    d.fill(1.0);
  }
  const nn::Tensor& g = model.net.backward(d, true);
  SaliencyMap s;
  s.width = static_cast<int>(w);
  s.height = static_cast<int>(h);
  s.values.assign(w * h, 0.0);
  const std::size_t hw = w * h;
  for (std::size_t i = 0; i < hw; ++i) {
    s.values[i] = std::max({std::abs(g[i]), std::abs(g[hw + i]), std::abs(g[2 * hw + i])});
  }
  const auto [lo, hi] = std::minmax_element(s.values.begin(), s.values.end());
  const double mn = *lo, mx = *hi;
  if (!(mx > mn)) {
    std::fill(s.values.begin(), s.values.end(), 0.0);
    s.degenerate = true;
    return s;
  }
  for (double& v : s.values) v = (v - mn) / (mx - mn);
  return s;
}

std::vector<Rgb> clip_candidates(const Image& image, const SaliencyMap* saliency, const ColorClipSpec& spec) {
  if (spec.mode == ColorClipMode::kNone) return {};
  const bool use_saliency = spec.mode == ColorClipMode::kSaliencyTop5;
  if (use_saliency) {
    if (!saliency) return {};
    if (saliency->width != image.width() || saliency->height != image.height()) {
      throw std::invalid_argument("saliency map size differs from image");
    }
  }
  std::map<Rgb, int> counts;
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      if (use_saliency &&
          saliency->values[static_cast<std::size_t>(y) * image.width() + x] < spec.threshold) {
        continue;
      }
      ++counts[image.at(x, y)];
    }
  }
  std::vector<std::pair<int, Rgb>> ranked;
  for (const auto& [c, n] : counts) ranked.emplace_back(-n, c);
  std::sort(ranked.begin(), ranked.end());
  std::vector<Rgb> out;
  const std::size_t limit = spec.mode == ColorClipMode::kImageAll ? ranked.size()
                                                                  : static_cast<std::size_t>(spec.top_n);
  for (std::size_t i = 0; i < ranked.size() && i < limit; ++i) out.push_back(ranked[i].second);
  return out;
}

Rgb color_clip(Rgb predicted, const Image& image, const SaliencyMap* saliency, const ColorClipSpec& spec) {
  const auto cands = clip_candidates(image, saliency, spec);
  Rgb best = predicted;
  double best_d = std::numeric_limits<double>::infinity();
  for (const Rgb& c : cands) {
    const double d = delta_e76(c, predicted);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

ConfigPrediction predict_config(PredictorBundle& bundle, const Image& image, const AttributeConfig& fallback) {
  ConfigPrediction out;
  out.config = fallback;
  for (auto k : kAllKinds) {
    KindModel* m = bundle.find(k);
    if (!m) {
      out.failures.emplace_back(k, "no model");
      continue;
    }
    try {
      KindPrediction p = ensemble_predict(*m, image, bundle.perturbation);
      if (m->head == HeadKind::kColor) {
        const Image in = prepare_input(image, m->input_width, m->input_height, m->padding);
        SaliencyMap sal;
        if (bundle.color_clip.mode == ColorClipMode::kSaliencyTop5) sal = saliency_map(*m, image);
        p.value = color_clip(std::get<Rgb>(p.value), in,
                             bundle.color_clip.mode == ColorClipMode::kSaliencyTop5 ? &sal : nullptr,
                             bundle.color_clip);
      }
      out.config.set(k, p.value);
      out.confidence[index_of(k)] = p.confidence;
      out.distributions[index_of(k)] = std::move(p.distribution);
    } catch (const std::exception& e) {
      out.failures.emplace_back(k, e.what());
    }
  }
  return out;
}

// ----------------------------------------------------------------------------
// Persistence

json kind_model_meta(const KindModel& m) {
  return {{"checkpoint", std::string(kind_name(m.kind)) + ".ckpt"},
          {"head", head_kind_name(m.head)},
          {"input", {m.input_width, m.input_height}},
          {"padding", padding_mode_name(m.padding)},
          {"target", {m.target_lo, m.target_hi}}};
}

namespace {

json read_bundle_json(const fs::path& dir) {
  std::ifstream in(dir / "bundle.json");
  if (!in) return json{{"models", json::object()}};
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupted bundle.json in " + dir.string() + ": " + e.what());
  }
}

void write_bundle_json(const fs::path& dir, const json& j) {
  std::ofstream out(dir / "bundle.json", std::ios::trunc);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write bundle.json in " + dir.string());
}

json bundle_settings(const PredictorBundle& b) {
  return {{"perturbation", {{"k", b.perturbation.k}, {"t", b.perturbation.t}, {"seed", b.perturbation.seed}}},
          {"color_clip",
           {{"mode", color_clip_mode_name(b.color_clip.mode)},
            {"threshold", b.color_clip.threshold},
            {"top_n", b.color_clip.top_n}}}};
}

}  // namespace

void save_kind_model(KindModel& model, const fs::path& dir) {
  fs::create_directories(dir);
  nn::save_network(model.net, dir / (std::string(kind_name(model.kind)) + ".ckpt"));
  json j = read_bundle_json(dir);
  if (!j.contains("perturbation")) j.update(bundle_settings(PredictorBundle{}));
  j["models"][std::string(kind_name(model.kind))] = kind_model_meta(model);
  write_bundle_json(dir, j);
}

void save_bundle(PredictorBundle& bundle, const fs::path& dir) {
  fs::create_directories(dir);
  json j = bundle_settings(bundle);
  j["models"] = json::object();
  for (auto k : kAllKinds) {
    KindModel* m = bundle.find(k);
    if (!m) continue;
    nn::save_network(m->net, dir / (std::string(kind_name(k)) + ".ckpt"));
    j["models"][std::string(kind_name(k))] = kind_model_meta(*m);
  }
  write_bundle_json(dir, j);
}

PredictorBundle load_bundle(const fs::path& dir) {
  if (!fs::exists(dir / "bundle.json")) throw std::runtime_error("no bundle.json in " + dir.string());
  const json j = read_bundle_json(dir);
  PredictorBundle b;
  try {
    if (j.contains("perturbation")) {
      const auto& p = j.at("perturbation");
      b.perturbation = {p.at("k").get<int>(), p.at("t").get<int>(), p.at("seed").get<std::uint64_t>()};
    }
    if (j.contains("color_clip")) {
      const auto& c = j.at("color_clip");
      b.color_clip = {parse_color_clip_mode(c.at("mode").get<std::string>()), c.at("threshold").get<double>(),
                      c.at("top_n").get<int>()};
    }
    for (const auto& [name, meta] : j.at("models").items()) {
      const auto kind = parse_kind(name);
      if (!kind) throw std::runtime_error("bundle lists unknown kind " + name);
      KindModel m;
      m.kind = *kind;
      m.head = parse_head_kind(meta.at("head").get<std::string>());
      m.input_width = meta.at("input").at(0).get<int>();
      m.input_height = meta.at("input").at(1).get<int>();
      m.padding = parse_padding_mode(meta.at("padding").get<std::string>());
      m.target_lo = meta.at("target").at(0).get<double>();
      m.target_hi = meta.at("target").at(1).get<double>();
      m.net = nn::load_network(dir / meta.at("checkpoint").get<std::string>());
      const nn::Shape out = m.net.spec().output_shape();
      if (out != nn::Shape{static_cast<std::size_t>(m.outputs())}) {
        throw std::runtime_error("model for " + name + " has " + nn::shape_string(out) + " outputs, expected " +
                                 std::to_string(m.outputs()));
      }
      b.models[index_of(*kind)] = std::move(m);
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed bundle.json: " + std::string(e.what()));
  }
  return b;
}

}  // namespace uiattr
