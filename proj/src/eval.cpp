#include "uiattr/eval.hpp"

#include <cstdio>
#include <sstream>

#include "uiattr/hash.hpp"

namespace uiattr {

using nlohmann::json;

double EvalReport::accuracy(AttributeKind k) const {
  const auto& c = counts[index_of(k)];
  const std::size_t n = c[0] + c[1] + c[2];
  return n == 0 ? 0.0 : static_cast<double>(c[0]) / static_cast<double>(n);
}

double EvalReport::overall() const {
  if (kinds.empty()) return 0.0;
  double s = 0.0;
  for (auto k : kinds.kinds()) s += accuracy(k);
  return s / static_cast<double>(kinds.size());
}

EvalReport accuracy(const std::vector<AttributeConfig>& predictions, const std::vector<AttributeConfig>& labels,
                    const KindSet& kinds, std::string name) {
  if (predictions.size() != labels.size()) {
    throw EvalError("accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                    std::to_string(labels.size()) + " labels");
  }
  EvalReport r;
  r.name = std::move(name);
  r.kinds = kinds;
  r.samples = labels.size();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (auto k : kinds.kinds()) {
      const auto c = perceivable_class(k, predictions[i].get(k), labels[i].get(k));
      ++r.counts[index_of(k)][static_cast<std::size_t>(c)];
    }
  }
  return r;
}

json report_to_json(const EvalReport& r) {
  json kinds = json::object();
  for (auto k : r.kinds.kinds()) {
    const auto& c = r.counts[index_of(k)];
    kinds[std::string(kind_name(k))] = {{"same", c[0]}, {"similar", c[1]}, {"different", c[2]}};
  }
  return {{"name", r.name}, {"samples", r.samples}, {"overall", r.overall()}, {"kinds", kinds}, {"meta", r.meta}};
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  try {
    r.name = j.at("name").get<std::string>();
    r.samples = j.at("samples").get<std::size_t>();
    r.meta = j.value("meta", json::object());
    r.kinds = KindSet();
    for (const auto& [name, c] : j.at("kinds").items()) {
      const auto k = parse_kind(name);
      if (!k) throw EvalError("report lists unknown kind " + name);
      r.kinds.insert(*k);
      r.counts[index_of(*k)] = {c.at("same").get<std::size_t>(), c.at("similar").get<std::size_t>(),
                                c.at("different").get<std::size_t>()};
      if (c.at("same").get<std::size_t>() + c.at("similar").get<std::size_t>() +
              c.at("different").get<std::size_t>() != r.samples) {
        throw EvalError("report counts for " + name + " do not sum to the sample count");
      }
    }
  } catch (const json::exception& e) {
    throw EvalError(std::string("malformed report: ") + e.what());
  }
  return r;
}

void write_reports(const std::vector<EvalReport>& reports, std::ostream& out) {
  for (const auto& r : reports) out << report_to_json(r).dump() << "\n";
}

std::vector<EvalReport> read_reports(std::istream& in) {
  std::vector<EvalReport> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(report_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw EvalError(std::string("malformed report line: ") + e.what());
    }
  }
  return out;
}

std::string format_table(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  constexpr int kFirst = 14;
  std::size_t col = 10;
  for (const auto& r : reports) col = std::max(col, r.name.size() + 2);
  char buf[64];
  const auto cell = [&](const std::string& s, std::size_t w) {
    os << s;
    for (std::size_t i = s.size(); i < w; ++i) os << ' ';
  };
  cell("attribute", kFirst);
  for (const auto& r : reports) {
    for (std::size_t i = r.name.size(); i < col; ++i) os << ' ';
    os << r.name;
  }
  os << "\n";
  const auto row = [&](const std::string& label, const std::function<std::string(const EvalReport&)>& f) {
    cell(label, kFirst);
    for (const auto& r : reports) {
      const std::string s = f(r);
      for (std::size_t i = s.size(); i < col; ++i) os << ' ';
      os << s;
    }
    os << "\n";
  };
  for (auto k : kAllKinds) {
    bool any = false;
    for (const auto& r : reports) any = any || r.kinds.contains(k);
    if (!any) continue;
    row(std::string(kind_name(k)), [&](const EvalReport& r) {
      if (!r.kinds.contains(k)) return std::string("-");
      std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * r.accuracy(k));
      return std::string(buf);
    });
  }
  row("overall", [&](const EvalReport& r) {
    std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * r.overall());
    return std::string(buf);
  });
  row("samples", [](const EvalReport& r) { return std::to_string(r.samples); });
  return os.str();
}

std::string reports_checksum(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  write_reports(reports, os);
  return hex64(fnv1a64(os.str()));
}

// ----------------------------------------------------------------------------
// Experiments

EvalReport evaluate_kind(KindModel& model, const std::vector<Image>& images, const std::vector<AttributeConfig>& labels,
                         const PerturbationSpec& perturbation, const ColorClipSpec& clip, const std::string& name) {
  if (images.size() != labels.size()) throw EvalError("evaluate_kind: images and labels differ in length");
  std::vector<AttributeConfig> preds;
  preds.reserve(images.size());
  const AttributeKind k = model.kind;
  for (std::size_t i = 0; i < images.size(); ++i) {
    KindPrediction p = ensemble_predict(model, images[i], perturbation);
    if (model.head == HeadKind::kColor) {
      const Image in = prepare_input(images[i], model.input_width, model.input_height, model.padding);
      SaliencyMap sal;
      const bool use_sal = clip.mode == ColorClipMode::kSaliencyTop5;
      if (use_sal) sal = saliency_map(model, images[i]);
      p.value = color_clip(std::get<Rgb>(p.value), in, use_sal ? &sal : nullptr, clip);
    }
    AttributeConfig c = labels[i];
    c.set(k, p.value);
    preds.push_back(c);
  }
  EvalReport r = accuracy(preds, labels, KindSet{k}, name);
  r.meta = {{"kind", kind_name(k)},
            {"padding", padding_mode_name(model.padding)},
            {"k", perturbation.k},
            {"t", perturbation.t},
            {"color_clip", color_clip_mode_name(clip.mode)}};
  return r;
}

std::vector<ConfigPrediction> predict_all(PredictorBundle& bundle, const std::vector<Image>& images) {
  std::vector<ConfigPrediction> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(predict_config(bundle, img));
  return out;
}

Image off_center_crop(const Image& image, const AttributeConfig& config, const RenderContext& ctx, Rng& rng) {
  Box fp = footprint_box(config, ctx);
  const int x0 = std::max(0, fp.x), y0 = std::max(0, fp.y);
  const int x1 = std::min(image.width(), fp.x + fp.w), y1 = std::min(image.height(), fp.y + fp.h);
  // window size between the footprint and the full image
  const int w = static_cast<int>(rng.uniform_int(x1 - x0, image.width()));
  const int h = static_cast<int>(rng.uniform_int(y1 - y0, image.height()));
  const int cx = static_cast<int>(rng.uniform_int(std::max(0, x1 - w), std::min(x0, image.width() - w)));
  const int cy = static_cast<int>(rng.uniform_int(std::max(0, y1 - h), std::min(y0, image.height() - h)));
  return crop_image(image, cx, cy, w, h);
}

RefinementRun run_refinement(const std::vector<RefinementCase>& cases, const PolicyFactory& policy,
                             const CriticFactory& critic, const RefineSpec& spec, const KindSet& kinds,
                             const std::string& name) {
  RefinementRun run;
  std::vector<AttributeConfig> init, refined, truth;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    auto pol = policy(c);
    auto cri = critic(c);
    RefineSpec s = spec;
    s.seed = Rng::mix(spec.seed) ^ i;
    RefineResult r = refine_loop(*pol, *cri, c.init, c.ctx, s);
    init.push_back(c.init);
    refined.push_back(r.config);
    truth.push_back(c.truth);
    run.results.push_back(std::move(r));
  }
  run.initial = accuracy(init, truth, kinds, name + "/initial");
  run.refined = accuracy(refined, truth, kinds, name + "/refined");
  const json meta{{"patience", spec.patience},
                  {"max_iters", spec.max_iters},
                  {"same_value_heuristic", spec.same_value_heuristic},
                  {"seed", spec.seed}};
  run.initial.meta = meta;
  run.refined.meta = meta;
  return run;
}

std::vector<RefinementCase> make_cases(const PredictionDataset& data, const std::vector<AttributeConfig>& init,
                                       const KindSet& randomize, const SamplingBounds& bounds, std::uint64_t seed) {
  if (init.size() != data.samples.size()) throw EvalError("make_cases: one init config per sample required");
  std::vector<RefinementCase> out;
  out.reserve(init.size());
  for (std::size_t i = 0; i < init.size(); ++i) {
    const auto& s = data.samples[i];
    RefinementCase c{s.image, s.label, s.ctx, init[i]};
    c.init = fit_to_context(c.init, c.ctx);
    if (!randomize.empty()) {
      Rng rng = Rng::derive(seed, i);
      AttributeConfig y = randomize_kinds(c.init, randomize, rng, bounds);
      for (int tries = 0; tries < 100 && !fits(y, c.ctx); ++tries) y = randomize_kinds(c.init, randomize, rng, bounds);
      if (fits(y, c.ctx)) c.init = y;
    }
    out.push_back(std::move(c));
  }
  return out;
}

Image contact_sheet(const std::vector<SheetRow>& rows, int gap) {
  int cw = 0, rh = 0;
  for (const auto& r : rows) {
    for (const Image* im : {&r.input, &r.preprocessed, &r.predicted, &r.refined}) {
      cw = std::max(cw, im->width());
      rh = std::max(rh, im->height());
    }
  }
  const int n = static_cast<int>(rows.size());
  Image sheet(4 * cw + 5 * gap, n * rh + (n + 1) * gap, Rgb{40, 40, 40});
  for (int i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    int x = gap;
    for (const Image* im : {&r.input, &r.preprocessed, &r.predicted, &r.refined}) {
      if (!im->empty()) paste_image(sheet, *im, x, gap + i * (rh + gap));
      x += cw + gap;
    }
  }
  return sheet;
}

}  // namespace uiattr
