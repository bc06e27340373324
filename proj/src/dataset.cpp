#include "uiattr/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iterator>
#include <mutex>
#include <sstream>
#include <thread>

#include "uiattr/hash.hpp"

namespace uiattr {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view jitter_mode_name(JitterSpec::Mode m) {
  switch (m) {
    case JitterSpec::Mode::kCenter: return "center";
    case JitterSpec::Mode::kTr1: return "tr1";
    case JitterSpec::Mode::kTr2: return "tr2";
  }
  return "?";
}

JitterSpec::Mode parse_jitter_mode(std::string_view s) {
  for (auto m : {JitterSpec::Mode::kCenter, JitterSpec::Mode::kTr1, JitterSpec::Mode::kTr2}) {
    if (s == jitter_mode_name(m)) return m;
  }
  throw std::invalid_argument("unknown jitter mode '" + std::string(s) + "'");
}

std::string_view background_mode_name(BackgroundMode m) {
  switch (m) {
    case BackgroundMode::kWhite: return "white";
    case BackgroundMode::kRand: return "rand";
    case BackgroundMode::kScreenshot: return "screenshot";
  }
  return "?";
}

BackgroundMode parse_background_mode(std::string_view s) {
  for (auto m : {BackgroundMode::kWhite, BackgroundMode::kRand, BackgroundMode::kScreenshot}) {
    if (s == background_mode_name(m)) return m;
  }
  throw std::invalid_argument("unknown background mode '" + std::string(s) + "'");
}

std::pair<int, int> place_component(const AttributeConfig& config, int canvas_w, int canvas_h,
                                    const JitterSpec& jitter, Rng& rng) {
  const int xmax = canvas_w - config.width;
  const int ymax = canvas_h - config.height - shadow_offset(config.shadow);
  if (xmax < 0 || ymax < 0) {
    throw GeometryError("component " + std::to_string(config.width) + "x" +
                        std::to_string(config.height) + " does not fit canvas " +
                        std::to_string(canvas_w) + "x" + std::to_string(canvas_h));
  }
  const int cx = xmax / 2;
  const int cy = std::min((canvas_h - config.height) / 2, ymax);
  switch (jitter.mode) {
    case JitterSpec::Mode::kCenter: return {cx, cy};
    case JitterSpec::Mode::kTr1: {
      const int mx = std::min(jitter.margin, xmax / 2);
      const int my = std::min(jitter.margin, ymax / 2);
      const auto x = static_cast<int>(rng.uniform_int(mx, xmax - mx));
      const auto y = static_cast<int>(rng.uniform_int(my, ymax - my));
      return {x, y};
    }
    case JitterSpec::Mode::kTr2: {
      const auto x = static_cast<int>(
          rng.uniform_int(std::max(0, cx - jitter.max_dx), std::min(xmax, cx + jitter.max_dx)));
      const auto y = static_cast<int>(
          rng.uniform_int(std::max(0, cy - jitter.max_dy), std::min(ymax, cy + jitter.max_dy)));
      return {x, y};
    }
  }
  return {cx, cy};
}

json gen_options_to_json(const GenOptions& o) {
  json bounds = json::object();
  for (auto k : kAllKinds) {
    if (is_color(k) || !is_comparable(k)) continue;
    bounds[std::string(kind_name(k))] = {o.bounds.of(k).first, o.bounds.of(k).second};
  }
  return {{"canvas", {o.canvas_width, o.canvas_height}},
          {"bounds", bounds},
          {"jitter",
           {{"mode", jitter_mode_name(o.jitter.mode)},
            {"margin", o.jitter.margin},
            {"max_dx", o.jitter.max_dx},
            {"max_dy", o.jitter.max_dy}}},
          {"background", background_mode_name(o.background)},
          {"subset_size", o.subset_size},
          {"screenshots", o.screenshots.size()}};
}

namespace {

Background draw_background(const GenOptions& o, Rng& rng) {
  switch (o.background) {
    case BackgroundMode::kWhite: return Background::white();
    case BackgroundMode::kRand: {
      const auto r = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
      const auto g = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
      const auto b = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
      return Background::solid({r, g, b});
    }
    case BackgroundMode::kScreenshot: {
      if (o.screenshots.empty()) throw DatasetError("screenshot background needs a non-empty pool");
      Background bg;
      bg.type = Background::Type::kScreenshot;
      const auto idx = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(o.screenshots.size()) - 1));
      bg.screenshot = o.screenshots[idx];
      bg.screenshot_index = static_cast<int>(idx);
      bg.offset_x = static_cast<int>(rng.uniform_int(0, bg.screenshot->width() - 1));
      bg.offset_y = static_cast<int>(rng.uniform_int(0, bg.screenshot->height() - 1));
      return bg;
    }
  }
  return Background::white();
}

std::string pick_label(Rng& rng) {
  const auto& words = label_words();
  return words[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(words.size()) - 1))];
}

RenderContext draw_context(const AttributeConfig& envelope, const GenOptions& o, Rng& rng) {
  RenderContext ctx;
  ctx.canvas_width = o.canvas_width;
  ctx.canvas_height = o.canvas_height;
  std::tie(ctx.x_pos, ctx.y_pos) = place_component(envelope, o.canvas_width, o.canvas_height, o.jitter, rng);
  ctx.background = draw_background(o, rng);
  ctx.label = pick_label(rng);
  return ctx;
}

std::uint64_t sample_seed(std::uint64_t seed, std::uint64_t index) {
  return Rng::mix(seed) ^ Rng::mix(index + 1);
}

int sign(int v) { return (v > 0) - (v < 0); }

/// Member of `members` nearest to `target`, ties broken towards `direction`.
int nearest_member(const std::vector<int>& members, int target, int direction) {
  int best = members.front();
  for (int m : members) {
    const int d = std::abs(m - target);
    const int bd = std::abs(best - target);
    if (d < bd || (d == bd && sign(m - best) == direction)) best = m;
  }
  return best;
}

}  // namespace

PredictionDataset gen_prediction_dataset(std::size_t n, const GenOptions& options, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("gen_prediction_dataset: n must be >= 1");
  if (options.subset_size < 1 || options.subset_size > static_cast<int>(kNumKinds)) {
    throw std::invalid_argument("gen_prediction_dataset: subset_size must be in [1, 12]");
  }
  if (options.background == BackgroundMode::kScreenshot && options.screenshots.empty()) {
    throw DatasetError("screenshot background needs a non-empty pool");
  }
  PredictionDataset ds;
  ds.samples.resize(n);
  Rng chain = Rng::derive(seed, 0);
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = ds.samples[i];
    if (i == 0) {
      s.label = sample_config(chain, KindSet::all(), nullptr, options.bounds);
    } else {
      const KindSet subset = random_subset(chain, static_cast<std::size_t>(options.subset_size));
      s.label = sample_config(chain, subset, &ds.samples[i - 1].label, options.bounds);
    }
    Rng r = Rng::derive(seed, i + 1);
    s.ctx = draw_context(s.label, options, r);
    s.seed = sample_seed(seed, i);
  }
  parallel_for(n, options.jobs, [&](std::size_t i) {
    ds.samples[i].image = render(ds.samples[i].label, ds.samples[i].ctx);
  });
  ds.meta = {{"generator", "prediction"}, {"seed", seed}, {"count", n}, {"options", gen_options_to_json(options)}};
  return ds;
}

// ----------------------------------------------------------------------------
// Deltas

bool DeltaVector::is_zero() const { return total_magnitude() == 0; }

int DeltaVector::total_magnitude() const {
  int t = 0;
  for (const auto& v : values) {
    for (int x : v) t += std::abs(x);
  }
  return t;
}

DeltaVector delta_between(const AttributeConfig& original, const AttributeConfig& rendered, int c) {
  if (c < 1) throw std::invalid_argument("delta clip must be >= 1");
  DeltaVector d;
  for (auto k : kAllKinds) {
    const AttributeValue a = original.get(k);
    const AttributeValue b = rendered.get(k);
    if (is_color(k)) {
      const Rgb x = std::get<Rgb>(a);
      const Rgb y = std::get<Rgb>(b);
      d.at(k, 0) = std::clamp(int{x.r} - int{y.r}, -c, c);
      d.at(k, 1) = std::clamp(int{x.g} - int{y.g}, -c, c);
      d.at(k, 2) = std::clamp(int{x.b} - int{y.b}, -c, c);
    } else if (is_comparable(k)) {
      d.at(k) = std::clamp(std::get<int>(a) - std::get<int>(b), -c, c);
    } else {
      d.at(k) = std::get<int>(a) != std::get<int>(b) ? 1 : 0;
    }
  }
  return d;
}

json delta_to_json(const DeltaVector& d) {
  json j = json::object();
  for (auto k : kAllKinds) {
    if (is_color(k)) {
      j[std::string(kind_name(k))] = {d.at(k, 0), d.at(k, 1), d.at(k, 2)};
    } else {
      j[std::string(kind_name(k))] = d.at(k);
    }
  }
  return j;
}

DeltaVector delta_from_json(const json& j) {
  DeltaVector d;
  if (!j.is_object() || j.size() != kNumKinds) throw DatasetError("delta record must list all 12 kinds");
  for (auto k : kAllKinds) {
    const json& v = j.at(std::string(kind_name(k)));
    if (is_color(k)) {
      for (int c = 0; c < 3; ++c) d.at(k, c) = v.at(static_cast<std::size_t>(c)).get<int>();
    } else {
      d.at(k) = v.get<int>();
    }
  }
  return d;
}

AttributeValue perturb_value(AttributeKind kind, const AttributeValue& value, int c, Rng& rng,
                             const SamplingBounds& bounds) {
  if (c < 1) throw std::invalid_argument("perturbation step bound must be >= 1");
  if (is_color(kind)) {
    Rgb v = std::get<Rgb>(value);
    for (;;) {
      Rgb out = v;
      std::uint8_t* ch[3] = {&out.r, &out.g, &out.b};
      for (auto* p : ch) *p = static_cast<std::uint8_t>(std::clamp<int>(*p + static_cast<int>(rng.uniform_int(-c, c)), 0, 255));
      if (out != v) return out;
    }
  }
  const int cur = std::get<int>(value);
  const std::vector<int> members = bounds.members(kind);
  if (!is_comparable(kind)) {
    std::vector<int> others;
    for (int m : members) {
      if (m != cur) others.push_back(m);
    }
    if (others.empty()) return cur;
    return others[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(others.size()) - 1))];
  }
  if (members.size() < 2) return cur;
  int step = static_cast<int>(rng.uniform_int(1, c));
  if (rng.bernoulli(0.5)) step = -step;
  int next = nearest_member(members, cur + step, sign(step));
  if (next == cur) next = nearest_member(members, cur - step, -sign(step));
  if (next == cur) {
    // Step lands back on the current member in both directions: take the neighbour.
    const auto it = std::find(members.begin(), members.end(), cur);
    if (it == members.end()) return nearest_member(members, cur, sign(step));
    next = it + 1 != members.end() ? *(it + 1) : *(it - 1);
  }
  return next;
}

DeltaSample make_delta_sample(const AttributeConfig& original, const AttributeConfig& rendered,
                              const RenderContext& ctx, int clip, std::uint64_t seed) {
  DeltaSample s;
  s.original_config = original;
  s.rendered_config = rendered;
  s.ctx = ctx;
  s.labels = delta_between(original, rendered, clip);
  s.seed = seed;
  s.original = render(original, ctx);
  s.rendered = render(rendered, ctx);
  return s;
}

namespace {

AttributeConfig envelope_of(const AttributeConfig& a, const AttributeConfig& b) {
  AttributeConfig e = a;
  e.width = std::max(a.width, b.width);
  e.height = std::max(a.height, b.height);
  e.shadow = std::max(a.shadow, b.shadow);
  return e;
}

}  // namespace

DeltaDataset gen_delta_dataset(std::size_t m, const DeltaOptions& o, std::uint64_t seed) {
  if (m < 1) throw std::invalid_argument("gen_delta_dataset: m must be >= 1");
  if (o.clip < 1) throw std::invalid_argument("gen_delta_dataset: c must be >= 1");
  if (o.perturbed_kinds < 0 || o.perturbed_kinds > static_cast<int>(kNumKinds)) {
    throw std::invalid_argument("gen_delta_dataset: perturbed_kinds must be in [0, 12]");
  }
  DeltaDataset ds;
  ds.clip = o.clip;
  ds.samples.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    Rng r = Rng::derive(seed, j);
    const AttributeConfig a = sample_config(r, KindSet::all(), nullptr, o.gen.bounds);
    AttributeConfig b = a;
    const KindSet changed = random_subset(r, static_cast<std::size_t>(o.perturbed_kinds));
    for (auto k : changed.kinds()) {
      if (r.bernoulli(o.resample_probability)) {
        b.set(k, sample_value(k, r, o.gen.bounds));
      } else {
        b.set(k, perturb_value(k, a.get(k), o.clip, r, o.gen.bounds));
      }
    }
    auto& s = ds.samples[j];
    if (r.bernoulli(0.5)) {
      s.original_config = a;
      s.rendered_config = b;
    } else {
      s.original_config = b;
      s.rendered_config = a;
    }
    s.ctx = draw_context(envelope_of(a, b), o.gen, r);
    s.labels = delta_between(s.original_config, s.rendered_config, o.clip);
    s.seed = sample_seed(seed, j);
  }
  parallel_for(m, o.gen.jobs, [&](std::size_t j) {
    auto& s = ds.samples[j];
    s.original = render(s.original_config, s.ctx);
    s.rendered = render(s.rendered_config, s.ctx);
  });
  ds.meta = {{"generator", "delta"},
             {"seed", seed},
             {"count", m},
             {"clip", o.clip},
             {"perturbed_kinds", o.perturbed_kinds},
             {"resample_probability", o.resample_probability},
             {"options", gen_options_to_json(o.gen)}};
  return ds;
}

DeltaDataset dagger_augment(const StateVisitor& visit, const std::vector<PredictionSample>& targets,
                            const DeltaDataset& base, int rounds, std::size_t per_round,
                            std::uint64_t seed, const RetrainHook& retrain) {
  if (rounds < 0) throw std::invalid_argument("dagger: rounds must be >= 0");
  DeltaDataset out = base;
  if (rounds == 0 || targets.empty() || per_round == 0) return out;
  std::size_t added = 0;
  for (int round = 0; round < rounds; ++round) {
    Rng rr = Rng::derive(seed, static_cast<std::uint64_t>(round));
    std::vector<std::size_t> order(targets.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rr.shuffle(order);
    for (std::size_t n = 0; n < per_round; ++n) {
      const PredictionSample& t = targets[order[n % order.size()]];
      Rng vr = Rng::derive(rr.next(), n);
      const std::vector<AttributeConfig> states = visit(t, vr);
      for (std::size_t si = 0; si < states.size(); ++si) {
        DeltaSample s;
        s.original = t.image;
        s.original_config = t.label;
        s.rendered_config = states[si];
        s.ctx = t.ctx;
        s.labels = delta_between(t.label, states[si], out.clip);
        s.seed = sample_seed(seed, (static_cast<std::uint64_t>(round) << 40) ^ (n << 16) ^ si);
        s.rendered = render(states[si], t.ctx);
        out.samples.push_back(std::move(s));
        ++added;
      }
    }
    if (retrain) retrain(out, round);
  }
  out.meta["dagger"] = {{"rounds", rounds}, {"per_round", per_round}, {"seed", seed}, {"added", added}};
  return out;
}

// ----------------------------------------------------------------------------
// Screenshots

std::vector<std::shared_ptr<const Image>> synthetic_screenshots(std::size_t n, int w, int h,
                                                                std::uint64_t seed) {
  std::vector<std::shared_ptr<const Image>> out;
  auto fill = [](Image& img, int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = std::max(0, y0); y < std::min(img.height(), y1); ++y) {
      for (int x = std::max(0, x0); x < std::min(img.width(), x1); ++x) img.set(x, y, c);
    }
  };
  auto color = [](Rng& r, int lo, int hi) {
    return Rgb{static_cast<std::uint8_t>(r.uniform_int(lo, hi)),
               static_cast<std::uint8_t>(r.uniform_int(lo, hi)),
               static_cast<std::uint8_t>(r.uniform_int(lo, hi))};
  };
  for (std::size_t i = 0; i < n; ++i) {
    Rng r = Rng::derive(seed, i);
    Image img(w, h, color(r, 200, 255));
    const int bar = static_cast<int>(r.uniform_int(h / 10, h / 5));
    fill(img, 0, 0, w, bar, color(r, 0, 200));
    int y = bar + static_cast<int>(r.uniform_int(2, 8));
    while (y < h) {
      const int card_h = static_cast<int>(r.uniform_int(h / 8, h / 3));
      const int x0 = static_cast<int>(r.uniform_int(2, 10));
      fill(img, x0, y, w - x0, y + card_h, color(r, 180, 255));
      for (int ly = y + 3; ly + 2 < y + card_h; ly += 6) {
        const int len = static_cast<int>(r.uniform_int(w / 6, w / 2));
        fill(img, x0 + 4, ly, x0 + 4 + len, ly + 2, color(r, 20, 120));
      }
      y += card_h + static_cast<int>(r.uniform_int(2, 8));
    }
    out.push_back(std::make_shared<const Image>(std::move(img)));
  }
  return out;
}

std::vector<std::shared_ptr<const Image>> load_screenshots(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) throw DatasetError("screenshot directory not found: " + dir.string());
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".ppm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::shared_ptr<const Image>> out;
  for (const auto& f : files) out.push_back(std::make_shared<const Image>(read_image(f)));
  return out;
}

std::string image_digest(const Image& img) {
  std::uint64_t h = fnv1a64(std::span(img.pixels().data(), img.pixels().size()));
  const std::string dims = std::to_string(img.width()) + "x" + std::to_string(img.height());
  return hex64(fnv1a64(dims, h));
}

// ----------------------------------------------------------------------------
// Persistence

namespace {

constexpr int kFormatVersion = 1;

std::string image_name(std::size_t i, const char* suffix) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "images/%06zu%s.ppm", i, suffix);
  return buf;
}

std::vector<std::shared_ptr<const Image>> collect_pool(const std::vector<const RenderContext*>& ctxs) {
  std::vector<std::shared_ptr<const Image>> pool;
  for (const RenderContext* c : ctxs) {
    const auto& bg = c->background;
    if (bg.type != Background::Type::kScreenshot) continue;
    const auto idx = static_cast<std::size_t>(bg.screenshot_index);
    if (pool.size() <= idx) pool.resize(idx + 1);
    pool[idx] = bg.screenshot;
  }
  return pool;
}

void prepare_dir(const fs::path& dir) {
  fs::create_directories(dir);
  fs::remove_all(dir / "images");
  fs::remove_all(dir / "screenshots");
  fs::create_directories(dir / "images");
}

void write_pool(const fs::path& dir, const std::vector<std::shared_ptr<const Image>>& pool) {
  if (pool.empty()) return;
  fs::create_directories(dir / "screenshots");
  for (std::size_t i = 0; i < pool.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04zu.ppm", i);
    write_image(pool[i] ? *pool[i] : Image(1, 1), dir / "screenshots" / buf);
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw DatasetError("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("missing file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_header(const fs::path& dir, const char* type, std::size_t count, int clip, std::size_t pool,
                  const json& meta) {
  json h = {{"format", kFormatVersion}, {"type", type},      {"count", count},
            {"clip", clip},             {"screenshots", pool}, {"meta", meta}};
  write_text(dir / "dataset.json", h.dump(2) + "\n");
}

json read_header(const fs::path& dir, const char* type) {
  json h;
  try {
    h = json::parse(read_text(dir / "dataset.json"));
  } catch (const json::exception& e) {
    throw DatasetError("corrupted dataset.json: " + std::string(e.what()));
  }
  if (h.value("format", 0) != kFormatVersion) throw DatasetError("unsupported dataset format");
  if (h.value("type", std::string()) != type) {
    throw DatasetError("dataset at " + dir.string() + " is not a " + type + " corpus");
  }
  return h;
}

std::vector<json> read_manifest(const fs::path& dir, std::size_t expected) {
  std::istringstream in(read_text(dir / "manifest.jsonl"));
  std::vector<json> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      records.push_back(json::parse(line));
    } catch (const json::exception&) {
      throw DatasetError("corrupted manifest line " + std::to_string(lineno));
    }
  }
  if (records.size() != expected) {
    throw DatasetError("manifest holds " + std::to_string(records.size()) + " records, header says " +
                       std::to_string(expected));
  }
  return records;
}

Image load_checked(const fs::path& dir, const json& rec, const char* path_key, const char* digest_key) {
  const fs::path p = dir / rec.at(path_key).get<std::string>();
  Image img;
  try {
    img = read_image(p);
  } catch (const ImageIoError& e) {
    throw DatasetError(e.what());
  }
  if (image_digest(img) != rec.at(digest_key).get<std::string>()) {
    throw DatasetError("checksum mismatch for " + p.string());
  }
  return img;
}

std::size_t verify_stride(double fraction) {
  if (fraction <= 0.0) return 0;
  return static_cast<std::size_t>(std::max(1.0, std::ceil(1.0 / std::min(fraction, 1.0))));
}

std::vector<std::shared_ptr<const Image>> read_pool(const fs::path& dir, std::size_t n) {
  if (n == 0) return {};
  auto pool = load_screenshots(dir / "screenshots");
  if (pool.size() != n) throw DatasetError("screenshot pool size mismatch");
  return pool;
}

template <typename F>
auto wrap_json(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw DatasetError(std::string("malformed manifest record: ") + e.what());
  } catch (const DomainError& e) {
    throw DatasetError(std::string("invalid label in manifest: ") + e.what());
  }
}

}  // namespace

void save_dataset(const PredictionDataset& ds, const fs::path& dir) {
  prepare_dir(dir);
  std::vector<const RenderContext*> ctxs;
  for (const auto& s : ds.samples) ctxs.push_back(&s.ctx);
  const auto pool = collect_pool(ctxs);
  write_pool(dir, pool);
  std::string manifest;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    const std::string name = image_name(i, "");
    write_image(s.image, dir / name);
    json rec = {{"index", i},
                {"image", name},
                {"digest", image_digest(s.image)},
                {"label", config_to_json(s.label)},
                {"ctx", context_to_json(s.ctx)},
                {"seed", s.seed}};
    manifest += rec.dump() + "\n";
  }
  write_text(dir / "manifest.jsonl", manifest);
  write_header(dir, "prediction", ds.samples.size(), 0, pool.size(), ds.meta);
}

void save_dataset(const DeltaDataset& ds, const fs::path& dir) {
  prepare_dir(dir);
  std::vector<const RenderContext*> ctxs;
  for (const auto& s : ds.samples) ctxs.push_back(&s.ctx);
  const auto pool = collect_pool(ctxs);
  write_pool(dir, pool);
  std::string manifest;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    const std::string a = image_name(i, "_a");
    const std::string b = image_name(i, "_b");
    write_image(s.original, dir / a);
    write_image(s.rendered, dir / b);
    json rec = {{"index", i},
                {"original", a},
                {"rendered", b},
                {"digest_original", image_digest(s.original)},
                {"digest_rendered", image_digest(s.rendered)},
                {"original_label", config_to_json(s.original_config)},
                {"rendered_label", config_to_json(s.rendered_config)},
                {"delta", delta_to_json(s.labels)},
                {"ctx", context_to_json(s.ctx)},
                {"seed", s.seed}};
    manifest += rec.dump() + "\n";
  }
  write_text(dir / "manifest.jsonl", manifest);
  write_header(dir, "delta", ds.samples.size(), ds.clip, pool.size(), ds.meta);
}

PredictionDataset load_prediction_dataset(const fs::path& dir, double verify_fraction) {
  const json h = read_header(dir, "prediction");
  const auto count = h.at("count").get<std::size_t>();
  const auto pool = read_pool(dir, h.value("screenshots", std::size_t{0}));
  const auto records = read_manifest(dir, count);
  PredictionDataset ds;
  ds.meta = h.value("meta", json::object());
  ds.samples.resize(count);
  const std::size_t stride = verify_stride(verify_fraction);
  for (std::size_t i = 0; i < count; ++i) {
    auto& s = ds.samples[i];
    const json& rec = records[i];
    wrap_json([&] {
      s.label = config_from_json(rec.at("label"));
      s.ctx = context_from_json(rec.at("ctx"), pool);
      s.seed = rec.at("seed").get<std::uint64_t>();
      s.image = load_checked(dir, rec, "image", "digest");
      return 0;
    });
    if (stride && i % stride == 0 && render(s.label, s.ctx) != s.image) {
      throw DatasetError("sample " + std::to_string(i) + " does not re-render from its label");
    }
  }
  return ds;
}

DeltaDataset load_delta_dataset(const fs::path& dir, double verify_fraction) {
  const json h = read_header(dir, "delta");
  const auto count = h.at("count").get<std::size_t>();
  const auto pool = read_pool(dir, h.value("screenshots", std::size_t{0}));
  const auto records = read_manifest(dir, count);
  DeltaDataset ds;
  ds.clip = h.at("clip").get<int>();
  ds.meta = h.value("meta", json::object());
  ds.samples.resize(count);
  const std::size_t stride = verify_stride(verify_fraction);
  for (std::size_t i = 0; i < count; ++i) {
    auto& s = ds.samples[i];
    const json& rec = records[i];
    wrap_json([&] {
      s.original_config = config_from_json(rec.at("original_label"));
      s.rendered_config = config_from_json(rec.at("rendered_label"));
      s.labels = delta_from_json(rec.at("delta"));
      s.ctx = context_from_json(rec.at("ctx"), pool);
      s.seed = rec.at("seed").get<std::uint64_t>();
      s.original = load_checked(dir, rec, "original", "digest_original");
      s.rendered = load_checked(dir, rec, "rendered", "digest_rendered");
      return 0;
    });
    if (s.labels != delta_between(s.original_config, s.rendered_config, ds.clip)) {
      throw DatasetError("sample " + std::to_string(i) + " delta does not match its labels");
    }
    if (stride && i % stride == 0 &&
        (render(s.original_config, s.ctx) != s.original || render(s.rendered_config, s.ctx) != s.rendered)) {
      throw DatasetError("pair " + std::to_string(i) + " does not re-render from its labels");
    }
  }
  return ds;
}

std::string manifest_digest(const fs::path& dir) {
  return hex64(fnv1a64(read_text(dir / "manifest.jsonl")));
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace uiattr
