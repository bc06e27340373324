#include "uiattr/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <set>
#include <sstream>

#include "uiattr/hash.hpp"
#include "uiattr/nn/checkpoint.hpp"
#include "uiattr/policy.hpp"

namespace uiattr {

namespace fs = std::filesystem;
using nlohmann::json;

// ----------------------------------------------------------------------------
// Profiles

Profile desk_profile() {
  Profile p;
  p.name = "desk";
  p.canvas_width = 96;
  p.canvas_height = 48;
  p.bounds = SamplingBounds::full();
  // components larger than the canvas cannot be placed
  p.bounds.set(AttributeKind::kHeight, 20, 36);
  p.bounds.set(AttributeKind::kWidth, 25, 72);
  p.train_samples = 2000;
  p.eval_samples = 300;
  p.delta_samples = 2000;
  p.channels = {8, 8, 16, 16, 32, 32};
  p.hidden = 256;
  return p;
}

Profile paper_profile() {
  Profile p;
  p.name = "paper";
  p.canvas_width = 330;
  p.canvas_height = 150;
  p.bounds = SamplingBounds::full();
  p.train_samples = 20000;
  p.eval_samples = 2000;
  p.delta_samples = 20000;
  p.channels = {32, 32, 64, 64, 128, 128};
  p.hidden = 256;
  return p;
}

Profile profile_named(std::string_view name) {
  if (name == "desk") return desk_profile();
  if (name == "paper") return paper_profile();
  throw ConfigError("unknown profile '" + std::string(name) + "' (expected desk or paper)");
}

// ----------------------------------------------------------------------------
// Configuration

namespace {

// Object reader that remembers which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) {
    used_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + ": wrong type");
    }
  }

  Section sub(const std::string& key) {
    used_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, where(key));
  }

  const json& raw(const std::string& key) const { return j_.at(key); }
  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.count(k)) throw ConfigError("unknown configuration key '" + where(k) + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

KindSet read_kinds(Section& s, const std::string& key, KindSet fallback) {
  if (!s.has(key)) return fallback;
  const json& v = s.raw(key);
  if (v.is_string() && v.get<std::string>() == "all") return KindSet::all();
  if (!v.is_array()) throw ConfigError(s.where(key) + ": expected a list of attribute names or \"all\"");
  KindSet out;
  for (const auto& e : v) {
    const auto k = e.is_string() ? parse_kind(e.get<std::string>()) : std::nullopt;
    if (!k) throw ConfigError(s.where(key) + ": unknown attribute " + e.dump());
    out.insert(*k);
  }
  return out;
}

json kinds_json(const KindSet& k) {
  if (k.is_all()) return "all";
  json a = json::array();
  for (auto x : k.kinds()) a.push_back(kind_name(x));
  return a;
}

void read_train(Section s, nn::TrainSpec& t) {
  s.read("epochs", t.epochs);
  s.read("patience", t.patience);
  s.read("batch_size", t.batch_size);
  s.read("learning_rate", t.learning_rate);
  s.read("momentum", t.momentum);
  s.read("plateau_factor", t.plateau_factor);
  s.read("plateau_patience", t.plateau_patience);
  s.read("clip_norm", t.clip_norm);
  s.finish();
  try {
    nn::validate(t);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

template <typename E, typename P>
void read_enum(Section& s, const std::string& key, E& out, P parse) {
  std::string v;
  if (!s.has(key)) return;
  s.read(key, v);
  try {
    out = parse(v);
  } catch (const std::exception& e) {
    throw ConfigError(s.where(key) + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

}  // namespace

GenOptions RunConfig::gen_options() const {
  GenOptions o;
  o.canvas_width = profile.canvas_width;
  o.canvas_height = profile.canvas_height;
  o.bounds = profile.bounds;
  o.jitter = jitter;
  o.background = background;
  o.subset_size = subset_size;
  o.jobs = jobs;
  return o;
}

DeltaOptions RunConfig::delta_options() const {
  DeltaOptions d;
  d.gen = gen_options();
  d.clip = clip;
  d.perturbed_kinds = perturbed_kinds;
  d.resample_probability = resample_probability;
  return d;
}

RunConfig run_config_from_json(const json& j, const fs::path& base_dir) {
  RunConfig c;
  Section root(j, "");
  std::string profile = "desk";
  root.read("profile", profile);
  c.profile = profile_named(profile);
  c.work_dir = "runs/" + profile;
  root.read("seed", c.seed);
  root.read("jobs", c.jobs);
  if (c.jobs < 1) throw ConfigError("jobs must be at least 1");
  std::string work = c.work_dir.string();
  root.read("work_dir", work);
  c.work_dir = resolve(base_dir, work);

  c.paths = {c.work_dir / "data/train", c.work_dir / "data/eval",     c.work_dir / "data/delta",
             c.work_dir / "data/dagger", c.work_dir / "models/predictors", c.work_dir / "models/policies",
             c.work_dir / "models/policies_dagger", c.work_dir / "out", c.work_dir / "reports"};
  {
    Section s = root.sub("paths");
    const auto path = [&](const char* key, fs::path& out) {
      std::string v;
      if (!s.has(key)) return;
      s.read(key, v);
      out = resolve(base_dir, v);
    };
    path("train_data", c.paths.train_data);
    path("eval_data", c.paths.eval_data);
    path("delta_data", c.paths.delta_data);
    path("dagger_data", c.paths.dagger_data);
    path("predictors", c.paths.predictors);
    path("policies", c.paths.policies);
    path("dagger_policies", c.paths.dagger_policies);
    path("out", c.paths.out);
    path("reports", c.paths.reports);
    s.finish();
  }
  {
    Section s = root.sub("data");
    s.read("train_samples", c.train_samples);
    s.read("eval_samples", c.eval_samples);
    s.read("delta_samples", c.delta_samples);
    s.read("subset_size", c.subset_size);
    if (c.subset_size < 1 || c.subset_size > static_cast<int>(kNumKinds)) {
      throw ConfigError("data.subset_size must be in [1, 12]");
    }
    read_enum(s, "background", c.background, parse_background_mode);
    read_enum(s, "jitter", c.jitter.mode, parse_jitter_mode);
    s.read("jitter_margin", c.jitter.margin);
    s.read("jitter_max_dx", c.jitter.max_dx);
    s.read("jitter_max_dy", c.jitter.max_dy);
    if (s.has("screenshots")) {
      std::string v;
      s.read("screenshots", v);
      c.screenshots = resolve(base_dir, v);
    }
    s.read("synthetic_screenshots", c.synthetic_screenshots);
    s.finish();
  }
  {
    Section s = root.sub("predictor");
    c.predictor_kinds = read_kinds(s, "kinds", c.predictor_kinds);
    s.read("channels", c.profile.channels);
    s.read("hidden", c.profile.hidden);
    s.read("val_fraction", c.val_fraction);
    read_enum(s, "padding", c.padding, parse_padding_mode);
    read_train(s.sub("train"), c.predictor_train);
    s.finish();
  }
  {
    Section s = root.sub("policy");
    c.policy_kinds = read_kinds(s, "kinds", c.policy_kinds);
    s.read("clip", c.clip);
    if (c.clip < 1) throw ConfigError("policy.clip must be at least 1");
    s.read("perturbed_kinds", c.perturbed_kinds);
    s.read("resample_probability", c.resample_probability);
    s.read("init_from_predictors", c.init_from_predictors);
    read_train(s.sub("train"), c.policy_train);
    s.finish();
  }
  {
    Section s = root.sub("dagger");
    s.read("rounds", c.dagger_rounds);
    s.read("per_round", c.dagger_per_round);
    if (c.dagger_rounds < 0) throw ConfigError("dagger.rounds must be >= 0");
    s.finish();
  }
  {
    Section s = root.sub("ensemble");
    s.read("k", c.perturbation.k);
    s.read("t", c.perturbation.t);
    if (c.perturbation.k < 1 || c.perturbation.t < 0) throw ConfigError("ensemble needs k >= 1 and t >= 0");
    s.finish();
  }
  {
    Section s = root.sub("color_clip");
    read_enum(s, "mode", c.color_clip.mode, parse_color_clip_mode);
    s.read("threshold", c.color_clip.threshold);
    s.read("top_n", c.color_clip.top_n);
    s.finish();
  }
  {
    Section s = root.sub("refine");
    s.read("patience", c.refine.patience);
    s.read("max_iters", c.refine.max_iters);
    s.read("random_init_max_iters", c.random_init_max_iters);
    s.read("same_value_heuristic", c.refine.same_value_heuristic);
    c.refine.refinable = read_kinds(s, "refinable", c.refine.refinable);
    s.read("random_init", c.random_init);
    s.read("policies", c.refine_policies);
    if (c.refine_policies != "dagger" && c.refine_policies != "base") {
      throw ConfigError("refine.policies must be \"dagger\" or \"base\"");
    }
    s.read("samples", c.refine_samples);
    if (c.refine.max_iters < 1 || c.random_init_max_iters < 1 || c.refine.patience < 1) {
      throw ConfigError("refine iteration limits must be positive");
    }
    s.finish();
  }
  {
    Section s = root.sub("baselines");
    if (s.has("metrics")) {
      std::vector<std::string> names;
      s.read("metrics", names);
      c.baseline_metrics.clear();
      for (const auto& n : names) {
        try {
          c.baseline_metrics.push_back(parse_baseline_metric(n));
        } catch (const std::exception& e) {
          throw ConfigError(std::string("baselines.metrics: ") + e.what());
        }
      }
    }
    s.read("samples", c.baseline_samples);
    s.finish();
  }
  root.finish();

  if (c.train_samples == 0) c.train_samples = c.profile.train_samples;
  if (c.eval_samples == 0) c.eval_samples = c.profile.eval_samples;
  if (c.delta_samples == 0) c.delta_samples = c.profile.delta_samples;
  c.predictor_train.seed = Rng::derive(c.seed, 11).next();
  c.policy_train.seed = Rng::derive(c.seed, 12).next();
  c.perturbation.seed = Rng::derive(c.seed, 13).next();
  c.refine.seed = Rng::derive(c.seed, 14).next();
  return c;
}

json run_config_to_json(const RunConfig& c) {
  const auto train = [](const nn::TrainSpec& t) {
    return json{{"epochs", t.epochs},
                {"patience", t.patience},
                {"batch_size", t.batch_size},
                {"learning_rate", t.learning_rate},
                {"momentum", t.momentum},
                {"plateau_factor", t.plateau_factor},
                {"plateau_patience", t.plateau_patience},
                {"clip_norm", t.clip_norm}};
  };
  json metrics = json::array();
  for (auto m : c.baseline_metrics) metrics.push_back(baseline_metric_name(m));
  json data{{"train_samples", c.train_samples},
            {"eval_samples", c.eval_samples},
            {"delta_samples", c.delta_samples},
            {"subset_size", c.subset_size},
            {"background", background_mode_name(c.background)},
            {"jitter", jitter_mode_name(c.jitter.mode)},
            {"jitter_margin", c.jitter.margin},
            {"jitter_max_dx", c.jitter.max_dx},
            {"jitter_max_dy", c.jitter.max_dy},
            {"synthetic_screenshots", c.synthetic_screenshots}};
  if (c.screenshots) data["screenshots"] = c.screenshots->string();
  return {{"profile", c.profile.name},
          {"seed", c.seed},
          {"jobs", c.jobs},
          {"work_dir", c.work_dir.string()},
          {"paths",
           {{"train_data", c.paths.train_data.string()},
            {"eval_data", c.paths.eval_data.string()},
            {"delta_data", c.paths.delta_data.string()},
            {"dagger_data", c.paths.dagger_data.string()},
            {"predictors", c.paths.predictors.string()},
            {"policies", c.paths.policies.string()},
            {"dagger_policies", c.paths.dagger_policies.string()},
            {"out", c.paths.out.string()},
            {"reports", c.paths.reports.string()}}},
          {"data", data},
          {"predictor",
           {{"kinds", kinds_json(c.predictor_kinds)},
            {"channels", c.profile.channels},
            {"hidden", c.profile.hidden},
            {"val_fraction", c.val_fraction},
            {"padding", padding_mode_name(c.padding)},
            {"train", train(c.predictor_train)}}},
          {"policy",
           {{"kinds", kinds_json(c.policy_kinds)},
            {"clip", c.clip},
            {"perturbed_kinds", c.perturbed_kinds},
            {"resample_probability", c.resample_probability},
            {"init_from_predictors", c.init_from_predictors},
            {"train", train(c.policy_train)}}},
          {"dagger", {{"rounds", c.dagger_rounds}, {"per_round", c.dagger_per_round}}},
          {"ensemble", {{"k", c.perturbation.k}, {"t", c.perturbation.t}}},
          {"color_clip",
           {{"mode", color_clip_mode_name(c.color_clip.mode)},
            {"threshold", c.color_clip.threshold},
            {"top_n", c.color_clip.top_n}}},
          {"refine",
           {{"patience", c.refine.patience},
            {"max_iters", c.refine.max_iters},
            {"random_init_max_iters", c.random_init_max_iters},
            {"same_value_heuristic", c.refine.same_value_heuristic},
            {"refinable", kinds_json(c.refine.refinable)},
            {"random_init", c.random_init},
            {"policies", c.refine_policies},
            {"samples", c.refine_samples}}},
          {"baselines", {{"metrics", metrics}, {"samples", c.baseline_samples}}}};
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

// ----------------------------------------------------------------------------
// Stages

namespace {

std::uint64_t stage_seed(const RunConfig& c, std::uint64_t tag) { return Rng::derive(c.seed, 100 + tag).next(); }

fs::path policies_for_refine(const RunConfig& c) {
  return c.refine_policies == "dagger" ? c.paths.dagger_policies : c.paths.policies;
}

std::vector<std::shared_ptr<const Image>> screenshot_pool(const RunConfig& c) {
  if (c.background != BackgroundMode::kScreenshot) return {};
  if (c.screenshots) return load_screenshots(*c.screenshots);
  return synthetic_screenshots(c.synthetic_screenshots, c.profile.canvas_width, c.profile.canvas_height,
                               stage_seed(c, 0));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_lines(const fs::path& path, const std::vector<json>& rows) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  for (const auto& r : rows) out << r.dump() << "\n";
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::vector<json> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("missing artifact " + path.string());
  std::vector<json> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(json::parse(line));
  }
  return rows;
}

json history_json(const nn::TrainHistory& h) {
  json epochs = json::array();
  for (const auto& e : h.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_loss", e.val_loss},
                      {"val_accuracy", e.val_accuracy},
                      {"learning_rate", e.learning_rate},
                      {"max_grad_norm", e.max_grad_norm}});
  }
  return {{"best_epoch", h.best_epoch}, {"best_val_loss", h.best_val_loss}, {"early_stopped", h.early_stopped},
          {"epochs", epochs}};
}

PredictorBundle load_predictors(const RunConfig& c) {
  PredictorBundle b = load_bundle(c.paths.predictors);
  b.perturbation = c.perturbation;
  b.color_clip = c.color_clip;
  return b;
}

std::vector<AttributeConfig> read_predictions(const RunConfig& c, std::size_t expect) {
  const auto rows = read_lines(c.paths.out / "predictions.jsonl");
  if (rows.size() != expect) {
    throw ConfigError("predictions.jsonl holds " + std::to_string(rows.size()) + " records, eval set has " +
                      std::to_string(expect));
  }
  std::vector<AttributeConfig> out;
  for (const auto& r : rows) out.push_back(config_from_json(r.at("config")));
  return out;
}

PredictionDataset subset(const PredictionDataset& d, std::size_t n) {
  PredictionDataset s;
  s.meta = d.meta;
  const std::size_t m = std::min(n, d.samples.size());
  s.samples.assign(d.samples.begin(), d.samples.begin() + static_cast<std::ptrdiff_t>(m));
  return s;
}

json stage_gen_data(const RunConfig& c, std::ostream& log) {
  GenOptions o = c.gen_options();
  o.screenshots = screenshot_pool(c);
  const auto t0 = std::chrono::steady_clock::now();
  const auto train = gen_prediction_dataset(c.train_samples, o, stage_seed(c, 1));
  save_dataset(train, c.paths.train_data);
  const auto eval = gen_prediction_dataset(c.eval_samples, o, stage_seed(c, 2));
  save_dataset(eval, c.paths.eval_data);
  log << "gen-data: " << train.samples.size() << " train, " << eval.samples.size() << " eval samples ("
      << seconds_since(t0) << " s)\n";
  return {{"train", train.samples.size()},
          {"eval", eval.samples.size()},
          {"train_manifest", manifest_digest(c.paths.train_data)},
          {"eval_manifest", manifest_digest(c.paths.eval_data)}};
}

json stage_train(const RunConfig& c, std::ostream& log) {
  const auto data = load_prediction_dataset(c.paths.train_data);
  PredictorTrainOptions opt;
  opt.channels = c.profile.channels;
  opt.hidden = c.profile.hidden;
  opt.train = c.predictor_train;
  opt.val_fraction = c.val_fraction;
  opt.padding = c.padding;
  json summary = json::object();
  for (auto k : c.predictor_kinds.kinds()) {
    const auto t0 = std::chrono::steady_clock::now();
    opt.target_range = c.profile.bounds.of(k);
    nn::TrainHistory h;
    KindModel m = train_kind_model(k, data, opt, &h);
    save_kind_model(m, c.paths.predictors);
    write_lines(c.paths.predictors / ("history_" + std::string(kind_name(k)) + ".jsonl"), {history_json(h)});
    const auto& best = h.epochs.at(static_cast<std::size_t>(h.best_epoch));
    log << "train " << kind_name(k) << ": " << h.epochs.size() << " epochs, best " << h.best_epoch
        << " val_loss " << h.best_val_loss << " val_acc " << best.val_accuracy << " (" << seconds_since(t0)
        << " s)\n";
    summary[std::string(kind_name(k))] = {{"epochs", h.epochs.size()},
                                          {"best_epoch", h.best_epoch},
                                          {"best_val_loss", h.best_val_loss},
                                          {"val_accuracy", best.val_accuracy}};
  }
  // settings used at inference time
  PredictorBundle b = load_bundle(c.paths.predictors);
  b.perturbation = c.perturbation;
  b.color_clip = c.color_clip;
  save_bundle(b, c.paths.predictors);
  return summary;
}

json stage_gen_delta(const RunConfig& c, std::ostream& log) {
  DeltaOptions o = c.delta_options();
  o.gen.screenshots = screenshot_pool(c);
  const auto t0 = std::chrono::steady_clock::now();
  const auto d = gen_delta_dataset(c.delta_samples, o, stage_seed(c, 3));
  save_dataset(d, c.paths.delta_data);
  log << "gen-delta-data: " << d.samples.size() << " pairs (" << seconds_since(t0) << " s)\n";
  return {{"pairs", d.samples.size()}, {"manifest", manifest_digest(c.paths.delta_data)}};
}

PolicyTrainOptions policy_options(const RunConfig& c) {
  PolicyTrainOptions opt;
  opt.channels = c.profile.channels;
  opt.hidden = c.profile.hidden;
  opt.train = c.policy_train;
  opt.val_fraction = c.val_fraction;
  opt.padding = c.padding;
  return opt;
}

json train_policies(const RunConfig& c, const DeltaDataset& data, PolicyBundle& bundle, PredictorBundle* init,
                    bool resume, const fs::path& out, std::ostream& log) {
  json summary = json::object();
  bundle.clip = data.clip;
  for (auto k : c.policy_kinds.kinds()) {
    const auto t0 = std::chrono::steady_clock::now();
    PolicyTrainOptions opt = policy_options(c);
    KindModel* m = init ? init->find(k) : nullptr;
    if (m && !resume) opt.init_from = &m->net;
    if (resume) opt.resume = bundle.find(k);
    nn::TrainHistory h;
    KindPolicy p = train_kind_policy(k, data, opt, &h);
    save_kind_policy(p, out);
    write_lines(out / ("history_" + std::string(kind_name(k)) + ".jsonl"), {history_json(h)});
    const auto& best = h.epochs.at(static_cast<std::size_t>(h.best_epoch));
    log << "train-policy " << kind_name(k) << ": " << h.epochs.size() << " epochs, best " << h.best_epoch
        << " val_acc " << best.val_accuracy << (opt.init_from ? " (encoder from predictor)" : "") << " ("
        << seconds_since(t0) << " s)\n";
    summary[std::string(kind_name(k))] = {{"epochs", h.epochs.size()},
                                          {"best_epoch", h.best_epoch},
                                          {"val_accuracy", best.val_accuracy}};
    bundle.policies[index_of(k)] = std::move(p);
  }
  return summary;
}

json stage_train_policy(const RunConfig& c, std::ostream& log) {
  const auto data = load_delta_dataset(c.paths.delta_data);
  std::optional<PredictorBundle> pred;
  if (c.init_from_predictors) {
    if (!fs::exists(c.paths.predictors / "bundle.json")) {
      throw ConfigError("policy.init_from_predictors is set but " + c.paths.predictors.string() +
                        " holds no predictors");
    }
    pred = load_predictors(c);
  }
  PolicyBundle bundle;
  return train_policies(c, data, bundle, pred ? &*pred : nullptr, false, c.paths.policies, log);
}

json stage_dagger(const RunConfig& c, std::ostream& log) {
  const auto base = load_delta_dataset(c.paths.delta_data);
  const auto train = load_prediction_dataset(c.paths.train_data);
  PredictorBundle pred = load_predictors(c);
  PolicyBundle policies = load_policies(c.paths.policies);
  fs::create_directories(c.paths.dagger_policies);
  // rounds = 0 keeps the base policies
  save_policies(policies, c.paths.dagger_policies);

  RefineSpec spec = c.refine;
  const StateVisitor visit = [&](const PredictionSample& t, Rng& rng) {
    const AttributeConfig y0 = fit_to_context(predict_config(pred, t.image).config, t.ctx);
    LearnedPolicy pol(policies, &pred, t.image, c.perturbation);
    LearnedCritic critic;
    RefineSpec s = spec;
    s.seed = rng.next();
    const RefineResult r = refine_loop(pol, critic, y0, t.ctx, s);
    std::vector<AttributeConfig> states{y0};
    for (const auto& step : r.trajectory) {
      if (step.accepted) states.push_back(step.config);
    }
    return states;
  };
  json rounds = json::array();
  const RetrainHook retrain = [&](const DeltaDataset& agg, int round) {
    log << "dagger round " << round << ": " << agg.samples.size() << " pairs\n";
    rounds.push_back(train_policies(c, agg, policies, nullptr, true, c.paths.dagger_policies, log));
  };
  const std::size_t per_round = c.dagger_per_round == 0 ? train.samples.size() : c.dagger_per_round;
  const auto agg = dagger_augment(visit, train.samples, base, c.dagger_rounds, per_round,
                                  stage_seed(c, 4), retrain);
  save_dataset(agg, c.paths.dagger_data);
  log << "dagger: " << (agg.samples.size() - base.samples.size()) << " pairs added\n";
  return {{"pairs", agg.samples.size()}, {"added", agg.samples.size() - base.samples.size()}, {"rounds", rounds}};
}

json stage_infer(const RunConfig& c, std::ostream& log) {
  const auto eval = load_prediction_dataset(c.paths.eval_data);
  PredictorBundle pred = load_predictors(c);
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<json> rows;
  std::size_t failures = 0;
  for (std::size_t i = 0; i < eval.samples.size(); ++i) {
    const ConfigPrediction p = predict_config(pred, eval.samples[i].image);
    json conf = json::object(), fail = json::array();
    for (auto k : kAllKinds) conf[std::string(kind_name(k))] = p.confidence[index_of(k)];
    for (const auto& [k, why] : p.failures) fail.push_back({{"kind", kind_name(k)}, {"reason", why}});
    failures += p.failures.size();
    rows.push_back({{"index", i}, {"config", config_to_json(p.config)}, {"confidence", conf}, {"failures", fail}});
  }
  write_lines(c.paths.out / "predictions.jsonl", rows);
  log << "infer: " << rows.size() << " predictions, " << failures << " per-kind failures (" << seconds_since(t0)
      << " s)\n";
  return {{"predictions", rows.size()}, {"failures", failures}};
}

json stage_refine(const RunConfig& c, std::ostream& log) {
  const auto eval = subset(load_prediction_dataset(c.paths.eval_data), c.refine_samples);
  auto init = read_predictions(c, load_prediction_dataset(c.paths.eval_data, 0.0).samples.size());
  init.resize(eval.samples.size());
  PredictorBundle pred = load_predictors(c);
  PolicyBundle policies = load_policies(policies_for_refine(c));
  RefineSpec spec = c.refine;
  KindSet randomize;
  if (c.random_init) {
    randomize = c.refine.refinable;
    spec.max_iters = c.random_init_max_iters;
  }
  const auto cases = make_cases(eval, init, randomize, c.profile.bounds, stage_seed(c, 5));
  const auto t0 = std::chrono::steady_clock::now();
  const RefinementRun run = run_refinement(
      cases, [&](const RefinementCase& rc) { return std::make_unique<LearnedPolicy>(policies, &pred, rc.image, c.perturbation); },
      [](const RefinementCase&) { return std::make_unique<LearnedCritic>(); }, spec, KindSet::all(), "refine");
  std::vector<json> rows, traj;
  for (std::size_t i = 0; i < run.results.size(); ++i) {
    const auto& r = run.results[i];
    rows.push_back({{"index", i},
                    {"initial", config_to_json(r.initial)},
                    {"config", config_to_json(r.config)},
                    {"initial_cost", r.initial_cost},
                    {"cost", r.cost},
                    {"accepted", r.accepted},
                    {"stop", r.stop_reason}});
    for (const auto& s : r.trajectory) {
      json j = step_to_json(s);
      j["index"] = i;
      traj.push_back(std::move(j));
    }
  }
  write_lines(c.paths.out / "refined.jsonl", rows);
  write_lines(c.paths.out / "trajectories.jsonl", traj);
  log << "refine: " << rows.size() << " samples, overall " << run.initial.overall() << " -> "
      << run.refined.overall() << " (" << seconds_since(t0) << " s)\n";
  return {{"samples", rows.size()}, {"initial", run.initial.overall()}, {"refined", run.refined.overall()}};
}

json stage_eval(const RunConfig& c, std::ostream& log) {
  const auto eval = load_prediction_dataset(c.paths.eval_data, 0.0);
  const auto pred = read_predictions(c, eval.samples.size());
  std::vector<AttributeConfig> labels;
  for (const auto& s : eval.samples) labels.push_back(s.label);
  std::vector<EvalReport> reports;
  reports.push_back(accuracy(pred, labels, KindSet::all(), "predicted"));
  reports.back().meta = {{"eval_manifest", manifest_digest(c.paths.eval_data)}, {"seed", c.seed}};

  const fs::path refined = c.paths.out / "refined.jsonl";
  if (fs::exists(refined)) {
    std::vector<AttributeConfig> init, fin, truth;
    for (const auto& r : read_lines(refined)) {
      const auto i = r.at("index").get<std::size_t>();
      if (i >= labels.size()) throw ConfigError("refined.jsonl refers to sample " + std::to_string(i));
      init.push_back(config_from_json(r.at("initial")));
      fin.push_back(config_from_json(r.at("config")));
      truth.push_back(labels[i]);
    }
    EvalReport a = accuracy(init, truth, KindSet::all(), "initial");
    EvalReport b = accuracy(fin, truth, KindSet::all(), "refined");
    b.meta = {{"delta", b.overall() - a.overall()}, {"random_init", c.random_init}};
    reports.push_back(std::move(a));
    reports.push_back(std::move(b));
  }
  fs::create_directories(c.paths.reports);
  {
    std::ofstream out(c.paths.reports / "eval.jsonl", std::ios::trunc);
    write_reports(reports, out);
  }
  const std::string table = format_table(reports);
  {
    std::ofstream out(c.paths.reports / "eval.txt", std::ios::trunc);
    out << table;
  }
  log << table;
  json overall = json::object();
  for (const auto& r : reports) overall[r.name] = r.overall();
  return {{"reports", reports.size()}, {"overall", overall}, {"checksum", reports_checksum(reports)}};
}

json stage_baselines(const RunConfig& c, std::ostream& log) {
  const auto eval = subset(load_prediction_dataset(c.paths.eval_data), c.baseline_samples);
  auto init = read_predictions(c, load_prediction_dataset(c.paths.eval_data, 0.0).samples.size());
  init.resize(eval.samples.size());
  PredictorBundle pred = load_predictors(c);
  PolicyBundle policies = load_policies(policies_for_refine(c));
  RefineSpec spec = c.refine;
  spec.max_iters = c.random_init_max_iters;
  const auto cases = make_cases(eval, init, c.refine.refinable, c.profile.bounds, stage_seed(c, 6));
  const PolicyFactory policy = [&](const RefinementCase& rc) {
    return std::make_unique<LearnedPolicy>(policies, &pred, rc.image, c.perturbation);
  };
  std::vector<EvalReport> reports;
  const auto t0 = std::chrono::steady_clock::now();
  RefinementRun learned = run_refinement(
      cases, policy, [](const RefinementCase&) { return std::make_unique<LearnedCritic>(); }, spec,
      c.refine.refinable, "learned");
  learned.initial.name = "random_init";
  reports.push_back(learned.initial);
  reports.push_back(learned.refined);
  reports.back().name = "learned";
  for (auto m : c.baseline_metrics) {
    RefinementRun r = run_refinement(
        cases, policy,
        [m](const RefinementCase& rc) { return std::make_unique<ImageCritic>(m, rc.image, rc.truth, rc.ctx); }, spec,
        c.refine.refinable, std::string(baseline_metric_name(m)));
    reports.push_back(r.refined);
    reports.back().name = std::string(baseline_metric_name(m));
  }
  fs::create_directories(c.paths.reports);
  {
    std::ofstream out(c.paths.reports / "baselines.jsonl", std::ios::trunc);
    write_reports(reports, out);
  }
  const std::string table = format_table(reports);
  {
    std::ofstream out(c.paths.reports / "baselines.txt", std::ios::trunc);
    out << table;
  }
  log << table << "baselines: " << seconds_since(t0) << " s\n";
  json overall = json::object();
  for (const auto& r : reports) overall[r.name] = r.overall();
  return {{"overall", overall}, {"checksum", reports_checksum(reports)}};
}

json stage_report(const RunConfig& c, std::ostream& log) {
  json out = json::object();
  for (const char* name : {"eval", "baselines"}) {
    const fs::path p = c.paths.reports / (std::string(name) + ".jsonl");
    if (!fs::exists(p)) continue;
    std::ifstream in(p);
    const auto reports = read_reports(in);
    log << "== " << name << "\n" << format_table(reports);
    out[name] = reports_checksum(reports);
  }
  if (out.empty()) throw ConfigError("no reports under " + c.paths.reports.string());

  // visual sheet for the first refined samples
  const fs::path refined = c.paths.out / "refined.jsonl";
  if (fs::exists(refined) && fs::exists(c.paths.predictors / "bundle.json")) {
    const auto eval = load_prediction_dataset(c.paths.eval_data, 0.0);
    PredictorBundle pred = load_predictors(c);
    const KindModel* first = nullptr;
    for (auto k : kAllKinds) {
      if (pred.find(k)) {
        first = pred.find(k);
        break;
      }
    }
    std::vector<SheetRow> rows;
    for (const auto& r : read_lines(refined)) {
      if (rows.size() >= 8) break;
      const auto& s = eval.samples.at(r.at("index").get<std::size_t>());
      SheetRow row;
      row.input = s.image;
      row.preprocessed = first ? prepare_input(s.image, first->input_width, first->input_height, first->padding)
                               : s.image;
      row.predicted = render(fit_to_context(config_from_json(r.at("initial")), s.ctx), s.ctx);
      row.refined = render(config_from_json(r.at("config")), s.ctx);
      rows.push_back(std::move(row));
    }
    if (!rows.empty()) {
      write_image(contact_sheet(rows), c.paths.reports / "sheet.ppm");
      out["sheet"] = (c.paths.reports / "sheet.ppm").string();
      log << "report: wrote " << (c.paths.reports / "sheet.ppm").string() << "\n";
    }
  }
  return out;
}

// The raising module when the exception type names one, else the stage's own.
std::string module_of(const std::string& command, const std::exception& e) {
  if (dynamic_cast<const DomainError*>(&e)) return "attribute-schema";
  if (dynamic_cast<const GeometryError*>(&e) || dynamic_cast<const ImageIoError*>(&e)) return "renderer";
  if (dynamic_cast<const DatasetError*>(&e)) return "dataset";
  if (dynamic_cast<const nn::CheckpointError*>(&e) || dynamic_cast<const nn::TrainingError*>(&e)) return "neuralnet";
  if (dynamic_cast<const EvalError*>(&e)) return "evalharness";
  if (command == "gen-data" || command == "gen-delta-data" || command == "dagger") return "dataset";
  if (command == "train" || command == "infer") return "predictor";
  if (command == "train-policy" || command == "refine") return "refine";
  return "evalharness";
}

}  // namespace

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"gen-data", "train",  "gen-delta-data", "train-policy", "dagger",
                                                 "infer",    "refine", "eval",           "baselines",    "report"};
  return names;
}

StagePlan plan_stage(const RunConfig& c, const std::string& command) {
  const auto& p = c.paths;
  const fs::path policies = policies_for_refine(c);
  StagePlan s{command, {}, {}};
  if (command == "gen-data") {
    if (c.screenshots && c.background == BackgroundMode::kScreenshot) s.inputs = {*c.screenshots};
    s.outputs = {p.train_data, p.eval_data};
  } else if (command == "train") {
    s.inputs = {p.train_data};
    s.outputs = {p.predictors};
  } else if (command == "gen-delta-data") {
    if (c.screenshots && c.background == BackgroundMode::kScreenshot) s.inputs = {*c.screenshots};
    s.outputs = {p.delta_data};
  } else if (command == "train-policy") {
    s.inputs = {p.delta_data};
    if (c.init_from_predictors) s.inputs.push_back(p.predictors);
    s.outputs = {p.policies};
  } else if (command == "dagger") {
    s.inputs = {p.delta_data, p.train_data, p.predictors, p.policies};
    s.outputs = {p.dagger_data, p.dagger_policies};
  } else if (command == "infer") {
    s.inputs = {p.eval_data, p.predictors};
    s.outputs = {p.out / "predictions.jsonl"};
  } else if (command == "refine") {
    s.inputs = {p.eval_data, p.out / "predictions.jsonl", p.predictors, policies};
    s.outputs = {p.out / "refined.jsonl", p.out / "trajectories.jsonl"};
  } else if (command == "eval") {
    s.inputs = {p.eval_data, p.out / "predictions.jsonl"};
    s.outputs = {p.reports / "eval.jsonl", p.reports / "eval.txt"};
  } else if (command == "baselines") {
    s.inputs = {p.eval_data, p.out / "predictions.jsonl", p.predictors, policies};
    s.outputs = {p.reports / "baselines.jsonl", p.reports / "baselines.txt"};
  } else if (command == "report") {
    s.inputs = {p.reports};
    s.outputs = {p.reports / "sheet.ppm"};
  } else {
    throw ConfigError("unknown command '" + command + "'");
  }
  return s;
}

json run_stage(const RunConfig& c, const std::string& command, std::ostream& log) {
  const StagePlan plan = plan_stage(c, command);
  std::vector<std::string> missing;
  for (const auto& in : plan.inputs) {
    if (!fs::exists(in)) missing.push_back(in.string());
  }
  if (!missing.empty()) {
    std::string msg = command + ": missing inputs:";
    for (const auto& m : missing) msg += " " + m;
    throw ConfigError(msg);
  }
  try {
    if (command == "gen-data") return stage_gen_data(c, log);
    if (command == "train") return stage_train(c, log);
    if (command == "gen-delta-data") return stage_gen_delta(c, log);
    if (command == "train-policy") return stage_train_policy(c, log);
    if (command == "dagger") return stage_dagger(c, log);
    if (command == "infer") return stage_infer(c, log);
    if (command == "refine") return stage_refine(c, log);
    if (command == "eval") return stage_eval(c, log);
    if (command == "baselines") return stage_baselines(c, log);
    return stage_report(c, log);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(module_of(command, e), command + ": " + e.what());
  }
}

json run_pipeline(const RunConfig& c, std::ostream& log) {
  json out = json::object();
  for (const char* cmd : {"gen-data", "train", "gen-delta-data", "train-policy", "dagger", "infer", "refine", "eval"}) {
    out[cmd] = run_stage(c, cmd, log);
  }
  return out;
}

std::vector<EvalReport> load_eval_reports(const RunConfig& c) {
  std::ifstream in(c.paths.reports / "eval.jsonl");
  if (!in) throw ConfigError("missing artifact " + (c.paths.reports / "eval.jsonl").string());
  return read_reports(in);
}

}  // namespace uiattr
