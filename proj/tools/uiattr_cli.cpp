// uiattr: data generation, training, inference, refinement and evaluation
// driven by one JSON run configuration.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "uiattr/attributes.hpp"
#include "uiattr/dataset.hpp"
#include "uiattr/eval.hpp"
#include "uiattr/image.hpp"
#include "uiattr/nn/checkpoint.hpp"
#include "uiattr/nn/train.hpp"
#include "uiattr/pipeline.hpp"
#include "uiattr/render.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace uiattr;

namespace {

struct Common {
  std::string config;
  bool dry_run = false;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& o) {
  cmd->add_option("-c,--config", o.config, "Run configuration (JSON)")->envname(kConfigEnv);
  cmd->add_flag("--dry-run", o.dry_run, "Print the resolved configuration and plan, then exit");
  cmd->add_option("-j,--jobs", o.jobs, "Worker cap")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "Override the configuration seed");
}

RunConfig resolve_config(const Common& o) {
  json j = json::object();
  fs::path base = ".";
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw ConfigError("cannot open config " + o.config);
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config " + o.config + ": " + e.what());
    }
    base = fs::path(o.config).parent_path();
    if (base.empty()) base = ".";
  }
  // flags take precedence over the file
  if (o.seed) j["seed"] = *o.seed;
  if (o.jobs) j["jobs"] = *o.jobs;
  return run_config_from_json(j, base);
}

json plan_json(const StagePlan& p) {
  json in = json::array(), out = json::array();
  for (const auto& x : p.inputs) in.push_back({{"path", x.string()}, {"exists", fs::exists(x)}});
  for (const auto& x : p.outputs) out.push_back(x.string());
  return {{"command", p.command}, {"inputs", in}, {"outputs", out}};
}

int fail(const std::string& command, const std::string& module, const std::string& kind, const std::string& msg,
         int code) {
  const json err{{"error", {{"command", command}, {"module", module}, {"kind", kind}, {"message", msg}}}};
  std::cerr << err.dump() << "\n";
  return code;
}

// render: one component from a small JSON document
struct RenderArgs {
  std::string input;
  std::string output;
  bool dry_run = false;
};

int run_render(const RenderArgs& a) {
  std::ifstream in(a.input);
  if (!in) throw ConfigError("cannot open render config " + a.input);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("render config " + a.input + ": " + e.what());
  }
  for (const auto& [k, v] : j.items()) {
    if (k != "attributes" && k != "context" && k != "output") {
      throw ConfigError("unknown render key '" + k + "'");
    }
  }
  const AttributeConfig cfg = j.contains("attributes") ? config_from_json(j.at("attributes")) : canonical_config();
  RenderContext ctx;
  if (j.contains("context")) ctx = context_from_json(j.at("context"));
  fs::path out = a.output;
  if (out.empty()) {
    if (!j.contains("output")) throw ConfigError("render: no output path (use --out or \"output\")");
    out = fs::path(a.input).parent_path() / j.at("output").get<std::string>();
  }
  if (a.dry_run) {
    std::cout << json{{"command", "render"},
                      {"attributes", config_to_json(cfg)},
                      {"context", context_to_json(ctx)},
                      {"outputs", {out.string()}}}
                     .dump(2)
              << "\n";
    return 0;
  }
  const Image img = render(cfg, ctx);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_image(img, out);
  std::cout << json{{"output", out.string()}, {"digest", image_digest(img)}}.dump() << "\n";
  return 0;
}

std::string module_for_exception(const std::exception& e, const std::string& command) {
  if (const auto* s = dynamic_cast<const StageError*>(&e)) return s->module();
  if (dynamic_cast<const ConfigError*>(&e)) return "cli";
  if (dynamic_cast<const DomainError*>(&e)) return "attribute-schema";
  if (dynamic_cast<const GeometryError*>(&e) || dynamic_cast<const ImageIoError*>(&e)) return "renderer";
  if (dynamic_cast<const DatasetError*>(&e)) return "dataset";
  if (dynamic_cast<const nn::CheckpointError*>(&e) || dynamic_cast<const nn::TrainingError*>(&e)) return "neuralnet";
  if (dynamic_cast<const EvalError*>(&e)) return "evalharness";
  return command == "render" ? "renderer" : "cli";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Button attribute inference from pixels: data, training, refinement and evaluation"};
  app.require_subcommand(1);

  RenderArgs render_args;
  CLI::App* render_cmd = app.add_subcommand("render", "Render one component from a JSON description to PPM");
  render_cmd->add_option("input", render_args.input, "JSON with attributes, context and output")->required();
  render_cmd->add_option("-o,--out", render_args.output, "Output PPM (overrides \"output\")");
  render_cmd->add_flag("--dry-run", render_args.dry_run, "Print what would be rendered");

  struct Entry {
    const char* name;
    const char* help;
  };
  const Entry entries[] = {
      {"gen-data", "Generate the training and evaluation datasets"},
      {"train", "Train one prediction network per attribute"},
      {"gen-delta-data", "Generate image pairs labelled with clipped attribute deltas"},
      {"train-policy", "Train the siamese delta policies"},
      {"dagger", "Aggregate states visited by the learned policies and retrain"},
      {"infer", "Predict attributes for the evaluation set"},
      {"refine", "Refine predictions with the delta policies"},
      {"eval", "Score predictions and refinements"},
      {"baselines", "Compare the learned cost with image-similarity costs"},
      {"report", "Print report tables and write the visual sheet"},
      {"pipeline", "Run gen-data through eval"},
  };
  Common common;
  std::vector<std::pair<std::string, CLI::App*>> cmds;
  for (const auto& e : entries) {
    CLI::App* c = app.add_subcommand(e.name, e.help);
    add_common(c, common);
    cmds.emplace_back(e.name, c);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::string command = "render";
  for (const auto& [name, c] : cmds) {
    if (c->parsed()) command = name;
  }

  try {
    if (command == "render") return run_render(render_args);
    const RunConfig cfg = resolve_config(common);
    if (common.dry_run) {
      json plan = json::array();
      if (command == "pipeline") {
        for (const char* s : {"gen-data", "train", "gen-delta-data", "train-policy", "dagger", "infer", "refine",
                              "eval"}) {
          plan.push_back(plan_json(plan_stage(cfg, s)));
        }
      } else {
        plan.push_back(plan_json(plan_stage(cfg, command)));
      }
      std::cout << json{{"config", run_config_to_json(cfg)}, {"plan", plan}}.dump(2) << "\n";
      return 0;
    }
    const json summary = command == "pipeline" ? run_pipeline(cfg, std::cerr) : run_stage(cfg, command, std::cerr);
    std::cout << json{{"command", command}, {"summary", summary}}.dump() << "\n";
    return 0;
  } catch (const ConfigError& e) {
    return fail(command, "cli", "config", e.what(), 2);
  } catch (const StageError& e) {
    return fail(command, e.module(), "stage", e.what(), 1);
  } catch (const std::exception& e) {
    return fail(command, module_for_exception(e, command), "error", e.what(), 1);
  }
}
