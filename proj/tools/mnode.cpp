#include "mnode/commands.hpp"
#include "mnode/error.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;
  std::string out;
};

void add_config_args(CLI::App* cmd, ConfigArgs& a) {
  cmd->add_option("-c,--config", a.path, "JSON config file");
  cmd->add_option("--set", a.overrides, "dotted-key override, e.g. trainer.seed=7")->take_all();
  cmd->add_option("-o,--out", a.out, "output directory (overrides output_dir)");
}

mnode::RunConfig resolve(const ConfigArgs& a) {
  json doc = a.path.empty() ? json::object() : mnode::load_json_file(a.path);
  for (const auto& s : a.overrides) mnode::apply_override(doc, s);
  if (!a.out.empty()) doc["output_dir"] = a.out;
  return mnode::parse_run_config(doc);
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const std::string& flag) {
  std::vector<T> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(static_cast<T>(v));
    } catch (const std::exception&) {
      throw mnode::ConfigError(flag + ": '" + item + "' is not a non-negative integer");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Manifold-constrained neural ODE toolkit"};
  app.require_subcommand(1);

  ConfigArgs train_args, graph_args, sphere_args, sens_args;
  auto* train = app.add_subcommand("train", "train a classifier and write a run directory");
  add_config_args(train, train_args);

  std::string eval_run, eval_split = "test";
  auto* eval = app.add_subcommand("eval", "evaluate a finished run");
  eval->add_option("-r,--run", eval_run, "run directory")->required();
  eval->add_option("--split", eval_split, "train or test");

  auto* graph = app.add_subcommand("graph", "export the fuzzy k-NN graph of the training split");
  add_config_args(graph, graph_args);
  std::optional<double> threshold;
  graph->add_option("--threshold", threshold, "keep edges with p_ij above this");

  auto* sphere = app.add_subcommand("sphere-demo", "ambient vs chart NODE on the unit sphere");
  add_config_args(sphere, sphere_args);

  auto* sens = app.add_subcommand("sensitivity", "sweep the latent dimension");
  add_config_args(sens, sens_args);
  std::string dims_arg, seeds_arg;
  sens->add_option("--dims", dims_arg, "comma-separated latent dimensions (default from config)");
  sens->add_option("--seeds", seeds_arg, "comma-separated seeds (default from config)");

  std::vector<std::string> nfe_runs;
  std::string nfe_out = "runs/nfe_report";
  auto* nfe = app.add_subcommand("nfe-report", "compare per-epoch NFE across runs");
  nfe->add_option("runs", nfe_runs, "run directories")->required();
  nfe->add_option("-o,--out", nfe_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*train) {
      const auto cfg = resolve(train_args);
      const auto s = mnode::cmd_train(cfg, cfg.output_dir);
      std::cout << "epochs " << s.epochs.size() << "  test_accuracy " << s.test.accuracy << "  -> "
                << cfg.output_dir << '\n';
    } else if (*eval) {
      const auto r = mnode::cmd_eval(eval_run, eval_split);
      std::cout << json{{"split", eval_split}, {"accuracy", r.accuracy}, {"nfe", r.nfe}}.dump() << '\n';
    } else if (*graph) {
      auto cfg = resolve(graph_args);
      if (threshold) cfg.graph_threshold = *threshold;
      mnode::cmd_graph(cfg, cfg.output_dir);
      std::cout << "graph -> " << cfg.output_dir << '\n';
    } else if (*sphere) {
      const auto cfg = resolve(sphere_args);
      const auto r = mnode::cmd_sphere_demo(cfg, cfg.output_dir);
      for (const auto& m : {r.ambient, r.chart})
        std::cout << m.name << "  test_mse " << m.test_mse << "  max_norm_drift " << m.max_norm_drift << '\n';
    } else if (*sens) {
      auto cfg = resolve(sens_args);
      if (sens->count("--seeds")) cfg.seeds = parse_list<std::uint64_t>(seeds_arg, "--seeds");
      const auto d = sens->count("--dims") ? parse_list<mnode::Index>(dims_arg, "--dims") : cfg.sensitivity_dims;
      const auto rows = mnode::cmd_sensitivity(cfg, d, cfg.output_dir);
      for (const auto& r : rows) {
        std::cout << "m " << r.m << "  seed " << r.seed;
        if (r.error.empty())
          std::cout << "  test_accuracy " << r.test_accuracy << '\n';
        else
          std::cout << "  failed: " << r.error << '\n';
      }
    } else if (*nfe) {
      const std::vector<fs::path> dirs(nfe_runs.begin(), nfe_runs.end());
      std::cout << mnode::cmd_nfe_report(dirs, nfe_out).dump(2) << '\n';
    }
  } catch (const mnode::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
