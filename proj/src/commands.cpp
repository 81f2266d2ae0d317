#include "mnode/commands.hpp"

#include "mnode/checkpoint.hpp"
#include "mnode/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

namespace mnode {

namespace fs = std::filesystem;
using nlohmann::json;

json epoch_metrics_json(const EpochMetrics& m) {
  return {{"epoch", m.epoch},
          {"loss", m.loss},
          {"l1", m.l1},
          {"l2", m.l2},
          {"nfe_forward", m.nfe_forward},
          {"nfe_backward", m.nfe_backward},
          {"train_accuracy", m.train_accuracy},
          {"test_accuracy", m.test_accuracy ? json(*m.test_accuracy) : json(nullptr)}};
}

json epoch_timing_json(const EpochMetrics& m) {
  return {{"epoch", m.epoch}, {"wall_time_s", m.wall_time_s}};
}

namespace {

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

void write_json(const fs::path& p, const json& j) { open_out(p) << j.dump(2) << '\n'; }

// Shortest round-trip decimal form.
std::string num(double v) { return json(v).dump(); }

json eval_json(const EvalResult& r, const std::string& split) {
  return {{"split", split}, {"accuracy", r.accuracy}, {"confusion", r.confusion}, {"nfe", r.nfe}};
}

template <typename Fn>
void for_each_jsonl(const fs::path& path, Fn fn) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line), line_no);
    } catch (const json::exception& e) {
      throw FormatError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
}

}  // namespace

std::vector<MetricsRow> read_run_metrics(const fs::path& run_dir) {
  std::map<int, double> timing;
  const fs::path timing_path = run_dir / "timing.jsonl";
  if (fs::exists(timing_path))
    for_each_jsonl(timing_path, [&](const json& j, std::size_t) {
      timing[j.at("epoch").get<int>()] = j.at("wall_time_s").get<double>();
    });
  std::string run = run_dir.filename().string();
  if (run.empty() || run == ".") run = run_dir.parent_path().filename().string();
  std::vector<MetricsRow> rows;
  for_each_jsonl(run_dir / "metrics.jsonl", [&](const json& j, std::size_t line) {
    if (!j.is_object()) throw FormatError("metrics line " + std::to_string(line) + " is not an object", line);
    MetricsRow r;
    r.run = run;
    r.epoch = j.at("epoch").get<int>();
    r.nfe_forward = j.at("nfe_forward").get<std::int64_t>();
    r.nfe_backward = j.at("nfe_backward").get<std::int64_t>();
    r.loss = j.at("loss").get<double>();
    if (j.contains("test_accuracy") && !j["test_accuracy"].is_null())
      r.test_accuracy = j["test_accuracy"].get<double>();
    if (const auto it = timing.find(r.epoch); it != timing.end()) r.wall_time_s = it->second;
    rows.push_back(r);
  });
  return rows;
}

double least_squares_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("least_squares_slope: length mismatch");
  if (x.size() < 2) return 0.0;
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx == 0.0 ? 0.0 : sxy / sxx;
}

TrainSummary cmd_train(const RunConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_json(out_dir / "config.json", to_json(cfg));
  const auto [tr, te] = load_datasets(cfg.dataset);
  std::ofstream metrics = open_out(out_dir / "metrics.jsonl");
  std::ofstream timing = open_out(out_dir / "timing.jsonl");
  TrainSummary s;
  Model model = make_model(cfg.trainer, tr.d(), std::max(tr.num_classes, te.num_classes));
  s.epochs = train_model(model, cfg.trainer, tr, &te, [&](const EpochMetrics& m) {
    metrics << epoch_metrics_json(m).dump() << '\n' << std::flush;
    timing << epoch_timing_json(m).dump() << '\n' << std::flush;
  });
  save_checkpoint(model.params, out_dir / "checkpoint.json");
  s.test = evaluate(model, te, cfg.trainer.solver);
  write_json(out_dir / "eval.json", eval_json(s.test, "test"));
  return s;
}

EvalResult cmd_eval(const fs::path& run_dir, const std::string& split_name) {
  if (split_name != "train" && split_name != "test")
    throw ConfigError("eval split must be 'train' or 'test'");
  const RunConfig cfg = parse_run_config(load_json_file(run_dir / "config.json"));
  const auto [tr, te] = load_datasets(cfg.dataset);
  Model model = make_model(cfg.trainer, tr.d(), std::max(tr.num_classes, te.num_classes));
  const ParamStore saved = load_checkpoint(run_dir / "checkpoint.json");
  for (const auto& name : model.params.values().names()) {
    if (!saved.contains(name)) throw FormatError("checkpoint lacks parameter " + name, 0);
    const Mat& v = saved.at(name);
    Mat& dst = model.params.at(name);
    if (v.rows() != dst.rows() || v.cols() != dst.cols())
      throw FormatError("checkpoint parameter " + name + " has the wrong shape", 0);
    dst = v;
  }
  return evaluate(model, split_name == "train" ? tr : te, cfg.trainer.solver);
}

void cmd_graph(const RunConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_json(out_dir / "config.json", to_json(cfg));
  const auto [tr, te] = load_datasets(cfg.dataset);
  const NeighborGraph g = build_graph(tr.x, cfg.trainer.graph);
  write_edge_csv(g, out_dir / "edges.csv");
  write_edge_csv(g, out_dir / "edges_filtered.csv", cfg.graph_threshold);
  write_graph_sidecar(g, out_dir / "graph.json");
  std::vector<Index> order;
  const Mat w = label_sorted_weights(g, tr.y, &order);
  std::ofstream out = open_out(out_dir / "weights_sorted.csv");
  out.precision(17);
  for (Index i = 0; i < w.rows(); ++i) {
    for (Index j = 0; j < w.cols(); ++j) {
      if (j) out << ',';
      out << w(i, j);
    }
    out << '\n';
  }
  std::ofstream ord = open_out(out_dir / "weights_order.csv");
  ord << "position,index,label\n";
  for (std::size_t p = 0; p < order.size(); ++p) ord << p << ',' << order[p] << ',' << tr.y[order[p]] << '\n';
}

SphereReport cmd_sphere_demo(const RunConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_json(out_dir / "config.json", to_json(cfg));
  SphereReport r = run_sphere_experiment(cfg.sphere);
  write_sphere_trajectories_csv(r, out_dir / "sphere_trajectories.csv");
  write_sphere_summary_json(r, out_dir / "sphere_summary.json");
  return r;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace

std::vector<SensitivityRow> cmd_sensitivity(const RunConfig& cfg, std::span<const Index> dims,
                                            const fs::path& out_dir) {
  if (dims.empty()) throw ConfigError("sensitivity: the dims list is empty");
  if (cfg.seeds.empty()) throw ConfigError("sensitivity: the seeds list is empty");
  if (cfg.trainer.variant != Variant::ManifoldNode)
    throw ConfigError("sensitivity: trainer.variant must be manifold-node");
  for (Index m : dims)
    if (m < 1) throw ConfigError("sensitivity: dims must be >= 1");
  fs::create_directories(out_dir);
  RunConfig snapshot = cfg;
  snapshot.sensitivity_dims.assign(dims.begin(), dims.end());
  write_json(out_dir / "config.json", to_json(snapshot));
  const auto [tr, te] = load_datasets(cfg.dataset);

  std::vector<SensitivityRow> rows;
  for (Index m : dims) {
    for (std::uint64_t seed : cfg.seeds) {
      SensitivityRow row{m, seed, 0, 0, 0, {}};
      try {
        TrainConfig t = cfg.trainer;
        t.latent_dim = m;
        t.seed = seed;
        Model model = make_model(t, tr.d(), std::max(tr.num_classes, te.num_classes));
        const auto hist = train_model(model, t, tr);
        row.final_loss = hist.empty() ? std::nan("") : hist.back().loss;
        row.train_accuracy = evaluate(model, tr, t.solver).accuracy;
        row.test_accuracy = evaluate(model, te, t.solver).accuracy;
      } catch (const Error& e) {
        row.error = e.what();
      }
      rows.push_back(row);
    }
  }

  std::ofstream csv = open_out(out_dir / "sensitivity.csv");
  csv << "m,seed,train_acc,test_acc,final_loss\n";
  json failures = json::array(), medians = json::object();
  for (const auto& r : rows) {
    csv << r.m << ',' << r.seed << ',';
    if (r.error.empty())
      csv << num(r.train_accuracy) << ',' << num(r.test_accuracy) << ',' << num(r.final_loss) << '\n';
    else
      csv << ",,\n", failures.push_back({{"m", r.m}, {"seed", r.seed}, {"error", r.error}});
  }
  for (Index m : dims) {
    std::vector<double> acc;
    for (const auto& r : rows)
      if (r.m == m && r.error.empty()) acc.push_back(r.test_accuracy);
    const double med = median(acc);
    medians[std::to_string(m)] = std::isfinite(med) ? json(med) : json(nullptr);
  }
  write_json(out_dir / "sensitivity.json",
             {{"dims", json(std::vector<Index>(dims.begin(), dims.end()))},
              {"seeds", cfg.seeds},
              {"median_test_accuracy", medians},
              {"failures", failures}});
  return rows;
}

json cmd_nfe_report(std::span<const fs::path> run_dirs, const fs::path& out_dir) {
  if (run_dirs.empty()) throw ConfigError("nfe-report: no run directories given");
  std::vector<std::vector<MetricsRow>> runs;
  for (const auto& d : run_dirs) runs.push_back(read_run_metrics(d));
  fs::create_directories(out_dir);
  std::ofstream csv = open_out(out_dir / "nfe_report.csv");
  csv << "run,epoch,nfe_forward,nfe_backward,wall_time_s\n";
  json summary = {{"runs", json::array()}};
  for (const auto& rows : runs) {
    std::vector<double> ep, fwd, bwd;
    std::int64_t tf = 0, tb = 0;
    double wall = 0.0;
    bool have_wall = !rows.empty();
    for (const auto& r : rows) {
      csv << r.run << ',' << r.epoch << ',' << r.nfe_forward << ',' << r.nfe_backward << ',';
      if (r.wall_time_s) csv << num(*r.wall_time_s);
      csv << '\n';
      ep.push_back(r.epoch);
      fwd.push_back(static_cast<double>(r.nfe_forward));
      bwd.push_back(static_cast<double>(r.nfe_backward));
      tf += r.nfe_forward;
      tb += r.nfe_backward;
      if (r.wall_time_s) wall += *r.wall_time_s;
      else have_wall = false;
    }
    summary["runs"].push_back({{"run", rows.empty() ? std::string() : rows.front().run},
                               {"epochs", rows.size()},
                               {"nfe_forward_total", tf},
                               {"nfe_backward_total", tb},
                               {"nfe_forward_slope", least_squares_slope(ep, fwd)},
                               {"nfe_backward_slope", least_squares_slope(ep, bwd)},
                               {"wall_time_total_s", have_wall ? json(wall) : json(nullptr)}});
  }
  write_json(out_dir / "nfe_summary.json", summary);
  return summary;
}

}  // namespace mnode
