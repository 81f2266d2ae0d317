#include "mnode/sphere.hpp"

#include "mnode/rng.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <limits>

namespace mnode {

Eigen::Vector3d chart_to_ambient(const Vec& l, double radius) {
  if (l.size() != 2) throw DimensionError("chart_to_ambient: expected (u, v)");
  const double su = std::sin(l(0));
  return {radius * su * std::cos(l(1)), radius * su * std::sin(l(1)), radius * std::cos(l(0))};
}

Mat chart_jacobian(const Vec& l, double radius) {
  if (l.size() != 2) throw DimensionError("chart_jacobian: expected (u, v)");
  const double su = std::sin(l(0)), cu = std::cos(l(0));
  const double sv = std::sin(l(1)), cv = std::cos(l(1));
  Mat j(3, 2);
  j << cu * cv, -su * sv,
       cu * sv, su * cv,
       -su, 0.0;
  return radius * j;
}

void SphereChart::validate() const {
  if (!(radius > 0.0)) throw ConfigError("sphere chart: radius must be positive");
  if (!(u_min > 0.0 && u_min < u_max && u_max < std::numbers::pi))
    throw ConfigError("sphere chart: need 0 < u_min < u_max < pi");
}

double SphereTrajectory::max_norm_drift(double radius) const {
  double m = 0.0;
  for (const auto& h : ambient) m = std::max(m, std::abs(h.norm() - radius));
  return m;
}

namespace {

void check_band(const SphereChart& chart, const Vec& l, double t) {
  if (!std::isfinite(l(0)) || !chart.in_band(l))
    throw ChartError("integrate_on_sphere: u = " + std::to_string(l(0)) + " left the band [" +
                     std::to_string(chart.u_min) + ", " + std::to_string(chart.u_max) +
                     "] at t = " + std::to_string(t));
}

}  // namespace

SphereTrajectory integrate_on_sphere(const Dynamics& f, const Vec& l0, std::span<const double> times,
                                     const SphereChart& chart, const SolverConfig& cfg) {
  chart.validate();
  if (f.dim() != 2 || l0.size() != 2)
    throw DimensionError("integrate_on_sphere: chart states are 2-dimensional");
  check_band(chart, l0, times.empty() ? 0.0 : times.front());
  SphereTrajectory out;
  out.times.assign(times.begin(), times.end());
  out.chart.push_back(l0);
  out.ambient.push_back(chart_to_ambient(l0, chart.radius));
  const WaypointSolution ws = integrate_waypoints(f, l0, times, cfg);
  for (std::size_t s = 0; s < ws.segments.size(); ++s) {
    for (const auto& step : ws.segments[s].steps) check_band(chart, step.stage_inputs[0], step.t);
    check_band(chart, ws.states[s], times[s + 1]);
    out.chart.push_back(ws.states[s]);
    out.ambient.push_back(chart_to_ambient(ws.states[s], chart.radius));
  }
  out.nfe = ws.nfe;
  return out;
}

SphereField parse_sphere_field(std::string_view name) {
  if (name == "rotation") return SphereField::Rotation;
  if (name == "wavy") return SphereField::Wavy;
  throw ConfigError("unknown sphere field '" + std::string(name) + "' (rotation | wavy)");
}

std::string_view to_string(SphereField f) {
  return f == SphereField::Rotation ? "rotation" : "wavy";
}

FunctionDynamics sphere_field_dynamics(SphereField f) {
  if (f == SphereField::Rotation)
    return FunctionDynamics(2, [](double, const Vec&, Vec& out) {
      out.resize(2);
      out << 0.0, 1.0;
    });
  return FunctionDynamics(2, [](double, const Vec& l, Vec& out) {
    out.resize(2);
    out << 0.3 * std::sin(l(1)), 1.0;
  });
}

void SphereConfig::validate() const {
  chart.validate();
  if (n_train < 1 || n_test < 1) throw ConfigError("sphere: need at least one train and test trajectory");
  if (!(horizon > 0.0)) throw ConfigError("sphere: horizon must be positive");
  if (waypoints < 1) throw ConfigError("sphere: waypoints must be >= 1");
  if (hidden < 1 || epochs < 0) throw ConfigError("sphere: invalid hidden width or epochs");
  if (!(lr > 0.0) || !(tol > 0.0)) throw ConfigError("sphere: lr and tol must be positive");
  if (truth_steps < waypoints) throw ConfigError("sphere: truth_steps must be >= waypoints");
  if (!(sample_u_margin >= chart.u_min && sample_u_margin < std::numbers::pi / 2))
    throw ConfigError("sphere: sample_u_margin must lie in [u_min, pi/2)");
}

namespace {

struct Sample {
  Vec l0;
  std::vector<Eigen::Vector3d> points;  // oracle h at times[0..W]
};

Sample make_sample(Rng& rng, const SphereConfig& cfg, const Dynamics& truth,
                   std::span<const double> times) {
  Sample s;
  s.l0 = Vec(2);
  s.l0 << rng.uniform(cfg.sample_u_margin, std::numbers::pi - cfg.sample_u_margin),
      rng.uniform(0.0, 2.0 * std::numbers::pi);
  const std::int64_t per_segment = cfg.truth_steps / cfg.waypoints;
  Vec l = s.l0;
  s.points.push_back(chart_to_ambient(l, cfg.chart.radius));
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    const std::vector<double> grid(per_segment, (times[k + 1] - times[k]) / per_segment);
    l = integrate_on_grid(truth, l, times[k], grid, Method::Rk4).endpoint;
    if (!cfg.chart.in_band(l)) throw ConfigError("sphere: oracle trajectory left the chart band");
    s.points.push_back(chart_to_ambient(l, cfg.chart.radius));
  }
  return s;
}

// v enters the learned field as an angle in [-pi, pi).
class AngleWrappedDynamics final : public Dynamics {
 public:
  explicit AngleWrappedDynamics(const Dynamics& inner) : inner_(inner) {}
  Index dim() const override { return 2; }
  void eval(double t, const Vec& l, Vec& out) const override { inner_.eval(t, wrap(l), out); }
  void vjp(double t, const Vec& l, const Vec& cot, Vec& l_bar, Gradients* theta_bar) const override {
    inner_.vjp(t, wrap(l), cot, l_bar, theta_bar);
  }
  Gradients zero_param_grads() const override { return inner_.zero_param_grads(); }

 private:
  static Vec wrap(const Vec& l) {
    Vec w = l;
    w(1) = l(1) - 2.0 * std::numbers::pi * std::floor((l(1) + std::numbers::pi) / (2.0 * std::numbers::pi));
    return w;
  }
  const Dynamics& inner_;
};

// Shared waypoint-regression loop. `lift` maps a solver state to ambient
// coordinates and returns the 3 x d Jacobian of that map.
template <typename Start, typename Lift>
void train_model(SphereModelReport& rep, const VectorField& field, ParamStore& params,
                 const std::vector<Sample>& train, std::span<const double> times,
                 const SphereConfig& cfg, bool wrap_angle, Start start, Lift lift) {
  SolverConfig solver;
  solver.rtol = solver.atol = cfg.tol;
  const double scale = 1.0 / (3.0 * cfg.waypoints * static_cast<double>(train.size()));
  const FieldDynamics raw(field, params);
  const AngleWrappedDynamics wrapped(raw);
  const Dynamics& f = wrap_angle ? static_cast<const Dynamics&>(wrapped) : raw;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Gradients grads = params.zeros_like();
    double loss = 0.0;
    for (const Sample& s : train) {
      const WaypointSolution ws = integrate_waypoints(f, start(s), times, solver);
      rep.nfe_train_forward += ws.nfe;
      std::vector<Vec> cot;
      for (std::size_t k = 0; k < ws.states.size(); ++k) {
        Mat jac;
        const Eigen::Vector3d r = lift(ws.states[k], &jac) - s.points[k + 1];
        loss += scale * r.squaredNorm();
        cot.push_back(jac.transpose() * (2.0 * scale * r));
      }
      const Sensitivity g = backward_waypoints(f, ws, cot);
      rep.nfe_train_backward += g.nfe;
      grads += g.dtheta;
    }
    if (!std::isfinite(loss))
      throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
    rep.final_train_loss = loss;
    adam_step(params, grads, cfg.lr);
  }
}

void mark_diverged(SphereModelReport& rep, const std::exception& e) {
  rep.diverged = true;
  rep.failure = e.what();
  rep.test_mse = std::numeric_limits<double>::infinity();
  rep.max_norm_drift = std::numeric_limits<double>::infinity();
  rep.test_trajectories.clear();
}

double trajectory_mse(const std::vector<Eigen::Vector3d>& got,
                      const std::vector<Eigen::Vector3d>& want) {
  double s = 0.0;
  for (std::size_t k = 1; k < want.size(); ++k) s += (got[k] - want[k]).squaredNorm();
  return s / (3.0 * static_cast<double>(want.size() - 1));
}

}  // namespace

SphereReport run_sphere_experiment(const SphereConfig& cfg) {
  cfg.validate();
  SphereReport rep;
  rep.config = cfg;
  for (int k = 0; k <= cfg.waypoints; ++k) rep.times.push_back(cfg.horizon * k / cfg.waypoints);

  Rng rng(cfg.seed);
  const FunctionDynamics truth = sphere_field_dynamics(cfg.field);
  std::vector<Sample> train, test;
  for (int i = 0; i < cfg.n_train; ++i) train.push_back(make_sample(rng, cfg, truth, rep.times));
  for (int i = 0; i < cfg.n_test; ++i) test.push_back(make_sample(rng, cfg, truth, rep.times));
  for (const Sample& s : test) rep.truth.push_back(s.points);

  const double radius = cfg.chart.radius;
  SolverConfig solver;
  solver.rtol = solver.atol = cfg.tol;

  rep.ambient.name = "ambient";
  {
    const VectorField field =
        VectorField::make(3, {cfg.hidden}, cfg.seed * 2 + 1, Activation::Tanh, false, "ambient");
    ParamStore params;
    field.net.init_params(params);
    try {
      train_model(
          rep.ambient, field, params, train, rep.times, cfg, false,
          [&](const Sample& s) -> Vec { return s.points[0]; },
          [](const Vec& h, Mat* jac) -> Eigen::Vector3d {
            *jac = Mat::Identity(3, 3);
            return h;
          });
      const FieldDynamics f(field, params);
      double mse = 0.0;
      for (const Sample& s : test) {
        const WaypointSolution ws = integrate_waypoints(f, s.points[0], rep.times, solver);
        rep.ambient.nfe_eval += ws.nfe;
        std::vector<Eigen::Vector3d> traj{s.points[0]};
        for (const Vec& h : ws.states) {
          traj.push_back(h);
          rep.ambient.max_norm_drift = std::max(rep.ambient.max_norm_drift, std::abs(h.norm() - radius));
        }
        mse += trajectory_mse(traj, s.points);
        rep.ambient.test_trajectories.push_back(std::move(traj));
      }
      rep.ambient.test_mse = mse / static_cast<double>(test.size());
    } catch (const Error& e) {
      mark_diverged(rep.ambient, e);
    }
  }

  rep.chart.name = "chart";
  {
    const VectorField field =
        VectorField::make(2, {cfg.hidden}, cfg.seed * 2 + 2, Activation::Tanh, false, "chart");
    ParamStore params;
    field.net.init_params(params);
    try {
      train_model(
          rep.chart, field, params, train, rep.times, cfg, true,
          [](const Sample& s) -> Vec { return s.l0; },
          [radius](const Vec& l, Mat* jac) -> Eigen::Vector3d {
            *jac = chart_jacobian(l, radius);
            return chart_to_ambient(l, radius);
          });
      const FieldDynamics raw(field, params);
      const AngleWrappedDynamics f(raw);
      double mse = 0.0;
      for (const Sample& s : test) {
        const SphereTrajectory st = integrate_on_sphere(f, s.l0, rep.times, cfg.chart, solver);
        rep.chart.nfe_eval += st.nfe;
        rep.chart.max_norm_drift = std::max(rep.chart.max_norm_drift, st.max_norm_drift(radius));
        std::vector<Eigen::Vector3d> traj(st.ambient.begin(), st.ambient.end());
        mse += trajectory_mse(traj, s.points);
        rep.chart.test_trajectories.push_back(std::move(traj));
      }
      rep.chart.test_mse = mse / static_cast<double>(test.size());
    } catch (const Error& e) {
      mark_diverged(rep.chart, e);
    }
  }
  return rep;
}

void write_sphere_trajectories_csv(const SphereReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  out << "model,traj_id,t,x,y,z\n";
  auto dump = [&](const std::string& model, const std::vector<std::vector<Eigen::Vector3d>>& trajs) {
    for (std::size_t i = 0; i < trajs.size(); ++i)
      for (std::size_t k = 0; k < trajs[i].size(); ++k)
        out << model << ',' << i << ',' << r.times[k] << ',' << trajs[i][k](0) << ','
            << trajs[i][k](1) << ',' << trajs[i][k](2) << '\n';
  };
  dump("truth", r.truth);
  dump(r.ambient.name, r.ambient.test_trajectories);
  dump(r.chart.name, r.chart.test_trajectories);
}

namespace {

nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

nlohmann::json model_json(const SphereModelReport& m) {
  return {{"test_mse", finite_or_null(m.test_mse)},
          {"max_norm_drift", finite_or_null(m.max_norm_drift)},
          {"final_train_loss", finite_or_null(m.final_train_loss)},
          {"nfe_train_forward", m.nfe_train_forward},
          {"nfe_train_backward", m.nfe_train_backward},
          {"nfe_eval", m.nfe_eval},
          {"nfe_total", m.nfe_train_forward + m.nfe_train_backward + m.nfe_eval},
          {"diverged", m.diverged},
          {"failure", m.failure}};
}

}  // namespace

void write_sphere_summary_json(const SphereReport& r, const std::filesystem::path& path) {
  const auto& c = r.config;
  const nlohmann::json j = {
      {"seed", c.seed},
      {"field", std::string(to_string(c.field))},
      {"n_train", c.n_train},
      {"n_test", c.n_test},
      {"horizon", c.horizon},
      {"waypoints", c.waypoints},
      {"epochs", c.epochs},
      {"models", {{"ambient", model_json(r.ambient)}, {"chart", model_json(r.chart)}}}};
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace mnode
