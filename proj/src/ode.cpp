#include "mnode/ode.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace mnode {

void Dynamics::vjp(double, const Vec&, const Vec&, Vec&, Gradients*) const {
  throw Error("this dynamics does not provide vector-Jacobian products");
}

VectorField VectorField::make(Index state_dim, const std::vector<Index>& hidden, std::uint64_t seed,
                              Activation act, bool time_dependent, std::string prefix) {
  std::vector<Index> widths{state_dim + (time_dependent ? 1 : 0)};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(state_dim);
  return VectorField{Mlp(MlpSpec::uniform(std::move(widths), act, seed), std::move(prefix)),
                     time_dependent};
}

FieldDynamics::FieldDynamics(const VectorField& field, const ParamStore& params)
    : field_(field), params_(params) {
  const Index expected = field.state_dim() + (field.time_dependent ? 1 : 0);
  if (field.net.spec().input_width() != expected)
    throw DimensionError("vector field input width must equal state dimension" +
                         std::string(field.time_dependent ? " + 1" : ""));
}

Mat FieldDynamics::input_row(double t, const Vec& h) const {
  if (h.size() != field_.state_dim())
    throw DimensionError("vector field: state has " + std::to_string(h.size()) +
                         " entries, expected " + std::to_string(field_.state_dim()));
  Mat x(1, field_.net.spec().input_width());
  x.leftCols(h.size()) = h.transpose();
  if (field_.time_dependent) x(0, h.size()) = t;
  return x;
}

void FieldDynamics::eval(double t, const Vec& h, Vec& out) const {
  out = field_.net.forward(params_, input_row(t, h)).row(0).transpose();
}

void FieldDynamics::vjp(double t, const Vec& h, const Vec& cot, Vec& h_bar,
                        Gradients* theta_bar) const {
  MlpCache cache;
  field_.net.forward(params_, input_row(t, h), &cache);
  const Mat dx = field_.net.backward(params_, cache, cot.transpose(), theta_bar);
  h_bar += dx.row(0).head(h.size()).transpose();
}

Gradients FieldDynamics::zero_param_grads() const {
  Gradients g;
  field_.net.add_zero_grads(params_, g);
  return g;
}

Method parse_method(std::string_view name) {
  if (name == "dopri5") return Method::Dopri5;
  if (name == "rk4") return Method::Rk4;
  throw ConfigError("unknown solver method '" + std::string(name) + "' (dopri5|rk4)");
}

std::string_view to_string(Method m) { return m == Method::Dopri5 ? "dopri5" : "rk4"; }

void SolverConfig::validate() const {
  if (!(rtol > 0.0) || !(atol > 0.0)) throw ConfigError("solver rtol and atol must be > 0");
  if (max_steps < 1) throw ConfigError("solver max_steps must be >= 1");
  if (t1 == t0) throw ConfigError("solver t1 must differ from t0");
  if (method == Method::Rk4 && fixed_steps < 1) throw ConfigError("rk4 fixed_steps must be >= 1");
  if (!(safety > 0.0) || !(min_factor > 0.0) || !(max_factor >= 1.0) || min_factor > 1.0)
    throw ConfigError("solver step-control factors out of range");
}

std::vector<double> OdeSolution::step_sizes() const {
  std::vector<double> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.dt);
  return out;
}

namespace {

// Explicit Runge-Kutta tableau restricted to the stages that feed the
// propagated solution.
struct Tableau {
  int stages;
  std::array<std::array<double, 6>, 6> a;
  std::array<double, 6> b;
  std::array<double, 6> c;
};

constexpr Tableau kDopri5{
    6,
    {{{0, 0, 0, 0, 0, 0},
      {1.0 / 5, 0, 0, 0, 0, 0},
      {3.0 / 40, 9.0 / 40, 0, 0, 0, 0},
      {44.0 / 45, -56.0 / 15, 32.0 / 9, 0, 0, 0},
      {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729, 0, 0},
      {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656, 0}}},
    {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
    {0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1}};

// Difference between the 5th- and 4th-order weights; the 7th entry applies
// to the FSAL stage f(t + dt, y_new).
constexpr std::array<double, 7> kDopri5Err{71.0 / 57600,      0,          -71.0 / 16695,
                                           71.0 / 1920,       -17253.0 / 339200,
                                           22.0 / 525,        -1.0 / 40};

constexpr Tableau kRk4{4,
                       {{{0, 0, 0, 0, 0, 0},
                         {0.5, 0, 0, 0, 0, 0},
                         {0, 0.5, 0, 0, 0, 0},
                         {0, 0, 1, 0, 0, 0},
                         {},
                         {}}},
                       {1.0 / 6, 1.0 / 3, 1.0 / 3, 1.0 / 6, 0, 0},
                       {0, 0.5, 0.5, 1, 0, 0}};

const Tableau& tableau(Method m) { return m == Method::Dopri5 ? kDopri5 : kRk4; }

std::string step_context(std::int64_t step, double t) {
  std::ostringstream os;
  os << "step " << step << " (t=" << std::setprecision(10) << t << ")";
  return os.str();
}

void check_finite(const Vec& v, const char* what, std::int64_t step, double t,
                  const SolverStats& stats) {
  if (!v.allFinite())
    throw SolverError(std::string("non-finite ") + what + " at " + step_context(step, t), stats);
}

// One explicit RK step. `k` holds the stage derivatives; if `k1_given` is set,
// k[0] already contains f(t, y). Returns the number of f evaluations made.
int rk_step(const Dynamics& f, const Tableau& tab, double t, double dt, const Vec& y,
            std::vector<Vec>& k, bool k1_given, Vec& y_new, std::vector<Vec>* stage_inputs) {
  int evals = 0;
  Vec yi;
  for (int i = 0; i < tab.stages; ++i) {
    yi = y;
    for (int j = 0; j < i; ++j)
      if (tab.a[i][j] != 0.0) yi.noalias() += (dt * tab.a[i][j]) * k[j];
    if (stage_inputs) stage_inputs->push_back(yi);
    if (i == 0 && k1_given) continue;
    f.eval(t + tab.c[i] * dt, yi, k[i]);
    ++evals;
  }
  y_new = y;
  for (int i = 0; i < tab.stages; ++i)
    if (tab.b[i] != 0.0) y_new.noalias() += (dt * tab.b[i]) * k[i];
  return evals;
}

void check_state(const Dynamics& f, const Vec& h0) {
  if (h0.size() != f.dim())
    throw DimensionError("initial state has " + std::to_string(h0.size()) +
                         " entries, dynamics expects " + std::to_string(f.dim()));
  if (!h0.allFinite()) throw NumericError("initial state is not finite");
}

OdeSolution integrate_rk4(const Dynamics& f, const Vec& h0, const SolverConfig& cfg, bool record) {
  const double dt = (cfg.t1 - cfg.t0) / static_cast<double>(cfg.fixed_steps);
  std::vector<double> steps(static_cast<std::size_t>(cfg.fixed_steps), dt);
  return integrate_on_grid(f, h0, cfg.t0, steps, Method::Rk4, record);
}

OdeSolution integrate_dopri5(const Dynamics& f, const Vec& h0, const SolverConfig& cfg,
                             bool record) {
  OdeSolution sol;
  sol.method = Method::Dopri5;
  sol.t0 = cfg.t0;
  sol.t1 = cfg.t1;
  sol.has_trajectory = record;
  if (record) sol.start = h0;

  const double span = cfg.t1 - cfg.t0;
  const double dir = span > 0 ? 1.0 : -1.0;
  double dt = dir * (cfg.initial_step > 0.0 ? cfg.initial_step : 0.01 * std::abs(span));
  double t = cfg.t0;
  Vec y = h0;
  std::vector<Vec> k(6, Vec(h0.size()));
  Vec k7(h0.size());
  Vec y_new(h0.size());
  Vec err(h0.size());

  f.eval(t, y, k[0]);
  sol.nfe = 1;
  check_finite(k[0], "derivative", 0, t, sol.stats());

  bool done = false;
  while (!done) {
    if (sol.accepted + sol.rejected >= cfg.max_steps)
      throw SolverError("dopri5 exceeded max_steps=" + std::to_string(cfg.max_steps),
                        sol.stats());
    bool last = false;
    if (dir * (t + dt - cfg.t1) >= 0.0) {
      dt = cfg.t1 - t;
      last = true;
    }
    std::vector<Vec> stages;
    sol.nfe += rk_step(f, kDopri5, t, dt, y, k, true, y_new, record ? &stages : nullptr);
    const std::int64_t step_no = sol.accepted + sol.rejected + 1;
    check_finite(y_new, "state", step_no, t + dt, sol.stats());
    f.eval(t + dt, y_new, k7);
    ++sol.nfe;
    check_finite(k7, "derivative", step_no, t + dt, sol.stats());

    err.setZero();
    for (int i = 0; i < 6; ++i)
      if (kDopri5Err[i] != 0.0) err.noalias() += (dt * kDopri5Err[i]) * k[i];
    err.noalias() += (dt * kDopri5Err[6]) * k7;
    const Eigen::ArrayXd scale =
        cfg.atol + cfg.rtol * y.array().abs().max(y_new.array().abs());
    const double err_norm = std::sqrt((err.array() / scale).square().mean());

    if (err_norm <= 1.0) {
      if (record) sol.steps.push_back({t, dt, std::move(stages)});
      t = last ? cfg.t1 : t + dt;
      y.swap(y_new);
      k[0].swap(k7);
      ++sol.accepted;
      done = last;
      const double factor =
          err_norm == 0.0 ? cfg.max_factor
                          : std::clamp(cfg.safety * std::pow(err_norm, -0.2), cfg.min_factor,
                                       cfg.max_factor);
      dt *= factor;
    } else {
      ++sol.rejected;
      dt *= std::clamp(cfg.safety * std::pow(err_norm, -0.2), cfg.min_factor, 1.0);
    }
    if (!done && std::abs(dt) <= 1e-14 * std::max(1.0, std::abs(t)))
      throw SolverError("dopri5 step size underflow at " + step_context(step_no, t),
                        sol.stats());
  }
  sol.endpoint = std::move(y);
  return sol;
}

}  // namespace

OdeSolution integrate(const Dynamics& f, const Vec& h0, const SolverConfig& cfg,
                      bool record_trajectory) {
  cfg.validate();
  check_state(f, h0);
  return cfg.method == Method::Dopri5 ? integrate_dopri5(f, h0, cfg, record_trajectory)
                                      : integrate_rk4(f, h0, cfg, record_trajectory);
}

OdeSolution integrate_on_grid(const Dynamics& f, const Vec& h0, double t0,
                              std::span<const double> step_sizes, Method method,
                              bool record_trajectory) {
  check_state(f, h0);
  const Tableau& tab = tableau(method);
  OdeSolution sol;
  sol.method = method;
  sol.t0 = t0;
  sol.has_trajectory = record_trajectory;
  if (record_trajectory) sol.start = h0;
  Vec y = h0;
  Vec y_new(h0.size());
  std::vector<Vec> k(static_cast<std::size_t>(tab.stages), Vec(h0.size()));
  double t = t0;
  for (double dt : step_sizes) {
    std::vector<Vec> stages;
    sol.nfe += rk_step(f, tab, t, dt, y, k, false, y_new, record_trajectory ? &stages : nullptr);
    ++sol.accepted;
    check_finite(y_new, "state", sol.accepted, t + dt, sol.stats());
    if (record_trajectory) sol.steps.push_back({t, dt, std::move(stages)});
    t += dt;
    y.swap(y_new);
  }
  sol.t1 = t;
  sol.endpoint = std::move(y);
  return sol;
}

Sensitivity integrate_backward(const Dynamics& f, const OdeSolution& sol, const Vec& dl_dh1) {
  if (!sol.has_trajectory) throw Error("integrate_backward: solution has no recorded trajectory");
  if (dl_dh1.size() != sol.endpoint.size())
    throw DimensionError("integrate_backward: cotangent size differs from state size");
  const Tableau& tab = tableau(sol.method);
  Sensitivity out;
  out.dtheta = f.zero_param_grads();
  Gradients* theta_bar = out.dtheta.empty() ? nullptr : &out.dtheta;
  Vec y_bar = dl_dh1;
  std::vector<Vec> k_bar(static_cast<std::size_t>(tab.stages));
  Vec stage_bar(dl_dh1.size());
  for (auto it = sol.steps.rbegin(); it != sol.steps.rend(); ++it) {
    const double dt = it->dt;
    for (int i = 0; i < tab.stages; ++i) k_bar[i] = (dt * tab.b[i]) * y_bar;
    for (int i = tab.stages; i-- > 0;) {
      stage_bar.setZero();
      f.vjp(it->t + tab.c[i] * dt, it->stage_inputs[i], k_bar[i], stage_bar, theta_bar);
      ++out.nfe;
      y_bar += stage_bar;
      for (int j = 0; j < i; ++j)
        if (tab.a[i][j] != 0.0) k_bar[j].noalias() += (dt * tab.a[i][j]) * stage_bar;
    }
  }
  out.dh0 = std::move(y_bar);
  return out;
}

namespace {

// State (h, a, g) of the continuous adjoint system, integrated backwards:
//   dh/dt = f,  da/dt = -a^T df/dh,  dg/dt = -a^T df/dtheta.
class AdjointDynamics final : public Dynamics {
 public:
  explicit AdjointDynamics(const Dynamics& f)
      : f_(f), grads_(f.zero_param_grads()), m_(f.dim()), p_(grads_.numel()) {}
  Index dim() const override { return 2 * m_ + p_; }
  void eval(double t, const Vec& s, Vec& out) const override {
    const Vec h = s.head(m_);
    const Vec a = s.segment(m_, m_);
    Vec fh(m_);
    f_.eval(t, h, fh);
    Vec h_bar = Vec::Zero(m_);
    Gradients g = grads_;
    f_.vjp(t, h, a, h_bar, p_ > 0 ? &g : nullptr);
    out.resize(dim());
    out.head(m_) = fh;
    out.segment(m_, m_) = -h_bar;
    if (p_ > 0) out.tail(p_) = -g.flatten();
  }
  const Gradients& grad_template() const { return grads_; }

 private:
  const Dynamics& f_;
  Gradients grads_;
  Index m_;
  Index p_;
};

}  // namespace

Sensitivity integrate_adjoint(const Dynamics& f, const Vec& h1, const Vec& dl_dh1,
                              const SolverConfig& cfg) {
  if (h1.size() != f.dim() || dl_dh1.size() != f.dim())
    throw DimensionError("integrate_adjoint: state/cotangent size differs from dynamics");
  AdjointDynamics aug(f);
  Vec s0 = Vec::Zero(aug.dim());
  s0.head(f.dim()) = h1;
  s0.segment(f.dim(), f.dim()) = dl_dh1;
  SolverConfig back = cfg;
  back.t0 = cfg.t1;
  back.t1 = cfg.t0;
  const OdeSolution sol = integrate(aug, s0, back);
  Sensitivity out;
  out.dh0 = sol.endpoint.segment(f.dim(), f.dim());
  out.dtheta = aug.grad_template();
  if (!out.dtheta.empty()) out.dtheta.assign_flat(sol.endpoint.tail(out.dtheta.numel()));
  out.nfe = sol.nfe;
  return out;
}

WaypointSolution integrate_waypoints(const Dynamics& f, const Vec& h0,
                                     std::span<const double> times, const SolverConfig& cfg) {
  if (times.size() < 2) throw ConfigError("integrate_waypoints: need at least two times");
  WaypointSolution out;
  Vec h = h0;
  for (std::size_t s = 0; s + 1 < times.size(); ++s) {
    SolverConfig seg = cfg;
    seg.t0 = times[s];
    seg.t1 = times[s + 1];
    OdeSolution sol = integrate(f, h, seg, true);
    out.nfe += sol.nfe;
    h = sol.endpoint;
    out.states.push_back(h);
    out.segments.push_back(std::move(sol));
  }
  return out;
}

Sensitivity backward_waypoints(const Dynamics& f, const WaypointSolution& sol,
                               std::span<const Vec> dl_dstates) {
  if (dl_dstates.size() != sol.states.size())
    throw DimensionError("backward_waypoints: one cotangent per waypoint required");
  Sensitivity out;
  out.dtheta = f.zero_param_grads();
  Vec carry = Vec::Zero(f.dim());
  for (std::size_t s = sol.segments.size(); s-- > 0;) {
    carry += dl_dstates[s];
    Sensitivity seg = integrate_backward(f, sol.segments[s], carry);
    if (!out.dtheta.empty()) out.dtheta += seg.dtheta;
    out.nfe += seg.nfe;
    carry = std::move(seg.dh0);
  }
  out.dh0 = std::move(carry);
  return out;
}

void write_trajectory_csv(const std::filesystem::path& path, std::span<const OdeSolution> sols) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  const Index m = sols.empty() ? 0 : sols.front().endpoint.size();
  out << "sample,t";
  for (Index c = 0; c < m; ++c) out << ",h_" << (c + 1);
  out << '\n' << std::setprecision(17);
  auto row = [&](std::size_t sample, double t, const Vec& h) {
    out << sample << ',' << t;
    for (Index c = 0; c < h.size(); ++c) out << ',' << h(c);
    out << '\n';
  };
  for (std::size_t s = 0; s < sols.size(); ++s) {
    if (!sols[s].has_trajectory)
      throw Error("write_trajectory_csv: solution " + std::to_string(s) + " has no trajectory");
    for (const auto& step : sols[s].steps) row(s, step.t, step.stage_inputs.front());
    row(s, sols[s].t1, sols[s].endpoint);
  }
}

}  // namespace mnode
