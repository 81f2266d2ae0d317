#pragma once

#include "mnode/error.hpp"
#include "mnode/nn.hpp"

#include <filesystem>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace mnode {

/// Right-hand side of dh/dt = f(h, t).
class Dynamics {
 public:
  virtual ~Dynamics() = default;
  virtual Index dim() const = 0;
  virtual void eval(double t, const Vec& h, Vec& out) const = 0;

  /// Vector-Jacobian product: h_bar += (df/dh)^T cot and, when `theta_bar`
  /// is given, theta_bar += (df/dtheta)^T cot.
  virtual void vjp(double t, const Vec& h, const Vec& cot, Vec& h_bar,
                   Gradients* theta_bar) const;

  /// Zero gradient container matching this field's parameters (empty when
  /// the field has none).
  virtual Gradients zero_param_grads() const { return {}; }
};

/// f is an MLP over the state, optionally with t appended as an extra input.
struct VectorField {
  Mlp net;
  bool time_dependent = false;

  Index state_dim() const { return net.spec().output_width(); }

  /// widths [d (+1 if time-dependent), hidden..., d].
  static VectorField make(Index state_dim, const std::vector<Index>& hidden, std::uint64_t seed,
                          Activation act = Activation::Relu, bool time_dependent = false,
                          std::string prefix = "field");
};

/// Binds a VectorField to a parameter store (held by reference).
class FieldDynamics final : public Dynamics {
 public:
  FieldDynamics(const VectorField& field, const ParamStore& params);
  Index dim() const override { return field_.state_dim(); }
  void eval(double t, const Vec& h, Vec& out) const override;
  void vjp(double t, const Vec& h, const Vec& cot, Vec& h_bar,
           Gradients* theta_bar) const override;
  Gradients zero_param_grads() const override;

 private:
  Mat input_row(double t, const Vec& h) const;
  const VectorField& field_;
  const ParamStore& params_;
};

/// f(h) = A h.
class LinearDynamics final : public Dynamics {
 public:
  explicit LinearDynamics(Mat a) : a_(std::move(a)) {}
  Index dim() const override { return a_.rows(); }
  void eval(double, const Vec& h, Vec& out) const override { out.noalias() = a_ * h; }
  void vjp(double, const Vec&, const Vec& cot, Vec& h_bar, Gradients*) const override {
    h_bar.noalias() += a_.transpose() * cot;
  }

 private:
  Mat a_;
};

/// Arbitrary callable right-hand side without derivatives.
class FunctionDynamics final : public Dynamics {
 public:
  using Fn = std::function<void(double, const Vec&, Vec&)>;
  FunctionDynamics(Index dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}
  Index dim() const override { return dim_; }
  void eval(double t, const Vec& h, Vec& out) const override { fn_(t, h, out); }

 private:
  Index dim_;
  Fn fn_;
};

enum class Method { Dopri5, Rk4 };

Method parse_method(std::string_view name);
std::string_view to_string(Method m);

struct SolverConfig {
  Method method = Method::Dopri5;
  double rtol = 1e-3;
  double atol = 1e-3;
  double t0 = 0.0;
  double t1 = 1.0;
  double initial_step = 0.0;  // <= 0: 0.01 * |t1 - t0|
  std::int64_t max_steps = 100000;
  double safety = 0.9;
  double min_factor = 0.2;
  double max_factor = 10.0;
  std::int64_t fixed_steps = 100;  // rk4 only

  void validate() const;
};

/// Stage inputs of one accepted step, kept for reverse-mode differentiation.
struct StepRecord {
  double t;
  double dt;
  std::vector<Vec> stage_inputs;
};

struct OdeSolution {
  Vec endpoint;
  std::int64_t accepted = 0;
  std::int64_t rejected = 0;
  std::int64_t nfe = 0;
  Method method = Method::Dopri5;
  double t0 = 0.0;
  double t1 = 0.0;
  Vec start;                      // h(t0), kept with the trajectory
  std::vector<StepRecord> steps;  // empty unless recorded
  bool has_trajectory = false;

  std::vector<double> step_sizes() const;
  SolverStats stats() const { return {accepted, rejected, nfe}; }
};

/// Adaptive Dormand-Prince 5(4) with FSAL, or fixed-step RK4. Every call to
/// f is counted in nfe, rejected steps included.
OdeSolution integrate(const Dynamics& f, const Vec& h0, const SolverConfig& cfg,
                      bool record_trajectory = false);

/// Replays a given step sequence without error control (the discrete map
/// whose exact derivative integrate_backward computes).
OdeSolution integrate_on_grid(const Dynamics& f, const Vec& h0, double t0,
                              std::span<const double> step_sizes, Method method,
                              bool record_trajectory = false);

struct Sensitivity {
  Vec dh0;
  Gradients dtheta;
  std::int64_t nfe = 0;  // vector-Jacobian products evaluated
};

/// Exact reverse-mode derivative of the discrete solver recursion with step
/// sizes held constant. Requires a recorded trajectory.
Sensitivity integrate_backward(const Dynamics& f, const OdeSolution& sol, const Vec& dl_dh1);

/// Continuous adjoint: integrates (h, a, g) from cfg.t1 back to cfg.t0.
Sensitivity integrate_adjoint(const Dynamics& f, const Vec& h1, const Vec& dl_dh1,
                              const SolverConfig& cfg);

/// Piecewise solve through times[0] < times[1] < ..., restarting the solver
/// at every waypoint. states[k] = h(times[k + 1]).
struct WaypointSolution {
  std::vector<Vec> states;
  std::vector<OdeSolution> segments;
  std::int64_t nfe = 0;
};

WaypointSolution integrate_waypoints(const Dynamics& f, const Vec& h0,
                                     std::span<const double> times, const SolverConfig& cfg);

/// Backpropagates per-waypoint cotangents dl_dstates[k] = dL/d states[k].
Sensitivity backward_waypoints(const Dynamics& f, const WaypointSolution& sol,
                               std::span<const Vec> dl_dstates);

/// CSV "sample,t,h_1,...,h_m" with one row per accepted step boundary.
void write_trajectory_csv(const std::filesystem::path& path, std::span<const OdeSolution> sols);

}  // namespace mnode
