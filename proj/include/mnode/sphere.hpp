#pragma once

#include "mnode/ode.hpp"

#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

namespace mnode {

/// h = R (sin u cos v, sin u sin v, cos u).
Eigen::Vector3d chart_to_ambient(const Vec& l, double radius = 1.0);

/// dh/dl as a 3 x 2 matrix, columns d/du and d/dv.
Mat chart_jacobian(const Vec& l, double radius = 1.0);

struct SphereChart {
  double radius = 1.0;
  double u_min = 0.2;
  double u_max = std::numbers::pi - 0.2;

  bool in_band(const Vec& l) const { return l(0) >= u_min && l(0) <= u_max; }
  void validate() const;
};

struct SphereTrajectory {
  std::vector<double> times;   // times[0] is the start
  std::vector<Vec> chart;      // l(times[k])
  std::vector<Vec> ambient;    // h(times[k])
  std::int64_t nfe = 0;

  double max_norm_drift(double radius) const;
};

/// Integrates dl/dt = f(l) in chart coordinates through `times` and maps every
/// output point to the sphere. Throws ChartError when any accepted step leaves
/// the valid u band.
SphereTrajectory integrate_on_sphere(const Dynamics& f, const Vec& l0, std::span<const double> times,
                                     const SphereChart& chart, const SolverConfig& cfg);

/// Ground-truth chart fields for the demo.
enum class SphereField { Rotation, Wavy };
SphereField parse_sphere_field(std::string_view name);
std::string_view to_string(SphereField f);
/// (u', v') = (0, 1) or (0.3 sin v, 1).
FunctionDynamics sphere_field_dynamics(SphereField f);

struct SphereConfig {
  std::uint64_t seed = 1;
  SphereField field = SphereField::Wavy;
  int n_train = 32;
  int n_test = 8;
  double horizon = 2.0;
  int waypoints = 10;
  int hidden = 16;
  int epochs = 300;
  double lr = 1e-2;
  double tol = 1e-4;
  std::int64_t truth_steps = 10000;
  double sample_u_margin = 0.9;  // l0 drawn with u in [margin, pi - margin]
  SphereChart chart;

  void validate() const;
};

struct SphereModelReport {
  std::string name;               // "ambient" or "chart"
  double test_mse = 0.0;          // vs the oracle, ambient coordinates
  double max_norm_drift = 0.0;    // over held-out output points
  double final_train_loss = 0.0;
  std::int64_t nfe_train_forward = 0;
  std::int64_t nfe_train_backward = 0;
  std::int64_t nfe_eval = 0;
  bool diverged = false;
  std::string failure;
  std::vector<std::vector<Eigen::Vector3d>> test_trajectories;
};

struct SphereReport {
  SphereConfig config;
  std::vector<double> times;
  std::vector<std::vector<Eigen::Vector3d>> truth;  // held-out oracle trajectories
  SphereModelReport ambient;
  SphereModelReport chart;
};

/// Fine RK4 oracle trajectories, then an ambient 3-D NODE and a chart-space
/// 2-D NODE trained on waypoint MSE. Divergence is reported, not thrown.
SphereReport run_sphere_experiment(const SphereConfig& cfg);

/// CSV "model,traj_id,t,x,y,z", models "truth", "ambient", "chart".
void write_sphere_trajectories_csv(const SphereReport& r, const std::filesystem::path& path);
void write_sphere_summary_json(const SphereReport& r, const std::filesystem::path& path);

}  // namespace mnode
