#pragma once

#include "ndae/power_model.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace ndae {

/// Stage Jacobian singular while solving the implicit stage equations.
class IndexViolation : public Error {
 public:
  using Error::Error;
};

/// Dataset request exceeds the available adjacent-point pairs.
class TooFewPoints : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Method coefficients
// ---------------------------------------------------------------------------

/// IRK coefficients. Following the source convention, `b` is the nu x nu
/// stage matrix b_{j,i} and `c` holds the quadrature weights c_j; the stage
/// abscissae are the row sums of b.
struct ButcherTableau {
  int nu = 0;
  Matrix b;
  Vector c;
  std::string name;
  int order = 0;
};

/// Implicit midpoint (order 2), 2-stage Radau IIA (order 3), and 2-stage
/// Gauss-Legendre (order 4). Each tableau is checked against the order
/// conditions sum(c) = 1 and sum_j c_j sum_k b_{j,k} = 1/2 before return.
[[nodiscard]] std::vector<ButcherTableau> builtin_tableaus();

/// Looks a built-in tableau up by name; throws Error for unknown names.
[[nodiscard]] ButcherTableau find_tableau(const std::string& name);

// ---------------------------------------------------------------------------
// Configuration and data
// ---------------------------------------------------------------------------

struct SolverConfig {
  double delta = 1e-3;
  double rel_tol = 1e-5;
  double abs_tol = 1e-6;
  double max_step = 1e-3;
  double newton_tol = 1e-6;
  int newton_max_iter = 50;
};

struct Trajectory {
  Vector times;
  std::vector<Vector> states_d;
  std::vector<Vector> states_a;
  std::vector<Vector> inputs;

  [[nodiscard]] Eigen::Index size() const { return times.size(); }
};

struct SamplePair {
  Vector x_d_n;
  Vector x_a_n;
  Vector x_d_next;
  Vector x_a_next;
  Vector u;
  double delta = 0.0;
};

struct SampleSet {
  std::vector<SamplePair> pairs;

  [[nodiscard]] Eigen::Index eta() const {
    return static_cast<Eigen::Index>(pairs.size());
  }
};

// ---------------------------------------------------------------------------
// Generic semi-explicit system
// ---------------------------------------------------------------------------

/// Semi-explicit DAE x_d' = f(x_d, x_a, u), 0 = g(x_d, x_a) with optional
/// analytic Jacobians; n_a = 0 reduces it to an ODE. One integrator core
/// serves the ground-truth model, identified networks, and error dynamics.
struct DaeSystem {
  Eigen::Index n_d = 0;
  Eigen::Index n_a = 0;
  std::function<Vector(const Vector&, const Vector&, const Vector&)> f;
  std::function<Vector(const Vector&, const Vector&)> g;
  std::function<Matrix(const Vector&, const Vector&, const Vector&)> f_jac_xd;
  std::function<Matrix(const Vector&, const Vector&, const Vector&)> f_jac_xa;
  std::function<Matrix(const Vector&, const Vector&)> g_jac_xd;
  std::function<Matrix(const Vector&, const Vector&)> g_jac_xa;
};

[[nodiscard]] DaeSystem as_dae(const NdaeModel& model);

using InputFn = std::function<Vector(double)>;

struct IrkResult {
  Vector x_d_next;
  Vector x_a_next;
  std::vector<std::pair<Vector, Vector>> stages;
};

/// One IRK step of length delta from time t. The stacked stage system
/// {alpha_j - x_d - delta sum_i b_{j,i} f(alpha_i, beta_i, u_i) = 0,
///  g(alpha_j, beta_j) = 0} is solved by one Newton iteration in the
/// nu (n_d + n_a) unknown; inputs are evaluated at t + delta row_sum(b_j).
/// The step closes with x_a_next solving g(x_d_next, x_a_next) = 0.
[[nodiscard]] IrkResult irk_step_system(const DaeSystem& sys, const Vector& x_d,
                                        const Vector& x_a, const InputFn& input_fn,
                                        double t, double delta,
                                        const ButcherTableau& tableau,
                                        const SolverConfig& config);

/// Model-level step with the input held constant over the step.
[[nodiscard]] IrkResult irk_step(const NdaeModel& model, const Vector& x_d,
                                 const Vector& x_a, const Vector& u,
                                 const ButcherTableau& tableau,
                                 const SolverConfig& config);

/// Fixed-step march to t_end (the final step is shortened to land exactly);
/// the initial algebraic state is solved from x_a_guess. Solver failures are
/// rethrown with the failing time attached.
[[nodiscard]] Trajectory simulate_system(const DaeSystem& sys, const Vector& x_d0,
                                         const Vector& x_a_guess,
                                         const InputFn& input_fn, double t_end,
                                         const ButcherTableau& tableau,
                                         const SolverConfig& config);

/// Model-level simulation; the initial algebraic state comes from
/// consistent_init seeded at zero.
[[nodiscard]] Trajectory simulate(const NdaeModel& model, const Vector& x_d0,
                                  const InputFn& input_fn, double t_end,
                                  const ButcherTableau& tableau,
                                  const SolverConfig& config);

/// Draws eta adjacent-point pairs uniformly without replacement.
[[nodiscard]] SampleSet sample_dataset(const Trajectory& traj, Eigen::Index eta,
                                       std::uint64_t seed);

// ---------------------------------------------------------------------------
// CSV round-trip
// ---------------------------------------------------------------------------

[[nodiscard]] std::string trajectory_to_csv(const Trajectory& traj);
[[nodiscard]] Trajectory trajectory_from_csv(const std::string& text);
void save_trajectory(const Trajectory& traj, const std::string& path);
[[nodiscard]] Trajectory load_trajectory(const std::string& path);

[[nodiscard]] std::string samples_to_csv(const SampleSet& samples);
[[nodiscard]] SampleSet samples_from_csv(const std::string& text);
void save_samples(const SampleSet& samples, const std::string& path);
[[nodiscard]] SampleSet load_samples(const std::string& path);

}  // namespace ndae
