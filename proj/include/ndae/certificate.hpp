#pragma once

#include "ndae/dae_solver.hpp"
#include "ndae/nn.hpp"
#include "ndae/power_model.hpp"

#include <string>
#include <utility>
#include <vector>

namespace ndae {

/// Constant estimation was requested over an empty sample cloud.
class EmptyCloud : public Error {
 public:
  using Error::Error;
};

/// One evaluation point for the nonlinearity bound: error state, dynamic
/// state, and input.
struct CloudPoint {
  Vector e;
  Vector x_d;
  Vector u;
};

/// Lyapunov certificate for the identification error dynamics
/// e' = A e + phi(e, x_d, u): candidate matrices, estimated nonlinearity
/// constants, the matrix-inequality margin, and the asymptotic bound on
/// ||e(t)||. The bound binds only when `feasible` is set.
struct ErrorCertificate {
  Matrix a;
  Matrix p;
  Matrix w;
  Matrix l;
  Matrix k;
  double c0 = 0.0;
  double c1 = 0.0;
  double margin = 0.0;
  double bound = 0.0;
  bool feasible = false;
  Eigen::Index cloud_size = 0;
};

/// Norm history ||e(t)|| of the identification error along one simulation.
struct ErrorTrace {
  Vector times;
  Vector error_norms;
};

/// Mismatch nonlinearity phi(e, x_d, u) = A_d x_d + C_d f(x_d, l(x_d)) + B u
/// + h w0 - A_nn x_d - (A - A_nn) e - B_nn rho(x_d - e) - C_nn gamma(u); the
/// algebraic solution l(x_d) comes from Newton on the true constraint.
[[nodiscard]] Vector phi_eval(const NdaeModel& model, const DnnModel& dnn,
                              const Matrix& a, const Vector& e, const Vector& x_d,
                              const Vector& u);

/// Co-integrates the true system and the error dynamics e' = A e + phi and
/// returns ||e(t)||. A must be verifiably Hurwitz: symmetric part negative
/// definite, or, failing that, a power-iteration spectral bound certifies
/// decay and a warning is printed.
[[nodiscard]] ErrorTrace simulate_error(const NdaeModel& model, const DnnModel& dnn,
                                        const Matrix& a, const Vector& x_d0,
                                        const Vector& e0, const InputFn& input_fn,
                                        double t_end, const ButcherTableau& tableau,
                                        const SolverConfig& config);

/// Tightest constants with phi^T L phi <= c0 + c1 e^T K e over the cloud:
/// c0 covers the e = 0 projections (and samples with e^T K e <= 1e-12), c1
/// the remaining excess. Throws EmptyCloud.
[[nodiscard]] std::pair<double, double> estimate_c0_c1(
    const NdaeModel& model, const DnnModel& dnn, const Matrix& a, const Matrix& l,
    const Matrix& k, const std::vector<CloudPoint>& cloud);

struct FeasibilityResult {
  bool feasible = false;
  double margin = 0.0;
};

/// Evaluates the matrix inequality A^T P + P A + P L^{-1} P + c1 K + W <= 0;
/// margin is -lambda_max of the symmetrized left-hand side and feasibility
/// requires lambda_max <= 1e-10.
[[nodiscard]] FeasibilityResult check_assumption3(const Matrix& a, const Matrix& p,
                                                  const Matrix& w, const Matrix& l,
                                                  const Matrix& k, double c1);

/// Asymptotic error bound
/// sqrt(c0 / (lambda_min(P) lambda_min(P^{-1/2} W P^{-1/2}))).
[[nodiscard]] double prop1_bound(const Matrix& p, const Matrix& w, double c0);

/// Estimates (c0, c1) over the cloud, checks the matrix inequality with the
/// estimated c1, and evaluates the bound; an infeasible inequality leaves the
/// bound populated but non-binding.
[[nodiscard]] ErrorCertificate certify(const NdaeModel& model, const DnnModel& dnn,
                                       const Matrix& a, const Matrix& l,
                                       const Matrix& k, const Matrix& p,
                                       const Matrix& w,
                                       const std::vector<CloudPoint>& cloud);

/// Candidate Lyapunov pair: W = w_scale I together with P solving
/// A^T P + P A + P L^{-1} P + c1 K + W = 0.
struct LyapunovCandidate {
  Matrix p;
  Matrix w;
};

/// Newton-Kleinman iteration for the candidate pair, seeded from the solution
/// of the Lyapunov part; each step solves one Lyapunov equation through its
/// Kronecker form. The result still needs check_assumption3.
[[nodiscard]] LyapunovCandidate candidate_pw(const Matrix& a, const Matrix& l,
                                             const Matrix& k, double c1,
                                             double w_scale);

/// Certificate report JSON: matrices, constants, margin, bound, feasibility,
/// cloud size, and the maximum of ||e(t)|| over the last fifth of the horizon
/// when a trace is attached.
[[nodiscard]] std::string certificate_report(const ErrorCertificate& cert,
                                             const ErrorTrace* trace = nullptr);

}  // namespace ndae
