#include "ndae/certificate.hpp"

#include "ndae/format.hpp"
#include "ndae/json_util.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

namespace ndae {

namespace {

constexpr double kFeasibilityTol = 1e-10;
constexpr double kTinyError = 1e-12;

Vector gamma_of(const DnnModel& dnn, const Vector& u) {
  return dnn.gamma ? dnn.gamma(u) : u;
}

/// phi with the algebraic solution supplied by the caller.
Vector phi_with_xa(const NdaeModel& model, const DnnModel& dnn, const Matrix& a,
                   const Vector& e, const Vector& x_d, const Vector& x_a,
                   const Vector& u) {
  const Vector truth = eval_dynamic_rhs(model, x_d, x_a, u);
  return truth - dnn.a_nn * x_d - (a - dnn.a_nn) * e -
         dnn.b_nn * mlp_forward(dnn.rho, x_d - e) - dnn.c_nn * gamma_of(dnn, u);
}

/// Validates that every eigenvalue of `a` has a negative real part: the
/// symmetric part being negative definite is sufficient; otherwise a power
/// iteration bounds the spectral radius of I + tau a, which lies inside the
/// unit circle only when a is Hurwitz.
void ensure_hurwitz(const Matrix& a) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw DimensionMismatch("simulate_error: A must be square and non-empty");
  }
  const Matrix sym = 0.5 * (a + a.transpose());
  if (sym_eig_max(sym) < 0.0) {
    return;
  }
  const Eigen::Index n = a.rows();
  const double tau = 0.5 / (a.cwiseAbs().rowwise().sum().maxCoeff() + 1.0);
  const Matrix shifted = Matrix::Identity(n, n) + tau * a;
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    v(i) = 1.0 / static_cast<double>(i + 1);
  }
  v.normalize();
  const int warmup = 400;
  const int window = 200;
  double log_growth = 0.0;
  for (int it = 0; it < warmup + window; ++it) {
    const Vector next = shifted * v;
    const double norm = next.norm();
    if (it >= warmup) {
      log_growth += std::log(norm);
    }
    v = next / norm;
  }
  const double radius = std::exp(log_growth / window);
  if (radius < 1.0) {
    std::cerr << "warning: Hurwitz check used the power-iteration fallback "
                 "(spectral radius estimate "
              << radius << " for I + tau A)\n";
    return;
  }
  throw Error("simulate_error: matrix A is not verifiably Hurwitz");
}

double trace_tail_max(const ErrorTrace& trace) {
  const Eigen::Index count = trace.times.size();
  const double cutoff = 0.8 * trace.times(count - 1);
  double tail_max = 0.0;
  for (Eigen::Index i = 0; i < count; ++i) {
    if (trace.times(i) >= cutoff) {
      tail_max = std::max(tail_max, trace.error_norms(i));
    }
  }
  return tail_max;
}

/// Solves f^T x + x f = rhs through the Kronecker form
/// (I (x) f^T + f^T (x) I) vec(x) = vec(rhs); the result is symmetrized.
Matrix solve_lyapunov(const Matrix& f, const Matrix& rhs) {
  const Eigen::Index n = f.rows();
  const Matrix ft = f.transpose();
  Matrix kron = Matrix::Zero(n * n, n * n);
  for (Eigen::Index j = 0; j < n; ++j) {
    kron.block(j * n, j * n, n, n) += ft;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      kron.block(i * n, j * n, n, n).diagonal().array() += ft(i, j);
    }
  }
  const Vector rhs_vec = Eigen::Map<const Vector>(rhs.data(), n * n);
  const Vector x_vec = solve_linear(kron, rhs_vec);
  const Matrix x = Eigen::Map<const Matrix>(x_vec.data(), n, n);
  return 0.5 * (x + x.transpose());
}

void require_square(const Matrix& m, Eigen::Index n, const char* who,
                    const char* name) {
  if (m.rows() != n || m.cols() != n) {
    throw DimensionMismatch(std::string(who) + ": " + name + " must be " +
                            std::to_string(n) + "x" + std::to_string(n));
  }
}

}  // namespace

Vector phi_eval(const NdaeModel& model, const DnnModel& dnn, const Matrix& a,
                const Vector& e, const Vector& x_d, const Vector& u) {
  const Vector x_a = consistent_init(model, x_d, Vector::Zero(model.n_a));
  return phi_with_xa(model, dnn, a, e, x_d, x_a, u);
}

ErrorTrace simulate_error(const NdaeModel& model, const DnnModel& dnn,
                          const Matrix& a, const Vector& x_d0, const Vector& e0,
                          const InputFn& input_fn, double t_end,
                          const ButcherTableau& tableau,
                          const SolverConfig& config) {
  const Eigen::Index n = model.n_d;
  if (a.rows() != n || a.cols() != n || x_d0.size() != n || e0.size() != n) {
    throw DimensionMismatch("simulate_error: A and states must match n_d");
  }
  ensure_hurwitz(a);

  DaeSystem sys;
  sys.n_d = 2 * n;
  sys.n_a = model.n_a;
  sys.f = [&model, &dnn, &a, n](const Vector& z, const Vector& x_a,
                                const Vector& u) {
    const Vector x_d = z.head(n);
    const Vector e = z.tail(n);
    const Vector truth = eval_dynamic_rhs(model, x_d, x_a, u);
    const Vector phi = truth - dnn.a_nn * x_d - (a - dnn.a_nn) * e -
                       dnn.b_nn * mlp_forward(dnn.rho, x_d - e) -
                       dnn.c_nn * gamma_of(dnn, u);
    Vector out(2 * n);
    out.head(n) = truth;
    out.tail(n) = a * e + phi;
    return out;
  };
  sys.g = [&model, n](const Vector& z, const Vector& x_a) {
    return eval_algebraic_residual(model, z.head(n), x_a);
  };
  sys.f_jac_xd = [&model, &dnn, n](const Vector& z, const Vector& x_a,
                                   const Vector& u) {
    (void)u;
    const Vector x_d = z.head(n);
    const Vector e = z.tail(n);
    const Matrix truth_xd = dynamic_jacobian_xd(model, x_d, x_a);
    const Matrix nn_jac = dnn.a_nn + dnn.b_nn * mlp_input_jacobian(dnn.rho, x_d - e);
    Matrix out = Matrix::Zero(2 * n, 2 * n);
    out.topLeftCorner(n, n) = truth_xd;
    out.bottomLeftCorner(n, n) = truth_xd - nn_jac;
    out.bottomRightCorner(n, n) = nn_jac;
    return out;
  };
  sys.f_jac_xa = [&model, n](const Vector& z, const Vector& x_a, const Vector& u) {
    (void)u;
    const Matrix truth_xa = dynamic_jacobian_xa(model, z.head(n), x_a);
    Matrix out(2 * n, truth_xa.cols());
    out.topRows(n) = truth_xa;
    out.bottomRows(n) = truth_xa;
    return out;
  };
  sys.g_jac_xd = [&model, n](const Vector& z, const Vector& x_a) {
    Matrix out = Matrix::Zero(model.n_a, 2 * n);
    out.leftCols(n) = algebraic_jacobian_xd(model, z.head(n), x_a);
    return out;
  };
  sys.g_jac_xa = [&model, n](const Vector& z, const Vector& x_a) {
    return algebraic_jacobian(model, z.head(n), x_a);
  };

  Vector z0(2 * n);
  z0 << x_d0, e0;
  const Trajectory traj = simulate_system(sys, z0, Vector::Zero(model.n_a),
                                          input_fn, t_end, tableau, config);
  ErrorTrace trace;
  trace.times = traj.times;
  trace.error_norms.resize(traj.size());
  for (Eigen::Index i = 0; i < traj.size(); ++i) {
    trace.error_norms(i) = traj.states_d[static_cast<std::size_t>(i)].tail(n).norm();
  }
  return trace;
}

std::pair<double, double> estimate_c0_c1(const NdaeModel& model,
                                         const DnnModel& dnn, const Matrix& a,
                                         const Matrix& l, const Matrix& k,
                                         const std::vector<CloudPoint>& cloud) {
  if (cloud.empty()) {
    throw EmptyCloud("estimate_c0_c1: empty sample cloud");
  }
  const Vector zero_e = Vector::Zero(model.n_d);
  std::vector<double> phi_l_phi(cloud.size());
  std::vector<double> weighted_e(cloud.size());
  double c0 = 0.0;
  for (std::size_t s = 0; s < cloud.size(); ++s) {
    const CloudPoint& point = cloud[s];
    const Vector x_a = consistent_init(model, point.x_d, Vector::Zero(model.n_a));
    const Vector phi0 = phi_with_xa(model, dnn, a, zero_e, point.x_d, x_a, point.u);
    c0 = std::max(c0, phi0.dot(l * phi0));
    const Vector phi = phi_with_xa(model, dnn, a, point.e, point.x_d, x_a, point.u);
    phi_l_phi[s] = phi.dot(l * phi);
    weighted_e[s] = point.e.dot(k * point.e);
    if (weighted_e[s] <= kTinyError) {
      c0 = std::max(c0, phi_l_phi[s]);
    }
  }
  double c1 = 0.0;
  for (std::size_t s = 0; s < cloud.size(); ++s) {
    if (weighted_e[s] > kTinyError) {
      c1 = std::max(c1, std::max(0.0, (phi_l_phi[s] - c0) / weighted_e[s]));
    }
  }
  return {c0, c1};
}

FeasibilityResult check_assumption3(const Matrix& a, const Matrix& p,
                                    const Matrix& w, const Matrix& l,
                                    const Matrix& k, double c1) {
  const Eigen::Index n = a.rows();
  require_square(a, n, "check_assumption3", "A");
  require_square(p, n, "check_assumption3", "P");
  require_square(w, n, "check_assumption3", "W");
  require_square(l, n, "check_assumption3", "L");
  require_square(k, n, "check_assumption3", "K");
  const Matrix l_inv_p = solve_linear(l, p);
  Matrix m = a.transpose() * p + p * a + p * l_inv_p + c1 * k + w;
  m = 0.5 * (m + m.transpose());
  const double lambda_max = sym_eig_max(m);
  return {lambda_max <= kFeasibilityTol, -lambda_max};
}

double prop1_bound(const Matrix& p, const Matrix& w, double c0) {
  if (c0 < 0.0) {
    throw Error("prop1_bound: c0 must be non-negative");
  }
  const Matrix root = spd_sqrt(p);
  const Matrix half = solve_linear(root, w);
  Matrix w_tilde = solve_linear(root, Matrix(half.transpose())).transpose();
  w_tilde = 0.5 * (w_tilde + w_tilde.transpose());
  const double lambda_p = sym_eig_min(p);
  const double lambda_w = sym_eig_min(w_tilde);
  if (lambda_w <= 0.0) {
    throw NotPositiveDefinite("prop1_bound: W must be positive definite");
  }
  return std::sqrt(c0 / (lambda_p * lambda_w));
}

ErrorCertificate certify(const NdaeModel& model, const DnnModel& dnn,
                         const Matrix& a, const Matrix& l, const Matrix& k,
                         const Matrix& p, const Matrix& w,
                         const std::vector<CloudPoint>& cloud) {
  ErrorCertificate cert;
  cert.a = a;
  cert.p = p;
  cert.w = w;
  cert.l = l;
  cert.k = k;
  const auto [c0, c1] = estimate_c0_c1(model, dnn, a, l, k, cloud);
  cert.c0 = c0;
  cert.c1 = c1;
  const FeasibilityResult feasibility = check_assumption3(a, p, w, l, k, c1);
  cert.feasible = feasibility.feasible;
  cert.margin = feasibility.margin;
  cert.bound = prop1_bound(p, w, c0);
  cert.cloud_size = static_cast<Eigen::Index>(cloud.size());
  return cert;
}

LyapunovCandidate candidate_pw(const Matrix& a, const Matrix& l, const Matrix& k,
                               double c1, double w_scale) {
  const Eigen::Index n = a.rows();
  require_square(a, n, "candidate_pw", "A");
  require_square(l, n, "candidate_pw", "L");
  require_square(k, n, "candidate_pw", "K");
  const Matrix w = w_scale * Matrix::Identity(n, n);
  const Matrix q = c1 * k + w;
  Matrix l_inv = solve_linear(l, Matrix(Matrix::Identity(n, n)));
  l_inv = 0.5 * (l_inv + l_inv.transpose());

  const int max_iter = 50;
  const double tol = 1e-12 * std::max(1.0, q.norm());
  Matrix p = solve_lyapunov(a, -q);
  for (int it = 0; it < max_iter; ++it) {
    const Matrix residual = a.transpose() * p + p * a + p * l_inv * p + q;
    if (residual.norm() <= tol) {
      return {p, w};
    }
    const Matrix closed_loop = a + l_inv * p;
    p = solve_lyapunov(closed_loop, p * l_inv * p - q);
  }
  const Matrix residual = a.transpose() * p + p * a + p * l_inv * p + q;
  throw NoConvergence("candidate_pw: Newton-Kleinman iteration did not converge",
                      max_iter, residual.norm());
}

std::string certificate_report(const ErrorCertificate& cert,
                               const ErrorTrace* trace) {
  std::string out = "{\n";
  out += "  \"n\": " + std::to_string(cert.a.rows()) + ",\n";
  out += "  \"a\": " + json_matrix(cert.a) + ",\n";
  out += "  \"p\": " + json_matrix(cert.p) + ",\n";
  out += "  \"w\": " + json_matrix(cert.w) + ",\n";
  out += "  \"l\": " + json_matrix(cert.l) + ",\n";
  out += "  \"k\": " + json_matrix(cert.k) + ",\n";
  out += "  \"c0\": " + g17(cert.c0) + ",\n";
  out += "  \"c1\": " + g17(cert.c1) + ",\n";
  out += "  \"margin\": " + g17(cert.margin) + ",\n";
  out += "  \"bound\": " + g17(cert.bound) + ",\n";
  out += "  \"feasible\": " + std::string(cert.feasible ? "true" : "false") +
         ",\n";
  out += "  \"cloud_size\": " + std::to_string(cert.cloud_size);
  if (trace != nullptr && trace->times.size() > 0) {
    out += ",\n  \"horizon\": " + g17(trace->times(trace->times.size() - 1));
    out += ",\n  \"tail_max_error\": " + g17(trace_tail_max(*trace));
  }
  out += "\n}\n";
  return out;
}

}  // namespace ndae
