#include "ndae/numerics.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <cmath>
#include <utility>

namespace ndae {

namespace {

constexpr double kPivotRel = 1e-14;
constexpr double kSymmetryRel = 1e-10;
constexpr double kFdJacobianStep = 1e-6;
constexpr int kMaxHalvings = 20;

void check_square(const Matrix& a, const char* who) {
  if (a.rows() != a.cols()) {
    throw DimensionMismatch(std::string(who) + ": matrix must be square");
  }
}

Eigen::PartialPivLU<Matrix> pivoted_lu(const Matrix& a, const char* who) {
  check_square(a, who);
  const double max_entry = a.cwiseAbs().maxCoeff();
  if (max_entry == 0.0) {
    throw SingularMatrix(std::string(who) + ": zero matrix");
  }
  Eigen::PartialPivLU<Matrix> lu(a);
  const double pivot_min = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  if (!(pivot_min >= kPivotRel * max_entry)) {
    throw SingularMatrix(std::string(who) + ": pivot below threshold");
  }
  return lu;
}

/// Eigendecomposition of a matrix that must be symmetric up to round-off.
Eigen::SelfAdjointEigenSolver<Matrix> sym_eig(const Matrix& m, const char* who) {
  check_square(m, who);
  const double asym = (m - m.transpose()).norm();
  if (asym > kSymmetryRel * m.norm()) {
    throw NotSymmetric(std::string(who) + ": matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
  return es;
}

}  // namespace

Vector solve_linear(const Matrix& a, const Vector& b) {
  if (a.rows() != b.size()) {
    throw DimensionMismatch("solve_linear: rhs size does not match");
  }
  return pivoted_lu(a, "solve_linear").solve(b);
}

Matrix solve_linear(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionMismatch("solve_linear: rhs rows do not match");
  }
  return pivoted_lu(a, "solve_linear").solve(b);
}

double sym_eig_min(const Matrix& m) {
  return sym_eig(m, "sym_eig_min").eigenvalues().minCoeff();
}

double sym_eig_max(const Matrix& m) {
  return sym_eig(m, "sym_eig_max").eigenvalues().maxCoeff();
}

Matrix spd_sqrt(const Matrix& p) {
  const auto es = sym_eig(p, "spd_sqrt");
  const Vector& lambda = es.eigenvalues();
  if (lambda.minCoeff() <= 0.0) {
    throw NotPositiveDefinite("spd_sqrt: matrix has a non-positive eigenvalue");
  }
  return es.eigenvectors() * lambda.cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

Matrix finite_diff_jacobian(const std::function<Vector(const Vector&)>& f,
                            const Vector& x, double h) {
  Vector xp = x;
  Vector xm = x;
  Matrix jac;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    xp(j) += h;
    xm(j) -= h;
    const Vector col = (f(xp) - f(xm)) / (2.0 * h);
    if (jac.size() == 0) {
      jac.resize(col.size(), x.size());
    }
    jac.col(j) = col;
    xp(j) = x(j);
    xm(j) = x(j);
  }
  if (jac.size() == 0) {
    jac.resize(f(x).size(), 0);
  }
  return jac;
}

NewtonResult newton_solve(const ResidualFn& residual, const JacobianFn& jacobian,
                          const Vector& x0, double tol, int max_iter) {
  Vector x = x0;
  Vector r = residual(x);
  double rn = r.norm();
  if (rn <= tol) {
    return {std::move(x), 0};
  }
  for (int it = 1; it <= max_iter; ++it) {
    const Matrix jac =
        jacobian ? jacobian(x) : finite_diff_jacobian(residual, x, kFdJacobianStep);
    const Vector dx = solve_linear(jac, Vector(-r));

    double step = 1.0;
    Vector x_new = x + dx;
    Vector r_new = residual(x_new);
    double rn_new = r_new.norm();
    for (int k = 0; k < kMaxHalvings && !(rn_new < rn); ++k) {
      step *= 0.5;
      x_new = x + step * dx;
      r_new = residual(x_new);
      rn_new = r_new.norm();
    }

    x = std::move(x_new);
    r = std::move(r_new);
    rn = rn_new;
    if (rn <= tol) {
      return {std::move(x), it};
    }
  }
  throw NoConvergence("newton_solve: no convergence", max_iter, rn);
}

}  // namespace ndae
