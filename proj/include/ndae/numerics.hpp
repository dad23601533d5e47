#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>

namespace ndae {

using Scalar = double;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Base class of every exception thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class SingularMatrix : public Error {
 public:
  using Error::Error;
};

class NotSymmetric : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

/// Missing or unreadable artifact on disk.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Thrown when an iterative solve exhausts its iteration budget.
class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& what, int iterations, double residual_norm)
      : Error(what), iterations_(iterations), residual_norm_(residual_norm) {}

  [[nodiscard]] int iterations() const { return iterations_; }
  [[nodiscard]] double residual_norm() const { return residual_norm_; }

 private:
  int iterations_ = 0;
  double residual_norm_ = 0.0;
};

// ---------------------------------------------------------------------------
// Dense linear algebra
// ---------------------------------------------------------------------------

/// Solves a*x = b by LU with partial pivoting. Throws SingularMatrix when a
/// pivot magnitude falls below 1e-14 * max|a_ij|.
[[nodiscard]] Vector solve_linear(const Matrix& a, const Vector& b);

/// Multi-right-hand-side variant, same pivoting contract.
[[nodiscard]] Matrix solve_linear(const Matrix& a, const Matrix& b);

/// Smallest eigenvalue of a symmetric matrix. The input must satisfy
/// ||m - m^T|| <= 1e-10 * ||m||, otherwise NotSymmetric is thrown.
[[nodiscard]] double sym_eig_min(const Matrix& m);

/// Largest eigenvalue of a symmetric matrix, same symmetry contract.
[[nodiscard]] double sym_eig_max(const Matrix& m);

/// Principal square root S of a symmetric positive definite matrix,
/// S*S = p. Throws NotPositiveDefinite when the smallest eigenvalue is <= 0.
[[nodiscard]] Matrix spd_sqrt(const Matrix& p);

/// Central-difference Jacobian, column j = (f(x + h e_j) - f(x - h e_j)) / 2h.
[[nodiscard]] Matrix finite_diff_jacobian(
    const std::function<Vector(const Vector&)>& f, const Vector& x, double h);

// ---------------------------------------------------------------------------
// Newton
// ---------------------------------------------------------------------------

using ResidualFn = std::function<Vector(const Vector&)>;
using JacobianFn = std::function<Matrix(const Vector&)>;

struct NewtonResult {
  Vector x;
  int iterations = 0;
};

/// Damped Newton on residual(x) = 0. The step comes from solve_linear on the
/// supplied Jacobian (central differences with h = 1e-6 when `jacobian` is
/// empty) and is halved up to 20 times while the residual norm does not
/// decrease. Throws NoConvergence after max_iter iterations, SingularMatrix
/// from the inner solve.
NewtonResult newton_solve(const ResidualFn& residual, const JacobianFn& jacobian,
                          const Vector& x0, double tol, int max_iter);

}  // namespace ndae
