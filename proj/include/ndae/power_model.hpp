#pragma once

#include "ndae/numerics.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace ndae {

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

enum class TermOp { SinDiff, CosTimes, Linear };

/// One scalar output of a term-list nonlinearity:
///   SinDiff   coeff * sin(x_d[i] - x_d[j])
///   CosTimes  coeff * cos(x_d[i]) * x_a[k]
///   Linear    coeff * x_a[k] when k >= 0, else coeff * x_d[i]
/// Every op vanishes at the origin, so term-built maps satisfy f(0,0) = 0.
struct NonlinearTerm {
  TermOp op = TermOp::Linear;
  int i = 0;
  int j = 0;
  int k = -1;
  double coeff = 1.0;
};

/// Vector-valued map (x_d, x_a) -> R^dim with optional analytic Jacobians.
/// Either backed by a term list (serializable, analytic derivatives) or by
/// arbitrary callbacks; missing Jacobians fall back to central differences.
class Nonlinearity {
 public:
  using EvalFn = std::function<Vector(const Vector&, const Vector&)>;
  using JacFn = std::function<Matrix(const Vector&, const Vector&)>;

  Nonlinearity() = default;

  static Nonlinearity from_terms(std::vector<NonlinearTerm> terms);
  static Nonlinearity from_callback(Eigen::Index dim, EvalFn eval,
                                    JacFn jac_xd = {}, JacFn jac_xa = {});

  [[nodiscard]] Vector operator()(const Vector& x_d, const Vector& x_a) const;
  [[nodiscard]] Matrix jacobian_xd(const Vector& x_d, const Vector& x_a) const;
  [[nodiscard]] Matrix jacobian_xa(const Vector& x_d, const Vector& x_a) const;

  [[nodiscard]] Eigen::Index dim() const { return dim_; }
  [[nodiscard]] bool has_terms() const { return has_terms_; }
  [[nodiscard]] const std::vector<NonlinearTerm>& terms() const { return terms_; }

 private:
  Eigen::Index dim_ = 0;
  bool has_terms_ = false;
  std::vector<NonlinearTerm> terms_;
  EvalFn eval_;
  JacFn jac_xd_;
  JacFn jac_xa_;
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Semi-explicit index-1 DAE
///   x_d' = A_d x_d + C_d f(x_d, x_a) + B u + h w0
///     0  = A_a x_a + C_a g(x_d, x_a)
/// The dynamic mass matrix is the identity and is not stored.
struct NdaeModel {
  Eigen::Index n_d = 0;
  Eigen::Index n_a = 0;
  Eigen::Index m = 0;
  Matrix a_d;
  Matrix c_d;
  Matrix b;
  Matrix a_a;
  Matrix c_a;
  Vector h;
  double w0 = 0.0;
  Nonlinearity f;
  Nonlinearity g;
};

/// A_d x_d + C_d f(x_d, x_a) + B u + h w0.
[[nodiscard]] Vector eval_dynamic_rhs(const NdaeModel& model, const Vector& x_d,
                                      const Vector& x_a, const Vector& u);

/// A_a x_a + C_a g(x_d, x_a).
[[nodiscard]] Vector eval_algebraic_residual(const NdaeModel& model,
                                             const Vector& x_d, const Vector& x_a);

/// Jacobian of the algebraic residual with respect to x_a.
[[nodiscard]] Matrix algebraic_jacobian(const NdaeModel& model, const Vector& x_d,
                                        const Vector& x_a);

/// Jacobian of the algebraic residual with respect to x_d.
[[nodiscard]] Matrix algebraic_jacobian_xd(const NdaeModel& model,
                                           const Vector& x_d, const Vector& x_a);

/// Jacobian of the dynamic right-hand side with respect to x_d.
[[nodiscard]] Matrix dynamic_jacobian_xd(const NdaeModel& model, const Vector& x_d,
                                         const Vector& x_a);

/// Jacobian of the dynamic right-hand side with respect to x_a.
[[nodiscard]] Matrix dynamic_jacobian_xa(const NdaeModel& model, const Vector& x_d,
                                         const Vector& x_a);

/// Minimum over the given points of the smallest singular value of the
/// algebraic Jacobian; a positive value certifies index 1 along the sample.
[[nodiscard]] double index1_margin(
    const NdaeModel& model, const std::vector<std::pair<Vector, Vector>>& points);

/// Solves the algebraic constraint for x_a at fixed x_d0 by Newton iteration
/// seeded at x_a_guess; the result satisfies ||residual|| <= 1e-10.
[[nodiscard]] Vector consistent_init(const NdaeModel& model, const Vector& x_d0,
                                     const Vector& x_a_guess);

/// Seeded synthetic multi-machine model with n_d = 4 n_gen, n_a = 8 n_gen,
/// m = 2 n_gen: Hurwitz A_d, strictly diagonally dominant A_a whose dominance
/// margin exceeds the Lipschitz bound of C_a g in x_a, and trigonometric
/// couplings between rotor-angle states and voltage-like algebraic variables.
[[nodiscard]] NdaeModel build_synthetic_model(int n_gen, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// JSON document for a term-list model; bit-exact round-trip through
/// model_from_json. Throws Error when a nonlinearity is not term-backed.
[[nodiscard]] std::string model_to_json(const NdaeModel& model);
[[nodiscard]] NdaeModel model_from_json(const std::string& text);

void save_model(const NdaeModel& model, const std::string& path);
[[nodiscard]] NdaeModel load_model(const std::string& path);

}  // namespace ndae
