#pragma once

#include "ndae/dae_solver.hpp"
#include "ndae/numerics.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ndae {

// ---------------------------------------------------------------------------
// Feedforward network
// ---------------------------------------------------------------------------

/// Fully connected network, tanh on hidden layers, identity output.
/// weights[l] has shape layer_sizes[l+1] x layer_sizes[l].
struct Mlp {
  std::vector<Eigen::Index> layer_sizes;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
};

/// Zero-initialized network of the given layer sizes.
[[nodiscard]] Mlp make_mlp(const std::vector<Eigen::Index>& layer_sizes);

/// Glorot-uniform weights (±sqrt(6/(fan_in+fan_out))), zero biases.
[[nodiscard]] Mlp init_mlp(const std::vector<Eigen::Index>& layer_sizes,
                           std::uint64_t seed);

[[nodiscard]] Vector mlp_forward(const Mlp& net, const Vector& x);

/// Jacobian of the network output with respect to its input.
[[nodiscard]] Matrix mlp_input_jacobian(const Mlp& net, const Vector& x);

// ---------------------------------------------------------------------------
// Flat parameters
// ---------------------------------------------------------------------------

struct ParamSegment {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};

/// Flat parameter vector with a named-segment layout; matrices are stored
/// row-major. Flatten/unflatten round-trips are exact.
struct ParamVector {
  Vector values;
  std::vector<ParamSegment> layout;

  [[nodiscard]] Eigen::Index size() const { return values.size(); }
};

[[nodiscard]] Eigen::Index segment_offset(const ParamVector& params,
                                          const std::string& name);

/// Copies a named segment out as a matrix (column vectors have cols = 1).
[[nodiscard]] Matrix param_matrix(const ParamVector& params,
                                  const std::string& name);

/// Overwrites a named segment from a matrix of matching shape.
void set_param_matrix(ParamVector& params, const std::string& name,
                      const Matrix& value);

/// Mlp <-> flat parameters, segments w0, b0, w1, b1, ...  A non-empty prefix
/// namespaces the segment names ("rho.w0", ...).
[[nodiscard]] ParamVector mlp_params(const Mlp& net, const std::string& prefix = "");
[[nodiscard]] Mlp mlp_from_params(const std::vector<Eigen::Index>& layer_sizes,
                                  const ParamVector& params,
                                  const std::string& prefix = "");

struct MlpGradient {
  ParamVector param_grad;
  Vector input_grad;
};

/// Reverse-mode gradients of seed . output with respect to all parameters
/// (same layout as mlp_params) and the input.
[[nodiscard]] MlpGradient mlp_gradient(const Mlp& net, const Vector& loss_seed,
                                       const Vector& x);

// ---------------------------------------------------------------------------
// Differential network
// ---------------------------------------------------------------------------

/// x' = A_nn x + B_nn rho(x) + C_nn gamma(u) + h w0. The input path
/// (C_nn, gamma) and the forcing pair (h, w0) are fixed; gamma defaults to
/// the identity when the evaluator is empty.
struct DnnModel {
  Matrix a_nn;
  Matrix b_nn;
  Matrix c_nn;
  Mlp rho;
  std::function<Vector(const Vector&)> gamma;
  Vector h;
  double w0 = 0.0;
};

[[nodiscard]] Vector dnn_rhs(const DnnModel& dnn, const Vector& x_nn,
                             const Vector& u);

/// Jacobian of dnn_rhs with respect to the state.
[[nodiscard]] Matrix dnn_rhs_jacobian(const DnnModel& dnn, const Vector& x_nn);

struct DnnVjp {
  Matrix grad_a_nn;
  Matrix grad_b_nn;
  ParamVector grad_rho;
  Vector grad_x;
};

/// Reverse-mode gradients of seed . dnn_rhs(x, u) with respect to the
/// trainable terms (A_nn, B_nn, rho) and the state.
[[nodiscard]] DnnVjp dnn_rhs_vjp(const DnnModel& dnn, const Vector& x,
                                 const Vector& u, const Vector& seed);

/// Integrates x' = dnn_rhs(x, u) with the IRK machinery (no algebraic
/// unknowns) and reports x_a = algebraic_map(x) at every stored time.
[[nodiscard]] Trajectory dnn_simulate(const DnnModel& dnn, const Mlp& algebraic_map,
                                      const Vector& x0, const InputFn& input_fn,
                                      double t_end, const ButcherTableau& tableau,
                                      const SolverConfig& config);

// ---------------------------------------------------------------------------
// Initialization and checkpoints
// ---------------------------------------------------------------------------

/// Network sizes for one identified system: state dimension n_d, inner
/// nonlinearity width n_b, input-path width n_c, and the two network shapes.
struct DnnShape {
  Eigen::Index n_d = 0;
  Eigen::Index n_a = 0;
  Eigen::Index n_b = 0;
  Eigen::Index n_c = 0;
  std::vector<Eigen::Index> rho_sizes;
  std::vector<Eigen::Index> ell_sizes;
};

/// Default shape: rho = [n_d, 32, n_b] with n_b = n_d,
/// ell = [n_d, 64, 64, n_a], n_c = m.
[[nodiscard]] DnnShape default_shape(Eigen::Index n_d, Eigen::Index n_a,
                                     Eigen::Index m);

/// Full trainable vector: segments a_nn (-0.1 I), b_nn (small random),
/// rho.* and ell.* (Glorot weights, zero biases). Deterministic under seed.
[[nodiscard]] ParamVector init_params(const DnnShape& shape, std::uint64_t seed);

/// Assembles the differential network from the a_nn/b_nn/rho.* segments;
/// c_nn, h, w0 are the fixed known parts.
[[nodiscard]] DnnModel dnn_from_params(const DnnShape& shape,
                                       const ParamVector& params,
                                       const Matrix& c_nn, const Vector& h,
                                       double w0);

/// Extracts the algebraic map from the ell.* segments.
[[nodiscard]] Mlp ell_from_params(const DnnShape& shape, const ParamVector& params);

/// Flat view of the trainable triple (a_nn, b_nn, rho.*) of a network.
[[nodiscard]] ParamVector dnn_params(const DnnModel& dnn);
void set_dnn_params(DnnModel& dnn, const ParamVector& params);

[[nodiscard]] std::string params_to_json(const ParamVector& params);
[[nodiscard]] ParamVector params_from_json(const std::string& text);
void save_params(const ParamVector& params, const std::string& path);
[[nodiscard]] ParamVector load_params(const std::string& path);

}  // namespace ndae
