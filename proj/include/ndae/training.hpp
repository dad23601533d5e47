#pragma once

#include "ndae/dae_solver.hpp"
#include "ndae/nn.hpp"
#include "ndae/numerics.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ndae {

/// Raised when a training loss stops being finite; carries the last finite
/// parameter checkpoint so the caller can salvage the run.
class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(const std::string& what, ParamVector checkpoint, int epoch)
      : Error(what), checkpoint_(std::move(checkpoint)), epoch_(epoch) {}
  [[nodiscard]] const ParamVector& checkpoint() const noexcept {
    return checkpoint_;
  }
  [[nodiscard]] int epoch() const noexcept { return epoch_; }

 private:
  ParamVector checkpoint_;
  int epoch_ = 0;
};

/// Raised when two trajectories are compared on different time grids.
class GridMismatch : public Error {
 public:
  using Error::Error;
};

enum class TrainMode { Collocation, ImplicitSolve };

struct LossWeights {
  double w_d = 1.0;
  double w_a = 1.0;
  double update_rate = 0.1;
};

struct TrainConfig {
  TrainMode mode = TrainMode::Collocation;
  int epochs = 1000;
  int batch_size = 0;  ///< 0 selects full-batch updates.
  double step_size = 1e-3;
  double step_size_final = 0.0;  ///< > 0 decays the step geometrically to this.
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  std::string tableau = "midpoint";
  double delta = 0.0;  ///< > 0 overrides the per-sample step size.
  int weight_update_period = 10;
  double newton_tol = 1e-10;    ///< Stage solves in implicit mode.
  int newton_max_iter = 50;
};

/// Per-sample stage quantities entering the penalty losses: free stages
/// (alpha, beta) plus the step endpoint pair.
struct StageVariables {
  std::vector<Vector> alpha;
  std::vector<Vector> beta;
  Vector x_d_next;
  Vector x_a_next;
};

struct TrainRecord {
  int epoch = 0;
  double loss_d = 0.0;
  double loss_a = 0.0;
  double w_d = 1.0;
  double w_a = 1.0;
  double total = 0.0;
};

struct TrainHistory {
  std::vector<TrainRecord> records;
  [[nodiscard]] std::size_t size() const noexcept { return records.size(); }
};

/// Right-hand side seen by the stage losses: (alpha, beta, u) -> derivative.
using StageRhsFn =
    std::function<Vector(const Vector&, const Vector&, const Vector&)>;
/// Constraint residual evaluated at a (dynamic, algebraic) pair.
using PairResidualFn = std::function<Vector(const Vector&, const Vector&)>;

/// Stage-parametrized dynamic loss against an arbitrary right-hand side.
/// `delta` > 0 applies to every sample; `delta` = 0 uses each sample's own
/// step size.
[[nodiscard]] double loss_dynamic_rhs(const SampleSet& samples,
                                      const StageRhsFn& f_hat,
                                      const std::vector<StageVariables>& stages,
                                      const ButcherTableau& tableau,
                                      double delta);

/// Dynamic loss with the identified network as the right-hand side.
[[nodiscard]] double loss_dynamic(const SampleSet& samples, const DnnModel& dnn,
                                  const Mlp& ell_hat,
                                  const std::vector<StageVariables>& stages,
                                  const ButcherTableau& tableau, double delta);

/// Mean over samples of the per-stage constraint residual norms.
[[nodiscard]] double loss_algebraic(const std::vector<StageVariables>& stages,
                                    const PairResidualFn& residual_fn, int nu);

[[nodiscard]] double total_loss(double l_d, double l_a,
                                const LossWeights& weights);

/// Gradient-norm balancing of the algebraic weight; w_d stays 1. A zero or
/// empty grad_a leaves the weights unchanged.
[[nodiscard]] LossWeights update_weights(const LossWeights& weights,
                                         const ParamVector& grad_d,
                                         const ParamVector& grad_a);

/// Initial collocation stages: every stage starts at the left datum with the
/// algebraic part predicted by the map; the endpoint pair is the right datum.
[[nodiscard]] std::vector<StageVariables> init_stages(const SampleSet& samples,
                                                      const Mlp& ell_hat,
                                                      int nu);

/// Flattens the trainable triple and all free stages into one decision vector.
[[nodiscard]] Vector pack_decision(const DnnModel& dnn,
                                   const std::vector<StageVariables>& stages);

/// Writes a decision vector back; endpoint pairs are left untouched.
void unpack_decision(const Vector& z, DnnModel& dnn,
                     std::vector<StageVariables>& stages);

/// Value and decision-vector gradients of both loss terms at one iterate.
struct CollocationEval {
  double loss_d = 0.0;
  double loss_a = 0.0;
  Vector grad_d;
  Vector grad_a;
};
[[nodiscard]] CollocationEval eval_collocation(
    const SampleSet& samples, const DnnModel& dnn, const Mlp& ell_hat,
    const std::vector<StageVariables>& stages, const ButcherTableau& tableau,
    double delta);

struct AlgebraicTrainResult {
  Mlp net;
  std::vector<double> history;  ///< Best-so-far mean squared error per epoch.
};

/// Regression of the algebraic map onto the sampled manifold by Adam.
[[nodiscard]] AlgebraicTrainResult train_algebraic(const SampleSet& samples,
                                                   const Mlp& net,
                                                   const TrainConfig& config);

struct DynamicTrainResult {
  DnnModel dnn;
  std::vector<StageVariables> stages;
  TrainHistory history;
  LossWeights weights;
};

/// IRK-constrained penalty training of the dynamic network with the algebraic
/// map frozen.
[[nodiscard]] DynamicTrainResult train_dynamic(const SampleSet& samples,
                                               const DnnModel& dnn,
                                               const Mlp& ell_hat,
                                               const TrainConfig& config);

enum class ErrorKind { Dynamic, Algebraic };

/// Sentinel stored where the reference norm is too small to divide by.
inline constexpr double kRelativeErrorSentinel = -1.0;

/// Per-time percent relative error between two trajectories on one grid.
[[nodiscard]] Vector relative_error_series(const Trajectory& truth,
                                           const Trajectory& predicted,
                                           ErrorKind which);

[[nodiscard]] std::string history_to_csv(const TrainHistory& history);
void save_history(const TrainHistory& history, const std::string& path);

[[nodiscard]] std::string train_config_to_json(const TrainConfig& config);
[[nodiscard]] TrainConfig train_config_from_json(const std::string& text);

}  // namespace ndae
