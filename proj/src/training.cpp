#include "ndae/training.hpp"

#include "ndae/format.hpp"
#include "ndae/io_util.hpp"
#include "ndae/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <utility>

namespace ndae {

namespace {

constexpr double kGradEpsilon = 1e-12;
constexpr double kWeightFloor = 1e-12;
constexpr double kGridTol = 1e-12;
constexpr double kReferenceFloor = 1e-12;

void validate_config(const TrainConfig& config, const char* who) {
  if (config.epochs < 0 || config.batch_size < 0 ||
      config.weight_update_period < 1 || config.newton_max_iter < 1) {
    throw Error(std::string(who) + ": counts must be positive");
  }
  if (!(config.step_size > 0.0) || !(config.epsilon > 0.0) ||
      !(config.beta1 >= 0.0 && config.beta1 < 1.0) ||
      !(config.beta2 >= 0.0 && config.beta2 < 1.0) ||
      !(config.newton_tol > 0.0)) {
    throw Error(std::string(who) + ": rates must be positive and betas in [0,1)");
  }
}

void validate_stages(const SampleSet& samples,
                     const std::vector<StageVariables>& stages, int nu,
                     const char* who) {
  if (stages.size() != samples.pairs.size()) {
    throw DimensionMismatch(std::string(who) +
                            ": one StageVariables entry per sample required");
  }
  for (const auto& stage : stages) {
    if (stage.alpha.size() != static_cast<std::size_t>(nu) ||
        stage.beta.size() != static_cast<std::size_t>(nu)) {
      throw DimensionMismatch(std::string(who) +
                              ": stage count does not match the tableau");
    }
  }
}

double sample_delta(const SamplePair& pair, double override_delta) {
  return override_delta > 0.0 ? override_delta : pair.delta;
}

/// Geometric interpolation from step_size to step_size_final over the run.
double step_size_at(const TrainConfig& config, int epoch) {
  if (config.step_size_final <= 0.0 || config.epochs <= 1) {
    return config.step_size;
  }
  const double frac =
      static_cast<double>(epoch) / static_cast<double>(config.epochs - 1);
  return config.step_size *
         std::pow(config.step_size_final / config.step_size, frac);
}

struct AdamState {
  Vector m;
  Vector v;
  int t = 0;

  explicit AdamState(Eigen::Index n)
      : m(Vector::Zero(n)), v(Vector::Zero(n)) {}

  void step(Vector& z, const Vector& grad, double step_size,
            const TrainConfig& config) {
    ++t;
    m = config.beta1 * m + (1.0 - config.beta1) * grad;
    v = config.beta2 * v + (1.0 - config.beta2) * grad.cwiseProduct(grad);
    const double m_scale = 1.0 - std::pow(config.beta1, t);
    const double v_scale = 1.0 - std::pow(config.beta2, t);
    z.array() -= step_size * (m.array() / m_scale) /
                 ((v.array() / v_scale).sqrt() + config.epsilon);
  }
};

ParamVector single_segment(const Vector& values) {
  ParamVector params;
  params.values = values;
  params.layout.push_back({"decision", values.size(), 1});
  return params;
}

/// Accumulates a matrix gradient into a row-major flat segment.
void add_row_major(Vector& flat, Eigen::Index offset, const Matrix& value) {
  for (Eigen::Index r = 0; r < value.rows(); ++r) {
    for (Eigen::Index c = 0; c < value.cols(); ++c) {
      flat(offset + r * value.cols() + c) += value(r, c);
    }
  }
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

/// Collocation loss terms and gradients over a subset of samples; gradients
/// land in full decision-vector coordinates, untouched blocks stay zero.
CollocationEval eval_collocation_subset(
    const SampleSet& samples, const DnnModel& dnn, const Mlp& ell_hat,
    const std::vector<StageVariables>& stages, const ButcherTableau& tableau,
    double delta, const std::vector<std::size_t>& subset) {
  const int nu = tableau.nu;
  const Eigen::Index n_d = dnn.a_nn.rows();
  const Eigen::Index n_a = ell_hat.layer_sizes.back();
  const Eigen::Index theta_len =
      dnn.a_nn.size() + dnn.b_nn.size() + mlp_params(dnn.rho).values.size();
  const Eigen::Index block = nu * (n_d + n_a);
  const Eigen::Index total_len =
      theta_len + static_cast<Eigen::Index>(samples.pairs.size()) * block;
  const Eigen::Index b_nn_offset = dnn.a_nn.size();
  const Eigen::Index rho_offset = b_nn_offset + dnn.b_nn.size();

  CollocationEval ev;
  ev.grad_d = Vector::Zero(total_len);
  ev.grad_a = Vector::Zero(total_len);
  if (subset.empty()) {
    return ev;
  }

  const double eta = static_cast<double>(subset.size());
  const double scale = 1.0 / (eta * (nu + 1));

  for (const std::size_t s : subset) {
    const SamplePair& pair = samples.pairs[s];
    const StageVariables& stage = stages[s];
    const double h = sample_delta(pair, delta);
    const Eigen::Index base = theta_len + static_cast<Eigen::Index>(s) * block;

    std::vector<Vector> f_vals(nu);
    for (int i = 0; i < nu; ++i) {
      f_vals[i] = dnn_rhs(dnn, stage.alpha[i], pair.u);
    }

    std::vector<Vector> residuals(nu);
    for (int j = 0; j < nu; ++j) {
      Vector r = stage.alpha[j] - pair.x_d_n;
      for (int i = 0; i < nu; ++i) {
        r -= h * tableau.b(j, i) * f_vals[i];
      }
      residuals[j] = std::move(r);
      ev.loss_d += scale * residuals[j].squaredNorm();
    }
    Vector endpoint = stage.x_d_next - pair.x_d_n;
    for (int i = 0; i < nu; ++i) {
      endpoint -= h * tableau.c(i) * f_vals[i];
    }
    ev.loss_d += scale * endpoint.squaredNorm();

    for (int i = 0; i < nu; ++i) {
      Vector seed = tableau.c(i) * endpoint;
      for (int j = 0; j < nu; ++j) {
        seed += tableau.b(j, i) * residuals[j];
      }
      seed *= -2.0 * scale * h;
      const DnnVjp vjp = dnn_rhs_vjp(dnn, stage.alpha[i], pair.u, seed);
      add_row_major(ev.grad_d, 0, vjp.grad_a_nn);
      add_row_major(ev.grad_d, b_nn_offset, vjp.grad_b_nn);
      ev.grad_d.segment(rho_offset, vjp.grad_rho.values.size()) +=
          vjp.grad_rho.values;
      ev.grad_d.segment(base + i * n_d, n_d) +=
          2.0 * scale * residuals[i] + vjp.grad_x;
    }

    for (int j = 0; j < nu; ++j) {
      const Vector res = stage.beta[j] - mlp_forward(ell_hat, stage.alpha[j]);
      const double norm = res.norm();
      ev.loss_a += scale * norm;
      if (norm > 0.0) {
        const Vector unit = res / norm;
        ev.grad_a.segment(base + nu * n_d + j * n_a, n_a) += scale * unit;
        const MlpGradient mg = mlp_gradient(ell_hat, unit, stage.alpha[j]);
        ev.grad_a.segment(base + j * n_d, n_d) -= scale * mg.input_grad;
      }
    }
    ev.loss_a +=
        scale * (stage.x_a_next - mlp_forward(ell_hat, stage.x_d_next)).norm();
  }
  return ev;
}

/// Solved implicit stages for one sample plus what the adjoint pass needs.
struct StageSolve {
  Vector alpha;
  Vector x_next;
  std::vector<Matrix> jac_f;
};

StageSolve solve_stages(const DnnModel& dnn, const ButcherTableau& tableau,
                        const Vector& x_d_n, const Vector& u, double h,
                        const Vector& warm_start, const TrainConfig& config) {
  const int nu = tableau.nu;
  const Eigen::Index n_d = x_d_n.size();

  const auto residual = [&](const Vector& z) {
    std::vector<Vector> f_vals(nu);
    for (int i = 0; i < nu; ++i) {
      f_vals[i] = dnn_rhs(dnn, Vector(z.segment(i * n_d, n_d)), u);
    }
    Vector r(nu * n_d);
    for (int j = 0; j < nu; ++j) {
      Vector rj = z.segment(j * n_d, n_d) - x_d_n;
      for (int i = 0; i < nu; ++i) {
        rj -= h * tableau.b(j, i) * f_vals[i];
      }
      r.segment(j * n_d, n_d) = rj;
    }
    return r;
  };
  const auto jacobian = [&](const Vector& z) {
    Matrix jac = Matrix::Identity(nu * n_d, nu * n_d);
    for (int i = 0; i < nu; ++i) {
      const Matrix jf = dnn_rhs_jacobian(dnn, Vector(z.segment(i * n_d, n_d)));
      for (int j = 0; j < nu; ++j) {
        jac.block(j * n_d, i * n_d, n_d, n_d) -= h * tableau.b(j, i) * jf;
      }
    }
    return jac;
  };

  StageSolve solve;
  solve.alpha = newton_solve(residual, jacobian, warm_start, config.newton_tol,
                             config.newton_max_iter)
                    .x;
  solve.x_next = x_d_n;
  solve.jac_f.resize(nu);
  for (int i = 0; i < nu; ++i) {
    const Vector alpha_i = solve.alpha.segment(i * n_d, n_d);
    solve.x_next += h * tableau.c(i) * dnn_rhs(dnn, alpha_i, u);
    solve.jac_f[i] = dnn_rhs_jacobian(dnn, alpha_i);
  }
  return solve;
}

}  // namespace

double loss_dynamic_rhs(const SampleSet& samples, const StageRhsFn& f_hat,
                        const std::vector<StageVariables>& stages,
                        const ButcherTableau& tableau, double delta) {
  const int nu = tableau.nu;
  validate_stages(samples, stages, nu, "loss_dynamic_rhs");
  if (samples.pairs.empty()) {
    return 0.0;
  }

  const double scale =
      1.0 / (static_cast<double>(samples.pairs.size()) * (nu + 1));
  double loss = 0.0;
  for (std::size_t s = 0; s < samples.pairs.size(); ++s) {
    const SamplePair& pair = samples.pairs[s];
    const StageVariables& stage = stages[s];
    const double h = sample_delta(pair, delta);

    std::vector<Vector> f_vals(nu);
    for (int i = 0; i < nu; ++i) {
      f_vals[i] = f_hat(stage.alpha[i], stage.beta[i], pair.u);
    }
    for (int j = 0; j < nu; ++j) {
      Vector r = stage.alpha[j] - pair.x_d_n;
      for (int i = 0; i < nu; ++i) {
        r -= h * tableau.b(j, i) * f_vals[i];
      }
      loss += scale * r.squaredNorm();
    }
    Vector endpoint = stage.x_d_next - pair.x_d_n;
    for (int i = 0; i < nu; ++i) {
      endpoint -= h * tableau.c(i) * f_vals[i];
    }
    loss += scale * endpoint.squaredNorm();
  }
  return loss;
}

double loss_dynamic(const SampleSet& samples, const DnnModel& dnn,
                    const Mlp& ell_hat, const std::vector<StageVariables>& stages,
                    const ButcherTableau& tableau, double delta) {
  (void)ell_hat;
  const StageRhsFn f_hat = [&dnn](const Vector& alpha, const Vector&,
                                  const Vector& u) {
    return dnn_rhs(dnn, alpha, u);
  };
  return loss_dynamic_rhs(samples, f_hat, stages, tableau, delta);
}

double loss_algebraic(const std::vector<StageVariables>& stages,
                      const PairResidualFn& residual_fn, int nu) {
  if (stages.empty()) {
    return 0.0;
  }
  const double scale = 1.0 / (static_cast<double>(stages.size()) * (nu + 1));
  double loss = 0.0;
  for (const StageVariables& stage : stages) {
    if (stage.alpha.size() != static_cast<std::size_t>(nu) ||
        stage.beta.size() != static_cast<std::size_t>(nu)) {
      throw DimensionMismatch("loss_algebraic: stage count does not match nu");
    }
    for (int j = 0; j < nu; ++j) {
      loss += scale * residual_fn(stage.alpha[j], stage.beta[j]).norm();
    }
    loss += scale * residual_fn(stage.x_d_next, stage.x_a_next).norm();
  }
  return loss;
}

double total_loss(double l_d, double l_a, const LossWeights& weights) {
  return weights.w_d * l_d + weights.w_a * l_a;
}

LossWeights update_weights(const LossWeights& weights, const ParamVector& grad_d,
                           const ParamVector& grad_a) {
  LossWeights next = weights;
  next.w_d = 1.0;
  if (grad_a.values.size() == 0 || grad_d.values.size() == 0) {
    return next;
  }
  const double mean_a = grad_a.values.cwiseAbs().mean();
  if (mean_a == 0.0) {
    return next;
  }
  const double mean_d = grad_d.values.cwiseAbs().mean();
  const double target = mean_d / (mean_a + kGradEpsilon);
  next.w_a = (1.0 - weights.update_rate) * weights.w_a +
             weights.update_rate * target;
  if (next.w_a < kWeightFloor) {
    next.w_a = kWeightFloor;
  }
  return next;
}

std::vector<StageVariables> init_stages(const SampleSet& samples,
                                        const Mlp& ell_hat, int nu) {
  std::vector<StageVariables> stages;
  stages.reserve(samples.pairs.size());
  for (const SamplePair& pair : samples.pairs) {
    StageVariables stage;
    const Vector beta0 = mlp_forward(ell_hat, pair.x_d_n);
    stage.alpha.assign(static_cast<std::size_t>(nu), pair.x_d_n);
    stage.beta.assign(static_cast<std::size_t>(nu), beta0);
    stage.x_d_next = pair.x_d_next;
    stage.x_a_next = pair.x_a_next;
    stages.push_back(std::move(stage));
  }
  return stages;
}

Vector pack_decision(const DnnModel& dnn,
                     const std::vector<StageVariables>& stages) {
  const Vector theta = dnn_params(dnn).values;
  Eigen::Index total = theta.size();
  for (const StageVariables& stage : stages) {
    for (const Vector& a : stage.alpha) {
      total += a.size();
    }
    for (const Vector& b : stage.beta) {
      total += b.size();
    }
  }
  Vector z(total);
  z.head(theta.size()) = theta;
  Eigen::Index at = theta.size();
  for (const StageVariables& stage : stages) {
    for (const Vector& a : stage.alpha) {
      z.segment(at, a.size()) = a;
      at += a.size();
    }
    for (const Vector& b : stage.beta) {
      z.segment(at, b.size()) = b;
      at += b.size();
    }
  }
  return z;
}

void unpack_decision(const Vector& z, DnnModel& dnn,
                     std::vector<StageVariables>& stages) {
  ParamVector theta = dnn_params(dnn);
  if (z.size() < theta.values.size()) {
    throw DimensionMismatch("unpack_decision: vector too short");
  }
  theta.values = z.head(theta.values.size());
  set_dnn_params(dnn, theta);
  Eigen::Index at = theta.values.size();
  for (StageVariables& stage : stages) {
    for (Vector& a : stage.alpha) {
      a = z.segment(at, a.size());
      at += a.size();
    }
    for (Vector& b : stage.beta) {
      b = z.segment(at, b.size());
      at += b.size();
    }
  }
  if (at != z.size()) {
    throw DimensionMismatch("unpack_decision: vector length does not match");
  }
}

CollocationEval eval_collocation(const SampleSet& samples, const DnnModel& dnn,
                                 const Mlp& ell_hat,
                                 const std::vector<StageVariables>& stages,
                                 const ButcherTableau& tableau, double delta) {
  validate_stages(samples, stages, tableau.nu, "eval_collocation");
  return eval_collocation_subset(samples, dnn, ell_hat, stages, tableau, delta,
                                 all_indices(samples.pairs.size()));
}

AlgebraicTrainResult train_algebraic(const SampleSet& samples, const Mlp& net,
                                     const TrainConfig& config) {
  validate_config(config, "train_algebraic");
  if (samples.pairs.empty()) {
    throw Error("train_algebraic: empty sample set");
  }
  const std::size_t eta = samples.pairs.size();
  ParamVector params = mlp_params(net);
  AdamState opt(params.values.size());
  Rng rng(config.seed);

  double best_loss = std::numeric_limits<double>::infinity();
  Vector best_values = params.values;
  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(config.epochs));

  const auto evaluate = [&](const Mlp& current,
                            const std::vector<std::size_t>& subset,
                            Vector* grad) {
    if (grad != nullptr) {
      grad->setZero();
    }
    double loss = 0.0;
    const double inv = 1.0 / static_cast<double>(subset.size());
    for (const std::size_t s : subset) {
      const SamplePair& pair = samples.pairs[s];
      const Vector err = mlp_forward(current, pair.x_d_n) - pair.x_a_n;
      loss += inv * err.squaredNorm();
      if (grad != nullptr) {
        *grad += mlp_gradient(current, Vector(2.0 * inv * err), pair.x_d_n)
                     .param_grad.values;
      }
    }
    return loss;
  };

  const std::vector<std::size_t> everyone = all_indices(eta);
  Vector grad(params.values.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const Mlp current = mlp_from_params(net.layer_sizes, params);
    const bool batched =
        config.batch_size > 0 && static_cast<std::size_t>(config.batch_size) < eta;
    const double loss = evaluate(current, everyone, batched ? nullptr : &grad);
    if (!std::isfinite(loss)) {
      throw NonFiniteLoss("train_algebraic: loss not finite",
                          ParamVector{best_values, params.layout}, epoch);
    }
    if (loss < best_loss) {
      best_loss = loss;
      best_values = params.values;
    }
    history.push_back(best_loss);

    const double step = step_size_at(config, epoch);
    if (!batched) {
      opt.step(params.values, grad, step, config);
    } else {
      std::vector<std::size_t> order = everyone;
      rng.shuffle(order);
      for (std::size_t start = 0; start < eta;
           start += static_cast<std::size_t>(config.batch_size)) {
        const std::size_t stop =
            std::min(eta, start + static_cast<std::size_t>(config.batch_size));
        const std::vector<std::size_t> subset(order.begin() + start,
                                              order.begin() + stop);
        const Mlp working = mlp_from_params(net.layer_sizes, params);
        (void)evaluate(working, subset, &grad);
        opt.step(params.values, grad, step, config);
      }
    }
  }

  AlgebraicTrainResult result;
  result.net =
      mlp_from_params(net.layer_sizes, ParamVector{best_values, params.layout});
  result.history = std::move(history);
  return result;
}

namespace {

DynamicTrainResult train_collocation(const SampleSet& samples,
                                     const DnnModel& dnn, const Mlp& ell_hat,
                                     const TrainConfig& config,
                                     const ButcherTableau& tableau) {
  DnnModel working = dnn;
  std::vector<StageVariables> stages =
      init_stages(samples, ell_hat, tableau.nu);
  Vector z = pack_decision(working, stages);
  const Eigen::Index theta_len = dnn_params(working).values.size();
  const std::vector<ParamSegment> theta_layout = dnn_params(working).layout;

  AdamState opt(z.size());
  Rng rng(config.seed);
  LossWeights weights;
  TrainHistory history;
  history.records.reserve(static_cast<std::size_t>(config.epochs));
  Vector best_theta = z.head(theta_len);
  double best_total = std::numeric_limits<double>::infinity();
  const std::size_t eta = samples.pairs.size();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    unpack_decision(z, working, stages);
    const CollocationEval ev = eval_collocation_subset(
        samples, working, ell_hat, stages, tableau, config.delta,
        all_indices(eta));
    if (epoch > 0 && epoch % config.weight_update_period == 0) {
      weights = update_weights(weights, single_segment(ev.grad_d),
                               single_segment(ev.grad_a));
    }
    const double total = total_loss(ev.loss_d, ev.loss_a, weights);
    if (!std::isfinite(total)) {
      throw NonFiniteLoss("train_dynamic: loss not finite",
                          ParamVector{best_theta, theta_layout}, epoch);
    }
    if (total < best_total) {
      best_total = total;
      best_theta = z.head(theta_len);
    }
    history.records.push_back(
        {epoch, ev.loss_d, ev.loss_a, weights.w_d, weights.w_a, total});

    const double step = step_size_at(config, epoch);
    const bool batched =
        config.batch_size > 0 && static_cast<std::size_t>(config.batch_size) < eta;
    if (!batched) {
      const Vector grad = weights.w_d * ev.grad_d + weights.w_a * ev.grad_a;
      opt.step(z, grad, step, config);
    } else {
      std::vector<std::size_t> order = all_indices(eta);
      rng.shuffle(order);
      for (std::size_t start = 0; start < eta;
           start += static_cast<std::size_t>(config.batch_size)) {
        const std::size_t stop =
            std::min(eta, start + static_cast<std::size_t>(config.batch_size));
        const std::vector<std::size_t> subset(order.begin() + start,
                                              order.begin() + stop);
        unpack_decision(z, working, stages);
        const CollocationEval part = eval_collocation_subset(
            samples, working, ell_hat, stages, tableau, config.delta, subset);
        const Vector grad =
            weights.w_d * part.grad_d + weights.w_a * part.grad_a;
        opt.step(z, grad, step, config);
      }
    }
  }

  unpack_decision(z, working, stages);
  DynamicTrainResult result;
  result.dnn = std::move(working);
  result.stages = std::move(stages);
  result.history = std::move(history);
  result.weights = weights;
  return result;
}

DynamicTrainResult train_implicit(const SampleSet& samples, const DnnModel& dnn,
                                  const Mlp& ell_hat, const TrainConfig& config,
                                  const ButcherTableau& tableau) {
  DnnModel working = dnn;
  const int nu = tableau.nu;
  const Eigen::Index n_d = working.a_nn.rows();
  ParamVector theta = dnn_params(working);
  const Eigen::Index b_nn_offset = working.a_nn.size();
  const Eigen::Index rho_offset = b_nn_offset + working.b_nn.size();
  const std::size_t eta = samples.pairs.size();

  std::vector<Vector> warm(eta);
  for (std::size_t s = 0; s < eta; ++s) {
    warm[s] = samples.pairs[s].x_d_n.replicate(nu, 1);
  }

  AdamState opt(theta.values.size());
  LossWeights weights;
  TrainHistory history;
  history.records.reserve(static_cast<std::size_t>(config.epochs));
  Vector best_theta = theta.values;
  double best_total = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    set_dnn_params(working, theta);
    double loss = 0.0;
    Vector grad = Vector::Zero(theta.values.size());
    for (std::size_t s = 0; s < eta; ++s) {
      const SamplePair& pair = samples.pairs[s];
      const double h = sample_delta(pair, config.delta);
      const StageSolve solve = solve_stages(working, tableau, pair.x_d_n,
                                            pair.u, h, warm[s], config);
      warm[s] = solve.alpha;
      const Vector mismatch = solve.x_next - pair.x_d_next;
      loss += mismatch.squaredNorm() / static_cast<double>(eta);
      const Vector seed = 2.0 / static_cast<double>(eta) * mismatch;

      Matrix jac_t = Matrix::Identity(nu * n_d, nu * n_d);
      Vector rhs(nu * n_d);
      for (int i = 0; i < nu; ++i) {
        for (int j = 0; j < nu; ++j) {
          jac_t.block(i * n_d, j * n_d, n_d, n_d) -=
              h * tableau.b(j, i) * solve.jac_f[i].transpose();
        }
        rhs.segment(i * n_d, n_d) =
            h * tableau.c(i) * solve.jac_f[i].transpose() * seed;
      }
      const Vector lambda = solve_linear(jac_t, rhs);

      for (int i = 0; i < nu; ++i) {
        Vector stage_seed = tableau.c(i) * seed;
        for (int j = 0; j < nu; ++j) {
          stage_seed += tableau.b(j, i) * lambda.segment(j * n_d, n_d);
        }
        stage_seed *= h;
        const DnnVjp vjp = dnn_rhs_vjp(
            working, Vector(solve.alpha.segment(i * n_d, n_d)), pair.u,
            stage_seed);
        add_row_major(grad, 0, vjp.grad_a_nn);
        add_row_major(grad, b_nn_offset, vjp.grad_b_nn);
        grad.segment(rho_offset, vjp.grad_rho.values.size()) +=
            vjp.grad_rho.values;
      }
    }

    if (epoch > 0 && epoch % config.weight_update_period == 0) {
      weights = update_weights(weights, single_segment(grad),
                               single_segment(Vector(0)));
    }
    const double total = total_loss(loss, 0.0, weights);
    if (!std::isfinite(total)) {
      throw NonFiniteLoss("train_dynamic: loss not finite",
                          ParamVector{best_theta, theta.layout}, epoch);
    }
    if (total < best_total) {
      best_total = total;
      best_theta = theta.values;
    }
    history.records.push_back(
        {epoch, loss, 0.0, weights.w_d, weights.w_a, total});
    opt.step(theta.values, grad, step_size_at(config, epoch), config);
  }

  set_dnn_params(working, theta);
  std::vector<StageVariables> stages;
  stages.reserve(eta);
  for (std::size_t s = 0; s < eta; ++s) {
    const SamplePair& pair = samples.pairs[s];
    const double h = sample_delta(pair, config.delta);
    const StageSolve solve = solve_stages(working, tableau, pair.x_d_n, pair.u,
                                          h, warm[s], config);
    StageVariables stage;
    for (int i = 0; i < nu; ++i) {
      const Vector alpha_i = solve.alpha.segment(i * n_d, n_d);
      stage.alpha.push_back(alpha_i);
      stage.beta.push_back(mlp_forward(ell_hat, alpha_i));
    }
    stage.x_d_next = solve.x_next;
    stage.x_a_next = mlp_forward(ell_hat, solve.x_next);
    stages.push_back(std::move(stage));
  }

  DynamicTrainResult result;
  result.dnn = std::move(working);
  result.stages = std::move(stages);
  result.history = std::move(history);
  result.weights = weights;
  return result;
}

}  // namespace

DynamicTrainResult train_dynamic(const SampleSet& samples, const DnnModel& dnn,
                                 const Mlp& ell_hat, const TrainConfig& config) {
  validate_config(config, "train_dynamic");
  if (samples.pairs.empty()) {
    throw Error("train_dynamic: empty sample set");
  }
  const ButcherTableau tableau = find_tableau(config.tableau);
  if (config.mode == TrainMode::Collocation) {
    return train_collocation(samples, dnn, ell_hat, config, tableau);
  }
  return train_implicit(samples, dnn, ell_hat, config, tableau);
}

Vector relative_error_series(const Trajectory& truth, const Trajectory& predicted,
                             ErrorKind which) {
  if (truth.size() != predicted.size()) {
    throw GridMismatch("relative_error_series: trajectory lengths differ");
  }
  for (Eigen::Index k = 0; k < truth.times.size(); ++k) {
    const double tol = kGridTol * std::max(1.0, std::abs(truth.times(k)));
    if (std::abs(truth.times(k) - predicted.times(k)) > tol) {
      throw GridMismatch("relative_error_series: time grids differ");
    }
  }

  const auto& ref =
      which == ErrorKind::Dynamic ? truth.states_d : truth.states_a;
  const auto& est =
      which == ErrorKind::Dynamic ? predicted.states_d : predicted.states_a;
  Vector errors(truth.times.size());
  for (std::size_t k = 0; k < ref.size(); ++k) {
    const double denom = ref[k].norm();
    errors(static_cast<Eigen::Index>(k)) =
        denom < kReferenceFloor ? kRelativeErrorSentinel
                                : 100.0 * (ref[k] - est[k]).norm() / denom;
  }
  return errors;
}

std::string history_to_csv(const TrainHistory& history) {
  std::ostringstream out;
  out << "epoch, L_d, L_a, w_d, w_a, total\n";
  for (const TrainRecord& row : history.records) {
    out << row.epoch << ", " << g17(row.loss_d) << ", " << g17(row.loss_a)
        << ", " << g17(row.w_d) << ", " << g17(row.w_a) << ", "
        << g17(row.total) << "\n";
  }
  return out.str();
}

void save_history(const TrainHistory& history, const std::string& path) {
  write_file(path, history_to_csv(history), "save_history");
}

std::string train_config_to_json(const TrainConfig& config) {
  std::ostringstream out;
  out << "{\n";
  out << "  \"mode\": \""
      << (config.mode == TrainMode::Collocation ? "collocation"
                                                : "implicit_solve")
      << "\",\n";
  out << "  \"epochs\": " << config.epochs << ",\n";
  out << "  \"batch_size\": " << config.batch_size << ",\n";
  out << "  \"step_size\": " << g17(config.step_size) << ",\n";
  out << "  \"step_size_final\": " << g17(config.step_size_final) << ",\n";
  out << "  \"beta1\": " << g17(config.beta1) << ",\n";
  out << "  \"beta2\": " << g17(config.beta2) << ",\n";
  out << "  \"epsilon\": " << g17(config.epsilon) << ",\n";
  out << "  \"seed\": " << config.seed << ",\n";
  out << "  \"tableau\": \"" << config.tableau << "\",\n";
  out << "  \"delta\": " << g17(config.delta) << ",\n";
  out << "  \"weight_update_period\": " << config.weight_update_period << ",\n";
  out << "  \"newton_tol\": " << g17(config.newton_tol) << ",\n";
  out << "  \"newton_max_iter\": " << config.newton_max_iter << "\n";
  out << "}\n";
  return out.str();
}

TrainConfig train_config_from_json(const std::string& text) {
  const nlohmann::json doc = nlohmann::json::parse(text);
  TrainConfig config;
  const std::string mode = doc.value("mode", std::string("collocation"));
  if (mode == "collocation") {
    config.mode = TrainMode::Collocation;
  } else if (mode == "implicit_solve") {
    config.mode = TrainMode::ImplicitSolve;
  } else {
    throw Error("train_config_from_json: unknown mode '" + mode + "'");
  }
  config.epochs = doc.value("epochs", config.epochs);
  config.batch_size = doc.value("batch_size", config.batch_size);
  config.step_size = doc.value("step_size", config.step_size);
  config.step_size_final = doc.value("step_size_final", config.step_size_final);
  config.beta1 = doc.value("beta1", config.beta1);
  config.beta2 = doc.value("beta2", config.beta2);
  config.epsilon = doc.value("epsilon", config.epsilon);
  config.seed = doc.value("seed", config.seed);
  config.tableau = doc.value("tableau", config.tableau);
  config.delta = doc.value("delta", config.delta);
  config.weight_update_period =
      doc.value("weight_update_period", config.weight_update_period);
  config.newton_tol = doc.value("newton_tol", config.newton_tol);
  config.newton_max_iter = doc.value("newton_max_iter", config.newton_max_iter);
  return config;
}

}  // namespace ndae
