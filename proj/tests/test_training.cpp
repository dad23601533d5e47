#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ndae/power_model.hpp"
#include "ndae/random.hpp"
#include "ndae/training.hpp"

#include <cmath>
#include <vector>

using namespace ndae;

namespace {

const InputFn no_input = [](double) { return Vector(0); };

/// Scalar surrogate with rhs -x and no algebraic or input paths.
DnnModel make_decay_dnn() {
  DnnModel dnn;
  dnn.a_nn = Matrix::Constant(1, 1, -1.0);
  dnn.b_nn = Matrix::Zero(1, 1);
  dnn.c_nn = Matrix::Zero(1, 0);
  dnn.rho = make_mlp({1, 1});
  dnn.h = Vector::Zero(1);
  dnn.w0 = 0.0;
  return dnn;
}

SamplePair scalar_pair(double x_n, double x_next, double delta) {
  SamplePair pair;
  pair.x_d_n = Vector::Constant(1, x_n);
  pair.x_a_n = Vector::Zero(1);
  pair.x_d_next = Vector::Constant(1, x_next);
  pair.x_a_next = Vector::Zero(1);
  pair.u = Vector(0);
  pair.delta = delta;
  return pair;
}

StageVariables scalar_stage(double alpha, double beta, double x_d_next,
                            double x_a_next) {
  StageVariables stage;
  stage.alpha = {Vector::Constant(1, alpha)};
  stage.beta = {Vector::Constant(1, beta)};
  stage.x_d_next = Vector::Constant(1, x_d_next);
  stage.x_a_next = Vector::Constant(1, x_a_next);
  return stage;
}

/// Two-state surrogate family with small nets, used for gradient checks and
/// the realizable-target training runs.
DnnShape small_shape() {
  DnnShape shape;
  shape.n_d = 2;
  shape.n_a = 1;
  shape.n_b = 2;
  shape.n_c = 0;
  shape.rho_sizes = {2, 8, 2};
  shape.ell_sizes = {2, 4, 1};
  return shape;
}

DnnModel small_dnn(const ParamVector& params) {
  return dnn_from_params(small_shape(), params, Matrix::Zero(2, 0),
                         Vector::Zero(2), 0.0);
}

/// Ground-truth surrogate with a stable non-normal linear part.
DnnModel make_target_dnn() {
  ParamVector params = init_params(small_shape(), 100);
  Matrix a(2, 2);
  a << -0.8, 0.3, -0.2, -0.9;
  set_param_matrix(params, "a_nn", a);
  Matrix b(2, 2);
  b << 0.3, -0.2, 0.1, 0.4;
  set_param_matrix(params, "b_nn", b);
  return small_dnn(params);
}

/// One-step data generated by the target surrogate under the same scheme the
/// trainer penalizes, so zero loss is attainable.
SampleSet realizable_samples(const DnnModel& target, const Mlp& ell_star,
                             double delta, int count) {
  SolverConfig config;
  config.delta = delta;
  config.max_step = delta;
  config.newton_tol = 1e-13;
  Rng rng(7);
  SampleSet samples;
  for (int k = 0; k < count; ++k) {
    const Vector x0 = rng.uniform_vector(2, -1.0, 1.0);
    const Trajectory step = dnn_simulate(target, ell_star, x0, no_input, delta,
                                         find_tableau("midpoint"), config);
    SamplePair pair;
    pair.x_d_n = step.states_d.front();
    pair.x_a_n = step.states_a.front();
    pair.x_d_next = step.states_d.back();
    pair.x_a_next = step.states_a.back();
    pair.u = Vector(0);
    pair.delta = delta;
    samples.pairs.push_back(std::move(pair));
  }
  return samples;
}

double relative_gap(const Vector& got, const Vector& want) {
  return (got - want).norm() / std::max(want.norm(), 1e-12);
}

}  // namespace

TEST_CASE("loss_dynamic hand-worked midpoint example") {
  const DnnModel dnn = make_decay_dnn();
  const Mlp ell = make_mlp({1, 1});
  SampleSet samples;
  samples.pairs.push_back(scalar_pair(1.0, 0.95, 0.1));
  const std::vector<StageVariables> stages = {scalar_stage(1.0, 0.0, 0.95, 0.0)};
  const double loss = loss_dynamic(samples, dnn, ell, stages,
                                   find_tableau("midpoint"), 0.1);
  CHECK(loss == doctest::Approx(0.0025).epsilon(1e-12));
}

TEST_CASE("loss_dynamic vanishes on residual-free stages") {
  const DnnModel dnn = make_decay_dnn();
  const Mlp ell = make_mlp({1, 1});
  const double delta = 0.1;
  const double alpha = 1.0 / (1.0 + delta / 2.0);
  const double x_next = 1.0 - delta * alpha;
  SampleSet samples;
  samples.pairs.push_back(scalar_pair(1.0, x_next, delta));
  const std::vector<StageVariables> stages = {
      scalar_stage(alpha, 0.0, x_next, 0.0)};
  const double loss = loss_dynamic(samples, dnn, ell, stages,
                                   find_tableau("midpoint"), delta);
  CHECK(loss <= 1e-20);
}

TEST_CASE("loss_dynamic averages duplicate samples to the single-sample value") {
  const DnnModel dnn = make_decay_dnn();
  const Mlp ell = make_mlp({1, 1});
  SampleSet samples;
  std::vector<StageVariables> stages;
  for (int k = 0; k < 3; ++k) {
    samples.pairs.push_back(scalar_pair(1.0, 0.95, 0.1));
    stages.push_back(scalar_stage(1.0, 0.0, 0.95, 0.0));
  }
  const double loss = loss_dynamic(samples, dnn, ell, stages,
                                   find_tableau("midpoint"), 0.1);
  CHECK(loss == doctest::Approx(0.0025).epsilon(1e-12));
}

TEST_CASE("exact solver stages zero both losses in white-box mode") {
  const NdaeModel model = build_synthetic_model(1, 3);
  SolverConfig config;
  config.newton_tol = 1e-12;
  const ButcherTableau tableau = find_tableau("radau2");
  const Vector u = Vector::Zero(model.m);

  const Vector x_d0 = Vector::Constant(model.n_d, 0.2);
  const Vector x_a0 = consistent_init(model, x_d0, Vector::Zero(model.n_a));
  const double delta = 0.01;
  SolverConfig step_config = config;
  step_config.delta = delta;
  const IrkResult step = irk_step(model, x_d0, x_a0, u, tableau, step_config);

  SampleSet samples;
  SamplePair pair;
  pair.x_d_n = x_d0;
  pair.x_a_n = x_a0;
  pair.x_d_next = step.x_d_next;
  pair.x_a_next = step.x_a_next;
  pair.u = u;
  pair.delta = delta;
  samples.pairs.push_back(pair);

  StageVariables stage;
  for (const auto& [alpha, beta] : step.stages) {
    stage.alpha.push_back(alpha);
    stage.beta.push_back(beta);
  }
  stage.x_d_next = step.x_d_next;
  stage.x_a_next = step.x_a_next;
  const std::vector<StageVariables> stages = {stage};

  const StageRhsFn true_rhs = [&](const Vector& alpha, const Vector& beta,
                                  const Vector& input) {
    return eval_dynamic_rhs(model, alpha, beta, input);
  };
  const double l_d = loss_dynamic_rhs(samples, true_rhs, stages, tableau, delta);
  CHECK(l_d <= 1e-10);

  const PairResidualFn true_residual = [&](const Vector& x_d, const Vector& x_a) {
    return eval_algebraic_residual(model, x_d, x_a);
  };
  const double l_a = loss_algebraic(stages, true_residual, tableau.nu);
  CHECK(l_a <= 1e-10);
}

TEST_CASE("loss_algebraic oracle values") {
  const PairResidualFn gap = [](const Vector& x_d, const Vector& x_a) {
    return Vector(x_a - x_d);
  };

  const std::vector<StageVariables> on_manifold = {
      scalar_stage(0.7, 0.7, 0.4, 0.4)};
  CHECK(loss_algebraic(on_manifold, gap, 1) == 0.0);

  const std::vector<StageVariables> mixed = {scalar_stage(0.0, 0.3, 0.0, 0.1)};
  CHECK(loss_algebraic(mixed, gap, 1) == doctest::Approx(0.2).epsilon(1e-14));

  const std::vector<StageVariables> doubled = {scalar_stage(0.0, 0.6, 0.0, 0.2)};
  CHECK(loss_algebraic(doubled, gap, 1) ==
        doctest::Approx(0.4).epsilon(1e-14));

  CHECK(loss_algebraic({}, gap, 1) == 0.0);
}

TEST_CASE("total_loss arithmetic and monotonicity") {
  CHECK(total_loss(0.0, 0.0, LossWeights{}) == 0.0);
  LossWeights weights;
  weights.w_d = 1.0;
  weights.w_a = 2.0;
  CHECK(total_loss(0.5, 0.25, weights) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(total_loss(0.5, 0.3, weights) > total_loss(0.5, 0.25, weights));
  CHECK(total_loss(0.6, 0.25, weights) > total_loss(0.5, 0.25, weights));
}

TEST_CASE("update_weights balances gradient magnitudes") {
  Rng rng(3);
  const Vector g = rng.normal_vector(40);
  ParamVector grad_d;
  grad_d.values = g;
  grad_d.layout.push_back({"decision", 40, 1});
  ParamVector grad_a = grad_d;

  LossWeights weights;
  weights.w_a = 4.0;
  weights.update_rate = 0.5;
  const LossWeights balanced = update_weights(weights, grad_d, grad_a);
  CHECK(balanced.w_d == 1.0);
  CHECK(balanced.w_a == doctest::Approx(2.5).epsilon(1e-9));

  ParamVector grad_big = grad_d;
  grad_big.values *= 4.0;
  LossWeights full_rate;
  full_rate.w_a = 7.0;
  full_rate.update_rate = 1.0;
  const LossWeights ratio = update_weights(full_rate, grad_big, grad_a);
  CHECK(ratio.w_a == doctest::Approx(4.0).epsilon(1e-9));

  ParamVector grad_zero = grad_d;
  grad_zero.values.setZero();
  const LossWeights frozen = update_weights(weights, grad_d, grad_zero);
  CHECK(frozen.w_a == weights.w_a);
}

TEST_CASE("update_weights keeps the algebraic weight positive") {
  Rng rng(9);
  LossWeights weights;
  weights.update_rate = 1.0;
  for (int trial = 0; trial < 100; ++trial) {
    ParamVector grad_d;
    grad_d.values = trial % 3 == 0 ? Vector(Vector::Zero(10))
                                   : Vector(rng.normal_vector(10));
    grad_d.layout.push_back({"decision", 10, 1});
    ParamVector grad_a;
    grad_a.values = rng.normal_vector(10);
    grad_a.layout.push_back({"decision", 10, 1});
    weights = update_weights(weights, grad_d, grad_a);
    CHECK(weights.w_a > 0.0);
  }
}

TEST_CASE("collocation gradients match finite differences") {
  const DnnShape shape = small_shape();
  const ParamVector params = init_params(shape, 12);
  DnnModel dnn = small_dnn(params);
  const Mlp ell = ell_from_params(shape, params);
  const ButcherTableau tableau = find_tableau("midpoint");

  const DnnModel target = make_target_dnn();
  SampleSet samples = realizable_samples(target, ell, 0.05, 3);
  std::vector<StageVariables> stages = init_stages(samples, ell, tableau.nu);
  Rng rng(13);
  for (StageVariables& stage : stages) {
    stage.alpha[0] += rng.uniform_vector(2, -0.2, 0.2);
    stage.beta[0] += rng.uniform_vector(1, 0.3, 0.6);
  }

  const CollocationEval ev =
      eval_collocation(samples, dnn, ell, stages, tableau, 0.0);
  CHECK(ev.loss_d == doctest::Approx(loss_dynamic(samples, dnn, ell, stages,
                                                  tableau, 0.0))
                         .epsilon(1e-14));

  const Vector z0 = pack_decision(dnn, stages);
  const auto loss_pair = [&](const Vector& z) {
    DnnModel dnn_z = dnn;
    std::vector<StageVariables> stages_z = stages;
    unpack_decision(z, dnn_z, stages_z);
    const double l_d = loss_dynamic(samples, dnn_z, ell, stages_z, tableau, 0.0);
    const PairResidualFn black_box = [&](const Vector& x_d, const Vector& x_a) {
      return Vector(x_a - mlp_forward(ell, x_d));
    };
    const double l_a = loss_algebraic(stages_z, black_box, tableau.nu);
    Vector out(2);
    out << l_d, l_a;
    return out;
  };
  const Matrix fd = finite_diff_jacobian(loss_pair, z0, 1e-6);
  CHECK(relative_gap(ev.grad_d, Vector(fd.row(0).transpose())) <= 1e-5);
  CHECK(relative_gap(ev.grad_a, Vector(fd.row(1).transpose())) <= 1e-5);
}

TEST_CASE("pack and unpack of the decision vector round-trip") {
  const DnnShape shape = small_shape();
  const ParamVector params = init_params(shape, 19);
  DnnModel dnn = small_dnn(params);
  const Mlp ell = ell_from_params(shape, params);
  const DnnModel target = make_target_dnn();
  const SampleSet samples = realizable_samples(target, ell, 0.05, 2);
  std::vector<StageVariables> stages = init_stages(samples, ell, 1);

  Vector z = pack_decision(dnn, stages);
  Rng rng(20);
  z += rng.uniform_vector(z.size(), -0.1, 0.1);
  unpack_decision(z, dnn, stages);
  CHECK(pack_decision(dnn, stages) == z);
  CHECK(stages[0].x_d_next == samples.pairs[0].x_d_next);
  CHECK(stages[0].x_a_next == samples.pairs[0].x_a_next);

  CHECK_THROWS_AS(unpack_decision(Vector::Zero(3), dnn, stages),
                  DimensionMismatch);
}

TEST_CASE("init_stages starts at the left datum and pins the endpoint") {
  const DnnShape shape = small_shape();
  const Mlp ell = ell_from_params(shape, init_params(shape, 23));
  const DnnModel target = make_target_dnn();
  const SampleSet samples = realizable_samples(target, ell, 0.05, 4);
  const std::vector<StageVariables> stages = init_stages(samples, ell, 2);
  REQUIRE(stages.size() == 4);
  for (std::size_t s = 0; s < stages.size(); ++s) {
    REQUIRE(stages[s].alpha.size() == 2);
    for (int j = 0; j < 2; ++j) {
      CHECK(stages[s].alpha[j] == samples.pairs[s].x_d_n);
      CHECK(stages[s].beta[j] == mlp_forward(ell, samples.pairs[s].x_d_n));
    }
    CHECK(stages[s].x_d_next == samples.pairs[s].x_d_next);
    CHECK(stages[s].x_a_next == samples.pairs[s].x_a_next);
  }
}

TEST_CASE("train_algebraic fits an exact linear map") {
  Rng rng(31);
  SampleSet samples;
  for (int k = 0; k < 20; ++k) {
    SamplePair pair;
    pair.x_d_n = rng.uniform_vector(1, -1.0, 1.0);
    pair.x_a_n = 2.0 * pair.x_d_n;
    pair.x_d_next = pair.x_d_n;
    pair.x_a_next = pair.x_a_n;
    pair.u = Vector(0);
    pair.delta = 0.1;
    samples.pairs.push_back(std::move(pair));
  }
  TrainConfig config;
  config.epochs = 8000;
  config.step_size = 1e-2;
  config.step_size_final = 1e-7;
  const AlgebraicTrainResult result =
      train_algebraic(samples, make_mlp({1, 1}), config);
  REQUIRE(result.history.size() == 8000);
  CHECK(result.history.back() <= 1e-8);
  for (std::size_t k = 1; k < result.history.size(); ++k) {
    CHECK(result.history[k] <= result.history[k - 1]);
  }
}

TEST_CASE("train_algebraic zero-target data starts at zero loss") {
  SampleSet samples;
  for (int k = 0; k < 5; ++k) {
    SamplePair pair;
    pair.x_d_n = Vector::Constant(1, 0.1 * (k + 1));
    pair.x_a_n = Vector::Zero(2);
    pair.x_d_next = pair.x_d_n;
    pair.x_a_next = pair.x_a_n;
    pair.u = Vector(0);
    pair.delta = 0.1;
    samples.pairs.push_back(std::move(pair));
  }
  TrainConfig config;
  config.epochs = 3;
  const AlgebraicTrainResult result =
      train_algebraic(samples, make_mlp({1, 4, 2}), config);
  CHECK(result.history.front() == 0.0);
}

TEST_CASE("train_algebraic single sample reports its squared residual") {
  SampleSet samples;
  SamplePair pair;
  pair.x_d_n = Vector::Constant(1, 1.0);
  pair.x_a_n = Vector(2);
  pair.x_a_n << 3.0, 4.0;
  pair.x_d_next = pair.x_d_n;
  pair.x_a_next = pair.x_a_n;
  pair.u = Vector(0);
  pair.delta = 0.1;
  samples.pairs.push_back(pair);
  TrainConfig config;
  config.epochs = 1;
  const AlgebraicTrainResult result =
      train_algebraic(samples, make_mlp({1, 2}), config);
  CHECK(result.history.front() == doctest::Approx(25.0).epsilon(1e-14));
}

TEST_CASE("train_algebraic aborts on a non-finite loss with a checkpoint") {
  SampleSet samples;
  SamplePair pair;
  pair.x_d_n = Vector::Constant(1, 0.5);
  pair.x_a_n = Vector::Constant(1, 2.0);
  pair.x_d_next = pair.x_d_n;
  pair.x_a_next = pair.x_a_n;
  pair.u = Vector(0);
  pair.delta = 0.1;
  samples.pairs.push_back(pair);
  TrainConfig config;
  config.epochs = 5;
  config.step_size = 1e200;
  try {
    (void)train_algebraic(samples, make_mlp({1, 1}), config);
    FAIL("expected NonFiniteLoss");
  } catch (const NonFiniteLoss& err) {
    CHECK(err.epoch() >= 1);
    CHECK(err.checkpoint().values.allFinite());
  }
}

TEST_CASE("train_dynamic zero epochs leaves parameters untouched") {
  const DnnShape shape = small_shape();
  const ParamVector params = init_params(shape, 43);
  const DnnModel dnn = small_dnn(params);
  const Mlp ell = ell_from_params(shape, params);
  const SampleSet samples = realizable_samples(make_target_dnn(), ell, 0.05, 3);

  for (const TrainMode mode : {TrainMode::Collocation, TrainMode::ImplicitSolve}) {
    TrainConfig config;
    config.mode = mode;
    config.epochs = 0;
    const DynamicTrainResult result = train_dynamic(samples, dnn, ell, config);
    CHECK(result.history.size() == 0);
    CHECK(dnn_params(result.dnn).values == dnn_params(dnn).values);
    CHECK(result.stages.size() == samples.pairs.size());
  }
}

TEST_CASE("train_dynamic is deterministic for a fixed seed") {
  const DnnShape shape = small_shape();
  const ParamVector params = init_params(shape, 44);
  const DnnModel dnn = small_dnn(params);
  const Mlp ell = ell_from_params(shape, params);
  const SampleSet samples = realizable_samples(make_target_dnn(), ell, 0.05, 4);

  TrainConfig config;
  config.epochs = 30;
  config.seed = 5;
  const DynamicTrainResult first = train_dynamic(samples, dnn, ell, config);
  const DynamicTrainResult second = train_dynamic(samples, dnn, ell, config);
  REQUIRE(first.history.size() == second.history.size());
  for (std::size_t k = 0; k < first.history.size(); ++k) {
    CHECK(first.history.records[k].total == second.history.records[k].total);
    CHECK(first.history.records[k].loss_d == second.history.records[k].loss_d);
    CHECK(first.history.records[k].loss_a == second.history.records[k].loss_a);
  }
  CHECK(dnn_params(first.dnn).values == dnn_params(second.dnn).values);
}

TEST_CASE("train_dynamic reaches a realizable target in collocation mode") {
  const DnnShape shape = small_shape();
  const DnnModel target = make_target_dnn();
  const Mlp ell_star = ell_from_params(shape, init_params(shape, 100));
  const SampleSet samples = realizable_samples(target, ell_star, 0.05, 20);

  const DnnModel fresh = small_dnn(init_params(shape, 2));
  TrainConfig config;
  config.epochs = 20000;
  config.step_size = 3e-3;
  config.step_size_final = 1e-7;
  const DynamicTrainResult result =
      train_dynamic(samples, fresh, ell_star, config);

  REQUIRE(result.history.size() == 20000);
  const double initial = result.history.records.front().total;
  const double final_total = result.history.records.back().total;
  CHECK(final_total <= 1e-6);
  CHECK(initial / final_total >= 100.0);
}

TEST_CASE("train_dynamic implicit mode drives the endpoint mismatch down") {
  const DnnShape shape = small_shape();
  const DnnModel target = make_target_dnn();
  const Mlp ell_star = ell_from_params(shape, init_params(shape, 100));
  const SampleSet samples = realizable_samples(target, ell_star, 0.05, 12);

  const DnnModel fresh = small_dnn(init_params(shape, 2));
  TrainConfig config;
  config.mode = TrainMode::ImplicitSolve;
  config.epochs = 4000;
  config.step_size = 3e-3;
  config.step_size_final = 1e-6;
  const DynamicTrainResult result =
      train_dynamic(samples, fresh, ell_star, config);

  const double initial = result.history.records.front().total;
  const double final_total = result.history.records.back().total;
  CHECK(final_total < initial / 100.0);
  CHECK(result.history.records.back().loss_a == 0.0);
  REQUIRE(result.stages.size() == samples.pairs.size());
  for (const StageVariables& stage : result.stages) {
    CHECK(stage.beta[0] == mlp_forward(ell_star, stage.alpha[0]));
  }
}

TEST_CASE("train_dynamic aborts on a non-finite loss") {
  const DnnShape shape = small_shape();
  const ParamVector params = init_params(shape, 3);
  const DnnModel dnn = small_dnn(params);
  const Mlp ell = ell_from_params(shape, params);
  const SampleSet samples = realizable_samples(make_target_dnn(), ell, 0.05, 2);
  TrainConfig config;
  config.epochs = 50;
  config.step_size = 1e200;
  CHECK_THROWS_AS(
      (void)train_dynamic(samples, dnn, ell, config), NonFiniteLoss);
}

TEST_CASE("train config validation rejects bad rates") {
  const DnnShape shape = small_shape();
  const ParamVector params = init_params(shape, 3);
  const DnnModel dnn = small_dnn(params);
  const Mlp ell = ell_from_params(shape, params);
  const SampleSet samples = realizable_samples(make_target_dnn(), ell, 0.05, 1);
  TrainConfig config;
  config.step_size = 0.0;
  CHECK_THROWS_AS((void)train_dynamic(samples, dnn, ell, config), Error);
  config = TrainConfig{};
  config.beta1 = 1.0;
  CHECK_THROWS_AS((void)train_dynamic(samples, dnn, ell, config), Error);
  config = TrainConfig{};
  config.epochs = -1;
  CHECK_THROWS_AS((void)train_algebraic(samples, make_mlp({2, 1}), config),
                  Error);
}

TEST_CASE("relative_error_series basic values and sentinel") {
  Trajectory truth;
  truth.times = Vector::LinSpaced(3, 0.0, 0.2);
  truth.states_d = {Vector::Constant(1, 1.0), Vector::Constant(1, 2.0),
                    Vector::Constant(1, 3.0)};
  Vector pair34(2);
  pair34 << 3.0, 4.0;
  truth.states_a = {pair34, pair34, Vector::Zero(2)};
  truth.inputs = {Vector(0), Vector(0), Vector(0)};

  Trajectory same = truth;
  const Vector zero_err = relative_error_series(truth, same, ErrorKind::Dynamic);
  CHECK(zero_err == Vector::Zero(3));

  Trajectory shifted = truth;
  Vector bumped(2);
  bumped << 3.5, 4.0;
  shifted.states_a[1] = bumped;
  const Vector algebraic =
      relative_error_series(truth, shifted, ErrorKind::Algebraic);
  CHECK(algebraic(0) == 0.0);
  CHECK(algebraic(1) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(algebraic(2) == kRelativeErrorSentinel);

  Trajectory doubled = truth;
  for (auto& state : doubled.states_d) {
    state *= 2.0;
  }
  const Vector percent =
      relative_error_series(truth, doubled, ErrorKind::Dynamic);
  for (Eigen::Index k = 0; k < percent.size(); ++k) {
    CHECK(percent(k) == doctest::Approx(100.0).epsilon(1e-12));
  }

  Trajectory off_grid = truth;
  off_grid.times(1) += 1e-6;
  CHECK_THROWS_AS(
      (void)relative_error_series(truth, off_grid, ErrorKind::Dynamic),
      GridMismatch);
  Trajectory shorter = truth;
  shorter.times = truth.times.head(2);
  shorter.states_d.pop_back();
  shorter.states_a.pop_back();
  shorter.inputs.pop_back();
  CHECK_THROWS_AS(
      (void)relative_error_series(truth, shorter, ErrorKind::Dynamic),
      GridMismatch);
}

TEST_CASE("history csv has the documented layout") {
  TrainHistory history;
  history.records.push_back({0, 0.5, 0.25, 1.0, 1.0, 0.75});
  history.records.push_back({1, 0.25, 0.125, 1.0, 0.5, 0.3125});
  const std::string text = history_to_csv(history);
  CHECK(text ==
        "epoch, L_d, L_a, w_d, w_a, total\n"
        "0, 0.5, 0.25, 1, 1, 0.75\n"
        "1, 0.25, 0.125, 1, 0.5, 0.3125\n");
}

TEST_CASE("train config json round-trip") {
  TrainConfig config;
  config.mode = TrainMode::ImplicitSolve;
  config.epochs = 123;
  config.batch_size = 7;
  config.step_size = 2.5e-4;
  config.step_size_final = 1e-6;
  config.seed = 99;
  config.tableau = "radau2";
  config.delta = 0.02;
  config.weight_update_period = 5;
  const TrainConfig back = train_config_from_json(train_config_to_json(config));
  CHECK(back.mode == TrainMode::ImplicitSolve);
  CHECK(back.epochs == 123);
  CHECK(back.batch_size == 7);
  CHECK(back.step_size == config.step_size);
  CHECK(back.step_size_final == config.step_size_final);
  CHECK(back.seed == 99);
  CHECK(back.tableau == "radau2");
  CHECK(back.delta == config.delta);
  CHECK(back.weight_update_period == 5);

  CHECK(train_config_from_json("{}").epochs == TrainConfig{}.epochs);
  CHECK_THROWS_AS((void)train_config_from_json("{\"mode\": \"other\"}"), Error);
}

TEST_CASE("mini-batch training still converges on the linear map") {
  Rng rng(55);
  SampleSet samples;
  for (int k = 0; k < 16; ++k) {
    SamplePair pair;
    pair.x_d_n = rng.uniform_vector(1, -1.0, 1.0);
    pair.x_a_n = -1.5 * pair.x_d_n;
    pair.x_d_next = pair.x_d_n;
    pair.x_a_next = pair.x_a_n;
    pair.u = Vector(0);
    pair.delta = 0.1;
    samples.pairs.push_back(std::move(pair));
  }
  TrainConfig config;
  config.epochs = 2000;
  config.batch_size = 4;
  config.step_size = 1e-2;
  config.step_size_final = 1e-5;
  config.seed = 8;
  const AlgebraicTrainResult result =
      train_algebraic(samples, make_mlp({1, 1}), config);
  CHECK(result.history.back() <= 1e-6);
}
