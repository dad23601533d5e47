#include "ndae/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ndae/format.hpp"
#include "ndae/io_util.hpp"
#include "ndae/nn.hpp"
#include "ndae/random.hpp"

namespace ndae {

namespace {

/// Zero exogenous input of the model's width.
[[nodiscard]] InputFn zero_input(Eigen::Index m) {
  return [m](double) { return Vector::Zero(m); };
}

[[nodiscard]] bool have(const std::string& path) {
  return std::filesystem::exists(path);
}

/// Reports a required input file that is not there.
[[nodiscard]] int missing(const std::string& path) {
  std::cout << "missing artifact: " << path << "\n";
  return 4;
}

/// Mean over the entries of a percent series that have a valid reference.
[[nodiscard]] double mean_valid(const Vector& series) {
  double sum = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index k = 0; k < series.size(); ++k) {
    if (series(k) != kRelativeErrorSentinel) {
      sum += series(k);
      ++count;
    }
  }
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

/// Two-column CSV of a time-indexed series.
[[nodiscard]] std::string series_csv(const std::string& value_name,
                                     const Vector& times,
                                     const Vector& values) {
  std::ostringstream out;
  out << "t, " << value_name << "\n";
  for (Eigen::Index k = 0; k < times.size(); ++k) {
    out << g17(times(k)) << ", " << g17(values(k)) << "\n";
  }
  return out.str();
}

/// Three-column CSV pairing one true dynamic component with its prediction.
[[nodiscard]] std::string paired_csv(const Trajectory& truth,
                                     const Trajectory& predicted,
                                     Eigen::Index component) {
  std::ostringstream out;
  out << "t, true, predicted\n";
  for (Eigen::Index k = 0; k < truth.times.size(); ++k) {
    const auto row = static_cast<std::size_t>(k);
    out << g17(truth.times(k)) << ", " << g17(truth.states_d[row](component))
        << ", " << g17(predicted.states_d[row](component)) << "\n";
  }
  return out.str();
}

/// Loads the stored algebraic map with the model's default shape.
[[nodiscard]] Mlp load_ell(const DnnShape& shape, const std::string& path) {
  return mlp_from_params(shape.ell_sizes, load_params(path), "ell");
}

/// Loads the stored dynamic network; the fixed parts come from the model.
[[nodiscard]] DnnModel load_dnn(const DnnShape& shape, const NdaeModel& model,
                                const std::string& path) {
  return dnn_from_params(shape, load_params(path), model.b, model.h, model.w0);
}

/// Re-indents an embedded pretty-printed JSON object by two spaces.
[[nodiscard]] std::string indent_block(const std::string& text) {
  std::string out;
  for (std::size_t k = 0; k + 1 < text.size(); ++k) {
    out.push_back(text[k]);
    if (text[k] == '\n') {
      out += "    ";
    }
  }
  return out;
}

}  // namespace

RunConfig run_config_from_json(const std::string& text) {
  const nlohmann::json doc = nlohmann::json::parse(text);
  RunConfig config;
  if (doc.contains("model")) {
    const auto& section = doc.at("model");
    config.n_gen = section.value("n_gen", config.n_gen);
    config.seed = section.value("seed", config.seed);
    config.eta = section.value("eta", config.eta);
  }
  if (doc.contains("solver")) {
    const auto& section = doc.at("solver");
    config.tableau = section.value("tableau", config.tableau);
    config.t_end = section.value("t_end", config.t_end);
    config.solver.delta = section.value("delta", config.solver.delta);
    config.solver.rel_tol = section.value("rel_tol", config.solver.rel_tol);
    config.solver.abs_tol = section.value("abs_tol", config.solver.abs_tol);
    config.solver.max_step = section.value("max_step", config.solver.max_step);
    config.solver.newton_tol =
        section.value("newton_tol", config.solver.newton_tol);
    config.solver.newton_max_iter =
        section.value("newton_max_iter", config.solver.newton_max_iter);
  }
  if (doc.contains("training")) {
    const auto& section = doc.at("training");
    if (section.contains("algebraic")) {
      config.algebraic = train_config_from_json(section.at("algebraic").dump());
    }
    if (section.contains("dynamic")) {
      config.dynamic = train_config_from_json(section.at("dynamic").dump());
    }
  }
  if (doc.contains("certify")) {
    const auto& section = doc.at("certify");
    config.a_scale = section.value("a_scale", config.a_scale);
    config.w_scale = section.value("w_scale", config.w_scale);
  }
  if (doc.contains("paths")) {
    config.out_dir = doc.at("paths").value("out_dir", config.out_dir);
  }
  return config;
}

std::string run_config_to_json(const RunConfig& config) {
  std::ostringstream out;
  out << "{\n";
  out << "  \"model\": {\n";
  out << "    \"n_gen\": " << config.n_gen << ",\n";
  out << "    \"seed\": " << config.seed << ",\n";
  out << "    \"eta\": " << config.eta << "\n";
  out << "  },\n";
  out << "  \"solver\": {\n";
  out << "    \"tableau\": \"" << config.tableau << "\",\n";
  out << "    \"t_end\": " << g17(config.t_end) << ",\n";
  out << "    \"delta\": " << g17(config.solver.delta) << ",\n";
  out << "    \"rel_tol\": " << g17(config.solver.rel_tol) << ",\n";
  out << "    \"abs_tol\": " << g17(config.solver.abs_tol) << ",\n";
  out << "    \"max_step\": " << g17(config.solver.max_step) << ",\n";
  out << "    \"newton_tol\": " << g17(config.solver.newton_tol) << ",\n";
  out << "    \"newton_max_iter\": " << config.solver.newton_max_iter << "\n";
  out << "  },\n";
  out << "  \"training\": {\n";
  out << "    \"algebraic\": " << indent_block(train_config_to_json(config.algebraic))
      << ",\n";
  out << "    \"dynamic\": " << indent_block(train_config_to_json(config.dynamic))
      << "\n";
  out << "  },\n";
  out << "  \"certify\": {\n";
  out << "    \"a_scale\": " << g17(config.a_scale) << ",\n";
  out << "    \"w_scale\": " << g17(config.w_scale) << "\n";
  out << "  },\n";
  out << "  \"paths\": {\n";
  out << "    \"out_dir\": \"" << config.out_dir << "\"\n";
  out << "  }\n";
  out << "}\n";
  return out.str();
}

ArtifactPaths artifact_paths(const RunConfig& config) {
  const std::string base = config.out_dir + "/";
  ArtifactPaths paths;
  paths.model = base + "model.json";
  paths.trajectory = base + "trajectory.csv";
  paths.samples = base + "samples.csv";
  paths.checkpoint_algebraic = base + "checkpoint_algebraic.json";
  paths.log_algebraic = base + "log_algebraic.csv";
  paths.checkpoint_dynamic = base + "checkpoint_dynamic.json";
  paths.log_dynamic = base + "log_dynamic.csv";
  paths.error_dynamic = base + "error_dynamic.csv";
  paths.error_algebraic = base + "error_algebraic.csv";
  paths.components = base + "components.csv";
  paths.series_min_error = base + "series_min_error.csv";
  paths.series_max_error = base + "series_max_error.csv";
  paths.certificate = base + "certificate.json";
  return paths;
}

Vector draw_initial(Eigen::Index n_d, std::uint64_t seed) {
  Rng rng(seed);
  return rng.uniform_vector(n_d, -0.5, 0.5);
}

ComponentReport component_errors(const Trajectory& truth,
                                 const Trajectory& predicted) {
  if (truth.size() != predicted.size()) {
    throw GridMismatch("component_errors: trajectory lengths differ");
  }
  if (truth.size() == 0) {
    throw GridMismatch("component_errors: empty trajectory");
  }
  const Eigen::Index n_d = truth.states_d.front().size();
  if (predicted.states_d.front().size() != n_d) {
    throw DimensionMismatch("component_errors: state widths differ");
  }
  ComponentReport report;
  report.errors = Vector::Constant(n_d, kRelativeErrorSentinel);
  double best = std::numeric_limits<double>::infinity();
  double worst = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n_d; ++i) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = 0; k < truth.states_d.size(); ++k) {
      const double diff = truth.states_d[k](i) - predicted.states_d[k](i);
      num += diff * diff;
      den += truth.states_d[k](i) * truth.states_d[k](i);
    }
    if (std::sqrt(den) <= 1e-12) {
      continue;
    }
    const double error = 100.0 * std::sqrt(num) / std::sqrt(den);
    report.errors(i) = error;
    if (error < best) {
      best = error;
      report.argmin = i;
    }
    if (error > worst) {
      worst = error;
      report.argmax = i;
    }
  }
  return report;
}

int cmd_generate(const RunConfig& config) {
  const ArtifactPaths paths = artifact_paths(config);
  std::filesystem::create_directories(config.out_dir);
  const NdaeModel model = build_synthetic_model(config.n_gen, config.seed);
  const Vector x0 = draw_initial(model.n_d, config.seed);
  const ButcherTableau tableau = find_tableau(config.tableau);
  Trajectory traj;
  try {
    traj = simulate(model, x0, zero_input(model.m), config.t_end, tableau,
                    config.solver);
  } catch (const Error& err) {
    std::cout << "solver failure: " << err.what() << "\n";
    return 2;
  }
  const Eigen::Index eta = config.eta > 0 ? config.eta : traj.size() - 1;
  const SampleSet samples = sample_dataset(traj, eta, config.seed);
  save_model(model, paths.model);
  save_trajectory(traj, paths.trajectory);
  save_samples(samples, paths.samples);
  std::vector<std::pair<Vector, Vector>> points;
  points.reserve(traj.states_d.size());
  for (std::size_t k = 0; k < traj.states_d.size(); ++k) {
    points.emplace_back(traj.states_d[k], traj.states_a[k]);
  }
  std::cout << "index1_margin = " << g17(index1_margin(model, points)) << "\n";
  return 0;
}

int cmd_train(const RunConfig& config, const std::string& phase) {
  const ArtifactPaths paths = artifact_paths(config);
  std::filesystem::create_directories(config.out_dir);
  if (!have(paths.model)) {
    return missing(paths.model);
  }
  if (!have(paths.samples)) {
    return missing(paths.samples);
  }
  const NdaeModel model = load_model(paths.model);
  const SampleSet samples = load_samples(paths.samples);
  const DnnShape shape = default_shape(model.n_d, model.n_a, model.m);
  if (phase == "algebraic") {
    const Mlp net0 = init_mlp(shape.ell_sizes, config.algebraic.seed);
    try {
      const AlgebraicTrainResult result =
          train_algebraic(samples, net0, config.algebraic);
      save_params(mlp_params(result.net, "ell"), paths.checkpoint_algebraic);
      TrainHistory history;
      history.records.reserve(result.history.size());
      for (std::size_t k = 0; k < result.history.size(); ++k) {
        TrainRecord record;
        record.epoch = static_cast<int>(k);
        record.loss_a = result.history[k];
        record.total = result.history[k];
        history.records.push_back(record);
      }
      save_history(history, paths.log_algebraic);
      std::cout << "algebraic final loss = "
                << (history.records.empty()
                        ? std::string("none")
                        : g17(history.records.back().total))
                << "\n";
    } catch (const NonFiniteLoss& err) {
      std::cout << "training failure at epoch " << err.epoch() << ": "
                << err.what() << "\n";
      return 3;
    }
    return 0;
  }
  if (phase == "dynamic") {
    if (!have(paths.checkpoint_algebraic)) {
      return missing(paths.checkpoint_algebraic);
    }
    const Mlp ell = load_ell(shape, paths.checkpoint_algebraic);
    const DnnModel dnn0 =
        dnn_from_params(shape, init_params(shape, config.dynamic.seed), model.b,
                        model.h, model.w0);
    try {
      const DynamicTrainResult result =
          train_dynamic(samples, dnn0, ell, config.dynamic);
      save_params(dnn_params(result.dnn), paths.checkpoint_dynamic);
      save_history(result.history, paths.log_dynamic);
      std::cout << "dynamic final loss = "
                << (result.history.records.empty()
                        ? std::string("none")
                        : g17(result.history.records.back().total))
                << "\n";
    } catch (const NonFiniteLoss& err) {
      std::cout << "training failure at epoch " << err.epoch() << ": "
                << err.what() << "\n";
      return 3;
    }
    return 0;
  }
  throw Error("cmd_train: unknown phase '" + phase + "'");
}

int cmd_evaluate(const RunConfig& config) {
  const ArtifactPaths paths = artifact_paths(config);
  std::filesystem::create_directories(config.out_dir);
  if (!have(paths.model)) {
    return missing(paths.model);
  }
  if (!have(paths.checkpoint_algebraic)) {
    return missing(paths.checkpoint_algebraic);
  }
  if (!have(paths.checkpoint_dynamic)) {
    return missing(paths.checkpoint_dynamic);
  }
  const NdaeModel model = load_model(paths.model);
  const DnnShape shape = default_shape(model.n_d, model.n_a, model.m);
  const Mlp ell = load_ell(shape, paths.checkpoint_algebraic);
  const DnnModel dnn = load_dnn(shape, model, paths.checkpoint_dynamic);
  const ButcherTableau tableau = find_tableau(config.tableau);
  const InputFn input = zero_input(model.m);
  const Vector x0 = draw_initial(model.n_d, config.seed + 1);
  Trajectory truth;
  Trajectory predicted;
  try {
    truth = simulate(model, x0, input, config.t_end, tableau, config.solver);
    predicted =
        dnn_simulate(dnn, ell, x0, input, config.t_end, tableau, config.solver);
  } catch (const Error& err) {
    std::cout << "solver failure: " << err.what() << "\n";
    return 2;
  }
  const Vector e_d = relative_error_series(truth, predicted, ErrorKind::Dynamic);
  const Vector e_a =
      relative_error_series(truth, predicted, ErrorKind::Algebraic);
  write_file(paths.error_dynamic, series_csv("e_d_rel", truth.times, e_d),
             "cmd_evaluate");
  write_file(paths.error_algebraic, series_csv("e_a_rel", truth.times, e_a),
             "cmd_evaluate");
  const ComponentReport report = component_errors(truth, predicted);
  std::ostringstream table;
  table << "component, e_rel\n";
  for (Eigen::Index i = 0; i < report.errors.size(); ++i) {
    table << i << ", " << g17(report.errors(i)) << "\n";
  }
  write_file(paths.components, table.str(), "cmd_evaluate");
  write_file(paths.series_min_error, paired_csv(truth, predicted, report.argmin),
             "cmd_evaluate");
  write_file(paths.series_max_error, paired_csv(truth, predicted, report.argmax),
             "cmd_evaluate");
  std::cout << "mean e_d_rel = " << g17(mean_valid(e_d)) << " %\n";
  std::cout << "mean e_a_rel = " << g17(mean_valid(e_a)) << " %\n";
  std::cout << "min error component " << report.argmin << " = "
            << g17(report.errors(report.argmin)) << " %\n";
  std::cout << "max error component " << report.argmax << " = "
            << g17(report.errors(report.argmax)) << " %\n";
  return 0;
}

int cmd_certify(const RunConfig& config) {
  const ArtifactPaths paths = artifact_paths(config);
  std::filesystem::create_directories(config.out_dir);
  if (!have(paths.model)) {
    return missing(paths.model);
  }
  if (!have(paths.trajectory)) {
    return missing(paths.trajectory);
  }
  if (!have(paths.checkpoint_dynamic)) {
    return missing(paths.checkpoint_dynamic);
  }
  const NdaeModel model = load_model(paths.model);
  const Trajectory traj = load_trajectory(paths.trajectory);
  const DnnShape shape = default_shape(model.n_d, model.n_a, model.m);
  const DnnModel dnn = load_dnn(shape, model, paths.checkpoint_dynamic);
  const Mlp ell = have(paths.checkpoint_algebraic)
                      ? load_ell(shape, paths.checkpoint_algebraic)
                      : make_mlp(shape.ell_sizes);
  const ButcherTableau tableau = find_tableau(config.tableau);
  const InputFn input = zero_input(model.m);
  const Vector x0 = traj.states_d.front();
  Trajectory predicted;
  try {
    predicted =
        dnn_simulate(dnn, ell, x0, input, config.t_end, tableau, config.solver);
  } catch (const Error& err) {
    std::cout << "solver failure: " << err.what() << "\n";
    return 2;
  }
  const Eigen::Index count =
      std::min(traj.times.size(), predicted.times.size());
  std::vector<CloudPoint> cloud;
  cloud.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index k = 0; k < count; ++k) {
    const auto row = static_cast<std::size_t>(k);
    CloudPoint point;
    point.x_d = traj.states_d[row];
    point.e = traj.states_d[row] - predicted.states_d[row];
    point.u = Vector::Zero(model.m);
    cloud.push_back(point);
  }
  const Matrix a = -config.a_scale * Matrix::Identity(model.n_d, model.n_d);
  const Matrix l = Matrix::Identity(model.n_d, model.n_d);
  const Matrix k = Matrix::Identity(model.n_d, model.n_d);
  const auto [c0, c1] = estimate_c0_c1(model, dnn, a, l, k, cloud);
  LyapunovCandidate candidate;
  try {
    candidate = candidate_pw(a, l, k, c1, config.w_scale);
  } catch (const Error&) {
    candidate.p = Matrix::Identity(model.n_d, model.n_d);
    candidate.w = config.w_scale * Matrix::Identity(model.n_d, model.n_d);
  }
  const ErrorCertificate cert =
      certify(model, dnn, a, l, k, candidate.p, candidate.w, cloud);
  const ErrorTrace trace =
      simulate_error(model, dnn, a, x0, Vector::Zero(model.n_d), input,
                     config.t_end, tableau, config.solver);
  write_file(paths.certificate, certificate_report(cert, &trace),
             "cmd_certify");
  std::cout << "feasible = " << (cert.feasible ? "true" : "false")
            << ", margin = " << g17(cert.margin)
            << ", bound = " << g17(cert.bound) << "\n";
  return cert.feasible ? 0 : 5;
}

}  // namespace ndae
