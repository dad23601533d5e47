#pragma once

#include <string>

#include "ndae/certificate.hpp"
#include "ndae/dae_solver.hpp"
#include "ndae/numerics.hpp"
#include "ndae/power_model.hpp"
#include "ndae/training.hpp"

namespace ndae {

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

/// Everything one experiment needs: model recipe, solver settings, the two
/// training phases, certificate knobs, and the artifact directory.
struct RunConfig {
  int n_gen = 3;
  std::uint64_t seed = 0;
  /// Sample pairs drawn from the trajectory; 0 keeps every adjacent pair.
  Eigen::Index eta = 0;
  std::string tableau = "midpoint";
  double t_end = 1.0;
  SolverConfig solver;
  TrainConfig algebraic;
  TrainConfig dynamic;
  /// The comparison system uses A = -a_scale * I unless overridden.
  double a_scale = 1.0;
  /// Scale of the decay matrix W = w_scale * I in the candidate pair.
  double w_scale = 0.1;
  std::string out_dir = "out";
};

/// Parses a sectioned JSON document (model / solver / training / certify /
/// paths); absent fields keep their defaults.
[[nodiscard]] RunConfig run_config_from_json(const std::string& text);

/// Serializes a configuration in the same sectioned layout.
[[nodiscard]] std::string run_config_to_json(const RunConfig& config);

// ---------------------------------------------------------------------------
// Artifact layout
// ---------------------------------------------------------------------------

/// Fixed file names every command reads and writes under the output
/// directory.
struct ArtifactPaths {
  std::string model;
  std::string trajectory;
  std::string samples;
  std::string checkpoint_algebraic;
  std::string log_algebraic;
  std::string checkpoint_dynamic;
  std::string log_dynamic;
  std::string error_dynamic;
  std::string error_algebraic;
  std::string components;
  std::string series_min_error;
  std::string series_max_error;
  std::string certificate;
};

[[nodiscard]] ArtifactPaths artifact_paths(const RunConfig& config);

// ---------------------------------------------------------------------------
// Evaluation helpers
// ---------------------------------------------------------------------------

/// Initial condition drawn uniformly from [-0.5, 0.5]^n_d; the held-out
/// condition uses seed + 1.
[[nodiscard]] Vector draw_initial(Eigen::Index n_d, std::uint64_t seed);

/// Percent relative error of each dynamic component over a whole trajectory,
/// with the best and worst component indices.
struct ComponentReport {
  /// Per-component percent errors; kRelativeErrorSentinel marks components
  /// whose reference norm vanishes.
  Vector errors;
  Eigen::Index argmin = 0;
  Eigen::Index argmax = 0;
};

[[nodiscard]] ComponentReport component_errors(const Trajectory& truth,
                                               const Trajectory& predicted);

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------
//
// Each command returns its process exit code: 0 success, 2 solver failure,
// 3 training divergence, 4 missing input artifact, 5 infeasible certificate.

/// Builds the synthetic model, simulates it, samples the training set, and
/// writes model / trajectory / samples plus the index-1 margin.
[[nodiscard]] int cmd_generate(const RunConfig& config);

/// Trains one phase ("algebraic" or "dynamic") and writes its checkpoint and
/// loss log; the dynamic phase requires the algebraic checkpoint.
[[nodiscard]] int cmd_train(const RunConfig& config, const std::string& phase);

/// Simulates the identified model from the held-out initial condition and
/// writes the relative-error series, the per-component table, and the paired
/// series of the best and worst components.
[[nodiscard]] int cmd_evaluate(const RunConfig& config);

/// Certifies the identified model against the comparison system on a cloud
/// sampled from the stored trajectory and writes the certificate report.
[[nodiscard]] int cmd_certify(const RunConfig& config);

}  // namespace ndae
