#include "ndae/dae_solver.hpp"

#include "ndae/format.hpp"
#include "ndae/io_util.hpp"
#include "ndae/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ndae {

namespace {

constexpr double kOrderConditionTol = 1e-12;
constexpr double kInitTol = 1e-10;
constexpr double kFdStep = 1e-6;

void validate_tableau(const ButcherTableau& tab) {
  if (tab.nu < 1 || tab.b.rows() != tab.nu || tab.b.cols() != tab.nu ||
      tab.c.size() != tab.nu) {
    throw Error("tableau '" + tab.name + "': inconsistent dimensions");
  }
  const double weight_sum = tab.c.sum();
  if (std::abs(weight_sum - 1.0) > kOrderConditionTol) {
    throw Error("tableau '" + tab.name + "': weights do not sum to 1");
  }
  const double second = tab.c.dot(tab.b.rowwise().sum());
  if (std::abs(second - 0.5) > kOrderConditionTol) {
    throw Error("tableau '" + tab.name + "': second order condition violated");
  }
}

Matrix system_f_jac_xd(const DaeSystem& sys, const Vector& x_d, const Vector& x_a,
                       const Vector& u) {
  if (sys.f_jac_xd) {
    return sys.f_jac_xd(x_d, x_a, u);
  }
  return finite_diff_jacobian([&](const Vector& v) { return sys.f(v, x_a, u); },
                              x_d, kFdStep);
}

Matrix system_f_jac_xa(const DaeSystem& sys, const Vector& x_d, const Vector& x_a,
                       const Vector& u) {
  if (sys.f_jac_xa) {
    return sys.f_jac_xa(x_d, x_a, u);
  }
  return finite_diff_jacobian([&](const Vector& v) { return sys.f(x_d, v, u); },
                              x_a, kFdStep);
}

Matrix system_g_jac_xd(const DaeSystem& sys, const Vector& x_d, const Vector& x_a) {
  if (sys.g_jac_xd) {
    return sys.g_jac_xd(x_d, x_a);
  }
  return finite_diff_jacobian([&](const Vector& v) { return sys.g(v, x_a); }, x_d,
                              kFdStep);
}

Matrix system_g_jac_xa(const DaeSystem& sys, const Vector& x_d, const Vector& x_a) {
  if (sys.g_jac_xa) {
    return sys.g_jac_xa(x_d, x_a);
  }
  return finite_diff_jacobian([&](const Vector& v) { return sys.g(x_d, v); }, x_a,
                              kFdStep);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    const auto begin = field.find_first_not_of(" \t\r");
    const auto end = field.find_last_not_of(" \t\r");
    fields.push_back(begin == std::string::npos
                         ? std::string()
                         : field.substr(begin, end - begin + 1));
  }
  return fields;
}

Eigen::Index count_prefixed(const std::vector<std::string>& header,
                            const std::string& prefix) {
  return static_cast<Eigen::Index>(
      std::count_if(header.begin(), header.end(), [&](const std::string& name) {
        return name.rfind(prefix, 0) == 0;
      }));
}

}  // namespace

std::vector<ButcherTableau> builtin_tableaus() {
  std::vector<ButcherTableau> tableaus;

  ButcherTableau midpoint;
  midpoint.nu = 1;
  midpoint.b = Matrix::Constant(1, 1, 0.5);
  midpoint.c = Vector::Ones(1);
  midpoint.name = "midpoint";
  midpoint.order = 2;
  tableaus.push_back(std::move(midpoint));

  ButcherTableau radau;
  radau.nu = 2;
  radau.b.resize(2, 2);
  radau.b << 5.0 / 12.0, -1.0 / 12.0, 3.0 / 4.0, 1.0 / 4.0;
  radau.c.resize(2);
  radau.c << 3.0 / 4.0, 1.0 / 4.0;
  radau.name = "radau2";
  radau.order = 3;
  tableaus.push_back(std::move(radau));

  const double root3_over_6 = std::sqrt(3.0) / 6.0;
  ButcherTableau gauss;
  gauss.nu = 2;
  gauss.b.resize(2, 2);
  gauss.b << 0.25, 0.25 - root3_over_6, 0.25 + root3_over_6, 0.25;
  gauss.c.resize(2);
  gauss.c << 0.5, 0.5;
  gauss.name = "gauss2";
  gauss.order = 4;
  tableaus.push_back(std::move(gauss));

  for (const auto& tab : tableaus) {
    validate_tableau(tab);
  }
  return tableaus;
}

ButcherTableau find_tableau(const std::string& name) {
  for (auto& tab : builtin_tableaus()) {
    if (tab.name == name) {
      return tab;
    }
  }
  throw Error("find_tableau: unknown tableau '" + name +
              "' (available: midpoint, radau2, gauss2)");
}

DaeSystem as_dae(const NdaeModel& model) {
  DaeSystem sys;
  sys.n_d = model.n_d;
  sys.n_a = model.n_a;
  sys.f = [&model](const Vector& x_d, const Vector& x_a, const Vector& u) {
    return eval_dynamic_rhs(model, x_d, x_a, u);
  };
  sys.g = [&model](const Vector& x_d, const Vector& x_a) {
    return eval_algebraic_residual(model, x_d, x_a);
  };
  sys.f_jac_xd = [&model](const Vector& x_d, const Vector& x_a, const Vector&) {
    return dynamic_jacobian_xd(model, x_d, x_a);
  };
  sys.f_jac_xa = [&model](const Vector& x_d, const Vector& x_a, const Vector&) {
    return dynamic_jacobian_xa(model, x_d, x_a);
  };
  sys.g_jac_xd = [&model](const Vector& x_d, const Vector& x_a) {
    return algebraic_jacobian_xd(model, x_d, x_a);
  };
  sys.g_jac_xa = [&model](const Vector& x_d, const Vector& x_a) {
    return algebraic_jacobian(model, x_d, x_a);
  };
  return sys;
}

IrkResult irk_step_system(const DaeSystem& sys, const Vector& x_d, const Vector& x_a,
                          const InputFn& input_fn, double t, double delta,
                          const ButcherTableau& tableau, const SolverConfig& config) {
  const Eigen::Index n_d = sys.n_d;
  const Eigen::Index n_a = sys.n_a;
  const int nu = tableau.nu;
  const Eigen::Index block = n_d + n_a;

  std::vector<Vector> stage_inputs(static_cast<std::size_t>(nu));
  for (int j = 0; j < nu; ++j) {
    stage_inputs[static_cast<std::size_t>(j)] =
        input_fn(t + delta * tableau.b.row(j).sum());
  }

  const auto stage_alpha = [&](const Vector& z, int j) {
    return Vector(z.segment(j * block, n_d));
  };
  const auto stage_beta = [&](const Vector& z, int j) {
    return Vector(z.segment(j * block + n_d, n_a));
  };

  const auto residual = [&](const Vector& z) {
    std::vector<Vector> f_vals(static_cast<std::size_t>(nu));
    for (int i = 0; i < nu; ++i) {
      f_vals[static_cast<std::size_t>(i)] =
          sys.f(stage_alpha(z, i), stage_beta(z, i),
                stage_inputs[static_cast<std::size_t>(i)]);
    }
    Vector r(nu * block);
    for (int j = 0; j < nu; ++j) {
      Vector acc = stage_alpha(z, j) - x_d;
      for (int i = 0; i < nu; ++i) {
        acc -= delta * tableau.b(j, i) * f_vals[static_cast<std::size_t>(i)];
      }
      r.segment(j * block, n_d) = acc;
      if (n_a > 0) {
        r.segment(j * block + n_d, n_a) = sys.g(stage_alpha(z, j), stage_beta(z, j));
      }
    }
    return r;
  };

  const auto jacobian = [&](const Vector& z) {
    Matrix jac = Matrix::Zero(nu * block, nu * block);
    std::vector<Matrix> f_d(static_cast<std::size_t>(nu));
    std::vector<Matrix> f_a(static_cast<std::size_t>(nu));
    for (int i = 0; i < nu; ++i) {
      const Vector alpha = stage_alpha(z, i);
      const Vector beta = stage_beta(z, i);
      const Vector& u = stage_inputs[static_cast<std::size_t>(i)];
      f_d[static_cast<std::size_t>(i)] = system_f_jac_xd(sys, alpha, beta, u);
      if (n_a > 0) {
        f_a[static_cast<std::size_t>(i)] = system_f_jac_xa(sys, alpha, beta, u);
      }
    }
    for (int j = 0; j < nu; ++j) {
      jac.block(j * block, j * block, n_d, n_d).setIdentity();
      for (int i = 0; i < nu; ++i) {
        jac.block(j * block, i * block, n_d, n_d) -=
            delta * tableau.b(j, i) * f_d[static_cast<std::size_t>(i)];
        if (n_a > 0) {
          jac.block(j * block, i * block + n_d, n_d, n_a) -=
              delta * tableau.b(j, i) * f_a[static_cast<std::size_t>(i)];
        }
      }
      if (n_a > 0) {
        const Vector alpha = stage_alpha(z, j);
        const Vector beta = stage_beta(z, j);
        jac.block(j * block + n_d, j * block, n_a, n_d) =
            system_g_jac_xd(sys, alpha, beta);
        jac.block(j * block + n_d, j * block + n_d, n_a, n_a) =
            system_g_jac_xa(sys, alpha, beta);
      }
    }
    return jac;
  };

  Vector z0(nu * block);
  for (int j = 0; j < nu; ++j) {
    z0.segment(j * block, n_d) = x_d;
    z0.segment(j * block + n_d, n_a) = x_a;
  }

  Vector z;
  try {
    z = newton_solve(residual, jacobian, z0, config.newton_tol,
                     config.newton_max_iter)
            .x;
  } catch (const SingularMatrix& e) {
    throw IndexViolation(std::string("irk_step: stage jacobian singular (") +
                         e.what() + ")");
  }

  IrkResult result;
  result.stages.reserve(static_cast<std::size_t>(nu));
  Vector increment = Vector::Zero(n_d);
  for (int j = 0; j < nu; ++j) {
    const Vector alpha = stage_alpha(z, j);
    const Vector beta = stage_beta(z, j);
    increment += tableau.c(j) *
                 sys.f(alpha, beta, stage_inputs[static_cast<std::size_t>(j)]);
    result.stages.emplace_back(alpha, beta);
  }
  result.x_d_next = x_d + delta * increment;

  if (n_a > 0) {
    const auto close_residual = [&](const Vector& beta) {
      return sys.g(result.x_d_next, beta);
    };
    const auto close_jacobian = [&](const Vector& beta) {
      return system_g_jac_xa(sys, result.x_d_next, beta);
    };
    try {
      result.x_a_next = newton_solve(close_residual, close_jacobian,
                                     result.stages.back().second,
                                     config.newton_tol, config.newton_max_iter)
                            .x;
    } catch (const SingularMatrix& e) {
      throw IndexViolation(std::string("irk_step: algebraic jacobian singular (") +
                           e.what() + ")");
    }
  } else {
    result.x_a_next = Vector(0);
  }
  return result;
}

IrkResult irk_step(const NdaeModel& model, const Vector& x_d, const Vector& x_a,
                   const Vector& u, const ButcherTableau& tableau,
                   const SolverConfig& config) {
  const DaeSystem sys = as_dae(model);
  return irk_step_system(
      sys, x_d, x_a, [&u](double) { return u; }, 0.0, config.delta, tableau, config);
}

Trajectory simulate_system(const DaeSystem& sys, const Vector& x_d0,
                           const Vector& x_a_guess, const InputFn& input_fn,
                           double t_end, const ButcherTableau& tableau,
                           const SolverConfig& config) {
  const double delta = std::min(config.delta, config.max_step);
  const auto n_full = static_cast<Eigen::Index>(std::floor(t_end / delta + 1e-9));
  const double remainder = t_end - static_cast<double>(n_full) * delta;
  const bool has_remainder = remainder > 1e-9 * delta;

  Vector x_d = x_d0;
  Vector x_a;
  if (sys.n_a > 0) {
    const auto residual = [&](const Vector& beta) { return sys.g(x_d0, beta); };
    const auto jacobian = [&](const Vector& beta) {
      return system_g_jac_xa(sys, x_d0, beta);
    };
    x_a = newton_solve(residual, jacobian, x_a_guess, kInitTol, 50).x;
  } else {
    x_a = Vector(0);
  }

  const Eigen::Index total = n_full + (has_remainder ? 1 : 0) + 1;
  Trajectory traj;
  traj.times.resize(total);
  traj.states_d.reserve(static_cast<std::size_t>(total));
  traj.states_a.reserve(static_cast<std::size_t>(total));
  traj.inputs.reserve(static_cast<std::size_t>(total));
  traj.times(0) = 0.0;
  traj.states_d.push_back(x_d);
  traj.states_a.push_back(x_a);
  traj.inputs.push_back(input_fn(0.0));

  const auto advance = [&](double t_from, double step, double t_to,
                           Eigen::Index slot) {
    try {
      IrkResult step_result =
          irk_step_system(sys, x_d, x_a, input_fn, t_from, step, tableau, config);
      x_d = std::move(step_result.x_d_next);
      x_a = std::move(step_result.x_a_next);
    } catch (const NoConvergence& e) {
      throw NoConvergence(std::string(e.what()) + " at t = " + g17(t_from),
                          e.iterations(), e.residual_norm());
    } catch (const IndexViolation& e) {
      throw IndexViolation(std::string(e.what()) + " at t = " + g17(t_from));
    }
    traj.times(slot) = t_to;
    traj.states_d.push_back(x_d);
    traj.states_a.push_back(x_a);
    traj.inputs.push_back(input_fn(t_to));
  };

  for (Eigen::Index k = 1; k <= n_full; ++k) {
    advance(static_cast<double>(k - 1) * delta, delta,
            static_cast<double>(k) * delta, k);
  }
  if (has_remainder) {
    advance(static_cast<double>(n_full) * delta, remainder, t_end, n_full + 1);
  }
  return traj;
}

Trajectory simulate(const NdaeModel& model, const Vector& x_d0,
                    const InputFn& input_fn, double t_end,
                    const ButcherTableau& tableau, const SolverConfig& config) {
  return simulate_system(as_dae(model), x_d0, Vector::Zero(model.n_a), input_fn,
                         t_end, tableau, config);
}

SampleSet sample_dataset(const Trajectory& traj, Eigen::Index eta,
                         std::uint64_t seed) {
  const Eigen::Index n_pairs = traj.size() - 1;
  if (n_pairs < 1 || eta > n_pairs) {
    throw TooFewPoints("sample_dataset: requested " + std::to_string(eta) +
                       " pairs from a trajectory with " +
                       std::to_string(std::max<Eigen::Index>(n_pairs, 0)));
  }
  std::vector<std::size_t> indices(static_cast<std::size_t>(n_pairs));
  std::iota(indices.begin(), indices.end(), 0);
  Rng rng(seed);
  rng.shuffle(indices);

  SampleSet samples;
  samples.pairs.reserve(static_cast<std::size_t>(eta));
  for (Eigen::Index s = 0; s < eta; ++s) {
    const std::size_t i = indices[static_cast<std::size_t>(s)];
    SamplePair pair;
    pair.x_d_n = traj.states_d[i];
    pair.x_a_n = traj.states_a[i];
    pair.x_d_next = traj.states_d[i + 1];
    pair.x_a_next = traj.states_a[i + 1];
    pair.u = traj.inputs[i];
    pair.delta = traj.times(static_cast<Eigen::Index>(i) + 1) -
                 traj.times(static_cast<Eigen::Index>(i));
    samples.pairs.push_back(std::move(pair));
  }
  return samples;
}

std::string trajectory_to_csv(const Trajectory& traj) {
  if (traj.size() == 0) {
    throw Error("trajectory_to_csv: empty trajectory");
  }
  const Eigen::Index n_d = traj.states_d.front().size();
  const Eigen::Index n_a = traj.states_a.front().size();
  const Eigen::Index m = traj.inputs.front().size();

  std::ostringstream out;
  out << "t";
  for (Eigen::Index i = 0; i < n_d; ++i) {
    out << ", xd_" << i;
  }
  for (Eigen::Index i = 0; i < n_a; ++i) {
    out << ", xa_" << i;
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    out << ", u_" << i;
  }
  out << "\n";
  for (Eigen::Index row = 0; row < traj.size(); ++row) {
    out << g17(traj.times(row));
    const auto idx = static_cast<std::size_t>(row);
    for (Eigen::Index i = 0; i < n_d; ++i) {
      out << ", " << g17(traj.states_d[idx](i));
    }
    for (Eigen::Index i = 0; i < n_a; ++i) {
      out << ", " << g17(traj.states_a[idx](i));
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      out << ", " << g17(traj.inputs[idx](i));
    }
    out << "\n";
  }
  return out.str();
}

Trajectory trajectory_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) {
    throw Error("trajectory_from_csv: missing header");
  }
  const auto header = split_csv_line(line);
  const Eigen::Index n_d = count_prefixed(header, "xd_");
  const Eigen::Index n_a = count_prefixed(header, "xa_");
  const Eigen::Index m = count_prefixed(header, "u_");
  if (header.empty() || header.front() != "t" ||
      static_cast<Eigen::Index>(header.size()) != 1 + n_d + n_a + m) {
    throw Error("trajectory_from_csv: unrecognized header");
  }

  std::vector<double> times;
  Trajectory traj;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    const auto fields = split_csv_line(line);
    if (static_cast<Eigen::Index>(fields.size()) != 1 + n_d + n_a + m) {
      throw Error("trajectory_from_csv: row width mismatch");
    }
    std::size_t pos = 0;
    times.push_back(std::stod(fields[pos++]));
    Vector x_d(n_d);
    for (Eigen::Index i = 0; i < n_d; ++i) {
      x_d(i) = std::stod(fields[pos++]);
    }
    Vector x_a(n_a);
    for (Eigen::Index i = 0; i < n_a; ++i) {
      x_a(i) = std::stod(fields[pos++]);
    }
    Vector u(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      u(i) = std::stod(fields[pos++]);
    }
    traj.states_d.push_back(std::move(x_d));
    traj.states_a.push_back(std::move(x_a));
    traj.inputs.push_back(std::move(u));
  }
  traj.times = Eigen::Map<const Vector>(times.data(),
                                        static_cast<Eigen::Index>(times.size()));
  return traj;
}

void save_trajectory(const Trajectory& traj, const std::string& path) {
  write_file(path, trajectory_to_csv(traj), "save_trajectory");
}

Trajectory load_trajectory(const std::string& path) {
  return trajectory_from_csv(read_file(path, "load_trajectory"));
}

std::string samples_to_csv(const SampleSet& samples) {
  if (samples.pairs.empty()) {
    throw Error("samples_to_csv: empty sample set");
  }
  const auto& first = samples.pairs.front();
  const Eigen::Index n_d = first.x_d_n.size();
  const Eigen::Index n_a = first.x_a_n.size();
  const Eigen::Index m = first.u.size();

  std::ostringstream out;
  bool lead = true;
  const auto emit_group = [&](const char* prefix, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) {
      out << (lead ? "" : ", ") << prefix << i;
      lead = false;
    }
  };
  emit_group("xd_n_", n_d);
  emit_group("xa_n_", n_a);
  emit_group("xd_next_", n_d);
  emit_group("xa_next_", n_a);
  emit_group("u_", m);
  out << ", delta\n";

  for (const auto& pair : samples.pairs) {
    bool first_field = true;
    const auto emit_vec = [&](const Vector& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        out << (first_field ? "" : ", ") << g17(v(i));
        first_field = false;
      }
    };
    emit_vec(pair.x_d_n);
    emit_vec(pair.x_a_n);
    emit_vec(pair.x_d_next);
    emit_vec(pair.x_a_next);
    emit_vec(pair.u);
    out << ", " << g17(pair.delta) << "\n";
  }
  return out.str();
}

SampleSet samples_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) {
    throw Error("samples_from_csv: missing header");
  }
  const auto header = split_csv_line(line);
  const Eigen::Index n_d = count_prefixed(header, "xd_n_");
  const Eigen::Index n_a = count_prefixed(header, "xa_n_");
  const Eigen::Index m = count_prefixed(header, "u_");
  const Eigen::Index width = 2 * n_d + 2 * n_a + m + 1;
  if (static_cast<Eigen::Index>(header.size()) != width ||
      header.back() != "delta") {
    throw Error("samples_from_csv: unrecognized header");
  }

  SampleSet samples;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    const auto fields = split_csv_line(line);
    if (static_cast<Eigen::Index>(fields.size()) != width) {
      throw Error("samples_from_csv: row width mismatch");
    }
    std::size_t pos = 0;
    const auto take_vec = [&](Eigen::Index n) {
      Vector v(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        v(i) = std::stod(fields[pos++]);
      }
      return v;
    };
    SamplePair pair;
    pair.x_d_n = take_vec(n_d);
    pair.x_a_n = take_vec(n_a);
    pair.x_d_next = take_vec(n_d);
    pair.x_a_next = take_vec(n_a);
    pair.u = take_vec(m);
    pair.delta = std::stod(fields[pos]);
    samples.pairs.push_back(std::move(pair));
  }
  return samples;
}

void save_samples(const SampleSet& samples, const std::string& path) {
  write_file(path, samples_to_csv(samples), "save_samples");
}

SampleSet load_samples(const std::string& path) {
  return samples_from_csv(read_file(path, "load_samples"));
}

}  // namespace ndae
