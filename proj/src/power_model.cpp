#include "ndae/power_model.hpp"

#include "ndae/io_util.hpp"
#include "ndae/json_util.hpp"
#include "ndae/random.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ndae {

namespace {

constexpr double kFdStep = 1e-6;
constexpr double kConsistencyTol = 1e-10;

double eval_term(const NonlinearTerm& t, const Vector& x_d, const Vector& x_a) {
  switch (t.op) {
    case TermOp::SinDiff:
      return t.coeff * std::sin(x_d(t.i) - x_d(t.j));
    case TermOp::CosTimes:
      return t.coeff * std::cos(x_d(t.i)) * x_a(t.k);
    case TermOp::Linear:
      return t.k >= 0 ? t.coeff * x_a(t.k) : t.coeff * x_d(t.i);
  }
  return 0.0;
}

void term_grad_xd(const NonlinearTerm& t, const Vector& x_d, const Vector& x_a,
                  Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) {
  switch (t.op) {
    case TermOp::SinDiff: {
      const double c = t.coeff * std::cos(x_d(t.i) - x_d(t.j));
      row(t.i) += c;
      row(t.j) -= c;
      break;
    }
    case TermOp::CosTimes:
      row(t.i) += -t.coeff * std::sin(x_d(t.i)) * x_a(t.k);
      break;
    case TermOp::Linear:
      if (t.k < 0) {
        row(t.i) += t.coeff;
      }
      break;
  }
}

void term_grad_xa(const NonlinearTerm& t, const Vector& x_d,
                  Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) {
  switch (t.op) {
    case TermOp::SinDiff:
      break;
    case TermOp::CosTimes:
      row(t.k) += t.coeff * std::cos(x_d(t.i));
      break;
    case TermOp::Linear:
      if (t.k >= 0) {
        row(t.k) += t.coeff;
      }
      break;
  }
}

void check_model_dims(const NdaeModel& model, const Vector& x_d, const Vector& x_a,
                      const char* who) {
  if (x_d.size() != model.n_d || x_a.size() != model.n_a) {
    throw DimensionMismatch(std::string(who) + ": state size does not match model");
  }
}

const char* op_name(TermOp op) {
  switch (op) {
    case TermOp::SinDiff:
      return "sin_diff";
    case TermOp::CosTimes:
      return "cos_times";
    case TermOp::Linear:
      return "linear";
  }
  return "linear";
}

TermOp op_from_name(const std::string& name) {
  if (name == "sin_diff") {
    return TermOp::SinDiff;
  }
  if (name == "cos_times") {
    return TermOp::CosTimes;
  }
  if (name == "linear") {
    return TermOp::Linear;
  }
  throw Error("model_from_json: unknown term op '" + name + "'");
}

void append_terms(std::ostringstream& out, const char* key,
                  const std::vector<NonlinearTerm>& terms) {
  out << "  \"" << key << "\": [";
  for (std::size_t t = 0; t < terms.size(); ++t) {
    if (t > 0) {
      out << ",";
    }
    out << "\n    {\"op\": \"" << op_name(terms[t].op) << "\", \"i\": " << terms[t].i
        << ", \"j\": " << terms[t].j << ", \"k\": " << terms[t].k
        << ", \"coeff\": " << g17(terms[t].coeff) << "}";
  }
  out << (terms.empty() ? "]" : "\n  ]");
}

std::vector<NonlinearTerm> terms_from_json(const nlohmann::json& arr) {
  std::vector<NonlinearTerm> terms;
  terms.reserve(arr.size());
  for (const auto& item : arr) {
    NonlinearTerm t;
    t.op = op_from_name(item.at("op").get<std::string>());
    t.i = item.at("i").get<int>();
    t.j = item.at("j").get<int>();
    t.k = item.at("k").get<int>();
    t.coeff = item.at("coeff").get<double>();
    terms.push_back(t);
  }
  return terms;
}

}  // namespace

Nonlinearity Nonlinearity::from_terms(std::vector<NonlinearTerm> terms) {
  Nonlinearity n;
  n.dim_ = static_cast<Eigen::Index>(terms.size());
  n.has_terms_ = true;
  n.terms_ = std::move(terms);
  return n;
}

Nonlinearity Nonlinearity::from_callback(Eigen::Index dim, EvalFn eval,
                                         JacFn jac_xd, JacFn jac_xa) {
  Nonlinearity n;
  n.dim_ = dim;
  n.eval_ = std::move(eval);
  n.jac_xd_ = std::move(jac_xd);
  n.jac_xa_ = std::move(jac_xa);
  return n;
}

Vector Nonlinearity::operator()(const Vector& x_d, const Vector& x_a) const {
  if (has_terms_) {
    Vector out(dim_);
    for (Eigen::Index t = 0; t < dim_; ++t) {
      out(t) = eval_term(terms_[static_cast<std::size_t>(t)], x_d, x_a);
    }
    return out;
  }
  if (eval_) {
    return eval_(x_d, x_a);
  }
  return Vector::Zero(0);
}

Matrix Nonlinearity::jacobian_xd(const Vector& x_d, const Vector& x_a) const {
  if (has_terms_) {
    Matrix jac = Matrix::Zero(dim_, x_d.size());
    for (Eigen::Index t = 0; t < dim_; ++t) {
      term_grad_xd(terms_[static_cast<std::size_t>(t)], x_d, x_a, jac.row(t));
    }
    return jac;
  }
  if (jac_xd_) {
    return jac_xd_(x_d, x_a);
  }
  const auto slice = [&](const Vector& xd) { return (*this)(xd, x_a); };
  return finite_diff_jacobian(slice, x_d, kFdStep);
}

Matrix Nonlinearity::jacobian_xa(const Vector& x_d, const Vector& x_a) const {
  if (has_terms_) {
    Matrix jac = Matrix::Zero(dim_, x_a.size());
    for (Eigen::Index t = 0; t < dim_; ++t) {
      term_grad_xa(terms_[static_cast<std::size_t>(t)], x_d, jac.row(t));
    }
    return jac;
  }
  if (jac_xa_) {
    return jac_xa_(x_d, x_a);
  }
  const auto slice = [&](const Vector& xa) { return (*this)(x_d, xa); };
  return finite_diff_jacobian(slice, x_a, kFdStep);
}

Vector eval_dynamic_rhs(const NdaeModel& model, const Vector& x_d,
                        const Vector& x_a, const Vector& u) {
  check_model_dims(model, x_d, x_a, "eval_dynamic_rhs");
  if (u.size() != model.m) {
    throw DimensionMismatch("eval_dynamic_rhs: input size does not match model");
  }
  return model.a_d * x_d + model.c_d * model.f(x_d, x_a) + model.b * u +
         model.h * model.w0;
}

Vector eval_algebraic_residual(const NdaeModel& model, const Vector& x_d,
                               const Vector& x_a) {
  check_model_dims(model, x_d, x_a, "eval_algebraic_residual");
  return model.a_a * x_a + model.c_a * model.g(x_d, x_a);
}

Matrix algebraic_jacobian(const NdaeModel& model, const Vector& x_d,
                          const Vector& x_a) {
  check_model_dims(model, x_d, x_a, "algebraic_jacobian");
  return model.a_a + model.c_a * model.g.jacobian_xa(x_d, x_a);
}

Matrix algebraic_jacobian_xd(const NdaeModel& model, const Vector& x_d,
                             const Vector& x_a) {
  check_model_dims(model, x_d, x_a, "algebraic_jacobian_xd");
  return model.c_a * model.g.jacobian_xd(x_d, x_a);
}

Matrix dynamic_jacobian_xd(const NdaeModel& model, const Vector& x_d,
                           const Vector& x_a) {
  check_model_dims(model, x_d, x_a, "dynamic_jacobian_xd");
  return model.a_d + model.c_d * model.f.jacobian_xd(x_d, x_a);
}

Matrix dynamic_jacobian_xa(const NdaeModel& model, const Vector& x_d,
                           const Vector& x_a) {
  check_model_dims(model, x_d, x_a, "dynamic_jacobian_xa");
  return model.c_d * model.f.jacobian_xa(x_d, x_a);
}

double index1_margin(const NdaeModel& model,
                     const std::vector<std::pair<Vector, Vector>>& points) {
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& [x_d, x_a] : points) {
    const Matrix jac = algebraic_jacobian(model, x_d, x_a);
    const double sigma_min_sq = sym_eig_min(Matrix(jac.transpose() * jac));
    margin = std::min(margin, std::sqrt(std::max(0.0, sigma_min_sq)));
  }
  return margin;
}

Vector consistent_init(const NdaeModel& model, const Vector& x_d0,
                       const Vector& x_a_guess) {
  const auto residual = [&](const Vector& x_a) {
    return eval_algebraic_residual(model, x_d0, x_a);
  };
  const auto jacobian = [&](const Vector& x_a) {
    return algebraic_jacobian(model, x_d0, x_a);
  };
  return newton_solve(residual, jacobian, x_a_guess, kConsistencyTol, 50).x;
}

NdaeModel build_synthetic_model(int n_gen, std::uint64_t seed) {
  Rng rng(seed);
  NdaeModel model;
  model.n_d = 4 * n_gen;
  model.n_a = 8 * n_gen;
  model.m = 2 * n_gen;

  const auto sign = [&rng] { return rng.uniform() < 0.5 ? -1.0 : 1.0; };

  Vector diag(model.n_d);
  for (Eigen::Index i = 0; i < model.n_d; ++i) {
    diag(i) = -rng.uniform(0.5, 3.0);
  }
  const double amp = model.n_d > 1 ? 0.45 / static_cast<double>(model.n_d - 1) : 0.0;
  Matrix coupling = rng.uniform_matrix(model.n_d, model.n_d, -amp, amp);
  coupling.diagonal().setZero();
  model.a_d = Matrix(diag.asDiagonal()) + coupling;
  for (int attempt = 0; attempt < 60; ++attempt) {
    const Eigen::EigenSolver<Matrix> es(model.a_d);
    if (es.eigenvalues().real().maxCoeff() < 0.0) {
      break;
    }
    coupling *= 0.5;
    model.a_d = Matrix(diag.asDiagonal()) + coupling;
  }

  std::vector<NonlinearTerm> f_terms;
  for (int q = 0; q < n_gen; ++q) {
    NonlinearTerm swing;
    swing.op = TermOp::SinDiff;
    swing.i = 4 * q;
    swing.j = n_gen > 1 ? 4 * ((q + 1) % n_gen) : 2;
    swing.coeff = sign() * rng.uniform(0.3, 1.0);
    f_terms.push_back(swing);

    NonlinearTerm voltage;
    voltage.op = TermOp::CosTimes;
    voltage.i = 4 * q;
    voltage.k = 8 * q + 1;
    voltage.coeff = sign() * rng.uniform(0.2, 0.8);
    f_terms.push_back(voltage);
  }
  model.f = Nonlinearity::from_terms(std::move(f_terms));
  model.c_d = rng.uniform_matrix(model.n_d, model.f.dim(), -0.5, 0.5);

  std::vector<NonlinearTerm> g_terms;
  for (Eigen::Index r = 0; r < model.n_a; ++r) {
    const int q = static_cast<int>(r / 8);
    NonlinearTerm t;
    if (r % 2 == 0) {
      t.op = TermOp::CosTimes;
      t.i = 4 * q;
      t.k = static_cast<int>(r);
      t.coeff = sign() * rng.uniform(0.2, 0.5);
    } else {
      t.op = TermOp::SinDiff;
      t.i = 4 * q;
      t.j = n_gen > 1 ? 4 * ((q + 1) % n_gen) : 2;
      t.coeff = sign() * rng.uniform(0.2, 0.6);
    }
    g_terms.push_back(t);
  }
  model.g = Nonlinearity::from_terms(std::move(g_terms));

  model.c_a = Matrix::Zero(model.n_a, model.g.dim());
  for (Eigen::Index r = 0; r < model.n_a; ++r) {
    model.c_a(r, r) = sign() * rng.uniform(0.3, 0.8);
    model.c_a(r, (r + 1) % model.g.dim()) = rng.uniform(-0.2, 0.2);
  }

  Matrix off = rng.uniform_matrix(model.n_a, model.n_a, -0.02, 0.02);
  off.diagonal().setZero();
  model.a_a = off;
  for (Eigen::Index r = 0; r < model.n_a; ++r) {
    double lip = 0.0;
    for (Eigen::Index t = 0; t < model.g.dim(); ++t) {
      const auto& term = model.g.terms()[static_cast<std::size_t>(t)];
      if (term.op == TermOp::CosTimes ||
          (term.op == TermOp::Linear && term.k >= 0)) {
        lip += std::abs(model.c_a(r, t)) * std::abs(term.coeff);
      }
    }
    model.a_a(r, r) = 2.0 + off.row(r).cwiseAbs().sum() + lip;
  }

  model.b = rng.uniform_matrix(model.n_d, model.m, -0.5, 0.5);
  model.h = rng.uniform_vector(model.n_d, -0.2, 0.2);
  model.w0 = 1.0;
  return model;
}

std::string model_to_json(const NdaeModel& model) {
  if (!model.f.has_terms() || !model.g.has_terms()) {
    throw Error("model_to_json: nonlinearities must be term lists");
  }
  std::ostringstream out;
  out << "{\n";
  out << "  \"n_d\": " << model.n_d << ",\n";
  out << "  \"n_a\": " << model.n_a << ",\n";
  out << "  \"m\": " << model.m << ",\n";
  out << "  \"w0\": " << g17(model.w0) << ",\n";
  out << "  \"a_d\": " << json_matrix(model.a_d) << ",\n";
  out << "  \"c_d\": " << json_matrix(model.c_d) << ",\n";
  out << "  \"b\": " << json_matrix(model.b) << ",\n";
  out << "  \"a_a\": " << json_matrix(model.a_a) << ",\n";
  out << "  \"c_a\": " << json_matrix(model.c_a) << ",\n";
  out << "  \"h\": " << json_array(model.h) << ",\n";
  append_terms(out, "f_terms", model.f.terms());
  out << ",\n";
  append_terms(out, "g_terms", model.g.terms());
  out << "\n}\n";
  return out.str();
}

NdaeModel model_from_json(const std::string& text) {
  const nlohmann::json doc = nlohmann::json::parse(text);
  NdaeModel model;
  model.n_d = doc.at("n_d").get<Eigen::Index>();
  model.n_a = doc.at("n_a").get<Eigen::Index>();
  model.m = doc.at("m").get<Eigen::Index>();
  model.w0 = doc.at("w0").get<double>();
  model.f = Nonlinearity::from_terms(terms_from_json(doc.at("f_terms")));
  model.g = Nonlinearity::from_terms(terms_from_json(doc.at("g_terms")));
  model.a_d = matrix_from_json(doc.at("a_d"), model.n_d, model.n_d);
  model.c_d = matrix_from_json(doc.at("c_d"), model.n_d, model.f.dim());
  model.b = matrix_from_json(doc.at("b"), model.n_d, model.m);
  model.a_a = matrix_from_json(doc.at("a_a"), model.n_a, model.n_a);
  model.c_a = matrix_from_json(doc.at("c_a"), model.n_a, model.g.dim());
  model.h = vector_from_json(doc.at("h"));
  if (model.h.size() != model.n_d) {
    throw DimensionMismatch("model_from_json: h size does not match n_d");
  }
  return model;
}

void save_model(const NdaeModel& model, const std::string& path) {
  write_file(path, model_to_json(model), "save_model");
}

NdaeModel load_model(const std::string& path) {
  return model_from_json(read_file(path, "load_model"));
}

}  // namespace ndae
