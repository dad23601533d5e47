#include "ndae/nn.hpp"

#include "ndae/io_util.hpp"
#include "ndae/json_util.hpp"
#include "ndae/random.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace ndae {

namespace {

void check_net(const Mlp& net, const char* who) {
  if (net.layer_sizes.size() < 2 ||
      net.weights.size() != net.layer_sizes.size() - 1 ||
      net.biases.size() != net.weights.size()) {
    throw Error(std::string(who) + ": malformed network");
  }
}

std::string seg_name(const std::string& prefix, const std::string& base) {
  return prefix.empty() ? base : prefix + "." + base;
}

void glorot_fill(Matrix& w, Rng& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      w(r, c) = rng.uniform(-limit, limit);
    }
  }
}

void append_segment(ParamVector& params, const std::string& name,
                    const Matrix& value) {
  const Eigen::Index offset = params.values.size();
  params.values.conservativeResize(offset + value.size());
  for (Eigen::Index r = 0; r < value.rows(); ++r) {
    for (Eigen::Index c = 0; c < value.cols(); ++c) {
      params.values(offset + r * value.cols() + c) = value(r, c);
    }
  }
  params.layout.push_back({name, value.rows(), value.cols()});
}

/// Appends every segment of `part`, namespacing the names with `prefix`.
void append_params(ParamVector& params, const ParamVector& part,
                   const std::string& prefix) {
  Eigen::Index offset = 0;
  for (const auto& seg : part.layout) {
    const Eigen::Index count = seg.rows * seg.cols;
    const Eigen::Index at = params.values.size();
    params.values.conservativeResize(at + count);
    params.values.segment(at, count) = part.values.segment(offset, count);
    params.layout.push_back({seg_name(prefix, seg.name), seg.rows, seg.cols});
    offset += count;
  }
}

}  // namespace

Mlp make_mlp(const std::vector<Eigen::Index>& layer_sizes) {
  if (layer_sizes.size() < 2) {
    throw Error("make_mlp: need at least input and output sizes");
  }
  Mlp net;
  net.layer_sizes = layer_sizes;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    net.weights.emplace_back(Matrix::Zero(layer_sizes[l + 1], layer_sizes[l]));
    net.biases.emplace_back(Vector::Zero(layer_sizes[l + 1]));
  }
  return net;
}

Mlp init_mlp(const std::vector<Eigen::Index>& layer_sizes, std::uint64_t seed) {
  Mlp net = make_mlp(layer_sizes);
  Rng rng(seed);
  for (auto& w : net.weights) {
    glorot_fill(w, rng);
  }
  return net;
}

Vector mlp_forward(const Mlp& net, const Vector& x) {
  check_net(net, "mlp_forward");
  if (x.size() != net.layer_sizes.front()) {
    throw DimensionMismatch("mlp_forward: input size does not match");
  }
  Vector a = x;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    Vector z = net.weights[l] * a + net.biases[l];
    a = (l + 1 < net.weights.size()) ? Vector(z.array().tanh()) : std::move(z);
  }
  return a;
}

Matrix mlp_input_jacobian(const Mlp& net, const Vector& x) {
  check_net(net, "mlp_input_jacobian");
  if (x.size() != net.layer_sizes.front()) {
    throw DimensionMismatch("mlp_input_jacobian: input size does not match");
  }
  Vector a = x;
  Matrix jac = Matrix::Identity(x.size(), x.size());
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    jac = net.weights[l] * jac;
    const Vector z = net.weights[l] * a + net.biases[l];
    if (l + 1 < net.weights.size()) {
      a = z.array().tanh();
      jac = (1.0 - a.array().square()).matrix().asDiagonal() * jac;
    }
  }
  return jac;
}

MlpGradient mlp_gradient(const Mlp& net, const Vector& loss_seed, const Vector& x) {
  check_net(net, "mlp_gradient");
  if (x.size() != net.layer_sizes.front()) {
    throw DimensionMismatch("mlp_gradient: input size does not match");
  }
  if (loss_seed.size() != net.layer_sizes.back()) {
    throw DimensionMismatch("mlp_gradient: seed size does not match output");
  }

  const std::size_t depth = net.weights.size();
  std::vector<Vector> activations(depth + 1);
  activations[0] = x;
  for (std::size_t l = 0; l < depth; ++l) {
    const Vector z = net.weights[l] * activations[l] + net.biases[l];
    activations[l + 1] = (l + 1 < depth) ? Vector(z.array().tanh()) : z;
  }

  std::vector<Matrix> grad_w(depth);
  std::vector<Vector> grad_b(depth);
  Vector delta = loss_seed;
  for (std::size_t l = depth; l-- > 0;) {
    grad_w[l] = delta * activations[l].transpose();
    grad_b[l] = delta;
    delta = net.weights[l].transpose() * delta;
    if (l > 0) {
      delta = delta.cwiseProduct(
          (1.0 - activations[l].array().square()).matrix());
    }
  }

  MlpGradient grad;
  grad.input_grad = std::move(delta);
  for (std::size_t l = 0; l < depth; ++l) {
    append_segment(grad.param_grad, "w" + std::to_string(l), grad_w[l]);
    append_segment(grad.param_grad, "b" + std::to_string(l), grad_b[l]);
  }
  return grad;
}

Eigen::Index segment_offset(const ParamVector& params, const std::string& name) {
  Eigen::Index offset = 0;
  for (const auto& seg : params.layout) {
    if (seg.name == name) {
      return offset;
    }
    offset += seg.rows * seg.cols;
  }
  throw Error("segment_offset: no segment named '" + name + "'");
}

Matrix param_matrix(const ParamVector& params, const std::string& name) {
  Eigen::Index offset = 0;
  for (const auto& seg : params.layout) {
    if (seg.name == name) {
      Matrix value(seg.rows, seg.cols);
      for (Eigen::Index r = 0; r < seg.rows; ++r) {
        for (Eigen::Index c = 0; c < seg.cols; ++c) {
          value(r, c) = params.values(offset + r * seg.cols + c);
        }
      }
      return value;
    }
    offset += seg.rows * seg.cols;
  }
  throw Error("param_matrix: no segment named '" + name + "'");
}

void set_param_matrix(ParamVector& params, const std::string& name,
                      const Matrix& value) {
  Eigen::Index offset = 0;
  for (const auto& seg : params.layout) {
    if (seg.name == name) {
      if (seg.rows != value.rows() || seg.cols != value.cols()) {
        throw DimensionMismatch("set_param_matrix: shape mismatch for '" + name +
                                "'");
      }
      for (Eigen::Index r = 0; r < seg.rows; ++r) {
        for (Eigen::Index c = 0; c < seg.cols; ++c) {
          params.values(offset + r * seg.cols + c) = value(r, c);
        }
      }
      return;
    }
    offset += seg.rows * seg.cols;
  }
  throw Error("set_param_matrix: no segment named '" + name + "'");
}

ParamVector mlp_params(const Mlp& net, const std::string& prefix) {
  check_net(net, "mlp_params");
  ParamVector params;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    append_segment(params, seg_name(prefix, "w" + std::to_string(l)),
                   net.weights[l]);
    append_segment(params, seg_name(prefix, "b" + std::to_string(l)),
                   net.biases[l]);
  }
  return params;
}

Mlp mlp_from_params(const std::vector<Eigen::Index>& layer_sizes,
                    const ParamVector& params, const std::string& prefix) {
  Mlp net = make_mlp(layer_sizes);
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    net.weights[l] =
        param_matrix(params, seg_name(prefix, "w" + std::to_string(l)));
    net.biases[l] = Vector(
        param_matrix(params, seg_name(prefix, "b" + std::to_string(l))).col(0));
    if (net.weights[l].rows() != layer_sizes[l + 1] ||
        net.weights[l].cols() != layer_sizes[l]) {
      throw DimensionMismatch("mlp_from_params: segment shape does not match");
    }
  }
  return net;
}

Vector dnn_rhs(const DnnModel& dnn, const Vector& x_nn, const Vector& u) {
  if (x_nn.size() != dnn.a_nn.rows()) {
    throw DimensionMismatch("dnn_rhs: state size does not match");
  }
  const Vector gu = dnn.gamma ? dnn.gamma(u) : u;
  if (gu.size() != dnn.c_nn.cols()) {
    throw DimensionMismatch("dnn_rhs: input size does not match");
  }
  return dnn.a_nn * x_nn + dnn.b_nn * mlp_forward(dnn.rho, x_nn) + dnn.c_nn * gu +
         dnn.h * dnn.w0;
}

Matrix dnn_rhs_jacobian(const DnnModel& dnn, const Vector& x_nn) {
  return dnn.a_nn + dnn.b_nn * mlp_input_jacobian(dnn.rho, x_nn);
}

DnnVjp dnn_rhs_vjp(const DnnModel& dnn, const Vector& x, const Vector& u,
                   const Vector& seed) {
  (void)u;
  DnnVjp vjp;
  vjp.grad_a_nn = seed * x.transpose();
  vjp.grad_b_nn = seed * mlp_forward(dnn.rho, x).transpose();
  MlpGradient rho_grad =
      mlp_gradient(dnn.rho, Vector(dnn.b_nn.transpose() * seed), x);
  vjp.grad_rho = std::move(rho_grad.param_grad);
  vjp.grad_x = dnn.a_nn.transpose() * seed + rho_grad.input_grad;
  return vjp;
}

Trajectory dnn_simulate(const DnnModel& dnn, const Mlp& algebraic_map,
                        const Vector& x0, const InputFn& input_fn, double t_end,
                        const ButcherTableau& tableau, const SolverConfig& config) {
  DaeSystem sys;
  sys.n_d = dnn.a_nn.rows();
  sys.n_a = 0;
  sys.f = [&dnn](const Vector& x, const Vector&, const Vector& u) {
    return dnn_rhs(dnn, x, u);
  };
  sys.g = [](const Vector&, const Vector&) { return Vector(0); };
  sys.f_jac_xd = [&dnn](const Vector& x, const Vector&, const Vector&) {
    return dnn_rhs_jacobian(dnn, x);
  };

  Trajectory traj =
      simulate_system(sys, x0, Vector(0), input_fn, t_end, tableau, config);
  for (std::size_t k = 0; k < traj.states_d.size(); ++k) {
    traj.states_a[k] = mlp_forward(algebraic_map, traj.states_d[k]);
  }
  return traj;
}

DnnShape default_shape(Eigen::Index n_d, Eigen::Index n_a, Eigen::Index m) {
  DnnShape shape;
  shape.n_d = n_d;
  shape.n_a = n_a;
  shape.n_b = n_d;
  shape.n_c = m;
  shape.rho_sizes = {n_d, 32, shape.n_b};
  shape.ell_sizes = {n_d, 64, 64, n_a};
  return shape;
}

ParamVector init_params(const DnnShape& shape, std::uint64_t seed) {
  Rng rng(seed);
  ParamVector params;
  Matrix a_init = Matrix::Zero(shape.n_d, shape.n_d);
  a_init.diagonal().setConstant(-0.1);
  append_segment(params, "a_nn", a_init);
  append_segment(params, "b_nn",
                 rng.uniform_matrix(shape.n_d, shape.n_b, -0.1, 0.1));

  Mlp rho = make_mlp(shape.rho_sizes);
  for (auto& w : rho.weights) {
    glorot_fill(w, rng);
  }
  append_params(params, mlp_params(rho), "rho");

  Mlp ell = make_mlp(shape.ell_sizes);
  for (auto& w : ell.weights) {
    glorot_fill(w, rng);
  }
  append_params(params, mlp_params(ell), "ell");
  return params;
}

DnnModel dnn_from_params(const DnnShape& shape, const ParamVector& params,
                         const Matrix& c_nn, const Vector& h, double w0) {
  DnnModel dnn;
  dnn.a_nn = param_matrix(params, "a_nn");
  dnn.b_nn = param_matrix(params, "b_nn");
  dnn.c_nn = c_nn;
  dnn.rho = mlp_from_params(shape.rho_sizes, params, "rho");
  dnn.h = h;
  dnn.w0 = w0;
  return dnn;
}

Mlp ell_from_params(const DnnShape& shape, const ParamVector& params) {
  return mlp_from_params(shape.ell_sizes, params, "ell");
}

ParamVector dnn_params(const DnnModel& dnn) {
  ParamVector params;
  append_segment(params, "a_nn", dnn.a_nn);
  append_segment(params, "b_nn", dnn.b_nn);
  append_params(params, mlp_params(dnn.rho), "rho");
  return params;
}

void set_dnn_params(DnnModel& dnn, const ParamVector& params) {
  dnn.a_nn = param_matrix(params, "a_nn");
  dnn.b_nn = param_matrix(params, "b_nn");
  dnn.rho = mlp_from_params(dnn.rho.layer_sizes, params, "rho");
}

std::string params_to_json(const ParamVector& params) {
  std::ostringstream out;
  out << "{\n  \"layout\": [";
  for (std::size_t s = 0; s < params.layout.size(); ++s) {
    if (s > 0) {
      out << ",";
    }
    out << "\n    {\"name\": \"" << params.layout[s].name
        << "\", \"rows\": " << params.layout[s].rows
        << ", \"cols\": " << params.layout[s].cols << "}";
  }
  out << (params.layout.empty() ? "]" : "\n  ]") << ",\n";
  out << "  \"values\": " << json_array(params.values) << "\n}\n";
  return out.str();
}

ParamVector params_from_json(const std::string& text) {
  const nlohmann::json doc = nlohmann::json::parse(text);
  ParamVector params;
  Eigen::Index total = 0;
  for (const auto& item : doc.at("layout")) {
    ParamSegment seg;
    seg.name = item.at("name").get<std::string>();
    seg.rows = item.at("rows").get<Eigen::Index>();
    seg.cols = item.at("cols").get<Eigen::Index>();
    total += seg.rows * seg.cols;
    params.layout.push_back(std::move(seg));
  }
  params.values = vector_from_json(doc.at("values"));
  if (params.values.size() != total) {
    throw DimensionMismatch("params_from_json: value count does not match layout");
  }
  return params;
}

void save_params(const ParamVector& params, const std::string& path) {
  write_file(path, params_to_json(params), "save_params");
}

ParamVector load_params(const std::string& path) {
  return params_from_json(read_file(path, "load_params"));
}

}  // namespace ndae
