#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "lsnn/errors.hpp"
#include "lsnn/geometry.hpp"

namespace lsnn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline double relu(double s) { return s > 0.0 ? s : 0.0; }

// Weak derivative of relu; the value at exactly zero is fixed to 0.
inline double heaviside(double s) { return s > 0.0 ? 1.0 : 0.0; }

struct NetworkArchitecture {
  int input_dim = 1;
  std::vector<int> hidden_widths;

  int depth() const { return static_cast<int>(hidden_widths.size()); }
  int last_width() const { return hidden_widths.back(); }
  int width(int layer) const { return layer == 0 ? input_dim : hidden_widths[layer - 1]; }
  bool shallow() const { return depth() == 1; }

  void validate() const {
    if (input_dim < 1) throw ShapeError("architecture: input_dim must be positive");
    if (hidden_widths.empty()) throw ShapeError("architecture: at least one hidden layer required");
    for (int w : hidden_widths) {
      if (w < 1) throw ShapeError("architecture: hidden widths must be positive");
    }
  }

  bool operator==(const NetworkArchitecture&) const = default;
};

// Total parameter count (n_l + 1) + sum_k n_k (n_{k-1} + 1).
inline long count_parameters(const NetworkArchitecture& arch) {
  arch.validate();
  long total = arch.last_width() + 1;
  for (int k = 1; k <= arch.depth(); ++k) {
    total += static_cast<long>(arch.width(k)) * (arch.width(k - 1) + 1);
  }
  return total;
}

// Same count with one degree of freedom removed per first-layer neuron, as
// implied by constraining first-layer weight rows to the unit sphere.
inline long count_parameters_unit_sphere(const NetworkArchitecture& arch) {
  return count_parameters(arch) - arch.hidden_widths.front();
}

struct DenseLayer {
  RowMatrix weights;        // n_k x n_{k-1}
  Eigen::VectorXd biases;   // n_k
};

// Linear coefficients c_hat = (c_0, ..., c_{n_l}) plus hidden layers.
struct NetworkParams {
  NetworkArchitecture arch;
  Eigen::VectorXd linear;
  std::vector<DenseLayer> layers;

  static NetworkParams zeros(const NetworkArchitecture& arch) {
    arch.validate();
    NetworkParams p;
    p.arch = arch;
    p.linear = Eigen::VectorXd::Zero(arch.last_width() + 1);
    p.layers.resize(arch.depth());
    for (int k = 1; k <= arch.depth(); ++k) {
      p.layers[k - 1].weights = RowMatrix::Zero(arch.width(k), arch.width(k - 1));
      p.layers[k - 1].biases = Eigen::VectorXd::Zero(arch.width(k));
    }
    return p;
  }

  void validate() const {
    arch.validate();
    if (linear.size() != arch.last_width() + 1) throw ShapeError("params: linear layer size mismatch");
    if (static_cast<int>(layers.size()) != arch.depth()) throw ShapeError("params: layer count mismatch");
    for (int k = 1; k <= arch.depth(); ++k) {
      const auto& L = layers[k - 1];
      if (L.weights.rows() != arch.width(k) || L.weights.cols() != arch.width(k - 1) ||
          L.biases.size() != arch.width(k)) {
        std::ostringstream os;
        os << "params: layer " << k << " shape mismatch";
        throw ShapeError(os.str());
      }
    }
  }

  Eigen::Index size() const { return count_parameters(arch); }

  // Flat layout: c_0..c_n, then for every layer and every neuron (b_i, w_i).
  Eigen::VectorXd flatten() const {
    Eigen::VectorXd v(size());
    Eigen::Index pos = 0;
    v.segment(pos, linear.size()) = linear;
    pos += linear.size();
    for (const auto& L : layers) {
      for (Eigen::Index i = 0; i < L.weights.rows(); ++i) {
        v(pos++) = L.biases(i);
        for (Eigen::Index j = 0; j < L.weights.cols(); ++j) v(pos++) = L.weights(i, j);
      }
    }
    return v;
  }

  void assign(const Eigen::Ref<const Eigen::VectorXd>& v) {
    if (v.size() != size()) throw ShapeError("params: flat vector size mismatch");
    Eigen::Index pos = 0;
    linear = v.segment(pos, linear.size());
    pos += linear.size();
    for (auto& L : layers) {
      for (Eigen::Index i = 0; i < L.weights.rows(); ++i) {
        L.biases(i) = v(pos++);
        for (Eigen::Index j = 0; j < L.weights.cols(); ++j) L.weights(i, j) = v(pos++);
      }
    }
  }

  NetworkParams with_flat(const Eigen::Ref<const Eigen::VectorXd>& v) const {
    NetworkParams p = *this;
    p.assign(v);
    return p;
  }

  void set_zero() {
    linear.setZero();
    for (auto& L : layers) {
      L.weights.setZero();
      L.biases.setZero();
    }
  }
};

namespace detail {

inline void check_input(const NetworkParams& params, Eigen::Index n) {
  if (n != params.arch.input_dim) {
    std::ostringstream os;
    os << "network input has dimension " << n << ", expected " << params.arch.input_dim;
    throw ShapeError(os.str());
  }
}

// Last hidden layer pre-activations.
inline Eigen::VectorXd last_preactivation(const NetworkParams& params,
                                          const Eigen::Ref<const Eigen::VectorXd>& x) {
  check_input(params, x.size());
  Eigen::VectorXd a = x;
  Eigen::VectorXd z;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    z = params.layers[k].weights * a + params.layers[k].biases;
    if (k + 1 < params.layers.size()) a = z.unaryExpr([](double s) { return relu(s); });
  }
  return z;
}

}  // namespace detail

inline double evaluate(const NetworkParams& params, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::VectorXd z = detail::last_preactivation(params, x);
  double u = params.linear(0);
  for (Eigen::Index i = 0; i < z.size(); ++i) u += params.linear(i + 1) * relu(z(i));
  return u;
}

struct HiddenFeatures {
  Eigen::VectorXd features;            // (1, sigma_1(x), ..., sigma_n(x))
  Eigen::VectorXi activation_pattern;  // H(z_i) of the last hidden layer
};

inline HiddenFeatures hidden_features(const NetworkParams& params,
                                      const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::VectorXd z = detail::last_preactivation(params, x);
  HiddenFeatures out;
  out.features.resize(z.size() + 1);
  out.activation_pattern.resize(z.size());
  out.features(0) = 1.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    out.features(i + 1) = relu(z(i));
    out.activation_pattern(i) = z(i) > 0.0 ? 1 : 0;
  }
  return out;
}

namespace detail {

inline void check_step_args(const Eigen::Ref<const Eigen::VectorXd>& a, double eps) {
  if (!(eps > 0.0)) throw ParameterError("step construction: eps must be positive");
  if (std::abs(a.norm() - 1.0) > 1e-12) throw ParameterError("step construction: normal must be a unit vector");
}

}  // namespace detail

// p1(x) = (relu(a.x - b + eps) - relu(a.x - b - eps)) / (2 eps), two neurons.
inline NetworkParams build_step_p1(const Eigen::Ref<const Eigen::VectorXd>& a, double b, double eps) {
  detail::check_step_args(a, eps);
  NetworkArchitecture arch{static_cast<int>(a.size()), {2}};
  NetworkParams p = NetworkParams::zeros(arch);
  p.layers[0].weights.row(0) = a.transpose();
  p.layers[0].weights.row(1) = a.transpose();
  p.layers[0].biases << -b + eps, -b - eps;
  p.linear << 0.0, 1.0 / (2.0 * eps), -1.0 / (2.0 * eps);
  return p;
}

// p2(x) = 1 - relu(-relu(a.x - b) / eps + 1), one neuron in each of two hidden layers.
inline NetworkParams build_step_p2(const Eigen::Ref<const Eigen::VectorXd>& a, double b, double eps) {
  detail::check_step_args(a, eps);
  NetworkArchitecture arch{static_cast<int>(a.size()), {1, 1}};
  NetworkParams p = NetworkParams::zeros(arch);
  p.layers[0].weights.row(0) = a.transpose();
  p.layers[0].biases(0) = -b;
  p.layers[1].weights(0, 0) = -1.0 / eps;
  p.layers[1].biases(0) = 1.0;
  p.linear << 1.0, -1.0;
  return p;
}

struct Hyperplane {
  Eigen::VectorXd normal;  // unit length
  double offset = 0.0;     // zero set is normal . x + offset = 0
  int neuron = 0;          // index into the first hidden layer
};

struct HyperplaneSet {
  std::vector<Hyperplane> planes;
  std::vector<int> degenerate;  // first-layer neurons with a zero weight row
};

// Breaking hyperplanes w_i . x + b_i = 0 of the first hidden layer, rescaled to unit normals.
inline HyperplaneSet first_layer_hyperplanes(const NetworkParams& params) {
  params.validate();
  HyperplaneSet set;
  const auto& L = params.layers.front();
  for (Eigen::Index i = 0; i < L.weights.rows(); ++i) {
    const double norm = L.weights.row(i).norm();
    if (norm == 0.0) {
      set.degenerate.push_back(static_cast<int>(i));
      continue;
    }
    set.planes.push_back({L.weights.row(i).transpose() / norm, L.biases(i) / norm, static_cast<int>(i)});
  }
  return set;
}

// Rescale every first-layer row to unit norm while keeping the network
// function unchanged (relu is positively homogeneous, so the scale moves
// into the next layer's weights or the linear coefficients).
inline void project_first_layer_to_unit_sphere(NetworkParams& params) {
  auto& L = params.layers.front();
  for (Eigen::Index i = 0; i < L.weights.rows(); ++i) {
    const double norm = L.weights.row(i).norm();
    if (norm == 0.0) continue;
    L.weights.row(i) /= norm;
    L.biases(i) /= norm;
    if (params.layers.size() > 1) {
      params.layers[1].weights.col(i) *= norm;
    } else {
      params.linear(i + 1) *= norm;
    }
  }
}

}  // namespace lsnn
