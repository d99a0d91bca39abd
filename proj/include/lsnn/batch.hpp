#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <thread>
#include <vector>

#include "lsnn/network.hpp"

namespace lsnn {

// Runs fn(chunk) for chunk = 0..n-1, on up to `threads` worker threads.
// Work is split statically so the result layout never depends on scheduling.
template <class Fn>
void parallel_chunks(int n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const int t = std::min(threads, n);
  pool.reserve(t);
  for (int w = 0; w < t; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += t) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

// Evaluates one network at a fixed point cloud, keeping post-activations for
// the backward pass. Columns are split into one contiguous chunk per thread.
class BatchEvaluator {
 public:
  BatchEvaluator() = default;

  BatchEvaluator(Eigen::MatrixXd points, int threads = 1) : points_(std::move(points)) {
    threads_ = std::max(1, threads);
    const Eigen::Index P = points_.cols();
    const int nchunks = static_cast<int>(std::max<Eigen::Index>(1, std::min<Eigen::Index>(threads_, P)));
    for (int c = 0; c <= nchunks; ++c) bounds_.push_back(P * c / nchunks);
    caches_.resize(nchunks);
  }

  Eigen::Index size() const { return points_.cols(); }
  const Eigen::MatrixXd& points() const { return points_; }
  int threads() const { return threads_; }

  // Network values at every point; post-activations are cached.
  const Eigen::VectorXd& forward(const NetworkParams& params) {
    if (points_.rows() != params.arch.input_dim) throw ShapeError("BatchEvaluator: point dimension mismatch");
    u_.resize(size());
    parallel_chunks(num_chunks(), threads_, [&](int c) {
      const Eigen::Index b = bounds_[c], n = bounds_[c + 1] - b;
      auto& acts = caches_[c];
      acts.resize(params.layers.size());
      for (std::size_t k = 0; k < params.layers.size(); ++k) acts[k].resize(params.layers[k].weights.rows(), n);
      const Eigen::Index nl = params.linear.size() - 1;
      // Column tiles keep every layer of a tile in cache.
      for (Eigen::Index s = 0; s < n; s += kTile) {
        const Eigen::Index m = std::min(kTile, n - s);
        for (std::size_t k = 0; k < params.layers.size(); ++k) {
          const auto& L = params.layers[k];
          auto a = acts[k].middleCols(s, m);
          if (k == 0) {
            a.noalias() = L.weights * points_.middleCols(b + s, m);
          } else {
            a.noalias() = L.weights * acts[k - 1].middleCols(s, m);
          }
          a = (a.colwise() + L.biases).cwiseMax(0.0);
        }
        u_.segment(b + s, m).noalias() = acts.back().middleCols(s, m).transpose() * params.linear.tail(nl);
      }
      u_.segment(b, n).array() += params.linear(0);
    });
    return u_;
  }

  const Eigen::VectorXd& values() const { return u_; }

  // Flat gradient of sum_j du_j * u(p_j) with respect to all parameters,
  // using the activations from the last forward() call.
  Eigen::VectorXd backward(const NetworkParams& params, const Eigen::VectorXd& du) const {
    const int nchunks = num_chunks();
    std::vector<Eigen::VectorXd> partial(nchunks);
    parallel_chunks(nchunks, threads_, [&](int c) {
      const Eigen::Index b = bounds_[c], n = bounds_[c + 1] - b;
      const auto& acts = caches_[c];
      const int depth = static_cast<int>(params.layers.size());
      const Eigen::Index nl = params.linear.size() - 1;
      Eigen::VectorXd g = Eigen::VectorXd::Zero(params.size());
      std::vector<Eigen::MatrixXd> gw(depth);
      std::vector<Eigen::VectorXd> gb(depth);
      for (int k = 0; k < depth; ++k) {
        gw[k] = Eigen::MatrixXd::Zero(params.layers[k].weights.rows(), params.layers[k].weights.cols());
        gb[k] = Eigen::VectorXd::Zero(params.layers[k].weights.rows());
      }
      Eigen::MatrixXd delta, next;
      for (Eigen::Index s = 0; s < n; s += kTile) {
        const Eigen::Index m = std::min(kTile, n - s);
        const auto dseg = du.segment(b + s, m);
        g(0) += dseg.sum();
        g.segment(1, nl).noalias() += acts.back().middleCols(s, m) * dseg;
        delta.noalias() = params.linear.tail(nl) * dseg.transpose();
        delta = (acts.back().middleCols(s, m).array() > 0.0).select(delta, 0.0);
        for (int k = depth - 1; k >= 0; --k) {
          if (k == 0) {
            gw[k].noalias() += delta * points_.middleCols(b + s, m).transpose();
          } else {
            gw[k].noalias() += delta * acts[k - 1].middleCols(s, m).transpose();
          }
          gb[k] += delta.rowwise().sum();
          if (k > 0) {
            next.noalias() = params.layers[k].weights.transpose() * delta;
            delta = (acts[k - 1].middleCols(s, m).array() > 0.0).select(next, 0.0);
          }
        }
      }
      Eigen::Index p = params.linear.size();
      for (int k = 0; k < depth; ++k) {
        for (Eigen::Index i = 0; i < gw[k].rows(); ++i) {
          g(p++) = gb[k](i);
          for (Eigen::Index j = 0; j < gw[k].cols(); ++j) g(p++) = gw[k](i, j);
        }
      }
      partial[c] = std::move(g);
    });
    Eigen::VectorXd total = partial[0];
    for (int c = 1; c < nchunks; ++c) total += partial[c];
    return total;
  }

  // Last hidden layer post-activations, n_l x P (valid after forward()).
  Eigen::MatrixXd last_hidden() const {
    const Eigen::Index rows = caches_[0].back().rows();
    Eigen::MatrixXd out(rows, size());
    for (int c = 0; c < num_chunks(); ++c) out.middleCols(bounds_[c], bounds_[c + 1] - bounds_[c]) = caches_[c].back();
    return out;
  }

  // First hidden layer post-activations, n_1 x P (valid after forward()).
  Eigen::MatrixXd first_hidden() const {
    const Eigen::Index rows = caches_[0].front().rows();
    Eigen::MatrixXd out(rows, size());
    for (int c = 0; c < num_chunks(); ++c) out.middleCols(bounds_[c], bounds_[c + 1] - bounds_[c]) = caches_[c].front();
    return out;
  }

  // Smallest |pre-activation| over all neurons and points; used to find
  // parameter points away from kinks.
  double min_abs_preactivation(const NetworkParams& params) const {
    double m = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < size(); ++j) {
      Eigen::VectorXd a = points_.col(j);
      for (const auto& L : params.layers) {
        Eigen::VectorXd z = L.weights * a + L.biases;
        m = std::min(m, z.cwiseAbs().minCoeff());
        a = z.cwiseMax(0.0);
      }
    }
    return m;
  }

 private:
  static constexpr Eigen::Index kTile = 256;

  int num_chunks() const { return static_cast<int>(caches_.size()); }

  Eigen::MatrixXd points_;
  int threads_ = 1;
  std::vector<Eigen::Index> bounds_;
  std::vector<std::vector<Eigen::MatrixXd>> caches_;
  Eigen::VectorXd u_;
};

}  // namespace lsnn
