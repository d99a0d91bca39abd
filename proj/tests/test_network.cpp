#include <gtest/gtest.h>

#include <random>

#include "lsnn/batch.hpp"
#include "lsnn/network.hpp"
#include "lsnn/serialization.hpp"

using namespace lsnn;

namespace {

NetworkParams random_params(const NetworkArchitecture& arch, std::uint64_t seed) {
  NetworkParams p = NetworkParams::zeros(arch);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  Eigen::VectorXd v(p.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = U(rng);
  p.assign(v);
  return p;
}

// Independent scalar forward pass.
double reference_eval(const NetworkParams& p, const std::vector<double>& x) {
  std::vector<double> a = x;
  for (const auto& L : p.layers) {
    std::vector<double> z(L.weights.rows());
    for (Eigen::Index i = 0; i < L.weights.rows(); ++i) {
      double s = L.biases(i);
      for (Eigen::Index j = 0; j < L.weights.cols(); ++j) s += L.weights(i, j) * a[j];
      z[i] = s > 0.0 ? s : 0.0;
    }
    a = z;
  }
  double u = p.linear(0);
  for (std::size_t i = 0; i < a.size(); ++i) u += p.linear(i + 1) * a[i];
  return u;
}

}  // namespace

TEST(Architecture, ParameterCounts) {
  // 2-60-60-1: 60*3 + 60*61 + 61.
  EXPECT_EQ(count_parameters({2, {60, 60}}), 3901);
  EXPECT_EQ(count_parameters_unit_sphere({2, {60, 60}}), 3841);
  EXPECT_EQ(count_parameters({2, {10, 10}}), 30 + 110 + 11);
  EXPECT_EQ(count_parameters({3, {24, 24, 24}}), 24 * 4 + 2 * 24 * 25 + 25);
  EXPECT_EQ(count_parameters({1, {3}}), 6 + 4);
}

TEST(Architecture, RejectsBadShapes) {
  EXPECT_THROW(NetworkArchitecture({0, {3}}).validate(), std::exception);
  EXPECT_THROW(NetworkArchitecture({2, {}}).validate(), std::exception);
  EXPECT_THROW(NetworkArchitecture({2, {3, 0}}).validate(), std::exception);
}

TEST(Params, FlattenAssignRoundTrip) {
  const NetworkParams p = random_params({3, {4, 5}}, 1);
  const Eigen::VectorXd v = p.flatten();
  ASSERT_EQ(v.size(), count_parameters(p.arch));
  EXPECT_EQ(v(0), p.linear(0));
  // First neuron of layer 1 follows the linear block as (b, w).
  EXPECT_EQ(v(p.linear.size()), p.layers[0].biases(0));
  EXPECT_EQ(v(p.linear.size() + 1), p.layers[0].weights(0, 0));
  const NetworkParams q = p.with_flat(v);
  EXPECT_EQ(q.flatten(), v);
  EXPECT_THROW(NetworkParams::zeros(p.arch).assign(Eigen::VectorXd::Zero(3)), ShapeError);
}

TEST(Params, ValidateCatchesMismatch) {
  NetworkParams p = NetworkParams::zeros({2, {3}});
  p.linear.resize(2);
  EXPECT_THROW(p.validate(), ShapeError);
}

TEST(Evaluate, MatchesScalarReference) {
  const NetworkParams p = random_params({2, {7, 5, 3}}, 2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    const double x = U(rng), y = U(rng);
    EXPECT_NEAR(evaluate(p, make_point({x, y})), reference_eval(p, {x, y}), 1e-13);
  }
  EXPECT_THROW(evaluate(p, make_point({0.1, 0.2, 0.3})), ShapeError);
}

TEST(Evaluate, HiddenFeaturesIncludeConstant) {
  const NetworkParams p = random_params({2, {4}}, 4);
  const auto hf = hidden_features(p, make_point({0.3, -0.2}));
  ASSERT_EQ(hf.features.size(), 5);
  EXPECT_EQ(hf.features(0), 1.0);
  EXPECT_NEAR(hf.features.dot(p.linear), evaluate(p, make_point({0.3, -0.2})), 1e-14);
}

TEST(Heaviside, ZeroAtOrigin) {
  EXPECT_EQ(heaviside(0.0), 0.0);
  EXPECT_EQ(heaviside(1e-300), 1.0);
  EXPECT_EQ(relu(-2.0), 0.0);
}

TEST(StepFunctions, P1Shape) {
  const double eps = 0.05;
  const NetworkParams p = build_step_p1(make_point({1.0, 0.0}), 0.5, eps);
  EXPECT_EQ(p.arch.hidden_widths, std::vector<int>{2});
  EXPECT_NEAR(evaluate(p, make_point({0.5 - eps - 1e-3, 0.2})), 0.0, 1e-14);
  EXPECT_NEAR(evaluate(p, make_point({0.5, 0.2})), 0.5, 1e-14);
  EXPECT_NEAR(evaluate(p, make_point({0.5 + eps + 1e-3, 0.2})), 1.0, 1e-14);
}

TEST(StepFunctions, P2Shape) {
  const double eps = 0.05;
  const NetworkParams p = build_step_p2(make_point({0.0, 1.0}), 0.3, eps);
  EXPECT_EQ(p.arch.hidden_widths, (std::vector<int>{1, 1}));
  EXPECT_NEAR(evaluate(p, make_point({0.7, 0.29})), 0.0, 1e-14);
  EXPECT_NEAR(evaluate(p, make_point({0.7, 0.3 + eps / 2})), 0.5, 1e-12);
  EXPECT_NEAR(evaluate(p, make_point({0.7, 0.3 + eps + 1e-3})), 1.0, 1e-14);
}

TEST(StepFunctions, RejectBadArguments) {
  EXPECT_THROW(build_step_p1(make_point({1.0, 0.0}), 0.5, 0.0), ParameterError);
  EXPECT_THROW(build_step_p2(make_point({1.0, 1.0}), 0.5, 0.1), ParameterError);
}

TEST(Hyperplanes, UnitNormalsAndDegenerate) {
  NetworkParams p = NetworkParams::zeros({2, {3}});
  p.layers[0].weights << 3.0, 4.0, 0.0, 0.0, 0.0, -2.0;
  p.layers[0].biases << 5.0, 1.0, 1.0;
  const HyperplaneSet s = first_layer_hyperplanes(p);
  ASSERT_EQ(s.planes.size(), 2u);
  ASSERT_EQ(s.degenerate, std::vector<int>{1});
  EXPECT_NEAR(s.planes[0].normal(0), 0.6, 1e-15);
  EXPECT_NEAR(s.planes[0].offset, 1.0, 1e-15);
  EXPECT_EQ(s.planes[1].neuron, 2);
  EXPECT_NEAR(s.planes[1].offset, 0.5, 1e-15);
}

TEST(Hyperplanes, UnitSphereProjectionPreservesFunction) {
  for (const auto& arch : {NetworkArchitecture{2, {6}}, NetworkArchitecture{2, {6, 4}}}) {
    NetworkParams p = random_params(arch, 5);
    p.layers[0].weights *= 3.7;
    NetworkParams q = p;
    project_first_layer_to_unit_sphere(q);
    for (Eigen::Index i = 0; i < q.layers[0].weights.rows(); ++i) {
      EXPECT_NEAR(q.layers[0].weights.row(i).norm(), 1.0, 1e-14);
    }
    for (double x : {-0.8, -0.1, 0.4, 0.9}) {
      const Point pt = make_point({x, 0.5 * x + 0.1});
      EXPECT_NEAR(evaluate(p, pt), evaluate(q, pt), 1e-12);
    }
  }
}

TEST(Batch, ForwardMatchesPointwiseAcrossThreads) {
  const NetworkParams p = random_params({2, {8, 6}}, 6);
  Eigen::MatrixXd pts = Eigen::MatrixXd::Random(2, 101);
  BatchEvaluator e1(pts, 1), e3(pts, 3);
  const Eigen::VectorXd u1 = e1.forward(p);
  const Eigen::VectorXd u3 = e3.forward(p);
  for (Eigen::Index j = 0; j < pts.cols(); ++j) {
    EXPECT_NEAR(u1(j), evaluate(p, pts.col(j)), 1e-13);
    EXPECT_NEAR(u1(j), u3(j), 1e-14);
  }
}

TEST(Batch, BackwardMatchesFiniteDifferences) {
  const NetworkParams p = random_params({2, {5, 4}}, 7);
  Eigen::MatrixXd pts = Eigen::MatrixXd::Random(2, 30);
  Eigen::VectorXd du = Eigen::VectorXd::Random(30);
  BatchEvaluator ev(pts);
  ev.forward(p);
  const Eigen::VectorXd g = ev.backward(p, du);
  ASSERT_GT(ev.min_abs_preactivation(p), 1e-6);
  const Eigen::VectorXd x = p.flatten();
  const double h = 1e-7;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    BatchEvaluator e2(pts);
    const double fp = du.dot(e2.forward(p.with_flat(xp)));
    const double fm = du.dot(e2.forward(p.with_flat(xm)));
    EXPECT_NEAR(g(i), (fp - fm) / (2 * h), 1e-6 * std::max(1.0, std::abs(g(i))));
  }
}

TEST(Serialization, RoundTripIsBitwise) {
  const NetworkParams p = random_params({3, {4, 2}}, 8);
  const NetworkParams q = params_from_json(nlohmann::json::parse(params_to_json(p).dump()));
  EXPECT_EQ(q.arch, p.arch);
  EXPECT_EQ(q.flatten(), p.flatten());
}

TEST(Serialization, MalformedSnapshots) {
  nlohmann::json j = params_to_json(random_params({2, {3}}, 9));
  j["linear"].push_back(1.0);
  EXPECT_THROW(params_from_json(j), ShapeError);
  EXPECT_THROW(params_from_json(nlohmann::json::parse(R"({"arch": 3})")), ConfigError);
  EXPECT_THROW(load_params("/nonexistent/params.json"), ConfigError);
}
