#include <gtest/gtest.h>

#include <cmath>

#include "lsnn/mesh.hpp"
#include "lsnn/problems.hpp"

using namespace lsnn;

TEST(UniformMesh, CountsAndVolume) {
  const auto m = build_uniform_mesh(BoxDomain::make({0, 0}, {1, 0.5}), 0.1);
  EXPECT_EQ(m.cells.size(), 50u);
  EXPECT_NEAR(m.total_volume(), 0.5, 1e-14);
  EXPECT_FALSE(m.steps_adjusted);
  EXPECT_NEAR(m.min_extent(), 0.1, 1e-14);
  // 2 * (10 + 5) boundary faces, all unclassified.
  EXPECT_EQ(m.other_faces.size(), 30u);
}

TEST(UniformMesh, NonDividingStepIsShrunk) {
  const auto m = build_uniform_mesh(BoxDomain::make({0}, {1}), 0.3);
  EXPECT_TRUE(m.steps_adjusted);
  EXPECT_EQ(m.cells.size(), 4u);
  EXPECT_NEAR(m.steps[0], 0.25, 1e-15);
  EXPECT_EQ(m.cells.back().hi(0), 1.0);
}

TEST(UniformMesh, RejectsBadInput) {
  EXPECT_THROW(build_uniform_mesh(BoxDomain::make({0, 0}, {1, 1}), std::vector<double>{0.1}), ShapeError);
  EXPECT_THROW(build_uniform_mesh(BoxDomain::make({0, 0}, {1, 1}), -0.1), ParameterError);
  EXPECT_THROW(build_uniform_mesh(BoxDomain::make({0, 0}, {0, 1}), 0.1), std::exception);
}

TEST(Quadrature, InteriorIntegratesBilinearExactly) {
  auto m = build_uniform_mesh(BoxDomain::make({0, 0}, {1, 2}), 0.25);
  set_interior_subdivisions(m, {3, 2, 1, 1});
  double s = 0.0;
  for (const auto& c : m.cells) s += cell_integral(c, [](const Point& x) { return x(0) * x(1) + 1.0; });
  EXPECT_NEAR(s, 0.5 * 2.0 + 2.0, 1e-12);
  EXPECT_EQ(m.cells[0].quad_points.size(), 6u);
}

TEST(Quadrature, FaceRules) {
  Cell c;
  c.lo = make_point({0.0, 0.0, 0.0});
  c.hi = make_point({1.0, 2.0, 1.0});
  const Face f{0, 1};
  auto quad = [](const Point& x) { return x(1) * x(1) + x(2); };
  // Exact over {1} x [0,2] x [0,1]: 8/3 + 1.
  const double exact = 8.0 / 3.0 + 1.0;
  const double mid = face_integral(c, f, QuadRule{}, quad);
  EXPECT_NEAR(mid, 2.0 * (1.0 + 0.5), 1e-14);
  const double cm = face_integral(c, f, QuadRule::composite(QuadKind::CompositeMidpoint, {1, 64, 64}), quad);
  const double ct = face_integral(c, f, QuadRule::composite(QuadKind::CompositeTrapezoid, {1, 64, 64}), quad);
  EXPECT_NEAR(cm, exact, 1e-3);
  EXPECT_NEAR(ct, exact, 1e-3);
  EXPECT_LT(cm, exact);
  EXPECT_GT(ct, exact);
  EXPECT_EQ(face_quadrature(c, f, QuadRule::composite(QuadKind::CompositeTrapezoid, {1, 2, 3})).size(), 12u);
  // Node on the face plane.
  for (const auto& q : face_quadrature(c, f, QuadRule{})) EXPECT_EQ(q.x(0), 1.0);
}

TEST(Quadrature, KindNames) {
  EXPECT_EQ(quad_kind_from_string("trapezoid"), QuadKind::CompositeTrapezoid);
  EXPECT_EQ(quad_kind_from_string("composite_midpoint"), QuadKind::CompositeMidpoint);
  EXPECT_EQ(quad_kind_from_string(to_string(QuadKind::Midpoint)), QuadKind::Midpoint);
  EXPECT_THROW(quad_kind_from_string("simpson"), std::exception);
}

TEST(ControlVolumes, TileTheCell) {
  Cell c;
  c.lo = make_point({0.0, 1.0});
  c.hi = make_point({0.3, 1.5});
  const auto cvs = control_volumes(c, {3, 4, 1, 1});
  ASSERT_EQ(cvs.size(), 12u);
  double v = 0.0;
  for (const auto& cv : cvs) v += cv.volume();
  EXPECT_NEAR(v, c.volume(), 1e-15);
  EXPECT_EQ(cvs.back().hi(0), 0.3);
  EXPECT_EQ(cvs.back().hi(1), 1.5);
}

TEST(Locate, ClosedOpenWithTopBoundary) {
  const auto m = build_uniform_mesh(BoxDomain::make({0, 0}, {1, 1}), 0.5);
  const int a = m.locate(make_point({0.5, 0.25}));
  ASSERT_GE(a, 0);
  EXPECT_EQ(m.cells[a].lo(0), 0.5);
  const int b = m.locate(make_point({1.0, 1.0}));
  ASSERT_GE(b, 0);
  EXPECT_EQ(m.cells[b].hi(0), 1.0);
  EXPECT_EQ(m.cells[b].hi(1), 1.0);
  EXPECT_EQ(m.locate(make_point({1.1, 0.5})), -1);
}

TEST(RayExit, PointLiesExactlyOnTheFace) {
  // Backward characteristics of the curved 6.1 field leave through x = 0; the
  // exit point must sit on the face bitwise so branch data picks the right side.
  auto p = problem_advection_6_1();
  for (double y = 0.21; y < 1.0; y += 0.0137) {
    const Point x = make_point({0.013, y});
    const Point e = ray_exit_point(p.problem.domain, x, Point(-p.problem.beta(x)));
    EXPECT_EQ(e(0), 0.0);
    EXPECT_EQ(p.problem.g(e), e(1) + 2.0);
  }
}

TEST(FaceClassification, Advection61) {
  auto p = problem_advection_6_1();
  const auto m = classify_faces(build_uniform_mesh(p.problem.domain, 0.1), p.problem);
  // Inflow: x = 0 (10 faces) and y = 0 (beta_y = 2x/|.| > 0 at face centroids).
  EXPECT_EQ(m.inflow_faces.size(), 20u);
  for (const auto& r : m.inflow_faces) {
    const Point c = m.cells[r.cell].face_centroid(r.face);
    EXPECT_TRUE(c(0) == 0.0 || c(1) == 0.0);
  }
  EXPECT_TRUE(m.initial_faces.empty());
}

TEST(FaceClassification, RiemannQuartic) {
  auto rp = problem_riemann_quartic();
  const auto m = classify_faces(build_uniform_mesh(time_block(rp.problem, 0.0, 0.2).spacetime, 0.1), rp.problem);
  // Left face (u = 1, speed 1) is inflow; right face (speed 0) is not; t = 0 is initial.
  EXPECT_EQ(m.inflow_faces.size(), 2u);
  EXPECT_EQ(m.initial_faces.size(), 20u);
  for (const auto& r : m.inflow_faces) EXPECT_EQ(m.cells[r.cell].lo(0), -1.0);
}

TEST(FaceClassification, DegenerateFieldThrows) {
  LinearProblem lp;
  lp.domain = BoxDomain::make({0, 0}, {1, 1});
  lp.beta = [](const Point& x) { return make_point({x(0) - 0.05, 0.0}); };
  lp.gamma = lp.f = lp.g = [](const Point&) { return 0.0; };
  EXPECT_THROW(classify_faces(build_uniform_mesh(lp.domain, 0.1), lp), DegenerateFaceError);
}

TEST(Refine, ChildrenReplaceParentAndFacesFollow) {
  auto p = problem_advection_6_1();
  const auto m = classify_faces(build_uniform_mesh(p.problem.domain, 0.25), p.problem);
  const auto r = refine_cells(m, {0, 5});
  EXPECT_EQ(r.cells.size(), 16u + 6u);
  EXPECT_NEAR(r.total_volume(), 1.0, 1e-14);
  EXPECT_EQ(r.cells[0].level, 1);
  EXPECT_EQ(r.cells[4].level, 0);
  // Cell 0 touches both inflow sides: 2 faces become 4.
  EXPECT_EQ(r.inflow_faces.size(), m.inflow_faces.size() + 2);
  EXPECT_THROW(refine_cells(m, {99}), ParameterError);
}

TEST(Marking, BulkAndAverage) {
  Eigen::VectorXd eta(5);
  eta << 1.0, 3.0, 0.5, 2.0, 0.1;
  // Squares 9, 4, 1, 0.25, 0.01; total 14.26, half is 7.13: cell 1 alone suffices.
  EXPECT_EQ(mark_cells(eta, {MarkKind::Bulk, 0.5}), std::vector<int>{1});
  EXPECT_EQ(mark_cells(eta, {MarkKind::Bulk, 0.7}), (std::vector<int>{1, 3}));
  EXPECT_EQ(mark_cells(eta, {MarkKind::Average, 0.0}), (std::vector<int>{1, 3}));
  EXPECT_THROW(mark_cells(eta, {MarkKind::Bulk, 0.0}), ParameterError);
}

TEST(Aqr, StopsWhenEstimatorStalls) {
  const auto m = build_uniform_mesh(BoxDomain::make({0}, {1}), 0.25);
  NetworkParams p = NetworkParams::zeros({1, {1}});
  int calls = 0;
  AqrTrain train = [&](const IntegrationMesh&, const NetworkParams*) {
    ++calls;
    return p;
  };
  // eta_K = |K|: refining halves the marked cells' contributions.
  AqrIndicator ind = [](const NetworkParams&, const IntegrationMesh& mm) {
    Eigen::VectorXd e(mm.cells.size());
    for (std::size_t i = 0; i < mm.cells.size(); ++i) e(i) = mm.cells[i].volume();
    return e;
  };
  const AqrResult r = aqr(m, train, ind, 0.9, 5, {MarkKind::Bulk, 1.0});
  // Refining all cells halves eta each round: every round is accepted.
  EXPECT_EQ(r.accepted_rounds, 5);
  EXPECT_EQ(calls, 6);
  for (std::size_t k = 1; k < r.rounds.size(); ++k) EXPECT_NEAR(r.rounds[k].eta, r.rounds[k - 1].eta / std::sqrt(2.0), 1e-12);
  const AqrResult s = aqr(m, train, ind, 0.5, 5, {MarkKind::Bulk, 1.0});
  EXPECT_EQ(s.accepted_rounds, 0);
  EXPECT_FALSE(s.rounds.back().accepted);
  EXPECT_THROW(aqr(m, train, ind, 1.5, 1), ParameterError);
}
