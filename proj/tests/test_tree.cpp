#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "pbds/tree.hpp"
#include "support/oracles.hpp"

using namespace pbds;

namespace {

Vector v2(double a, double b) { return (Vector(2) << a, b).finished(); }
Vector v3(double a, double b, double c) { return (Vector(3) << a, b, c).finished(); }

TaskNode leaf(std::string name, TaskMap map, ChartPtr chart, Matrix w, SecondOrderDS ds) {
  TaskNode n;
  n.name = std::move(name);
  n.map = std::move(map);
  n.chart = std::move(chart);
  n.weight = std::move(w);
  n.payload = std::move(ds);
  return n;
}

TaskNode internal(std::string name, TaskMap map, ChartPtr chart, Matrix w, std::vector<TaskNode> children) {
  TaskNode n;
  n.name = std::move(name);
  n.map = std::move(map);
  n.chart = std::move(chart);
  n.weight = std::move(w);
  n.payload = std::move(children);
  return n;
}

SecondOrderDS euclid_ds(int d, Vector target, double gain, double damping) {
  return {make_euclidean(d), quadratic_potential(std::move(target), gain),
          damping > 0 ? metric_damping(damping) : zero_dissipation()};
}

Matrix eye(int d) { return Matrix::Identity(d, d); }

}  // namespace

// ---------------------------------------------------------------------------
// Task maps

TEST(TaskMap, JacobiansMatchFiniteDifferences) {
  std::mt19937_64 rng(31);
  const auto sph = make_sphere_spherical();
  const Vector c = v3(0.1, -0.2, 0.3);
  std::vector<TaskMap> maps{sphere_retraction_map(sph, c, 0.6), radial_distance_map(c),
                            linear_map(oracle::random_matrix(rng, 2, 3), oracle::random_vector(rng, 2))};
  for (const auto& m : maps) {
    for (int k = 0; k < 50; ++k) {
      // Unit-speed directions, away from the spherical chart's polar axis.
      Vector q = c + v3(0.5, 0.4, 0.0) + 0.15 * oracle::random_vector(rng, 3);
      while ((q - c).head(2).norm() < 0.3) q = c + v3(0.5, 0.4, 0.0) + 0.15 * oracle::random_vector(rng, 3);
      const Vector qd = oracle::random_vector(rng, 3).normalized();
      const MapEval e = m.evaluate(q, qd);
      EXPECT_LT((e.value - m.value(q)).norm(), 1e-14) << m.kind;
      EXPECT_LT((e.J - oracle::fd_jacobian(m.value, q)).cwiseAbs().maxCoeff(), 1e-5) << m.kind;
      EXPECT_LT((e.Jdot - oracle::fd_jacobian_dot(m.value, q, qd)).cwiseAbs().maxCoeff(), 1e-4) << m.kind;
      // Directional check from the task-map invariant.
      const double h = 1e-6;
      const Matrix fwd = (m.jacobian(q + h * qd) - m.jacobian(q)) / h;
      EXPECT_LT((e.Jdot - fwd).cwiseAbs().maxCoeff(), 1e-4) << m.kind;
    }
  }
}

TEST(TaskMap, ObstacleDistanceIsGeodesicClearance) {
  const auto sph = make_sphere_spherical();
  const Vector o = v3(1.0, 0.0, 0.05);
  const TaskMap m = obstacle_distance_map(sph, o, 0.15);
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(0.3, 2.8);
  for (int k = 0; k < 30; ++k) {
    const Vector x = v2(u(rng), u(rng) - 1.5);
    const double expect = oracle::geodesic_distance(sph->embed(x), o.normalized()) - 0.15;
    EXPECT_NEAR(m.value(x)[0], expect, 1e-12);
    const Vector xd = oracle::random_vector(rng, 2);
    EXPECT_LT((m.evaluate(x, xd).J - oracle::fd_jacobian(m.value, x)).cwiseAbs().maxCoeff(), 1e-5);
  }
  EXPECT_THROW(obstacle_distance_map(sph, o, -0.1), std::invalid_argument);
  EXPECT_THROW(obstacle_distance_map(make_euclidean(2), o, 0.1), std::invalid_argument);
}

TEST(TaskMap, ChainRule) {
  std::mt19937_64 rng(33);
  const auto sph = make_sphere_stereographic();
  const TaskMap inner = linear_map(oracle::random_matrix(rng, 3, 4), v3(0.5, 0.5, 0.5));
  const TaskMap outer = sphere_retraction_map(sph, Vector::Zero(3), 1.0);
  const TaskMap both = compose(outer, inner);
  const Matrix a = inner.jacobian(Vector::Zero(4));
  // The same composite differentiated in one hyper-dual pass.
  const TaskMap direct = make_task_map(4, 2, "direct", [sph, a](const auto& q) {
    using S = typename std::decay_t<decltype(q)>::Scalar;
    const VectorX<S> p = a.cast<S>() * q + Eigen::Vector3d(0.5, 0.5, 0.5).cast<S>();
    return sph->retract(p);
  });
  for (int k = 0; k < 30; ++k) {
    const Vector q = 0.1 * oracle::random_vector(rng, 4);
    const Vector qd = oracle::random_vector(rng, 4).normalized();
    const MapEval ei = inner.evaluate(q, qd);
    const MapEval eo = outer.evaluate(ei.value, ei.J * qd);
    const MapEval e = both.evaluate(q, qd);
    const MapEval d = direct.evaluate(q, qd);
    EXPECT_LT((e.J - eo.J * ei.J).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((e.J - d.J).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((e.Jdot - d.Jdot).cwiseAbs().maxCoeff(), 1e-10);
    const double scale = std::max(1.0, e.Jdot.cwiseAbs().maxCoeff());
    EXPECT_LT((e.Jdot - oracle::fd_jacobian_dot(both.value, q, qd)).cwiseAbs().maxCoeff() / scale, 1e-4);
  }
  EXPECT_THROW(compose(outer, identity_map(2)), DimensionError);
}

TEST(TaskMap, DimensionChecks) {
  EXPECT_THROW(radial_distance_map(v3(0, 0, 0)).value(Vector::Zero(2)), DimensionError);
  EXPECT_THROW(linear_map(Matrix::Identity(2, 2), Vector::Zero(3)), DimensionError);
  EXPECT_THROW(sphere_retraction_map(make_sphere_spherical(), Vector::Zero(3), 0.0), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// pullback_rhs

TEST(Pullback, IdentityReducesToTheDs) {
  const TaskNode n = leaf("x", identity_map(2), make_euclidean(2), eye(2), euclid_ds(2, Vector::Zero(2), 1.0, 0.0));
  const PulledTerm t = pullback_rhs(n, {v2(1, 0), v2(0, 0)});
  EXPECT_EQ(t.J, eye(2));
  EXPECT_LT((t.b - v2(-1, 0)).norm(), 1e-15);
  EXPECT_EQ(t.W, eye(2));
}

TEST(Pullback, LinearMapExample) {
  Matrix a(2, 2);
  a << 1, 1, 1, -1;
  const TaskMap m = linear_map(a, Vector::Zero(2));
  const TaskNode n = leaf("x", m, make_euclidean(2), eye(2), euclid_ds(2, Vector::Zero(2), 1.0, 0.0));
  const PulledTerm t = pullback_rhs(n, {v2(1, 0), v2(0, 0)});
  EXPECT_EQ(t.J, a);
  EXPECT_LT((t.J - oracle::fd_jacobian(m.value, v2(1, 0))).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((t.b - v2(-1, -1)).norm(), 1e-15);
}

TEST(Pullback, VanishesAtRestAtACriticalPoint) {
  const auto sph = make_sphere_spherical();
  const Vector target = v3(0.6, 0.8, 0.0);
  const TaskNode n = leaf("s", sphere_retraction_map(sph, Vector::Zero(3), 1.0), sph, eye(2),
                          {sph, geodesic_quadratic_potential(target, 5.0), metric_damping(3.0)});
  const PulledTerm t = pullback_rhs(n, {2.0 * target, Vector::Zero(3)});
  EXPECT_LT(t.b.norm(), 1e-12);
}

TEST(Pullback, LeafRhsFormula) {
  // b = −H⁻¹(∇φ + D J q̇) − J̇q̇ − Ξ(Jq̇), checked against independent pieces.
  std::mt19937_64 rng(34);
  const auto sph = make_sphere_spherical();
  const SecondOrderDS ds{sph, geodesic_quadratic_potential(v3(0, 1, 0), 2.0), metric_damping(1.5)};
  const TaskMap m = sphere_retraction_map(sph, Vector::Zero(3), 1.0);
  const TaskNode n = leaf("s", m, sph, eye(2), ds);
  for (int k = 0; k < 10; ++k) {
    const Vector q = v3(0.8, 0.3, 0.2) + 0.1 * oracle::random_vector(rng, 3);
    const Vector qd = oracle::random_vector(rng, 3);
    const Vector x = m.value(q);
    const Matrix J = oracle::fd_jacobian(m.value, q);
    const Vector xd = J * qd;
    const Matrix H = oracle::induced_metric([&](const Vector& y) { return sph->embed(y); }, x);
    const auto gam = oracle::levi_civita([&](const Vector& y) { return sph->metric(y); }, x);
    Vector xi(2);
    for (int a = 0; a < 2; ++a) xi[a] = xd.dot(gam[a] * xd);
    const Vector expect = -H.ldlt().solve(ds.potential.gradient(*sph, x) + 1.5 * H * xd) -
                          oracle::fd_jacobian_dot(m.value, q, qd) * qd - xi;
    EXPECT_LT((pullback_rhs(n, {q, qd}).b - expect).cwiseAbs().maxCoeff(), 1e-4);
  }
}

// ---------------------------------------------------------------------------
// combine

TEST(Combine, TrivialCases) {
  const Vector b = v3(1, -2, 0.5);
  EXPECT_LT((combine({{eye(3), b, eye(3)}}, 3, 0.0) - b).norm(), 1e-14);
  EXPECT_LT((combine({{eye(3), b, eye(3)}, {eye(3), b, eye(3)}}, 3, 0.0) - b).norm(), 1e-14);
  // Default regularisation is tiny relative to the Gram scale.
  EXPECT_LT((combine({{eye(3), b, eye(3)}}, 3, std::nullopt) - b).norm(), 1e-8);
}

TEST(Combine, MatchesStackedLeastSquares) {
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<PulledTerm> terms;
    std::vector<oracle::WlsTerm> ot;
    for (int i = 0; i < 3; ++i) {
      const Matrix r = oracle::random_matrix(rng, 2, 2);
      const Matrix w = r * r.transpose() + 0.1 * eye(2);
      terms.push_back({oracle::random_matrix(rng, 2, 3), oracle::random_vector(rng, 2), w});
      ot.push_back({terms.back().J, terms.back().b, w});
    }
    const Vector got = combine(terms, 3, 0.0);
    const Vector ref = oracle::stacked_wls(ot, 3, 0.0);
    EXPECT_LE((got - ref).norm() / std::max(1.0, ref.norm()), 1e-8);
    const Vector got_l = combine(terms, 3, 0.3);
    const Vector ref_l = oracle::stacked_wls(ot, 3, 0.3);
    EXPECT_LE((got_l - ref_l).norm() / std::max(1.0, ref_l.norm()), 1e-8);
  }
}

TEST(Combine, IsAMinimizer) {
  std::mt19937_64 rng(36);
  std::vector<PulledTerm> terms;
  for (int i = 0; i < 3; ++i) terms.push_back({oracle::random_matrix(rng, 2, 3), oracle::random_vector(rng, 2), eye(2)});
  const Vector z = combine(terms, 3, 0.0);
  auto cost = [&](const Vector& q) {
    double c = 0.0;
    for (const auto& t : terms) c += (t.J * q - t.b).dot(t.W * (t.J * q - t.b));
    return c;
  };
  for (int k = 0; k < 100; ++k) {
    const Vector d = oracle::random_vector(rng, 3).normalized() * 1e-3;
    EXPECT_GE(cost(z + d), cost(z) - 1e-15);
  }
}

TEST(Combine, WeightScalingInvariance) {
  std::mt19937_64 rng(37);
  std::vector<PulledTerm> terms, scaled;
  for (int i = 0; i < 3; ++i) {
    terms.push_back({oracle::random_matrix(rng, 2, 3), oracle::random_vector(rng, 2), eye(2)});
    scaled.push_back({terms.back().J, terms.back().b, 7.5 * eye(2)});
  }
  const Vector a = combine(terms, 3, 0.0);
  EXPECT_LE((combine(scaled, 3, 0.0) - a).norm() / a.norm(), 1e-10);
}

TEST(Combine, SingularGramRaisesWithoutRegularization) {
  Matrix j(1, 2);
  j << 1, 0;
  const std::vector<PulledTerm> terms{{j, Vector::Ones(1), Matrix::Ones(1, 1)}};
  EXPECT_THROW(combine(terms, 2, 0.0), SingularGramError);
  // A zero weight drops a term entirely.
  EXPECT_THROW(combine({{eye(2), v2(1, 1), Matrix::Zero(2, 2)}}, 2, 0.0), SingularGramError);
  const Vector r = combine(terms, 2, 1e-6);
  EXPECT_NEAR(r[1], 0.0, 1e-15);
  EXPECT_NEAR(r[0], 1.0, 1e-5);
  EXPECT_THROW(combine(terms, 2, -1.0), std::invalid_argument);
  EXPECT_THROW(combine({{eye(3), v2(1, 1), eye(2)}}, 2, 0.0), DimensionError);
}

// ---------------------------------------------------------------------------
// resolve_tree

TEST(ResolveTree, DepthOneEqualsLeafDs) {
  const auto ds = euclid_ds(2, v2(0.3, -0.2), 4.0, 2.0);
  PbdsTree tree{2, {leaf("x", identity_map(2), make_euclidean(2), eye(2), ds)}, 0.0};
  const DsState s{v2(1.0, 0.5), v2(-0.3, 0.2)};
  EXPECT_LT((resolve_tree(tree, s) - geometric_acceleration(ds, s)).norm(), 1e-14);
}

TEST(ResolveTree, IdentityChainEqualsLeafDs) {
  const auto ds = euclid_ds(2, v2(0.3, -0.2), 4.0, 2.0);
  std::vector<TaskNode> inner{leaf("t", identity_map(2), make_euclidean(2), eye(2), ds)};
  PbdsTree tree{2, {internal("x", identity_map(2), make_euclidean(2), eye(2), inner)}, 0.0};
  const DsState s{v2(1.0, 0.5), v2(-0.3, 0.2)};
  EXPECT_LT((resolve_tree(tree, s) - geometric_acceleration(ds, s)).norm(), 1e-14);
}

TEST(ResolveTree, NestedSphereBundleEqualsFlatComposition) {
  // Base R² lifted affinely into R³, then retracted onto S² (a local
  // diffeomorphism), with attractor, damping and obstacle tasks on the sphere.
  const auto sph = make_sphere_spherical();
  Matrix a(3, 2);
  a << 1.0, 0.2, 0.1, 1.0, 0.0, 0.3;
  const TaskMap to_sphere = compose(sphere_retraction_map(sph, Vector::Zero(3), 1.0), linear_map(a, v3(0.6, 0.2, 0.1)));
  const Vector obstacle = v3(1.0, 0.0, 0.5);
  std::vector<TaskNode> kids{
      leaf("potential", identity_map(2), sph, eye(2), {sph, geodesic_quadratic_potential(v3(0, 1, 0), 8.0), zero_dissipation()}),
      leaf("damping", identity_map(2), sph, eye(2), {sph, zero_potential(), metric_damping(8.0)}),
      leaf("obstacle", obstacle_distance_map(sph, obstacle, 0.05), make_half_line(4.0, 0.05), 2.0 * eye(1),
           {make_half_line(4.0, 0.05), barrier_potential(1e-3, 0.6), constant_damping(2.0 * eye(1))})};
  PbdsTree nested{2, {internal("sphere", to_sphere, sph, eye(2), kids)}, 0.0};
  PbdsTree flat{2, {}, 0.0};
  for (const auto& k : kids) {
    TaskNode f = k;
    f.map = compose(k.map, to_sphere);
    flat.children.push_back(f);
  }
  std::mt19937_64 rng(38);
  for (int trial = 0; trial < 20; ++trial) {
    const DsState s{0.1 * oracle::random_vector(rng, 2), oracle::random_vector(rng, 2)};
    const double clearance = obstacle_distance_map(sph, obstacle, 0.05).value(to_sphere.value(s.x))[0];
    ASSERT_GT(clearance, 0.0);
    const Vector n = resolve_tree(nested, s);
    const Vector f = resolve_tree(flat, s);
    EXPECT_LE((n - f).norm() / std::max(1.0, f.norm()), 1e-8);
  }
}

TEST(ResolveTree, ZeroFixedPoint) {
  const auto sph = make_sphere_spherical();
  const Vector target = v3(0.0, 0.0, 0.0);
  std::vector<TaskNode> kids{
      leaf("s", sphere_retraction_map(sph, target, 0.5), sph, eye(2),
           {sph, geodesic_quadratic_potential(v3(1, 0, 0), 3.0), metric_damping(2.0)}),
      leaf("r", radial_distance_map(target), make_euclidean(1), eye(1), euclid_ds(1, Vector::Constant(1, 0.5), 5.0, 1.0))};
  PbdsTree tree{3, {internal("ee", identity_map(3), make_euclidean(3), eye(3), kids)}, std::nullopt};
  const Vector q = resolve_tree(tree, {v3(0.5, 0, 0), Vector::Zero(3)});
  EXPECT_LE(q.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ResolveTree, DomainErrorsNameTheNode) {
  const auto sph = make_sphere_spherical();
  std::vector<TaskNode> kids{leaf("sphere", sphere_retraction_map(sph, Vector::Zero(3), 1.0), sph, eye(2),
                                  {sph, zero_potential(), zero_dissipation()}),
                             leaf("pos", identity_map(3), make_euclidean(3), eye(3), euclid_ds(3, Vector::Zero(3), 1.0, 1.0))};
  PbdsTree tree{3, {internal("ee", identity_map(3), make_euclidean(3), eye(3), kids)}, 0.0};
  try {
    resolve_tree(tree, {v3(0, 0, 1), Vector::Zero(3)});
    FAIL() << "expected a domain error";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("ee/sphere"), std::string::npos) << e.what();
  }
  EXPECT_THROW(resolve_tree(tree, {Vector::Zero(2), Vector::Zero(2)}), DimensionError);
}

TEST(ResolveTree, DetailedMatchesPlainAndExposesPrimary) {
  Matrix a(2, 3);
  a << 1, 0.5, 0, 0, 1, -0.5;
  PbdsTree tree{3,
                {leaf("task", linear_map(a, Vector::Zero(2)), make_euclidean(2), eye(2), euclid_ds(2, v2(1, 1), 2.0, 1.0)),
                 leaf("posture", identity_map(3), make_euclidean(3), 0.01 * eye(3), euclid_ds(3, Vector::Zero(3), 0.0, 1.0))},
                std::nullopt};
  const DsState s{v3(0.1, 0.2, 0.3), v3(0.5, -0.5, 0.1)};
  const TreeResolution r = resolve_tree_detailed(tree, s);
  EXPECT_LT((r.qdd_desired - resolve_tree(tree, s)).norm(), 1e-15);
  ASSERT_EQ(r.root_terms.size(), 2u);
  EXPECT_EQ(r.primary_J, a);
  const SecondOrderDS ds = euclid_ds(2, v2(1, 1), 2.0, 1.0);
  EXPECT_LT((r.primary_accel - geometric_acceleration(ds, {a * s.x, a * s.v})).norm(), 1e-14);
  EXPECT_EQ(obstacle_count(tree), 0u);
}

TEST(ResolveTree, ObstacleClearances) {
  const auto sph = make_sphere_spherical();
  const auto hl = make_half_line();
  std::vector<TaskNode> kids{leaf("o0", obstacle_distance_map(sph, v3(1, 0, 0), 0.1), hl, eye(1),
                                  {hl, barrier_potential(1e-3, 0.2), zero_dissipation()}),
                             leaf("o1", obstacle_distance_map(sph, v3(0, 1, 0), 0.2), hl, eye(1),
                                  {hl, barrier_potential(1e-3, 0.2), zero_dissipation()})};
  kids[0].clearance_scale = 0.5;
  kids[1].clearance_scale = 0.5;
  PbdsTree tree{3, {internal("s", sphere_retraction_map(sph, Vector::Zero(3), 1.0), sph, eye(2), kids)}, 0.0};
  const Vector p = v3(std::cos(0.5), std::sin(0.5), 0.0);
  const auto d = obstacle_clearances(tree, {p, Vector::Zero(3)});
  ASSERT_EQ(d.size(), 2u);
  EXPECT_NEAR(d[0], 0.5 * (0.5 - 0.1), 1e-12);
  EXPECT_NEAR(d[1], 0.5 * (std::numbers::pi / 2 - 0.5 - 0.2), 1e-12);
  EXPECT_EQ(obstacle_count(tree), 2u);
}
