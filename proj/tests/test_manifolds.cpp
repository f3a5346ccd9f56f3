#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "pbds/manifolds.hpp"
#include "support/oracles.hpp"

using namespace pbds;
using std::numbers::pi;

namespace {

Vector v2(double a, double b) { return (Vector(2) << a, b).finished(); }
Vector v3(double a, double b, double c) { return (Vector(3) << a, b, c).finished(); }

std::vector<ChartPtr> all_charts() {
  return {make_euclidean(2), make_euclidean(3), make_sphere_spherical(), make_sphere_stereographic(),
          make_half_line(4.0, 0.05), make_half_line()};
}

// Random point well inside the domain of a built-in chart.
Vector interior_point(const Chart& c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector x(c.dim());
  switch (c.kind()) {
    case ChartKind::euclidean:
    case ChartKind::sphere_stereographic:
      for (int i = 0; i < c.dim(); ++i) x[i] = 4.0 * u(rng) - 2.0;
      break;
    case ChartKind::sphere_spherical:
      x[0] = 0.1 + (pi - 0.2) * u(rng);
      x[1] = -pi + 2.0 * pi * u(rng);
      break;
    case ChartKind::half_line:
      x[0] = 0.01 + 2.0 * u(rng);
      break;
  }
  return x;
}

}  // namespace

TEST(Metric, EuclideanIsIdentity) {
  const auto c = make_euclidean(2);
  EXPECT_TRUE(metric_at(*c, v2(0.3, -1.2)).isApprox(Matrix::Identity(2, 2), 0.0));
}

TEST(Metric, SphericalMatchesEmbeddingPullback) {
  const auto c = make_sphere_spherical();
  for (const Vector& x : {v2(pi / 2, 0.0), v2(pi / 4, 1.0)}) {
    const Matrix oracle = oracle::induced_metric([&](const Vector& y) { return c->embed(y); }, x);
    EXPECT_LT((metric_at(*c, x) - oracle).cwiseAbs().maxCoeff(), 1e-8);
  }
  EXPECT_NEAR(metric_at(*c, v2(pi / 2, 0.0))(1, 1), 1.0, 1e-15);
  EXPECT_NEAR(metric_at(*c, v2(pi / 4, 1.0))(1, 1), 0.5, 1e-15);
  EXPECT_EQ(metric_at(*c, v2(pi / 4, 1.0))(0, 1), 0.0);
}

TEST(Metric, SymmetricPositiveDefiniteOnRandomPoints) {
  std::mt19937_64 rng(11);
  for (const auto& c : all_charts()) {
    for (int k = 0; k < 100; ++k) {
      const Vector x = interior_point(*c, rng);
      const Matrix g = metric_at(*c, x);
      EXPECT_LE((g - g.transpose()).cwiseAbs().maxCoeff(), 1e-12) << c->name();
      Eigen::SelfAdjointEigenSolver<Matrix> es(g);
      EXPECT_GT(es.eigenvalues().minCoeff(), 1e-10) << c->name();
    }
  }
}

TEST(Metric, EmbeddedChartsAgreeWithPullback) {
  std::mt19937_64 rng(12);
  for (const auto& c : {make_sphere_spherical(), make_sphere_stereographic()}) {
    for (int k = 0; k < 50; ++k) {
      const Vector x = interior_point(*c, rng);
      const Matrix e = c->embed_jacobian(x);
      EXPECT_LT((e.transpose() * e - metric_at(*c, x)).cwiseAbs().maxCoeff(), 1e-10) << c->name();
    }
  }
}

TEST(Metric, DomainViolationThrows) {
  const auto s = make_sphere_spherical();
  EXPECT_THROW(metric_at(*s, v2(0.0, 0.0)), DomainError);
  EXPECT_THROW(metric_at(*s, v2(pi, 0.0)), DomainError);
  EXPECT_THROW(metric_at(*s, v2(-0.1, 0.0)), DomainError);
  EXPECT_THROW(metric_at(*make_half_line(), Vector::Constant(1, -0.5)), DomainError);
  EXPECT_THROW(metric_at(*make_half_line(), Vector::Constant(1, 0.0)), DomainError);
  EXPECT_THROW(metric_at(*s, Vector::Zero(3)), DimensionError);
  // The azimuth is periodic: any finite value is accepted.
  EXPECT_NO_THROW(metric_at(*s, v2(1.0, 7.5)));
}

TEST(Christoffel, EuclideanIsZero) {
  const auto c = make_euclidean(3);
  const Christoffel g = christoffel_at(*c, v3(1, 2, 3));
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) EXPECT_EQ(g(k, i, j), 0.0);
}

TEST(Christoffel, SphericalValues) {
  const auto c = make_sphere_spherical();
  EXPECT_NEAR(christoffel_at(*c, v2(pi / 2, 0.0))(0, 1, 1), 0.0, 1e-15);
  EXPECT_NEAR(christoffel_at(*c, v2(pi / 4, 0.0))(1, 0, 1), 1.0, 1e-15);
  EXPECT_NEAR(christoffel_at(*c, v2(pi / 4, 0.0))(1, 1, 0), 1.0, 1e-15);
  EXPECT_NEAR(christoffel_at(*c, v2(pi / 4, 0.0))(0, 1, 1), -0.5, 1e-15);
}

TEST(Christoffel, MatchesFiniteDifferenceLeviCivita) {
  std::mt19937_64 rng(13);
  for (const auto& c : all_charts()) {
    for (int k = 0; k < 100; ++k) {
      const Vector x = interior_point(*c, rng);
      const auto fd = oracle::levi_civita([&](const Vector& y) { return c->metric(y); }, x);
      const Christoffel g = christoffel_at(*c, x);
      double err = 0.0;
      for (int a = 0; a < c->dim(); ++a)
        for (int i = 0; i < c->dim(); ++i)
          for (int j = 0; j < c->dim(); ++j) err = std::max(err, std::abs(g(a, i, j) - fd[a](i, j)));
      EXPECT_LE(err, 1e-5) << c->name() << " at " << x.transpose();
    }
  }
}

TEST(Christoffel, LowerIndexSymmetryIsExact) {
  Christoffel g(3);
  g.set(2, 0, 1, 0.7);
  EXPECT_EQ(g(2, 1, 0), 0.7);
  std::mt19937_64 rng(14);
  const auto c = make_sphere_stereographic();
  const Christoffel s = c->christoffel(interior_point(*c, rng));
  for (int k = 0; k < 2; ++k) EXPECT_EQ(s(k, 0, 1), s(k, 1, 0));
}

TEST(Embed, SphereExamples) {
  const auto c = make_sphere_spherical();
  EXPECT_LT((embed(*c, v2(pi / 2, 0.0)) - v3(1, 0, 0)).norm(), 1e-15);
  EXPECT_LT((embed(*c, v2(1e-5, 0.3)) - v3(0, 0, 1)).norm(), 2e-5);
  const auto e = make_euclidean(2);
  EXPECT_EQ(embed(*e, v2(0.25, -4.0)), v2(0.25, -4.0));
}

TEST(Embed, UnitNorm) {
  std::mt19937_64 rng(15);
  for (const auto& c : {make_sphere_spherical(), make_sphere_stereographic()}) {
    for (int k = 0; k < 100; ++k) EXPECT_NEAR(embed(*c, interior_point(*c, rng)).norm(), 1.0, 1e-12);
  }
}

TEST(Embed, HalfLineHasNoEmbedding) {
  const auto h = make_half_line();
  EXPECT_EQ(h->embedding_dim(), 0);
  EXPECT_THROW(embed(*h, Vector::Constant(1, 1.0)), NoEmbeddingError);
  EXPECT_THROW(retract(*h, Vector::Constant(1, 1.0)), NoEmbeddingError);
}

TEST(Retract, SphereExamples) {
  const auto c = make_sphere_spherical();
  EXPECT_LT((retract(*c, v3(2, 0, 0)) - v2(pi / 2, 0.0)).norm(), 1e-15);
  EXPECT_LT((retract(*c, v3(0, 0.5, 0)) - v2(pi / 2, pi / 2)).norm(), 1e-15);
  EXPECT_EQ(retract(*make_euclidean(2), v2(3.0, -1.0)), v2(3.0, -1.0));
}

TEST(Retract, SingularitiesThrow) {
  const auto s = make_sphere_spherical();
  EXPECT_THROW(retract(*s, v3(0, 0, 0)), DomainError);
  EXPECT_THROW(retract(*s, v3(0, 0, 1)), DomainError);
  EXPECT_THROW(retract(*s, v3(0, 0, -3)), DomainError);
  EXPECT_THROW(retract(*s, v2(1, 0)), DimensionError);
  const auto st = make_sphere_stereographic();
  EXPECT_THROW(retract(*st, v3(0, 0, 0)), DomainError);
  EXPECT_THROW(retract(*st, v3(0, 0, 2)), DomainError);
  // The south pole is the stereographic origin.
  EXPECT_LT(retract(*st, v3(0, 0, -1)).norm(), 1e-15);
}

TEST(Retract, RoundTripOnRandomPoints) {
  std::mt19937_64 rng(16);
  for (const auto& c : {make_sphere_spherical(), make_sphere_stereographic(), make_euclidean(3)}) {
    for (int k = 0; k < 100; ++k) {
      const Vector x = interior_point(*c, rng);
      EXPECT_LE((retract(*c, embed(*c, x)) - x).cwiseAbs().maxCoeff(), 1e-10) << c->name();
      // Radial scaling does not change the retracted point on the sphere.
      if (is_sphere(*c)) EXPECT_LE((retract(*c, 3.5 * embed(*c, x)) - x).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(Charts, ComfortAndWrap) {
  const SphereSphericalChart s;
  EXPECT_TRUE(s.comfortable(v2(1.0, 0.0)));
  EXPECT_FALSE(s.comfortable(v2(0.05, 0.0)));
  EXPECT_NEAR(s.wrap(v2(1.0, 2 * pi + 0.5))[1], 0.5, 1e-14);
  const SphereStereographicChart st;
  EXPECT_TRUE(st.comfortable(v2(0.5, 0.5)));
  EXPECT_FALSE(st.comfortable(v2(10.0, 0.0)));
}

TEST(Charts, ConstructionErrors) {
  EXPECT_THROW(make_euclidean(0), std::invalid_argument);
  EXPECT_THROW(make_half_line(-1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(make_half_line(1.0, 0.0), std::invalid_argument);
}

TEST(Charts, DegenerateMetricIsReported) {
  const auto s = make_sphere_spherical();
  // Bypass the domain check to reach the metric at the pole itself.
  EXPECT_THROW(metric_factor(*s, s->metric(v2(0.0, 0.0))), ChartDegenerateError);
  EXPECT_NO_THROW(metric_factor(*s, s->metric(v2(1.0, 0.0))));
}
