#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "pbds/robot.hpp"
#include "support/oracles.hpp"

using namespace pbds;
using std::numbers::pi;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

struct ModelPair {
  std::string label;
  RobotModel model;
  oracle::ArmGeometry geometry;
};

std::vector<ModelPair> model_pairs() {
  std::vector<ModelPair> out;
  for (bool rods : {true, false}) {
    const BodyKind body = rods ? BodyKind::rod : BodyKind::point;
    const std::string tag = rods ? " rods" : " points";
    out.push_back({"planar2" + tag, make_planar({1.0, 1.0}, {1.0, 1.0}, body),
                   {false, {1.0, 1.0}, {1.0, 1.0}, rods, oracle::V3(0, -9.81, 0)}});
    out.push_back({"planar3" + tag, make_planar({0.5, 0.4, 0.3}, {1.0, 0.8, 0.5}, body),
                   {false, {0.5, 0.4, 0.3}, {1.0, 0.8, 0.5}, rods, oracle::V3(0, -9.81, 0)}});
    out.push_back({"spatial3r" + tag, make_spatial3r({0.3, 0.4, 0.4}, {1.0, 1.0, 0.8}, body),
                   {true, {0.3, 0.4, 0.4}, {1.0, 1.0, 0.8}, rods, oracle::V3(0, 0, -9.81)}});
  }
  return out;
}

Vector random_q(std::mt19937_64& rng, int n, double scale = pi) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vector q(n);
  for (int i = 0; i < n; ++i) q[i] = u(rng);
  return q;
}

}  // namespace

TEST(MassMatrix, Examples) {
  const RobotModel pend = make_planar({1.0}, {1.0}, BodyKind::point);
  EXPECT_NEAR(mass_matrix(pend, vec({0.3}))(0, 0), 1.0, 1e-15);
  const RobotModel two = make_planar({1.0, 1.0}, {1.0, 1.0}, BodyKind::point);
  Matrix expect(2, 2);
  expect << 3, 1, 1, 1;
  EXPECT_LT((mass_matrix(two, vec({0.4, pi / 2})) - expect).cwiseAbs().maxCoeff(), 1e-14);
  // A uniform rod about its end: m l² / 3.
  EXPECT_NEAR(mass_matrix(make_planar({2.0}, {3.0}, BodyKind::rod), vec({0.0}))(0, 0), 4.0, 1e-14);
}

TEST(MassMatrix, SymmetricPositiveDefiniteAndMatchesOracle) {
  std::mt19937_64 rng(41);
  for (const auto& mp : model_pairs()) {
    double sym = 0.0, err = 0.0, min_eig = 1e300;
    for (int k = 0; k < 1000; ++k) {
      const Vector q = random_q(rng, mp.model.dof());
      const Matrix m = mass_matrix(mp.model, q);
      sym = std::max(sym, (m - m.transpose()).cwiseAbs().maxCoeff());
      min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Matrix>(m).eigenvalues().minCoeff());
      if (k < 100) err = std::max(err, (m - mp.geometry.mass_matrix(q)).cwiseAbs().maxCoeff());
    }
    EXPECT_LE(sym, 1e-12) << mp.label;
    EXPECT_GT(min_eig, 0.0) << mp.label;
    EXPECT_LE(err, 1e-8) << mp.label;
  }
}

TEST(BiasForces, Examples) {
  const RobotModel free = make_planar({1.0, 1.0}, {1.0, 1.0}, BodyKind::rod, Vec3::Zero());
  EXPECT_EQ(bias_forces(free, vec({0.7, -1.2}), Vector::Zero(2)), Vector::Zero(2));
  // Gravity along +x makes q = 0 the hanging position.
  const RobotModel pend = make_planar({1.0}, {1.0}, BodyKind::point, Vec3(9.81, 0, 0));
  EXPECT_NEAR(bias_forces(pend, vec({pi / 2}), vec({0.0}))[0], 9.81, 1e-12);
  EXPECT_NEAR(bias_forces(pend, vec({0.0}), vec({0.0}))[0], 0.0, 1e-12);
}

TEST(BiasForces, MatchLagrangianOracle) {
  std::mt19937_64 rng(42);
  for (const auto& mp : model_pairs()) {
    double err = 0.0;
    for (int k = 0; k < 50; ++k) {
      const Vector q = random_q(rng, mp.model.dof());
      const Vector qd = random_q(rng, mp.model.dof(), 2.0);
      err = std::max(err, (bias_forces(mp.model, q, qd) - mp.geometry.bias(q, qd)).cwiseAbs().maxCoeff());
    }
    EXPECT_LE(err, 1e-5) << mp.label;
  }
}

TEST(Kinematics, PlanarExamples) {
  const RobotModel two = make_planar({1.0, 1.0}, {1.0, 1.0}, BodyKind::rod);
  EXPECT_LT((forward_kinematics(two, vec({0, 0})) - vec({2, 0})).norm(), 1e-15);
  EXPECT_LT((forward_kinematics(two, vec({pi / 2, 0})) - vec({0, 2})).norm(), 1e-15);
  Matrix j(2, 2);
  j << 0, 0, 2, 1;
  EXPECT_LT((ee_jacobian(two, vec({0, 0})) - j).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(ee_jacobian_dot(two, vec({0.3, 0.4}), Vector::Zero(2)), Matrix::Zero(2, 2));
}

TEST(Kinematics, MatchesProductOfRotations) {
  std::mt19937_64 rng(43);
  for (const auto& mp : model_pairs()) {
    for (int k = 0; k < 100; ++k) {
      const Vector q = random_q(rng, mp.model.dof());
      const Vector x = forward_kinematics(mp.model, q);
      ASSERT_EQ(x.size(), mp.model.task_dim());
      const oracle::V3 ref = mp.geometry.ee(q);
      EXPECT_LE((x - ref.head(x.size())).cwiseAbs().maxCoeff(), 1e-10) << mp.label;
    }
  }
}

TEST(Kinematics, JacobiansMatchFiniteDifferences) {
  std::mt19937_64 rng(44);
  for (const auto& mp : model_pairs()) {
    const auto fk = [&](const Vector& q) { return forward_kinematics(mp.model, q); };
    for (int k = 0; k < 100; ++k) {
      const Vector q = random_q(rng, mp.model.dof());
      const Vector qd = random_q(rng, mp.model.dof(), 1.0).normalized();
      EXPECT_LE((ee_jacobian(mp.model, q) - oracle::fd_jacobian(fk, q)).cwiseAbs().maxCoeff(), 1e-5) << mp.label;
      const double h = 1e-6;
      const Matrix fwd = (ee_jacobian(mp.model, q + h * qd) - ee_jacobian(mp.model, q)) / h;
      EXPECT_LE((ee_jacobian_dot(mp.model, q, qd) - fwd).cwiseAbs().maxCoeff(), 1e-4) << mp.label;
    }
  }
}

TEST(ForwardDynamics, Examples) {
  const RobotModel one = make_planar({1.0}, {1.0}, BodyKind::point, Vec3::Zero());
  EXPECT_NEAR(forward_dynamics(one, {vec({0.5}), vec({0.0})}, vec({2.0}))[0], 2.0, 1e-14);
  const RobotModel three = make_planar({0.5, 0.4, 0.3}, {1.0, 0.8, 0.5}, BodyKind::rod);
  const JointState s{vec({0.3, -0.2, 1.0}), vec({0.5, 0.1, -0.4})};
  EXPECT_LE(forward_dynamics(three, s, bias_forces(three, s.q, s.qd)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ForwardDynamics, SatisfiesEquationOfMotion) {
  std::mt19937_64 rng(45);
  for (const auto& mp : model_pairs()) {
    for (int k = 0; k < 50; ++k) {
      const int n = mp.model.dof();
      const JointState s{random_q(rng, n), random_q(rng, n, 3.0)};
      const Vector tau = 5.0 * oracle::random_vector(rng, n);
      const Vector qdd = forward_dynamics(mp.model, s, tau);
      const Vector r = mass_matrix(mp.model, s.q) * qdd + bias_forces(mp.model, s.q, s.qd) - mp.model.selection * tau;
      EXPECT_LE(r.norm(), 1e-10) << mp.label;
      EXPECT_LE((inverse_dynamics(mp.model, s.q, s.qd, qdd, mp.model.gravity) - mp.model.selection * tau).norm(), 1e-10) << mp.label;
    }
  }
}

TEST(Energy, MatchesOracle) {
  std::mt19937_64 rng(46);
  for (const auto& mp : model_pairs()) {
    const int n = mp.model.dof();
    const JointState s{random_q(rng, n), random_q(rng, n, 2.0)};
    EXPECT_NEAR(kinetic_energy(mp.model, s), mp.geometry.kinetic(s.q, s.qd), 1e-10) << mp.label;
    // Potentials may differ by a constant; compare differences.
    const Vector q2 = random_q(rng, n);
    EXPECT_NEAR(potential_energy(mp.model, s.q) - potential_energy(mp.model, q2),
                mp.geometry.potential(s.q) - mp.geometry.potential(q2), 1e-10)
        << mp.label;
  }
}

TEST(Model, Validation) {
  EXPECT_THROW(make_planar({1.0, 1.0}, {1.0}, BodyKind::rod), std::invalid_argument);
  EXPECT_THROW(make_planar({1.0, -1.0}, {1.0, 1.0}, BodyKind::rod), std::invalid_argument);
  EXPECT_THROW(make_planar({1.0}, {0.0}, BodyKind::rod), std::invalid_argument);
  EXPECT_THROW(make_spatial3r({1.0, 1.0}, {1.0, 1.0}, BodyKind::rod), std::invalid_argument);

  RobotModel m = make_planar({1.0, 1.0}, {1.0, 1.0}, BodyKind::rod);
  EXPECT_EQ(m.selection, Matrix::Identity(2, 2));
  m.limits.tau_max = vec({1.0, -1.0});
  EXPECT_THROW(validate_model(m), std::invalid_argument);
  m = make_planar({1.0, 1.0}, {1.0, 1.0}, BodyKind::rod);
  m.limits.q_min = vec({0.0, 0.0});
  m.limits.q_max = vec({1.0, 0.0});
  EXPECT_THROW(validate_model(m), std::invalid_argument);
  m = make_planar({1.0, 1.0}, {1.0, 1.0}, BodyKind::rod);
  m.selection = Matrix::Ones(2, 2);
  EXPECT_THROW(validate_model(m), std::invalid_argument);
  // Underactuation through a column subset of the identity.
  m.selection = Matrix::Identity(2, 2).rightCols(1);
  m.limits.tau_max = vec({5.0});
  EXPECT_NO_THROW(validate_model(m));
  EXPECT_EQ(m.n_tau(), 1);
  EXPECT_THROW(forward_kinematics(m, Vector::Zero(3)), DimensionError);
}
