#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "pbds/task_map.hpp"

namespace pbds {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

enum class Geometry { planar, spatial3r };
enum class BodyKind { rod, point };

/// One revolute joint and the body it drives. Vectors are expressed in the
/// parent link frame (joint_origin, axis) or the link's own frame (com, inertia).
struct Link {
  Vec3 joint_origin = Vec3::Zero();
  Vec3 axis = Vec3::UnitZ();
  double length = 1.0;
  double mass = 1.0;
  Vec3 com = Vec3::Zero();
  Mat3 inertia = Mat3::Zero();  // about the COM
};

struct JointLimits {
  Vector q_min, q_max;  // rad
  Vector v_max;         // rad/s
  Vector a_max;         // rad/s²
  Vector tau_max;       // N·m, per actuator
};

struct RobotModel {
  std::string preset;
  Geometry geometry = Geometry::planar;
  BodyKind body = BodyKind::rod;
  std::vector<Link> links;
  Vec3 ee_offset = Vec3::Zero();  // in the last link frame
  Vec3 gravity = Vec3::Zero();    // m/s²
  Matrix selection;               // n × n_tau
  JointLimits limits;

  int dof() const { return static_cast<int>(links.size()); }
  int n_tau() const { return static_cast<int>(selection.cols()); }
  int task_dim() const { return geometry == Geometry::planar ? 2 : 3; }
};

struct JointState {
  Vector q;
  Vector qd;
};

namespace detail {

template <class S>
Eigen::Matrix<S, 3, 3> axis_rotation(const Vec3& axis, const S& angle) {
  using std::cos;
  using std::sin;
  Eigen::Matrix<S, 3, 3> k;
  k << S(0.0), S(-axis.z()), S(axis.y()), S(axis.z()), S(0.0), S(-axis.x()), S(-axis.y()), S(axis.x()), S(0.0);
  const Eigen::Matrix<S, 3, 3> k2 = k * k;
  const S s = sin(angle);
  const S c = cos(angle);
  Eigen::Matrix<S, 3, 3> r = Eigen::Matrix<S, 3, 3>::Identity();
  r += k * s + k2 * (S(1.0) - c);
  return r;
}

inline Mat3 rod_inertia(const Vec3& along, double mass, double length) {
  const double i = mass * length * length / 12.0;
  return i * (Mat3::Identity() - along * along.transpose());
}

}  // namespace detail

inline JointLimits unbounded_limits(int n, int n_tau) {
  const double inf = std::numeric_limits<double>::infinity();
  return {Vector::Constant(n, -inf), Vector::Constant(n, inf), Vector::Constant(n, inf), Vector::Constant(n, inf),
          Vector::Constant(n_tau, inf)};
}

/// Throws std::invalid_argument listing the first violated model invariant.
inline void validate_model(const RobotModel& m) {
  const int n = m.dof();
  if (n == 0) throw std::invalid_argument("robot model has no links");
  for (int i = 0; i < n; ++i) {
    if (!(m.links[i].mass > 0.0)) throw std::invalid_argument("link masses must be positive");
    if (!(m.links[i].length > 0.0)) throw std::invalid_argument("link lengths must be positive");
  }
  if (m.selection.rows() != n || m.selection.cols() == 0) throw std::invalid_argument("selection matrix must be n x n_tau");
  if (Eigen::FullPivLU<Matrix>(m.selection).rank() != m.selection.cols()) {
    throw std::invalid_argument("selection matrix must have full column rank");
  }
  const auto& l = m.limits;
  if (l.q_min.size() != n || l.q_max.size() != n || l.v_max.size() != n || l.a_max.size() != n ||
      l.tau_max.size() != m.n_tau()) {
    throw std::invalid_argument("limit vectors have the wrong length");
  }
  for (int i = 0; i < n; ++i) {
    if (!(l.q_min[i] < l.q_max[i])) throw std::invalid_argument("q_min must be below q_max");
    if (!(l.v_max[i] > 0.0) || !(l.a_max[i] > 0.0)) throw std::invalid_argument("v_max and a_max must be positive");
  }
  for (int i = 0; i < m.n_tau(); ++i) {
    if (!(l.tau_max[i] > 0.0)) throw std::invalid_argument("tau_max must be positive");
  }
}

/// Serial arm in the x–y plane, every joint about z, links along their local x.
inline RobotModel make_planar(const std::vector<double>& lengths, const std::vector<double>& masses, BodyKind body,
                              const Vec3& gravity = Vec3(0.0, -9.81, 0.0)) {
  if (lengths.size() != masses.size() || lengths.empty()) {
    throw std::invalid_argument("planar arm needs matching, non-empty length and mass lists");
  }
  RobotModel m;
  m.preset = "planar" + std::to_string(lengths.size());
  m.geometry = Geometry::planar;
  m.body = body;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    Link l;
    l.joint_origin = i == 0 ? Vec3::Zero() : Vec3(lengths[i - 1], 0.0, 0.0);
    l.axis = Vec3::UnitZ();
    l.length = lengths[i];
    l.mass = masses[i];
    l.com = body == BodyKind::rod ? Vec3(0.5 * lengths[i], 0.0, 0.0) : Vec3(lengths[i], 0.0, 0.0);
    l.inertia = body == BodyKind::rod ? detail::rod_inertia(Vec3::UnitX(), masses[i], lengths[i]) : Mat3::Zero();
    m.links.push_back(l);
  }
  m.ee_offset = Vec3(lengths.back(), 0.0, 0.0);
  m.gravity = gravity;
  const int n = m.dof();
  m.selection = Matrix::Identity(n, n);
  m.limits = unbounded_limits(n, n);
  validate_model(m);
  return m;
}

/// Anthropomorphic 3-DoF arm: base yaw about z, then shoulder and elbow pitch
/// about the local y axis. lengths = {column height, upper arm, forearm}.
inline RobotModel make_spatial3r(const std::vector<double>& lengths, const std::vector<double>& masses, BodyKind body,
                                 const Vec3& gravity = Vec3(0.0, 0.0, -9.81)) {
  if (lengths.size() != 3 || masses.size() != 3) throw std::invalid_argument("spatial3r needs 3 lengths and 3 masses");
  RobotModel m;
  m.preset = "spatial3r";
  m.geometry = Geometry::spatial3r;
  m.body = body;
  const Vec3 along[3] = {Vec3::UnitZ(), Vec3::UnitX(), Vec3::UnitX()};
  const Vec3 origins[3] = {Vec3::Zero(), Vec3(0.0, 0.0, lengths[0]), Vec3(lengths[1], 0.0, 0.0)};
  const Vec3 axes[3] = {Vec3::UnitZ(), Vec3::UnitY(), Vec3::UnitY()};
  for (int i = 0; i < 3; ++i) {
    Link l;
    l.joint_origin = origins[i];
    l.axis = axes[i];
    l.length = lengths[i];
    l.mass = masses[i];
    l.com = along[i] * (body == BodyKind::rod ? 0.5 * lengths[i] : lengths[i]);
    l.inertia = body == BodyKind::rod ? detail::rod_inertia(along[i], masses[i], lengths[i]) : Mat3::Zero();
    m.links.push_back(l);
  }
  m.ee_offset = Vec3(lengths[2], 0.0, 0.0);
  m.gravity = gravity;
  m.selection = Matrix::Identity(3, 3);
  m.limits = unbounded_limits(3, 3);
  validate_model(m);
  return m;
}

/// End-effector position for any scalar type (double or dual numbers).
template <class S>
VectorX<S> ee_position(const RobotModel& m, const VectorX<S>& q) {
  using M3 = Eigen::Matrix<S, 3, 3>;
  using V3 = Eigen::Matrix<S, 3, 1>;
  M3 r = M3::Identity();
  V3 o = V3::Zero();
  for (int i = 0; i < m.dof(); ++i) {
    const Link& l = m.links[i];
    o += r * l.joint_origin.cast<S>();
    r = r * detail::axis_rotation<S>(l.axis, q[i]);
  }
  const V3 p = o + r * m.ee_offset.cast<S>();
  return p.head(m.task_dim());
}

inline void require_joint_dims(const RobotModel& m, const Vector& q) {
  if (q.size() != m.dof()) throw DimensionError("joint vector has the wrong length for this model");
}

inline Vector forward_kinematics(const RobotModel& m, const Vector& q) {
  require_joint_dims(m, q);
  return ee_position<double>(m, q);
}

/// Joint space → end-effector position, usable as the first map of a tree.
inline TaskMap forward_kinematics_map(const RobotModel& m) {
  return make_task_map(m.dof(), m.task_dim(), "forward_kinematics",
                       [m](const auto& q) { return ee_position(m, q); });
}

inline Matrix ee_jacobian(const RobotModel& m, const Vector& q) {
  require_joint_dims(m, q);
  return forward_kinematics_map(m).jacobian(q);
}

inline Matrix ee_jacobian_dot(const RobotModel& m, const Vector& q, const Vector& qd) {
  require_joint_dims(m, q);
  require_joint_dims(m, qd);
  return forward_kinematics_map(m).jacobian_dot(q, qd);
}

/// Recursive Newton–Euler inverse dynamics in the world frame:
/// returns M(q) q̈ + C(q, q̇) q̇ + g(q) for the given gravity vector.
inline Vector inverse_dynamics(const RobotModel& m, const Vector& q, const Vector& qd, const Vector& qdd,
                               const Vec3& gravity) {
  const int n = m.dof();
  std::vector<Mat3> rot(n);
  std::vector<Vec3> origin(n), z(n), w(n), wd(n), acc_com(n), rc(n);
  Mat3 r_prev = Mat3::Identity();
  Vec3 o_prev = Vec3::Zero();
  Vec3 w_prev = Vec3::Zero();
  Vec3 wd_prev = Vec3::Zero();
  Vec3 a_prev = -gravity;
  for (int i = 0; i < n; ++i) {
    const Link& l = m.links[i];
    origin[i] = o_prev + r_prev * l.joint_origin;
    const Vec3 d = origin[i] - o_prev;
    const Vec3 a_origin = a_prev + wd_prev.cross(d) + w_prev.cross(w_prev.cross(d));
    z[i] = r_prev * l.axis;
    rot[i] = r_prev * detail::axis_rotation<double>(l.axis, q[i]);
    w[i] = w_prev + z[i] * qd[i];
    wd[i] = wd_prev + z[i] * qdd[i] + w_prev.cross(z[i] * qd[i]);
    rc[i] = rot[i] * l.com;
    acc_com[i] = a_origin + wd[i].cross(rc[i]) + w[i].cross(w[i].cross(rc[i]));
    r_prev = rot[i];
    o_prev = origin[i];
    w_prev = w[i];
    wd_prev = wd[i];
    a_prev = a_origin;
  }
  Vector tau(n);
  Vec3 f_next = Vec3::Zero();
  Vec3 n_next = Vec3::Zero();
  for (int i = n - 1; i >= 0; --i) {
    const Link& l = m.links[i];
    const Mat3 inertia_w = rot[i] * l.inertia * rot[i].transpose();
    const Vec3 force = l.mass * acc_com[i];
    const Vec3 torque = inertia_w * wd[i] + w[i].cross(inertia_w * w[i]);
    const Vec3 lever = i + 1 < n ? Vec3(origin[i + 1] - origin[i]) : Vec3::Zero();
    const Vec3 f = force + f_next;
    const Vec3 moment = torque + rc[i].cross(force) + n_next + lever.cross(f_next);
    tau[i] = z[i].dot(moment);
    f_next = f;
    n_next = moment;
  }
  return tau;
}

inline Matrix mass_matrix(const RobotModel& m, const Vector& q) {
  require_joint_dims(m, q);
  const int n = m.dof();
  Matrix mm(n, n);
  const Vector zero = Vector::Zero(n);
  for (int j = 0; j < n; ++j) mm.col(j) = inverse_dynamics(m, q, zero, Vector::Unit(n, j), Vec3::Zero());
  return 0.5 * (mm + mm.transpose());
}

/// h(q, q̇): Coriolis, centrifugal and gravity terms as one vector.
inline Vector bias_forces(const RobotModel& m, const Vector& q, const Vector& qd) {
  require_joint_dims(m, q);
  require_joint_dims(m, qd);
  return inverse_dynamics(m, q, qd, Vector::Zero(m.dof()), m.gravity);
}

/// q̈ = M⁻¹(Sτ − h).
inline Vector forward_dynamics(const RobotModel& m, const JointState& s, const Vector& tau) {
  if (tau.size() != m.n_tau()) throw DimensionError("torque vector has the wrong length");
  const Matrix mm = mass_matrix(m, s.q);
  return mm.llt().solve(m.selection * tau - bias_forces(m, s.q, s.qd));
}

inline std::vector<Vec3> com_positions(const RobotModel& m, const Vector& q) {
  std::vector<Vec3> out;
  Mat3 r = Mat3::Identity();
  Vec3 o = Vec3::Zero();
  for (int i = 0; i < m.dof(); ++i) {
    const Link& l = m.links[i];
    o += r * l.joint_origin;
    r = r * detail::axis_rotation<double>(l.axis, q[i]);
    out.push_back(o + r * l.com);
  }
  return out;
}

inline double potential_energy(const RobotModel& m, const Vector& q) {
  double v = 0.0;
  const auto coms = com_positions(m, q);
  for (int i = 0; i < m.dof(); ++i) v -= m.links[i].mass * m.gravity.dot(coms[i]);
  return v;
}

inline double kinetic_energy(const RobotModel& m, const JointState& s) {
  return 0.5 * s.qd.dot(mass_matrix(m, s.q) * s.qd);
}

inline double total_energy(const RobotModel& m, const JointState& s) {
  return kinetic_energy(m, s) + potential_energy(m, s.q);
}

}  // namespace pbds
