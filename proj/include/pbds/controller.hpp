#pragma once

#include <chrono>
#include <cmath>
#include <vector>

#include "pbds/qp.hpp"
#include "pbds/robot.hpp"

namespace pbds {

struct ControllerConfig {
  Matrix Q;  // n × n, tracking weight (SPD)
  Matrix R;  // n_tau × n_tau, effort weight (SPD)
  // Horizon (s) turning velocity and position limits into acceleration bounds.
  double dt_limits = 1e-3;
};

inline ControllerConfig default_controller_config(const RobotModel& m, double dt_limits = 1e-3) {
  return {10.0 * Matrix::Identity(m.dof(), m.dof()), 1e-3 * Matrix::Identity(m.n_tau(), m.n_tau()), dt_limits};
}

inline void validate_controller_config(const ControllerConfig& cfg, const RobotModel& m) {
  auto spd = [](const Matrix& a) {
    if (a.rows() != a.cols() || (a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12) return false;
    return Eigen::LLT<Matrix>(a).info() == Eigen::Success;
  };
  if (cfg.Q.rows() != m.dof() || !spd(cfg.Q)) throw std::invalid_argument("Q must be an SPD n x n matrix");
  if (cfg.R.rows() != m.n_tau() || !spd(cfg.R)) throw std::invalid_argument("R must be an SPD n_tau x n_tau matrix");
  if (!(cfg.dt_limits > 0.0)) throw std::invalid_argument("dt_limits must be positive");
}

enum class LimitRow { torque_upper, torque_lower, accel_lower, accel_upper };

/// Block layout of z = [q̈, τ, ξ] and the meaning of every inequality row.
struct QpLayout {
  int n = 0;
  int n_tau = 0;
  int s = 0;
  std::vector<LimitRow> row_kind;
  std::vector<int> row_joint;  // joint or actuator index of each inequality row
};

struct BuiltQp {
  QpProblem problem;
  QpLayout layout;
};

namespace detail {

// Acceleration interval [lo, hi] from acceleration, one-step velocity and
// one-step position limits. Position bounds are dropped when they would empty
// the interval; when the velocity bound cannot be met within a_max, the
// interval collapses onto the bound that pushes back hardest.
inline std::pair<double, double> acceleration_bounds(const JointLimits& l, int i, double q, double qd, double h) {
  double lo = -l.a_max[i];
  double hi = l.a_max[i];
  if (std::isfinite(l.v_max[i])) {
    const double vlo = (-l.v_max[i] - qd) / h;
    const double vhi = (l.v_max[i] - qd) / h;
    if (vhi < lo) {
      hi = lo;
    } else if (vlo > hi) {
      lo = hi;
    } else {
      lo = std::max(lo, vlo);
      hi = std::min(hi, vhi);
    }
  }
  const double h2 = h * h;
  const double plo = std::isfinite(l.q_min[i]) ? (l.q_min[i] - q - h * qd) / h2 : -INFINITY;
  const double phi = std::isfinite(l.q_max[i]) ? (l.q_max[i] - q - h * qd) / h2 : INFINITY;
  const double nlo = std::max(lo, plo);
  const double nhi = std::min(hi, phi);
  if (nlo <= nhi) return {nlo, nhi};
  return {lo, hi};
}

}  // namespace detail

/// Assembles the inverse-dynamics QP for one tick:
///   cost   ½‖q̈ − q̈_d‖²_Q + ½‖τ‖²_R + ½‖ξ‖²   (w = [−Q q̈_d; 0; 0])
///   eq     M q̈ − S τ + h = 0,   J q̈ + ξ + J̇q̇ − ẍ_d = 0
///   ineq   |τ| ≤ τ_max, lo ≤ q̈ ≤ hi (acceleration, velocity, position limits)
inline BuiltQp build_qp(const RobotModel& model, const JointState& state, const Vector& qdd_d, const Vector& xdd_d,
                        const Matrix& J, const Vector& jdot_qd, const ControllerConfig& cfg) {
  const int n = model.dof();
  const int nt = model.n_tau();
  const int s = static_cast<int>(xdd_d.size());
  if (state.q.size() != n || state.qd.size() != n || qdd_d.size() != n) throw DimensionError("build_qp: joint dimension mismatch");
  if (J.rows() != s || J.cols() != n || jdot_qd.size() != s) throw DimensionError("build_qp: task dimension mismatch");
  if (cfg.Q.rows() != n || cfg.Q.cols() != n || cfg.R.rows() != nt || cfg.R.cols() != nt) {
    throw DimensionError("build_qp: weight dimension mismatch");
  }
  const int dim = n + nt + s;

  BuiltQp out;
  QpProblem& p = out.problem;
  QpLayout& lay = out.layout;
  lay.n = n;
  lay.n_tau = nt;
  lay.s = s;

  p.W_cost = Matrix::Zero(dim, dim);
  p.W_cost.topLeftCorner(n, n) = cfg.Q;
  p.W_cost.block(n, n, nt, nt) = cfg.R;
  p.W_cost.bottomRightCorner(s, s).setIdentity();
  p.w_lin = Vector::Zero(dim);
  p.w_lin.head(n) = -(cfg.Q.transpose() * qdd_d);

  p.C_E = Matrix::Zero(n + s, dim);
  p.C_E.topLeftCorner(n, n) = mass_matrix(model, state.q);
  p.C_E.block(0, n, n, nt) = -model.selection;
  p.C_E.block(n, 0, s, n) = J;
  p.C_E.bottomRightCorner(s, s).setIdentity();
  p.c_E = Vector(n + s);
  p.c_E.head(n) = bias_forces(model, state.q, state.qd);
  p.c_E.tail(s) = jdot_qd - xdd_d;

  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> offsets;
  auto add = [&](LimitRow kind, int idx, int col, double coeff, double offset) {
    Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(dim);
    r[col] = coeff;
    rows.push_back(std::move(r));
    offsets.push_back(offset);
    lay.row_kind.push_back(kind);
    lay.row_joint.push_back(idx);
  };
  const JointLimits& lim = model.limits;
  for (int j = 0; j < nt; ++j) {
    if (!std::isfinite(lim.tau_max[j])) continue;
    add(LimitRow::torque_upper, j, n + j, -1.0, lim.tau_max[j]);
    add(LimitRow::torque_lower, j, n + j, 1.0, lim.tau_max[j]);
  }
  for (int i = 0; i < n; ++i) {
    const auto [lo, hi] = detail::acceleration_bounds(lim, i, state.q[i], state.qd[i], cfg.dt_limits);
    if (std::isfinite(lo)) add(LimitRow::accel_lower, i, i, 1.0, -lo);
    if (std::isfinite(hi)) add(LimitRow::accel_upper, i, i, -1.0, hi);
  }
  p.C_I = Matrix(static_cast<Eigen::Index>(rows.size()), dim);
  p.c_I = Vector(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    p.C_I.row(static_cast<Eigen::Index>(k)) = rows[k];
    p.c_I[static_cast<Eigen::Index>(k)] = offsets[k];
  }
  return out;
}

struct TickDiagnostics {
  QpStatus status = QpStatus::solved;
  KktReport kkt;
  std::vector<int> active_set;
  Vector qdd;
  Vector slack;
  double slack_norm = 0.0;
  int iterations = 0;
  bool torque_limit_active = false;
  bool fallback = false;  // τ is the held previous torque, not the QP solution
  double solve_seconds = 0.0;
};

struct TickResult {
  Vector tau;
  TickDiagnostics diag;
};

/// One control loop's QP controller. Keeps the previous active set for warm
/// starts and the last feasible torque for the hold-torque fallback.
class QpController {
 public:
  QpController(RobotModel model, ControllerConfig cfg) : model_(std::move(model)), cfg_(std::move(cfg)) {
    validate_controller_config(cfg_, model_);
    last_tau_ = Vector::Zero(model_.n_tau());
  }

  const RobotModel& model() const { return model_; }
  const ControllerConfig& config() const { return cfg_; }
  const Vector& last_tau() const { return last_tau_; }

  void reset() {
    warm_.clear();
    last_tau_ = Vector::Zero(model_.n_tau());
  }

  TickResult tick(const JointState& state, const Vector& qdd_d, const Vector& xdd_d, const Matrix& J,
                  const Vector& jdot_qd) {
    const BuiltQp qp = build_qp(model_, state, qdd_d, xdd_d, J, jdot_qd, cfg_);
    const auto t0 = std::chrono::steady_clock::now();
    const QpSolution sol = solve_qp(qp.problem, {}, &warm_);
    const auto t1 = std::chrono::steady_clock::now();

    const QpLayout& lay = qp.layout;
    TickResult out;
    TickDiagnostics& d = out.diag;
    d.status = sol.status;
    d.kkt = sol.kkt;
    d.active_set = sol.active_set;
    d.iterations = sol.iterations;
    d.solve_seconds = std::chrono::duration<double>(t1 - t0).count();
    d.qdd = sol.z.head(lay.n);
    d.slack = sol.z.tail(lay.s);
    d.slack_norm = d.slack.norm();
    for (int row : sol.active_set) {
      const LimitRow k = lay.row_kind[static_cast<std::size_t>(row)];
      if (k == LimitRow::torque_upper || k == LimitRow::torque_lower) d.torque_limit_active = true;
    }
    if (sol.status == QpStatus::infeasible) {
      out.tau = last_tau_;
      d.fallback = true;
      warm_.clear();
    } else {
      // max_iter iterates are still feasible, so their torque is usable.
      out.tau = sol.z.segment(lay.n, lay.n_tau);
      last_tau_ = out.tau;
      warm_ = sol.active_set;
    }
    return out;
  }

 private:
  RobotModel model_;
  ControllerConfig cfg_;
  std::vector<int> warm_;
  Vector last_tau_;
};

/// Stateless single tick (cold start, zero hold torque).
inline TickResult control_tick(const RobotModel& model, const JointState& state, const Vector& qdd_d,
                               const Vector& xdd_d, const Matrix& J, const Vector& jdot_qd,
                               const ControllerConfig& cfg) {
  QpController ctrl(model, cfg);
  return ctrl.tick(state, qdd_d, xdd_d, J, jdot_qd);
}

}  // namespace pbds
