#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pbds/controller.hpp"
#include "pbds/tree.hpp"

namespace pbds {

enum class Integrator { semi_implicit_euler, rk4 };

inline const char* to_string(Integrator i) { return i == Integrator::rk4 ? "rk4" : "semi_implicit_euler"; }

struct SimConfig {
  double dt = 1e-3;
  double duration = 10.0;
  Integrator integrator = Integrator::semi_implicit_euler;
  int log_stride = 1;

  long ticks() const { return std::lround(duration / dt); }
};

inline void validate_sim_config(const SimConfig& s) {
  if (!(s.dt > 0.0) || !std::isfinite(s.dt)) throw std::invalid_argument("sim.dt must be positive");
  if (!(s.duration >= s.dt) || !std::isfinite(s.duration)) throw std::invalid_argument("sim.duration must be at least dt");
  if (s.log_stride < 1) throw std::invalid_argument("sim.log_stride must be a positive integer");
}

namespace detail {

inline bool all_finite(const Vector& v) { return v.allFinite(); }

// One step of ẍ = f(x, ẋ) with either integrator.
template <class F>
void integrate_step(Vector& x, Vector& v, double dt, Integrator integ, F&& accel) {
  if (integ == Integrator::semi_implicit_euler) {
    v += dt * accel(x, v);
    x += dt * v;
    return;
  }
  const Vector a1 = accel(x, v);
  const Vector x2 = x + 0.5 * dt * v, v2 = v + 0.5 * dt * a1;
  const Vector a2 = accel(x2, v2);
  const Vector x3 = x + 0.5 * dt * v2, v3 = v + 0.5 * dt * a2;
  const Vector a3 = accel(x3, v3);
  const Vector x4 = x + dt * v3, v4 = v + dt * a3;
  const Vector a4 = accel(x4, v4);
  x += dt / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4);
  v += dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
}

}  // namespace detail

/// Advances the plant by dt under constant τ.
inline JointState step_plant(const RobotModel& model, const JointState& state, const Vector& tau, double dt,
                             Integrator integrator) {
  if (!state.q.allFinite() || !state.qd.allFinite() || !tau.allFinite()) {
    throw DivergenceError("step_plant: non-finite state or torque");
  }
  JointState next = state;
  detail::integrate_step(next.q, next.qd, dt, integrator, [&](const Vector& q, const Vector& qd) {
    return forward_dynamics(model, JointState{q, qd}, tau);
  });
  if (!next.q.allFinite() || !next.qd.allFinite()) throw DivergenceError("step_plant: integration diverged");
  return next;
}

// ---------------------------------------------------------------------------
// Reference rollouts on a task manifold, independent of the robot.

struct RolloutSample {
  double t = 0.0;
  ChartPtr chart;
  Vector x;
  Vector v;
  Vector embedded;  // empty when the chart declares no embedding
};

namespace detail {

inline RolloutSample make_sample(double t, const ChartPtr& chart, const Vector& x, const Vector& v) {
  RolloutSample s{t, chart, x, v, Vector()};
  if (chart->embedding_dim() > 0) s.embedded = chart->embed(x);
  return s;
}

// Moves (x, v) to the first atlas chart in which the point is comfortable.
inline bool switch_chart(ChartPtr& chart, Vector& x, Vector& v, const std::vector<ChartPtr>& atlas) {
  const Vector p = chart->embed(x);
  const Vector pv = chart->embed_jacobian(x) * v;
  for (const auto& c : atlas) {
    if (c.get() == chart.get()) continue;
    const Vector y = c->wrap(c->retract(p));
    if (!c->comfortable(y)) continue;
    v = tangent_coordinates(*c, y, pv);
    x = y;
    chart = c;
    return true;
  }
  return false;
}

template <class Accel>
std::vector<RolloutSample> rollout(ChartPtr chart, DsState s, const SimConfig& sim, const std::vector<ChartPtr>& atlas,
                                   Accel&& accel) {
  validate_sim_config(sim);
  require_in_domain(*chart, s.x);
  if (s.v.size() != s.x.size()) throw DimensionError("reference_rollout: velocity dimension mismatch");
  const long n = sim.ticks();
  std::vector<RolloutSample> out;
  out.reserve(static_cast<std::size_t>(n / sim.log_stride + 2));
  for (long k = 0;; ++k) {
    if (k % sim.log_stride == 0 || k == n) out.push_back(make_sample(static_cast<double>(k) * sim.dt, chart, s.x, s.v));
    if (k == n) break;
    const Chart& c = *chart;
    detail::integrate_step(s.x, s.v, sim.dt, sim.integrator,
                           [&](const Vector& x, const Vector& v) { return accel(chart, DsState{x, v}); });
    s.x = c.wrap(s.x);
    if (!s.x.allFinite() || !s.v.allFinite()) throw DivergenceError("reference_rollout: integration diverged");
    if (!atlas.empty() && !c.comfortable(s.x)) switch_chart(chart, s.x, s.v, atlas);
    require_in_domain(*chart, s.x);
  }
  return out;
}

}  // namespace detail

/// Integrates the DS directly on its manifold. With a non-empty atlas the
/// state migrates to another chart whenever it leaves the comfortable region
/// of the current one (the DS is re-expressed there through with_chart).
inline std::vector<RolloutSample> reference_rollout(const SecondOrderDS& ds, const DsState& init, const SimConfig& sim,
                                                    const std::vector<ChartPtr>& atlas = {}) {
  std::vector<SecondOrderDS> per_chart;
  for (const auto& c : atlas) per_chart.push_back(ds.with_chart(c));
  return detail::rollout(ds.chart, init, sim, atlas, [&](const ChartPtr& chart, const DsState& s) {
    if (chart.get() == ds.chart.get()) return geometric_acceleration(ds, s);
    for (std::size_t i = 0; i < atlas.size(); ++i) {
      if (atlas[i].get() == chart.get()) return geometric_acceleration(per_chart[i], s);
    }
    throw std::logic_error("reference_rollout: chart outside the atlas");
  });
}

/// Same, for a tree node treated as the base: its own DS or the combination
/// of its subtree.
inline std::vector<RolloutSample> reference_rollout(const TaskNode& node, const DsState& init, const SimConfig& sim,
                                                    std::optional<double> lambda = std::nullopt) {
  return detail::rollout(node.chart, init, sim, {},
                         [&](const ChartPtr&, const DsState& s) { return node_acceleration(node, s, lambda); });
}

/// The two-chart atlas covering S² away from the north pole.
inline std::vector<ChartPtr> sphere_atlas() { return {make_sphere_spherical(), make_sphere_stereographic()}; }

// ---------------------------------------------------------------------------
// Closed loop.

struct TrajectoryRecord {
  long tick = 0;
  double t = 0.0;
  Vector q, qd, qdd, tau;
  Eigen::Vector3d ee = Eigen::Vector3d::Zero();
  Vector qdd_d;
  double slack_norm = 0.0;
  KktReport kkt;
  int active_set = 0;
  std::vector<double> obs_dist;
  QpStatus status = QpStatus::solved;
  bool fallback = false;
  bool tree_ok = true;
};

struct RunMetrics {
  std::optional<double> ee_tracking_rmse;         // nullopt when the primary task is not an end-effector position
  double sphere_violation_max = 0.0;
  std::optional<double> min_obstacle_clearance;   // nullopt when the tree has no obstacle leaves
  long torque_limit_activations = 0;
  long solver_failures = 0;
  long tree_failures = 0;
  double qp_solve_time_mean = 0.0;
  double qp_solve_time_max = 0.0;
};

enum class RunStatus { completed, diverged };

struct RunResult {
  std::vector<TrajectoryRecord> records;
  std::vector<Eigen::Vector3d> reference_ee;  // aligned with records when available
  RunMetrics metrics;
  RunStatus status = RunStatus::completed;
  std::vector<std::string> events;
};

struct RunOptions {
  long start_tick = 0;        // first tick index; > 0 replays from a logged state
  bool track_reference = true;
};

namespace detail {

inline Eigen::Vector3d pad3(const Vector& v) {
  Eigen::Vector3d out = Eigen::Vector3d::Zero();
  for (int i = 0; i < std::min<int>(3, static_cast<int>(v.size())); ++i) out[i] = v[i];
  return out;
}

inline bool primary_is_ee(const RobotModel& model, const PbdsTree& tree) {
  if (tree.primary >= tree.children.size()) return false;
  const TaskNode& p = tree.children[tree.primary];
  return p.chart->kind() == ChartKind::euclidean && p.map.out_dim == model.task_dim() && p.map.kind == "forward_kinematics";
}

inline std::optional<std::vector<Eigen::Vector3d>> ee_reference(const RobotModel& model, const PbdsTree& tree,
                                                                const SimConfig& sim, const JointState& init,
                                                                long start_tick, std::vector<std::string>& events) {
  if (!primary_is_ee(model, tree)) return std::nullopt;
  const TaskNode& p = tree.children[tree.primary];
  const MapEval m = p.map.evaluate(init.q, init.qd);
  SimConfig rs = sim;
  rs.integrator = Integrator::rk4;
  rs.duration = static_cast<double>(sim.ticks() - start_tick) * sim.dt;
  if (rs.duration < rs.dt) return std::nullopt;
  try {
    const auto samples = p.is_leaf() ? reference_rollout(p.ds(), {m.value, m.J * init.qd}, rs)
                                     : reference_rollout(p, {m.value, m.J * init.qd}, rs, tree.regularization);
    std::vector<Eigen::Vector3d> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(pad3(s.x));
    return out;
  } catch (const std::exception& e) {
    events.push_back(std::string("reference rollout failed: ") + e.what());
    return std::nullopt;
  }
}

inline double sphere_violation(const PbdsTree& tree, const DsState& base) {
  double worst = 0.0;
  visit_nodes(tree, base, [&](const TaskNode& node, const std::string&, const DsState& s) {
    if (is_sphere(*node.chart)) worst = std::max(worst, std::abs(node.chart->embed(s.x).norm() - 1.0));
  });
  return worst;
}

}  // namespace detail

/// Per tick: q̈_d from the tree, the primary task row for the QP, τ from the
/// controller, one plant step. Records every log_stride ticks.
inline RunResult run_closed_loop(const RobotModel& model, const PbdsTree& tree, const ControllerConfig& cfg,
                                 const SimConfig& sim, const JointState& init, const RunOptions& opt = {}) {
  validate_model(model);
  validate_sim_config(sim);
  if (tree.root_dim != model.dof()) throw DimensionError("tree root dimension must equal the robot's joint count");
  if (init.q.size() != model.dof() || init.qd.size() != model.dof()) throw DimensionError("initial state dimension mismatch");
  if (tree.primary >= tree.children.size()) throw std::invalid_argument("tree has no primary task");

  RunResult res;
  QpController ctrl(model, cfg);
  const long n = sim.ticks();
  const std::size_t n_obs = obstacle_count(tree);
  std::optional<std::vector<Eigen::Vector3d>> ref;
  if (opt.track_reference) ref = detail::ee_reference(model, tree, sim, init, opt.start_tick, res.events);

  JointState state = init;
  double err2 = 0.0;
  long n_err = 0;
  double time_sum = 0.0;
  long n_ticks = 0;
  for (long k = opt.start_tick; k < n; ++k) {
    const DsState base{state.q, state.qd};
    TreeResolution tr;
    bool tree_ok = true;
    try {
      tr = resolve_tree_detailed(tree, base);
    } catch (const DomainError& e) {
      tree_ok = false;
      res.events.push_back("tick " + std::to_string(k) + ": " + e.what());
    } catch (const ChartDegenerateError& e) {
      tree_ok = false;
      res.events.push_back("tick " + std::to_string(k) + ": " + e.what());
    } catch (const SingularGramError& e) {
      tree_ok = false;
      res.events.push_back("tick " + std::to_string(k) + ": " + e.what());
    }

    TickResult tick;
    if (tree_ok) {
      tick = ctrl.tick(state, tr.qdd_desired, tr.primary_accel, tr.primary_J, tr.primary_jdot_qd);
      time_sum += tick.diag.solve_seconds;
      res.metrics.qp_solve_time_max = std::max(res.metrics.qp_solve_time_max, tick.diag.solve_seconds);
      ++n_ticks;
      if (tick.diag.status != QpStatus::solved) ++res.metrics.solver_failures;
      if (tick.diag.torque_limit_active) ++res.metrics.torque_limit_activations;
    } else {
      ++res.metrics.tree_failures;
      tick.tau = ctrl.last_tau();
      tick.diag.fallback = true;
      tr.qdd_desired = Vector::Zero(model.dof());
    }

    const long rel = k - opt.start_tick;
    if (rel % sim.log_stride == 0) {
      TrajectoryRecord r;
      r.tick = k;
      r.t = static_cast<double>(k) * sim.dt;
      r.q = state.q;
      r.qd = state.qd;
      r.tau = tick.tau;
      r.qdd = forward_dynamics(model, state, tick.tau);
      r.ee = detail::pad3(forward_kinematics(model, state.q));
      r.qdd_d = tr.qdd_desired;
      r.slack_norm = tick.diag.slack_norm;
      r.kkt = tick.diag.kkt;
      r.active_set = static_cast<int>(tick.diag.active_set.size());
      r.status = tick.diag.status;
      r.fallback = tick.diag.fallback;
      r.tree_ok = tree_ok;
      try {
        r.obs_dist = obstacle_clearances(tree, base);
        res.metrics.sphere_violation_max = std::max(res.metrics.sphere_violation_max, detail::sphere_violation(tree, base));
      } catch (const std::exception&) {
        r.obs_dist.assign(n_obs, std::numeric_limits<double>::quiet_NaN());
      }
      for (double d : r.obs_dist) {
        if (!std::isfinite(d)) continue;
        auto& m = res.metrics.min_obstacle_clearance;
        m = m ? std::min(*m, d) : d;
      }
      if (ref && static_cast<std::size_t>(rel / sim.log_stride) < ref->size()) {
        const Eigen::Vector3d& x = (*ref)[static_cast<std::size_t>(rel / sim.log_stride)];
        res.reference_ee.push_back(x);
        err2 += (r.ee - x).squaredNorm();
        ++n_err;
      }
      res.records.push_back(std::move(r));
    }

    try {
      state = step_plant(model, state, tick.tau, sim.dt, sim.integrator);
    } catch (const DivergenceError& e) {
      res.status = RunStatus::diverged;
      res.events.push_back("tick " + std::to_string(k) + ": " + e.what());
      break;
    }
  }
  if (n_err > 0) res.metrics.ee_tracking_rmse = std::sqrt(err2 / static_cast<double>(n_err));
  if (n_ticks > 0) res.metrics.qp_solve_time_mean = time_sum / static_cast<double>(n_ticks);
  return res;
}

/// Tracking RMSE restricted to records with t ≥ t_from.
inline double tracking_rmse_since(const RunResult& r, double t_from) {
  double acc = 0.0;
  long cnt = 0;
  for (std::size_t i = 0; i < r.records.size() && i < r.reference_ee.size(); ++i) {
    if (r.records[i].t + 1e-12 < t_from) continue;
    acc += (r.records[i].ee - r.reference_ee[i]).squaredNorm();
    ++cnt;
  }
  return cnt ? std::sqrt(acc / static_cast<double>(cnt)) : std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------------------
// Batch runner: independent runs in parallel, nothing shared but immutable inputs.

struct RunJob {
  RobotModel model;
  PbdsTree tree;
  ControllerConfig controller;
  SimConfig sim;
  JointState init;
};

inline std::vector<RunResult> run_batch(const std::vector<RunJob>& jobs, unsigned threads = 0) {
  std::vector<RunResult> out(jobs.size());
  std::vector<std::string> errors(jobs.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, jobs.size())));
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < jobs.size(); i += threads) {
        try {
          const RunJob& j = jobs[i];
          out[i] = run_closed_loop(j.model, j.tree, j.controller, j.sim, j.init);
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!errors[i].empty()) throw std::runtime_error("batch job " + std::to_string(i) + ": " + errors[i]);
  }
  return out;
}

}  // namespace pbds
