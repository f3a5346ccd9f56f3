#pragma once

#include <charconv>
#include <cmath>
#include <ostream>
#include <string>

#include <json.hpp>

#include "pbds/simulator.hpp"

namespace pbds {

/// Shortest decimal that round-trips to the same double.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string trajectory_csv_header(int n, int n_tau, std::size_t n_obs) {
  std::string h = "t";
  for (int i = 0; i < n; ++i) h += ",q" + std::to_string(i);
  for (int i = 0; i < n; ++i) h += ",qd" + std::to_string(i);
  for (int i = 0; i < n_tau; ++i) h += ",tau" + std::to_string(i);
  h += ",ee_x,ee_y,ee_z";
  for (int i = 0; i < n; ++i) h += ",qdd_d_" + std::to_string(i);
  h += ",slack_norm,kkt_stat,kkt_eq,kkt_ineq,active_set";
  for (std::size_t i = 0; i < n_obs; ++i) h += ",obs_dist_" + std::to_string(i);
  return h;
}

inline void write_trajectory_csv(std::ostream& os, const std::vector<TrajectoryRecord>& records, int n, int n_tau,
                                 std::size_t n_obs) {
  os << trajectory_csv_header(n, n_tau, n_obs) << '\n';
  auto put = [&](double v) { os << ',' << format_number(v); };
  for (const auto& r : records) {
    os << format_number(r.t);
    for (int i = 0; i < n; ++i) put(r.q[i]);
    for (int i = 0; i < n; ++i) put(r.qd[i]);
    for (int i = 0; i < n_tau; ++i) put(r.tau[i]);
    for (int i = 0; i < 3; ++i) put(r.ee[i]);
    for (int i = 0; i < n; ++i) put(r.qdd_d[i]);
    put(r.slack_norm);
    put(r.kkt.stationarity);
    put(r.kkt.primal_equality);
    put(r.kkt.primal_inequality);
    os << ',' << r.active_set;
    for (std::size_t i = 0; i < n_obs; ++i) put(i < r.obs_dist.size() ? r.obs_dist[i] : std::nan(""));
    os << '\n';
  }
}

inline void write_reference_csv(std::ostream& os, const std::vector<RolloutSample>& samples) {
  if (samples.empty()) return;
  const auto d = samples.front().x.size();
  std::size_t emb = 0;
  for (const auto& s : samples) emb = std::max<std::size_t>(emb, static_cast<std::size_t>(s.embedded.size()));
  os << "t,chart";
  for (Eigen::Index i = 0; i < d; ++i) os << ",x" << i;
  for (Eigen::Index i = 0; i < d; ++i) os << ",xd" << i;
  for (std::size_t i = 0; i < emb; ++i) os << ",p" << i;
  os << '\n';
  for (const auto& s : samples) {
    os << format_number(s.t) << ',' << s.chart->name();
    for (Eigen::Index i = 0; i < d; ++i) os << ',' << format_number(s.x[i]);
    for (Eigen::Index i = 0; i < d; ++i) os << ',' << format_number(s.v[i]);
    for (std::size_t i = 0; i < emb; ++i) {
      os << ',' << format_number(i < static_cast<std::size_t>(s.embedded.size()) ? s.embedded[static_cast<Eigen::Index>(i)] : std::nan(""));
    }
    os << '\n';
  }
}

inline nlohmann::json metrics_json(const RunMetrics& m) {
  nlohmann::json j;
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j["ee_tracking_rmse"] = opt(m.ee_tracking_rmse);
  j["sphere_violation_max"] = m.sphere_violation_max;
  j["min_obstacle_clearance"] = opt(m.min_obstacle_clearance);
  j["torque_limit_activations"] = m.torque_limit_activations;
  j["solver_failures"] = m.solver_failures;
  j["tree_failures"] = m.tree_failures;
  j["qp_solve_time_mean"] = m.qp_solve_time_mean;
  j["qp_solve_time_max"] = m.qp_solve_time_max;
  return j;
}

inline void write_metrics_json(std::ostream& os, const RunResult& r) {
  nlohmann::json j = metrics_json(r.metrics);
  j["status"] = r.status == RunStatus::completed ? "completed" : "diverged";
  j["records"] = r.records.size();
  const std::size_t shown = std::min<std::size_t>(r.events.size(), 50);
  j["events"] = std::vector<std::string>(r.events.begin(), r.events.begin() + static_cast<std::ptrdiff_t>(shown));
  j["events_total"] = r.events.size();
  os << j.dump(2) << '\n';
}

}  // namespace pbds
