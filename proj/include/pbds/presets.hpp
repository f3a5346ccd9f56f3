#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pbds/scenario.hpp"

namespace pbds::presets {

inline const std::vector<std::string>& names() {
  static const std::vector<std::string> n{"euclidean_attractor", "sphere_geodesic", "sphere_attractor", "sphere_obstacles",
                                          "torque_limited_tracking"};
  return n;
}

// Sphere tasks share one geometry: spatial3r arm, sphere centred on the
// shoulder with the radius reached at a fixed elbow angle.
inline const std::vector<double>& sphere_center() {
  static const std::vector<double> c{0.0, 0.0, 0.3};
  return c;
}
inline constexpr double kSphereRadius = 0.6;

inline std::vector<double> sphere_start_q() { return {-0.7, -0.7, 1.445}; }
inline std::vector<double> sphere_target() { return {std::cos(0.7), std::sin(0.7), 0.0}; }

namespace detail {

inline NodeSpec leaf(std::string name, MapSpec map, ChartSpec chart, WeightSpec weight, PotentialSpec p, DissipationSpec d) {
  NodeSpec n;
  n.name = std::move(name);
  n.map = std::move(map);
  n.chart = std::move(chart);
  n.weight = std::move(weight);
  n.ds = DsSpec{std::move(p), std::move(d)};
  return n;
}

inline PotentialSpec quadratic(std::vector<double> target, double gain) {
  PotentialSpec p;
  p.kind = "quadratic";
  p.target = std::move(target);
  p.gain = gain;
  return p;
}

inline PotentialSpec geodesic(std::vector<double> target, double gain) {
  PotentialSpec p;
  p.kind = "geodesic_quadratic";
  p.target = std::move(target);
  p.gain = gain;
  return p;
}

inline DissipationSpec metric(double gain) {
  DissipationSpec d;
  d.kind = "metric";
  d.gain = gain;
  return d;
}

inline MapSpec map_of(std::string kind) {
  MapSpec m;
  m.kind = std::move(kind);
  return m;
}

inline ChartSpec chart_of(std::string kind, std::optional<int> dim = std::nullopt) {
  ChartSpec c;
  c.kind = std::move(kind);
  c.dim = dim;
  return c;
}

inline Scenario planar3_base(std::string name) {
  Scenario s;
  s.name = std::move(name);
  s.robot.preset = "planar3";
  s.tree.nodes.push_back(leaf("ee", map_of("forward_kinematics"), chart_of("euclidean", 2), 1.0,
                              quadratic({0.4, 0.5}, 16.0), metric(8.0)));
  // Redundancy: a light joint-space damper with no potential, so it does not
  // bias the end-effector equilibrium.
  s.tree.nodes.push_back(leaf("posture", map_of("identity"), chart_of("euclidean", 3), 0.01, PotentialSpec{}, metric(2.0)));
  s.sim.dt = 1e-3;
  s.sim.duration = 10.0;
  s.initial.q = {0.3, 0.6, 0.5};
  s.initial.qd = {0.0, 0.0, 0.0};
  return s;
}

inline NodeSpec radius_leaf() {
  MapSpec m = map_of("radial_distance");
  m.center = sphere_center();
  return leaf("radius", m, chart_of("euclidean", 1), 1.0, quadratic({kSphereRadius}, 25.0), metric(10.0));
}

inline MapSpec sphere_map() {
  MapSpec m = map_of("sphere_retraction");
  m.center = sphere_center();
  m.radius = kSphereRadius;
  return m;
}

// ee ∈ R³ → {sphere task, radius regulator}.
inline Scenario spatial_base(std::string name, NodeSpec sphere_node) {
  Scenario s;
  s.name = std::move(name);
  s.robot.preset = "spatial3r";
  NodeSpec ee;
  ee.name = "ee";
  ee.map = map_of("forward_kinematics");
  ee.chart = chart_of("euclidean", 3);
  ee.weight = 1.0;
  ee.children = {std::move(sphere_node), radius_leaf()};
  s.tree.nodes.push_back(std::move(ee));
  s.sim.dt = 1e-3;
  s.initial.q = sphere_start_q();
  s.initial.qd = {0.0, 0.0, 0.0};
  return s;
}

}  // namespace detail

inline Scenario euclidean_attractor() {
  Scenario s = detail::planar3_base("euclidean_attractor");
  s.robot.limits.tau_max = {100.0, 100.0, 100.0};
  s.robot.limits.v_max = {5.0, 5.0, 5.0};
  s.robot.limits.a_max = {200.0, 200.0, 200.0};
  s.robot.limits.q_min = {-3.0, -3.0, -3.0};
  s.robot.limits.q_max = {3.0, 3.0, 3.0};
  return s;
}

/// The tracking task with torque limits at 30% of the unconstrained peak
/// demand of euclidean_attractor (measured per joint).
inline Scenario torque_limited_tracking() {
  Scenario s = detail::planar3_base("torque_limited_tracking");
  s.robot.limits.tau_max = {3.37, 0.69, 0.168};
  return s;
}

inline Scenario sphere_geodesic() {
  Scenario s = detail::spatial_base(
      "sphere_geodesic", detail::leaf("sphere", detail::sphere_map(), detail::chart_of("sphere_spherical"), 1.0,
                                      PotentialSpec{}, DissipationSpec{}));
  s.initial.qd = {0.6, 0.0, 0.0};
  s.sim.duration = 5.0;
  return s;
}

inline Scenario sphere_attractor() {
  Scenario s = detail::spatial_base(
      "sphere_attractor", detail::leaf("sphere", detail::sphere_map(), detail::chart_of("sphere_spherical"), 1.0,
                                       detail::geodesic(sphere_target(), 4.0), detail::metric(4.0)));
  s.sim.duration = 15.0;
  return s;
}

struct Obstacle {
  std::vector<double> direction;
  double radius;  // angular radius (rad)
};

inline std::vector<Obstacle> sphere_obstacles_list() {
  return {{{1.0, 0.0, 0.05}, 0.15}, {{std::cos(0.4), std::sin(0.4), -0.25}, 0.1}};
}

/// Potential 𝒫 and dissipation 𝒟 as separate sub-tasks of the sphere node,
/// plus one half-line barrier task per obstacle.
inline Scenario sphere_obstacles() {
  NodeSpec sphere;
  sphere.name = "sphere";
  sphere.map = detail::sphere_map();
  sphere.chart = detail::chart_of("sphere_spherical");
  sphere.weight = 1.0;
  sphere.children.push_back(detail::leaf("potential", detail::map_of("identity"), detail::chart_of("sphere_spherical"), 1.0,
                                         detail::geodesic(sphere_target(), 8.0), DissipationSpec{}));
  sphere.children.push_back(detail::leaf("damping", detail::map_of("identity"), detail::chart_of("sphere_spherical"), 1.0,
                                         PotentialSpec{}, detail::metric(8.0)));
  int k = 0;
  for (const auto& o : sphere_obstacles_list()) {
    MapSpec m = detail::map_of("obstacle_distance");
    m.center = o.direction;
    m.radius = o.radius;
    ChartSpec c = detail::chart_of("half_line");
    c.beta = 4.0;
    c.sigma = 0.05;
    PotentialSpec p;
    p.kind = "barrier";
    p.alpha = 1e-3;
    p.cutoff = 0.2;
    DissipationSpec d;
    d.kind = "constant";
    d.matrix = WeightSpec(2.0);
    NodeSpec leaf = detail::leaf("obstacle_" + std::to_string(k++), m, c, 1.0, p, d);
    leaf.clearance_scale = kSphereRadius;
    sphere.children.push_back(std::move(leaf));
  }
  Scenario s = detail::spatial_base("sphere_obstacles", std::move(sphere));
  s.sim.duration = 20.0;
  return s;
}

inline Scenario by_name(const std::string& name) {
  if (name == "euclidean_attractor") return euclidean_attractor();
  if (name == "sphere_geodesic") return sphere_geodesic();
  if (name == "sphere_attractor") return sphere_attractor();
  if (name == "sphere_obstacles") return sphere_obstacles();
  if (name == "torque_limited_tracking") return torque_limited_tracking();
  throw std::invalid_argument("unknown preset '" + name + "'");
}

}  // namespace pbds::presets
