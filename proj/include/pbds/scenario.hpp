#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pbds/controller.hpp"
#include "pbds/robot.hpp"
#include "pbds/simulator.hpp"
#include "pbds/tree.hpp"

namespace pbds {

// Scenario documents are JSON. The structs below mirror the document one to
// one, so parse ∘ serialize is the identity; build() turns them into models.

using Rows = std::vector<std::vector<double>>;
// Scalar (s·I), diagonal, or full s × s.
using WeightSpec = std::variant<double, std::vector<double>, Rows>;

struct LimitsSpec {
  // Empty means unbounded; individual entries may be ±inf (null in JSON).
  std::vector<double> q_min, q_max, v_max, a_max, tau_max;
  bool operator==(const LimitsSpec&) const = default;
};

struct RobotSpec {
  std::string preset;
  std::optional<std::vector<double>> lengths, masses;
  std::optional<std::string> body;
  std::optional<std::vector<double>> gravity;
  LimitsSpec limits;
  bool operator==(const RobotSpec&) const = default;
};

struct MapSpec {
  std::string kind;
  Rows matrix;
  std::vector<double> offset;
  std::vector<double> center;
  std::optional<double> radius;
  bool operator==(const MapSpec&) const = default;
};

struct ChartSpec {
  std::string kind;
  std::optional<int> dim;
  std::optional<double> beta, sigma;
  bool operator==(const ChartSpec&) const = default;
};

struct PotentialSpec {
  std::string kind = "zero";
  std::vector<double> target;
  std::optional<double> gain, alpha, cutoff;
  bool operator==(const PotentialSpec&) const = default;
};

struct DissipationSpec {
  std::string kind = "zero";
  std::optional<double> gain;
  std::optional<WeightSpec> matrix;
  bool operator==(const DissipationSpec&) const = default;
};

struct DsSpec {
  PotentialSpec potential;
  DissipationSpec dissipation;
  bool operator==(const DsSpec&) const = default;
};

struct NodeSpec {
  std::string name;
  MapSpec map;
  ChartSpec chart;
  WeightSpec weight = 1.0;
  std::optional<DsSpec> ds;
  std::vector<NodeSpec> children;
  std::optional<double> clearance_scale;
  bool operator==(const NodeSpec&) const = default;
};

struct TreeSpec {
  std::vector<NodeSpec> nodes;
  std::optional<double> regularization;
  int primary = 0;
  bool operator==(const TreeSpec&) const = default;
};

struct ControllerSpec {
  std::optional<WeightSpec> Q, R;
  std::optional<double> dt_limits;
  bool operator==(const ControllerSpec&) const = default;
};

struct SimSpec {
  double dt = 1e-3;
  double duration = 10.0;
  std::string integrator = "semi_implicit_euler";
  int log_stride = 1;
  bool operator==(const SimSpec&) const = default;
};

struct InitialSpec {
  std::vector<double> q, qd;
  bool operator==(const InitialSpec&) const = default;
};

struct OutputSpec {
  std::optional<std::string> trajectory, metrics, reference;
  bool operator==(const OutputSpec&) const = default;
};

struct Scenario {
  std::string name;
  RobotSpec robot;
  TreeSpec tree;
  ControllerSpec controller;
  SimSpec sim;
  InitialSpec initial;
  OutputSpec output;
  bool operator==(const Scenario&) const = default;
};

/// Every problem found in a scenario document, each prefixed by its path.
class ScenarioError : public std::runtime_error {
 public:
  explicit ScenarioError(std::vector<std::string> errors)
      : std::runtime_error(join(errors)), errors_(std::move(errors)) {}
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  static std::string join(const std::vector<std::string>& e) {
    std::string s;
    for (const auto& x : e) s += (s.empty() ? "" : "\n") + x;
    return s;
  }
  std::vector<std::string> errors_;
};

namespace detail {

using nlohmann::json;

struct PresetDefaults {
  int dof;
  std::vector<double> lengths, masses;
};

inline std::optional<PresetDefaults> preset_defaults(const std::string& name) {
  if (name == "planar2") return PresetDefaults{2, {1.0, 1.0}, {1.0, 1.0}};
  if (name == "planar3") return PresetDefaults{3, {0.5, 0.4, 0.3}, {1.0, 0.8, 0.5}};
  if (name == "spatial3r") return PresetDefaults{3, {0.3, 0.4, 0.4}, {1.0, 1.0, 0.8}};
  return std::nullopt;
}

class Reader {
 public:
  std::vector<std::string> errors;

  void fail(const std::string& path, const std::string& msg) { errors.push_back(path + ": " + msg); }

  static std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

  bool object(const json& j, const std::string& path) {
    if (j.is_object()) return true;
    fail(path.empty() ? "(root)" : path, "expected an object");
    return false;
  }

  void known_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || it.key() == a;
      if (!ok) fail(join(path, it.key()), "unknown key");
    }
  }

  const json* get(const json& j, const std::string& path, const char* key, bool required) {
    auto it = j.find(key);
    if (it == j.end()) {
      if (required) fail(join(path, key), "missing required key");
      return nullptr;
    }
    return &*it;
  }

  std::optional<double> number(const json& j, const std::string& path, const char* key, bool required = false) {
    const json* v = get(j, path, key, required);
    if (!v) return std::nullopt;
    if (!v->is_number()) {
      fail(join(path, key), "expected a number");
      return std::nullopt;
    }
    return v->get<double>();
  }

  std::optional<std::string> string(const json& j, const std::string& path, const char* key, bool required = false) {
    const json* v = get(j, path, key, required);
    if (!v) return std::nullopt;
    if (!v->is_string()) {
      fail(join(path, key), "expected a string");
      return std::nullopt;
    }
    return v->get<std::string>();
  }

  std::optional<int> integer(const json& j, const std::string& path, const char* key, bool required = false) {
    const json* v = get(j, path, key, required);
    if (!v) return std::nullopt;
    if (!v->is_number_integer()) {
      fail(join(path, key), "expected an integer");
      return std::nullopt;
    }
    return v->get<int>();
  }

  // Array of numbers; null entries become `null_as` when allowed.
  std::optional<std::vector<double>> numbers(const json& v, const std::string& path,
                                             std::optional<double> null_as = std::nullopt) {
    if (!v.is_array()) {
      fail(path, "expected an array of numbers");
      return std::nullopt;
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i].is_number()) {
        out.push_back(v[i].get<double>());
      } else if (v[i].is_null() && null_as) {
        out.push_back(*null_as);
      } else {
        fail(path + "[" + std::to_string(i) + "]", null_as ? "expected a number or null" : "expected a number");
        return std::nullopt;
      }
    }
    return out;
  }

  std::optional<std::vector<double>> numbers(const json& j, const std::string& path, const char* key, bool required,
                                             std::optional<double> null_as = std::nullopt) {
    const json* v = get(j, path, key, required);
    if (!v) return std::nullopt;
    return numbers(*v, join(path, key), null_as);
  }

  std::optional<Rows> matrix(const json& v, const std::string& path) {
    if (!v.is_array() || v.empty()) {
      fail(path, "expected a non-empty array of rows");
      return std::nullopt;
    }
    Rows out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      auto r = numbers(v[i], path + "[" + std::to_string(i) + "]");
      if (!r) return std::nullopt;
      if (!out.empty() && r->size() != out.front().size()) {
        fail(path, "rows have different lengths");
        return std::nullopt;
      }
      out.push_back(*r);
    }
    return out;
  }

  std::optional<WeightSpec> weight(const json& v, const std::string& path) {
    if (v.is_number()) return WeightSpec(v.get<double>());
    if (v.is_array() && !v.empty() && v[0].is_array()) {
      auto m = matrix(v, path);
      if (!m) return std::nullopt;
      return WeightSpec(*m);
    }
    if (v.is_array()) {
      auto d = numbers(v, path);
      if (!d) return std::nullopt;
      return WeightSpec(*d);
    }
    fail(path, "expected a number, a diagonal array, or a matrix");
    return std::nullopt;
  }
};

inline std::pair<int, int> line_column(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  // nlohmann reports the position one past the offending character.
  return {line, std::max(1, col - 1)};
}

inline void read_limits(Reader& r, const json& j, const std::string& path, LimitsSpec& l) {
  if (!r.object(j, path)) return;
  r.known_keys(j, path, {"q_min", "q_max", "v_max", "a_max", "tau_max"});
  const double inf = std::numeric_limits<double>::infinity();
  if (auto v = r.numbers(j, path, "q_min", false, -inf)) l.q_min = *v;
  if (auto v = r.numbers(j, path, "q_max", false, inf)) l.q_max = *v;
  if (auto v = r.numbers(j, path, "v_max", false, inf)) l.v_max = *v;
  if (auto v = r.numbers(j, path, "a_max", false, inf)) l.a_max = *v;
  if (auto v = r.numbers(j, path, "tau_max", false, inf)) l.tau_max = *v;
}

inline void read_robot(Reader& r, const json& j, const std::string& path, RobotSpec& s) {
  if (!r.object(j, path)) return;
  r.known_keys(j, path, {"preset", "lengths", "masses", "body", "gravity", "limits"});
  if (auto v = r.string(j, path, "preset", true)) s.preset = *v;
  s.lengths = r.numbers(j, path, "lengths", false);
  s.masses = r.numbers(j, path, "masses", false);
  s.body = r.string(j, path, "body");
  s.gravity = r.numbers(j, path, "gravity", false);
  if (const json* l = r.get(j, path, "limits", false)) read_limits(r, *l, Reader::join(path, "limits"), s.limits);
}

inline void read_map(Reader& r, const json& j, const std::string& path, MapSpec& m) {
  if (!r.object(j, path)) return;
  r.known_keys(j, path, {"kind", "matrix", "offset", "center", "radius"});
  if (auto v = r.string(j, path, "kind", true)) m.kind = *v;
  if (const json* v = r.get(j, path, "matrix", false)) {
    if (auto mm = r.matrix(*v, Reader::join(path, "matrix"))) m.matrix = *mm;
  }
  if (auto v = r.numbers(j, path, "offset", false)) m.offset = *v;
  if (auto v = r.numbers(j, path, "center", false)) m.center = *v;
  m.radius = r.number(j, path, "radius");
}

inline void read_chart(Reader& r, const json& j, const std::string& path, ChartSpec& c) {
  if (!r.object(j, path)) return;
  r.known_keys(j, path, {"kind", "dim", "beta", "sigma"});
  if (auto v = r.string(j, path, "kind", true)) c.kind = *v;
  c.dim = r.integer(j, path, "dim");
  c.beta = r.number(j, path, "beta");
  c.sigma = r.number(j, path, "sigma");
}

inline void read_ds(Reader& r, const json& j, const std::string& path, DsSpec& ds) {
  if (!r.object(j, path)) return;
  r.known_keys(j, path, {"potential", "dissipation"});
  if (const json* p = r.get(j, path, "potential", false)) {
    const std::string pp = Reader::join(path, "potential");
    if (r.object(*p, pp)) {
      r.known_keys(*p, pp, {"kind", "target", "gain", "alpha", "cutoff"});
      if (auto v = r.string(*p, pp, "kind", true)) ds.potential.kind = *v;
      if (auto v = r.numbers(*p, pp, "target", false)) ds.potential.target = *v;
      ds.potential.gain = r.number(*p, pp, "gain");
      ds.potential.alpha = r.number(*p, pp, "alpha");
      ds.potential.cutoff = r.number(*p, pp, "cutoff");
    }
  }
  if (const json* d = r.get(j, path, "dissipation", false)) {
    const std::string dp = Reader::join(path, "dissipation");
    if (r.object(*d, dp)) {
      r.known_keys(*d, dp, {"kind", "gain", "matrix"});
      if (auto v = r.string(*d, dp, "kind", true)) ds.dissipation.kind = *v;
      ds.dissipation.gain = r.number(*d, dp, "gain");
      if (const json* m = r.get(*d, dp, "matrix", false)) ds.dissipation.matrix = r.weight(*m, Reader::join(dp, "matrix"));
    }
  }
}

inline void read_node(Reader& r, const json& j, const std::string& path, NodeSpec& n) {
  if (!r.object(j, path)) return;
  r.known_keys(j, path, {"name", "map", "chart", "weight", "ds", "children", "clearance_scale"});
  if (auto v = r.string(j, path, "name", true)) n.name = *v;
  if (const json* m = r.get(j, path, "map", true)) read_map(r, *m, Reader::join(path, "map"), n.map);
  if (const json* c = r.get(j, path, "chart", true)) read_chart(r, *c, Reader::join(path, "chart"), n.chart);
  if (const json* w = r.get(j, path, "weight", false)) {
    if (auto ws = r.weight(*w, Reader::join(path, "weight"))) n.weight = *ws;
  }
  if (const json* d = r.get(j, path, "ds", false)) {
    n.ds.emplace();
    read_ds(r, *d, Reader::join(path, "ds"), *n.ds);
  }
  if (const json* c = r.get(j, path, "children", false)) {
    const std::string cp = Reader::join(path, "children");
    if (!c->is_array()) {
      r.fail(cp, "expected an array of nodes");
    } else {
      for (std::size_t i = 0; i < c->size(); ++i) {
        n.children.emplace_back();
        read_node(r, (*c)[i], cp + "[" + std::to_string(i) + "]", n.children.back());
      }
    }
  }
  n.clearance_scale = r.number(j, path, "clearance_scale");
}

inline void read_tree(Reader& r, const json& j, const std::string& path, TreeSpec& t) {
  if (!r.object(j, path)) return;
  r.known_keys(j, path, {"nodes", "regularization", "primary"});
  if (const json* nodes = r.get(j, path, "nodes", true)) {
    const std::string np = Reader::join(path, "nodes");
    if (!nodes->is_array()) {
      r.fail(np, "expected an array of nodes");
    } else {
      for (std::size_t i = 0; i < nodes->size(); ++i) {
        t.nodes.emplace_back();
        read_node(r, (*nodes)[i], np + "[" + std::to_string(i) + "]", t.nodes.back());
      }
    }
  }
  t.regularization = r.number(j, path, "regularization");
  if (auto v = r.integer(j, path, "primary")) t.primary = *v;
}

inline void read_controller(Reader& r, const json& j, const std::string& path, ControllerSpec& c) {
  if (!r.object(j, path)) return;
  r.known_keys(j, path, {"Q", "R", "dt_limits"});
  if (const json* q = r.get(j, path, "Q", false)) c.Q = r.weight(*q, Reader::join(path, "Q"));
  if (const json* q = r.get(j, path, "R", false)) c.R = r.weight(*q, Reader::join(path, "R"));
  c.dt_limits = r.number(j, path, "dt_limits");
}

inline void read_sim(Reader& r, const json& j, const std::string& path, SimSpec& s) {
  if (!r.object(j, path)) return;
  r.known_keys(j, path, {"dt", "duration", "integrator", "log_stride"});
  if (auto v = r.number(j, path, "dt")) s.dt = *v;
  if (auto v = r.number(j, path, "duration")) s.duration = *v;
  if (auto v = r.string(j, path, "integrator")) s.integrator = *v;
  if (auto v = r.integer(j, path, "log_stride")) s.log_stride = *v;
}

inline void read_initial(Reader& r, const json& j, const std::string& path, InitialSpec& s) {
  if (!r.object(j, path)) return;
  r.known_keys(j, path, {"q", "qd"});
  if (auto v = r.numbers(j, path, "q", true)) s.q = *v;
  if (auto v = r.numbers(j, path, "qd", false)) s.qd = *v;
}

inline void read_output(Reader& r, const json& j, const std::string& path, OutputSpec& o) {
  if (!r.object(j, path)) return;
  r.known_keys(j, path, {"trajectory", "metrics", "reference"});
  o.trajectory = r.string(j, path, "trajectory");
  o.metrics = r.string(j, path, "metrics");
  o.reference = r.string(j, path, "reference");
}

// ---------------------------------------------------------------------------
// Semantic validation (ranges and dimensions), run after a successful read.

inline int weight_dim(const WeightSpec& w) {
  if (std::holds_alternative<double>(w)) return -1;  // any size
  if (auto d = std::get_if<std::vector<double>>(&w)) return static_cast<int>(d->size());
  return static_cast<int>(std::get<Rows>(w).size());
}

inline Matrix weight_matrix(const WeightSpec& w, int s) {
  if (auto x = std::get_if<double>(&w)) return *x * Matrix::Identity(s, s);
  if (auto d = std::get_if<std::vector<double>>(&w)) return Eigen::Map<const Vector>(d->data(), s).asDiagonal();
  const Rows& rows = std::get<Rows>(w);
  Matrix m(s, s);
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) m(i, j) = rows[i][j];
  return m;
}

inline void check_weight(Reader& r, const WeightSpec& w, int s, const std::string& path, bool definite) {
  const int d = weight_dim(w);
  if (d >= 0 && d != s) {
    r.fail(path, "expected size " + std::to_string(s) + ", got " + std::to_string(d));
    return;
  }
  if (auto rows = std::get_if<Rows>(&w)) {
    for (const auto& row : *rows) {
      if (static_cast<int>(row.size()) != s) {
        r.fail(path, "matrix must be " + std::to_string(s) + " x " + std::to_string(s));
        return;
      }
    }
  }
  const Matrix m = weight_matrix(w, s);
  if (!m.allFinite()) {
    r.fail(path, "entries must be finite");
    return;
  }
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    r.fail(path, "matrix must be symmetric");
    return;
  }
  const double lo = s > 0 ? Eigen::SelfAdjointEigenSolver<Matrix>(m).eigenvalues().minCoeff() : 1.0;
  if (definite ? !(lo > 0.0) : !(lo >= -1e-12)) {
    r.fail(path, definite ? "must be positive definite" : "must be positive semidefinite");
  }
}

inline bool finite_all(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

struct SpaceInfo {
  int dim;
  std::string chart_kind;  // kind of the chart this space is expressed in
};

inline int chart_dim(const ChartSpec& c) {
  if (c.kind == "euclidean") return c.dim.value_or(-1);
  if (c.kind == "sphere_spherical" || c.kind == "sphere_stereographic") return 2;
  if (c.kind == "half_line") return 1;
  return -1;
}

inline bool is_sphere_kind(const std::string& k) { return k == "sphere_spherical" || k == "sphere_stereographic"; }

inline void check_node(Reader& r, const NodeSpec& n, const SpaceInfo& parent, bool at_root, int task_dim,
                       const std::string& path) {
  if (n.name.empty()) r.fail(Reader::join(path, "name"), "must be non-empty");

  // Map: input must match the parent space; output fixes this node's dimension.
  const std::string mp = Reader::join(path, "map");
  const MapSpec& m = n.map;
  int out = -1;
  if (m.kind == "forward_kinematics") {
    if (!at_root) r.fail(mp, "forward_kinematics maps must start at the configuration space");
    out = task_dim;
  } else if (m.kind == "identity") {
    out = parent.dim;
  } else if (m.kind == "linear") {
    if (m.matrix.empty()) {
      r.fail(Reader::join(mp, "matrix"), "required for linear maps");
    } else {
      if (static_cast<int>(m.matrix.front().size()) != parent.dim) {
        r.fail(Reader::join(mp, "matrix"), "column count must equal the parent dimension " + std::to_string(parent.dim));
      }
      out = static_cast<int>(m.matrix.size());
      if (!m.offset.empty() && static_cast<int>(m.offset.size()) != out) {
        r.fail(Reader::join(mp, "offset"), "length must equal the matrix row count");
      }
    }
  } else if (m.kind == "sphere_retraction") {
    if (parent.dim != 3) r.fail(mp, "sphere_retraction needs a 3-dimensional parent space");
    if (m.center.size() != 3) r.fail(Reader::join(mp, "center"), "must be a 3-vector");
    if (!m.radius) {
      r.fail(Reader::join(mp, "radius"), "missing required key");
    } else if (!(*m.radius > 0.0)) {
      r.fail(Reader::join(mp, "radius"), "must be positive");
    }
    out = 2;
  } else if (m.kind == "radial_distance") {
    if (static_cast<int>(m.center.size()) != parent.dim) {
      r.fail(Reader::join(mp, "center"), "length must equal the parent dimension " + std::to_string(parent.dim));
    }
    out = 1;
  } else if (m.kind == "obstacle_distance") {
    if (!is_sphere_kind(parent.chart_kind)) r.fail(mp, "obstacle_distance needs a sphere-chart parent");
    if (m.center.size() != 3) {
      r.fail(Reader::join(mp, "center"), "must be a 3-vector");
    } else if (!(Eigen::Map<const Vector>(m.center.data(), 3).norm() > 0.0)) {
      r.fail(Reader::join(mp, "center"), "must be non-zero");
    }
    if (!m.radius) {
      r.fail(Reader::join(mp, "radius"), "missing required key");
    } else if (!(*m.radius >= 0.0)) {
      r.fail(Reader::join(mp, "radius"), "obstacle radius must be non-negative");
    }
    out = 1;
  } else if (!m.kind.empty()) {
    r.fail(Reader::join(mp, "kind"), "unknown map kind '" + m.kind + "'");
  }
  for (const auto* v : {&m.offset, &m.center}) {
    if (!finite_all(*v)) r.fail(mp, "entries must be finite");
  }

  // Chart.
  const std::string cp = Reader::join(path, "chart");
  const ChartSpec& c = n.chart;
  if (c.kind == "euclidean") {
    if (!c.dim) {
      r.fail(Reader::join(cp, "dim"), "missing required key");
    } else if (*c.dim < 1) {
      r.fail(Reader::join(cp, "dim"), "must be positive");
    }
  } else if (c.kind == "half_line") {
    if (c.beta && !(*c.beta >= 0.0)) r.fail(Reader::join(cp, "beta"), "must be non-negative");
    if (c.sigma && !(*c.sigma > 0.0)) r.fail(Reader::join(cp, "sigma"), "must be positive");
  } else if (!is_sphere_kind(c.kind) && !c.kind.empty()) {
    r.fail(Reader::join(cp, "kind"), "unknown chart kind '" + c.kind + "'");
  }
  if (c.kind != "euclidean" && c.dim) r.fail(Reader::join(cp, "dim"), "only euclidean charts take a dimension");
  if (c.kind != "half_line" && (c.beta || c.sigma)) r.fail(cp, "beta and sigma apply only to half_line charts");
  const int s = chart_dim(c);
  if (out > 0 && s > 0 && out != s) {
    r.fail(path, "map output dimension " + std::to_string(out) + " does not match chart dimension " + std::to_string(s));
  }
  if (m.kind == "sphere_retraction" && !is_sphere_kind(c.kind)) r.fail(cp, "sphere_retraction maps need a sphere chart");
  if (m.kind == "identity" && c.kind != parent.chart_kind) r.fail(cp, "identity maps keep the parent's chart kind");

  if (s > 0) check_weight(r, n.weight, s, Reader::join(path, "weight"), false);
  if (n.clearance_scale && !(*n.clearance_scale > 0.0)) r.fail(Reader::join(path, "clearance_scale"), "must be positive");

  // Payload: exactly one of ds / children.
  if (n.ds && !n.children.empty()) r.fail(path, "a node has either ds or children, not both");
  if (!n.ds && n.children.empty()) r.fail(path, "a node needs ds (leaf) or a non-empty children list");
  if (n.ds && s > 0) {
    const std::string pp = Reader::join(path, "ds.potential");
    const PotentialSpec& p = n.ds->potential;
    auto need = [&](const std::optional<double>& v, const char* key, bool strict) {
      if (!v) {
        r.fail(Reader::join(pp, key), "missing required key");
      } else if (strict ? !(*v > 0.0) : !(*v >= 0.0)) {
        r.fail(Reader::join(pp, key), strict ? "must be positive" : "must be non-negative");
      }
    };
    if (p.kind == "zero") {
    } else if (p.kind == "quadratic") {
      need(p.gain, "gain", false);
      if (static_cast<int>(p.target.size()) != s) r.fail(Reader::join(pp, "target"), "length must equal the chart dimension " + std::to_string(s));
      if (!finite_all(p.target)) r.fail(Reader::join(pp, "target"), "entries must be finite");
    } else if (p.kind == "geodesic_quadratic") {
      need(p.gain, "gain", false);
      if (!is_sphere_kind(c.kind)) r.fail(Reader::join(pp, "kind"), "geodesic_quadratic needs a sphere chart");
      if (p.target.size() != 3 || !finite_all(p.target) || !(Eigen::Map<const Vector>(p.target.data(), static_cast<Eigen::Index>(p.target.size())).norm() > 0.0)) {
        r.fail(Reader::join(pp, "target"), "must be a non-zero ambient 3-vector");
      }
    } else if (p.kind == "barrier") {
      need(p.alpha, "alpha", false);
      need(p.cutoff, "cutoff", true);
      if (s != 1) r.fail(Reader::join(pp, "kind"), "barrier potentials live on 1-dimensional spaces");
    } else {
      r.fail(Reader::join(pp, "kind"), "unknown potential kind '" + p.kind + "'");
    }
    const std::string dp = Reader::join(path, "ds.dissipation");
    const DissipationSpec& d = n.ds->dissipation;
    if (d.kind == "zero") {
    } else if (d.kind == "metric") {
      if (!d.gain) {
        r.fail(Reader::join(dp, "gain"), "missing required key");
      } else if (!(*d.gain >= 0.0)) {
        r.fail(Reader::join(dp, "gain"), "must be non-negative");
      }
    } else if (d.kind == "constant") {
      if (!d.matrix) {
        r.fail(Reader::join(dp, "matrix"), "missing required key");
      } else {
        check_weight(r, *d.matrix, s, Reader::join(dp, "matrix"), false);
      }
    } else {
      r.fail(Reader::join(dp, "kind"), "unknown dissipation kind '" + d.kind + "'");
    }
  }
  const SpaceInfo here{s, c.kind};
  for (std::size_t i = 0; i < n.children.size(); ++i) {
    if (s > 0) check_node(r, n.children[i], here, false, task_dim, Reader::join(path, "children") + "[" + std::to_string(i) + "]");
  }
}

inline void check_scenario(Reader& r, const Scenario& sc) {
  const auto pd = preset_defaults(sc.robot.preset);
  if (!pd) {
    if (!sc.robot.preset.empty()) r.fail("robot.preset", "unknown preset '" + sc.robot.preset + "' (planar2, planar3, spatial3r)");
    return;  // dimensions below depend on the preset
  }
  const int n = pd->dof;
  const int task_dim = sc.robot.preset == "spatial3r" ? 3 : 2;
  auto positive_list = [&](const std::optional<std::vector<double>>& v, const char* key) {
    if (!v) return;
    if (static_cast<int>(v->size()) != n) r.fail(std::string("robot.") + key, "expected " + std::to_string(n) + " entries");
    for (double x : *v)
      if (!(x > 0.0) || !std::isfinite(x)) {
        r.fail(std::string("robot.") + key, "entries must be positive and finite");
        break;
      }
  };
  positive_list(sc.robot.lengths, "lengths");
  positive_list(sc.robot.masses, "masses");
  if (sc.robot.body && *sc.robot.body != "rod" && *sc.robot.body != "point") r.fail("robot.body", "expected 'rod' or 'point'");
  if (sc.robot.gravity && (sc.robot.gravity->size() != 3 || !finite_all(*sc.robot.gravity))) {
    r.fail("robot.gravity", "must be a finite 3-vector");
  }
  const LimitsSpec& l = sc.robot.limits;
  auto lim = [&](const std::vector<double>& v, const char* key, bool positive) {
    if (v.empty()) return;
    if (static_cast<int>(v.size()) != n) r.fail(std::string("robot.limits.") + key, "expected " + std::to_string(n) + " entries");
    for (double x : v)
      if (std::isnan(x) || (positive && !(x > 0.0))) {
        r.fail(std::string("robot.limits.") + key, positive ? "entries must be positive" : "entries must be numbers");
        break;
      }
  };
  lim(l.q_min, "q_min", false);
  lim(l.q_max, "q_max", false);
  lim(l.v_max, "v_max", true);
  lim(l.a_max, "a_max", true);
  lim(l.tau_max, "tau_max", true);
  if (l.q_min.size() == static_cast<std::size_t>(n) && l.q_max.size() == static_cast<std::size_t>(n)) {
    for (int i = 0; i < n; ++i)
      if (!(l.q_min[i] < l.q_max[i])) {
        r.fail("robot.limits", "q_min must be below q_max for every joint");
        break;
      }
  }

  if (sc.tree.nodes.empty()) r.fail("tree.nodes", "at least one task node is required");
  if (sc.tree.primary < 0 || sc.tree.primary >= static_cast<int>(sc.tree.nodes.size())) {
    if (!sc.tree.nodes.empty()) r.fail("tree.primary", "must index one of tree.nodes");
  }
  if (sc.tree.regularization && !(*sc.tree.regularization >= 0.0)) r.fail("tree.regularization", "must be non-negative");
  for (std::size_t i = 0; i < sc.tree.nodes.size(); ++i) {
    check_node(r, sc.tree.nodes[i], {n, "euclidean"}, true, task_dim, "tree.nodes[" + std::to_string(i) + "]");
  }

  if (sc.controller.Q) check_weight(r, *sc.controller.Q, n, "controller.Q", true);
  if (sc.controller.R) check_weight(r, *sc.controller.R, n, "controller.R", true);
  if (sc.controller.dt_limits && !(*sc.controller.dt_limits > 0.0)) r.fail("controller.dt_limits", "must be positive");

  if (!(sc.sim.dt > 0.0)) r.fail("sim.dt", "must be positive");
  if (!(sc.sim.duration >= sc.sim.dt)) r.fail("sim.duration", "must be at least dt");
  if (sc.sim.integrator != "semi_implicit_euler" && sc.sim.integrator != "rk4") {
    r.fail("sim.integrator", "expected 'semi_implicit_euler' or 'rk4'");
  }
  if (sc.sim.log_stride < 1) r.fail("sim.log_stride", "must be a positive integer");

  if (static_cast<int>(sc.initial.q.size()) != n) r.fail("initial.q", "expected " + std::to_string(n) + " entries");
  if (!sc.initial.qd.empty() && static_cast<int>(sc.initial.qd.size()) != n) {
    r.fail("initial.qd", "expected " + std::to_string(n) + " entries");
  }
  if (!finite_all(sc.initial.q) || !finite_all(sc.initial.qd)) r.fail("initial", "entries must be finite");
}

}  // namespace detail

/// Parses and validates a scenario document. Throws ScenarioError listing
/// every problem found (syntax errors carry line and column).
inline Scenario parse_scenario(const std::string& text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = detail::line_column(text, e.byte);
    std::string what = e.what();
    if (const auto at = what.find(": ", what.find("column")); at != std::string::npos) what = what.substr(at + 2);
    throw ScenarioError({"syntax error at line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + what});
  }
  detail::Reader r;
  Scenario sc;
  if (r.object(doc, "")) {
    r.known_keys(doc, "", {"name", "robot", "tree", "controller", "sim", "initial", "output"});
    if (auto v = r.string(doc, "", "name")) sc.name = *v;
    if (const json* j = r.get(doc, "", "robot", true)) detail::read_robot(r, *j, "robot", sc.robot);
    if (const json* j = r.get(doc, "", "tree", true)) detail::read_tree(r, *j, "tree", sc.tree);
    if (const json* j = r.get(doc, "", "controller", false)) detail::read_controller(r, *j, "controller", sc.controller);
    if (const json* j = r.get(doc, "", "sim", false)) detail::read_sim(r, *j, "sim", sc.sim);
    if (const json* j = r.get(doc, "", "initial", true)) detail::read_initial(r, *j, "initial", sc.initial);
    if (const json* j = r.get(doc, "", "output", false)) detail::read_output(r, *j, "output", sc.output);
    detail::check_scenario(r, sc);
  }
  if (!r.errors.empty()) throw ScenarioError(r.errors);
  return sc;
}

/// Validates an in-memory scenario with the same rules as the parser.
inline void validate_scenario(const Scenario& sc) {
  detail::Reader r;
  detail::check_scenario(r, sc);
  if (!r.errors.empty()) throw ScenarioError(r.errors);
}

// ---------------------------------------------------------------------------
// Serialization.

namespace detail {

inline nlohmann::json limit_json(const std::vector<double>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (double x : v) a.push_back(std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr));
  return a;
}

inline nlohmann::json weight_json(const WeightSpec& w) {
  return std::visit([](const auto& x) { return nlohmann::json(x); }, w);
}

inline nlohmann::json node_json(const NodeSpec& n) {
  nlohmann::json j;
  j["name"] = n.name;
  nlohmann::json m;
  m["kind"] = n.map.kind;
  if (!n.map.matrix.empty()) m["matrix"] = n.map.matrix;
  if (!n.map.offset.empty()) m["offset"] = n.map.offset;
  if (!n.map.center.empty()) m["center"] = n.map.center;
  if (n.map.radius) m["radius"] = *n.map.radius;
  j["map"] = m;
  nlohmann::json c;
  c["kind"] = n.chart.kind;
  if (n.chart.dim) c["dim"] = *n.chart.dim;
  if (n.chart.beta) c["beta"] = *n.chart.beta;
  if (n.chart.sigma) c["sigma"] = *n.chart.sigma;
  j["chart"] = c;
  j["weight"] = weight_json(n.weight);
  if (n.clearance_scale) j["clearance_scale"] = *n.clearance_scale;
  if (n.ds) {
    nlohmann::json p;
    p["kind"] = n.ds->potential.kind;
    if (!n.ds->potential.target.empty()) p["target"] = n.ds->potential.target;
    if (n.ds->potential.gain) p["gain"] = *n.ds->potential.gain;
    if (n.ds->potential.alpha) p["alpha"] = *n.ds->potential.alpha;
    if (n.ds->potential.cutoff) p["cutoff"] = *n.ds->potential.cutoff;
    nlohmann::json d;
    d["kind"] = n.ds->dissipation.kind;
    if (n.ds->dissipation.gain) d["gain"] = *n.ds->dissipation.gain;
    if (n.ds->dissipation.matrix) d["matrix"] = weight_json(*n.ds->dissipation.matrix);
    j["ds"] = {{"potential", p}, {"dissipation", d}};
  }
  if (!n.children.empty()) {
    j["children"] = nlohmann::json::array();
    for (const auto& ch : n.children) j["children"].push_back(node_json(ch));
  }
  return j;
}

}  // namespace detail

inline nlohmann::json to_json(const Scenario& sc) {
  nlohmann::json j;
  if (!sc.name.empty()) j["name"] = sc.name;
  nlohmann::json robot;
  robot["preset"] = sc.robot.preset;
  if (sc.robot.lengths) robot["lengths"] = *sc.robot.lengths;
  if (sc.robot.masses) robot["masses"] = *sc.robot.masses;
  if (sc.robot.body) robot["body"] = *sc.robot.body;
  if (sc.robot.gravity) robot["gravity"] = *sc.robot.gravity;
  nlohmann::json lim = nlohmann::json::object();
  const LimitsSpec& l = sc.robot.limits;
  if (!l.q_min.empty()) lim["q_min"] = detail::limit_json(l.q_min);
  if (!l.q_max.empty()) lim["q_max"] = detail::limit_json(l.q_max);
  if (!l.v_max.empty()) lim["v_max"] = detail::limit_json(l.v_max);
  if (!l.a_max.empty()) lim["a_max"] = detail::limit_json(l.a_max);
  if (!l.tau_max.empty()) lim["tau_max"] = detail::limit_json(l.tau_max);
  if (!lim.empty()) robot["limits"] = lim;
  j["robot"] = robot;

  nlohmann::json tree;
  tree["nodes"] = nlohmann::json::array();
  for (const auto& n : sc.tree.nodes) tree["nodes"].push_back(detail::node_json(n));
  if (sc.tree.regularization) tree["regularization"] = *sc.tree.regularization;
  tree["primary"] = sc.tree.primary;
  j["tree"] = tree;

  nlohmann::json ctrl = nlohmann::json::object();
  if (sc.controller.Q) ctrl["Q"] = detail::weight_json(*sc.controller.Q);
  if (sc.controller.R) ctrl["R"] = detail::weight_json(*sc.controller.R);
  if (sc.controller.dt_limits) ctrl["dt_limits"] = *sc.controller.dt_limits;
  j["controller"] = ctrl;

  j["sim"] = {{"dt", sc.sim.dt}, {"duration", sc.sim.duration}, {"integrator", sc.sim.integrator},
              {"log_stride", sc.sim.log_stride}};
  nlohmann::json init;
  init["q"] = sc.initial.q;
  if (!sc.initial.qd.empty()) init["qd"] = sc.initial.qd;
  j["initial"] = init;
  nlohmann::json out = nlohmann::json::object();
  if (sc.output.trajectory) out["trajectory"] = *sc.output.trajectory;
  if (sc.output.metrics) out["metrics"] = *sc.output.metrics;
  if (sc.output.reference) out["reference"] = *sc.output.reference;
  if (!out.empty()) j["output"] = out;
  return j;
}

inline std::string serialize(const Scenario& sc) { return to_json(sc).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Construction.

struct BuiltScenario {
  RobotModel model;
  PbdsTree tree;
  ControllerConfig controller;
  SimConfig sim;
  JointState initial;
};

namespace detail {

inline Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

inline ChartPtr build_chart(const ChartSpec& c) {
  if (c.kind == "euclidean") return make_euclidean(*c.dim);
  if (c.kind == "sphere_spherical") return make_sphere_spherical();
  if (c.kind == "sphere_stereographic") return make_sphere_stereographic();
  return make_half_line(c.beta.value_or(0.0), c.sigma.value_or(1.0));
}

inline TaskNode build_node(const NodeSpec& n, const RobotModel& model, const ChartPtr& parent_chart, int parent_dim) {
  TaskNode node;
  node.name = n.name;
  node.chart = build_chart(n.chart);
  const int s = node.chart->dim();
  const MapSpec& m = n.map;
  if (m.kind == "forward_kinematics") {
    node.map = forward_kinematics_map(model);
  } else if (m.kind == "identity") {
    node.map = identity_map(parent_dim);
  } else if (m.kind == "linear") {
    Matrix a(static_cast<Eigen::Index>(m.matrix.size()), parent_dim);
    for (std::size_t i = 0; i < m.matrix.size(); ++i) a.row(static_cast<Eigen::Index>(i)) = to_vector(m.matrix[i]).transpose();
    node.map = linear_map(a, m.offset.empty() ? Vector::Zero(a.rows()) : to_vector(m.offset));
  } else if (m.kind == "sphere_retraction") {
    node.map = sphere_retraction_map(node.chart, to_vector(m.center), *m.radius);
  } else if (m.kind == "radial_distance") {
    node.map = radial_distance_map(to_vector(m.center));
  } else {
    node.map = obstacle_distance_map(parent_chart, to_vector(m.center), *m.radius);
  }
  node.weight = weight_matrix(n.weight, s);
  node.clearance_scale = n.clearance_scale;
  if (n.ds) {
    SecondOrderDS ds;
    ds.chart = node.chart;
    const PotentialSpec& p = n.ds->potential;
    if (p.kind == "quadratic") {
      ds.potential = quadratic_potential(to_vector(p.target), *p.gain);
    } else if (p.kind == "geodesic_quadratic") {
      ds.potential = geodesic_quadratic_potential(to_vector(p.target), *p.gain);
    } else if (p.kind == "barrier") {
      ds.potential = barrier_potential(*p.alpha, *p.cutoff);
    } else {
      ds.potential = zero_potential();
    }
    const DissipationSpec& d = n.ds->dissipation;
    if (d.kind == "metric") {
      ds.dissipation = metric_damping(*d.gain);
    } else if (d.kind == "constant") {
      ds.dissipation = constant_damping(weight_matrix(*d.matrix, s));
    } else {
      ds.dissipation = zero_dissipation();
    }
    node.payload = std::move(ds);
  } else {
    std::vector<TaskNode> kids;
    for (const auto& c : n.children) kids.push_back(build_node(c, model, node.chart, s));
    node.payload = std::move(kids);
  }
  return node;
}

}  // namespace detail

inline RobotModel build_robot(const RobotSpec& r) {
  const auto pd = detail::preset_defaults(r.preset);
  if (!pd) throw ScenarioError({"robot.preset: unknown preset '" + r.preset + "'"});
  const auto lengths = r.lengths.value_or(pd->lengths);
  const auto masses = r.masses.value_or(pd->masses);
  const BodyKind body = r.body.value_or("rod") == "point" ? BodyKind::point : BodyKind::rod;
  RobotModel m = r.preset == "spatial3r" ? make_spatial3r(lengths, masses, body) : make_planar(lengths, masses, body);
  if (r.gravity) m.gravity = Vec3((*r.gravity)[0], (*r.gravity)[1], (*r.gravity)[2]);
  const LimitsSpec& l = r.limits;
  auto apply = [](Vector& dst, const std::vector<double>& src) {
    if (!src.empty()) dst = detail::to_vector(src);
  };
  apply(m.limits.q_min, l.q_min);
  apply(m.limits.q_max, l.q_max);
  apply(m.limits.v_max, l.v_max);
  apply(m.limits.a_max, l.a_max);
  apply(m.limits.tau_max, l.tau_max);
  validate_model(m);
  return m;
}

/// Validates and instantiates every object a run needs.
inline BuiltScenario build(const Scenario& sc) {
  validate_scenario(sc);
  BuiltScenario b;
  b.model = build_robot(sc.robot);
  const int n = b.model.dof();
  b.tree.root_dim = n;
  b.tree.regularization = sc.tree.regularization;
  b.tree.primary = static_cast<std::size_t>(sc.tree.primary);
  const ChartPtr root_chart = make_euclidean(n);
  for (const auto& node : sc.tree.nodes) b.tree.children.push_back(detail::build_node(node, b.model, root_chart, n));
  b.controller = default_controller_config(b.model);
  if (sc.controller.Q) b.controller.Q = detail::weight_matrix(*sc.controller.Q, n);
  if (sc.controller.R) b.controller.R = detail::weight_matrix(*sc.controller.R, b.model.n_tau());
  b.controller.dt_limits = sc.controller.dt_limits.value_or(sc.sim.dt);
  b.sim.dt = sc.sim.dt;
  b.sim.duration = sc.sim.duration;
  b.sim.integrator = sc.sim.integrator == "rk4" ? Integrator::rk4 : Integrator::semi_implicit_euler;
  b.sim.log_stride = sc.sim.log_stride;
  b.initial.q = detail::to_vector(sc.initial.q);
  b.initial.qd = sc.initial.qd.empty() ? Vector::Zero(n) : detail::to_vector(sc.initial.qd);
  return b;
}

}  // namespace pbds
