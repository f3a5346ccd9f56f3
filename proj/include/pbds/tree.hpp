#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pbds/ds.hpp"
#include "pbds/task_map.hpp"

namespace pbds {

struct TaskNode;

/// One weighted least-squares term ‖J q̈ − b‖²_W.
struct PulledTerm {
  Matrix J;
  Vector b;
  Matrix W;
};

struct TaskNode {
  std::string name;
  TaskMap map;       // from the parent space into this node's space
  ChartPtr chart;    // chart of this node's space
  Matrix weight;     // s × s, symmetric PSD
  std::variant<SecondOrderDS, std::vector<TaskNode>> payload;
  // Obstacle-distance leaves carry a scale converting their coordinate to
  // metres; they are logged as clearances.
  std::optional<double> clearance_scale;

  bool is_leaf() const { return std::holds_alternative<SecondOrderDS>(payload); }
  const SecondOrderDS& ds() const { return std::get<SecondOrderDS>(payload); }
  const std::vector<TaskNode>& children() const { return std::get<std::vector<TaskNode>>(payload); }
};

struct PbdsTree {
  int root_dim = 0;
  std::vector<TaskNode> children;
  // λ for every combine; nullopt selects 1e−9 · trace(ΣJᵀWJ)/m.
  std::optional<double> regularization;
  // Index of the root child that feeds the QP task row.
  std::size_t primary = 0;
};

/// argmin over q̈ of Σ‖J_i q̈ − b_i‖²_{W_i} + λ‖q̈‖². With λ = 0 a numerically
/// singular Gram matrix raises SingularGramError.
inline Vector combine(const std::vector<PulledTerm>& terms, int base_dim, std::optional<double> lambda) {
  Matrix gram = Matrix::Zero(base_dim, base_dim);
  Vector rhs = Vector::Zero(base_dim);
  for (const auto& t : terms) {
    if (t.J.cols() != base_dim || t.J.rows() != t.b.size() || t.W.rows() != t.b.size() || t.W.cols() != t.b.size()) {
      throw DimensionError("combine: inconsistent term dimensions");
    }
    const Matrix jtw = t.J.transpose() * t.W;
    gram.noalias() += jtw * t.J;
    rhs.noalias() += jtw * t.b;
  }
  const double lam = lambda.value_or(1e-9 * gram.trace() / base_dim);
  if (lam < 0.0) throw std::invalid_argument("combine: regularization must be non-negative");
  gram.diagonal().array() += lam;
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14)) {
    throw SingularGramError("combine: Gram matrix is singular (rank-deficient task set)");
  }
  return llt.solve(rhs);
}

namespace detail {

inline Vector resolve_children(const std::vector<TaskNode>& children, const DsState& base, std::optional<double> lambda,
                               const std::string& path, std::vector<PulledTerm>* terms_out);

inline DomainError node_error(const std::string& path, const std::exception& e) {
  return DomainError("node '" + path + "': " + e.what());
}

inline PulledTerm pullback_rhs_at(const TaskNode& node, const DsState& parent, std::optional<double> lambda,
                                  const std::string& path) {
  MapEval m;
  try {
    m = node.map.evaluate(parent.x, parent.v);
  } catch (const DomainError& e) {
    throw node_error(path, e);
  }
  const DsState target{m.value, m.J * parent.v};
  const Vector jdot_qd = m.Jdot * parent.v;
  Vector accel;
  if (node.is_leaf()) {
    try {
      accel = geometric_acceleration(node.ds(), target);
    } catch (const DomainError& e) {
      throw node_error(path, e);
    } catch (const ChartDegenerateError& e) {
      throw ChartDegenerateError("node '" + path + "': " + e.what());
    }
  } else {
    try {
      require_in_domain(*node.chart, target.x);
    } catch (const DomainError& e) {
      throw node_error(path, e);
    }
    accel = resolve_children(node.children(), target, lambda, path, nullptr);
  }
  return {std::move(m.J), accel - jdot_qd, node.weight};
}

inline Vector resolve_children(const std::vector<TaskNode>& children, const DsState& base, std::optional<double> lambda,
                               const std::string& path, std::vector<PulledTerm>* terms_out) {
  std::vector<PulledTerm> terms;
  terms.reserve(children.size());
  for (const auto& child : children) {
    const std::string child_path = path.empty() ? child.name : path + "/" + child.name;
    terms.push_back(pullback_rhs_at(child, base, lambda, child_path));
  }
  Vector out = combine(terms, static_cast<int>(base.x.size()), lambda);
  if (terms_out) *terms_out = std::move(terms);
  return out;
}

}  // namespace detail

/// (J, b, W) for one node. For a leaf, b = −H⁻¹(∇φ + DJq̇) − J̇q̇ − Ξ(Jq̇) at the
/// mapped state; for an internal node, b is the node's own combined
/// acceleration minus J̇q̇.
inline PulledTerm pullback_rhs(const TaskNode& node, const DsState& parent_state,
                               std::optional<double> lambda = std::nullopt) {
  return detail::pullback_rhs_at(node, parent_state, lambda, node.name);
}

/// Desired base acceleration q̈_d: depth-first pullback and combine.
inline Vector resolve_tree(const PbdsTree& tree, const DsState& base_state) {
  if (base_state.x.size() != tree.root_dim || base_state.v.size() != tree.root_dim) {
    throw DimensionError("resolve_tree: base state dimension does not match the tree root");
  }
  return detail::resolve_children(tree.children, base_state, tree.regularization, "", nullptr);
}

/// Acceleration of a node's space when the node itself is taken as the base:
/// the leaf DS, or the combination of the node's children.
inline Vector node_acceleration(const TaskNode& node, const DsState& s, std::optional<double> lambda) {
  if (node.is_leaf()) return geometric_acceleration(node.ds(), s);
  require_in_domain(*node.chart, s.x);
  return detail::resolve_children(node.children(), s, lambda, node.name, nullptr);
}

/// Calls fn(node, path, state_in_node_space) for every node, depth first.
template <class Fn>
void visit_nodes(const std::vector<TaskNode>& children, const DsState& base, const std::string& path, Fn&& fn) {
  for (const auto& child : children) {
    const std::string child_path = path.empty() ? child.name : path + "/" + child.name;
    const MapEval m = child.map.evaluate(base.x, base.v);
    const DsState s{m.value, m.J * base.v};
    fn(child, child_path, s);
    if (!child.is_leaf()) visit_nodes(child.children(), s, child_path, fn);
  }
}

template <class Fn>
void visit_nodes(const PbdsTree& tree, const DsState& base, Fn&& fn) {
  visit_nodes(tree.children, base, std::string(), std::forward<Fn>(fn));
}

/// Obstacle clearances (metres), one per obstacle leaf in depth-first order.
inline std::vector<double> obstacle_clearances(const PbdsTree& tree, const DsState& base_state) {
  std::vector<double> out;
  visit_nodes(tree, base_state, [&](const TaskNode& node, const std::string&, const DsState& s) {
    if (node.is_leaf() && node.clearance_scale) out.push_back(s.x[0] * *node.clearance_scale);
  });
  return out;
}

namespace detail {

inline void count_clearances(const std::vector<TaskNode>& children, std::size_t& n) {
  for (const auto& c : children) {
    if (c.is_leaf()) {
      if (c.clearance_scale) ++n;
    } else {
      count_clearances(c.children(), n);
    }
  }
}

}  // namespace detail

inline std::size_t obstacle_count(const PbdsTree& tree) {
  std::size_t n = 0;
  detail::count_clearances(tree.children, n);
  return n;
}

/// Everything a control tick needs from one tree walk.
struct TreeResolution {
  Vector qdd_desired;
  std::vector<PulledTerm> root_terms;  // one per root child
  Vector primary_accel;                // desired acceleration in the primary task space
  Matrix primary_J;
  Vector primary_jdot_qd;
  Vector primary_value;
};

inline TreeResolution resolve_tree_detailed(const PbdsTree& tree, const DsState& base_state) {
  if (base_state.x.size() != tree.root_dim || base_state.v.size() != tree.root_dim) {
    throw DimensionError("resolve_tree: base state dimension does not match the tree root");
  }
  if (tree.primary >= tree.children.size()) throw std::invalid_argument("primary task index out of range");
  TreeResolution r;
  r.qdd_desired = detail::resolve_children(tree.children, base_state, tree.regularization, "", &r.root_terms);
  const TaskNode& primary = tree.children[tree.primary];
  const MapEval m = primary.map.evaluate(base_state.x, base_state.v);
  r.primary_jdot_qd = m.Jdot * base_state.v;
  // b = ẍ_d − J̇q̇, so the task-space target is recovered without a second walk.
  r.primary_accel = r.root_terms[tree.primary].b + r.primary_jdot_qd;
  r.primary_J = m.J;
  r.primary_value = m.value;
  return r;
}

}  // namespace pbds
