#pragma once

#include <functional>
#include <string>
#include <utility>

#include "pbds/manifolds.hpp"

namespace pbds {

/// Value, Jacobian and J̇ of a task map at one (q, q̇).
struct MapEval {
  Vector value;
  Matrix J;
  Matrix Jdot;
};

/// f: base chart coordinates → target chart coordinates, with J = ∂f/∂q and
/// J̇ = d/dt J along q̇.
struct TaskMap {
  int in_dim = 0;
  int out_dim = 0;
  std::string kind;
  std::function<Vector(const Vector&)> value;
  std::function<MapEval(const Vector& q, const Vector& qd)> evaluate;

  Matrix jacobian(const Vector& q) const { return evaluate(q, Vector::Zero(q.size())).J; }
  Matrix jacobian_dot(const Vector& q, const Vector& qd) const { return evaluate(q, qd).Jdot; }
};

/// Wraps a scalar-generic functor `f(VectorX<S>) -> VectorX<S>`. J and J̇ come
/// from one hyper-dual pass per input coordinate: the inner dual is seeded with
/// q̇ and the outer one with e_j, so the mixed part of the output is column j of J̇.
template <class F>
TaskMap make_task_map(int in_dim, int out_dim, std::string kind, F f) {
  TaskMap map;
  map.in_dim = in_dim;
  map.out_dim = out_dim;
  map.kind = std::move(kind);
  map.value = [f, in_dim](const Vector& q) -> Vector {
    if (q.size() != in_dim) throw DimensionError("task map input dimension mismatch");
    return f(q);
  };
  map.evaluate = [f, in_dim, out_dim](const Vector& q, const Vector& qd) -> MapEval {
    if (q.size() != in_dim || qd.size() != in_dim) throw DimensionError("task map input dimension mismatch");
    MapEval out{Vector(out_dim), Matrix(out_dim, in_dim), Matrix(out_dim, in_dim)};
    VectorX<Dual2> x(in_dim);
    for (int j = 0; j < in_dim; ++j) {
      for (int i = 0; i < in_dim; ++i) x[i] = Dual2(Dual1(q[i], qd[i]), Dual1(i == j ? 1.0 : 0.0, 0.0));
      const VectorX<Dual2> y = f(x);
      if (y.size() != out_dim) throw DimensionError("task map output dimension mismatch");
      for (int r = 0; r < out_dim; ++r) {
        out.J(r, j) = y[r].b.a;
        out.Jdot(r, j) = y[r].b.b;
        if (j == 0) out.value[r] = y[r].a.a;
      }
    }
    if (in_dim == 0) out.value = f(q);
    return out;
  };
  return map;
}

inline TaskMap identity_map(int dim) {
  TaskMap map;
  map.in_dim = map.out_dim = dim;
  map.kind = "identity";
  map.value = [](const Vector& q) -> Vector { return q; };
  map.evaluate = [dim](const Vector& q, const Vector&) -> MapEval {
    return {q, Matrix::Identity(dim, dim), Matrix::Zero(dim, dim)};
  };
  return map;
}

/// q ↦ A q + offset.
inline TaskMap linear_map(Matrix a, Vector offset) {
  if (offset.size() != a.rows()) throw DimensionError("linear map offset must match the matrix row count");
  TaskMap map;
  map.in_dim = static_cast<int>(a.cols());
  map.out_dim = static_cast<int>(a.rows());
  map.kind = "linear";
  map.value = [a, offset](const Vector& q) -> Vector { return a * q + offset; };
  map.evaluate = [a, offset](const Vector& q, const Vector&) -> MapEval {
    return {a * q + offset, a, Matrix::Zero(a.rows(), a.cols())};
  };
  return map;
}

/// outer ∘ inner, with J = J_o J_i and J̇ = J̇_o J_i + J_o J̇_i.
inline TaskMap compose(const TaskMap& outer, const TaskMap& inner) {
  if (outer.in_dim != inner.out_dim) throw DimensionError("compose: inner output does not match outer input");
  TaskMap map;
  map.in_dim = inner.in_dim;
  map.out_dim = outer.out_dim;
  map.kind = outer.kind + "∘" + inner.kind;
  map.value = [outer, inner](const Vector& q) -> Vector { return outer.value(inner.value(q)); };
  map.evaluate = [outer, inner](const Vector& q, const Vector& qd) -> MapEval {
    const MapEval ei = inner.evaluate(q, qd);
    const MapEval eo = outer.evaluate(ei.value, ei.J * qd);
    return {eo.value, eo.J * ei.J, eo.Jdot * ei.J + eo.J * ei.Jdot};
  };
  return map;
}

/// R³ → S² chart: p ↦ chart(retract((p − c)/R)). Only the direction from the
/// sphere centre matters; radial motion is invisible to this map.
inline TaskMap sphere_retraction_map(ChartPtr sphere, const Vector& center, double radius) {
  if (!sphere || !is_sphere(*sphere)) throw std::invalid_argument("sphere_retraction_map needs a sphere chart");
  if (center.size() != 3) throw DimensionError("sphere centre must be a 3-vector");
  if (!(radius > 0.0)) throw std::invalid_argument("sphere radius must be positive");
  return make_task_map(3, 2, "sphere_retraction", [sphere, center, radius](const auto& p) {
    using S = typename std::decay_t<decltype(p)>::Scalar;
    const VectorX<S> u = (p - center.cast<S>()) / S(radius);
    return sphere->retract(u);
  });
}

/// R^k → R: p ↦ ‖p − c‖.
inline TaskMap radial_distance_map(const Vector& center) {
  const int k = static_cast<int>(center.size());
  return make_task_map(k, 1, "radial_distance", [center](const auto& p) {
    using S = typename std::decay_t<decltype(p)>::Scalar;
    using std::sqrt;
    S acc(0.0);
    for (int i = 0; i < p.size(); ++i) {
      const S d = p[i] - center[i];
      acc += d * d;
    }
    VectorX<S> out(1);
    out[0] = sqrt(acc);
    return out;
  });
}

/// S² chart → R⁺: x ↦ d_geo(embed(x), o) − r, the geodesic clearance to a
/// spherical-cap obstacle of angular radius r centred on direction o.
inline TaskMap obstacle_distance_map(ChartPtr sphere, const Vector& obstacle_dir, double radius) {
  if (!sphere || !is_sphere(*sphere)) throw std::invalid_argument("obstacle_distance_map needs a sphere chart");
  if (obstacle_dir.size() != 3 || !(obstacle_dir.norm() > 0.0)) {
    throw std::invalid_argument("obstacle centre must be a non-zero 3-vector");
  }
  if (!(radius >= 0.0)) throw std::invalid_argument("obstacle radius must be non-negative");
  const Vector o = obstacle_dir.normalized();
  return make_task_map(2, 1, "obstacle_distance", [sphere, o, radius](const auto& x) {
    using S = typename std::decay_t<decltype(x)>::Scalar;
    using std::atan2;
    using std::sqrt;
    const VectorX<S> p = sphere->embed(x);
    const S c = p[0] * o[0] + p[1] * o[1] + p[2] * o[2];
    const S cx = p[1] * o[2] - p[2] * o[1];
    const S cy = p[2] * o[0] - p[0] * o[2];
    const S cz = p[0] * o[1] - p[1] * o[0];
    VectorX<S> out(1);
    out[0] = atan2(sqrt(cx * cx + cy * cy + cz * cz), c) - radius;
    return out;
  });
}

}  // namespace pbds
