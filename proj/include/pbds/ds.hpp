#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "pbds/manifolds.hpp"

namespace pbds {

/// Scalar potential φ and its chart gradient ∂_a φ. Both receive the chart so
/// geometric potentials stay well defined when a DS is moved to another chart.
struct PotentialField {
  std::function<double(const Chart&, const Vector&)> value;
  std::function<Vector(const Chart&, const Vector&)> gradient;
};

/// Dissipation D(x, ẋ) as a bilinear form on velocities; it enters the
/// acceleration through G⁻¹, matching the pullback right-hand side.
struct DissipationField {
  std::function<Matrix(const Chart&, const Vector& x, const Vector& v)> matrix;
};

struct SecondOrderDS {
  ChartPtr chart;
  PotentialField potential;
  DissipationField dissipation;

  /// Same potential and dissipation expressed in another chart.
  SecondOrderDS with_chart(ChartPtr other) const { return {std::move(other), potential, dissipation}; }
};

struct DsState {
  Vector x;
  Vector v;
};

inline PotentialField zero_potential() {
  return {[](const Chart&, const Vector&) { return 0.0; },
          [](const Chart& c, const Vector&) -> Vector { return Vector::Zero(c.dim()); }};
}

/// φ = ½ k ‖x − x*‖² in chart coordinates.
inline PotentialField quadratic_potential(Vector target, double gain) {
  return {[target, gain](const Chart&, const Vector& x) { return 0.5 * gain * (x - target).squaredNorm(); },
          [target, gain](const Chart&, const Vector& x) -> Vector { return gain * (x - target); }};
}

namespace detail {

// Riemannian log map on the unit sphere: tangent vector at p pointing to q with
// length equal to the geodesic distance.
inline Vector sphere_log(const Vector& p, const Vector& q, double& dist) {
  const double c = p.dot(q);
  Vector w = q - c * p;
  const double s = w.norm();
  dist = std::atan2(s, c);
  if (s < 1e-300) return Vector::Zero(p.size());
  return w * (dist / s);
}

}  // namespace detail

/// φ = ½ k d_geo(x, x*)² on S², with x* given as an ambient direction. The
/// gradient is the pullback of −k·log_p(x*) through the embedding Jacobian.
inline PotentialField geodesic_quadratic_potential(const Vector& target_ambient, double gain) {
  const double n = target_ambient.norm();
  if (target_ambient.size() != 3 || !(n > 0.0)) {
    throw std::invalid_argument("geodesic potential target must be a non-zero 3-vector");
  }
  Vector target = target_ambient / n;
  return {[target, gain](const Chart& c, const Vector& x) {
            double d = 0.0;
            detail::sphere_log(c.embed(x), target, d);
            return 0.5 * gain * d * d;
          },
          [target, gain](const Chart& c, const Vector& x) -> Vector {
            double d = 0.0;
            const Vector log = detail::sphere_log(c.embed(x), target, d);
            return -gain * (c.embed_jacobian(x).transpose() * log);
          }};
}

/// Repulsive barrier on R⁺: φ(d) = α(1/d² − 1/d_c² + 2(d − d_c)/d_c³) for
/// d < d_c, zero beyond. The correction terms make φ and φ' vanish at d_c.
inline PotentialField barrier_potential(double alpha, double cutoff) {
  if (!(alpha >= 0.0) || !(cutoff > 0.0)) throw std::invalid_argument("barrier requires alpha >= 0 and cutoff > 0");
  const double c2 = cutoff * cutoff;
  const double c3 = c2 * cutoff;
  return {[=](const Chart&, const Vector& x) {
            const double d = x[0];
            if (d >= cutoff) return 0.0;
            return alpha * (1.0 / (d * d) - 1.0 / c2 + 2.0 * (d - cutoff) / c3);
          },
          [=](const Chart&, const Vector& x) -> Vector {
            const double d = x[0];
            Vector g(1);
            g[0] = d >= cutoff ? 0.0 : alpha * (-2.0 / (d * d * d) + 2.0 / c3);
            return g;
          }};
}

/// Fallback for user potentials without an analytic gradient: central differences.
inline PotentialField potential_from_value(std::function<double(const Chart&, const Vector&)> value,
                                           double step = 1e-6) {
  auto grad = [value, step](const Chart& c, const Vector& x) -> Vector {
    Vector g(x.size());
    Vector xp = x;
    for (int i = 0; i < x.size(); ++i) {
      xp[i] = x[i] + step;
      const double fp = value(c, xp);
      xp[i] = x[i] - step;
      const double fm = value(c, xp);
      xp[i] = x[i];
      g[i] = (fp - fm) / (2.0 * step);
    }
    return g;
  };
  return {std::move(value), std::move(grad)};
}

inline DissipationField zero_dissipation() {
  return {[](const Chart& c, const Vector&, const Vector&) -> Matrix { return Matrix::Zero(c.dim(), c.dim()); }};
}

/// D = c·G(x); vᵀDv = c‖v‖²_G ≥ 0 in every chart.
inline DissipationField metric_damping(double gain) {
  if (!(gain >= 0.0)) throw std::invalid_argument("damping gain must be >= 0");
  return {[gain](const Chart& c, const Vector& x, const Vector&) -> Matrix { return gain * c.metric(x); }};
}

inline DissipationField constant_damping(Matrix d) {
  return {[d = std::move(d)](const Chart&, const Vector&, const Vector&) -> Matrix { return d; }};
}

/// Ξẋ: component k is Σ_ij Γ^k_ij v^i v^j.
inline Vector christoffel_term(const Christoffel& gamma, const Vector& v) {
  const int d = gamma.dim();
  if (v.size() != d) throw DimensionError("christoffel_term: velocity dimension mismatch");
  Vector out = Vector::Zero(d);
  for (int k = 0; k < d; ++k) {
    double acc = 0.0;
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) acc += gamma(k, i, j) * v[i] * v[j];
    }
    out[k] = acc;
  }
  return out;
}

inline void require_state(const SecondOrderDS& ds, const DsState& s) {
  if (!ds.chart) throw std::invalid_argument("SecondOrderDS has no chart");
  if (s.v.size() != ds.chart->dim()) throw DimensionError("DS state velocity dimension mismatch");
  require_in_domain(*ds.chart, s.x);
}

/// ẍ = −G⁻¹(∇φ + Dẋ) − Ξẋ.
inline Vector geometric_acceleration(const SecondOrderDS& ds, const DsState& s) {
  require_state(ds, s);
  const Chart& chart = *ds.chart;
  const Matrix g = chart.metric(s.x);
  const auto llt = metric_factor(chart, g);
  const Vector force = ds.potential.gradient(chart, s.x) + ds.dissipation.matrix(chart, s.x, s.v) * s.v;
  return -llt.solve(force) - christoffel_term(chart.christoffel(s.x), s.v);
}

/// φ(x) + ½ vᵀ G(x) v.
inline double mechanical_energy(const SecondOrderDS& ds, const DsState& s) {
  require_state(ds, s);
  const Matrix g = ds.chart->metric(s.x);
  return ds.potential.value(*ds.chart, s.x) + 0.5 * s.v.dot(g * s.v);
}

}  // namespace pbds
