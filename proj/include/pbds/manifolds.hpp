#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pbds/dual.hpp"
#include "pbds/errors.hpp"

namespace pbds {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
template <class S>
using VectorX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Open coordinate interval (lo, hi). Periodic coordinates accept any finite value.
struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool periodic = false;
};

/// Γ^k_ij stored densely; writes go to both (i,j) and (j,i) so lower-index
/// symmetry holds exactly.
class Christoffel {
 public:
  explicit Christoffel(int dim) : dim_(dim), data_(static_cast<std::size_t>(dim * dim * dim), 0.0) {}

  int dim() const { return dim_; }
  double operator()(int k, int i, int j) const { return data_[index(k, i, j)]; }
  void set(int k, int i, int j, double v) {
    data_[index(k, i, j)] = v;
    data_[index(k, j, i)] = v;
  }

 private:
  std::size_t index(int k, int i, int j) const { return static_cast<std::size_t>((k * dim_ + i) * dim_ + j); }

  int dim_;
  std::vector<double> data_;
};

enum class ChartKind { euclidean, sphere_spherical, sphere_stereographic, half_line };

class Chart {
 public:
  virtual ~Chart() = default;

  virtual ChartKind kind() const = 0;
  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  virtual const std::vector<Interval>& domain() const = 0;

  // Unchecked evaluations; use metric_at / christoffel_at for domain-checked access.
  virtual Matrix metric(const Vector& x) const = 0;
  virtual Christoffel christoffel(const Vector& x) const = 0;

  /// Ambient dimension D of the embedding, or 0 when the chart declares none.
  virtual int embedding_dim() const { return 0; }
  virtual Vector embed(const Vector&) const { throw no_embedding(); }
  virtual VectorX<Dual1> embed(const VectorX<Dual1>&) const { throw no_embedding(); }
  virtual VectorX<Dual2> embed(const VectorX<Dual2>&) const { throw no_embedding(); }
  virtual Vector retract(const Vector&) const { throw no_embedding(); }
  virtual VectorX<Dual1> retract(const VectorX<Dual1>&) const { throw no_embedding(); }
  virtual VectorX<Dual2> retract(const VectorX<Dual2>&) const { throw no_embedding(); }

  /// Canonical representative for periodic coordinates.
  virtual Vector wrap(const Vector& x) const { return x; }

  /// True when x is well inside the domain, away from any coordinate singularity.
  virtual bool comfortable(const Vector& x) const { return contains(x); }

  bool contains(const Vector& x) const {
    const auto& dom = domain();
    if (x.size() != dim()) return false;
    for (int i = 0; i < dim(); ++i) {
      if (!std::isfinite(x[i])) return false;
      if (dom[i].periodic) continue;
      if (!(x[i] > dom[i].lo && x[i] < dom[i].hi)) return false;
    }
    return true;
  }

  Matrix embed_jacobian(const Vector& x) const {
    const int d = dim();
    Matrix jac(embedding_dim(), d);
    VectorX<Dual1> xd(d);
    for (int j = 0; j < d; ++j) {
      for (int i = 0; i < d; ++i) xd[i] = Dual1(x[i], i == j ? 1.0 : 0.0);
      const VectorX<Dual1> y = embed(xd);
      for (int r = 0; r < y.size(); ++r) jac(r, j) = y[r].b;
    }
    return jac;
  }

 private:
  NoEmbeddingError no_embedding() const { return NoEmbeddingError("chart '" + name() + "' declares no embedding"); }
};

using ChartPtr = std::shared_ptr<const Chart>;

/// Routes the typed embed/retract overloads to a single generic implementation
/// in Derived (embed_impl<S>, retract_impl<S>).
template <class Derived, int AmbientDim>
class EmbeddedChart : public Chart {
 public:
  int embedding_dim() const override { return AmbientDim; }

  Vector embed(const Vector& x) const override { return self().template embed_impl<double>(x); }
  VectorX<Dual1> embed(const VectorX<Dual1>& x) const override { return self().template embed_impl<Dual1>(x); }
  VectorX<Dual2> embed(const VectorX<Dual2>& x) const override { return self().template embed_impl<Dual2>(x); }

  Vector retract(const Vector& p) const override { return self().template retract_impl<double>(p); }
  VectorX<Dual1> retract(const VectorX<Dual1>& p) const override { return self().template retract_impl<Dual1>(p); }
  VectorX<Dual2> retract(const VectorX<Dual2>& p) const override { return self().template retract_impl<Dual2>(p); }

 private:
  const Derived& self() const { return static_cast<const Derived&>(*this); }
};

class EuclideanChart final : public Chart {
 public:
  explicit EuclideanChart(int dim) : dim_(dim), domain_(static_cast<std::size_t>(dim)) {
    if (dim <= 0) throw std::invalid_argument("Euclidean chart dimension must be positive");
  }

  ChartKind kind() const override { return ChartKind::euclidean; }
  std::string name() const override { return "euclidean" + std::to_string(dim_); }
  int dim() const override { return dim_; }
  const std::vector<Interval>& domain() const override { return domain_; }
  Matrix metric(const Vector&) const override { return Matrix::Identity(dim_, dim_); }
  Christoffel christoffel(const Vector&) const override { return Christoffel(dim_); }

  // Identity embedding into R^d.
  int embedding_dim() const override { return dim_; }
  Vector embed(const Vector& x) const override { return x; }
  VectorX<Dual1> embed(const VectorX<Dual1>& x) const override { return x; }
  VectorX<Dual2> embed(const VectorX<Dual2>& x) const override { return x; }
  Vector retract(const Vector& p) const override { return p; }
  VectorX<Dual1> retract(const VectorX<Dual1>& p) const override { return p; }
  VectorX<Dual2> retract(const VectorX<Dual2>& p) const override { return p; }

 private:
  int dim_;
  std::vector<Interval> domain_;
};

/// S² in spherical coordinates (θ, φ): θ polar angle from +z, φ azimuth.
/// θ ∈ (δ, π − δ); φ is periodic and wrapped to [−π, π].
class SphereSphericalChart final : public EmbeddedChart<SphereSphericalChart, 3> {
 public:
  static constexpr double kPoleMargin = 1e-6;
  // Below this distance from a pole the chart reports itself uncomfortable.
  static constexpr double kSwitchMargin = 0.15;

  SphereSphericalChart()
      : domain_{Interval{kPoleMargin, std::numbers::pi - kPoleMargin, false},
                Interval{-std::numbers::pi, std::numbers::pi, true}} {}

  ChartKind kind() const override { return ChartKind::sphere_spherical; }
  std::string name() const override { return "sphere_spherical"; }
  int dim() const override { return 2; }
  const std::vector<Interval>& domain() const override { return domain_; }

  Matrix metric(const Vector& x) const override {
    const double s = std::sin(x[0]);
    Matrix g = Matrix::Zero(2, 2);
    g(0, 0) = 1.0;
    g(1, 1) = s * s;
    return g;
  }

  Christoffel christoffel(const Vector& x) const override {
    const double s = std::sin(x[0]);
    const double c = std::cos(x[0]);
    Christoffel gamma(2);
    gamma.set(0, 1, 1, -s * c);
    gamma.set(1, 0, 1, c / s);
    return gamma;
  }

  Vector wrap(const Vector& x) const override {
    Vector y = x;
    y[1] = std::remainder(x[1], 2.0 * std::numbers::pi);
    return y;
  }

  bool comfortable(const Vector& x) const override {
    return contains(x) && x[0] > kSwitchMargin && x[0] < std::numbers::pi - kSwitchMargin;
  }

  template <class S>
  VectorX<S> embed_impl(const VectorX<S>& x) const {
    using std::cos;
    using std::sin;
    VectorX<S> p(3);
    const S st = sin(x[0]);
    p[0] = st * cos(x[1]);
    p[1] = st * sin(x[1]);
    p[2] = cos(x[0]);
    return p;
  }

  template <class S>
  VectorX<S> retract_impl(const VectorX<S>& p) const {
    using std::atan2;
    using std::sqrt;
    const S rho2 = p[0] * p[0] + p[1] * p[1];
    if (value_of(rho2) + value_of(p[2] * p[2]) == 0.0) throw DomainError("sphere_spherical: cannot retract the origin");
    if (value_of(rho2) == 0.0) throw DomainError("sphere_spherical: point lies on the polar axis");
    VectorX<S> x(2);
    x[0] = atan2(sqrt(rho2), p[2]);
    x[1] = atan2(p[1], p[0]);
    const double theta = value_of(x[0]);
    if (!(theta > kPoleMargin && theta < std::numbers::pi - kPoleMargin)) {
      throw DomainError("sphere_spherical: retracted point is within the pole margin (theta = " +
                        std::to_string(theta) + ")");
    }
    return x;
  }

 private:
  std::vector<Interval> domain_;
};

/// S² by stereographic projection from the north pole (0, 0, 1) onto z = 0.
/// Covers everything except the north pole; the origin maps to the south pole.
class SphereStereographicChart final : public EmbeddedChart<SphereStereographicChart, 3> {
 public:
  // Beyond this squared radius (about 0.4 rad from the north pole) the chart
  // reports itself uncomfortable.
  static constexpr double kComfortRadius2 = 25.0;

  SphereStereographicChart() : domain_(2) {}

  ChartKind kind() const override { return ChartKind::sphere_stereographic; }
  std::string name() const override { return "sphere_stereographic"; }
  int dim() const override { return 2; }
  const std::vector<Interval>& domain() const override { return domain_; }

  Matrix metric(const Vector& x) const override {
    const double den = 1.0 + x.squaredNorm();
    return Matrix::Identity(2, 2) * (4.0 / (den * den));
  }

  // Conformal metric g = e^{2f} δ with f = log 2 − log(1 + r²).
  Christoffel christoffel(const Vector& x) const override {
    const double den = 1.0 + x.squaredNorm();
    const double df[2] = {-2.0 * x[0] / den, -2.0 * x[1] / den};
    Christoffel gamma(2);
    for (int k = 0; k < 2; ++k) {
      for (int i = 0; i < 2; ++i) {
        for (int j = i; j < 2; ++j) {
          double v = 0.0;
          if (k == i) v += df[j];
          if (k == j) v += df[i];
          if (i == j) v -= df[k];
          gamma.set(k, i, j, v);
        }
      }
    }
    return gamma;
  }

  bool comfortable(const Vector& x) const override { return contains(x) && x.squaredNorm() < kComfortRadius2; }

  template <class S>
  VectorX<S> embed_impl(const VectorX<S>& x) const {
    const S r2 = x[0] * x[0] + x[1] * x[1];
    const S den = r2 + 1.0;
    VectorX<S> p(3);
    p[0] = 2.0 * x[0] / den;
    p[1] = 2.0 * x[1] / den;
    p[2] = (r2 - 1.0) / den;
    return p;
  }

  template <class S>
  VectorX<S> retract_impl(const VectorX<S>& p) const {
    using std::sqrt;
    const S n = sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    if (value_of(n) == 0.0) throw DomainError("sphere_stereographic: cannot retract the origin");
    const S gap = n - p[2];
    if (value_of(gap) <= 1e-12 * value_of(n)) throw DomainError("sphere_stereographic: point is at the north pole");
    VectorX<S> x(2);
    x[0] = p[0] / gap;
    x[1] = p[1] / gap;
    return x;
  }

 private:
  std::vector<Interval> domain_;
};

/// Half-line R⁺ with metric H(d) = 1 + β·exp(−d/σ); β = 0 gives the flat metric.
class HalfLineChart final : public Chart {
 public:
  explicit HalfLineChart(double beta = 0.0, double sigma = 1.0)
      : beta_(beta), sigma_(sigma), domain_{Interval{0.0, std::numeric_limits<double>::infinity(), false}} {
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw std::invalid_argument("half-line beta must be finite and >= 0");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("half-line sigma must be finite and > 0");
  }

  ChartKind kind() const override { return ChartKind::half_line; }
  std::string name() const override { return "half_line"; }
  int dim() const override { return 1; }
  const std::vector<Interval>& domain() const override { return domain_; }
  double beta() const { return beta_; }
  double sigma() const { return sigma_; }

  Matrix metric(const Vector& x) const override { return Matrix::Constant(1, 1, 1.0 + beta_ * std::exp(-x[0] / sigma_)); }

  Christoffel christoffel(const Vector& x) const override {
    const double e = beta_ * std::exp(-x[0] / sigma_);
    Christoffel gamma(1);
    gamma.set(0, 0, 0, 0.5 * (-e / sigma_) / (1.0 + e));
    return gamma;
  }

 private:
  double beta_;
  double sigma_;
  std::vector<Interval> domain_;
};

inline void require_in_domain(const Chart& chart, const Vector& x) {
  if (x.size() != chart.dim()) {
    throw DimensionError("chart '" + chart.name() + "' expects " + std::to_string(chart.dim()) +
                         " coordinates, got " + std::to_string(x.size()));
  }
  if (!chart.contains(x)) throw DomainError("point outside the domain of chart '" + chart.name() + "'");
}

inline Matrix metric_at(const Chart& chart, const Vector& x) {
  require_in_domain(chart, x);
  return chart.metric(x);
}

inline Christoffel christoffel_at(const Chart& chart, const Vector& x) {
  require_in_domain(chart, x);
  return chart.christoffel(x);
}

inline Vector embed(const Chart& chart, const Vector& x) {
  if (chart.embedding_dim() == 0) return chart.embed(x);  // throws NoEmbeddingError
  require_in_domain(chart, x);
  return chart.embed(x);
}

inline Vector retract(const Chart& chart, const Vector& p) {
  if (chart.embedding_dim() != 0 && p.size() != chart.embedding_dim()) {
    throw DimensionError("retract: expected an ambient vector of length " + std::to_string(chart.embedding_dim()));
  }
  return chart.retract(p);
}

/// Chart-coordinate components of an ambient tangent vector at x (least squares
/// through the embedding Jacobian).
inline Vector tangent_coordinates(const Chart& chart, const Vector& x, const Vector& ambient) {
  const Matrix e = chart.embed_jacobian(x);
  return (e.transpose() * e).ldlt().solve(e.transpose() * ambient);
}

/// Cholesky of the metric with a conditioning check; throws ChartDegenerateError
/// when the metric is numerically singular.
inline Eigen::LLT<Matrix> metric_factor(const Chart& chart, const Matrix& g) {
  Eigen::LLT<Matrix> llt(g);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-13)) {
    throw ChartDegenerateError("metric of chart '" + chart.name() + "' is numerically singular");
  }
  return llt;
}

inline ChartPtr make_euclidean(int dim) { return std::make_shared<EuclideanChart>(dim); }
inline ChartPtr make_sphere_spherical() { return std::make_shared<SphereSphericalChart>(); }
inline ChartPtr make_sphere_stereographic() { return std::make_shared<SphereStereographicChart>(); }
inline ChartPtr make_half_line(double beta = 0.0, double sigma = 1.0) {
  return std::make_shared<HalfLineChart>(beta, sigma);
}

inline bool is_sphere(const Chart& chart) {
  return chart.kind() == ChartKind::sphere_spherical || chart.kind() == ChartKind::sphere_stereographic;
}

}  // namespace pbds
