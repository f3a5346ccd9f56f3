#pragma once

// Forward-mode dual numbers. A Dual<T> carries a value and one directional
// derivative; nesting (Dual<Dual<double>>) carries a mixed second derivative,
// which is how task maps obtain J and J̇ exactly from a single value-only
// implementation.

#include <cmath>
#include <type_traits>

#include <Eigen/Core>

namespace pbds {

template <class T>
struct Dual {
  T a{};  // value
  T b{};  // derivative along the seeded direction

  constexpr Dual() = default;

  template <class U>
    requires(std::is_arithmetic_v<U> || std::is_same_v<U, T>)
  constexpr Dual(const U& v) : a(static_cast<T>(v)), b(0) {}

  constexpr Dual(const T& value, const T& deriv) : a(value), b(deriv) {}

  Dual& operator+=(const Dual& o) { a += o.a; b += o.b; return *this; }
  Dual& operator-=(const Dual& o) { a -= o.a; b -= o.b; return *this; }
  Dual& operator*=(const Dual& o) { *this = *this * o; return *this; }
  Dual& operator/=(const Dual& o) { *this = *this / o; return *this; }

  friend Dual operator+(const Dual& x) { return x; }
  friend Dual operator-(const Dual& x) { return {-x.a, -x.b}; }

  friend Dual operator+(const Dual& x, const Dual& y) { return {x.a + y.a, x.b + y.b}; }
  friend Dual operator-(const Dual& x, const Dual& y) { return {x.a - y.a, x.b - y.b}; }
  friend Dual operator*(const Dual& x, const Dual& y) { return {x.a * y.a, x.a * y.b + x.b * y.a}; }
  friend Dual operator/(const Dual& x, const Dual& y) {
    const T inv = T(1) / y.a;
    const T q = x.a * inv;
    return {q, (x.b - q * y.b) * inv};
  }

  friend Dual operator+(const Dual& x, double s) { return {x.a + s, x.b}; }
  friend Dual operator+(double s, const Dual& x) { return {s + x.a, x.b}; }
  friend Dual operator-(const Dual& x, double s) { return {x.a - s, x.b}; }
  friend Dual operator-(double s, const Dual& x) { return {s - x.a, -x.b}; }
  friend Dual operator*(const Dual& x, double s) { return {x.a * s, x.b * s}; }
  friend Dual operator*(double s, const Dual& x) { return {s * x.a, s * x.b}; }
  friend Dual operator/(const Dual& x, double s) { return {x.a / s, x.b / s}; }
  friend Dual operator/(double s, const Dual& x) { return Dual(s) / x; }

  friend bool operator<(const Dual& x, const Dual& y) { return x.a < y.a; }
  friend bool operator>(const Dual& x, const Dual& y) { return x.a > y.a; }
  friend bool operator<=(const Dual& x, const Dual& y) { return x.a <= y.a; }
  friend bool operator>=(const Dual& x, const Dual& y) { return x.a >= y.a; }
  friend bool operator==(const Dual& x, const Dual& y) { return x.a == y.a; }
  friend bool operator!=(const Dual& x, const Dual& y) { return x.a != y.a; }
};

using Dual1 = Dual<double>;
using Dual2 = Dual<Dual<double>>;

inline double value_of(double x) { return x; }
template <class T>
double value_of(const Dual<T>& x) { return value_of(x.a); }

template <class T>
Dual<T> sin(const Dual<T>& x) {
  using std::cos;
  using std::sin;
  return {sin(x.a), cos(x.a) * x.b};
}

template <class T>
Dual<T> cos(const Dual<T>& x) {
  using std::cos;
  using std::sin;
  return {cos(x.a), -sin(x.a) * x.b};
}

template <class T>
Dual<T> sqrt(const Dual<T>& x) {
  using std::sqrt;
  const T r = sqrt(x.a);
  return {r, x.b / (2.0 * r)};
}

template <class T>
Dual<T> exp(const Dual<T>& x) {
  using std::exp;
  const T e = exp(x.a);
  return {e, e * x.b};
}

template <class T>
Dual<T> log(const Dual<T>& x) {
  using std::log;
  return {log(x.a), x.b / x.a};
}

template <class T>
Dual<T> atan2(const Dual<T>& y, const Dual<T>& x) {
  using std::atan2;
  const T den = x.a * x.a + y.a * y.a;
  return {atan2(y.a, x.a), (x.a * y.b - y.a * x.b) / den};
}

template <class T>
Dual<T> abs(const Dual<T>& x) {
  return value_of(x) < 0.0 ? -x : x;
}

}  // namespace pbds

namespace Eigen {

template <class T>
struct NumTraits<pbds::Dual<T>> : NumTraits<double> {
  using Real = pbds::Dual<T>;
  using NonInteger = pbds::Dual<T>;
  using Nested = pbds::Dual<T>;
  using Literal = pbds::Dual<T>;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 2,
    AddCost = 4,
    MulCost = 8
  };
};

}  // namespace Eigen
