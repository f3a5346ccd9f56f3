#pragma once

#include <stdexcept>
#include <string>

namespace pbds {

/// A point fell outside a chart's domain; the caller must switch charts.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// The metric is numerically singular at the queried point (e.g. a sphere pole).
class ChartDegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NoEmbeddingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Weighted least-squares Gram matrix is rank deficient and no regularization was allowed.
class SingularGramError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Integration produced a non-finite state.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pbds
