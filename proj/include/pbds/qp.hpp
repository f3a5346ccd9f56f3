#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pbds/errors.hpp"

namespace pbds {

/// min ½ zᵀ𝒲z + wᵀz  s.t.  C_E z + c_E = 0,  C_I z + c_I ≥ 0.
struct QpProblem {
  Eigen::MatrixXd W_cost;
  Eigen::VectorXd w_lin;
  Eigen::MatrixXd C_E;
  Eigen::VectorXd c_E;
  Eigen::MatrixXd C_I;
  Eigen::VectorXd c_I;

  int dim() const { return static_cast<int>(w_lin.size()); }
  int n_eq() const { return static_cast<int>(c_E.size()); }
  int n_ineq() const { return static_cast<int>(c_I.size()); }
};

enum class QpStatus { solved, infeasible, max_iter };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::solved: return "solved";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::max_iter: return "max_iter";
  }
  return "unknown";
}

/// Infinity-norm residuals of the KKT conditions for the Lagrangian
/// ½zᵀ𝒲z + wᵀz − νᵀ(C_E z + c_E) − λᵀ(C_I z + c_I).
struct KktReport {
  double stationarity = 0.0;
  double primal_equality = 0.0;
  double primal_inequality = 0.0;
  double complementarity = 0.0;
  double dual_feasibility = 0.0;
};

struct QpSolution {
  Eigen::VectorXd z;
  Eigen::VectorXd nu;      // equality multipliers
  Eigen::VectorXd lambda;  // inequality multipliers, ≥ 0 at a solution
  std::vector<int> active_set;  // inequality rows held as equalities, ascending
  QpStatus status = QpStatus::infeasible;
  KktReport kkt;
  int iterations = 0;
  double objective = 0.0;
  std::vector<double> objective_trace;  // phase-2 objective after every iteration
};

struct QpOptions {
  int max_iter = 0;            // 0 selects 50 + 10·(dim + n_ineq)
  double feasibility_tol = 1e-9;
  double step_tol = 1e-13;
  double dual_tol = 1e-11;
};

inline double qp_objective(const QpProblem& p, const Eigen::VectorXd& z) {
  return 0.5 * z.dot(p.W_cost * z) + p.w_lin.dot(z);
}

inline KktReport kkt_residuals(const QpProblem& p, const Eigen::VectorXd& z, const Eigen::VectorXd& nu,
                               const Eigen::VectorXd& lambda) {
  KktReport r;
  Eigen::VectorXd grad = p.W_cost * z + p.w_lin;
  if (p.n_eq() > 0) grad -= p.C_E.transpose() * nu;
  if (p.n_ineq() > 0) grad -= p.C_I.transpose() * lambda;
  r.stationarity = grad.size() > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
  if (p.n_eq() > 0) r.primal_equality = (p.C_E * z + p.c_E).cwiseAbs().maxCoeff();
  if (p.n_ineq() > 0) {
    const Eigen::VectorXd slack = p.C_I * z + p.c_I;
    r.primal_inequality = std::max(0.0, -slack.minCoeff());
    r.complementarity = lambda.cwiseProduct(slack).cwiseAbs().maxCoeff();
    r.dual_feasibility = std::max(0.0, -lambda.minCoeff());
  }
  return r;
}

namespace detail {

struct EqpResult {
  Eigen::VectorXd z;
  Eigen::VectorXd multipliers;  // one per working row, same order
  bool independent = true;      // working rows linearly independent
};

// min ½zᵀHz + gᵀz s.t. A z + c = 0 by the null-space method: QR of Aᵀ splits
// range and null space, the reduced Hessian ZᵀHZ is Cholesky-factored.
// Multipliers satisfy Hz + g = Aᵀμ.
inline EqpResult solve_eqp(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, const Eigen::MatrixXd& a,
                           const Eigen::VectorXd& c) {
  const int n = static_cast<int>(g.size());
  const int k = static_cast<int>(a.rows());
  EqpResult out;
  if (k == 0) {
    Eigen::LLT<Eigen::MatrixXd> llt(h);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("QP Hessian is not positive definite");
    out.z = -llt.solve(g);
    out.multipliers.resize(0);
    return out;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a.transpose());
  qr.setThreshold(1e-11);
  if (qr.rank() < k) {
    out.independent = false;
    return out;
  }
  const Eigen::MatrixXd q = qr.householderQ();
  const auto r1 = qr.matrixQR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
  const Eigen::MatrixXd y = q.leftCols(k);
  // Aᵀ P = Q R  ⇒  A = P Rᵀ Qᵀ, so the range component solves Rᵀ u = −Pᵀ c.
  const Eigen::VectorXd pc = qr.colsPermutation().transpose() * c;
  const Eigen::VectorXd u = r1.transpose().solve(-pc);
  Eigen::VectorXd z = y * u;
  if (k < n) {
    const Eigen::MatrixXd zb = q.rightCols(n - k);
    const Eigen::MatrixXd reduced = zb.transpose() * h * zb;
    Eigen::LLT<Eigen::MatrixXd> llt(reduced);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("QP reduced Hessian is not positive definite");
    z += zb * llt.solve(-(zb.transpose() * (h * z + g)));
  }
  // Aᵀμ = Hz + g  ⇒  R (Pᵀμ) = Yᵀ(Hz + g).
  const Eigen::VectorXd rhs = y.transpose() * (h * z + g);
  const Eigen::VectorXd pmu = r1.solve(rhs);
  out.multipliers = qr.colsPermutation() * pmu;
  out.z = std::move(z);
  return out;
}

// Phase-2 primal active-set iterations from a feasible point. Rows [0, m_eq)
// of (A, c) are equalities and always in the working set.
struct ActiveSetEngine {
  const Eigen::MatrixXd& h;
  const Eigen::VectorXd& g;
  const Eigen::MatrixXd& a;
  const Eigen::VectorXd& c;
  int m_eq;
  QpOptions opt;

  struct Result {
    Eigen::VectorXd z;
    Eigen::VectorXd mult;  // full length, zero off the working set
    std::vector<int> working;
    bool converged = false;
    int iterations = 0;
  };

  Eigen::MatrixXd rows(const std::vector<int>& idx) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = a.row(idx[i]);
    return out;
  }

  Eigen::VectorXd entries(const std::vector<int>& idx) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = c[idx[i]];
    return out;
  }

  std::vector<int> full_set(const std::vector<int>& working) const {
    std::vector<int> w;
    w.reserve(static_cast<std::size_t>(m_eq) + working.size());
    for (int i = 0; i < m_eq; ++i) w.push_back(i);
    w.insert(w.end(), working.begin(), working.end());
    return w;
  }

  double objective(const Eigen::VectorXd& z) const { return 0.5 * z.dot(h * z) + g.dot(z); }

  Result run(Eigen::VectorXd z, std::vector<int> working, int max_iter, std::vector<double>* trace) const {
    Result res;
    const int n_rows = static_cast<int>(a.rows());
    std::sort(working.begin(), working.end());
    for (int it = 0; it < max_iter; ++it) {
      res.iterations = it + 1;
      const std::vector<int> w = full_set(working);
      const Eigen::VectorXd gk = h * z + g;
      const EqpResult step = solve_eqp(h, gk, rows(w), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(w.size())));
      if (!step.independent) throw std::runtime_error("active-set solver: working set became linearly dependent");
      const Eigen::VectorXd& p = step.z;
      const double scale = 1.0 + z.cwiseAbs().maxCoeff();
      if (p.cwiseAbs().maxCoeff() <= opt.step_tol * scale) {
        int drop = -1;
        double most_negative = -opt.dual_tol * (1.0 + gk.cwiseAbs().maxCoeff());
        for (std::size_t i = static_cast<std::size_t>(m_eq); i < w.size(); ++i) {
          const double mu = step.multipliers[static_cast<Eigen::Index>(i)];
          if (mu < most_negative) {
            most_negative = mu;
            drop = static_cast<int>(i) - m_eq;
          }
        }
        if (drop < 0) {
          res.converged = true;
          break;
        }
        working.erase(working.begin() + drop);
      } else {
        double alpha = 1.0;
        int blocking = -1;
        std::vector<char> in_working(static_cast<std::size_t>(n_rows), 0);
        for (int i : working) in_working[static_cast<std::size_t>(i)] = 1;
        for (int i = m_eq; i < n_rows; ++i) {
          if (in_working[static_cast<std::size_t>(i)]) continue;
          const double ap = a.row(i).dot(p);
          if (ap >= -1e-14 * a.row(i).cwiseAbs().maxCoeff() * p.cwiseAbs().maxCoeff()) continue;
          const double residual = std::max(0.0, a.row(i).dot(z) + c[i]);
          const double ratio = residual / -ap;
          if (ratio < alpha) {
            alpha = ratio;
            blocking = i;
          }
        }
        z += alpha * p;
        if (blocking >= 0) working.insert(std::upper_bound(working.begin(), working.end(), blocking), blocking);
      }
      if (trace) trace->push_back(objective(z));
    }
    // Polish: exact solve on the final (sorted) working set so the result
    // depends only on the problem and the identified active set.
    const std::vector<int> w = full_set(working);
    res.working = working;
    res.mult = Eigen::VectorXd::Zero(n_rows);
    const EqpResult fin = solve_eqp(h, g, rows(w), entries(w));
    if (fin.independent && res.converged) {
      res.z = fin.z;
      for (std::size_t i = 0; i < w.size(); ++i) res.mult[w[i]] = fin.multipliers[static_cast<Eigen::Index>(i)];
    } else {
      res.z = z;
    }
    return res;
  }
};

// Indices of a maximal linearly independent subset of the rows of m, in
// ascending order (column-pivoted QR of mᵀ).
inline std::vector<int> independent_rows(const Eigen::MatrixXd& m) {
  std::vector<int> keep;
  if (m.rows() == 0) return keep;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m.transpose());
  qr.setThreshold(1e-11);
  for (Eigen::Index i = 0; i < qr.rank(); ++i) keep.push_back(static_cast<int>(qr.colsPermutation().indices()[i]));
  std::sort(keep.begin(), keep.end());
  return keep;
}

}  // namespace detail

/// Dense primal active-set QP solver. Phase 1 finds a feasible point with an
/// elastic variable t ≥ 0 added to every inequality; phase 2 iterates on
/// equality-constrained subproblems. An optional warm-start active set is tried
/// first and discarded if it does not yield a feasible point.
inline QpSolution solve_qp(const QpProblem& p, const QpOptions& options = {},
                           const std::vector<int>* warm_start = nullptr) {
  const int n = p.dim();
  const int me = p.n_eq();
  const int mi = p.n_ineq();
  if (p.W_cost.rows() != n || p.W_cost.cols() != n || p.C_E.rows() != me || p.C_I.rows() != mi ||
      (me > 0 && p.C_E.cols() != n) || (mi > 0 && p.C_I.cols() != n)) {
    throw DimensionError("QP problem dimensions are inconsistent");
  }
  const int max_iter = options.max_iter > 0 ? options.max_iter : 50 + 10 * (n + mi);
  const double feas_tol = options.feasibility_tol;

  QpSolution sol;
  sol.nu = Eigen::VectorXd::Zero(me);
  sol.lambda = Eigen::VectorXd::Zero(mi);

  // Independent equality rows; dependent rows must be consistent.
  const std::vector<int> eq_keep = detail::independent_rows(p.C_E);
  const int me_kept = static_cast<int>(eq_keep.size());
  Eigen::MatrixXd a(me_kept + mi, n);
  Eigen::VectorXd c(me_kept + mi);
  for (int i = 0; i < me_kept; ++i) {
    a.row(i) = p.C_E.row(eq_keep[static_cast<std::size_t>(i)]);
    c[i] = p.c_E[eq_keep[static_cast<std::size_t>(i)]];
  }
  if (mi > 0) {
    a.bottomRows(mi) = p.C_I;
    c.tail(mi) = p.c_I;
  }

  auto finish = [&](const Eigen::VectorXd& z, QpStatus status) {
    sol.z = z;
    sol.status = status;
    sol.objective = qp_objective(p, z);
    sol.kkt = kkt_residuals(p, z, sol.nu, sol.lambda);
    return sol;
  };

  // Least-norm point on the equality manifold.
  Eigen::VectorXd z0 = Eigen::VectorXd::Zero(n);
  if (me > 0) {
    z0 = p.C_E.completeOrthogonalDecomposition().solve(-p.c_E);
    const double eq_scale = 1.0 + p.c_E.cwiseAbs().maxCoeff();
    if ((p.C_E * z0 + p.c_E).cwiseAbs().maxCoeff() > 1e-9 * eq_scale) return finish(z0, QpStatus::infeasible);
  }

  auto max_violation = [&](const Eigen::VectorXd& z) {
    return mi > 0 ? std::max(0.0, -(p.C_I * z + p.c_I).minCoeff()) : 0.0;
  };
  const double ineq_scale = 1.0 + (mi > 0 ? p.c_I.cwiseAbs().maxCoeff() : 0.0);

  Eigen::VectorXd start;
  std::vector<int> working;

  if (warm_start && !warm_start->empty()) {
    std::vector<int> w_rows;
    bool valid = true;
    for (int i : *warm_start) {
      if (i < 0 || i >= mi) valid = false;
      else w_rows.push_back(me_kept + i);
    }
    std::sort(w_rows.begin(), w_rows.end());
    w_rows.erase(std::unique(w_rows.begin(), w_rows.end()), w_rows.end());
    if (valid) {
      std::vector<int> all;
      for (int i = 0; i < me_kept; ++i) all.push_back(i);
      all.insert(all.end(), w_rows.begin(), w_rows.end());
      Eigen::MatrixXd aw(static_cast<Eigen::Index>(all.size()), n);
      Eigen::VectorXd cw(static_cast<Eigen::Index>(all.size()));
      for (std::size_t i = 0; i < all.size(); ++i) {
        aw.row(static_cast<Eigen::Index>(i)) = a.row(all[i]);
        cw[static_cast<Eigen::Index>(i)] = c[all[i]];
      }
      const auto eqp = detail::solve_eqp(p.W_cost, p.w_lin, aw, cw);
      if (eqp.independent && max_violation(eqp.z) <= feas_tol * ineq_scale) {
        start = eqp.z;
        working = w_rows;
      }
    }
  }

  if (start.size() == 0) {
    const double viol = max_violation(z0);
    if (viol <= feas_tol * ineq_scale) {
      start = z0;
    } else {
      // Phase 1: min ½ρ‖z − z0‖² + ½t² + t  over (z, t), with the elastic
      // inequalities C_I z + c_I + t ≥ 0 and t ≥ 0. Feasible at (z0, viol).
      const double rho = 1e-8;
      Eigen::MatrixXd h1 = Eigen::MatrixXd::Zero(n + 1, n + 1);
      h1.topLeftCorner(n, n).diagonal().setConstant(rho);
      h1(n, n) = 1.0;
      Eigen::VectorXd g1(n + 1);
      g1.head(n) = -rho * z0;
      g1[n] = 1.0;
      Eigen::MatrixXd a1 = Eigen::MatrixXd::Zero(me_kept + mi + 1, n + 1);
      Eigen::VectorXd c1 = Eigen::VectorXd::Zero(me_kept + mi + 1);
      a1.topLeftCorner(me_kept + mi, n) = a;
      a1.block(me_kept, n, mi, 1).setOnes();
      a1(me_kept + mi, n) = 1.0;
      c1.head(me_kept + mi) = c;
      Eigen::VectorXd y0(n + 1);
      y0.head(n) = z0;
      y0[n] = viol;
      detail::ActiveSetEngine phase1{h1, g1, a1, c1, me_kept, options};
      const auto r1 = phase1.run(y0, {}, max_iter, nullptr);
      sol.iterations += r1.iterations;
      const Eigen::VectorXd z1 = r1.z.head(n);
      if (max_violation(z1) > feas_tol * ineq_scale) return finish(z1, QpStatus::infeasible);
      start = z1;
    }
  }

  detail::ActiveSetEngine engine{p.W_cost, p.w_lin, a, c, me_kept, options};
  const auto r = engine.run(start, working, max_iter, &sol.objective_trace);
  sol.iterations += r.iterations;
  for (int i = 0; i < me_kept; ++i) sol.nu[eq_keep[static_cast<std::size_t>(i)]] = r.mult[i];
  for (int i = 0; i < mi; ++i) sol.lambda[i] = r.mult[me_kept + i];
  for (int row : r.working) sol.active_set.push_back(row - me_kept);
  return finish(r.z, r.converged ? QpStatus::solved : QpStatus::max_iter);
}

}  // namespace pbds
