#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <vector>

#include "l1vi/error.hpp"
#include "l1vi/linalg.hpp"
#include "l1vi/vi_core.hpp"

namespace l1vi {

/// Huber continuation and Newton stopping parameters for the forward solve.
struct HuberParams {
  double gamma = 1e2;
  double gamma_max = 1e8;
  double gamma_growth = 10.0;
  /// Target for the max-norm of the regularized residual, relative to max(1, |u|_inf).
  double newton_tol = 1e-10;
  int max_newton_iters = 50;
  /// Block solves allowed per exact active-set repair; 0 disables the repair.
  int max_active_set_iters = 20;

  void validate() const {
    if (!(gamma > 0.0) || !(gamma_max >= gamma) || !(gamma_growth > 1.0) ||
        !(newton_tol > 0.0) || max_newton_iters < 1 || max_active_set_iters < 0) {
      throw Error(ErrorCode::kInvalidProblem, "invalid Huber parameters");
    }
  }

  /// Tight settings for difference quotients, where solver error is amplified by 1/t.
  static HuberParams tight() {
    HuberParams p;
    p.newton_tol = 1e-12;
    p.gamma_max = 1e10;
    return p;
  }
};

struct SsnRecord {
  double gamma = 0.0;
  double residual_norm = 0.0;
  double step_norm = 0.0;
  int linear_solver_iters = 0;
};

struct SsnLog {
  std::vector<SsnRecord> records;
  int total_newton_iterations = 0;
  /// Block solves spent in exact active-set repairs.
  int active_set_iterations = 0;
  /// Continuation level at which the exact sign-pattern solve was accepted, if any.
  std::optional<double> polished_at_gamma;
};

/// (h_gamma(y))_i = g gamma y_i / max(g, gamma |y_i|).
inline Vector huber_map(const Vector& y, double g, double gamma) {
  return (g * gamma * y.array() / (gamma * y.array().abs()).max(g)).matrix();
}

/// Semismooth Newton system for the Huber-regularized problem
///   A y + q = u,  q - h_gamma(y) = 0,
/// with the dual-weighted generalized derivative of h_gamma.
///
/// The full block matrix is [[A, I], [-D, I]] acting on (dy, dq), where D is
/// the diagonal `coupling`. Eliminating dq gives (A + D) dy = r_state - r_huber.
struct NewtonSystem {
  ColSparseMatrix matrix;
  Vector rhs;
  Vector coupling;
  /// chi_i = 1 iff gamma |y_i| >= g.
  Eigen::Array<bool, Eigen::Dynamic, 1> saturated;
};

namespace detail {

/// D_i = g gamma / m_i - chi_i g gamma^2 y_i / m_i^2 * q_i / max(g, |q_i|),
/// m_i = max(g, gamma |y_i|). Non-negative because |q_i / max(g, |q_i|)| <= 1.
inline Vector newton_coupling(const Vector& y, const Vector& q, double g, double gamma,
                              Eigen::Array<bool, Eigen::Dynamic, 1>* saturated = nullptr) {
  const Index n = y.size();
  Vector d(n);
  if (saturated) saturated->resize(n);
  for (Index i = 0; i < n; ++i) {
    const double m = std::max(g, gamma * std::abs(y(i)));
    const bool chi = gamma * std::abs(y(i)) >= g;
    if (chi) {
      // m = gamma |y_i| here, so the two terms combine to g / |y_i| (1 - sign(y_i) qhat).
      const double qhat = q(i) / std::max(g, std::abs(q(i)));
      const double s = y(i) > 0.0 ? 1.0 : -1.0;
      d(i) = g / std::abs(y(i)) * (1.0 - s * qhat);
    } else {
      d(i) = g * gamma / m;
    }
    if (saturated) (*saturated)(i) = chi;
  }
  return d;
}

}  // namespace detail

inline NewtonSystem ssn_newton_system(const ViProblem& problem, const Vector& y,
                                      const Vector& q, double gamma) {
  const Index n = problem.n();
  detail::require_size(y.size(), n, "state y");
  detail::require_size(q.size(), n, "slack q");
  const double g = problem.g();
  NewtonSystem sys;
  sys.coupling = detail::newton_coupling(y, q, g, gamma, &sys.saturated);

  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(problem.A().nonZeros() + 3 * n));
  for (Index i = 0; i < n; ++i) {
    for (SparseMatrix::InnerIterator it(problem.A(), i); it; ++it) {
      triplets.emplace_back(i, it.col(), it.value());
    }
    triplets.emplace_back(i, n + i, 1.0);
    triplets.emplace_back(n + i, i, -sys.coupling(i));
    triplets.emplace_back(n + i, n + i, 1.0);
  }
  sys.matrix.resize(2 * n, 2 * n);
  sys.matrix.setFromTriplets(triplets.begin(), triplets.end());

  sys.rhs.resize(2 * n);
  sys.rhs.head(n) = problem.u() - problem.A() * y - q;
  sys.rhs.tail(n) = huber_map(y, g, gamma) - q;
  return sys;
}

struct ViSolveOutput {
  ViSolution solution;
  SsnLog log;
};

namespace detail {

/// y solving the unregularized problem on the pattern sigma in {-1, 0, 1}^n:
/// A_SS y_S = (u - g sigma)_S, y = 0 off S. Nothing if the block solve fails.
inline std::optional<Vector> pattern_state(const ViProblem& problem, const Vector& sigma) {
  const Index n = problem.n();
  IndexList idx;
  for (Index i = 0; i < n; ++i) {
    if (sigma(i) != 0.0) idx.push_back(i);
  }
  Vector y = Vector::Zero(n);
  if (!idx.empty()) {
    const Vector rhs = gather(problem.u() - problem.g() * sigma, idx);
    try {
      scatter(solve_principal(problem.A(), idx, rhs, problem.symmetric_hint()), idx, y);
    } catch (const Error&) {
      return std::nullopt;
    }
  }
  if (!y.allFinite()) return std::nullopt;
  return y;
}

/// sign(y_i) = sigma_i on the support and |q_i| <= g (up to roundoff) off it.
inline bool pattern_consistent(const ViProblem& problem, const Vector& sigma, const Vector& y,
                               const Vector& q) {
  const double g = problem.g();
  const double q_slack = 1e-12 * std::max(g, problem.u().cwiseAbs().maxCoeff());
  for (Index i = 0; i < problem.n(); ++i) {
    if (sigma(i) != 0.0) {
      if (!(sigma(i) * y(i) > 0.0)) return false;
    } else if (std::abs(q(i)) > g + q_slack) {
      return false;
    }
  }
  return true;
}

inline ViSolution pattern_solution(const ViProblem& problem, Vector y, const Vector& q) {
  ViSolution sol;
  sol.y = std::move(y);
  sol.q = q.cwiseMax(-problem.g()).cwiseMin(problem.g());
  return sol;
}

/// Solves the unregularized problem exactly on the sign pattern suggested by
/// the current iterate (support = saturated indices). Returns nothing when the
/// pattern is not self-consistent; a consistent pattern is the unique solution.
inline std::optional<ViSolution> exact_pattern_solve(
    const ViProblem& problem, const Vector& y,
    const Eigen::Array<bool, Eigen::Dynamic, 1>& support) {
  const Index n = problem.n();
  Vector sigma = Vector::Zero(n);
  for (Index i = 0; i < n; ++i) {
    if (support(i)) sigma(i) = y(i) > 0.0 ? 1.0 : -1.0;
  }
  auto ys = pattern_state(problem, sigma);
  if (!ys) return std::nullopt;
  const Vector q = compute_slack(problem, *ys);
  if (!pattern_consistent(problem, sigma, *ys, q)) return std::nullopt;
  return pattern_solution(problem, std::move(*ys), q);
}

/// Pattern of t = q + diag(A) y: sign(t_i) where |t_i| > g, else 0.
inline Vector active_set_pattern(const ViProblem& problem, const Vector& y, const Vector& q) {
  const Vector t = q + problem.A().diagonal().cwiseProduct(y);
  const double g = problem.g();
  Vector sigma = Vector::Zero(problem.n());
  for (Index i = 0; i < problem.n(); ++i) {
    if (t(i) > g) sigma(i) = 1.0;
    if (t(i) < -g) sigma(i) = -1.0;
  }
  return sigma;
}

/// Semismooth Newton on the unregularized complementarity system (primal-dual
/// active set form), started from `sigma`. Each step solves on the current
/// pattern and re-reads the pattern from t = q + diag(A) y. Stops at the
/// first consistent pattern, on a repeated pattern, or after `max_iters`.
inline std::optional<ViSolution> active_set_solve(const ViProblem& problem, Vector sigma,
                                                  int max_iters, int* iterations = nullptr) {
  std::set<std::vector<double>> visited;
  for (int it = 0; it < max_iters; ++it) {
    if (!visited.insert(std::vector<double>(sigma.data(), sigma.data() + sigma.size())).second) {
      break;
    }
    if (iterations) ++*iterations;
    auto y = pattern_state(problem, sigma);
    if (!y) break;
    const Vector q = compute_slack(problem, *y);
    if (pattern_consistent(problem, sigma, *y, q)) {
      return pattern_solution(problem, std::move(*y), q);
    }
    sigma = active_set_pattern(problem, *y, q);
  }
  return std::nullopt;
}

}  // namespace detail

/// Forward solve by Huber continuation with semismooth Newton at each level.
///
/// After every level the sign pattern of the Huber solution is tested as an
/// exact solution of the unregularized problem; the first consistent pattern
/// ends the solve. Otherwise the final level is polished by projecting q onto
/// [-g, g] and truncating tiny entries of y. `converged` reports whether the
/// complementarity residual meets newton_tol (relative to max(1, |u|_inf)).
inline ViSolveOutput solve_vi(const ViProblem& problem, const HuberParams& params,
                              const ViSolution* warm_start = nullptr) {
  params.validate();
  const Index n = problem.n();
  const double g = problem.g();
  const Vector& u = problem.u();
  const double scale = std::max(1.0, u.cwiseAbs().maxCoeff());
  const double tol = params.newton_tol * scale;

  ViSolveOutput out;
  auto finish = [&](ViSolution sol) {
    out.solution = std::move(sol);
    out.solution.iterations = out.log.total_newton_iterations + out.log.active_set_iterations;
    out.solution.residual_norm =
        complementarity_residual(problem, out.solution.y, out.solution.q).max_norm();
    out.solution.converged = out.solution.residual_norm <= tol;
    return out;
  };

  Vector y = Vector::Zero(n);
  Vector q = Vector::Zero(n);
  if (warm_start && warm_start->y.size() == n && warm_start->q.size() == n) {
    y = warm_start->y;
    q = warm_start->q;
    // A nearby solution usually fixes the pattern after a few block solves.
    const Vector sigma = detail::active_set_pattern(problem, y, compute_slack(problem, y));
    if (auto exact = detail::active_set_solve(problem, sigma, params.max_active_set_iters,
                                              &out.log.active_set_iterations)) {
      return finish(std::move(*exact));
    }
  }

  // A + D shares the pattern of A because every diagonal entry is stored.
  ColSparseMatrix M = problem.A();
  M.makeCompressed();
  std::vector<Index> diag_pos(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) {
    for (Index p = M.outerIndexPtr()[j]; p < M.outerIndexPtr()[j + 1]; ++p) {
      if (M.innerIndexPtr()[p] == j) diag_pos[static_cast<std::size_t>(j)] = p;
    }
  }
  const Vector a_diag = problem.A().diagonal();
  SparseSolver solver(problem.symmetric_hint());
  solver.analyze_pattern(M);

  double gamma = params.gamma;
  Eigen::Array<bool, Eigen::Dynamic, 1> saturated;
  while (true) {
    for (int it = 0; it <= params.max_newton_iters; ++it) {
      const Vector r_state = u - problem.A() * y - q;
      const Vector r_huber = huber_map(y, g, gamma) - q;
      const double res = std::max(r_state.cwiseAbs().maxCoeff(), r_huber.cwiseAbs().maxCoeff());
      if (res <= tol) break;
      if (it == params.max_newton_iters) break;
      const Vector d = detail::newton_coupling(y, q, g, gamma);
      for (Index j = 0; j < n; ++j) {
        M.valuePtr()[diag_pos[static_cast<std::size_t>(j)]] = a_diag(j) + d(j);
      }
      solver.factorize(M);
      const Vector dy = solver.solve(r_state - r_huber);
      const Vector dq = r_huber + d.cwiseProduct(dy);
      y += dy;
      q += dq;
      out.log.records.push_back({gamma, res, dy.cwiseAbs().maxCoeff(), solver.last_iterations()});
      ++out.log.total_newton_iterations;
    }
    saturated = (gamma * y.array().abs()) >= g;
    if (auto exact = detail::exact_pattern_solve(problem, y, saturated)) {
      out.log.polished_at_gamma = gamma;
      return finish(std::move(*exact));
    }
    if (auto exact = detail::active_set_solve(problem, detail::active_set_pattern(problem, y, q),
                                              params.max_active_set_iters,
                                              &out.log.active_set_iterations)) {
      out.log.polished_at_gamma = gamma;
      return finish(std::move(*exact));
    }
    if (gamma >= params.gamma_max) break;
    gamma = std::min(gamma * params.gamma_growth, params.gamma_max);
  }

  const double tol_y = default_tolerances(y, g).tol_y;
  ViSolution last;
  last.y = (y.array().abs() <= tol_y).select(0.0, y);
  last.q = q.cwiseMax(-g).cwiseMin(g);
  return finish(std::move(last));
}

}  // namespace l1vi
