#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <vector>

#include "l1vi/error.hpp"
#include "l1vi/linalg.hpp"
#include "l1vi/ssn.hpp"
#include "l1vi/vi_core.hpp"

namespace l1vi {

enum class DerivativeMethod { kLinearSystem, kConeVi };

inline const char* to_string(DerivativeMethod m) {
  return m == DerivativeMethod::kLinearSystem ? "linear_system" : "cone_vi";
}

/// Directional derivative eta = S'(u; h) together with lambda = h - A eta.
struct DerivativePair {
  Vector eta;
  Vector lambda;
  DerivativeMethod method = DerivativeMethod::kLinearSystem;
  /// Max violation of the mixed complementarity conditions characterizing eta.
  double kkt_residual = 0.0;
};

/// Per-condition maximum violations of the limit system
///   A eta + lambda = h, lambda = 0 on I, eta = 0 on A_s,
///   eta q >= 0, lambda q <= 0, eta lambda = 0 on B,
///   lambda_i y_i + q_i eta_i = g f_i(eta_i).
struct DerivativeSystemReport {
  double balance = 0.0;
  double lambda_inactive = 0.0;
  double eta_strongly_active = 0.0;
  double eta_sign_biactive = 0.0;
  double lambda_sign_biactive = 0.0;
  double complementarity_biactive = 0.0;
  double limit_relation = 0.0;

  double max_violation() const {
    return std::max({balance, lambda_inactive, eta_strongly_active, eta_sign_biactive,
                     lambda_sign_biactive, complementarity_biactive, limit_relation});
  }
};

/// Which biactive indices start out free (lambda_i = 0) in the cone solve.
enum class ConeStart { kAllFree, kAllFixed };

struct ConeViOptions {
  ConeStart start = ConeStart::kAllFree;
  int max_newton_iters = 50;
  /// Largest biactive set for which all 2^|B| patterns are tried as a fallback.
  std::size_t exhaustive_limit = 12;
  /// Absolute tolerance on the KKT residual, scaled by max(1, |h|_inf).
  double tol = 1e-10;
};

/// Solves the derivative systems of one (problem, index sets) pair. Each
/// pattern of free biactive indices defines a principal block of A whose
/// factorization is cached, so many directions can be processed cheaply.
class DerivativeSolver {
 public:
  using Pattern = std::vector<bool>;

  DerivativeSolver(const ViProblem& problem, const IndexSets& sets)
      : problem_(problem), sets_(sets), inactive_(sets.inactive()), biactive_(sets.biactive()) {
    detail::require_size(sets.n(), problem.n(), "index sets");
  }

  const IndexSets& sets() const { return sets_; }
  const IndexList& biactive() const { return biactive_; }

  /// eta on I union {biactive i with pattern[k] true}, zero elsewhere.
  DerivativePair solve_pattern(const Pattern& pattern, const Vector& h) {
    const IndexList free = free_set(pattern);
    DerivativePair pair;
    pair.eta = Vector::Zero(problem_.n());
    if (!free.empty()) {
      SparseSolver& solver = factorization(pattern, free);
      scatter(solver.solve(gather(h, free)), free, pair.eta);
    }
    pair.lambda = h - problem_.A() * pair.eta;
    return pair;
  }

  /// Gateaux derivative. Requires an empty biactive set.
  DerivativePair gateaux(const Vector& h) {
    detail::require_size(h.size(), problem_.n(), "direction h");
    if (!biactive_.empty()) {
      throw Error(ErrorCode::kBiactiveNonempty,
                  std::to_string(biactive_.size()) + " biactive indices");
    }
    DerivativePair pair = solve_pattern({}, h);
    pair.method = DerivativeMethod::kLinearSystem;
    pair.kkt_residual = kkt_residual(pair);
    return pair;
  }

  /// Solution of the cone VI: eta in K(y), <A eta - h, v - eta> >= 0 for v in K(y).
  /// Semismooth Newton (primal-dual active set form) on
  /// min(q_i eta_i / g, -q_i lambda_i / g) = 0 over the biactive set, with an
  /// exhaustive pattern search when it cycles or stalls.
  DerivativePair cone_vi(const Vector& h, const ConeViOptions& opts = {}) {
    detail::require_size(h.size(), problem_.n(), "direction h");
    const double tol = opts.tol * std::max(1.0, h.cwiseAbs().maxCoeff());
    const std::size_t nb = biactive_.size();
    if (nb == 0) {
      DerivativePair pair = solve_pattern({}, h);
      pair.method = DerivativeMethod::kConeVi;
      pair.kkt_residual = kkt_residual(pair);
      return pair;
    }

    Pattern pattern(nb, opts.start == ConeStart::kAllFree);
    std::set<Pattern> visited;
    for (int it = 0; it < opts.max_newton_iters; ++it) {
      if (!visited.insert(pattern).second) break;  // cycling
      DerivativePair pair = solve_pattern(pattern, h);
      Pattern next(nb);
      for (std::size_t k = 0; k < nb; ++k) {
        const Index i = biactive_[k];
        const double s = weighted_sign(i);
        // Keep eta_i free when s eta_i beats -s lambda_i in the min function.
        next[k] = s * pair.eta(i) + s * pair.lambda(i) > 0.0;
      }
      if (next == pattern) {
        pair.method = DerivativeMethod::kConeVi;
        pair.kkt_residual = kkt_residual(pair);
        if (pair.kkt_residual <= tol) return pair;
        break;
      }
      pattern = std::move(next);
    }
    if (nb > opts.exhaustive_limit) {
      throw Error(ErrorCode::kNoConvergence,
                  "cone VI Newton failed and |B| = " + std::to_string(nb) +
                      " exceeds the exhaustive limit");
    }
    return exhaustive(h, tol);
  }

  /// Tries every pattern of free biactive indices and returns the one with the
  /// smallest KKT residual. Throws NoConvergence if none reaches `tol`.
  DerivativePair exhaustive(const Vector& h, double tol) {
    const std::size_t nb = biactive_.size();
    if (nb >= 31) throw Error(ErrorCode::kNoConvergence, "biactive set too large to enumerate");
    DerivativePair best;
    double best_res = std::numeric_limits<double>::infinity();
    for (unsigned long code = 0; code < (1ul << nb); ++code) {
      Pattern pattern(nb);
      for (std::size_t k = 0; k < nb; ++k) pattern[k] = (code >> k) & 1ul;
      DerivativePair pair = solve_pattern(pattern, h);
      const double res = kkt_residual(pair);
      if (res < best_res) {
        best_res = res;
        best = std::move(pair);
      }
    }
    if (!(best_res <= tol)) {
      throw Error(ErrorCode::kNoConvergence,
                  "no biactive pattern satisfies the cone conditions (best residual " +
                      std::to_string(best_res) + ")");
    }
    best.method = DerivativeMethod::kConeVi;
    best.kkt_residual = best_res;
    return best;
  }

  /// Max violation of: lambda = 0 on I, eta = 0 on A_s and, on B,
  /// q eta / g >= 0, q lambda / g <= 0, eta lambda = 0.
  double kkt_residual(const DerivativePair& pair) const {
    double r = 0.0;
    for (Index i = 0; i < problem_.n(); ++i) {
      if (sets_.is_inactive(i)) {
        r = std::max(r, std::abs(pair.lambda(i)));
      } else if (sets_.is_strongly_active(i)) {
        r = std::max(r, std::abs(pair.eta(i)));
      } else {
        const double s = weighted_sign(i);
        r = std::max({r, -s * pair.eta(i), s * pair.lambda(i),
                      std::abs(pair.eta(i) * pair.lambda(i))});
      }
    }
    return r;
  }

  /// Sign of q_i on biactive indices; equals q_i / g up to the classification tolerance.
  double weighted_sign(Index i) const { return sets_.biactive_sign(i); }

 private:
  IndexList free_set(const Pattern& pattern) const {
    IndexList free = inactive_;
    for (std::size_t k = 0; k < pattern.size(); ++k) {
      if (pattern[k]) free.push_back(biactive_[k]);
    }
    std::sort(free.begin(), free.end());
    return free;
  }

  SparseSolver& factorization(const Pattern& pattern, const IndexList& free) {
    auto it = cache_.find(pattern);
    if (it == cache_.end()) {
      auto solver = std::make_unique<SparseSolver>(problem_.symmetric_hint());
      solver->compute(principal_submatrix(problem_.A(), free));
      it = cache_.emplace(pattern, std::move(solver)).first;
    }
    return *it->second;
  }

  ViProblem problem_;
  IndexSets sets_;
  IndexList inactive_;
  IndexList biactive_;
  std::map<Pattern, std::unique_ptr<SparseSolver>> cache_;
};

inline DerivativePair derivative_gateaux(const ViProblem& problem, const IndexSets& sets,
                                         const Vector& h) {
  return DerivativeSolver(problem, sets).gateaux(h);
}

inline DerivativePair derivative_cone_vi(const ViProblem& problem, const ViSolution& sol,
                                         const IndexSets& sets, const Vector& h,
                                         const ConeViOptions& opts = {}) {
  detail::require_size(sol.y.size(), problem.n(), "solution");
  return DerivativeSolver(problem, sets).cone_vi(h, opts);
}

/// All 2^|B| patterns, no Newton iteration. Used to certify cone_vi results.
inline DerivativePair derivative_cone_vi_exhaustive(const ViProblem& problem,
                                                    const IndexSets& sets, const Vector& h,
                                                    double tol = 1e-10) {
  detail::require_size(h.size(), problem.n(), "direction h");
  return DerivativeSolver(problem, sets).exhaustive(h, tol * std::max(1.0, h.cwiseAbs().maxCoeff()));
}

inline DerivativeSystemReport verify_derivative_system(const ViProblem& problem,
                                                       const ViSolution& sol,
                                                       const IndexSets& sets, const Vector& h,
                                                       const DerivativePair& pair) {
  const Index n = problem.n();
  const double g = problem.g();
  detail::require_size(h.size(), n, "direction h");
  detail::require_size(pair.eta.size(), n, "eta");
  detail::require_size(pair.lambda.size(), n, "lambda");
  DerivativeSystemReport rep;
  rep.balance = (problem.A() * pair.eta + pair.lambda - h).cwiseAbs().maxCoeff();
  for (Index i = 0; i < n; ++i) {
    const double eta = pair.eta(i);
    const double lam = pair.lambda(i);
    if (sets.is_inactive(i)) {
      rep.lambda_inactive = std::max(rep.lambda_inactive, std::abs(lam));
    } else if (sets.is_strongly_active(i)) {
      rep.eta_strongly_active = std::max(rep.eta_strongly_active, std::abs(eta));
    } else {
      const double s = sol.q(i) / g;
      rep.eta_sign_biactive = std::max(rep.eta_sign_biactive, -s * eta);
      rep.lambda_sign_biactive = std::max(rep.lambda_sign_biactive, s * lam);
      rep.complementarity_biactive = std::max(rep.complementarity_biactive, std::abs(eta * lam));
    }
    const double f = sets.is_inactive(i) ? (sol.y(i) > 0.0 ? eta : -eta) : std::abs(eta);
    rep.limit_relation =
        std::max(rep.limit_relation, std::abs(lam * sol.y(i) + sol.q(i) * eta - g * f));
  }
  return rep;
}

/// (S(u + t h) - S(u)) / t from two forward solves.
inline Vector finite_difference_quotient(const ViProblem& problem, const HuberParams& params,
                                         const Vector& h, double t,
                                         const ViSolution* base = nullptr) {
  detail::require_size(h.size(), problem.n(), "direction h");
  if (!(t > 0.0)) throw Error(ErrorCode::kInvalidProblem, "step t must be positive");
  ViSolution base_sol;
  if (base == nullptr) {
    base_sol = solve_vi(problem, params).solution;
    base = &base_sol;
  }
  const ViSolution shifted = solve_vi(problem.with_rhs(problem.u() + t * h), params).solution;
  return (shifted.y - base->y) / t;
}

}  // namespace l1vi
