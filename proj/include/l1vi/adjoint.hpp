#pragma once

#include <utility>

#include "l1vi/error.hpp"
#include "l1vi/linalg.hpp"
#include "l1vi/sensitivity.hpp"
#include "l1vi/ssn.hpp"
#include "l1vi/vi_core.hpp"

namespace l1vi {

/// Tracking-type control problem
///   min 0.5 |y - z|^2 + alpha/2 |u|^2  s.t.  y = S(u),
/// where S solves the VI of `vi` with right-hand side u.
class ControlProblem {
 public:
  static ControlProblem create(ViProblem vi, double alpha, Vector z) {
    if (!(alpha > 0.0)) throw Error(ErrorCode::kInvalidProblem, "alpha must be positive");
    detail::require_size(z.size(), vi.n(), "desired state z");
    return ControlProblem(std::move(vi), alpha, std::move(z));
  }

  const ViProblem& vi() const { return vi_; }
  double alpha() const { return alpha_; }
  const Vector& z() const { return z_; }
  Index n() const { return vi_.n(); }

  ViProblem state_problem(const Vector& u) const { return vi_.with_rhs(u); }

  /// J(y, u) for a given state.
  double objective(const Vector& y, const Vector& u) const {
    return 0.5 * (y - z_).squaredNorm() + 0.5 * alpha_ * u.squaredNorm();
  }

 private:
  ControlProblem(ViProblem vi, double alpha, Vector z)
      : vi_(std::move(vi)), alpha_(alpha), z_(std::move(z)) {}

  ViProblem vi_;
  double alpha_;
  Vector z_;
};

struct CostEvaluation {
  double value = 0.0;
  ViSolution solution;
};

/// j(u) together with the state it was computed from.
inline CostEvaluation evaluate_cost(const ControlProblem& cp, const Vector& u,
                                    const HuberParams& params,
                                    const ViSolution* warm_start = nullptr) {
  detail::require_size(u.size(), cp.n(), "control u");
  CostEvaluation eval;
  eval.solution = solve_vi(cp.state_problem(u), params, warm_start).solution;
  if (!eval.solution.converged) {
    throw Error(ErrorCode::kNoConvergence, "state solve did not converge (residual " +
                                               std::to_string(eval.solution.residual_norm) + ")");
  }
  eval.value = cp.objective(eval.solution.y, u);
  return eval;
}

/// j(u) = 0.5 |S(u) - z|^2 + alpha/2 |u|^2.
inline double reduced_cost(const ControlProblem& cp, const Vector& u, const HuberParams& params) {
  return evaluate_cost(cp, u, params).value;
}

/// p = y - z on active indices; A_I^T p_I = (y - z)_I on the inactive set.
inline Vector adjoint_state(const ControlProblem& cp, const ViSolution& sol,
                            const IndexSets& sets) {
  detail::require_size(sol.y.size(), cp.n(), "state y");
  const Vector residual = sol.y - cp.z();
  Vector p = residual;
  const IndexList inactive = sets.inactive();
  if (!inactive.empty()) {
    const Vector local = solve_principal(cp.vi().A(), inactive, gather(residual, inactive),
                                         cp.vi().symmetric_hint(), /*transpose=*/true);
    scatter(local, inactive, p);
  }
  return p;
}

struct ReducedGradient {
  Vector gradient;
  Vector adjoint;
  /// False when the biactive set is nonempty; the gradient is then only an
  /// inexact descent direction.
  bool exact = true;
};

/// j'(u)_i = alpha u_i off the inactive set and p_i + alpha u_i on it.
/// Biactive indices get the alpha u_i branch.
inline ReducedGradient reduced_gradient(const ControlProblem& cp, const Vector& u,
                                        const ViSolution& sol, const IndexSets& sets) {
  detail::require_size(u.size(), cp.n(), "control u");
  ReducedGradient out;
  out.adjoint = adjoint_state(cp, sol, sets);
  out.gradient = cp.alpha() * u;
  for (Index i : sets.inactive()) out.gradient(i) += out.adjoint(i);
  out.exact = sets.biactive_count() == 0;
  return out;
}

/// j'(u; h) = <S(u) - z, eta> + alpha <u, h> with eta = S'(u; h).
inline double directional_cost_derivative(const ControlProblem& cp, const Vector& u,
                                          const ViSolution& sol, const Vector& h,
                                          const DerivativePair& pair) {
  detail::require_size(h.size(), cp.n(), "direction h");
  detail::require_size(pair.eta.size(), cp.n(), "eta");
  return (sol.y - cp.z()).dot(pair.eta) + cp.alpha() * u.dot(h);
}

}  // namespace l1vi
