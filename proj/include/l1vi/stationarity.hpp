#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "l1vi/adjoint.hpp"
#include "l1vi/error.hpp"
#include "l1vi/linalg.hpp"
#include "l1vi/sensitivity.hpp"
#include "l1vi/ssn.hpp"
#include "l1vi/vi_core.hpp"

namespace l1vi {

/// Which directions d enter min_d j'(u; d).
struct DirectionSampling {
  bool coordinate = true;
  /// Number of random unit directions on top of the +-e_i.
  int random = 32;
  std::uint64_t seed = 0x5eed;
};

struct BStationarityResult {
  double min_directional = 0.0;
  std::size_t directions = 0;
  /// Direction attaining the minimum.
  Vector worst;
};

/// min over the sampled unit directions d of j'(u; d) = <S(u) - z, S'(u; d)> + alpha <u, d>.
inline BStationarityResult check_b_stationarity_detailed(const ControlProblem& cp, const Vector& u,
                                                         const HuberParams& params,
                                                         const DirectionSampling& dirs = {}) {
  detail::require_size(u.size(), cp.n(), "control u");
  const ViProblem state = cp.state_problem(u);
  const ViSolution sol = evaluate_cost(cp, u, params).solution;
  const IndexSets sets = classify_sets(sol, state.g());
  DerivativeSolver solver(state, sets);

  BStationarityResult out;
  out.min_directional = std::numeric_limits<double>::infinity();
  auto probe = [&](const Vector& d) {
    const DerivativePair pair = solver.cone_vi(d);
    const double value = directional_cost_derivative(cp, u, sol, d, pair);
    ++out.directions;
    if (value < out.min_directional) {
      out.min_directional = value;
      out.worst = d;
    }
  };
  const Index n = cp.n();
  if (dirs.coordinate) {
    for (Index i = 0; i < n; ++i) {
      probe(Vector::Unit(n, i));
      probe(-Vector::Unit(n, i));
    }
  }
  std::mt19937_64 rng(dirs.seed);
  std::normal_distribution<double> normal;
  for (int k = 0; k < dirs.random; ++k) {
    Vector d(n);
    for (Index i = 0; i < n; ++i) d(i) = normal(rng);
    probe(d / d.norm());
  }
  if (out.directions == 0) throw Error(ErrorCode::kInvalidProblem, "no directions sampled");
  return out;
}

inline double check_b_stationarity(const ControlProblem& cp, const Vector& u,
                                   const HuberParams& params, const DirectionSampling& dirs = {}) {
  return check_b_stationarity_detailed(cp, u, params, dirs).min_directional;
}

/// Residuals of the strong stationarity system with p = -alpha u and
/// mu = (y - z) - A' p. All are nonnegative magnitudes.
struct StrongResiduals {
  /// |A' p + mu - (y - z)|_inf.
  double adjoint_eq = 0.0;
  /// |p_i| on strongly active, max(0, -sign(q_i) p_i) on biactive.
  double p_in_cone = 0.0;
  /// |mu_i| on the inactive set.
  double mu_sign_inactive = 0.0;
  /// max(0, -sign(q_i) mu_i) on the biactive set.
  double mu_sign_biactive = 0.0;
  /// |j'(u)|_inf from the adjoint-based reduced gradient. Informational: it
  /// need not vanish at a strongly stationary point with biactive indices.
  double gradient_eq = 0.0;

  /// Largest residual of the system itself (gradient_eq excluded).
  double max() const {
    return std::max({adjoint_eq, p_in_cone, mu_sign_inactive, mu_sign_biactive});
  }
};

struct CStationarity {
  double mu_dot_p = 0.0;
  double mu_dot_y = 0.0;
};

struct StationarityVerdicts {
  double tol = 0.0;
  /// tol times max(1, |p|_inf, |mu|_inf, |y - z|_inf).
  double abs_tol = 0.0;
  bool strong = false;
  bool c = false;
  /// Only set when a B check was run.
  std::optional<bool> b;
};

struct StationarityReport {
  std::optional<double> b_min_directional;
  std::size_t b_directions = 0;
  StrongResiduals strong;
  CStationarity c_stat;
  StationarityVerdicts verdicts;
  Vector p;
  Vector mu;
  std::size_t biactive_count = 0;
};

/// (<mu, p>, <mu, y>).
inline std::pair<double, double> check_c_stationarity(const Vector& mu, const Vector& p,
                                                      const Vector& y) {
  detail::require_size(p.size(), mu.size(), "p");
  detail::require_size(y.size(), mu.size(), "y");
  return {mu.dot(p), mu.dot(y)};
}

/// <mu, p> >= -abs_tol (|mu|_1 + |p|_1) and |<mu, y>| <= abs_tol |y|_1.
/// With these bounds a strong pass at abs_tol always yields a C pass.
inline bool c_stationarity_passes(const Vector& mu, const Vector& p, const Vector& y,
                                  double abs_tol) {
  const auto [mp, my] = check_c_stationarity(mu, p, y);
  return mp >= -abs_tol * (mu.lpNorm<1>() + p.lpNorm<1>()) &&
         std::abs(my) <= abs_tol * y.lpNorm<1>();
}

inline StationarityReport check_strong_stationarity(const ControlProblem& cp, const Vector& u,
                                                    const ViSolution& sol, const IndexSets& sets,
                                                    double tol = 1e-6) {
  const Index n = cp.n();
  detail::require_size(u.size(), n, "control u");
  detail::require_size(sol.y.size(), n, "state y");
  detail::require_size(sets.n(), n, "index sets");

  StationarityReport rep;
  rep.biactive_count = sets.biactive_count();
  const Vector residual = sol.y - cp.z();
  rep.p = -cp.alpha() * u;
  const Vector At_p = cp.vi().A().transpose() * rep.p;
  rep.mu = residual - At_p;

  StrongResiduals& r = rep.strong;
  r.adjoint_eq = (At_p + rep.mu - residual).cwiseAbs().maxCoeff();
  for (Index i = 0; i < n; ++i) {
    if (sets.is_inactive(i)) {
      r.mu_sign_inactive = std::max(r.mu_sign_inactive, std::abs(rep.mu(i)));
    } else if (sets.is_strongly_active(i)) {
      r.p_in_cone = std::max(r.p_in_cone, std::abs(rep.p(i)));
    } else {
      const double s = sets.biactive_sign(i);
      r.p_in_cone = std::max(r.p_in_cone, -s * rep.p(i));
      r.mu_sign_biactive = std::max(r.mu_sign_biactive, -s * rep.mu(i));
    }
  }
  r.gradient_eq = reduced_gradient(cp, u, sol, sets).gradient.cwiseAbs().maxCoeff();

  const auto [mp, my] = check_c_stationarity(rep.mu, rep.p, sol.y);
  rep.c_stat = {mp, my};

  StationarityVerdicts& v = rep.verdicts;
  v.tol = tol;
  v.abs_tol = tol * std::max({1.0, rep.p.cwiseAbs().maxCoeff(), rep.mu.cwiseAbs().maxCoeff(),
                              residual.cwiseAbs().maxCoeff()});
  v.strong = r.max() <= v.abs_tol;
  v.c = c_stationarity_passes(rep.mu, rep.p, sol.y, v.abs_tol);
  return rep;
}

/// Full certificate at u: strong and C residuals, and the sampled B margin
/// judged against -sqrt(tol).
inline StationarityReport certify_stationarity(const ControlProblem& cp, const Vector& u,
                                               const HuberParams& params, double tol = 1e-6,
                                               const DirectionSampling& dirs = {}) {
  const ViSolution sol = evaluate_cost(cp, u, params).solution;
  const IndexSets sets = classify_sets(sol, cp.vi().g());
  StationarityReport rep = check_strong_stationarity(cp, u, sol, sets, tol);
  const BStationarityResult b = check_b_stationarity_detailed(cp, u, params, dirs);
  rep.b_min_directional = b.min_directional;
  rep.b_directions = b.directions;
  rep.verdicts.b = b.min_directional >= -std::sqrt(tol);
  return rep;
}

}  // namespace l1vi
