#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "l1vi/adjoint.hpp"
#include "l1vi/error.hpp"
#include "l1vi/linalg.hpp"
#include "l1vi/ssn.hpp"
#include "l1vi/vi_core.hpp"

namespace l1vi {

struct TrustRegionConfig {
  double eta1 = 0.25;
  double eta2 = 0.75;
  double gamma0 = 0.25;
  double gamma1 = 0.5;
  double gamma2 = 1.5;
  double delta_min = 0.0;
  double delta0 = 100.0;
  double beta = 1.0;
  /// Fraction-of-Cauchy-decrease constant.
  double delta_fcd = 0.8;
  double stop_tol = 1e-4;
  int max_iters = 500;

  void validate() const {
    const bool ok = 0.0 < eta1 && eta1 < eta2 && eta2 < 1.0 && 0.0 < gamma0 &&
                    gamma0 < gamma1 && gamma1 < 1.0 && 1.0 < gamma2 && delta_min >= 0.0 &&
                    delta0 > 0.0 && delta0 >= delta_min && beta >= 1.0 && delta_fcd > 0.0 &&
                    delta_fcd <= 1.0 && stop_tol > 0.0 && max_iters >= 0;
    if (!ok) throw Error(ErrorCode::kInvalidProblem, "invalid trust-region configuration");
  }
};

/// BFGS approximation H of the reduced Hessian, H_0 = scale * I.
///
/// The update pairs are kept instead of a dense matrix: H v follows from the
/// rank-two recursion with stored w_k = H_k s_k, and H^{-1} v from the
/// two-loop recursion over the same pairs. Both represent the same matrix.
class BfgsModel {
 public:
  BfgsModel(Index n, double scale) : n_(n), scale_(scale) {
    if (!(scale > 0.0)) throw Error(ErrorCode::kInvalidProblem, "BFGS scale must be positive");
  }

  Index n() const { return n_; }
  double scale() const { return scale_; }
  std::size_t num_updates() const { return pairs_.size(); }

  Vector apply(const Vector& v) const {
    detail::require_size(v.size(), n_, "vector");
    Vector r = scale_ * v;
    for (const auto& p : pairs_) {
      r += p.y * (p.y.dot(v) / p.ys) - p.w * (p.w.dot(v) / p.sw);
    }
    return r;
  }

  /// H^{-1} v by the two-loop recursion.
  Vector solve(const Vector& v) const {
    detail::require_size(v.size(), n_, "vector");
    Vector r = v;
    std::vector<double> a(pairs_.size());
    for (std::size_t k = pairs_.size(); k-- > 0;) {
      const auto& p = pairs_[k];
      a[k] = p.s.dot(r) / p.ys;
      r -= a[k] * p.y;
    }
    r /= scale_;
    for (std::size_t k = 0; k < pairs_.size(); ++k) {
      const auto& p = pairs_[k];
      const double b = p.y.dot(r) / p.ys;
      r += (a[k] - b) * p.s;
    }
    return r;
  }

  /// H+ = H - H s s'H / s'Hs + y y' / y's; skipped (returns false) when
  /// y's <= 1e-10 |y| |s|.
  bool update(const Vector& s, const Vector& y) {
    detail::require_size(s.size(), n_, "step s");
    detail::require_size(y.size(), n_, "gradient difference");
    const double ys = y.dot(s);
    if (!(ys > 1e-10 * y.norm() * s.norm())) return false;
    Pair p{s, y, apply(s), ys, 0.0};
    p.sw = s.dot(p.w);
    if (!(p.sw > 0.0)) return false;
    pairs_.push_back(std::move(p));
    return true;
  }

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd H(n_, n_);
    for (Index j = 0; j < n_; ++j) H.col(j) = apply(Vector::Unit(n_, j));
    return H;
  }

 private:
  struct Pair {
    Vector s;
    Vector y;
    Vector w;
    double ys;
    double sw;
  };

  Index n_;
  double scale_;
  std::vector<Pair> pairs_;
};

/// Dense symmetric model matrix; used for small problems and tests.
class DenseModel {
 public:
  explicit DenseModel(Eigen::MatrixXd H) : H_(std::move(H)) {
    if (H_.rows() != H_.cols()) throw Error(ErrorCode::kDimensionMismatch, "model must be square");
  }
  static DenseModel scaled_identity(Index n, double scale) {
    return DenseModel(scale * Eigen::MatrixXd::Identity(n, n));
  }

  Index n() const { return H_.rows(); }
  Vector apply(const Vector& v) const { return H_ * v; }
  Vector solve(const Vector& v) const { return H_.fullPivLu().solve(v); }
  const Eigen::MatrixXd& dense() const { return H_; }

  bool update(const Vector& s, const Vector& y) {
    detail::require_size(s.size(), n(), "step s");
    detail::require_size(y.size(), n(), "gradient difference");
    const double ys = y.dot(s);
    if (!(ys > 1e-10 * y.norm() * s.norm())) return false;
    const Vector w = H_ * s;
    const double sw = s.dot(w);
    if (!(sw > 0.0)) return false;
    H_ += y * y.transpose() / ys - w * w.transpose() / sw;
    H_ = 0.5 * (H_ + H_.transpose()).eval();
    return true;
  }

 private:
  Eigen::MatrixXd H_;
};

template <class Model>
Model bfgs_update(Model H, const Vector& s, const Vector& y_diff) {
  H.update(s, y_diff);
  return H;
}

/// q_k(s) = j_k + g's + 0.5 s'H s.
template <class Model>
struct QuadraticModel {
  double j = 0.0;
  Vector g;
  const Model* H = nullptr;

  double value(const Vector& s) const { return j + g.dot(s) + 0.5 * s.dot(H->apply(s)); }
  /// pred(s) = j_k - q_k(s).
  double pred(const Vector& s) const { return -g.dot(s) - 0.5 * s.dot(H->apply(s)); }
};

/// s_c = -t* g with t* = Delta/|g| if g'Hg <= 0, else min(|g|^2/g'Hg, Delta/|g|).
template <class Model>
Vector cauchy_step(const Vector& g, const Model& H, double delta) {
  const double gnorm = g.norm();
  if (gnorm == 0.0) throw Error(ErrorCode::kZeroGradient, "gradient vanishes");
  const double gHg = g.dot(H.apply(g));
  double t = delta / gnorm;
  if (gHg > 0.0) t = std::min(gnorm * gnorm / gHg, t);
  return -t * g;
}

/// s_n = -H^{-1} g, checked to relative residual 1e-10.
template <class Model>
Vector newton_step(const Vector& g, const Model& H) {
  Vector s = -H.solve(g);
  const double res = s.allFinite() ? (H.apply(s) + g).norm()
                                   : std::numeric_limits<double>::infinity();
  if (!(res <= 1e-10 * std::max(g.norm(), std::numeric_limits<double>::min()))) {
    throw Error(ErrorCode::kSingularModel, "Newton step residual " + std::to_string(res));
  }
  return s;
}

/// |s| <= beta Delta and pred(s) >= delta_fcd pred(s_c).
template <class Model>
bool fcd_accepts(const Vector& s, const Vector& s_c, const QuadraticModel<Model>& model,
                 double delta, const TrustRegionConfig& cfg) {
  if (s.norm() > cfg.beta * delta) return false;
  return model.pred(s) >= cfg.delta_fcd * model.pred(s_c);
}

struct RadiusDecision {
  bool accept = false;
  double delta = 0.0;
};

/// rho > eta2: accept, gamma2 Delta. eta1 < rho <= eta2: accept,
/// max(Delta_min, gamma1 Delta). Otherwise reject, gamma1 Delta.
/// A NaN rho (undefined ratio) is a rejection.
inline RadiusDecision radius_update(double rho, double delta, const TrustRegionConfig& cfg) {
  if (rho > cfg.eta2) return {true, cfg.gamma2 * delta};
  if (rho > cfg.eta1) return {true, std::max(cfg.delta_min, cfg.gamma1 * delta)};
  return {false, cfg.gamma1 * delta};
}

enum class StepType { kNewton, kCauchy };

inline const char* to_string(StepType t) { return t == StepType::kNewton ? "newton" : "cauchy"; }

struct IterationRecord {
  int k = 0;
  double j = 0.0;
  double gnorm = 0.0;
  double delta = 0.0;
  double rho = 0.0;
  StepType step_type = StepType::kCauchy;
  bool accepted = false;
  std::size_t biactive_count = 0;
  double step_norm = 0.0;
  double ared = 0.0;
  double pred = 0.0;
};

enum class StopReason {
  kStepTolerance,
  kZeroGradient,
  kNegligibleDecrease,
  kMaxIterations,
  kRadiusCollapse
};

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::kStepTolerance: return "step_tolerance";
    case StopReason::kZeroGradient: return "zero_gradient";
    case StopReason::kNegligibleDecrease: return "negligible_decrease";
    case StopReason::kMaxIterations: return "max_iterations";
    case StopReason::kRadiusCollapse: return "radius_collapse";
  }
  return "unknown";
}

struct OptimizeResult {
  Vector u_final;
  Vector y_final;
  Vector q_final;
  double j_final = 0.0;
  int iterations = 0;
  std::vector<IterationRecord> history;
  bool converged = false;
  StopReason stop_reason = StopReason::kMaxIterations;
};

/// Observer invoked after every iteration record is appended.
using IterationCallback = std::function<void(const IterationRecord&)>;

/// Trust-region loop with Cauchy / BFGS-Newton steps on the reduced cost.
inline OptimizeResult optimize(const ControlProblem& cp, const TrustRegionConfig& cfg,
                               const HuberParams& params, const Vector& u0,
                               const IterationCallback& on_iteration = {}) {
  cfg.validate();
  detail::require_size(u0.size(), cp.n(), "initial control");
  const double g_weight = cp.vi().g();

  OptimizeResult result;
  Vector u = u0;
  CostEvaluation eval = evaluate_cost(cp, u, params);
  IndexSets sets = classify_sets(eval.solution, g_weight);
  ReducedGradient grad = reduced_gradient(cp, u, eval.solution, sets);
  BfgsModel H(cp.n(), cp.alpha());
  double delta = cfg.delta0;

  auto finish = [&](StopReason reason, bool converged) {
    result.u_final = u;
    result.y_final = eval.solution.y;
    result.q_final = eval.solution.q;
    result.j_final = eval.value;
    result.iterations = static_cast<int>(result.history.size());
    result.stop_reason = reason;
    result.converged = converged;
    return result;
  };

  for (int k = 0; k < cfg.max_iters; ++k) {
    const Vector& g = grad.gradient;
    // The gradient p + alpha u vanishes up to cancellation in its two terms.
    const double g_scale = cp.alpha() * u.norm() + grad.adjoint.norm();
    if (g.norm() <= 1e-14 * g_scale) return finish(StopReason::kZeroGradient, true);
    if (delta <= 1e-14 * std::max(1.0, u.norm())) return finish(StopReason::kRadiusCollapse, false);

    const QuadraticModel<BfgsModel> model{eval.value, g, &H};
    const Vector s_c = cauchy_step(g, H, delta);
    Vector s = s_c;
    StepType type = StepType::kCauchy;
    try {
      Vector s_n = newton_step(g, H);
      // Even the unconstrained model minimizer cannot change j beyond roundoff.
      if (model.pred(s_n) <= 1e-14 * eval.value) {
        return finish(StopReason::kNegligibleDecrease, true);
      }
      if (fcd_accepts(s_n, s_c, model, delta, cfg)) {
        s = std::move(s_n);
        type = StepType::kNewton;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kSingularModel) throw;
    }

    IterationRecord rec;
    rec.k = k;
    rec.j = eval.value;
    rec.gnorm = g.norm();
    rec.delta = delta;
    rec.step_type = type;
    rec.biactive_count = sets.biactive_count();
    rec.step_norm = s.norm();
    rec.pred = model.pred(s);

    const Vector u_trial = u + s;
    std::optional<CostEvaluation> trial;
    try {
      trial = evaluate_cost(cp, u_trial, params, &eval.solution);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNoConvergence) throw;
    }
    rec.ared = trial ? eval.value - trial->value : -std::numeric_limits<double>::infinity();
    rec.rho = (rec.pred > 0.0 && trial) ? rec.ared / rec.pred
                                        : -std::numeric_limits<double>::infinity();
    const RadiusDecision decision = radius_update(rec.rho, delta, cfg);
    rec.accepted = decision.accept;
    result.history.push_back(rec);
    if (on_iteration) on_iteration(rec);

    delta = decision.delta;
    if (decision.accept) {
      IndexSets trial_sets = classify_sets(trial->solution, g_weight);
      ReducedGradient trial_grad = reduced_gradient(cp, u_trial, trial->solution, trial_sets);
      H.update(s, trial_grad.gradient - g);
      u = u_trial;
      eval = std::move(*trial);
      sets = std::move(trial_sets);
      grad = std::move(trial_grad);
      if (s.norm() <= cfg.stop_tol) return finish(StopReason::kStepTolerance, true);
    }
  }
  return finish(StopReason::kMaxIterations, false);
}

}  // namespace l1vi
