#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "l1vi/error.hpp"
#include "l1vi/linalg.hpp"

namespace l1vi {

/// One instance of the l1 variational inequality of the second kind:
/// find y with <Ay, v - y> + g|v|_1 - g|y|_1 >= <u, v - y> for all v.
///
/// Instances are immutable. The matrix is shared between copies, so
/// re-targeting a problem at a new right-hand side is cheap.
class ViProblem {
 public:
  /// Number of random directions used to probe positive definiteness.
  static constexpr int kDefinitenessProbes = 20;

  /// Validates and builds a problem. Throws Error(kInvalidProblem) when the
  /// matrix is not square, has an empty row or a missing diagonal entry, fails
  /// the positive-definiteness probe, or g <= 0.
  static ViProblem create(SparseMatrix A, double g, Vector u) {
    if (A.rows() < 1 || A.rows() != A.cols()) {
      throw Error(ErrorCode::kInvalidProblem, "matrix must be square with n >= 1");
    }
    A.makeCompressed();
    const Index n = A.rows();
    detail::require_size(u.size(), n, "right-hand side u");
    if (!(g > 0.0) || !std::isfinite(g)) {
      throw Error(ErrorCode::kInvalidProblem, "weight g must be positive");
    }
    for (Index i = 0; i < n; ++i) {
      bool has_diag = false;
      for (SparseMatrix::InnerIterator it(A, i); it; ++it) {
        if (it.col() == i) has_diag = true;
      }
      if (!has_diag) {
        throw Error(ErrorCode::kInvalidProblem,
                    "row " + std::to_string(i) + " has no stored diagonal entry");
      }
    }
    if (!probe_positive_definite(A)) {
      throw Error(ErrorCode::kInvalidProblem, "matrix failed the positive-definiteness probe");
    }
    const bool symmetric = is_symmetric(A);
    return ViProblem(std::make_shared<const SparseMatrix>(std::move(A)), g,
                     std::move(u), symmetric);
  }

  Index n() const { return matrix_->rows(); }
  const SparseMatrix& A() const { return *matrix_; }
  double g() const { return g_; }
  const Vector& u() const { return u_; }
  bool symmetric_hint() const { return symmetric_; }

  /// Same operator and weight, new right-hand side.
  ViProblem with_rhs(Vector u) const {
    detail::require_size(u.size(), n(), "right-hand side u");
    return ViProblem(matrix_, g_, std::move(u), symmetric_);
  }

  ViProblem with_weight(double g) const {
    if (!(g > 0.0)) throw Error(ErrorCode::kInvalidProblem, "weight g must be positive");
    return ViProblem(matrix_, g, u_, symmetric_);
  }

  static bool is_symmetric(const SparseMatrix& A) {
    const SparseMatrix At = A.transpose();
    const SparseMatrix diff = A - At;
    if (diff.nonZeros() == 0) return true;
    const double scale = std::max(1.0, A.coeffs().cwiseAbs().maxCoeff());
    return diff.coeffs().cwiseAbs().maxCoeff() <= 1e-14 * scale;
  }

  static bool probe_positive_definite(const SparseMatrix& A) {
    std::mt19937_64 rng(0x5eed);
    std::normal_distribution<double> normal;
    Vector x(A.rows());
    for (int k = 0; k < kDefinitenessProbes; ++k) {
      for (Index i = 0; i < x.size(); ++i) x(i) = normal(rng);
      x.normalize();
      if (!(x.dot(A * x) > 0.0)) return false;
    }
    // Unit coordinate directions catch non-positive diagonal entries.
    for (Index i = 0; i < A.rows(); ++i) {
      if (!(A.coeff(i, i) > 0.0)) return false;
    }
    return true;
  }

 private:
  ViProblem(std::shared_ptr<const SparseMatrix> A, double g, Vector u, bool symmetric)
      : matrix_(std::move(A)), g_(g), u_(std::move(u)), symmetric_(symmetric) {}

  std::shared_ptr<const SparseMatrix> matrix_;
  double g_;
  Vector u_;
  bool symmetric_;
};

struct ViSolution {
  Vector y;
  Vector q;
  /// Max-norm of the weighted complementarity residual at (y, q).
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Residual blocks of the weighted complementarity system
///   A y + q - u = 0,  q_i y_i - g|y_i| = 0,  max(|q_i|, g) - g = 0.
struct ComplementarityResidual {
  Vector balance;
  Vector slackness;
  Vector bound;

  double max_norm() const {
    double r = 0.0;
    for (const Vector* v : {&balance, &slackness, &bound}) {
      if (v->size() > 0) r = std::max(r, v->cwiseAbs().maxCoeff());
    }
    return r;
  }
};

/// q = u - A y.
inline Vector compute_slack(const ViProblem& problem, const Vector& y) {
  detail::require_size(y.size(), problem.n(), "state y");
  return problem.u() - problem.A() * y;
}

inline ComplementarityResidual complementarity_residual(const ViProblem& problem,
                                                        const Vector& y,
                                                        const Vector& q) {
  detail::require_size(y.size(), problem.n(), "state y");
  detail::require_size(q.size(), problem.n(), "slack q");
  const double g = problem.g();
  ComplementarityResidual r;
  r.balance = problem.A() * y + q - problem.u();
  r.slackness = (q.array() * y.array() - g * y.array().abs()).matrix();
  r.bound = (q.array().abs().max(g) - g).matrix();
  return r;
}

enum class IndexClass : unsigned char {
  kInactivePlus,
  kInactiveMinus,
  kStronglyActive,
  kBiactivePlus,
  kBiactiveMinus,
};

/// Partition of {0..n-1} by the sign of y and the size of |q| relative to g.
/// Inactive: y_i != 0. Strongly active: y_i = 0, |q_i| < g. Biactive: y_i = 0, |q_i| = g.
struct IndexSets {
  IndexList inactive_plus;
  IndexList inactive_minus;
  IndexList strongly_active;
  IndexList biactive_plus;
  IndexList biactive_minus;
  std::vector<IndexClass> labels;
  double tol_y = 0.0;
  double tol_q = 0.0;

  Index n() const { return static_cast<Index>(labels.size()); }

  IndexList inactive() const { return merged(inactive_plus, inactive_minus); }
  IndexList biactive() const { return merged(biactive_plus, biactive_minus); }
  /// Inactive and biactive indices, sorted.
  IndexList free_indices() const { return merged(inactive(), biactive()); }

  bool is_inactive(Index i) const {
    const auto c = labels[static_cast<std::size_t>(i)];
    return c == IndexClass::kInactivePlus || c == IndexClass::kInactiveMinus;
  }
  bool is_biactive(Index i) const {
    const auto c = labels[static_cast<std::size_t>(i)];
    return c == IndexClass::kBiactivePlus || c == IndexClass::kBiactiveMinus;
  }
  bool is_strongly_active(Index i) const {
    return labels[static_cast<std::size_t>(i)] == IndexClass::kStronglyActive;
  }
  std::size_t biactive_count() const { return biactive_plus.size() + biactive_minus.size(); }

  /// Sign of q on the biactive set (+1 / -1), 0 elsewhere.
  double biactive_sign(Index i) const {
    const auto c = labels[static_cast<std::size_t>(i)];
    if (c == IndexClass::kBiactivePlus) return 1.0;
    if (c == IndexClass::kBiactiveMinus) return -1.0;
    return 0.0;
  }

  /// Membership in the cone K(y): v_i = 0 on strongly active indices and
  /// sign(q_i) v_i >= 0 on biactive ones, both up to `tol`.
  bool in_cone(const Vector& v, double tol = 0.0) const {
    for (Index i = 0; i < n(); ++i) {
      if (is_strongly_active(i) && std::abs(v(i)) > tol) return false;
      if (is_biactive(i) && biactive_sign(i) * v(i) < -tol) return false;
    }
    return true;
  }

 private:
  static IndexList merged(const IndexList& a, const IndexList& b) {
    IndexList out;
    out.reserve(a.size() + b.size());
    std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
  }
};

struct ClassificationTolerances {
  double tol_y;
  double tol_q;
};

/// tol_y = 1e-10 max(1, |y|_inf), tol_q = 1e-8 g.
inline ClassificationTolerances default_tolerances(const Vector& y, double g) {
  const double ymax = y.size() > 0 ? y.cwiseAbs().maxCoeff() : 0.0;
  return {1e-10 * std::max(1.0, ymax), 1e-8 * g};
}

/// Throws Error(kInconsistentSlackness) when an index with |y_i| > tol_y has
/// q_i further than tol_q from g sign(y_i).
inline IndexSets classify_sets(const Vector& y, const Vector& q, double g,
                               double tol_y, double tol_q) {
  detail::require_size(q.size(), y.size(), "slack q");
  IndexSets sets;
  sets.tol_y = tol_y;
  sets.tol_q = tol_q;
  sets.labels.resize(static_cast<std::size_t>(y.size()));
  for (Index i = 0; i < y.size(); ++i) {
    IndexClass c;
    if (std::abs(y(i)) > tol_y) {
      const double s = y(i) > 0.0 ? 1.0 : -1.0;
      if (std::abs(q(i) - g * s) > tol_q) {
        throw Error(ErrorCode::kInconsistentSlackness,
                    "index " + std::to_string(i) + ": y = " + std::to_string(y(i)) +
                        " but q = " + std::to_string(q(i)));
      }
      c = s > 0.0 ? IndexClass::kInactivePlus : IndexClass::kInactiveMinus;
    } else if (std::abs(q(i)) >= g - tol_q) {
      c = q(i) > 0.0 ? IndexClass::kBiactivePlus : IndexClass::kBiactiveMinus;
    } else {
      c = IndexClass::kStronglyActive;
    }
    sets.labels[static_cast<std::size_t>(i)] = c;
    switch (c) {
      case IndexClass::kInactivePlus: sets.inactive_plus.push_back(i); break;
      case IndexClass::kInactiveMinus: sets.inactive_minus.push_back(i); break;
      case IndexClass::kStronglyActive: sets.strongly_active.push_back(i); break;
      case IndexClass::kBiactivePlus: sets.biactive_plus.push_back(i); break;
      case IndexClass::kBiactiveMinus: sets.biactive_minus.push_back(i); break;
    }
  }
  return sets;
}

inline IndexSets classify_sets(const Vector& y, const Vector& q, double g) {
  const auto tol = default_tolerances(y, g);
  return classify_sets(y, q, g, tol.tol_y, tol.tol_q);
}

inline IndexSets classify_sets(const ViSolution& sol, double g) {
  return classify_sets(sol.y, sol.q, g);
}

}  // namespace l1vi
