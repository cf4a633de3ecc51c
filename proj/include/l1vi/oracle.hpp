#pragma once

// Brute-force references for small instances. Nothing in here depends on the
// semismooth Newton solver, so tests can use these as independent oracles.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <utility>

#include "l1vi/error.hpp"
#include "l1vi/linalg.hpp"
#include "l1vi/vi_core.hpp"

namespace l1vi::oracle {

/// Largest eigenvalue of a symmetric matrix by power iteration.
inline double power_iteration_lambda_max(const SparseMatrix& A, int iters = 500) {
  Vector x = Vector::Ones(A.rows()).normalized();
  double lambda = 0.0;
  for (int k = 0; k < iters; ++k) {
    Vector ax = A * x;
    const double next = ax.norm();
    if (next == 0.0) return 0.0;
    x = ax / next;
    if (std::abs(next - lambda) <= 1e-12 * next) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda;
}

inline double soft_threshold(double v, double t) {
  return std::copysign(std::max(std::abs(v) - t, 0.0), v);
}

/// Minimizes 0.5 y'Ay - u'y + g|y|_1 by proximal gradient with step 1/L.
/// Requires symmetric A. Stops when successive iterates differ by <= 1e-2 tol.
inline Vector prox_oracle_solve(const ViProblem& problem, double tol,
                                long max_iters = 5'000'000) {
  if (!problem.symmetric_hint()) {
    throw Error(ErrorCode::kInvalidProblem, "prox oracle needs a symmetric matrix");
  }
  // Power iteration can undershoot; a small margin keeps the step stable.
  const double L = 1.01 * power_iteration_lambda_max(problem.A());
  const double step = 1.0 / L;
  const double thresh = problem.g() * step;
  Vector y = Vector::Zero(problem.n());
  for (long k = 0; k < max_iters; ++k) {
    const Vector grad = problem.A() * y - problem.u();
    Vector next = y - step * grad;
    for (Index i = 0; i < next.size(); ++i) next(i) = soft_threshold(next(i), thresh);
    const double change = (next - y).cwiseAbs().maxCoeff();
    y = std::move(next);
    if (change <= 1e-2 * tol) return y;
  }
  throw Error(ErrorCode::kMaxIterations, "proximal gradient did not settle");
}

struct EnumerationResult {
  Vector y;
  int accepted_patterns = 0;
};

/// Tries all 3^n sign patterns sigma in {+, -, 0}^n: solves
/// A_S y_S = u_S - g sigma_S on the support S and accepts when the signs match
/// and |q_i| <= g off the support. Limited to n <= 10.
inline EnumerationResult enumerate_oracle_solve(const ViProblem& problem) {
  const Index n = problem.n();
  if (n > 10) throw Error(ErrorCode::kInvalidProblem, "enumeration limited to n <= 10");
  const Eigen::MatrixXd A(problem.A());
  const double g = problem.g();
  const Vector& u = problem.u();

  long total = 1;
  for (Index i = 0; i < n; ++i) total *= 3;

  auto run = [&](double tol) {
    EnumerationResult result;
    std::vector<int> sigma(static_cast<std::size_t>(n));
    for (long code = 0; code < total; ++code) {
      long c = code;
      std::vector<Index> support;
      for (Index i = 0; i < n; ++i) {
        sigma[static_cast<std::size_t>(i)] = static_cast<int>(c % 3) - 1;  // -1, 0, +1
        c /= 3;
        if (sigma[static_cast<std::size_t>(i)] != 0) support.push_back(i);
      }
      Vector y = Vector::Zero(n);
      if (!support.empty()) {
        const auto m = static_cast<Index>(support.size());
        Eigen::MatrixXd As(m, m);
        Vector rhs(m);
        for (Index a = 0; a < m; ++a) {
          rhs(a) = u(support[a]) - g * sigma[static_cast<std::size_t>(support[a])];
          for (Index b = 0; b < m; ++b) As(a, b) = A(support[a], support[b]);
        }
        const Vector ys = As.fullPivLu().solve(rhs);
        for (Index a = 0; a < m; ++a) y(support[a]) = ys(a);
      }
      const Vector q = u - A * y;
      bool ok = true;
      for (Index i = 0; i < n && ok; ++i) {
        const int s = sigma[static_cast<std::size_t>(i)];
        ok = s != 0 ? s * y(i) > -tol : std::abs(q(i)) <= g + tol;
      }
      if (ok) {
        if (result.accepted_patterns == 0) result.y = y;
        ++result.accepted_patterns;
      }
    }
    return result;
  };

  EnumerationResult result = run(0.0);
  if (result.accepted_patterns == 0) result = run(1e-10);
  if (result.accepted_patterns == 0) {
    throw Error(ErrorCode::kNoPatternAccepted, "no sign pattern satisfied the conditions");
  }
  return result;
}

/// Central differences with per-component step `step * (1 + |u_i|)`.
inline Vector fd_gradient(const std::function<double(const Vector&)>& cost,
                          const Vector& u, double step) {
  if (!(step > 0.0)) throw Error(ErrorCode::kInvalidProblem, "step must be positive");
  Vector grad(u.size());
  Vector probe = u;
  for (Index i = 0; i < u.size(); ++i) {
    const double h = step * (1.0 + std::abs(u(i)));
    probe(i) = u(i) + h;
    const double fp = cost(probe);
    probe(i) = u(i) - h;
    const double fm = cost(probe);
    probe(i) = u(i);
    grad(i) = (fp - fm) / (2.0 * h);
  }
  return grad;
}

/// Golden-section search for a minimizer of a unimodal function on [lo, hi].
inline double golden_section_1d(const std::function<double(double)>& cost, double lo,
                                double hi, double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = cost(c);
  double fd = cost(d);
  while (b - a > tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = cost(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = cost(d);
    }
  }
  return 0.5 * (a + b);
}

// Random instances: A = M'M + n I with standard-normal M, u standard-normal
// times n, g drawn from n * [0.25, 1.5] so that all three index classes show up.

inline SparseMatrix dense_to_sparse(const Eigen::MatrixXd& dense) {
  std::vector<Triplet> triplets;
  for (Index i = 0; i < dense.rows(); ++i) {
    for (Index j = 0; j < dense.cols(); ++j) {
      if (dense(i, j) != 0.0 || i == j) triplets.emplace_back(i, j, dense(i, j));
    }
  }
  SparseMatrix A(dense.rows(), dense.cols());
  A.setFromTriplets(triplets.begin(), triplets.end());
  return A;
}

template <class Rng>
Eigen::MatrixXd random_normal_matrix(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd M(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) M(i, j) = normal(rng);
  return M;
}

template <class Rng>
Vector random_rhs(Index n, Rng& rng) {
  std::normal_distribution<double> normal;
  Vector u(n);
  for (Index i = 0; i < n; ++i) u(i) = static_cast<double>(n) * normal(rng);
  return u;
}

template <class Rng>
double random_weight(Index n, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.25, 1.5);
  return static_cast<double>(n) * unif(rng);
}

template <class Rng>
Eigen::MatrixXd random_spd_matrix(Index n, Rng& rng) {
  const Eigen::MatrixXd M = random_normal_matrix(n, n, rng);
  Eigen::MatrixXd A = M.transpose() * M;
  A.diagonal().array() += static_cast<double>(n);
  return A;
}

template <class Rng>
ViProblem random_spd_problem(Index n, Rng& rng) {
  Eigen::MatrixXd A = random_spd_matrix(n, rng);
  A = 0.5 * (A + A.transpose()).eval();
  const double g = random_weight(n, rng);
  return ViProblem::create(dense_to_sparse(A), g, random_rhs(n, rng));
}

/// Positive definite but not symmetric: SPD part plus a skew-symmetric part.
template <class Rng>
ViProblem random_nonsymmetric_problem(Index n, Rng& rng) {
  const Eigen::MatrixXd N = random_normal_matrix(n, n, rng);
  const Eigen::MatrixXd A = random_spd_matrix(n, rng) + (N - N.transpose());
  const double g = random_weight(n, rng);
  return ViProblem::create(dense_to_sparse(A), g, random_rhs(n, rng));
}

}  // namespace l1vi::oracle
