#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/IterativeSolvers>

#include <memory>
#include <string>
#include <vector>

#include "l1vi/error.hpp"

namespace l1vi {

using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using IndexList = std::vector<Index>;
/// Row-compressed storage used for problem matrices.
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
/// Column-compressed storage consumed by the direct factorizations.
using ColSparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;
using Triplet = Eigen::Triplet<double>;

/// Systems above this size go to restarted GMRES instead of a direct factorization.
inline constexpr Index kIterativeThreshold = 20000;

/// Extracts A(idx, idx) in column-compressed form. `idx` must be sorted and unique.
inline ColSparseMatrix principal_submatrix(const SparseMatrix& A,
                                           const IndexList& idx) {
  std::vector<Index> local(static_cast<std::size_t>(A.rows()), -1);
  for (std::size_t k = 0; k < idx.size(); ++k) local[static_cast<std::size_t>(idx[k])] = static_cast<Index>(k);
  std::vector<Triplet> triplets;
  triplets.reserve(idx.size() * 5);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    for (SparseMatrix::InnerIterator it(A, idx[k]); it; ++it) {
      const Index j = local[static_cast<std::size_t>(it.col())];
      if (j >= 0) triplets.emplace_back(static_cast<Index>(k), j, it.value());
    }
  }
  const auto m = static_cast<Index>(idx.size());
  ColSparseMatrix sub(m, m);
  sub.setFromTriplets(triplets.begin(), triplets.end());
  return sub;
}

inline Vector gather(const Vector& v, const IndexList& idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Index>(k)) = v(idx[k]);
  return out;
}

inline void scatter(const Vector& local, const IndexList& idx, Vector& global) {
  for (std::size_t k = 0; k < idx.size(); ++k) global(idx[k]) = local(static_cast<Index>(k));
}

/// Direct sparse solver (Cholesky-type for symmetric matrices, LU otherwise)
/// with a GMRES fallback for very large systems. The sparsity pattern can be
/// analyzed once and refactorized for each new set of values.
class SparseSolver {
 public:
  explicit SparseSolver(bool symmetric, Index iterative_threshold = kIterativeThreshold)
      : symmetric_(symmetric), iterative_threshold_(iterative_threshold) {}

  void analyze_pattern(const ColSparseMatrix& M) {
    n_ = M.rows();
    if (n_ > iterative_threshold_) {
      gmres_ = std::make_unique<Gmres>();
      gmres_->setTolerance(1e-12);
      gmres_->set_restart(60);
      gmres_->setMaxIterations(std::max<Index>(1000, 4 * n_));
    } else if (symmetric_) {
      ldlt_ = std::make_unique<Eigen::SimplicialLDLT<ColSparseMatrix>>();
      ldlt_->analyzePattern(M);
    } else {
      lu_ = std::make_unique<Eigen::SparseLU<ColSparseMatrix>>();
      lu_->analyzePattern(M);
    }
    analyzed_ = true;
  }

  void factorize(const ColSparseMatrix& M) {
    if (!analyzed_ || M.rows() != n_) analyze_pattern(M);
    bool ok = true;
    if (gmres_) {
      gmres_->compute(M);
      ok = gmres_->info() == Eigen::Success;
    } else if (ldlt_) {
      ldlt_->factorize(M);
      ok = ldlt_->info() == Eigen::Success && (ldlt_->vectorD().array() > 0.0).all();
    } else {
      lu_->factorize(M);
      ok = lu_->info() == Eigen::Success;
    }
    if (!ok) throw Error(ErrorCode::kLinearSolveFailure, "factorization failed");
  }

  void compute(const ColSparseMatrix& M) {
    analyze_pattern(M);
    factorize(M);
  }

  Vector solve(const Vector& rhs) {
    detail::require_size(rhs.size(), n_, "right-hand side");
    if (n_ == 0) return Vector(0);
    Vector x;
    if (gmres_) {
      x = gmres_->solve(rhs);
      last_iterations_ = static_cast<int>(gmres_->iterations());
      if (gmres_->info() != Eigen::Success) {
        throw Error(ErrorCode::kLinearSolveFailure, "GMRES stagnated");
      }
    } else if (ldlt_) {
      x = ldlt_->solve(rhs);
      last_iterations_ = 0;
    } else {
      x = lu_->solve(rhs);
      last_iterations_ = 0;
      if (lu_->info() != Eigen::Success) {
        throw Error(ErrorCode::kLinearSolveFailure, "sparse LU solve failed");
      }
    }
    if (!x.allFinite()) throw Error(ErrorCode::kLinearSolveFailure, "non-finite solution");
    return x;
  }

  int last_iterations() const { return last_iterations_; }
  bool iterative() const { return static_cast<bool>(gmres_); }

 private:
  using Gmres = Eigen::GMRES<ColSparseMatrix, Eigen::IncompleteLUT<double>>;

  bool symmetric_;
  Index iterative_threshold_;
  Index n_ = 0;
  bool analyzed_ = false;
  int last_iterations_ = 0;
  std::unique_ptr<Eigen::SimplicialLDLT<ColSparseMatrix>> ldlt_;
  std::unique_ptr<Eigen::SparseLU<ColSparseMatrix>> lu_;
  std::unique_ptr<Gmres> gmres_;
};

/// Solves A(idx, idx) x = rhs (or its transpose) for a principal block.
inline Vector solve_principal(const SparseMatrix& A, const IndexList& idx,
                              const Vector& rhs, bool symmetric,
                              bool transpose = false) {
  if (idx.empty()) return Vector(0);
  ColSparseMatrix sub = principal_submatrix(A, idx);
  if (transpose && !symmetric) sub = ColSparseMatrix(sub.transpose());
  SparseSolver solver(symmetric);
  solver.compute(sub);
  return solver.solve(rhs);
}

}  // namespace l1vi
