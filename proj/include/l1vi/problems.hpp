#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <cmath>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "l1vi/adjoint.hpp"
#include "l1vi/error.hpp"
#include "l1vi/linalg.hpp"
#include "l1vi/ssn.hpp"
#include "l1vi/trust_region.hpp"
#include "l1vi/vi_core.hpp"

namespace l1vi {

/// Uniform grid on the unit square with mesh step h = 1/m.
class GridSpec {
 public:
  explicit GridSpec(int m) : m_(m) {
    if (m < 2) throw Error(ErrorCode::kInvalidProblem, "grid needs m >= 2");
  }

  int m() const { return m_; }
  double h() const { return 1.0 / m_; }
  int interior() const { return m_ - 1; }
  Index n() const { return static_cast<Index>(interior()) * interior(); }

  /// Unknown of node (i h, j h), 1 <= i, j <= m - 1; x1 runs fastest.
  Index index(int i, int j) const {
    return static_cast<Index>(j - 1) * interior() + (i - 1);
  }

 private:
  int m_;
};

/// Five-point negative Laplacian with homogeneous Dirichlet boundary.
inline SparseMatrix build_laplacian(const GridSpec& grid) {
  const int k = grid.interior();
  const double inv_h2 = 1.0 / (grid.h() * grid.h());
  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(5 * grid.n()));
  for (int j = 1; j <= k; ++j) {
    for (int i = 1; i <= k; ++i) {
      const Index row = grid.index(i, j);
      entries.emplace_back(row, row, 4.0 * inv_h2);
      if (i > 1) entries.emplace_back(row, grid.index(i - 1, j), -inv_h2);
      if (i < k) entries.emplace_back(row, grid.index(i + 1, j), -inv_h2);
      if (j > 1) entries.emplace_back(row, grid.index(i, j - 1), -inv_h2);
      if (j < k) entries.emplace_back(row, grid.index(i, j + 1), -inv_h2);
    }
  }
  SparseMatrix A(grid.n(), grid.n());
  A.setFromTriplets(entries.begin(), entries.end());
  A.makeCompressed();
  return A;
}

/// z(x1, x2) = 10 sin(5 x1) cos(4 x2) at the interior nodes.
inline Vector desired_state(const GridSpec& grid) {
  Vector z(grid.n());
  const double h = grid.h();
  for (int j = 1; j <= grid.interior(); ++j) {
    for (int i = 1; i <= grid.interior(); ++i) {
      z(grid.index(i, j)) = 10.0 * std::sin(5.0 * i * h) * std::cos(4.0 * j * h);
    }
  }
  return z;
}

inline ControlProblem laplacian_example(double alpha, double g, const GridSpec& grid) {
  auto vi = ViProblem::create(build_laplacian(grid), g, Vector::Zero(grid.n()));
  return ControlProblem::create(std::move(vi), alpha, desired_state(grid));
}

enum class InitialControl { kTracking, kZero };

inline const char* to_string(InitialControl c) {
  return c == InitialControl::kTracking ? "tracking" : "zero";
}

inline InitialControl parse_initial_control(const std::string& s) {
  if (s == "tracking") return InitialControl::kTracking;
  if (s == "zero") return InitialControl::kZero;
  throw Error(ErrorCode::kInvalidProblem, "unknown initial control '" + s + "'");
}

/// u = A z + g sign(z), whose state is exactly z. The zero control is a
/// local minimizer of every problem with |u| <= g nearby (S vanishes there).
inline Vector tracking_control(const ControlProblem& cp) {
  const Vector& z = cp.z();
  Vector u = cp.vi().A() * z;
  for (Index i = 0; i < z.size(); ++i) {
    if (z(i) > 0.0) u(i) += cp.vi().g();
    if (z(i) < 0.0) u(i) -= cp.vi().g();
  }
  return u;
}

inline Vector initial_control(const ControlProblem& cp, InitialControl kind) {
  return kind == InitialControl::kTracking ? tracking_control(cp) : Vector::Zero(cp.n());
}

/// Fraction of components that are exactly zero.
inline double zero_fraction(const Vector& y) {
  if (y.size() == 0) return 0.0;
  return static_cast<double>((y.array() == 0.0).count()) / static_cast<double>(y.size());
}

struct SweepCell {
  double alpha = 0.0;
  double g = 0.0;
  bool converged = false;
  int iterations = 0;
  double zero_fraction = 0.0;
  double seconds = 0.0;
  /// Set when the run threw; the cell then counts as not converged.
  std::optional<std::string> error;
  std::optional<OptimizeResult> result;
};

struct SweepTable {
  std::vector<double> alphas;
  std::vector<double> gs;
  /// Row-major: cells[a * gs.size() + k].
  std::vector<SweepCell> cells;

  const SweepCell& at(std::size_t a, std::size_t k) const { return cells[a * gs.size() + k]; }
};

struct SweepOptions {
  InitialControl start = InitialControl::kTracking;
  unsigned jobs = 1;
  bool keep_results = true;
};

/// One optimize run per (alpha, g) cell. Cells are independent and run on
/// `jobs` threads; a failing cell is recorded, never rethrown.
inline SweepTable sweep(const std::vector<double>& alphas, const std::vector<double>& gs,
                        const GridSpec& grid, const TrustRegionConfig& cfg,
                        const HuberParams& params, const SweepOptions& opts = {}) {
  if (alphas.empty() || gs.empty()) {
    throw Error(ErrorCode::kInvalidProblem, "sweep needs nonempty alpha and g lists");
  }
  cfg.validate();
  params.validate();
  SweepTable table{alphas, gs, std::vector<SweepCell>(alphas.size() * gs.size())};
  const SparseMatrix A = build_laplacian(grid);
  const Vector z = desired_state(grid);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < table.cells.size(); c = next++) {
      SweepCell& cell = table.cells[c];
      cell.alpha = alphas[c / gs.size()];
      cell.g = gs[c % gs.size()];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        auto vi = ViProblem::create(A, cell.g, Vector::Zero(grid.n()));
        const auto cp = ControlProblem::create(std::move(vi), cell.alpha, z);
        OptimizeResult res = optimize(cp, cfg, params, initial_control(cp, opts.start));
        cell.converged = res.converged;
        cell.iterations = res.iterations;
        cell.zero_fraction = zero_fraction(res.y_final);
        if (opts.keep_results) cell.result = std::move(res);
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      cell.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  };
  const unsigned jobs = std::max(1u, std::min<unsigned>(opts.jobs, table.cells.size()));
  std::vector<std::thread> threads;
  for (unsigned t = 1; t < jobs; ++t) threads.emplace_back(worker);
  worker();
  for (auto& th : threads) th.join();
  return table;
}

}  // namespace l1vi
