#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "l1vi/error.hpp"
#include "l1vi/linalg.hpp"
#include "l1vi/problems.hpp"
#include "l1vi/ssn.hpp"
#include "l1vi/stationarity.hpp"
#include "l1vi/trust_region.hpp"
#include "l1vi/vi_core.hpp"

namespace l1vi::io {

using json = nlohmann::json;

inline json to_json(const Vector& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Vector vector_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw Error(ErrorCode::kInvalidProblem, std::string(what) + " must be an array");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      throw Error(ErrorCode::kInvalidProblem, std::string(what) + " must contain numbers");
    }
    v(static_cast<Index>(i)) = j[i].get<double>();
  }
  return v;
}

/// Non-finite values become null; JSON has no infinities.
inline json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

// ---------------------------------------------------------------------------
// Problems: {"n", "g", "u", "A": {"rows", "cols", "vals"}} with 0-based triplets.

inline json problem_to_json(const ViProblem& p) {
  json rows = json::array();
  json cols = json::array();
  json vals = json::array();
  const SparseMatrix& A = p.A();
  for (Index r = 0; r < A.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(A, r); it; ++it) {
      rows.push_back(it.row());
      cols.push_back(it.col());
      vals.push_back(it.value());
    }
  }
  return {{"n", p.n()}, {"g", p.g()}, {"u", to_json(p.u())},
          {"A", {{"rows", rows}, {"cols", cols}, {"vals", vals}}}};
}

inline ViProblem problem_from_json(const json& j) {
  try {
    const Index n = j.at("n").get<Index>();
    if (n < 1) throw Error(ErrorCode::kInvalidProblem, "n must be positive");
    const json& a = j.at("A");
    const auto& rows = a.at("rows");
    const auto& cols = a.at("cols");
    const auto& vals = a.at("vals");
    if (rows.size() != cols.size() || rows.size() != vals.size()) {
      throw Error(ErrorCode::kInvalidProblem, "A.rows, A.cols and A.vals differ in length");
    }
    std::vector<Triplet> entries;
    entries.reserve(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const Index r = rows[k].get<Index>();
      const Index c = cols[k].get<Index>();
      if (r < 0 || r >= n || c < 0 || c >= n) {
        throw Error(ErrorCode::kInvalidProblem, "matrix index out of range at entry " +
                                                    std::to_string(k));
      }
      entries.emplace_back(r, c, vals[k].get<double>());
    }
    SparseMatrix A(n, n);
    A.setFromTriplets(entries.begin(), entries.end());
    A.makeCompressed();
    return ViProblem::create(std::move(A), j.at("g").get<double>(), vector_from_json(j.at("u"), "u"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidProblem, std::string("malformed problem JSON: ") + e.what());
  }
}

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidProblem, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidProblem, path + ": " + e.what());
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kInvalidProblem, "cannot write " + path);
  out << text;
}

inline void write_json(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline ViProblem read_problem(const std::string& path) { return problem_from_json(read_json(path)); }

inline void write_problem(const std::string& path, const ViProblem& p) {
  write_json(path, problem_to_json(p));
}

/// Control vector from {"u": [...]} or from a CSV of numbers read row by row
/// (the layout written by grid_csv).
inline Vector read_vector(const std::string& path) {
  if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0) {
    const json j = read_json(path);
    return vector_from_json(j.is_array() ? j : j.at("u"), "u");
  }
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInvalidProblem, "cannot open " + path);
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) {
      if (cell.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error(ErrorCode::kInvalidProblem, path + ": not a number: '" + cell + "'");
      }
    }
  }
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

// ---------------------------------------------------------------------------
// Solver output.

inline double max_abs(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

inline json solution_to_json(const ViProblem& p, const ViSolution& sol) {
  const ComplementarityResidual r = complementarity_residual(p, sol.y, sol.q);
  return {{"y", to_json(sol.y)},
          {"q", to_json(sol.q)},
          {"converged", sol.converged},
          {"iterations", sol.iterations},
          {"residual_norm", number(sol.residual_norm)},
          {"residuals",
           {{"balance", number(max_abs(r.balance))},
            {"slackness", number(max_abs(r.slackness))},
            {"bound", number(max_abs(r.bound))}}}};
}

inline json ssn_record_to_json(const SsnRecord& r) {
  return {{"gamma", r.gamma},
          {"residual_norm", number(r.residual_norm)},
          {"step_norm", number(r.step_norm)},
          {"linear_solver_iters", r.linear_solver_iters}};
}

inline std::string ssn_log_jsonl(const SsnLog& log) {
  std::string out;
  for (const SsnRecord& r : log.records) out += ssn_record_to_json(r).dump() + "\n";
  return out;
}

/// Ten significant digits.
inline std::string csv_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s << std::setprecision(10) << x;
  return s.str();
}

inline std::string history_csv(const std::vector<IterationRecord>& history) {
  std::string out = "k,j,gnorm,delta,rho,step_type,accepted,biactive_count\n";
  for (const auto& r : history) {
    out += std::to_string(r.k) + "," + csv_number(r.j) + "," + csv_number(r.gnorm) + "," +
           csv_number(r.delta) + "," + csv_number(r.rho) + "," + to_string(r.step_type) + "," +
           (r.accepted ? "1" : "0") + "," + std::to_string(r.biactive_count) + "\n";
  }
  return out;
}

inline json record_to_json(const IterationRecord& r) {
  return {{"k", r.k},
          {"j", number(r.j)},
          {"gnorm", number(r.gnorm)},
          {"delta", number(r.delta)},
          {"rho", number(r.rho)},
          {"step_type", to_string(r.step_type)},
          {"accepted", r.accepted},
          {"biactive_count", r.biactive_count},
          {"step_norm", number(r.step_norm)},
          {"ared", number(r.ared)},
          {"pred", number(r.pred)}};
}

inline std::string history_jsonl(const std::vector<IterationRecord>& history) {
  std::string out;
  for (const auto& r : history) out += record_to_json(r).dump() + "\n";
  return out;
}

inline json optimize_summary(const OptimizeResult& res) {
  return {{"converged", res.converged},
          {"iterations", res.iterations},
          {"stop_reason", to_string(res.stop_reason)},
          {"j_final", number(res.j_final)},
          {"zero_fraction", zero_fraction(res.y_final)}};
}

/// (m-1) x (m-1) grid, one CSV row per x2 line, x1 across.
inline std::string grid_csv(const Vector& v, const GridSpec& grid) {
  detail::require_size(v.size(), grid.n(), "grid field");
  std::string out;
  for (int j = 1; j <= grid.interior(); ++j) {
    for (int i = 1; i <= grid.interior(); ++i) {
      if (i > 1) out += ",";
      out += csv_number(v(grid.index(i, j)));
    }
    out += "\n";
  }
  return out;
}

/// Rows alpha, columns g, cells iteration count or NC.
inline std::string table_csv(const SweepTable& table) {
  std::string out = "alpha";
  for (double g : table.gs) out += "," + csv_number(g);
  out += "\n";
  for (std::size_t a = 0; a < table.alphas.size(); ++a) {
    out += csv_number(table.alphas[a]);
    for (std::size_t k = 0; k < table.gs.size(); ++k) {
      const SweepCell& c = table.at(a, k);
      out += "," + (c.converged ? std::to_string(c.iterations) : std::string("NC"));
    }
    out += "\n";
  }
  return out;
}

inline json sweep_to_json(const SweepTable& table) {
  json cells = json::array();
  for (const SweepCell& c : table.cells) {
    json cell = {{"alpha", c.alpha},
                 {"g", c.g},
                 {"converged", c.converged},
                 {"iterations", c.iterations},
                 {"zero_fraction", c.zero_fraction},
                 {"seconds", c.seconds}};
    if (c.error) cell["error"] = *c.error;
    if (c.result) {
      cell["stop_reason"] = to_string(c.result->stop_reason);
      cell["j_final"] = number(c.result->j_final);
    }
    cells.push_back(std::move(cell));
  }
  return {{"alphas", table.alphas}, {"gs", table.gs}, {"cells", cells}};
}

inline json report_to_json(const StationarityReport& rep) {
  json j = {{"strong",
             {{"adjoint_eq", number(rep.strong.adjoint_eq)},
              {"p_in_cone", number(rep.strong.p_in_cone)},
              {"mu_sign_inactive", number(rep.strong.mu_sign_inactive)},
              {"mu_sign_biactive", number(rep.strong.mu_sign_biactive)},
              {"gradient_eq", number(rep.strong.gradient_eq)}}},
            {"c_stat",
             {{"mu_dot_p", number(rep.c_stat.mu_dot_p)}, {"mu_dot_y", number(rep.c_stat.mu_dot_y)}}},
            {"verdicts",
             {{"tol", rep.verdicts.tol},
              {"abs_tol", number(rep.verdicts.abs_tol)},
              {"strong", rep.verdicts.strong},
              {"c", rep.verdicts.c}}},
            {"biactive_count", rep.biactive_count}};
  if (rep.b_min_directional) {
    j["b_min_directional"] = number(*rep.b_min_directional);
    j["b_directions"] = rep.b_directions;
  }
  if (rep.verdicts.b) j["verdicts"]["b"] = *rep.verdicts.b;
  return j;
}

}  // namespace l1vi::io
