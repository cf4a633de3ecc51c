#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <type_traits>
#include <string>
#include <vector>

#include "l1vi/io.hpp"
#include "l1vi/problems.hpp"
#include "l1vi/sensitivity.hpp"
#include "l1vi/stationarity.hpp"
#include "l1vi/trust_region.hpp"

namespace {

using l1vi::Error;
using l1vi::ErrorCode;
using l1vi::Vector;
using l1vi::io::json;

constexpr int kExitSolverFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Settings {
  std::string problem;
  std::string control;
  std::string out = ".";
  std::string config;
  std::string u0 = "tracking";
  double alpha = 1e-4;
  double g = 15.0;
  int mesh = 80;
  int sweep_mesh = 40;
  std::vector<double> alphas{0.1, 0.01, 0.001, 0.0001};
  std::vector<double> gs{1.0, 5.0, 10.0, 15.0};
  double stop_tol = 1e-4;
  double delta0 = l1vi::TrustRegionConfig{}.delta0;
  int max_iters = l1vi::TrustRegionConfig{}.max_iters;
  double eta1 = 0.25, eta2 = 0.75;
  double gamma0 = 0.25, gamma1 = 0.5, gamma2 = 1.5;
  double beta = 1.0;
  double gamma_max = l1vi::HuberParams{}.gamma_max;
  std::uint64_t seed = l1vi::DirectionSampling{}.seed;
  unsigned jobs = 1;
  double tol = 1e-6;
  bool verbose = false;

  l1vi::TrustRegionConfig trust_region() const {
    l1vi::TrustRegionConfig c;
    c.eta1 = eta1;
    c.eta2 = eta2;
    c.gamma0 = gamma0;
    c.gamma1 = gamma1;
    c.gamma2 = gamma2;
    c.beta = beta;
    c.stop_tol = stop_tol;
    c.delta0 = delta0;
    c.max_iters = max_iters;
    return c;
  }

  l1vi::HuberParams huber() const {
    l1vi::HuberParams p;
    p.gamma_max = gamma_max;
    p.gamma = std::min(p.gamma, gamma_max);
    return p;
  }
};

/// Options of one subcommand, with a setter per flag for config-file values.
class Flags {
 public:
  explicit Flags(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* add(const std::string& name, T& target, const std::string& help) {
    CLI::Option* opt = nullptr;
    if constexpr (std::is_same_v<T, bool>) {
      opt = app_->add_flag("--" + name, target, help);
    } else {
      opt = app_->add_option("--" + name, target, help)->capture_default_str();
    }
    setters_[name] = {opt, [&target, name](const json& v) {
                        try {
                          if constexpr (std::is_same_v<T, std::vector<double>>) {
                            target = v.is_string() ? parse_list(v.get<std::string>())
                                                   : v.get<std::vector<double>>();
                          } else {
                            target = v.get<T>();
                          }
                        } catch (const json::exception&) {
                          throw UsageError("config value for '" + name + "' has the wrong type");
                        }
                      }};
    return opt;
  }

  /// Config values fill in flags not given on the command line.
  void apply_config(const std::string& path) const {
    const json cfg = l1vi::io::read_json(path);
    if (!cfg.is_object()) throw UsageError("config file must hold a JSON object");
    for (const auto& [key, value] : cfg.items()) {
      const auto it = setters_.find(key);
      if (it == setters_.end()) {
        throw UsageError("unknown config key '" + key + "' for " + app_->get_name());
      }
      if (it->second.first->count() == 0) it->second.second(value);
    }
  }

  static std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream in(s);
    for (std::string item; std::getline(in, item, ',');) {
      try {
        out.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw UsageError("not a number in list: '" + item + "'");
      }
    }
    return out;
  }

 private:
  CLI::App* app_;
  std::map<std::string, std::pair<CLI::Option*, std::function<void(const json&)>>> setters_;
};

void add_example_flags(Flags& f, Settings& s) {
  f.add("alpha", s.alpha, "Control cost weight");
  f.add("g", s.g, "l1 weight");
  f.add("mesh", s.mesh, "Grid size m, mesh step 1/m");
}

std::filesystem::path output_dir(const Settings& s) {
  std::filesystem::path dir(s.out);
  std::filesystem::create_directories(dir);
  return dir;
}

void write(const std::filesystem::path& dir, const char* name, const std::string& text) {
  l1vi::io::write_text((dir / name).string(), text);
}

l1vi::DirectionSampling sampling(const Settings& s) {
  l1vi::DirectionSampling d;
  d.seed = s.seed;
  return d;
}

l1vi::InitialControl initial(const Settings& s) {
  try {
    return l1vi::parse_initial_control(s.u0);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

/// Control problem from --problem (VI JSON with "alpha" and "z" entries) or the
/// built-in example on a --mesh grid.
l1vi::ControlProblem control_problem(const Settings& s, bool alpha_given) {
  if (s.problem.empty()) return l1vi::laplacian_example(s.alpha, s.g, l1vi::GridSpec(s.mesh));
  const json j = l1vi::io::read_json(s.problem);
  l1vi::ViProblem vi = l1vi::io::problem_from_json(j);
  if (!j.contains("z")) throw UsageError(s.problem + " has no desired state 'z'");
  double alpha = s.alpha;
  if (!alpha_given && j.contains("alpha")) alpha = j["alpha"].get<double>();
  return l1vi::ControlProblem::create(std::move(vi), alpha,
                                      l1vi::io::vector_from_json(j["z"], "z"));
}

int run_solve_vi(const Settings& s) {
  if (s.problem.empty()) throw UsageError("solve-vi needs --problem");
  const l1vi::ViProblem p = l1vi::io::read_problem(s.problem);
  const auto res = l1vi::solve_vi(p, s.huber());
  const auto dir = output_dir(s);
  l1vi::io::write_json((dir / "solution.json").string(), l1vi::io::solution_to_json(p, res.solution));
  write(dir, "log.jsonl", l1vi::io::ssn_log_jsonl(res.log));
  std::printf("converged=%d iterations=%d residual=%.3e\n", res.solution.converged,
              res.solution.iterations, res.solution.residual_norm);
  return res.solution.converged ? 0 : kExitSolverFailure;
}

int run_optimize(const Settings& s, bool alpha_given) {
  const l1vi::ControlProblem cp = control_problem(s, alpha_given);
  const Vector u0 = l1vi::initial_control(cp, initial(s));
  l1vi::IterationCallback cb;
  if (s.verbose) {
    cb = [](const l1vi::IterationRecord& r) {
      std::printf("%4d j=%.10g |g|=%.3e delta=%.3e rho=%.3f %s %s\n", r.k, r.j, r.gnorm, r.delta,
                  r.rho, to_string(r.step_type), r.accepted ? "accepted" : "rejected");
    };
  }
  const auto res = l1vi::optimize(cp, s.trust_region(), s.huber(), u0, cb);
  const auto rep = l1vi::certify_stationarity(cp, res.u_final, s.huber(), s.tol, sampling(s));

  const auto dir = output_dir(s);
  write(dir, "history.csv", l1vi::io::history_csv(res.history));
  write(dir, "history.jsonl", l1vi::io::history_jsonl(res.history));
  if (s.problem.empty()) {
    const l1vi::GridSpec grid(s.mesh);
    write(dir, "state.csv", l1vi::io::grid_csv(res.y_final, grid));
    write(dir, "control.csv", l1vi::io::grid_csv(res.u_final, grid));
  } else {
    l1vi::io::write_json((dir / "state.json").string(), {{"y", l1vi::io::to_json(res.y_final)}});
    l1vi::io::write_json((dir / "control.json").string(), {{"u", l1vi::io::to_json(res.u_final)}});
  }
  json report = l1vi::io::report_to_json(rep);
  report["optimize"] = l1vi::io::optimize_summary(res);
  l1vi::io::write_json((dir / "report.json").string(), report);

  std::printf("%s after %d iterations (%s), j=%.10g, zeros=%.4f\n",
              res.converged ? "converged" : "not converged", res.iterations,
              to_string(res.stop_reason), res.j_final, l1vi::zero_fraction(res.y_final));
  std::printf("strong=%d c=%d b=%s b_min=%.3e\n", rep.verdicts.strong, rep.verdicts.c,
              rep.verdicts.b ? (*rep.verdicts.b ? "1" : "0") : "-",
              rep.b_min_directional.value_or(0.0));
  return res.converged ? 0 : kExitSolverFailure;
}

int run_sweep(const Settings& s) {
  if (s.alphas.empty() || s.gs.empty()) throw UsageError("sweep needs --alphas and --gs");
  l1vi::SweepOptions opts;
  opts.start = initial(s);
  opts.jobs = s.jobs;
  opts.keep_results = false;
  const auto table =
      l1vi::sweep(s.alphas, s.gs, l1vi::GridSpec(s.sweep_mesh), s.trust_region(), s.huber(), opts);
  const auto dir = output_dir(s);
  const std::string csv = l1vi::io::table_csv(table);
  write(dir, "table1.csv", csv);
  l1vi::io::write_json((dir / "sweep.json").string(), l1vi::io::sweep_to_json(table));
  std::fputs(csv.c_str(), stdout);
  for (const auto& c : table.cells) {
    if (c.error) std::fprintf(stderr, "alpha=%g g=%g: %s\n", c.alpha, c.g, c.error->c_str());
  }
  return 0;
}

int run_check_stationarity(const Settings& s, bool alpha_given) {
  if (s.control.empty()) throw UsageError("check-stationarity needs --control");
  const l1vi::ControlProblem cp = control_problem(s, alpha_given);
  const Vector u = l1vi::io::read_vector(s.control);
  if (u.size() != cp.n()) {
    throw UsageError("control has " + std::to_string(u.size()) + " entries, problem has " +
                     std::to_string(cp.n()));
  }
  const auto rep = l1vi::certify_stationarity(cp, u, s.huber(), s.tol, sampling(s));
  const auto dir = output_dir(s);
  l1vi::io::write_json((dir / "report.json").string(), l1vi::io::report_to_json(rep));
  std::printf("strong=%d c=%d b=%s b_min=%.3e biactive=%ld\n", rep.verdicts.strong,
              rep.verdicts.c, rep.verdicts.b ? (*rep.verdicts.b ? "1" : "0") : "-",
              rep.b_min_directional.value_or(0.0), static_cast<long>(rep.biactive_count));
  return 0;
}

/// Difference quotients of the state against the cone-VI derivative along one
/// random unit direction.
int run_derivative_check(const Settings& s) {
  l1vi::ViProblem p = s.problem.empty()
                          ? [&] {
                              const auto cp = l1vi::laplacian_example(s.alpha, s.g, l1vi::GridSpec(s.mesh));
                              return cp.state_problem(l1vi::tracking_control(cp));
                            }()
                          : l1vi::io::read_problem(s.problem);
  const l1vi::HuberParams params = l1vi::HuberParams::tight();
  const l1vi::ViSolution sol = l1vi::solve_vi(p, params).solution;
  if (!sol.converged) throw Error(ErrorCode::kNoConvergence, "base solve did not converge");
  const l1vi::IndexSets sets = l1vi::classify_sets(sol, p.g());

  std::mt19937_64 rng(s.seed);
  std::normal_distribution<double> normal;
  Vector h(p.n());
  for (auto& x : h) x = normal(rng);
  h.normalize();
  const auto pair = l1vi::derivative_cone_vi(p, sol, sets, h);
  const double system = l1vi::verify_derivative_system(p, sol, sets, h, pair).max_violation();

  std::string csv = "t,error\n";
  std::printf("n=%ld biactive=%ld system_residual=%.3e\n", static_cast<long>(p.n()),
              static_cast<long>(sets.biactive_count()), system);
  std::printf("%10s  %12s\n", "t", "error");
  for (int e = 1; e <= 8; ++e) {
    const double t = std::pow(10.0, -e);
    const Vector fd = l1vi::finite_difference_quotient(p, params, h, t, &sol);
    const double err = (fd - pair.eta).cwiseAbs().maxCoeff();
    std::printf("%10.1e  %12.4e\n", t, err);
    csv += l1vi::io::csv_number(t) + "," + l1vi::io::csv_number(err) + "\n";
  }
  write(output_dir(s), "derivative_check.csv", csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"l1vi: optimal control of l1 variational inequalities of the second kind"};
  app.require_subcommand(1);
  Settings s;

  auto* solve = app.add_subcommand("solve-vi", "Solve one VI from a problem JSON");
  auto* opt = app.add_subcommand("optimize", "Trust-region run on the Laplacian example");
  auto* sw = app.add_subcommand("sweep", "Iteration table over alpha x g");
  auto* check = app.add_subcommand("check-stationarity", "Certify a given control");
  auto* deriv = app.add_subcommand("derivative-check", "Difference quotients vs. directional derivative");

  std::map<CLI::App*, Flags> flags;
  for (CLI::App* sub : {solve, opt, sw, check, deriv}) {
    Flags& f = flags.emplace(sub, Flags(sub)).first->second;
    sub->add_option("--config", s.config, "Flat JSON file with flag values");
    f.add("out", s.out, "Output directory");
    f.add("gamma-max", s.gamma_max, "Final Huber parameter");
  }
  for (CLI::App* sub : {opt, check, deriv}) {
    flags.at(sub).add("problem", s.problem, "Problem JSON; defaults to the Laplacian example");
    add_example_flags(flags.at(sub), s);
  }
  flags.at(solve).add("problem", s.problem, "Problem JSON")->check(CLI::ExistingFile);
  for (CLI::App* sub : {opt, sw, check}) {
    Flags& f = flags.at(sub);
    f.add("stop-tol", s.stop_tol, "Stop when an accepted step is shorter than this");
    f.add("tr-eta1", s.eta1, "Acceptance threshold");
    f.add("tr-eta2", s.eta2, "Expansion threshold");
    f.add("tr-gamma0", s.gamma0, "Radius factor bound on rejection");
    f.add("tr-gamma1", s.gamma1, "Radius shrink factor");
    f.add("tr-gamma2", s.gamma2, "Radius growth factor");
    f.add("tr-beta", s.beta, "Cauchy decrease bound on the Newton step");
    f.add("tr-delta0", s.delta0, "Initial radius");
    f.add("max-iters", s.max_iters, "Outer iteration limit");
    f.add("u0", s.u0, "Initial control: tracking or zero");
  }
  for (CLI::App* sub : {opt, check, deriv}) flags.at(sub).add("seed", s.seed, "Seed for random directions");
  for (CLI::App* sub : {opt, check}) flags.at(sub).add("tol", s.tol, "Stationarity tolerance");
  flags.at(opt).add("verbose", s.verbose, "Print one line per iteration");
  flags.at(check).add("control", s.control, "Control as JSON {\"u\": [...]} or CSV grid");
  flags.at(sw).add("mesh", s.sweep_mesh, "Grid size m, mesh step 1/m");
  flags.at(sw).add("alphas", s.alphas, "Comma-separated alpha values")->delimiter(',');
  flags.at(sw).add("gs", s.gs, "Comma-separated g values")->delimiter(',');
  flags.at(sw).add("jobs", s.jobs, "Worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (!s.config.empty()) flags.at(sub).apply_config(s.config);
    const bool alpha_given = sub->get_option_no_throw("--alpha") &&
                             sub->get_option("--alpha")->count() > 0;
    if (sub == solve) return run_solve_vi(s);
    if (sub == opt) return run_optimize(s, alpha_given);
    if (sub == sw) return run_sweep(s);
    if (sub == check) return run_check_stationarity(s, alpha_given);
    return run_derivative_check(s);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    const bool bad_input =
        e.code() == ErrorCode::kInvalidProblem || e.code() == ErrorCode::kDimensionMismatch;
    return bad_input ? kExitUsage : kExitSolverFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitSolverFailure;
  }
}
