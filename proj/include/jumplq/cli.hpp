#pragma once

#include "jumplq/io.hpp"
#include "jumplq/sim.hpp"

#include <iomanip>
#include <ostream>

namespace jumplq::cli {

enum class Format { Json, Csv };

struct RunConfig {
  std::string command;
  std::string problem_path;
  double tol = 1e-9;
  int max_iter = 100;
  std::uint64_t seed = 42;
  std::size_t paths = 10000;
  double horizon = 30.0;
  std::vector<double> x0;  // empty: all ones
  int i0 = 1;              // 1-based regime
  std::string output_path;
  Format format = Format::Json;
  unsigned threads = 0;
  std::string data_dir;
  FeedforwardForm eta_form = FeedforwardForm::BestResponse;
  int deviations = 20;
};

inline int exit_code(Errc code) {
  switch (error_category(code)) {
    case ErrorCategory::Validation: return 1;
    case ErrorCategory::Solver: return 2;
    case ErrorCategory::Verification: return 3;
  }
  return 2;
}

inline std::string category_name(Errc code) {
  switch (error_category(code)) {
    case ErrorCategory::Validation: return "validation";
    case ErrorCategory::Solver: return "solver";
    case ErrorCategory::Verification: return "verification";
  }
  return "solver";
}

/// One-line JSON error record.
inline std::string error_line(Errc code, const std::string& message) {
  Json j;
  j["error"] = std::string(errc_name(code));
  j["category"] = category_name(code);
  j["message"] = message;
  return j.dump();
}

namespace detail {

struct Emitted {
  std::string text;
  int status = 0;
};

inline void validate_config(const RunConfig& c) {
  if (!(c.tol > 0.0)) throw Error(Errc::InvalidArgument, "--tol must be positive");
  if (c.max_iter < 1) throw Error(Errc::InvalidArgument, "--max-iter must be at least 1");
  if (c.paths < 1) throw Error(Errc::InvalidArgument, "--paths must be at least 1");
  if (!(c.horizon > 0.0)) throw Error(Errc::InvalidArgument, "--horizon must be positive");
  if (c.i0 < 1) throw Error(Errc::InvalidArgument, "--i0 is 1-based");
  if (c.deviations < 0) throw Error(Errc::InvalidArgument, "--deviations must be non-negative");
}

inline Vec initial_state(const RunConfig& c, Eigen::Index n) {
  if (c.x0.empty()) return Vec::Ones(n);
  if (static_cast<Eigen::Index>(c.x0.size()) != n)
    throw Error(Errc::DimensionMismatch, "--x0 has " + std::to_string(c.x0.size()) + " entries, state has " +
                                             std::to_string(n));
  return Eigen::Map<const Vec>(c.x0.data(), n);
}

inline std::size_t initial_regime(const RunConfig& c, std::size_t regimes) {
  const auto i = static_cast<std::size_t>(c.i0 - 1);
  if (i >= regimes) throw Error(Errc::InvalidArgument, "--i0 exceeds the number of regimes");
  return i;
}

inline SimOptions sim_options(const RunConfig& c) {
  SimOptions o;
  o.paths = c.paths;
  o.horizon = c.horizon;
  o.seed = c.seed;
  o.threads = c.threads;
  return o;
}

inline Json warnings_json(const std::vector<std::string>& w) {
  Json arr = Json::array();
  for (const auto& s : w) arr.push_back(s);
  return arr;
}

inline Json certificate_json(const StabilityCertificate& cert) {
  Json j;
  j["feasible"] = cert.feasible;
  j["abscissa"] = cert.abscissa;
  j["margin"] = cert.margin;
  return j;
}

inline Json care_json(const CareSolution& sol) {
  Json j;
  j["P"] = to_json(sol.P);
  j["Theta"] = to_json(sol.Theta);
  j["residual_norms"] = to_json(sol.residual_norms);
  j["iterations"] = sol.iterations;
  j["stabilizing"] = sol.certificate.feasible;
  j["certificate"] = certificate_json(sol.certificate);
  return j;
}

inline Json game_json(const GameSolution& sol) {
  Json j;
  j["P1"] = to_json(sol.P1);
  j["P2"] = to_json(sol.P2);
  j["Theta1"] = to_json(sol.Theta1);
  j["Theta2"] = to_json(sol.Theta2);
  Json r;
  r["E1"] = to_json(sol.residual_norms_1);
  r["E2"] = to_json(sol.residual_norms_2);
  r["constraint"] = sol.constraint_residual;
  j["residuals"] = std::move(r);
  j["stabilizing"] = sol.certificate.feasible;
  j["iterations"] = sol.iterations;
  j["certificate"] = certificate_json(sol.certificate);
  return j;
}

inline CareOptions care_options(const RunConfig& c) {
  CareOptions o;
  o.tol = c.tol;
  o.max_iter = c.max_iter;
  return o;
}

inline GameOptions game_options(const RunConfig& c) {
  GameOptions o;
  o.tol = c.tol;
  o.max_iter = c.max_iter;
  return o;
}

inline std::string csv_trajectories(const AffineSystem& sys, const std::vector<TrajectorySample>& samples,
                                    double horizon, std::size_t grid) {
  std::ostringstream os;
  os << "path,t,regime";
  for (Eigen::Index k = 0; k < sys.n(); ++k) os << ",x" << k + 1;
  os << "\n";
  for (std::size_t p = 0; p < samples.size(); ++p) {
    for (std::size_t g = 0; g < grid; ++g) {
      const double t = horizon * static_cast<double>(g) / static_cast<double>(grid - 1);
      const Vec x = samples[p].state_at(sys, t);
      os << p << "," << format_double(t) << "," << samples[p].path.regime_at(t) + 1;
      for (Eigen::Index k = 0; k < x.size(); ++k) os << "," << format_double(x(k));
      os << "\n";
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------

inline Emitted cmd_check_stability(const RunConfig& c, const Json& doc) {
  Json j;
  std::vector<std::string> warnings;
  StabilityCertificate cert;
  if (is_game_document(doc)) {
    const auto p = parse_game_problem(doc);
    warnings = p.warnings;
    cert = check_condition_a(p.A, p.gen);
  } else {
    const auto p = parse_lq_problem(doc);
    warnings = p.warnings;
    cert = check_condition_a(p.A, p.gen);
  }
  (void)c;
  j["result"] = cert.feasible ? "feasible" : "infeasible";
  j["feasible"] = cert.feasible;
  j["abscissa"] = cert.abscissa;
  j["margin"] = cert.margin;
  if (cert.P) j["P"] = to_json(*cert.P);
  j["warnings"] = warnings_json(warnings);
  return {dump_json(j), 0};
}

inline Emitted cmd_solve_lq(const RunConfig& c, const Json& doc) {
  const auto p = parse_lq_problem(doc);
  const auto sol = solve_care(p, care_options(c));
  Json j = care_json(sol);
  j["warnings"] = warnings_json(p.warnings);
  return {dump_json(j), 0};
}

inline Emitted cmd_solve_bsde(const RunConfig& c, const Json& doc) {
  const auto p = parse_lq_problem(doc);
  if (!p.inhomog) throw Error(Errc::InvalidArgument, "solve-bsde needs an \"inhomog\" block");
  const auto sol = solve_care(p, care_options(c));
  const auto eta = solve_eta_lq(sol, p);
  Json j;
  j["h"] = to_json(eta.h);
  j["kappa"] = eta.kappa;
  j["residual"] = eta.residual;
  j["warnings"] = warnings_json(p.warnings);
  return {dump_json(j), 0};
}

inline Emitted cmd_solve_game(const RunConfig& c, const Json& doc) {
  const auto p = parse_game_problem(doc);
  const auto sol = solve_game(p, game_options(c));
  Json j = game_json(sol);
  if (p.inhomog) {
    const auto eta = solve_game_feedforward(sol, p, p.inhomog, c.eta_form);
    j["h1"] = to_json(eta.h1);
    j["h2"] = to_json(eta.h2);
    j["nu1"] = to_json(eta.nu1);
    j["nu2"] = to_json(eta.nu2);
    j["kappa"] = eta.kappa;
  }
  j["warnings"] = warnings_json(p.warnings);
  return {dump_json(j), 0};
}

inline Emitted cmd_simulate(const RunConfig& c, const Json& doc) {
  const auto opts = sim_options(c);
  Json j;
  AffineSystem sys;
  Vec x0;
  std::size_t i0 = 0;
  if (is_game_document(doc)) {
    const auto p = parse_game_problem(doc);
    const auto sol = solve_game(p, game_options(c));
    std::optional<GameEtaSolution> eta;
    if (p.inhomog) eta = solve_game_feedforward(sol, p, p.inhomog, c.eta_form);
    const auto pol = assemble_game_policy(sol, p, eta);
    x0 = initial_state(c, p.n);
    i0 = initial_regime(c, p.regimes());
    sys = game_closed_loop_system(p, pol);
    if (c.format == Format::Json) {
      const auto est = estimate_game_cost(p, pol, x0, i0, opts);
      j["mean"] = to_json(est.mean);
      j["stderr"] = to_json(est.stderr_);
      j["tail_bound"] = est.tail_bound;
    }
  } else {
    const auto p = parse_lq_problem(doc);
    const auto sol = solve_care(p, care_options(c));
    std::optional<EtaSolution> eta;
    if (p.inhomog) eta = solve_eta_lq(sol, p);
    const auto pol = assemble_closed_loop(sol, p, eta);
    x0 = initial_state(c, p.n);
    i0 = initial_regime(c, p.regimes());
    sys = lq_closed_loop_system(p, pol);
    if (c.format == Format::Json) {
      const auto est = estimate_cost(p, pol, x0, i0, opts);
      j["mean"] = est.mean[0];
      j["stderr"] = est.stderr_[0];
      j["tail_bound"] = est.tail_bound;
    }
  }
  if (c.format == Format::Csv) {
    SimOptions o = opts;
    o.paths = std::min<std::size_t>(opts.paths, 10);
    const auto samples = sample_trajectories(sys, x0, i0, o);
    return {csv_trajectories(sys, samples, opts.horizon, 301), 0};
  }
  j["flags"] = Json::array();
  return {dump_json(j), 0};
}

inline Emitted cmd_verify(const RunConfig& c, const Json& doc) {
  const auto opts = sim_options(c);
  Json j;
  Json flags = Json::array();
  if (is_game_document(doc)) {
    const auto p = parse_game_problem(doc);
    const auto sol = solve_game(p, game_options(c));
    std::optional<GameEtaSolution> eta;
    if (p.inhomog) eta = solve_game_feedforward(sol, p, p.inhomog, c.eta_form);
    const Vec x0 = initial_state(c, p.n);
    const auto i0 = initial_regime(c, p.regimes());
    DeviationOptions dev;
    dev.gain_deviations = c.deviations;
    dev.feedforward_deviations = c.deviations;
    dev.seed = c.seed + 1;
    const auto rep = verify_equilibrium_mc(p, sol, eta, x0, i0, opts, dev);
    j["mean"] = Json::array({rep.equilibrium_cost[0], rep.equilibrium_cost[1]});
    j["stderr"] = Json::array({rep.equilibrium_stderr[0], rep.equilibrium_stderr[1]});
    j["tail_bound"] = rep.tail_bound;
    Json devs = Json::array();
    for (const auto& d : rep.deviations) {
      Json e;
      e["player"] = d.player + 1;
      e["kind"] = d.kind == DeviationKind::Gain ? "gain" : "feedforward";
      e["delta_J"] = d.delta_J;
      e["stderr"] = d.stderr_;
      e["flagged"] = d.flagged;
      if (d.flagged) flags.push_back("player " + std::to_string(d.player + 1) + " improved by deviating");
      devs.push_back(std::move(e));
    }
    if (!sol.certificate.feasible) flags.push_back("equilibrium gains are not stabilizing");
    j["deviations"] = std::move(devs);
  } else {
    const auto p = parse_lq_problem(doc);
    const auto sol = solve_care(p, care_options(c));
    std::optional<EtaSolution> eta;
    if (p.inhomog) eta = solve_eta_lq(sol, p);
    const auto pol = assemble_closed_loop(sol, p, eta);
    const Vec x0 = initial_state(c, p.n);
    const auto i0 = initial_regime(c, p.regimes());
    const auto est = estimate_cost(p, pol, x0, i0, opts);
    const double v = value_function(sol, p, eta, x0, i0);
    j["mean"] = est.mean[0];
    j["stderr"] = est.stderr_[0];
    j["tail_bound"] = est.tail_bound;
    j["value"] = v;
    if (std::abs(est.mean[0] - v) > 3.0 * est.stderr_[0] + 1e-9 * (1.0 + std::abs(v)))
      flags.push_back("Monte Carlo cost differs from the value function by more than 3 standard errors");
    SimOptions so = opts;
    so.paths = std::min<std::size_t>(opts.paths, 100);
    const auto st = check_stationarity(p, sol, eta, x0, i0, so);
    j["stationarity_residual"] = st.max_residual;
    if (st.max_residual > 1e-6) flags.push_back("stationarity residual exceeds 1e-6");
    const bool in_g = membership_in_G(sol.P, p);
    j["membership_in_G"] = in_g;
    if (!in_g) flags.push_back("Riccati solution is not in G");
    if (!sol.certificate.feasible) flags.push_back("optimal gain is not stabilizing");
  }
  const int status = flags.empty() ? 0 : 3;
  j["flags"] = std::move(flags);
  return {dump_json(j), status};
}

inline MatFamily read_family(const Json& j, const std::string& key) {
  std::vector<Mat> out;
  for (std::size_t i = 0; i < j.at(key).size(); ++i)
    out.push_back(jumplq::detail::read_matrix(j.at(key)[i], key));
  return MatFamily(std::move(out));
}

inline Emitted cmd_reproduce(const RunConfig& c) {
  const std::string dir = c.data_dir.empty() ? std::string(".") : c.data_dir;
  const double match_tol = 1e-6;
  Json rows = Json::array();
  bool all = true;

  {
    const auto p = parse_lq_problem(read_json_file(dir + "/lq3.json"));
    const auto ref = read_json_file(dir + "/lq3_reference.json");
    CareOptions co = care_options(c);
    co.tol = std::min(c.tol, 1e-7);
    const auto sol = solve_care(p, co);
    const double dP = max_abs_diff(sol.P, read_family(ref, "P"));
    const double dT = max_abs_diff(sol.Theta, read_family(ref, "Theta"));
    const auto printed = frobenius_norms(care_residual(read_family(ref, "P"), p));
    const Vec x0 = Vec::Ones(p.n);
    const auto pol = assemble_closed_loop(sol, p);
    const auto est = estimate_cost(p, pol, x0, 0, sim_options(c));
    const double v = value_function(sol, p, std::nullopt, x0, 0);
    const double rel = std::abs(est.mean[0] - v) / std::abs(v);
    Json r;
    r["example"] = "lq3";
    r["max_residual"] = max_of(sol.residual_norms);
    r["P_max_abs_diff"] = dP;
    r["Theta_max_abs_diff"] = dT;
    r["printed_P_residuals"] = to_json(printed);
    r["stabilizing"] = sol.certificate.feasible;
    r["mc_mean"] = est.mean[0];
    r["mc_stderr"] = est.stderr_[0];
    r["value"] = v;
    const bool pass = max_of(sol.residual_norms) <= 1e-7 && dP <= match_tol && dT <= match_tol &&
                      max_of(printed) <= 2e-7 && sol.certificate.feasible &&
                      std::abs(est.mean[0] - v) <= 3.0 * est.stderr_[0] && rel <= 0.02;
    r["pass"] = pass;
    all = all && pass;
    rows.push_back(std::move(r));
  }
  {
    const auto p = parse_game_problem(read_json_file(dir + "/game3.json"));
    const auto ref = read_json_file(dir + "/game3_reference.json");
    GameOptions go = game_options(c);
    go.tol = std::min(c.tol, 1e-7);
    const auto sol = solve_game(p, go);
    const double d = std::max({max_abs_diff(sol.P1, read_family(ref, "P1")), max_abs_diff(sol.P2, read_family(ref, "P2")),
                               max_abs_diff(sol.Theta1, read_family(ref, "Theta1")),
                               max_abs_diff(sol.Theta2, read_family(ref, "Theta2"))});
    const double res = std::max(max_of(sol.residual_norms_1), max_of(sol.residual_norms_2));
    Json r;
    r["example"] = "game3";
    r["max_residual"] = res;
    r["max_abs_diff"] = d;
    r["constraint_residual"] = sol.constraint_residual;
    r["stabilizing"] = sol.certificate.feasible;
    const bool pass = res <= 1.5e-7 && d <= match_tol && sol.certificate.feasible;
    r["pass"] = pass;
    all = all && pass;
    rows.push_back(std::move(r));
  }

  if (c.format == Format::Csv) {
    std::ostringstream os;
    os << "example,max_residual,max_abs_diff,stabilizing,pass\n";
    for (const auto& r : rows) {
      const double diff = r.contains("max_abs_diff") ? r["max_abs_diff"].get<double>()
                                                     : std::max(r["P_max_abs_diff"].get<double>(),
                                                                r["Theta_max_abs_diff"].get<double>());
      os << r["example"].get<std::string>() << "," << format_double(r["max_residual"].get<double>()) << ","
         << format_double(diff) << "," << (r["stabilizing"].get<bool>() ? "true" : "false") << ","
         << (r["pass"].get<bool>() ? "pass" : "fail") << "\n";
    }
    return {os.str(), all ? 0 : 3};
  }
  Json j;
  j["rows"] = std::move(rows);
  j["pass"] = all;
  return {dump_json(j), all ? 0 : 3};
}

}  // namespace detail

/// Runs one subcommand; the report goes to `out` (or the --output file) and
/// errors to `err` as a single JSON line. Returns the process exit status.
inline int run(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    detail::validate_config(config);
    detail::Emitted e;
    if (config.command == "reproduce-paper") {
      e = detail::cmd_reproduce(config);
    } else {
      if (config.problem_path.empty()) throw Error(Errc::InvalidArgument, "missing problem file");
      const Json doc = read_json_file(config.problem_path);
      if (config.command == "check-stability") e = detail::cmd_check_stability(config, doc);
      else if (config.command == "solve-lq") e = detail::cmd_solve_lq(config, doc);
      else if (config.command == "solve-bsde") e = detail::cmd_solve_bsde(config, doc);
      else if (config.command == "solve-game") e = detail::cmd_solve_game(config, doc);
      else if (config.command == "simulate") e = detail::cmd_simulate(config, doc);
      else if (config.command == "verify") e = detail::cmd_verify(config, doc);
      else throw Error(Errc::InvalidArgument, "unknown command '" + config.command + "'");
    }
    if (!e.text.empty() && e.text.back() != '\n') e.text += '\n';
    if (config.output_path.empty()) {
      out << e.text;
    } else {
      std::ofstream f(config.output_path, std::ios::binary);
      if (!f) throw Error(Errc::InvalidArgument, "cannot write " + config.output_path);
      f << e.text;
    }
    return e.status;
  } catch (const Error& e) {
    err << error_line(e.code(), e.detail()) << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << error_line(Errc::InvalidArgument, e.what()) << '\n';
    return 1;
  }
}

}  // namespace jumplq::cli
