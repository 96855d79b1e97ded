#include "test_support.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace jt;

namespace {

SimOptions opts(std::size_t paths, double horizon = 30.0, std::uint64_t seed = 42) {
  SimOptions o;
  o.paths = paths;
  o.horizon = horizon;
  o.seed = seed;
  return o;
}

ClosedLoopPolicy zero_policy(const MjlsLqProblem& p) {
  return {MatFamily::zeros(p.regimes(), p.m, p.n), VecFamily::zeros(p.regimes(), p.m), 1.0};
}

}  // namespace

TEST(Rng, StreamsAreReproducible) {
  Rng a(stream_seed(42, 3)), b(stream_seed(42, 3)), c(stream_seed(42, 4));
  bool differs = false;
  for (int k = 0; k < 100; ++k) {
    const double x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    differs = differs || x != c.uniform();
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
  EXPECT_TRUE(differs);
}

TEST(Chain, HoldingTimeOfFirstRegime) {
  const auto g = validate_generator(sample_generator());
  std::vector<double> hold;
  for (std::uint64_t s = 0; s < 100000; ++s) {
    const auto path = sample_chain(g, 0, 100.0, stream_seed(5, s));
    ASSERT_FALSE(path.jump_times.empty());
    hold.push_back(path.jump_times[0]);
  }
  const auto sm = summarize(hold);
  EXPECT_LE(std::abs(sm.mean - 2.0), 3.0 * sm.stderr_);
}

TEST(Chain, FirstJumpTargets) {
  const auto g = validate_generator(sample_generator());
  const int N = 100000;
  int to2 = 0;
  for (int s = 0; s < N; ++s) {
    const auto path = sample_chain(g, 0, 100.0, stream_seed(6, static_cast<std::uint64_t>(s)));
    ASSERT_NE(path.regimes_after[0], 0u);
    to2 += path.regimes_after[0] == 1 ? 1 : 0;
  }
  const double frac = static_cast<double>(to2) / N;
  const double se = std::sqrt(0.4 * 0.6 / N);
  EXPECT_LE(std::abs(frac - 0.4), 3.0 * se);
}

TEST(Chain, SingleRegimeNeverJumps) {
  const auto path = sample_chain(validate_generator(Mat::Zero(1, 1)), 0, 1000.0, 1ull);
  EXPECT_TRUE(path.jump_times.empty());
  EXPECT_EQ(path.regime_at(999.0), 0u);
}

TEST(Chain, PathInvariants) {
  const auto g = validate_generator(sample_generator());
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto path = sample_chain(g, s % 3, 50.0, s);
    std::size_t prev = path.i0;
    for (std::size_t k = 0; k < path.jump_times.size(); ++k) {
      if (k > 0) EXPECT_GT(path.jump_times[k], path.jump_times[k - 1]);
      EXPECT_GT(path.jump_times[k], 0.0);
      EXPECT_LE(path.jump_times[k], 50.0);
      EXPECT_NE(path.regimes_after[k], prev);
      prev = path.regimes_after[k];
    }
  }
}

TEST(Chain, OccupationMatchesStationaryDistribution) {
  const auto g = validate_generator(sample_generator());
  const Vec mu = g.stationary_distribution();
  const int N = 300;
  const double T = 500.0;
  std::array<std::vector<double>, 3> frac;
  for (int s = 0; s < N; ++s) {
    // Start in stationarity so the fractions are unbiased.
    Rng rng(stream_seed(77, static_cast<std::uint64_t>(s)));
    const double u = rng.uniform();
    const std::size_t i0 = u < mu(0) ? 0 : (u < mu(0) + mu(1) ? 1 : 2);
    const Vec occ = sample_chain(g, i0, T, rng).occupation(3) / T;
    for (int i = 0; i < 3; ++i) frac[static_cast<std::size_t>(i)].push_back(occ(i));
  }
  for (int i = 0; i < 3; ++i) {
    const auto sm = summarize(frac[static_cast<std::size_t>(i)]);
    EXPECT_LE(std::abs(sm.mean - mu(i)), 3.0 * sm.stderr_) << "regime " << i + 1;
  }
}

TEST(Propagation, ScalarWithoutJumps) {
  AffineSystem sys;
  sys.gen = validate_generator(Mat::Zero(1, 1));
  sys.Acl = MatFamily{m1(-std::sqrt(2.0))};
  sys.d = VecFamily{v1(0.0)};
  ChainPath path;
  path.horizon = 1.0;
  const auto s = simulate_closed_loop(sys, {}, v1(1.0), path);
  EXPECT_NEAR(s.terminal(0), std::exp(-std::sqrt(2.0)), 1e-12);
}

TEST(Propagation, MatrixExponentialWithoutJumps) {
  const auto p = lq3();
  const auto sol = solve_care(p);
  const auto sys = lq_closed_loop_system(p, assemble_closed_loop(sol, p));
  ChainPath path;
  path.i0 = 1;
  path.horizon = 2.5;
  const Vec x0 = Vec::LinSpaced(3, 1, -2);
  const auto s = simulate_closed_loop(sys, {}, x0, path);
  const Vec expect = (sys.Acl[1] * 2.5).exp() * x0;
  EXPECT_LE((s.terminal - expect).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((s.state_at(sys, 1.0) - (sys.Acl[1] * 1.0).exp() * x0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Propagation, ForcedScalarMatchesVariationOfConstants) {
  AffineSystem sys;
  sys.gen = validate_generator(Mat::Zero(1, 1));
  sys.Acl = MatFamily{m1(-2.0)};
  sys.d = VecFamily{v1(3.0)};
  sys.kappa = 0.5;
  ChainPath path;
  path.horizon = 1.7;
  const auto s = simulate_closed_loop(sys, {}, v1(1.0), path);
  // x(t) = e^{−2t} + 3(e^{−t/2} − e^{−2t})/1.5.
  const double t = 1.7;
  EXPECT_NEAR(s.terminal(0), std::exp(-2 * t) + 2.0 * (std::exp(-0.5 * t) - std::exp(-2 * t)), 1e-12);
}

TEST(Propagation, ZeroStateStaysZero) {
  const auto p = lq3();
  const auto sys = lq_closed_loop_system(p, assemble_closed_loop(solve_care(p), p));
  const auto path = sample_chain(p.gen, 0, 10.0, 3ull);
  const auto s = simulate_closed_loop(sys, {lq_cost_weight(p, zero_policy(p))}, Vec::Zero(3), path);
  EXPECT_EQ(s.terminal.norm(), 0.0);
  EXPECT_EQ(s.costs[0], 0.0);
}

TEST(Propagation, StateContinuousAcrossJumps) {
  const auto p = lq3();
  const auto sys = lq_closed_loop_system(p, assemble_closed_loop(solve_care(p), p));
  const auto path = sample_chain(p.gen, 0, 10.0, 8ull);
  ASSERT_GE(path.jump_times.size(), 1u);
  const auto s = simulate_closed_loop(sys, {}, Vec::Ones(3), path);
  for (std::size_t k = 1; k < s.segments.size(); ++k) {
    const auto& prev = s.segments[k - 1];
    const Vec end = (sys.augmented(prev.regime) * (prev.t1 - prev.t0)).exp() * prev.z0;
    EXPECT_LE((end - s.segments[k].z0).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Propagation, Lq3ClosedLoopDecays) {
  const auto p = lq3();
  const auto sys = lq_closed_loop_system(p, assemble_closed_loop(solve_care(p), p));
  const Vec x0 = Vec::Ones(3);
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto path = sample_chain(p.gen, s % 3, 20.0, stream_seed(9, s));
    EXPECT_LE(simulate_closed_loop(sys, {}, x0, path, {}, false).terminal.norm(), 1e-3 * x0.norm());
  }
}

TEST(Propagation, EnergyEnvelopeDecays) {
  const auto p = lq3();
  const auto sys = lq_closed_loop_system(p, assemble_closed_loop(solve_care(p), p));
  const auto samples = sample_trajectories(sys, Vec::Ones(3), 0, opts(500, 10.0, 4));
  std::vector<double> ts, logs;
  for (int k = 1; k <= 10; ++k) {
    const double t = k;
    double e = 0.0;
    for (const auto& s : samples) e += s.state_at(sys, t).squaredNorm();
    ts.push_back(t);
    logs.push_back(std::log(e / samples.size()));
  }
  const double tm = std::accumulate(ts.begin(), ts.end(), 0.0) / ts.size();
  const double lm = std::accumulate(logs.begin(), logs.end(), 0.0) / logs.size();
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    sxy += (ts[k] - tm) * (logs[k] - lm);
    sxx += (ts[k] - tm) * (ts[k] - tm);
  }
  const double slope = sxy / sxx;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const double r = logs[k] - lm - slope * (ts[k] - tm);
    syy += r * r;
  }
  const double se = std::sqrt(syy / (ts.size() - 2) / sxx);
  EXPECT_LT(slope + 3.0 * se, 0.0);
}

TEST(CostEstimate, UncontrolledScalarIsAnalytic) {
  const auto p = scalar_lq();
  const auto est = estimate_cost(p, zero_policy(p), v1(1.0), 0, opts(4));
  EXPECT_NEAR(est.mean[0], 0.5, 1e-10);
  EXPECT_EQ(est.stderr_[0], 0.0);
}

TEST(CostEstimate, ZeroStateZeroCost) {
  const auto p = lq3();
  const auto est = estimate_cost(p, assemble_closed_loop(solve_care(p), p), Vec::Zero(3), 0, opts(50));
  EXPECT_EQ(est.mean[0], 0.0);
}

TEST(CostEstimate, Lq3ValueFunction) {
  const auto p = lq3();
  const auto sol = solve_care(p);
  const Vec x0 = Vec::Ones(3);
  const auto est = estimate_cost(p, assemble_closed_loop(sol, p), x0, 0, opts(10000));
  const double v = x0.dot(sol.P[0] * x0);
  EXPECT_LE(std::abs(est.mean[0] - v), 3.0 * est.stderr_[0]);
}

TEST(CostEstimate, ForcedScalarValueFunction) {
  const auto p = scalar_forced(1.0, 1.0, 0.3, -0.2);
  const auto sol = solve_care(p);
  const auto eta = solve_eta_lq(sol, p);
  const auto est = estimate_cost(p, assemble_closed_loop(sol, p, eta), v1(0.7), 0, opts(2));
  EXPECT_NEAR(est.mean[0], value_function(sol, p, eta, v1(0.7), 0), 1e-9);
}

TEST(CostEstimate, ForcedCoupledValueFunction) {
  const auto p = parse_lq_problem(read_json_file(data_path("lq3_forced.json")));
  const auto sol = solve_care(p);
  const auto eta = solve_eta_lq(sol, p);
  const Vec x0 = Vec::LinSpaced(3, 1, -1);
  for (std::size_t i0 = 0; i0 < 3; ++i0) {
    const auto est = estimate_cost(p, assemble_closed_loop(sol, p, eta), x0, i0, opts(10000, 30.0, 21));
    const double v = value_function(sol, p, eta, x0, i0);
    EXPECT_LE(std::abs(est.mean[0] - v), 3.0 * est.stderr_[0]) << "i0=" << i0;
  }
}

TEST(CostEstimate, DoublingHorizonWithinTailBound) {
  const auto p = parse_lq_problem(read_json_file(data_path("lq3_forced.json")));
  const auto sol = solve_care(p);
  const auto eta = solve_eta_lq(sol, p);
  const auto pol = assemble_closed_loop(sol, p, eta);
  const auto a = estimate_cost(p, pol, Vec::Ones(3), 0, opts(500, 15.0));
  const auto b = estimate_cost(p, pol, Vec::Ones(3), 0, opts(500, 30.0));
  EXPECT_LE(std::abs(b.mean[0] - a.mean[0]), a.tail_bound);
}

TEST(CostEstimate, ShortHorizonRejected) {
  const auto p = lq3();
  try {
    estimate_cost(p, assemble_closed_loop(solve_care(p), p), Vec::Ones(3), 0, opts(100, 0.5));
    FAIL() << "expected HorizonTooShort";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::HorizonTooShort);
  }
}

TEST(CostEstimate, IndependentOfThreadCount) {
  const auto p = parse_lq_problem(read_json_file(data_path("lq3_forced.json")));
  const auto sol = solve_care(p);
  const auto pol = assemble_closed_loop(sol, p, solve_eta_lq(sol, p));
  auto o = opts(3000);
  o.threads = 1;
  const auto a = estimate_cost(p, pol, Vec::Ones(3), 1, o);
  o.threads = 5;
  const auto b = estimate_cost(p, pol, Vec::Ones(3), 1, o);
  EXPECT_EQ(a.mean[0], b.mean[0]);
  EXPECT_EQ(a.stderr_[0], b.stderr_[0]);
  EXPECT_EQ(a.per_path, b.per_path);
}

TEST(Stationarity, ScalarHomogeneous) {
  const auto p = scalar_lq();
  const auto rep = check_stationarity(p, solve_care(p), std::nullopt, v1(1.0), 0, opts(10));
  EXPECT_LE(rep.max_residual, 1e-10);
}

TEST(Stationarity, Lq3Homogeneous) {
  const auto p = lq3();
  const auto rep = check_stationarity(p, solve_care(p), std::nullopt, Vec::Ones(3), 0, opts(100));
  EXPECT_EQ(rep.paths, 100u);
  EXPECT_LE(rep.max_residual, 1e-6);
}

TEST(Stationarity, ForcedScalar) {
  const auto p = scalar_forced(1.0, 1.0, 0.5, 0.25);
  const auto sol = solve_care(p);
  const auto rep = check_stationarity(p, sol, solve_eta_lq(sol, p), v1(1.0), 0, opts(5));
  EXPECT_LE(rep.max_residual, 1e-8);
}

TEST(Representation, ZeroFamilyIsTheCostItself) {
  const auto p = lq3();
  const auto pol = assemble_closed_loop(solve_care(p), p);
  const auto r = check_cost_representation(p, MatFamily::zeros(3, 3, 3), pol, Vec::Ones(3), 0, opts(200));
  EXPECT_EQ(r.difference, 0.0);
  EXPECT_TRUE(r.passed);
}

TEST(Representation, CareSolutionAtOptimum) {
  const auto p = lq3();
  const auto sol = solve_care(p);
  const auto r =
      check_cost_representation(p, sol.P, assemble_closed_loop(sol, p), Vec::Ones(3), 0, opts(10000));
  EXPECT_TRUE(r.passed) << r.difference << " +- " << r.stderr_;
}

TEST(Representation, RandomSymmetricFamiliesOnScalar) {
  const auto p = scalar_forced(1.0, 1.0, 0.2, 0.1);
  const auto sol = solve_care(p);
  const auto pol = assemble_closed_loop(sol, p, solve_eta_lq(sol, p));
  Gen g(123);
  for (int k = 0; k < 5; ++k) {
    const MatFamily Pt{m1(g.uniform(-2.0, 2.0))};
    const auto r = check_cost_representation(p, Pt, pol, v1(1.0), 0, opts(10000, 30.0, 100 + k));
    EXPECT_TRUE(r.passed) << "P~=" << Pt[0](0, 0) << " diff " << r.difference;
  }
}

TEST(Representation, RandomFamiliesOnCoupledProblem) {
  const auto p = parse_lq_problem(read_json_file(data_path("lq3_forced.json")));
  const auto sol = solve_care(p);
  const auto pol = assemble_closed_loop(sol, p, solve_eta_lq(sol, p));
  Gen g(321);
  for (int k = 0; k < 5; ++k) {
    const auto Pt = g.sym_family(3, 3);
    const auto r = check_cost_representation(p, Pt, pol, Vec::Ones(3), 1, opts(10000, 30.0, 200 + k));
    EXPECT_TRUE(r.passed) << "trial " << k << " diff " << r.difference << " +- " << r.stderr_;
  }
}

TEST(Nash, ZeroDeviationHasZeroEffect) {
  const auto p = game3();
  const auto sol = solve_game(p);
  DeviationOptions d;
  d.gain_deviations = 2;
  d.feedforward_deviations = 2;
  d.scale = 0.0;
  const auto rep = verify_equilibrium_mc(p, sol, std::nullopt, Vec::Ones(3), 0, opts(300), d);
  ASSERT_EQ(rep.deviations.size(), 8u);
  for (const auto& dv : rep.deviations) EXPECT_EQ(dv.delta_J, 0.0);
}

TEST(Nash, SymmetricScalarGame) {
  const auto p = symmetric_forced_game();
  const auto sol = solve_game(p);
  const auto eta = solve_game_feedforward(sol, p, p.inhomog);
  const auto rep = verify_equilibrium_mc(p, sol, eta, v1(1.0), 0, opts(20000));
  EXPECT_EQ(rep.deviations.size(), 80u);
  EXPECT_EQ(rep.flags, 0u);
}

TEST(Nash, Game3GainDeviations) {
  const auto p = game3();
  const auto sol = solve_game(p);
  DeviationOptions d;
  d.gain_deviations = 10;
  d.feedforward_deviations = 0;
  const Vec x0 = (Vec(3) << 1, 0, -1).finished();
  const auto rep = verify_equilibrium_mc(p, sol, std::nullopt, x0, 1, opts(4000), d);
  EXPECT_EQ(rep.deviations.size(), 20u);
  EXPECT_EQ(rep.flags, 0u);
}

TEST(Nash, BestResponseFeedforwardBeatsPrintedForm) {
  // Player 1 switching from the best-response feedforward to the printed-sign
  // one, with player 2 unchanged, must not lower player 1's cost.
  auto p = game3();
  GameSignal s;
  s.kappa = 0.8;
  s.b = VecFamily{Vec::Ones(3), Vec::Zero(3), Vec::LinSpaced(3, -1, 1)};
  s.q[0] = VecFamily{Vec::Ones(3), Vec::LinSpaced(3, 0, 1), Vec::Zero(3)};
  s.q[1] = VecFamily{Vec::LinSpaced(3, 1, -1), Vec::Zero(3), Vec::Ones(3)};
  for (int k = 0; k < 2; ++k)
    for (int l = 0; l < 2; ++l) s.rho[k][l] = VecFamily::zeros(3, 2);
  p.inhomog = s;
  const auto sol = solve_game(p);
  const auto best = solve_game_feedforward(sol, p, s, FeedforwardForm::BestResponse);
  const auto printed = solve_game_feedforward(sol, p, s, FeedforwardForm::AsPrinted);
  const auto eq = assemble_game_policy(sol, p, best);
  auto dev = eq;
  dev.player[0].nu_bar = printed.nu1;
  const Vec x0 = Vec::Ones(3);
  const auto a = estimate_game_cost(p, eq, x0, 0, opts(4000));
  const auto b = estimate_game_cost(p, dev, x0, 0, opts(4000));
  std::vector<double> diff(a.paths);
  for (std::size_t k = 0; k < a.paths; ++k) diff[k] = b.per_path[k][0] - a.per_path[k][0];
  const auto sm = summarize(diff);
  EXPECT_GE(sm.mean, -3.0 * sm.stderr_);
}
