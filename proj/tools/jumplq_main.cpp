#include "jumplq/cli.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>

namespace {

void add_common(CLI::App* sub, jumplq::cli::RunConfig& cfg, bool needs_problem) {
  if (needs_problem) sub->add_option("problem", cfg.problem_path, "Problem JSON file")->required();
  sub->add_option("--tol", cfg.tol, "Riccati residual tolerance");
  sub->add_option("--max-iter", cfg.max_iter, "Iteration cap");
  sub->add_option("-o,--output", cfg.output_path, "Write the report here instead of stdout");
}

void add_sim(CLI::App* sub, jumplq::cli::RunConfig& cfg) {
  sub->add_option("--seed", cfg.seed, "Base RNG seed");
  sub->add_option("--paths", cfg.paths, "Number of Monte Carlo paths");
  sub->add_option("--horizon", cfg.horizon, "Truncation horizon T");
  sub->add_option("--threads", cfg.threads, "Worker threads (0 = hardware)");
}

void add_state(CLI::App* sub, jumplq::cli::RunConfig& cfg) {
  sub->add_option("--x0", cfg.x0, "Initial state, comma separated")->delimiter(',');
  sub->add_option("--i0", cfg.i0, "Initial regime (1-based)");
}

void add_eta_form(CLI::App* sub, jumplq::cli::RunConfig& cfg) {
  const std::map<std::string, jumplq::FeedforwardForm> forms{
      {"best-response", jumplq::FeedforwardForm::BestResponse},
      {"as-printed", jumplq::FeedforwardForm::AsPrinted}};
  sub->add_option("--eta-form", cfg.eta_form, "Game feedforward equations")
      ->transform(CLI::CheckedTransformer(forms, CLI::ignore_case));
}

}  // namespace

int main(int argc, char** argv) {
  jumplq::cli::RunConfig cfg;
  cfg.data_dir = JUMPLQ_DATA_DIR;

  CLI::App app{"Solvers for infinite-horizon LQ problems and games with Markov regime switching"};
  app.require_subcommand(1);

  const std::map<std::string, jumplq::cli::Format> formats{{"json", jumplq::cli::Format::Json},
                                                           {"csv", jumplq::cli::Format::Csv}};

  auto* check = app.add_subcommand("check-stability", "Test mean-square stability of the open loop");
  add_common(check, cfg, true);

  auto* lq = app.add_subcommand("solve-lq", "Solve the coupled Riccati system");
  add_common(lq, cfg, true);

  auto* bsde = app.add_subcommand("solve-bsde", "Solve for the feedforward term of an inhomogeneous problem");
  add_common(bsde, cfg, true);

  auto* game = app.add_subcommand("solve-game", "Solve the two-player coupled Riccati system");
  add_common(game, cfg, true);
  add_eta_form(game, cfg);

  auto* sim = app.add_subcommand("simulate", "Monte Carlo cost of the closed loop");
  add_common(sim, cfg, true);
  add_sim(sim, cfg);
  add_state(sim, cfg);
  add_eta_form(sim, cfg);
  sim->add_option("--format", cfg.format, "json report or csv trajectories")
      ->transform(CLI::CheckedTransformer(formats, CLI::ignore_case));

  auto* verify = app.add_subcommand("verify", "Check optimality or Nash property by simulation");
  add_common(verify, cfg, true);
  add_sim(verify, cfg);
  add_state(verify, cfg);
  add_eta_form(verify, cfg);
  verify->add_option("--deviations", cfg.deviations, "Random deviations per player and kind");

  auto* repro = app.add_subcommand("reproduce-paper", "Re-run the two worked examples");
  add_common(repro, cfg, false);
  add_sim(repro, cfg);
  repro->add_option("--data-dir", cfg.data_dir, "Directory holding the example fixtures");
  repro->add_option("--format", cfg.format, "json or csv table")
      ->transform(CLI::CheckedTransformer(formats, CLI::ignore_case));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << jumplq::cli::error_line(jumplq::Errc::InvalidArgument, e.what()) << '\n';
    return 1;
  }
  cfg.command = app.get_subcommands().front()->get_name();
  return jumplq::cli::run(cfg, std::cout, std::cerr);
}
