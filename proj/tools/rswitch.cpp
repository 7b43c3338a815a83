// rswitch: simulate randomly switched linear systems, estimate their Lyapunov
// exponents, certify almost-sure stability and synthesize stabilizing gains.
//
// Values may also come from a config file (--config, TOML/INI); flags given on
// the command line take precedence over the file.

#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "rswitch/cli.hpp"

namespace {

using rswitch::cli::Command;
using rswitch::cli::ExperimentConfig;
using rswitch::cli::OutputFormat;

void add_common(CLI::App& sub, ExperimentConfig& cfg, std::string& format, std::size_t& n) {
  sub.add_option("--model", cfg.model_file, "Switching model file (JSON)")->required();
  sub.add_option("--n", n, "Steps per path");
  sub.add_option("--trials", cfg.trials, "Monte Carlo trials / sampled paths")->check(CLI::PositiveNumber);
  sub.add_option("--seed", cfg.seed, "Master seed");
  sub.add_option("--out", cfg.output, "Output file (default: stdout)");
  sub.add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "text"}));
  sub.add_option("--threads", cfg.workers, "Worker threads (default: RSWITCH_THREADS or all cores)")
      ->check(CLI::PositiveNumber);
  sub.add_option("--manifest", cfg.manifest, "Run manifest path (default: <out>.manifest.json)");
  sub.add_flag("--strict", cfg.strict, "Exit 4 when a certificate is inconclusive");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random switched linear systems: Lyapunov exponents, stability, stabilization"};
  app.set_config("--config", "", "Read options from a TOML or INI file");
  app.require_subcommand(1);

  ExperimentConfig cfg;
  std::string format = "text";
  std::size_t n = 0;
  double horizon = 0.0;
  double lambda = 0.0;
  double gamma_max = 64.0;

  const std::map<std::string, Command> commands{
      {"simulate", Command::Simulate},     {"lyapunov", Command::Lyapunov},
      {"spectrum", Command::Spectrum},     {"certify", Command::Certify},
      {"occupation", Command::Occupation}, {"pe", Command::Pe},
      {"stabilize", Command::Stabilize},
  };
  const std::map<std::string, std::string> help{
      {"simulate", "Sample a switching path (and the state norm along it)"},
      {"lyapunov", "Maximal exponent, spectrum and Monte Carlo bound"},
      {"spectrum", "Lyapunov spectrum with multiplicities"},
      {"certify", "Almost-sure stability certificate"},
      {"occupation", "Occupation-time fractions per mode"},
      {"pe", "Persistent-excitation checks on sampled paths"},
      {"stabilize", "Gain sweep to a target decay rate"},
  };

  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, cmd] : commands) {
    CLI::App* sub = app.add_subcommand(name, help.at(name));
    add_common(*sub, cfg, format, n);
    subs[name] = sub;
  }
  for (const char* name : {"simulate", "lyapunov", "spectrum", "certify"}) {
    subs[name]->add_option("--generators", cfg.generators_file, "Generator file (JSON)");
  }
  subs["certify"]->add_flag("--scan", cfg.scan, "Doubling scan n = 8, 16, ..., --n");
  for (const char* name : {"occupation", "pe"}) {
    subs[name]->add_option("--horizon", horizon, "Time horizon (default: end of each path)");
  }
  subs["pe"]->add_option("--active-mode", cfg.active_mode, "Mode whose activity forms the signal (0-based)");
  subs["pe"]->add_option("--T", cfg.window, "Window length");
  subs["pe"]->add_option("--mu", cfg.mu, "Required active time per window");
  subs["stabilize"]->add_option("--plant", cfg.plant_file, "Plant file (JSON)")->required();
  subs["stabilize"]->add_option("--lambda", lambda, "Target decay rate for lambda_max^c")->required();
  subs["stabilize"]->add_option("--gamma-max", gamma_max, "Largest placement rate tried");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : rswitch::cli::kExitValidation;
  }

  for (const auto& [name, sub] : subs) {
    if (!sub->parsed()) continue;
    cfg.command = commands.at(name);
    if (sub->count("--n") > 0) cfg.n = n;
    if (const CLI::Option* h = sub->get_option_no_throw("--horizon"); h != nullptr && h->count() > 0) {
      cfg.horizon = horizon;
    }
    if (name == "stabilize") {
      cfg.lambda_target = lambda;
      cfg.gamma_max = gamma_max;
    }
  }
  cfg.format = format == "csv" ? OutputFormat::Csv : OutputFormat::Text;
  return rswitch::cli::run(cfg, std::cout, std::cerr);
}
