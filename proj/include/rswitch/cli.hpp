#pragma once

// Experiment orchestration behind the `rswitch` command-line tool: loads the
// input files, dispatches one analysis, writes its output atomically and
// records a run manifest next to it.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "rswitch/cocycle.hpp"
#include "rswitch/error.hpp"
#include "rswitch/io.hpp"
#include "rswitch/lyapunov.hpp"
#include "rswitch/parallel.hpp"
#include "rswitch/pe_analysis.hpp"
#include "rswitch/stabilization.hpp"
#include "rswitch/switching_model.hpp"

namespace rswitch::cli {

enum class Command { Simulate, Lyapunov, Spectrum, Certify, Stabilize, Occupation, Pe };
enum class OutputFormat { Csv, Text };

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitValidation = 2,
  kExitBudgetExhausted = 3,
  kExitInconclusive = 4,
  kExitIo = 5,
};

inline constexpr std::string_view command_name(Command c) {
  switch (c) {
    case Command::Simulate: return "simulate";
    case Command::Lyapunov: return "lyapunov";
    case Command::Spectrum: return "spectrum";
    case Command::Certify: return "certify";
    case Command::Stabilize: return "stabilize";
    case Command::Occupation: return "occupation";
    case Command::Pe: return "pe";
  }
  return "unknown";
}

struct ExperimentConfig {
  Command command = Command::Lyapunov;
  std::filesystem::path model_file;
  std::filesystem::path generators_file;
  std::filesystem::path plant_file;
  /// Steps per path; unset picks the command default (64 for certify and
  /// stabilize, 10000 otherwise).
  std::optional<std::size_t> n;
  std::size_t trials = 200;
  std::uint64_t seed = 0;
  std::optional<double> lambda_target;
  std::optional<double> gamma_max;
  std::filesystem::path output;  // empty: the `out` stream
  OutputFormat format = OutputFormat::Text;
  bool strict = false;
  std::size_t workers = default_workers();

  bool scan = false;             // certify: doubling scan over n
  std::size_t active_mode = 0;   // pe
  double window = 1.0;           // pe: T
  double mu = 0.5;               // pe
  std::optional<double> horizon; // occupation, pe
  std::filesystem::path manifest;  // empty: <output>.manifest.json when output is a file

  std::size_t steps() const {
    if (n) return *n;
    return (command == Command::Certify || command == Command::Stabilize) ? 64 : 10'000;
  }
};

namespace detail {

struct Inputs {
  std::string model_text;
  std::string aux_text;
};

inline GeneratorSet load_generators(const ExperimentConfig& cfg, Inputs& in) {
  if (cfg.generators_file.empty()) {
    throw Error(ErrorCode::InvalidArgument, std::string(command_name(cfg.command)) + " requires --generators");
  }
  in.aux_text = io::read_file(cfg.generators_file);
  return io::parse_generators(in.aux_text);
}

inline std::string simulate(const ExperimentConfig& cfg, const SwitchingModel& model,
                            const std::optional<GeneratorSet>& gen) {
  const std::size_t n = cfg.steps();
  const SwitchPath path = sample_path(model, n, cfg.seed);
  std::vector<double> log_norms;
  if (gen) {
    const auto d = static_cast<Eigen::Index>(gen->dimension());
    ScaledVector x{Vector::Constant(d, 1.0 / std::sqrt(static_cast<double>(d))), 0.0};
    StepPropagator step_exp(*gen);
    for (std::size_t k = 0; k < n; ++k) {
      rswitch::detail::absorb(x, step_exp(path.step(k)));
      log_norms.push_back(x.log_norm);
    }
  }
  if (cfg.format == OutputFormat::Csv) {
    std::string out = gen ? "step,mode,dwell,switch_time,log_norm\n" : "step,mode,dwell,switch_time\n";
    for (std::size_t k = 0; k < n; ++k) {
      out += std::to_string(k + 1) + "," + std::to_string(path.step(k).mode) + "," +
             io::format_real(path.step(k).dwell) + "," + io::format_real(path.switch_time(k + 1));
      if (gen) out += "," + io::format_real(log_norms[k]);
      out += "\n";
    }
    return out;
  }
  io::Json steps = io::Json::array();
  for (std::size_t k = 0; k < n; ++k) {
    io::Json s{{"mode", path.step(k).mode}, {"dwell", path.step(k).dwell}, {"switch_time", path.switch_time(k + 1)}};
    if (gen) s["log_norm"] = log_norms[k];
    steps.push_back(std::move(s));
  }
  io::Json doc{{"seed", cfg.seed}, {"n", n}, {"steps", steps}};
  if (gen) doc["lambda_d"] = log_norms.back() / static_cast<double>(n);
  return io::dump(doc);
}

inline std::string occupation(const ExperimentConfig& cfg, const SwitchingModel& model) {
  const SwitchPath path = sample_path(model, cfg.steps(), cfg.seed);
  const double horizon = cfg.horizon.value_or(path.horizon());
  const Vector expected = expected_occupation(model);
  std::vector<double> fractions;
  for (std::size_t i = 0; i < model.modes(); ++i) fractions.push_back(occupation_fraction(path, horizon, i));
  if (cfg.format == OutputFormat::Csv) {
    std::string out = "mode,fraction,expected\n";
    for (std::size_t i = 0; i < model.modes(); ++i) {
      out += std::to_string(i) + "," + io::format_real(fractions[i]) + "," +
             io::format_real(expected(static_cast<Eigen::Index>(i))) + "\n";
    }
    return out;
  }
  return io::dump(io::Json{{"horizon", horizon},
                           {"mean_dwell", mean_dwell(model)},
                           {"fractions", fractions},
                           {"expected", std::vector<double>(expected.data(), expected.data() + expected.size())}});
}

inline std::string pe(const ExperimentConfig& cfg, const SwitchingModel& model) {
  if (cfg.active_mode >= model.modes()) {
    throw Error(ErrorCode::InvalidArgument, "active mode " + std::to_string(cfg.active_mode) + " out of range");
  }
  std::vector<io::PeRow> rows(cfg.trials);
  parallel_for(cfg.trials, cfg.workers, [&](std::size_t j) {
    const SwitchPath path = sample_path(model, cfg.steps(), derive_seed(cfg.seed, j));
    const double horizon = cfg.horizon.value_or(path.horizon());
    rows[j] = {j, is_pe_on_horizon(path, cfg.active_mode, cfg.window, cfg.mu, horizon),
               empirical_pe_average(path, cfg.active_mode, horizon)};
  });
  if (cfg.format == OutputFormat::Csv) return io::pe_csv(rows);
  io::Json list = io::Json::array();
  std::size_t passed = 0;
  for (const auto& r : rows) {
    passed += r.check.passed() ? 1 : 0;
    io::Json row{{"path_id", r.path_id},
                 {"T", r.check.window},
                 {"mu", r.check.mu},
                 {"pe_pass", r.check.passed()},
                 {"empirical_average", r.empirical_average}};
    row["first_violation_time"] = r.check.violated_at ? io::Json(*r.check.violated_at) : io::Json(nullptr);
    list.push_back(std::move(row));
  }
  io::Json doc{{"paths", list}, {"pass_fraction", static_cast<double>(passed) / static_cast<double>(rows.size())}};
  try {
    doc["asymptotic_constant"] = asymptotic_pe_constant(model);
  } catch (const Error&) {
    doc["asymptotic_constant"] = nullptr;
  }
  return io::dump(doc);
}

inline void write_output(const ExperimentConfig& cfg, const std::string& content, std::ostream& out) {
  if (cfg.output.empty()) {
    out << content;
  } else {
    io::atomic_write(cfg.output, content);
  }
}

inline void write_manifest(const ExperimentConfig& cfg, const Inputs& in, double wall_seconds, int exit_code) {
  std::filesystem::path path = cfg.manifest;
  if (path.empty()) {
    if (cfg.output.empty()) return;
    path = cfg.output;
    path += ".manifest.json";
  }
  const io::Json doc{{"command", std::string(command_name(cfg.command))},
                     {"model_hash", io::content_hash(in.model_text)},
                     {"generators_hash", in.aux_text.empty() ? io::Json(nullptr) : io::Json(io::content_hash(in.aux_text))},
                     {"seed", cfg.seed},
                     {"n", cfg.steps()},
                     {"trials", cfg.trials},
                     {"workers", cfg.workers},
                     {"exit_code", exit_code},
                     {"wall_time_seconds", wall_seconds}};
  io::atomic_write(path, io::dump(doc));
}

}  // namespace detail

/// Runs one experiment. Exit codes: 0 success, 2 invalid input, 3 gain sweep
/// ran out of budget (output still written), 4 inconclusive certificate under
/// --strict, 5 I/O failure.
inline int run(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto started = std::chrono::steady_clock::now();
  detail::Inputs inputs;
  int code = kExitOk;
  try {
    if (cfg.trials < 1 || cfg.steps() < 1) throw Error(ErrorCode::InvalidArgument, "n and trials must be >= 1");
    if (cfg.model_file.empty()) throw Error(ErrorCode::InvalidArgument, "--model is required");
    inputs.model_text = io::read_file(cfg.model_file);
    const SwitchingModel model = io::parse_model(inputs.model_text);
    std::string content;

    switch (cfg.command) {
      case Command::Simulate: {
        std::optional<GeneratorSet> gen;
        if (!cfg.generators_file.empty()) gen = detail::load_generators(cfg, inputs);
        content = detail::simulate(cfg, model, gen);
        break;
      }
      case Command::Lyapunov: {
        const GeneratorSet gen = detail::load_generators(cfg, inputs);
        if (cfg.format == OutputFormat::Csv) {
          content = io::lyapunov_trials_csv(max_lyap_mc(gen, model, cfg.steps(), cfg.trials, cfg.seed, cfg.workers));
        } else {
          ReportOptions opts;
          opts.n = cfg.steps();
          opts.trials = cfg.trials;
          opts.seed = cfg.seed;
          opts.workers = cfg.workers;
          content = io::dump(io::report_to_json(lyapunov_report(gen, model, opts)));
        }
        break;
      }
      case Command::Spectrum: {
        const GeneratorSet gen = detail::load_generators(cfg, inputs);
        const LyapunovSpectrum s = lyap_spectrum(gen, model, cfg.steps(), cfg.seed);
        if (cfg.format == OutputFormat::Csv) {
          content = io::spectrum_csv(s);
        } else {
          io::Json doc = io::spectrum_to_json(s);
          doc["trace_residual"] = trace_identity_residual(gen, model, s);
          content = io::dump(doc);
        }
        break;
      }
      case Command::Certify: {
        const GeneratorSet gen = detail::load_generators(cfg, inputs);
        std::vector<StabilityCertificate> certs;
        if (cfg.scan) {
          certs = certificate_scan(gen, model, cfg.steps(), cfg.trials, cfg.seed, cfg.workers);
        } else {
          certs.push_back(stability_certificate(gen, model, cfg.steps(), cfg.trials, cfg.seed, cfg.workers));
        }
        if (cfg.format == OutputFormat::Csv) {
          content = io::certificates_csv(certs);
        } else if (cfg.scan) {
          io::Json list = io::Json::array();
          for (const auto& c : certs) list.push_back(io::certificate_to_json(c));
          content = io::dump(io::Json{{"scan", list}, {"final", io::certificate_to_json(certs.back())}});
        } else {
          content = io::dump(io::certificate_to_json(certs.back()));
        }
        err << "verdict: " << to_string(certs.back().verdict) << "\n";
        if (cfg.strict && certs.back().verdict == Verdict::Inconclusive) code = kExitInconclusive;
        break;
      }
      case Command::Stabilize: {
        if (cfg.plant_file.empty()) throw Error(ErrorCode::InvalidArgument, "stabilize requires --plant");
        if (!cfg.lambda_target) throw Error(ErrorCode::InvalidArgument, "stabilize requires --lambda");
        inputs.aux_text = io::read_file(cfg.plant_file);
        const ControlPlant plant = io::parse_plant(inputs.aux_text);
        StabilizationBudget budget;
        budget.gamma_max = cfg.gamma_max.value_or(64.0);
        budget.n = cfg.steps();
        budget.trials = cfg.trials;
        budget.seed = cfg.seed;
        budget.workers = cfg.workers;
        const StabilizationResult r = stabilize_to_rate(plant, model, *cfg.lambda_target, budget);
        content = cfg.format == OutputFormat::Csv ? io::stages_csv(r.stages)
                                                  : io::dump(io::stabilization_to_json(r, *cfg.lambda_target));
        if (!r.achieved) {
          err << "BudgetExhausted: best upper bound " << io::format_real(r.achieved_lambda) << " at gamma "
              << io::format_real(r.gains.gamma) << " (target " << io::format_real(*cfg.lambda_target) << ")\n";
          code = kExitBudgetExhausted;
        }
        break;
      }
      case Command::Occupation:
        content = detail::occupation(cfg, model);
        break;
      case Command::Pe:
        content = detail::pe(cfg, model);
        break;
    }
    detail::write_output(cfg, content, out);
  } catch (const Error& e) {
    err << e.what() << "\n";
    code = e.code() == ErrorCode::Io ? kExitIo : (e.code() == ErrorCode::Internal ? kExitInternal : kExitValidation);
  } catch (const std::exception& e) {
    err << "InternalError: " << e.what() << "\n";
    code = kExitInternal;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  try {
    detail::write_manifest(cfg, inputs, wall, code);
  } catch (const Error& e) {
    err << e.what() << "\n";
    if (code == kExitOk) code = kExitIo;
  }
  return code;
}

}  // namespace rswitch::cli
