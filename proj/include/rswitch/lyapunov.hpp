#pragma once

// Lyapunov exponents of random switched linear systems: the maximal exponent
// along one path and in Monte Carlo mean, the full spectrum with
// multiplicities, the almost-sure stability certificate, and the trace
// identity sum_i m_i lambda_i = sum_i p_i tau_i Tr(L_i).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string_view>
#include <vector>

#include "rswitch/cocycle.hpp"
#include "rswitch/error.hpp"
#include "rswitch/linalg.hpp"
#include "rswitch/parallel.hpp"
#include "rswitch/rng.hpp"
#include "rswitch/switching_model.hpp"

namespace rswitch {

/// Two-sided 95% quantile of the standard normal.
inline constexpr double kNormalQuantile95 = 1.959963984540054;

namespace detail {

inline void check_compatible(const GeneratorSet& gen, const SwitchingModel& model) {
  if (gen.size() != model.modes()) {
    throw Error(ErrorCode::Dimension, std::to_string(gen.size()) + " generators for a model with " +
                                          std::to_string(model.modes()) + " modes");
  }
}

inline void check_steps_positive(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "number of steps must be >= 1");
}

}  // namespace detail

struct PathExponent {
  double discrete;    // (1/n) log |Phi(n, omega)|
  double continuous;  // discrete / mean_dwell
};

inline PathExponent max_lyap_path(const GeneratorSet& gen, const SwitchingModel& model, std::size_t n,
                                  std::uint64_t seed) {
  detail::check_compatible(gen, model);
  detail::check_steps_positive(n);
  const SwitchPath path = sample_path(model, n, seed);
  const double lambda_d = cocycle_matrix(gen, path, n).log_scale / static_cast<double>(n);
  return {lambda_d, lambda_d / mean_dwell(model)};
}

struct MonteCarloEstimate {
  double mean = 0.0;        // of (1/n) log |Phi(n, .)|
  double half_width = 0.0;  // 95% normal approximation
  std::size_t n = 0;
  std::size_t trials = 0;
  double mean_dwell = 1.0;
  std::vector<double> log_norms;  // log |Phi(n, omega_j)| per trial j

  double lambda_d(std::size_t trial) const { return log_norms.at(trial) / static_cast<double>(n); }
  double lambda_c(std::size_t trial) const { return lambda_d(trial) / mean_dwell; }
  double upper_continuous() const { return (mean + half_width) / mean_dwell; }
};

/// log |Phi(n, omega_j)| for trials j = 0..trials-1, omega_j sampled from
/// derive_seed(seed, j). Bit-identical for every worker count.
inline std::vector<double> trial_log_norms(const GeneratorSet& gen, const SwitchingModel& model, std::size_t n,
                                           std::size_t trials, std::uint64_t seed, std::size_t workers) {
  std::vector<double> out(trials);
  parallel_for(trials, workers, [&](std::size_t j) {
    const SwitchPath path = sample_path(model, n, derive_seed(seed, j));
    out[j] = cocycle_matrix(gen, path, n).log_scale;
  });
  return out;
}

struct SampleStats {
  double mean;
  double half_width;
};

inline SampleStats mean_and_half_width(const std::vector<double>& xs) {
  const auto count = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= count;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (count - 1.0));
  return {mean, kNormalQuantile95 * sd / std::sqrt(count)};
}

inline MonteCarloEstimate max_lyap_mc(const GeneratorSet& gen, const SwitchingModel& model, std::size_t n,
                                      std::size_t trials, std::uint64_t seed,
                                      std::size_t workers = default_workers()) {
  detail::check_compatible(gen, model);
  detail::check_steps_positive(n);
  if (trials < 2) throw Error(ErrorCode::InvalidArgument, "Monte Carlo estimate needs trials >= 2");
  MonteCarloEstimate est;
  est.n = n;
  est.trials = trials;
  est.mean_dwell = mean_dwell(model);
  est.log_norms = trial_log_norms(gen, model, n, trials, seed, workers);
  std::vector<double> rates(trials);
  for (std::size_t j = 0; j < trials; ++j) rates[j] = est.lambda_d(j);
  const SampleStats stats = mean_and_half_width(rates);
  est.mean = stats.mean;
  est.half_width = stats.half_width;
  return est;
}

// ---------------------------------------------------------------------------
// Spectrum

enum class SpectrumMethod {
  /// log sigma_1..sigma_k = log |C_k(Phi)| from renormalized products of
  /// compound matrices. Exact singular values of Phi(n, omega).
  ExteriorPower,
  /// Propagated orthonormal frame, re-orthonormalized by QR.
  QrFrame,
};

struct SpectrumOptions {
  SpectrumMethod method = SpectrumMethod::ExteriorPower;
  std::size_t reorthonormalize_every = 10;
  /// Negative selects 10/n + 1e-6.
  double cluster_tolerance = -1.0;
  /// Above this dimension the exterior-power route falls back to QrFrame.
  std::size_t max_exterior_dimension = 6;
};

inline double default_cluster_tolerance(std::size_t n) { return 10.0 / static_cast<double>(n) + 1e-6; }

struct SpectrumEntry {
  double exponent;             // discrete-time, per step
  double continuous_exponent;  // per unit time along the path: exponent * n / s_n
  std::size_t multiplicity;
};

struct LyapunovSpectrum {
  std::vector<SpectrumEntry> entries;  // exponents strictly decreasing
  std::vector<double> raw;             // d per-direction estimates, nonincreasing
  std::size_t steps = 0;
  double elapsed_time = 0.0;  // s_n of the path used
  double cluster_tolerance = 0.0;

  std::size_t dimension() const noexcept { return raw.size(); }
  double max_exponent() const { return entries.front().exponent; }
  /// sum_i m_i lambda_i.
  double weighted_sum() const {
    double s = 0.0;
    for (const auto& e : entries) s += static_cast<double>(e.multiplicity) * e.exponent;
    return s;
  }
};

/// Groups a nonincreasing list where consecutive gaps are <= tolerance; each
/// group becomes one entry at its mean, so sum_i m_i lambda_i is preserved.
inline std::vector<SpectrumEntry> cluster_exponents(const std::vector<double>& sorted_desc, double tolerance,
                                                    double continuous_factor) {
  std::vector<SpectrumEntry> out;
  std::size_t i = 0;
  while (i < sorted_desc.size()) {
    std::size_t j = i + 1;
    double sum = sorted_desc[i];
    while (j < sorted_desc.size() && sorted_desc[j - 1] - sorted_desc[j] <= tolerance) sum += sorted_desc[j++];
    const double mean = sum / static_cast<double>(j - i);
    out.push_back({mean, mean * continuous_factor, j - i});
    i = j;
  }
  return out;
}

namespace detail {

inline std::vector<double> log_singular_values_exterior(const GeneratorSet& gen, const SwitchPath& path,
                                                        std::size_t n) {
  const auto d = static_cast<int>(gen.dimension());
  std::vector<ScaledMatrix> powers;
  powers.reserve(static_cast<std::size_t>(d));
  for (int k = 1; k <= d; ++k) {
    const auto size = static_cast<Eigen::Index>(compound(Matrix::Identity(d, d), k).rows());
    powers.push_back({Matrix::Identity(size, size), 0.0});
  }
  StepPropagator step_exp(gen);
  for (std::size_t step = 0; step < n; ++step) {
    const Matrix& e = step_exp(path.step(step));
    for (int k = 1; k <= d; ++k) absorb(powers[static_cast<std::size_t>(k - 1)], compound(e, k));
  }
  std::vector<double> out(static_cast<std::size_t>(d));
  double previous = 0.0;
  for (int k = 0; k < d; ++k) {
    const double cumulative = powers[static_cast<std::size_t>(k)].log_scale;
    out[static_cast<std::size_t>(k)] = cumulative - previous;
    previous = cumulative;
  }
  return out;
}

inline std::vector<double> log_growth_qr_frame(const GeneratorSet& gen, const SwitchPath& path, std::size_t n,
                                               std::size_t cadence) {
  const auto d = static_cast<Eigen::Index>(gen.dimension());
  cadence = std::max<std::size_t>(cadence, 1);
  Matrix frame = Matrix::Identity(d, d);
  std::vector<double> sums(static_cast<std::size_t>(d), 0.0);
  StepPropagator step_exp(gen);
  std::size_t since = 0;
  for (std::size_t step = 0; step < n; ++step) {
    frame = step_exp(path.step(step)) * frame;
    ++since;
    const double big = frame.cwiseAbs().maxCoeff();
    const double small = frame.colwise().norm().minCoeff();
    if (since >= cadence || step + 1 == n || big > 1e100 || small < 1e-100) {
      QrResult f = qr(frame);
      for (Eigen::Index i = 0; i < d; ++i) sums[static_cast<std::size_t>(i)] += std::log(f.r(i, i));
      frame = std::move(f.q);
      since = 0;
    }
  }
  return sums;
}

}  // namespace detail

/// Spectrum estimate from the first n steps of a given path.
inline LyapunovSpectrum lyap_spectrum_of_path(const GeneratorSet& gen, const SwitchPath& path, std::size_t n,
                                              const SpectrumOptions& options = {}) {
  detail::check_steps_positive(n);
  detail::check_steps(path, n);
  const bool exterior = options.method == SpectrumMethod::ExteriorPower &&
                        gen.dimension() <= options.max_exterior_dimension;
  std::vector<double> logs = exterior ? detail::log_singular_values_exterior(gen, path, n)
                                      : detail::log_growth_qr_frame(gen, path, n, options.reorthonormalize_every);
  LyapunovSpectrum out;
  out.steps = n;
  out.elapsed_time = path.switch_time(n);
  out.cluster_tolerance = options.cluster_tolerance < 0.0 ? default_cluster_tolerance(n) : options.cluster_tolerance;
  out.raw.reserve(logs.size());
  for (double l : logs) out.raw.push_back(l / static_cast<double>(n));
  std::sort(out.raw.begin(), out.raw.end(), std::greater<>());
  out.entries = cluster_exponents(out.raw, out.cluster_tolerance, static_cast<double>(n) / out.elapsed_time);
  return out;
}

/// Spectrum along a fresh path sampled from `seed` (the same path that
/// max_lyap_path uses for that seed).
inline LyapunovSpectrum lyap_spectrum(const GeneratorSet& gen, const SwitchingModel& model, std::size_t n,
                                      std::uint64_t seed, const SpectrumOptions& options = {}) {
  detail::check_compatible(gen, model);
  detail::check_steps_positive(n);
  return lyap_spectrum_of_path(gen, sample_path(model, n, seed), n, options);
}

// ---------------------------------------------------------------------------
// Trace identity

/// sum_i p_i tau_i Tr(L_i).
inline double trace_rate(const GeneratorSet& gen, const SwitchingModel& model) {
  detail::check_compatible(gen, model);
  double s = 0.0;
  for (std::size_t i = 0; i < model.modes(); ++i) {
    s += model.invariant()(static_cast<Eigen::Index>(i)) * model.dwell(i).mean() * gen[i].trace();
  }
  return s;
}

inline double trace_identity_residual(const GeneratorSet& gen, const SwitchingModel& model,
                                      const LyapunovSpectrum& spectrum) {
  if (spectrum.dimension() != gen.dimension()) {
    throw Error(ErrorCode::Dimension, "spectrum dimension does not match the generators");
  }
  return std::abs(spectrum.weighted_sum() - trace_rate(gen, model));
}

// ---------------------------------------------------------------------------
// Stability certificate

enum class Verdict { AlmostSurelyStable, Inconclusive, LikelyUnstable };

constexpr std::string_view to_string(Verdict v) noexcept {
  switch (v) {
    case Verdict::AlmostSurelyStable: return "AlmostSurelyStable";
    case Verdict::Inconclusive: return "Inconclusive";
    case Verdict::LikelyUnstable: return "LikelyUnstable";
  }
  return "Inconclusive";
}

struct StabilityCertificate {
  Verdict verdict = Verdict::Inconclusive;
  std::size_t n = 0;
  std::size_t trials = 0;
  double mean_log_norm = 0.0;  // estimate of E log |Phi(n, .)|
  double confidence_half_width = 0.0;
};

inline constexpr std::size_t kMinCertificateTrials = 30;

/// Rounding in a sum of n log-norms is far below this; a bound inside the
/// margin is treated as touching zero.
inline double verdict_margin(std::size_t n) { return 1e-12 * (1.0 + static_cast<double>(n)); }

inline Verdict classify(double mean, double half_width, std::size_t n) {
  const double margin = verdict_margin(n);
  if (mean + half_width < -margin) return Verdict::AlmostSurelyStable;
  if (mean - half_width > margin) return Verdict::LikelyUnstable;
  return Verdict::Inconclusive;
}

/// Verdict from the sign of E log |Phi(n, .)|: negative for some n implies
/// almost-sure exponential stability.
inline StabilityCertificate stability_certificate(const GeneratorSet& gen, const SwitchingModel& model,
                                                  std::size_t n, std::size_t trials, std::uint64_t seed,
                                                  std::size_t workers = default_workers()) {
  detail::check_compatible(gen, model);
  detail::check_steps_positive(n);
  if (trials < kMinCertificateTrials) {
    throw Error(ErrorCode::InvalidArgument, "certificate needs at least " +
                                                std::to_string(kMinCertificateTrials) + " trials");
  }
  const SampleStats stats = mean_and_half_width(trial_log_norms(gen, model, n, trials, seed, workers));
  return {classify(stats.mean, stats.half_width, n), n, trials, stats.mean, stats.half_width};
}

/// Certificates for n = 8, 16, ... up to n_max (n_max itself included when it
/// is not a power of two), stopping at the first AlmostSurelyStable verdict.
inline std::vector<StabilityCertificate> certificate_scan(const GeneratorSet& gen, const SwitchingModel& model,
                                                          std::size_t n_max, std::size_t trials,
                                                          std::uint64_t seed,
                                                          std::size_t workers = default_workers()) {
  std::vector<std::size_t> schedule;
  for (std::size_t n = 8; n < n_max; n *= 2) schedule.push_back(n);
  schedule.push_back(std::max<std::size_t>(n_max, 1));
  std::vector<StabilityCertificate> out;
  for (std::size_t n : schedule) {
    out.push_back(stability_certificate(gen, model, n, trials, seed, workers));
    if (out.back().verdict == Verdict::AlmostSurelyStable) break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Combined report

struct LyapunovReport {
  double lambda_max_discrete = 0.0;
  double lambda_max_continuous = 0.0;
  LyapunovSpectrum spectrum;
  MonteCarloEstimate mc_bound;
  double trace_residual = 0.0;
  double mean_dwell_used = 0.0;
};

struct ReportOptions {
  std::size_t n = 10'000;
  std::size_t trials = 200;
  /// Monte Carlo horizon; 0 reuses n.
  std::size_t mc_steps = 0;
  std::uint64_t seed = 0;
  std::size_t workers = default_workers();
  SpectrumOptions spectrum{};
};

/// Path exponent and spectrum share the path sampled from `seed`; Monte Carlo
/// trials use derive_seed(seed, j).
inline LyapunovReport lyapunov_report(const GeneratorSet& gen, const SwitchingModel& model,
                                      const ReportOptions& options) {
  detail::check_compatible(gen, model);
  LyapunovReport r;
  const PathExponent path = max_lyap_path(gen, model, options.n, options.seed);
  r.mean_dwell_used = mean_dwell(model);
  r.lambda_max_discrete = path.discrete;
  r.lambda_max_continuous = path.continuous;
  r.spectrum = lyap_spectrum(gen, model, options.n, options.seed, options.spectrum);
  const std::size_t mc_steps = options.mc_steps == 0 ? options.n : options.mc_steps;
  r.mc_bound = max_lyap_mc(gen, model, mc_steps, options.trials, options.seed, options.workers);
  r.trace_residual = trace_identity_residual(gen, model, r.spectrum);
  return r;
}

}  // namespace rswitch
