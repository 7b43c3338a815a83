#pragma once

// Feedback stabilization of randomly switched control systems. Subsystem i,
// x_i' = A_i x_i + B_i u_i, is driven only while mode i is active. The
// subsystems are stacked into one state x = (x_1, ..., x_N) with
// block-diagonal A_hat and block injections B_hat_i; the feedback
// u_i = K_i P_i x turns mode i into the generator A_hat + B_hat_i K_i P_i.
// Gains come from pole placement at {-gamma, ..., -gamma - (d_i - 1)}, and
// gamma is doubled until the closed-loop maximal exponent reaches a target.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rswitch/cocycle.hpp"
#include "rswitch/error.hpp"
#include "rswitch/linalg.hpp"
#include "rswitch/lyapunov.hpp"
#include "rswitch/parallel.hpp"
#include "rswitch/rng.hpp"
#include "rswitch/switching_model.hpp"

namespace rswitch {

struct Subsystem {
  Matrix a;  // d_i x d_i
  Matrix b;  // d_i x m_i

  Eigen::Index state_dim() const noexcept { return a.rows(); }
  Eigen::Index input_dim() const noexcept { return b.cols(); }
  bool trivial() const noexcept { return a.rows() == 0; }
};

/// Kalman controllability matrix [B, AB, ..., A^{d-1} B].
inline Matrix controllability_matrix(const Matrix& a, const Matrix& b) {
  require_square(a, "controllability_matrix");
  if (b.rows() != a.rows()) throw Error(ErrorCode::Dimension, "B must have as many rows as A");
  const Eigen::Index d = a.rows();
  const Eigen::Index m = b.cols();
  Matrix c(d, d * m);
  Matrix block = b;
  for (Eigen::Index k = 0; k < d; ++k) {
    c.middleCols(k * m, m) = block;
    block = a * block;
  }
  return c;
}

/// Rank of the Kalman matrix; (A, B) is controllable iff this equals dim A.
inline int controllability_rank(const Matrix& a, const Matrix& b) {
  return numerical_rank(controllability_matrix(a, b));
}

/// Target closed-loop poles -gamma, -gamma-1, ..., -gamma-(d-1).
inline std::vector<double> target_poles(Eigen::Index d, double gamma) {
  std::vector<double> poles(static_cast<std::size_t>(d));
  for (Eigen::Index k = 0; k < d; ++k) poles[static_cast<std::size_t>(k)] = -gamma - static_cast<double>(k);
  return poles;
}

namespace detail {

/// Monic coefficients c_0..c_d of prod_k (s - pole_k), c_d = 1.
inline std::vector<double> poly_from_roots(const std::vector<double>& roots) {
  std::vector<double> c{1.0};
  for (double r : roots) {
    std::vector<double> next(c.size() + 1, 0.0);
    for (std::size_t i = 0; i < c.size(); ++i) {
      next[i + 1] += c[i];
      next[i] -= r * c[i];
    }
    c = std::move(next);
  }
  return c;
}

/// Ackermann: K = -e_d^T C^{-1} phi(A), with phi the target characteristic
/// polynomial, so that A + b K has exactly the target spectrum.
inline Matrix ackermann(const Matrix& a, const Vector& b, const std::vector<double>& poles) {
  const Eigen::Index d = a.rows();
  const Matrix ctrl = controllability_matrix(a, b);
  const std::vector<double> c = poly_from_roots(poles);
  Matrix phi = Matrix::Identity(d, d);  // Horner from the leading coefficient
  for (std::size_t i = c.size() - 1; i-- > 0;) phi = a * phi + c[i] * Matrix::Identity(d, d);
  Vector last = Vector::Zero(d);
  last(d - 1) = 1.0;
  const Vector row = ctrl.transpose().fullPivLu().solve(last);  // e_d^T C^{-1}, transposed
  return -(row.transpose() * phi);
}

/// True when the eigenvalues of A are the given real poles, in any order.
inline bool spectrum_matches(const Matrix& a, std::vector<double> poles, double tol) {
  std::vector<Complex> ev = eigenvalues(a);
  if (ev.size() != poles.size()) return false;
  std::sort(ev.begin(), ev.end(), [](Complex x, Complex y) { return x.real() < y.real(); });
  std::sort(poles.begin(), poles.end());
  for (std::size_t i = 0; i < ev.size(); ++i) {
    if (std::abs(ev[i] - Complex(poles[i], 0.0)) > tol * (1.0 + std::abs(poles[i]))) return false;
  }
  return true;
}

/// Smallest singular value of the Kalman matrix relative to its largest.
inline double controllability_margin(const Matrix& a, const Matrix& b) {
  const Vector s = svd(controllability_matrix(a, b)).singular_values;
  if (s.size() == 0 || s(0) == 0.0) return 0.0;
  return s(s.size() - 1) / s(0);
}

}  // namespace detail

struct PlacementOptions {
  std::uint64_t seed = 0x5eed;
  int attempts = 200;
  /// Minimum relative conditioning accepted for the reduced single-input pair.
  double min_margin = 1e-6;
  double verify_tolerance = 1e-6;
};

/// K with spec(A + B K) = {-gamma, ..., -gamma-(d-1)}. Multi-input pairs are
/// reduced to single input: find F, v with (A + B F, B v) controllable, place
/// k for that pair, and return K = F + v k.
inline Matrix place_gain(const Matrix& a, const Matrix& b, double gamma, const PlacementOptions& options = {}) {
  require_square(a, "place_gain");
  require_finite(a, "place_gain");
  require_finite(b, "place_gain");
  if (b.rows() != a.rows()) throw Error(ErrorCode::Dimension, "B must have as many rows as A");
  if (!(gamma >= 1.0) || !std::isfinite(gamma)) throw Error(ErrorCode::InvalidArgument, "gamma must be >= 1");
  const Eigen::Index d = a.rows();
  const Eigen::Index m = b.cols();
  if (d == 0) return Matrix(m, 0);
  if (controllability_rank(a, b) < d) {
    throw Error(ErrorCode::Uncontrollable, "(A, B) has controllability rank " +
                                               std::to_string(controllability_rank(a, b)) + " < " +
                                               std::to_string(d));
  }
  const std::vector<double> poles = target_poles(d, gamma);
  if (detail::spectrum_matches(a, poles, options.verify_tolerance)) return Matrix::Zero(m, d);

  Matrix gain;
  if (m == 1) {
    gain = detail::ackermann(a, b.col(0), poles);
  } else {
    // Candidate reductions: each input column alone, then random (F, v).
    Rng rng(options.seed);
    bool found = false;
    for (int attempt = 0; attempt < static_cast<int>(m) + options.attempts && !found; ++attempt) {
      Matrix f = Matrix::Zero(m, d);
      Vector v = Vector::Zero(m);
      if (attempt < m) {
        v(attempt) = 1.0;
      } else {
        for (Eigen::Index i = 0; i < m; ++i) {
          v(i) = rng.normal();
          for (Eigen::Index j = 0; j < d; ++j) f(i, j) = rng.normal();
        }
      }
      const Matrix af = a + b * f;
      const Vector bv = b * v;
      if (numerical_rank(controllability_matrix(af, bv)) < d) continue;
      if (detail::controllability_margin(af, bv) < options.min_margin) continue;
      gain = f + v * detail::ackermann(af, bv, poles);
      found = true;
    }
    if (!found) throw Error(ErrorCode::Internal, "no single-input reduction found for the multi-input pair");
  }

  const double worst = max_real_part(a + b * gain);
  if (worst > -gamma + options.verify_tolerance * (1.0 + gamma)) {
    throw Error(ErrorCode::SpectrumViolation, "placed spectrum has max real part " + std::to_string(worst) +
                                                  " above -gamma = " + std::to_string(-gamma));
  }
  return gain;
}

struct DecayEnvelope {
  double c_emp = 0.0;  // sup_t |e^{A_cl t}| e^{gamma t} / gamma^D over the grid
  int d_used = 0;
};

/// Empirical constant of |e^{A_cl t}| <= C gamma^D e^{-gamma t} on a uniform
/// grid of `grid` points over [0, t_max], with D = dim A_cl.
inline DecayEnvelope decay_envelope(const Matrix& a_cl, double gamma, double t_max, std::size_t grid) {
  require_square(a_cl, "decay_envelope");
  if (!(gamma > 0.0) || !(t_max >= 0.0) || grid == 0) {
    throw Error(ErrorCode::InvalidArgument, "decay_envelope needs gamma > 0, t_max >= 0, grid >= 1");
  }
  const Eigen::Index d = a_cl.rows();
  if (d > 0 && max_real_part(a_cl) > -gamma + 1e-8) {
    throw Error(ErrorCode::SpectrumViolation, "closed-loop spectrum is not left of -gamma");
  }
  // |e^{A t}| e^{gamma t} = |e^{(A + gamma I) t}|, which stays representable.
  const Matrix shifted = a_cl + gamma * Matrix::Identity(d, d);
  const double denom = std::pow(gamma, static_cast<double>(d));
  double sup = 0.0;
  const std::size_t points = t_max == 0.0 ? 1 : grid;
  for (std::size_t j = 0; j < points; ++j) {
    const double t = points == 1 ? 0.0 : t_max * static_cast<double>(j) / static_cast<double>(points - 1);
    sup = std::max(sup, d == 0 ? 1.0 : operator_norm(expm(shifted, t)));
  }
  return {sup / denom, static_cast<int>(d)};
}

class ControlPlant {
 public:
  const std::vector<Subsystem>& subsystems() const noexcept { return subsystems_; }
  std::size_t modes() const noexcept { return subsystems_.size(); }
  Eigen::Index dimension() const noexcept { return a_hat_.rows(); }
  const Matrix& a_hat() const noexcept { return a_hat_; }
  const Matrix& b_hat(std::size_t i) const { return b_hat_.at(i); }
  const Matrix& projection(std::size_t i) const { return projections_.at(i); }
  Eigen::Index offset(std::size_t i) const { return offsets_.at(i); }

  friend ControlPlant build_plant(std::vector<Subsystem> subsystems);

 private:
  std::vector<Subsystem> subsystems_;
  Matrix a_hat_;
  std::vector<Matrix> b_hat_;
  std::vector<Matrix> projections_;
  std::vector<Eigen::Index> offsets_;
};

inline ControlPlant build_plant(std::vector<Subsystem> subsystems) {
  if (subsystems.empty()) throw Error(ErrorCode::Dimension, "plant needs at least one subsystem");
  ControlPlant plant;
  Eigen::Index d = 0;
  for (std::size_t i = 0; i < subsystems.size(); ++i) {
    const auto& s = subsystems[i];
    if (s.a.rows() != s.a.cols() || s.b.rows() != s.a.rows()) {
      throw Error(ErrorCode::Dimension, "subsystem " + std::to_string(i) + ": A is " + std::to_string(s.a.rows()) +
                                            "x" + std::to_string(s.a.cols()) + ", B is " +
                                            std::to_string(s.b.rows()) + "x" + std::to_string(s.b.cols()));
    }
    require_finite(s.a, "subsystem A");
    require_finite(s.b, "subsystem B");
    plant.offsets_.push_back(d);
    d += s.a.rows();
  }
  if (d == 0) throw Error(ErrorCode::Dimension, "plant has total state dimension 0");
  plant.a_hat_ = Matrix::Zero(d, d);
  for (std::size_t i = 0; i < subsystems.size(); ++i) {
    const auto& s = subsystems[i];
    const Eigen::Index off = plant.offsets_[i];
    const Eigen::Index di = s.a.rows();
    plant.a_hat_.block(off, off, di, di) = s.a;
    Matrix bh = Matrix::Zero(d, s.b.cols());
    bh.middleRows(off, di) = s.b;
    plant.b_hat_.push_back(std::move(bh));
    Matrix p = Matrix::Zero(di, d);
    p.middleCols(off, di) = Matrix::Identity(di, di);
    plant.projections_.push_back(std::move(p));
  }
  plant.subsystems_ = std::move(subsystems);
  return plant;
}

struct GainSet {
  std::vector<Matrix> k;  // m_i x d_i, empty for trivial subsystems
  double gamma = 1.0;
  std::vector<DecayEnvelope> envelopes;
};

struct GainOptions {
  PlacementOptions placement{};
  double envelope_t_max = 10.0;
  std::size_t envelope_grid = 201;
  std::size_t workers = 1;
};

/// Places every nontrivial subsystem at rate gamma. Per-mode syntheses are
/// independent and may run on several workers.
inline GainSet synthesize_gains(const ControlPlant& plant, double gamma, const GainOptions& options = {}) {
  GainSet out;
  out.gamma = gamma;
  out.k.resize(plant.modes());
  out.envelopes.resize(plant.modes());
  parallel_for(plant.modes(), options.workers, [&](std::size_t i) {
    const Subsystem& s = plant.subsystems()[i];
    out.k[i] = place_gain(s.a, s.b, gamma, options.placement);
    if (!s.trivial()) {
      out.envelopes[i] = decay_envelope(s.a + s.b * out.k[i], gamma, options.envelope_t_max, options.envelope_grid);
    }
  });
  return out;
}

/// L_i = A_hat + B_hat_i K_i P_i.
inline GeneratorSet closed_loop_generators(const ControlPlant& plant, const std::vector<Matrix>& gains) {
  if (gains.size() != plant.modes()) {
    throw Error(ErrorCode::Dimension, std::to_string(gains.size()) + " gains for " +
                                          std::to_string(plant.modes()) + " subsystems");
  }
  std::vector<Matrix> generators;
  generators.reserve(plant.modes());
  for (std::size_t i = 0; i < plant.modes(); ++i) {
    const Subsystem& s = plant.subsystems()[i];
    const Matrix& k = gains[i];
    if (k.rows() != s.input_dim() || k.cols() != s.state_dim()) {
      throw Error(ErrorCode::Dimension, "gain " + std::to_string(i) + " is " + std::to_string(k.rows()) + "x" +
                                            std::to_string(k.cols()) + ", expected " +
                                            std::to_string(s.input_dim()) + "x" + std::to_string(s.state_dim()));
    }
    generators.push_back(plant.a_hat() + plant.b_hat(i) * k * plant.projection(i));
  }
  return GeneratorSet(std::move(generators));
}

inline GeneratorSet closed_loop_generators(const ControlPlant& plant, const GainSet& gains) {
  return closed_loop_generators(plant, gains.k);
}

struct StabilizationBudget {
  double gamma_max = 64.0;
  std::size_t n = 64;
  std::size_t trials = 200;
  std::uint64_t seed = 0;
  std::size_t workers = default_workers();
  GainOptions gains{};
};

struct SweepStage {
  double gamma;
  double mean_continuous;   // Monte Carlo mean of lambda_max^c
  double upper_continuous;  // upper 95% confidence bound
  bool accepted;
};

struct StabilizationResult {
  bool achieved = false;
  GainSet gains;  // accepted gains, or the best stage when the budget ran out
  LyapunovReport report;
  StabilityCertificate certificate;
  double achieved_lambda = 0.0;  // upper confidence bound of lambda_max^c
  std::vector<SweepStage> stages;
};

/// Doubling sweep gamma = 1, 2, 4, ... <= gamma_max; accepts the first gamma
/// whose upper confidence bound on lambda_max^c is <= lambda_target.
inline StabilizationResult stabilize_to_rate(const ControlPlant& plant, const SwitchingModel& model,
                                             double lambda_target, const StabilizationBudget& budget = {}) {
  if (plant.modes() != model.modes()) {
    throw Error(ErrorCode::Dimension, "plant has " + std::to_string(plant.modes()) + " subsystems, model has " +
                                          std::to_string(model.modes()) + " modes");
  }
  if (!(budget.gamma_max >= 1.0)) throw Error(ErrorCode::InvalidArgument, "gamma budget must be >= 1");
  if (budget.trials < kMinCertificateTrials) {
    throw Error(ErrorCode::InvalidArgument, "stabilization needs at least " +
                                                std::to_string(kMinCertificateTrials) + " trials per stage");
  }
  for (std::size_t i = 0; i < plant.modes(); ++i) {
    const Subsystem& s = plant.subsystems()[i];
    if (!s.trivial() && controllability_rank(s.a, s.b) < s.state_dim()) {
      throw Error(ErrorCode::Uncontrollable, "subsystem " + std::to_string(i) + " is not controllable");
    }
  }

  StabilizationResult result;
  double best_upper = std::numeric_limits<double>::infinity();
  for (double gamma = 1.0; gamma <= budget.gamma_max; gamma *= 2.0) {
    GainSet gains = synthesize_gains(plant, gamma, budget.gains);
    const GeneratorSet gen = closed_loop_generators(plant, gains);
    const MonteCarloEstimate mc = max_lyap_mc(gen, model, budget.n, budget.trials, budget.seed, budget.workers);
    const double upper = mc.upper_continuous();
    const bool accepted = upper <= lambda_target;
    result.stages.push_back({gamma, mc.mean / mc.mean_dwell, upper, accepted});
    if (upper < best_upper || accepted) {
      best_upper = upper;
      result.gains = std::move(gains);
      result.achieved_lambda = upper;
      const auto n = static_cast<double>(mc.n);
      result.certificate = {classify(mc.mean * n, mc.half_width * n, mc.n), mc.n, mc.trials, mc.mean * n,
                            mc.half_width * n};
    }
    if (accepted) {
      result.achieved = true;
      break;
    }
  }
  ReportOptions report_options;
  report_options.n = budget.n;
  report_options.trials = budget.trials;
  report_options.seed = budget.seed;
  report_options.workers = budget.workers;
  result.report = lyapunov_report(closed_loop_generators(plant, result.gains), model, report_options);
  return result;
}

}  // namespace rswitch
