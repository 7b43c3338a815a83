#pragma once

// Random switching signals: an irreducible embedded Markov chain on N modes
// with transition matrix M, and a dwell-time law per mode. A sample is the
// sequence (i_k, t_k) of visited modes and the time spent in each.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <queue>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rswitch/error.hpp"
#include "rswitch/linalg.hpp"
#include "rswitch/rng.hpp"

namespace rswitch {

class DwellDistribution {
 public:
  enum class Kind { Dirac, Exponential, Uniform, LogNormal };

  static DwellDistribution dirac(double value) { return {Kind::Dirac, value, 0.0}; }
  static DwellDistribution exponential(double rate) { return {Kind::Exponential, rate, 0.0}; }
  static DwellDistribution uniform(double lo, double hi) { return {Kind::Uniform, lo, hi}; }
  /// exp(N(location, scale^2)).
  static DwellDistribution log_normal(double location, double scale) {
    return {Kind::LogNormal, location, scale};
  }

  Kind kind() const noexcept { return kind_; }
  double first() const noexcept { return a_; }
  double second() const noexcept { return b_; }

  std::vector<double> params() const {
    if (kind_ == Kind::Dirac || kind_ == Kind::Exponential) return {a_};
    return {a_, b_};
  }

  /// Throws BadDwellParameter unless the law lives on (0, inf) with finite mean.
  void validate() const {
    auto bad = [&](const std::string& why) {
      throw Error(ErrorCode::BadDwellParameter, std::string(name()) + ": " + why);
    };
    if (!std::isfinite(a_) || !std::isfinite(b_)) bad("non-finite parameter");
    switch (kind_) {
      case Kind::Dirac:
        if (a_ <= 0.0) bad("value must be positive");
        break;
      case Kind::Exponential:
        if (a_ <= 0.0) bad("rate must be positive");
        break;
      case Kind::Uniform:
        if (a_ <= 0.0 || b_ <= a_) bad("requires 0 < a < b");
        break;
      case Kind::LogNormal:
        if (b_ <= 0.0) bad("scale must be positive");
        break;
    }
  }

  double mean() const noexcept {
    switch (kind_) {
      case Kind::Dirac: return a_;
      case Kind::Exponential: return 1.0 / a_;
      case Kind::Uniform: return 0.5 * (a_ + b_);
      case Kind::LogNormal: return std::exp(a_ + 0.5 * b_ * b_);
    }
    return 0.0;
  }

  double sample(Rng& rng) const noexcept {
    switch (kind_) {
      case Kind::Dirac: return a_;
      case Kind::Exponential: return rng.exponential(a_);
      case Kind::Uniform: return a_ + (b_ - a_) * rng.uniform();
      case Kind::LogNormal: return std::exp(a_ + b_ * rng.normal());
    }
    return a_;
  }

  /// True when the law charges every interval (T, inf); such inactive dwells
  /// rule out persistent excitation almost surely.
  bool unbounded() const noexcept { return kind_ == Kind::Exponential || kind_ == Kind::LogNormal; }

  std::string_view name() const noexcept {
    switch (kind_) {
      case Kind::Dirac: return "dirac";
      case Kind::Exponential: return "exponential";
      case Kind::Uniform: return "uniform";
      case Kind::LogNormal: return "lognormal";
    }
    return "unknown";
  }

  friend bool operator==(const DwellDistribution&, const DwellDistribution&) = default;

 private:
  DwellDistribution(Kind kind, double a, double b) : kind_(kind), a_(a), b_(b) {}

  Kind kind_;
  double a_;
  double b_;
};

inline constexpr double kRowSumTolerance = 1e-9;
inline constexpr double kPositiveEntryThreshold = 1e-14;

/// Strong connectivity of the graph {i -> j : M_ij > threshold}, by two
/// breadth-first searches from mode 0 (forward and reversed edges).
inline bool is_irreducible(const Matrix& m) {
  const Eigen::Index n = m.rows();
  if (n == 0) return false;
  auto reaches_all = [&](bool reversed) {
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::queue<Eigen::Index> frontier;
    frontier.push(0);
    seen[0] = 1;
    Eigen::Index count = 1;
    while (!frontier.empty()) {
      const Eigen::Index i = frontier.front();
      frontier.pop();
      for (Eigen::Index j = 0; j < n; ++j) {
        const double w = reversed ? m(j, i) : m(i, j);
        if (w > kPositiveEntryThreshold && !seen[static_cast<std::size_t>(j)]) {
          seen[static_cast<std::size_t>(j)] = 1;
          ++count;
          frontier.push(j);
        }
      }
    }
    return count == n;
  };
  return reaches_all(false) && reaches_all(true);
}

namespace detail {

inline void check_stochastic(const Matrix& m) {
  require_square(m, "transition matrix");
  if (m.rows() == 0) throw Error(ErrorCode::Dimension, "transition matrix is empty");
  require_finite(m, "transition matrix");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if ((m.row(i).array() < 0.0).any()) {
      throw Error(ErrorCode::RowSum, "row " + std::to_string(i) + " has a negative entry");
    }
    const double s = m.row(i).sum();
    if (std::abs(s - 1.0) > kRowSumTolerance) {
      throw Error(ErrorCode::RowSum,
                  "row " + std::to_string(i) + " sums to " + std::to_string(s) + ", expected 1");
    }
  }
}

}  // namespace detail

/// Unique p with pM = p and sum(p) = 1. Dense solve of (M^T - I)x = 0 with one
/// equation replaced by the normalization, plus one refinement step; for large
/// chains, power iteration on the lazy chain (M + I)/2.
inline Vector invariant_vector(const Matrix& m) {
  detail::check_stochastic(m);
  if (!is_irreducible(m)) throw Error(ErrorCode::NotIrreducible, "transition graph is not strongly connected");
  const Eigen::Index n = m.rows();
  Vector p;
  if (n <= 64) {
    Matrix sys = m.transpose() - Matrix::Identity(n, n);
    sys.row(n - 1).setOnes();
    Vector rhs = Vector::Zero(n);
    rhs(n - 1) = 1.0;
    const auto lu = sys.fullPivLu();
    p = lu.solve(rhs);
    p += lu.solve(rhs - sys * p);
  } else {
    const Matrix lazy = 0.5 * (m + Matrix::Identity(n, n));
    p = Vector::Constant(n, 1.0 / static_cast<double>(n));
    for (int it = 0; it < 1'000'000; ++it) {
      Vector next = lazy.transpose() * p;
      next /= next.sum();
      const double change = (next - p).cwiseAbs().maxCoeff();
      p = std::move(next);
      if (change < 1e-16) break;
    }
  }
  p = p.cwiseMax(0.0);
  p /= p.sum();
  return p;
}

class SwitchingModel {
 public:
  std::size_t modes() const noexcept { return static_cast<std::size_t>(transition_.rows()); }
  const Matrix& transition() const noexcept { return transition_; }
  const std::vector<DwellDistribution>& dwell() const noexcept { return dwell_; }
  const DwellDistribution& dwell(std::size_t i) const { return dwell_.at(i); }
  /// Invariant probability vector p of the embedded chain.
  const Vector& invariant() const noexcept { return invariant_; }

  friend SwitchingModel validate_model(std::size_t n, Matrix transition,
                                       std::vector<DwellDistribution> dwell);

 private:
  SwitchingModel(Matrix m, std::vector<DwellDistribution> d, Vector p)
      : transition_(std::move(m)), dwell_(std::move(d)), invariant_(std::move(p)) {
    cumulative_.resize(modes());
    for (std::size_t i = 0; i < modes(); ++i) {
      auto& row = cumulative_[i];
      row.resize(modes());
      double acc = 0.0;
      for (std::size_t j = 0; j < modes(); ++j) {
        acc += transition_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        row[j] = acc;
      }
    }
    initial_cumulative_.resize(modes());
    double acc = 0.0;
    for (std::size_t j = 0; j < modes(); ++j) {
      acc += invariant_(static_cast<Eigen::Index>(j));
      initial_cumulative_[j] = acc;
    }
  }

  static std::size_t pick(const std::vector<double>& cumulative, double u) {
    // Rows are normalized only to 1e-9; scale u onto the actual total mass.
    const double target = u * cumulative.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    auto idx = static_cast<std::size_t>(it - cumulative.begin());
    idx = std::min(idx, cumulative.size() - 1);
    // Skip zero-probability modes that an exact hit on a boundary could select.
    while (idx > 0 && cumulative[idx] == cumulative[idx - 1]) --idx;
    return idx;
  }

 public:
  std::size_t sample_initial(Rng& rng) const { return pick(initial_cumulative_, rng.uniform()); }
  std::size_t sample_next(std::size_t from, Rng& rng) const {
    return pick(cumulative_[from], rng.uniform());
  }

 private:
  Matrix transition_;
  std::vector<DwellDistribution> dwell_;
  Vector invariant_;
  std::vector<std::vector<double>> cumulative_;
  std::vector<double> initial_cumulative_;
};

inline SwitchingModel validate_model(std::size_t n, Matrix transition,
                                     std::vector<DwellDistribution> dwell) {
  if (n == 0) throw Error(ErrorCode::Dimension, "model needs at least one mode");
  if (transition.rows() != static_cast<Eigen::Index>(n) || transition.cols() != static_cast<Eigen::Index>(n)) {
    throw Error(ErrorCode::Dimension, "transition matrix must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (dwell.size() != n) {
    throw Error(ErrorCode::Dimension, "expected " + std::to_string(n) + " dwell distributions, got " +
                                          std::to_string(dwell.size()));
  }
  for (const auto& d : dwell) d.validate();
  Vector p = invariant_vector(transition);
  return SwitchingModel(std::move(transition), std::move(dwell), std::move(p));
}

/// m = sum_i p_i tau_i, the mean time between switches.
inline double mean_dwell(const SwitchingModel& model) {
  double m = 0.0;
  for (std::size_t i = 0; i < model.modes(); ++i) {
    m += model.invariant()(static_cast<Eigen::Index>(i)) * model.dwell(i).mean();
  }
  return m;
}

struct SwitchStep {
  std::size_t mode;
  double dwell;

  friend bool operator==(const SwitchStep&, const SwitchStep&) = default;
};

/// Finite prefix of a switching sequence. Indices are 0-based: step(k) is the
/// (k+1)-th visited mode, switch_time(k) is s_k with s_0 = 0.
class SwitchPath {
 public:
  SwitchPath() : switch_times_{0.0} {}

  explicit SwitchPath(std::vector<SwitchStep> steps) : steps_(std::move(steps)) {
    switch_times_.reserve(steps_.size() + 1);
    switch_times_.push_back(0.0);
    double s = 0.0;
    for (const auto& st : steps_) {
      if (!(st.dwell > 0.0) || !std::isfinite(st.dwell)) {
        throw Error(ErrorCode::InvalidArgument, "dwell times must be positive and finite");
      }
      s += st.dwell;
      switch_times_.push_back(s);
    }
  }

  std::size_t size() const noexcept { return steps_.size(); }
  bool empty() const noexcept { return steps_.empty(); }
  const SwitchStep& step(std::size_t k) const { return steps_.at(k); }
  const std::vector<SwitchStep>& steps() const noexcept { return steps_; }
  double switch_time(std::size_t k) const { return switch_times_.at(k); }
  const std::vector<double>& switch_times() const noexcept { return switch_times_; }
  double horizon() const noexcept { return switch_times_.back(); }

  friend bool operator==(const SwitchPath& a, const SwitchPath& b) { return a.steps_ == b.steps_; }

 private:
  std::vector<SwitchStep> steps_;
  std::vector<double> switch_times_;
};

/// i_1 ~ p, i_{k+1} ~ M(i_k, .), t_k ~ mu_{i_k}; a pure function of the seed.
inline SwitchPath sample_path(const SwitchingModel& model, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "sample_path needs n >= 1");
  Rng rng(seed);
  std::vector<SwitchStep> steps;
  steps.reserve(n);
  std::size_t mode = model.sample_initial(rng);
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0) mode = model.sample_next(mode, rng);
    steps.push_back({mode, model.dwell(mode).sample(rng)});
  }
  return SwitchPath(std::move(steps));
}

/// Discrete shift: drops the first m steps and re-bases time at s_m.
inline SwitchPath shift(const SwitchPath& path, std::size_t m) {
  if (m == 0) return path;
  if (m >= path.size()) {
    throw Error(ErrorCode::OutOfRange, "shift by " + std::to_string(m) + " on a path of length " +
                                           std::to_string(path.size()));
  }
  return SwitchPath(std::vector<SwitchStep>(path.steps().begin() + static_cast<std::ptrdiff_t>(m),
                                            path.steps().end()));
}

/// Mode active at time t; right-continuous, so t = s_k already returns step k.
inline std::size_t signal_at(const SwitchPath& path, double t) {
  if (!(t >= 0.0) || !(t < path.horizon())) {
    throw Error(ErrorCode::HorizonExceeded,
                "time " + std::to_string(t) + " outside [0, " + std::to_string(path.horizon()) + ")");
  }
  const auto& s = path.switch_times();
  const auto it = std::upper_bound(s.begin(), s.end(), t);
  return path.step(static_cast<std::size_t>(it - s.begin()) - 1).mode;
}

/// Time spent in `mode` during [0, horizon], per step index up to the horizon.
inline double active_time(const SwitchPath& path, double horizon, std::size_t mode) {
  const auto& s = path.switch_times();
  double total = 0.0;
  for (std::size_t k = 0; k < path.size() && s[k] < horizon; ++k) {
    if (path.step(k).mode == mode) total += std::min(s[k + 1], horizon) - s[k];
  }
  return total;
}

inline double occupation_fraction(const SwitchPath& path, double horizon, std::size_t mode) {
  if (!(horizon > 0.0) || horizon > path.horizon()) {
    throw Error(ErrorCode::HorizonExceeded,
                "horizon " + std::to_string(horizon) + " outside (0, " + std::to_string(path.horizon()) + "]");
  }
  return active_time(path, horizon, mode) / horizon;
}

/// Limit of occupation_fraction: p_i tau_i / m.
inline Vector expected_occupation(const SwitchingModel& model) {
  const double m = mean_dwell(model);
  Vector out(static_cast<Eigen::Index>(model.modes()));
  for (std::size_t i = 0; i < model.modes(); ++i) {
    out(static_cast<Eigen::Index>(i)) = model.invariant()(static_cast<Eigen::Index>(i)) * model.dwell(i).mean() / m;
  }
  return out;
}

}  // namespace rswitch
