#pragma once

// Solutions of x' = L_{alpha(t)} x along a switching path. Between switches
// the flow is an exact matrix exponential, so the discrete-time map is the
// ordered product Phi(n) = e^{L_{i_n} t_n} ... e^{L_{i_1} t_1}. Products and
// state vectors are carried as (unit-norm core, log scale) so exponents of
// any practical size stay representable.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rswitch/error.hpp"
#include "rswitch/linalg.hpp"
#include "rswitch/switching_model.hpp"

namespace rswitch {

/// The per-mode generators L_1..L_N, all d x d.
class GeneratorSet {
 public:
  GeneratorSet() = default;

  explicit GeneratorSet(std::vector<Matrix> generators) : generators_(std::move(generators)) {
    if (generators_.empty()) throw Error(ErrorCode::Dimension, "generator set is empty");
    dimension_ = static_cast<std::size_t>(generators_.front().rows());
    for (std::size_t i = 0; i < generators_.size(); ++i) {
      const auto& g = generators_[i];
      require_square(g, "generator");
      require_finite(g, "generator");
      if (static_cast<std::size_t>(g.rows()) != dimension_) {
        throw Error(ErrorCode::Dimension, "generator " + std::to_string(i) + " is " +
                                              std::to_string(g.rows()) + "x" + std::to_string(g.cols()) +
                                              ", expected dimension " + std::to_string(dimension_));
      }
    }
  }

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return generators_.size(); }
  const Matrix& operator[](std::size_t i) const { return generators_.at(i); }
  const std::vector<Matrix>& matrices() const noexcept { return generators_; }

 private:
  std::vector<Matrix> generators_;
  std::size_t dimension_ = 0;
};

struct ScaledMatrix {
  Matrix core;  // operator norm 1, or exactly zero
  double log_scale = 0.0;

  Matrix value() const { return std::exp(log_scale) * core; }
};

struct ScaledVector {
  Vector direction;  // Euclidean norm 1
  double log_norm = 0.0;

  Vector value() const { return std::exp(log_norm) * direction; }
};

/// Evaluates e^{L_i t} for path steps. Remembers the last exponential per
/// mode, which removes almost all work for Dirac dwell laws.
class StepPropagator {
 public:
  explicit StepPropagator(const GeneratorSet& gen) : gen_(&gen), cache_(gen.size()) {}

  const Matrix& operator()(const SwitchStep& step) {
    if (step.mode >= gen_->size()) {
      throw Error(ErrorCode::Dimension, "path visits mode " + std::to_string(step.mode) + " but only " +
                                            std::to_string(gen_->size()) + " generators are defined");
    }
    auto& slot = cache_[step.mode];
    if (!slot.valid || std::bit_cast<std::uint64_t>(slot.dwell) != std::bit_cast<std::uint64_t>(step.dwell)) {
      slot.exp = expm((*gen_)[step.mode], step.dwell);
      slot.dwell = step.dwell;
      slot.valid = true;
    }
    return slot.exp;
  }

 private:
  struct Slot {
    bool valid = false;
    double dwell = 0.0;
    Matrix exp;
  };
  const GeneratorSet* gen_;
  std::vector<Slot> cache_;
};

namespace detail {

inline void check_steps(const SwitchPath& path, std::size_t n) {
  if (n > path.size()) {
    throw Error(ErrorCode::OutOfRange, "requested " + std::to_string(n) + " steps on a path of length " +
                                           std::to_string(path.size()));
  }
}

inline void absorb(ScaledMatrix& acc, const Matrix& factor) {
  acc.core = factor * acc.core;
  const double norm = operator_norm(acc.core);
  if (norm == 0.0) {
    acc.core.setZero();
    acc.log_scale = -std::numeric_limits<double>::infinity();
    return;
  }
  acc.core /= norm;
  acc.log_scale += std::log(norm);
}

inline void absorb(ScaledVector& acc, const Matrix& factor) {
  acc.direction = factor * acc.direction;
  const double norm = acc.direction.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(ErrorCode::Internal, "state vector degenerated during propagation");
  }
  acc.direction /= norm;
  acc.log_norm += std::log(norm);
}

inline ScaledVector normalized(const Vector& x0) {
  if (!x0.allFinite()) throw Error(ErrorCode::NonFinite, "initial state has a non-finite entry");
  const double norm = x0.norm();
  if (norm == 0.0) throw Error(ErrorCode::ZeroInitialState, "initial state is zero");
  return {x0 / norm, std::log(norm)};
}

inline void check_state(const GeneratorSet& gen, const Vector& x0) {
  if (static_cast<std::size_t>(x0.size()) != gen.dimension()) {
    throw Error(ErrorCode::Dimension, "initial state has dimension " + std::to_string(x0.size()) +
                                          ", generators have " + std::to_string(gen.dimension()));
  }
}

}  // namespace detail

/// Phi(n, omega), renormalized after every factor.
inline ScaledMatrix cocycle_matrix(const GeneratorSet& gen, const SwitchPath& path, std::size_t n) {
  detail::check_steps(path, n);
  const auto d = static_cast<Eigen::Index>(gen.dimension());
  ScaledMatrix acc{Matrix::Identity(d, d), 0.0};
  StepPropagator step_exp(gen);
  for (std::size_t k = 0; k < n; ++k) detail::absorb(acc, step_exp(path.step(k)));
  return acc;
}

inline ScaledVector propagate_discrete(const GeneratorSet& gen, const SwitchPath& path, const Vector& x0,
                                       std::size_t n) {
  detail::check_state(gen, x0);
  detail::check_steps(path, n);
  ScaledVector acc = detail::normalized(x0);
  StepPropagator step_exp(gen);
  for (std::size_t k = 0; k < n; ++k) detail::absorb(acc, step_exp(path.step(k)));
  return acc;
}

/// x_n = Phi(n, omega) x0, applied factor by factor to the vector.
inline Vector flow_discrete(const GeneratorSet& gen, const SwitchPath& path, const Vector& x0, std::size_t n) {
  detail::check_state(gen, x0);
  detail::check_steps(path, n);
  if (n == 0 || x0.isZero(0.0)) return x0;
  return propagate_discrete(gen, path, x0, n).value();
}

/// phi_rc(t) = e^{L_{i_k}(t - s_{k-1})} x_{k-1} for t in (s_{k-1}, s_k].
inline ScaledVector propagate_continuous(const GeneratorSet& gen, const SwitchPath& path, const Vector& x0,
                                         double t) {
  detail::check_state(gen, x0);
  if (!(t >= 0.0) || t > path.horizon()) {
    throw Error(ErrorCode::HorizonExceeded,
                "time " + std::to_string(t) + " outside [0, " + std::to_string(path.horizon()) + "]");
  }
  ScaledVector acc = detail::normalized(x0);
  if (t == 0.0) return acc;
  const auto& s = path.switch_times();
  // First k >= 1 with s_k >= t.
  const auto k = static_cast<std::size_t>(std::lower_bound(s.begin() + 1, s.end(), t) - s.begin());
  StepPropagator step_exp(gen);
  for (std::size_t j = 0; j + 1 < k; ++j) detail::absorb(acc, step_exp(path.step(j)));
  const SwitchStep& last = path.step(k - 1);
  if (t == s[k]) {
    detail::absorb(acc, step_exp(last));
  } else {
    detail::absorb(acc, expm(gen[last.mode], t - s[k - 1]));
  }
  return acc;
}

inline Vector flow_continuous(const GeneratorSet& gen, const SwitchPath& path, const Vector& x0, double t) {
  if (t == 0.0 || x0.isZero(0.0)) {
    detail::check_state(gen, x0);
    if (!(t >= 0.0) || t > path.horizon()) {
      throw Error(ErrorCode::HorizonExceeded, "time " + std::to_string(t) + " outside the path horizon");
    }
    return x0;
  }
  return propagate_continuous(gen, path, x0, t).value();
}

/// (1/n) log(|phi_rd(n; x0)| / |x0|).
inline double lyap_estimate_discrete(const GeneratorSet& gen, const SwitchPath& path, const Vector& x0,
                                     std::size_t n) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "discrete estimate needs n >= 1");
  return (propagate_discrete(gen, path, x0, n).log_norm - std::log(x0.norm())) / static_cast<double>(n);
}

/// (1/t) log(|phi_rc(t; x0)| / |x0|).
inline double lyap_estimate_continuous(const GeneratorSet& gen, const SwitchPath& path, const Vector& x0,
                                       double t) {
  if (!(t > 0.0)) throw Error(ErrorCode::InvalidArgument, "continuous estimate needs t > 0");
  return (propagate_continuous(gen, path, x0, t).log_norm - std::log(x0.norm())) / t;
}

}  // namespace rswitch
