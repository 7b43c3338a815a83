#pragma once

// Persistent excitation of the {0,1} activity signal alpha(t) = [mode(t) ==
// active]. A signal is (T, mu)-PE when every window [t, t + T] integrates to
// at least mu.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rswitch/error.hpp"
#include "rswitch/switching_model.hpp"

namespace rswitch {

struct PEWindowCheck {
  double window = 0.0;  // T
  double mu = 0.0;
  double horizon = 0.0;
  std::optional<double> violated_at;  // earliest critical start time with integral < mu
  double min_integral = 0.0;          // over all window starts in [0, horizon - T]

  bool passed() const noexcept { return !violated_at.has_value(); }
};

namespace detail {

/// Prefix integrals of alpha at the switch times.
inline std::vector<double> active_prefix(const SwitchPath& path, std::size_t active_mode) {
  std::vector<double> prefix(path.size() + 1, 0.0);
  for (std::size_t k = 0; k < path.size(); ++k) {
    prefix[k + 1] = prefix[k] + (path.step(k).mode == active_mode ? path.step(k).dwell : 0.0);
  }
  return prefix;
}

/// int_0^t alpha, for 0 <= t <= s_n.
inline double active_integral(const SwitchPath& path, const std::vector<double>& prefix, std::size_t active_mode,
                              double t) {
  const auto& s = path.switch_times();
  auto k = static_cast<std::size_t>(std::upper_bound(s.begin(), s.end(), t) - s.begin());
  if (k == 0) return 0.0;
  k -= 1;  // s_k <= t
  if (k >= path.size()) return prefix.back();
  const double partial = path.step(k).mode == active_mode ? t - s[k] : 0.0;
  return prefix[k] + partial;
}

}  // namespace detail

/// Exact check over all window starts t in [0, horizon - T]. The window
/// integral is piecewise linear in t with breakpoints at s_k and s_k - T, so
/// its minimum is attained at one of those points or at an endpoint.
inline PEWindowCheck is_pe_on_horizon(const SwitchPath& path, std::size_t active_mode, double window, double mu,
                                      double horizon) {
  if (!(window > 0.0) || !(mu > 0.0) || mu > window) {
    throw Error(ErrorCode::BadWindow, "need 0 < mu <= T (T = " + std::to_string(window) +
                                          ", mu = " + std::to_string(mu) + ")");
  }
  if (!(horizon > 0.0) || horizon > path.horizon()) {
    throw Error(ErrorCode::HorizonExceeded, "horizon " + std::to_string(horizon) + " outside (0, " +
                                                std::to_string(path.horizon()) + "]");
  }
  if (window > horizon) {
    throw Error(ErrorCode::BadWindow, "window length exceeds the horizon; no window fits");
  }
  const double last_start = horizon - window;
  std::vector<double> starts{0.0, last_start};
  for (double s : path.switch_times()) {
    if (s <= last_start) starts.push_back(s);
    if (s - window >= 0.0 && s - window <= last_start) starts.push_back(s - window);
  }
  std::sort(starts.begin(), starts.end());
  starts.erase(std::unique(starts.begin(), starts.end()), starts.end());

  const std::vector<double> prefix = detail::active_prefix(path, active_mode);
  PEWindowCheck out{window, mu, horizon, std::nullopt, std::numeric_limits<double>::infinity()};
  // Integrals are differences of prefix sums; rounding must not count as a violation.
  const double slack = 1e-12 * std::max(1.0, horizon);
  for (double t : starts) {
    const double integral = detail::active_integral(path, prefix, active_mode, t + window) -
                            detail::active_integral(path, prefix, active_mode, t);
    out.min_integral = std::min(out.min_integral, integral);
    if (integral < mu - slack && !out.violated_at) out.violated_at = t;
  }
  return out;
}

/// (1/horizon) int_0^horizon alpha.
inline double empirical_pe_average(const SwitchPath& path, std::size_t active_mode, double horizon) {
  return occupation_fraction(path, horizon, active_mode);
}

/// Long-run average of alpha_1 for the two-mode alternating model:
/// tau_1 / (tau_1 + tau_2).
inline double asymptotic_pe_constant(const SwitchingModel& model) {
  if (model.modes() != 2) {
    throw Error(ErrorCode::ModelShape, "asymptotic PE constant needs exactly 2 modes, got " +
                                           std::to_string(model.modes()));
  }
  const Matrix& m = model.transition();
  if (std::abs(m(0, 0)) > 1e-12 || std::abs(m(1, 1)) > 1e-12 || std::abs(m(0, 1) - 1.0) > 1e-12 ||
      std::abs(m(1, 0) - 1.0) > 1e-12) {
    throw Error(ErrorCode::ModelShape, "asymptotic PE constant needs the alternating chain [[0,1],[1,0]]");
  }
  const double tau1 = model.dwell(0).mean();
  const double tau2 = model.dwell(1).mean();
  return tau1 / (tau1 + tau2);
}

}  // namespace rswitch
