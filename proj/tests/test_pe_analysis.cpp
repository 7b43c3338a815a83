#include <catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "rswitch/pe_analysis.hpp"

using namespace rswitch;
using Catch::Matchers::WithinAbs;

namespace {

using D = DwellDistribution;

SwitchingModel alternating(D first, D second) {
  return validate_model(2, from_row_major(2, 2, {0, 1, 1, 0}), {first, second});
}

/// Path starting in `first` that strictly alternates.
SwitchPath alternating_path(std::size_t first, double d0, double d1, std::size_t steps) {
  std::vector<SwitchStep> s;
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t mode = (first + k) % 2;
    s.push_back({mode, mode == 0 ? d0 : d1});
  }
  return SwitchPath(std::move(s));
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Internal;
}

}  // namespace

TEST_CASE("is_pe_on_horizon examples") {
  const SwitchingModel single = validate_model(1, Matrix::Ones(1, 1), {D::exponential(1)});
  const SwitchPath always = sample_path(single, 100, 1);
  for (double mu : {0.1, 1.0, 2.0}) CHECK(is_pe_on_horizon(always, 0, 2.0, mu, always.horizon()).passed());

  for (std::size_t first : {0, 1}) {
    const SwitchPath p = alternating_path(first, 1.0, 1.0, 40);
    const PEWindowCheck c = is_pe_on_horizon(p, 0, 2.0, 1.0, 40.0);
    CHECK(c.passed());
    CHECK_THAT(c.min_integral, WithinAbs(1.0, 1e-12));
  }

  const SwitchPath q = alternating_path(0, 1.0, 3.0, 40);
  const PEWindowCheck v = is_pe_on_horizon(q, 0, 2.0, 0.5, q.horizon());
  REQUIRE_FALSE(v.passed());
  const double t = *v.violated_at;
  // The window starting at the reported time integrates to less than mu.
  CHECK(oracle::window_integral_quadrature([&](double s) { return signal_at(q, s) == 0; }, t, 2.0) < 0.5);
  CHECK(t <= 1.0);
  CHECK(v.min_integral == 0.0);
}

TEST_CASE("is_pe_on_horizon argument checks") {
  const SwitchPath p = alternating_path(0, 1.0, 1.0, 10);
  CHECK(code_of([&] { is_pe_on_horizon(p, 0, 1.0, 1.5, 5.0); }) == ErrorCode::BadWindow);
  CHECK(code_of([&] { is_pe_on_horizon(p, 0, 1.0, 0.0, 5.0); }) == ErrorCode::BadWindow);
  CHECK(code_of([&] { is_pe_on_horizon(p, 0, 6.0, 1.0, 5.0); }) == ErrorCode::BadWindow);
  CHECK(code_of([&] { is_pe_on_horizon(p, 0, 1.0, 0.5, 11.0); }) == ErrorCode::HorizonExceeded);
  CHECK(is_pe_on_horizon(p, 0, 1.0, 1.0, 10.0).violated_at.has_value());
  CHECK(is_pe_on_horizon(p, 0, 5.0, 2.0, 5.0).passed());
}

TEST_CASE("exact window check agrees with brute-force window scanning") {
  const SwitchingModel model = validate_model(3, from_row_major(3, 3, {0.2, 0.3, 0.5, 0.5, 0, 0.5, 0.4, 0.4, 0.2}),
                                              {D::exponential(1), D::uniform(0.2, 1.0), D::dirac(0.4)});
  int violations = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const SwitchPath path = sample_path(model, 40, seed);
    const double horizon = 0.9 * path.horizon();
    const double window = 3.0;
    const PEWindowCheck check = is_pe_on_horizon(path, 0, window, 0.3, horizon);
    // Fine scan of window starts; integrals by quadrature of the indicator.
    auto active = [&](double s) { return signal_at(path, s) == 0; };
    double brute_min = INFINITY;
    const int starts = 300;
    for (int j = 0; j <= starts; ++j) {
      const double t = (horizon - window) * j / starts;
      brute_min = std::min(brute_min, oracle::window_integral_quadrature(active, t, window, 3000));
    }
    CHECK(check.min_integral <= brute_min + 5e-3);
    CHECK(check.min_integral >= brute_min - (horizon - window) / starts - 5e-3);
    if (!check.passed()) {
      ++violations;
      const double t = *check.violated_at;
      CHECK(t >= 0.0);
      CHECK(t <= horizon - window + 1e-12);
      CHECK(oracle::window_integral_quadrature(active, t, window, 4000) < 0.3 + 1e-3);
    }
  }
  CHECK(violations > 0);
  CHECK(violations < 30);
}

TEST_CASE("periodic Dirac signals are PE on every horizon") {
  // Active 1, inactive 1.5, T = 3: the worst window covers one whole
  // inactive block and still holds a full active block.
  const double active = 1.0;
  const double inactive = 1.5;
  const double window = 3.0;
  const double mu = 1.0;
  for (std::size_t first : {0, 1}) {
    const SwitchPath p = alternating_path(first, active, inactive, 400);
    for (double horizon : {3.0, 10.0, 57.3, 499.0}) {
      const PEWindowCheck c = is_pe_on_horizon(p, 0, window, mu, horizon);
      CHECK(c.passed());
      CHECK(c.min_integral >= mu - 1e-9);
    }
  }
}

TEST_CASE("PE pass rate falls with the horizon under unbounded inactive dwells") {
  const SwitchingModel model = alternating(D::uniform(0.5, 1.5), D::exponential(1.0));
  std::vector<double> pass_rate;
  for (double horizon : {50.0, 200.0, 800.0}) {
    int pass = 0;
    const int paths = 1000;
    for (int j = 0; j < paths; ++j) {
      const SwitchPath path = sample_path(model, 1000, derive_seed(17, static_cast<std::uint64_t>(j)));
      if (is_pe_on_horizon(path, 0, 4.0, 0.5, horizon).passed()) ++pass;
    }
    pass_rate.push_back(static_cast<double>(pass) / paths);
  }
  CHECK(pass_rate[0] > pass_rate[1]);
  CHECK(pass_rate[1] > pass_rate[2]);
}

TEST_CASE("asymptotic_pe_constant examples") {
  CHECK_THAT(asymptotic_pe_constant(alternating(D::dirac(1), D::dirac(1))), WithinAbs(0.5, 1e-15));
  CHECK_THAT(asymptotic_pe_constant(alternating(D::dirac(1), D::dirac(3))), WithinAbs(0.25, 1e-15));
  CHECK_THAT(asymptotic_pe_constant(alternating(D::exponential(1), D::uniform(1, 3))), WithinAbs(1.0 / 3.0, 1e-15));

  const SwitchingModel m = alternating(D::exponential(2), D::log_normal(0.1, 0.3));
  CHECK_THAT(asymptotic_pe_constant(m), WithinAbs(expected_occupation(m)(0), 1e-15));

  CHECK(code_of([] {
          asymptotic_pe_constant(validate_model(1, Matrix::Ones(1, 1), {D::dirac(1)}));
        }) == ErrorCode::ModelShape);
  CHECK(code_of([] {
          asymptotic_pe_constant(validate_model(2, from_row_major(2, 2, {0.5, 0.5, 1, 0}), {D::dirac(1), D::dirac(1)}));
        }) == ErrorCode::ModelShape);
}

TEST_CASE("empirical_pe_average examples") {
  const SwitchingModel single = validate_model(1, Matrix::Ones(1, 1), {D::uniform(1, 2)});
  const SwitchPath always = sample_path(single, 20, 2);
  CHECK(empirical_pe_average(always, 0, always.horizon()) == 1.0);

  for (std::size_t first : {0, 1}) {
    const SwitchPath p = alternating_path(first, 1.0, 1.0, 60);
    for (double k : {1.0, 7.0, 30.0}) CHECK_THAT(empirical_pe_average(p, 0, 2 * k), WithinAbs(0.5, 1e-15));
  }

  const SwitchingModel expo = alternating(D::exponential(1), D::exponential(0.5));
  const double m = mean_dwell(expo);
  const SwitchPath long_path = sample_path(expo, 30'000, 5);
  CHECK(std::abs(empirical_pe_average(long_path, 0, 1e4 * m) - asymptotic_pe_constant(expo)) <= 0.01);

  CHECK(code_of([&] { empirical_pe_average(always, 0, always.horizon() + 1); }) == ErrorCode::HorizonExceeded);
}

TEST_CASE("empirical average equals the occupation fraction") {
  const SwitchingModel model = validate_model(3, from_row_major(3, 3, {0, 0.5, 0.5, 0.5, 0, 0.5, 0.5, 0.5, 0}),
                                              {D::exponential(1), D::uniform(0.2, 1.0), D::log_normal(0, 0.5)});
  Rng probe(9);
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const SwitchPath path = sample_path(model, 100, seed);
    const double horizon = path.horizon() * probe.uniform();
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(std::abs(empirical_pe_average(path, i, horizon) - occupation_fraction(path, horizon, i)) <= 1e-12);
    }
  }
}
