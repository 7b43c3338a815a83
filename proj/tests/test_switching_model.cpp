#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <set>

#include "oracles.hpp"
#include "rswitch/switching_model.hpp"

using namespace rswitch;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

using D = DwellDistribution;

Matrix rows2(double a, double b, double c, double d) { return from_row_major(2, 2, {a, b, c, d}); }

SwitchingModel alternating(D first, D second) { return validate_model(2, rows2(0, 1, 1, 0), {first, second}); }

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Internal;
}

}  // namespace

TEST_CASE("validate_model examples") {
  const SwitchingModel m = alternating(D::dirac(1), D::exponential(2));
  CHECK_THAT(m.invariant()(0), WithinAbs(0.5, 1e-15));
  CHECK_THAT(m.invariant()(1), WithinAbs(0.5, 1e-15));

  CHECK(code_of([] { validate_model(2, Matrix::Identity(2, 2), {D::dirac(1), D::dirac(1)}); }) ==
        ErrorCode::NotIrreducible);
  CHECK(code_of([] { validate_model(2, rows2(0.5, 0.4, 1, 0), {D::dirac(1), D::dirac(1)}); }) ==
        ErrorCode::RowSum);
}

TEST_CASE("validate_model rejects malformed input") {
  CHECK(code_of([] { validate_model(2, rows2(0, 1, 1, 0), {D::dirac(0), D::dirac(1)}); }) ==
        ErrorCode::BadDwellParameter);
  CHECK(code_of([] { validate_model(2, rows2(0, 1, 1, 0), {D::exponential(-1), D::dirac(1)}); }) ==
        ErrorCode::BadDwellParameter);
  CHECK(code_of([] { validate_model(2, rows2(0, 1, 1, 0), {D::uniform(2, 1), D::dirac(1)}); }) ==
        ErrorCode::BadDwellParameter);
  CHECK(code_of([] { validate_model(2, rows2(0, 1, 1, 0), {D::uniform(0, 1), D::dirac(1)}); }) ==
        ErrorCode::BadDwellParameter);
  CHECK(code_of([] { validate_model(2, rows2(0, 1, 1, 0), {D::log_normal(0, 0), D::dirac(1)}); }) ==
        ErrorCode::BadDwellParameter);
  CHECK(code_of([] { validate_model(2, rows2(0, 1, 1, 0), {D::dirac(1)}); }) == ErrorCode::Dimension);
  CHECK(code_of([] { validate_model(3, rows2(0, 1, 1, 0), {D::dirac(1), D::dirac(1), D::dirac(1)}); }) ==
        ErrorCode::Dimension);
  CHECK(code_of([] { validate_model(0, Matrix(0, 0), {}); }) == ErrorCode::Dimension);
  CHECK(code_of([] { validate_model(2, rows2(1.5, -0.5, 1, 0), {D::dirac(1), D::dirac(1)}); }) !=
        ErrorCode::Internal);
  // Row sums within 1e-9 are accepted.
  CHECK_NOTHROW(validate_model(2, rows2(0.3, 0.7 + 5e-10, 1, 0), {D::dirac(1), D::dirac(1)}));
}

TEST_CASE("invariant_vector examples") {
  const Vector a = invariant_vector(rows2(0, 1, 1, 0));
  CHECK_THAT(a(0), WithinAbs(0.5, 1e-15));
  CHECK_THAT(a(1), WithinAbs(0.5, 1e-15));

  const Vector b = invariant_vector(from_row_major(3, 3, {0, 1, 0, 0, 0, 1, 1, 0, 0}));
  for (int i = 0; i < 3; ++i) CHECK_THAT(b(i), WithinAbs(1.0 / 3.0, 1e-15));

  const Vector c = invariant_vector(rows2(0.9, 0.1, 0.5, 0.5));
  CHECK_THAT(c(0), WithinAbs(5.0 / 6.0, 1e-15));
  CHECK_THAT(c(1), WithinAbs(1.0 / 6.0, 1e-15));

  CHECK(code_of([] { invariant_vector(Matrix::Identity(3, 3)); }) == ErrorCode::NotIrreducible);
}

TEST_CASE("invariant vector residual on random irreducible chains") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 1 + trial % 8;
    const Matrix m = oracle::random_irreducible_stochastic(rng, n);
    const Vector p = invariant_vector(m);
    CHECK((p.transpose() * m - p.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK_THAT(p.sum(), WithinAbs(1.0, 1e-14));
    CHECK(p.minCoeff() > 0.0);
    const Eigen::RowVectorXd ref = oracle::cesaro_invariant(m, 4000);
    CHECK((p.transpose() - ref).cwiseAbs().maxCoeff() <= 2e-3);
  }
}

TEST_CASE("invariant vector for large chains uses the iterative route") {
  const Eigen::Index n = 80;
  Matrix m = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    m(i, (i + 1) % n) = 0.7;
    m(i, 0) += 0.3;
  }
  const Vector p = invariant_vector(m);
  CHECK((p.transpose() * m - p.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK_THAT(p.sum(), WithinAbs(1.0, 1e-12));
}

TEST_CASE("mean_dwell examples") {
  CHECK_THAT(mean_dwell(alternating(D::dirac(1), D::dirac(1))), WithinAbs(1.0, 1e-15));
  CHECK_THAT(mean_dwell(alternating(D::dirac(1), D::dirac(3))), WithinAbs(2.0, 1e-15));
  const SwitchingModel m = validate_model(2, rows2(0.9, 0.1, 0.5, 0.5), {D::exponential(2), D::uniform(1, 3)});
  CHECK_THAT(mean_dwell(m), WithinAbs(0.75, 1e-15));
}

TEST_CASE("dwell distributions sample from their laws") {
  Rng rng(5);
  const std::vector<D> laws{D::dirac(2.5), D::exponential(3), D::uniform(0.5, 1.5), D::log_normal(-0.2, 0.4)};
  for (const auto& law : laws) {
    const int count = 200'000;
    double sum = 0.0;
    double lo = INFINITY;
    for (int i = 0; i < count; ++i) {
      const double x = law.sample(rng);
      sum += x;
      lo = std::min(lo, x);
    }
    CHECK(lo > 0.0);
    CHECK_THAT(sum / count, WithinRel(law.mean(), 0.01));
  }
  CHECK(D::uniform(0.5, 1.5).params() == std::vector<double>{0.5, 1.5});
  CHECK(D::exponential(3).params() == std::vector<double>{3});
  CHECK(D::exponential(3).unbounded());
  CHECK_FALSE(D::uniform(1, 2).unbounded());
}

TEST_CASE("sample_path examples") {
  const SwitchingModel alt = alternating(D::exponential(1), D::uniform(1, 2));
  const SwitchPath p = sample_path(alt, 1000, 3);
  for (std::size_t k = 1; k < p.size(); ++k) CHECK(p.step(k).mode != p.step(k - 1).mode);

  const SwitchingModel dirac = validate_model(3, from_row_major(3, 3, {0.2, 0.3, 0.5, 0.5, 0, 0.5, 1, 0, 0}),
                                              {D::dirac(0.75), D::dirac(0.75), D::dirac(0.75)});
  const SwitchPath q = sample_path(dirac, 400, 4);
  for (const auto& st : q.steps()) CHECK(st.dwell == 0.75);
  CHECK_THAT(q.horizon(), WithinRel(400 * 0.75, 1e-14));

  CHECK(sample_path(alt, 50, 99) == sample_path(alt, 50, 99));

  const SwitchingModel mixed = validate_model(3, from_row_major(3, 3, {0.2, 0.3, 0.5, 0.5, 0, 0.5, 0.4, 0.4, 0.2}),
                                              {D::exponential(1), D::uniform(1, 2), D::log_normal(0, 0.5)});
  int differing = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const SwitchPath a = sample_path(mixed, 10, 2 * s + 1000);
    const SwitchPath b = sample_path(mixed, 10, 2 * s + 1001);
    if (!(a == b)) ++differing;
  }
  CHECK(differing >= 99);
  CHECK_THROWS_AS(sample_path(alt, 0, 1), Error);
}

TEST_CASE("ergodic averages along long paths") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::Index n = 2 + trial % 3;
    const Matrix m = oracle::random_irreducible_stochastic(rng, n);
    std::vector<D> dwell;
    for (Eigen::Index i = 0; i < n; ++i) {
      dwell.push_back(i % 2 == 0 ? D::exponential(1.0 + static_cast<double>(i)) : D::uniform(0.5, 1.5));
    }
    const SwitchingModel model = validate_model(static_cast<std::size_t>(n), m, dwell);
    const std::size_t steps = 100'000;
    const SwitchPath path = sample_path(model, steps, 1000 + static_cast<std::uint64_t>(trial));

    std::vector<double> freq(static_cast<std::size_t>(n), 0.0);
    for (const auto& st : path.steps()) freq[st.mode] += 1.0 / static_cast<double>(steps);
    for (Eigen::Index i = 0; i < n; ++i) CHECK(std::abs(freq[static_cast<std::size_t>(i)] - model.invariant()(i)) <= 0.01);

    const double m_bar = mean_dwell(model);
    CHECK(std::abs(path.horizon() / static_cast<double>(steps) - m_bar) <= 0.01 * m_bar);

    const Vector expected = expected_occupation(model);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double f = occupation_fraction(path, path.horizon(), static_cast<std::size_t>(i));
      total += f;
      CHECK(std::abs(f - expected(i)) <= 0.01);
    }
    CHECK_THAT(total, WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("occupation fractions settle by 10^4 mean dwells") {
  // Near-cyclic chains with bounded dwells; exponential dwells need longer.
  const std::vector<std::pair<Matrix, std::vector<D>>> cases{
      {from_row_major(3, 3, {0, 1, 0, 0, 0, 1, 1, 0, 0}), {D::uniform(0.5, 1.5), D::dirac(2), D::uniform(1, 3)}},
      {from_row_major(3, 3, {0, 0.9, 0.1, 0.1, 0, 0.9, 0.9, 0.1, 0}), {D::dirac(1), D::dirac(1.5), D::dirac(0.5)}},
      {from_row_major(2, 2, {0.2, 0.8, 0.9, 0.1}), {D::uniform(0.5, 1.0), D::dirac(0.25)}},
  };
  std::uint64_t seed = 40;
  for (const auto& [m, dwell] : cases) {
    const SwitchingModel model = validate_model(dwell.size(), m, dwell);
    const SwitchPath path = sample_path(model, 13'000, seed++);
    const double horizon = 1e4 * mean_dwell(model);
    const Eigen::RowVectorXd p = oracle::cesaro_invariant(m, 200'000);
    double norm = 0.0;
    for (std::size_t i = 0; i < dwell.size(); ++i) norm += p(static_cast<Eigen::Index>(i)) * dwell[i].mean();
    for (std::size_t i = 0; i < dwell.size(); ++i) {
      const double limit = p(static_cast<Eigen::Index>(i)) * dwell[i].mean() / norm;
      CHECK(std::abs(occupation_fraction(path, horizon, i) - limit) <= 0.01);
    }
  }
}

TEST_CASE("shift examples") {
  const SwitchPath p({{0, 1.0}, {1, 0.5}, {0, 2.0}});
  CHECK(shift(p, 0) == p);
  const SwitchPath q = shift(p, 1);
  REQUIRE(q.size() == 2);
  CHECK(q.step(0) == SwitchStep{1, 0.5});
  CHECK(q.step(1) == SwitchStep{0, 2.0});
  CHECK(code_of([&] { shift(p, 3); }) == ErrorCode::OutOfRange);

  const SwitchingModel model = alternating(D::exponential(1), D::uniform(1, 2));
  const SwitchPath r = sample_path(model, 30, 8);
  CHECK(shift(shift(r, 1), 1) == shift(r, 2));
  CHECK(shift(shift(r, 4), 7) == shift(r, 11));
}

TEST_CASE("signal_at examples") {
  const SwitchPath p({{0, 1.0}, {1, 0.5}});
  CHECK(signal_at(p, 0.0) == 0);
  CHECK(signal_at(p, 1.2) == 1);
  CHECK(signal_at(p, p.switch_time(1)) == 1);
  CHECK(signal_at(p, std::nextafter(1.0, 0.0)) == 0);
  CHECK(code_of([&] { signal_at(p, 1.5); }) == ErrorCode::HorizonExceeded);
  CHECK(code_of([&] { signal_at(p, -0.1); }) == ErrorCode::HorizonExceeded);
}

TEST_CASE("shifted signal matches the original signal offset by s_m") {
  const SwitchingModel model = validate_model(3, from_row_major(3, 3, {0.2, 0.3, 0.5, 0.5, 0, 0.5, 0.4, 0.4, 0.2}),
                                              {D::exponential(1), D::uniform(1, 2), D::dirac(0.3)});
  Rng probe(77);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SwitchPath path = sample_path(model, 60, seed);
    for (std::size_t m : {1, 5, 17}) {
      const SwitchPath shifted = shift(path, m);
      for (int j = 0; j < 30; ++j) {
        const double s = probe.uniform() * shifted.horizon() * 0.999;
        CHECK(signal_at(shifted, s) == signal_at(path, path.switch_time(m) + s));
      }
      for (std::size_t k = 0; k + 1 < shifted.size(); ++k) {
        CHECK(signal_at(shifted, shifted.switch_time(k)) == path.step(m + k).mode);
      }
    }
  }
}

TEST_CASE("occupation_fraction examples") {
  const SwitchingModel single = validate_model(1, Matrix::Ones(1, 1), {D::exponential(2)});
  const SwitchPath a = sample_path(single, 50, 1);
  CHECK(occupation_fraction(a, a.horizon() * 0.7, 0) == 1.0);

  const SwitchPath b = sample_path(alternating(D::dirac(1), D::dirac(1)), 12, 2);
  CHECK_THAT(occupation_fraction(b, 10, 0), WithinAbs(0.5, 1e-15));
  CHECK_THAT(occupation_fraction(b, 10, 1), WithinAbs(0.5, 1e-15));

  const SwitchingModel uneven = alternating(D::dirac(1), D::dirac(3));
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const SwitchPath c = sample_path(uneven, 60, seed);
    for (double k : {1.0, 5.0, 20.0}) {
      CHECK_THAT(occupation_fraction(c, 4 * k, 0), WithinAbs(0.25, 1e-14));
      CHECK_THAT(occupation_fraction(c, 4 * k, 1), WithinAbs(0.75, 1e-14));
    }
  }
  const Vector expected = expected_occupation(uneven);
  CHECK_THAT(expected(0), WithinAbs(0.25, 1e-15));
  CHECK_THAT(expected(1), WithinAbs(0.75, 1e-15));

  CHECK(code_of([&] { occupation_fraction(b, 13, 0); }) == ErrorCode::HorizonExceeded);
}

TEST_CASE("occupation fractions sum to one for every path and horizon") {
  const SwitchingModel model = validate_model(3, from_row_major(3, 3, {0.2, 0.3, 0.5, 0.5, 0, 0.5, 0.4, 0.4, 0.2}),
                                              {D::exponential(1), D::uniform(1, 2), D::log_normal(0, 1)});
  Rng probe(3);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const SwitchPath path = sample_path(model, 200, seed);
    const double horizon = path.horizon() * probe.uniform();
    double total = 0.0;
    for (std::size_t i = 0; i < 3; ++i) total += occupation_fraction(path, horizon, i);
    CHECK_THAT(total, WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("path construction guards dwell positivity") {
  CHECK_THROWS_AS(SwitchPath({{0, 1.0}, {1, 0.0}}), Error);
  CHECK_THROWS_AS(SwitchPath({{0, -1.0}}), Error);
}

TEST_CASE("seed derivation spreads indices") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t j = 0; j < 1000; ++j) seen.insert(derive_seed(42, j));
  CHECK(seen.size() == 1000);
  CHECK(derive_seed(1, 0) != derive_seed(0, 1));
}
