#include <gtest/gtest.h>

#include <cmath>

#include "kmsheat/asymptotics.hpp"

using namespace kmsheat;

namespace {

const double kLog2 = std::log(2.0);

std::vector<double> sample(const LimitSchedule& s, const std::function<double(double)>& f) {
  std::vector<double> v;
  for (double t : s.points()) v.push_back(f(t));
  return v;
}

SingularValueFunction harmonic(std::size_t N, double c = 1.0) {
  std::vector<double> v(N);
  for (std::size_t n = 0; n < N; ++n) v[n] = c / (1.0 + static_cast<double>(n));
  return SingularValueFunction::from_sequence(v);
}

// Steps of relative width 1e-3 carrying the exact average of 1/(1+s), so that
// the integral is exact at every breakpoint.
SingularValueFunction continuous_harmonic(double smax) {
  std::vector<std::pair<double, double>> steps;
  double a = 0.0;
  while (a < smax) {
    const double b = a < 1.0 ? a + 1e-3 : a * 1.001;
    steps.emplace_back(std::log((1.0 + b) / (1.0 + a)) / (b - a), b - a);
    a = b;
  }
  return SingularValueFunction::from_multiset(steps);
}

}  // namespace

TEST(ExtendedLimit, AffineIsExact) {
  for (auto p : {ExtrapolationPolicy::PoleResidueFit, ExtrapolationPolicy::Richardson}) {
    auto s = LimitSchedule::geometric(0.3, 0.4, 0.5, 8, p);
    const auto est = extended_limit(s, [](double t) { return 3.0 + (t - 0.3); });
    EXPECT_NEAR(est.limit, 3.0, 1e-12);
    EXPECT_TRUE(est.converged);
  }
}

TEST(ExtendedLimit, ExactOnPolynomialsUpToOrder) {
  auto s = LimitSchedule::geometric(1.0, 0.4, 0.5, 8, ExtrapolationPolicy::PoleResidueFit, 3);
  const auto est = extended_limit(s, [](double t) {
    const double e = t - 1.0;
    return 1.0 + 2.0 * e - 3.0 * e * e + 0.5 * e * e * e;
  });
  EXPECT_NEAR(est.limit, 1.0, 1e-12);
  EXPECT_TRUE(est.converged);
}

TEST(ExtendedLimit, CuntzRatioAtLog2) {
  // (1 - 2e^{-t}) sum_{n>=1} 2^{n-1} e^{-tn}, partial sums to certified depth
  auto ratio = [](double t) {
    long double s = 0.0L, term = std::exp(-static_cast<long double>(t));
    for (int n = 1; n < 200000 && term > 1e-22L * s; ++n) {
      s += term;
      term *= 2.0L * std::exp(-static_cast<long double>(t));
    }
    return static_cast<double>((1.0L - 2.0L * std::exp(-static_cast<long double>(t))) * s);
  };
  for (auto p : {ExtrapolationPolicy::PoleResidueFit, ExtrapolationPolicy::Richardson}) {
    auto s = LimitSchedule::geometric(kLog2, 0.4, 0.5, 8, p);
    const auto est = extended_limit(s, sample(s, ratio));
    EXPECT_NEAR(est.limit, 0.5, 1e-4);
  }
}

TEST(ExtendedLimit, OscillationIsNotConverged) {
  for (auto p : {ExtrapolationPolicy::PoleResidueFit, ExtrapolationPolicy::Richardson,
                 ExtrapolationPolicy::PlainTailAverage}) {
    auto s = LimitSchedule::geometric(0.0, 0.4, 0.5, 8, p);
    const auto est = extended_limit(s, [](double t) { return std::sin(1.0 / t); });
    EXPECT_FALSE(est.converged);
  }
}

TEST(ExtendedLimit, ScheduleValidation) {
  EXPECT_THROW(LimitSchedule::geometric(0.0, 0.4, 0.5, 3), Error);
  EXPECT_THROW(LimitSchedule::toward_infinity({1.0, 2.0, 2.0, 3.0}), Error);
  auto s = LimitSchedule::geometric(0.0);
  std::vector<double> wrong(5, 1.0);
  EXPECT_THROW(extended_limit(s, std::span<const double>(wrong)), Error);
}

TEST(PoleFit, GeometricPoleAtLog2) {
  const auto s = LimitSchedule::geometric(kLog2);
  std::vector<double> g;
  for (double t : s.points()) g.push_back(1.0 / (1.0 - 2.0 * std::exp(-t)));
  const auto f = pole_fit(s.offsets, g);
  EXPECT_NEAR(f.order, 1.0, 0.05);
  // 1 - 2e^{-t} = eps - eps^2/2 + ..., so the residue is 1
  EXPECT_NEAR(f.residue, 1.0, 0.05);
}

TEST(PoleFit, PurePoleOrderTwo) {
  const auto s = LimitSchedule::geometric(0.0);
  std::vector<double> g;
  for (double e : s.offsets) g.push_back(1.0 / (e * e));
  const auto f = pole_fit(s.offsets, g);
  EXPECT_NEAR(f.order, 2.0, 1e-10);
  EXPECT_NEAR(f.residue, 1.0, 1e-10);
}

TEST(PoleFit, HolomorphicPartInsensitivity) {
  const auto s = LimitSchedule::geometric(kLog2, 0.2, 0.5, 10);
  std::vector<double> f, fg;
  for (double t : s.points()) {
    const double v = 1.0 / (1.0 - 2.0 * std::exp(-t));
    f.push_back(v);
    fg.push_back(v + 3.0 + std::cos(t));
  }
  const auto a = pole_fit(s.offsets, f), b = pole_fit(s.offsets, fg);
  EXPECT_NEAR(a.order, b.order, 0.05);
  EXPECT_NEAR(a.residue, b.residue, 0.05 * a.residue);
}

TEST(PoleFit, BoundedIsNotDivergent) {
  const auto s = LimitSchedule::geometric(0.0);
  std::vector<double> g;
  for (double e : s.offsets) g.push_back(2.0 - e);
  try {
    pole_fit(s.offsets, g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotDivergent);
  }
}

TEST(Dixmier, HarmonicAndScaled) {
  const auto psi = PsiFunction::inverse_linear();
  const auto s = LimitSchedule::geometric_to_infinity(16.0, 5e5, 12);
  const auto one = dixmier_trace(harmonic(1'000'000), psi, s);
  EXPECT_NEAR(one.value, 1.0, 0.01);
  EXPECT_TRUE(one.converged);
  const auto two = dixmier_trace(harmonic(1'000'000, 2.0), psi, s);
  EXPECT_NEAR(two.value, 2.0, 0.02);
  EXPECT_NEAR(two.value, 2.0 * one.value, 1e-9);
}

TEST(Dixmier, LogOscillationIsDetected) {
  const std::size_t N = 1'000'000;
  std::vector<double> v(N);
  for (std::size_t n = 0; n < N; ++n) {
    const double x = static_cast<double>(n);
    v[n] = (1.0 + 0.5 * std::sin(std::log(std::log(3.0 + x)))) / (1.0 + x);
  }
  const auto s = LimitSchedule::geometric_to_infinity(16.0, 5e5, 12);
  const auto r = dixmier_trace(SingularValueFunction::from_sequence(v), PsiFunction::inverse_linear(), s);
  EXPECT_FALSE(r.converged);
}

TEST(Dixmier, AdditiveOnDisjointSupports) {
  // mu = 1/(1+n) split into even and odd halves, each compressed to a step function
  const std::size_t N = 400'000;
  std::vector<std::pair<double, double>> even, odd, all;
  for (std::size_t n = 0; n < N; ++n) {
    const double v = 1.0 / (1.0 + static_cast<double>(n));
    (n % 2 ? odd : even).emplace_back(v, 1.0);
    all.emplace_back(v, 1.0);
  }
  const auto psi = PsiFunction::inverse_linear();
  const auto s = LimitSchedule::geometric_to_infinity(16.0, 1e5, 12);
  const auto a = dixmier_trace(SingularValueFunction::from_multiset(even), psi, s);
  const auto b = dixmier_trace(SingularValueFunction::from_multiset(odd), psi, s);
  const auto c = dixmier_trace(SingularValueFunction::from_multiset(all), psi, s);
  EXPECT_GT(a.value, 0.0);
  EXPECT_GT(b.value, 0.0);
  EXPECT_NEAR(a.value + b.value, c.value, 0.02);
}

TEST(Dixmier, ExponentiationInvarianceSurrogate) {
  const auto mu = continuous_harmonic(2e10);
  const auto psi = PsiFunction::inverse_linear();
  const auto base = LimitSchedule::geometric_to_infinity(64.0, 1e5, 12);
  const auto ref = dixmier_trace(mu, psi, base).value;
  for (double a : {0.5, 2.0}) {
    std::vector<double> t;
    for (double x : base.times) t.push_back(std::pow(x, a));
    const auto v = dixmier_trace(mu, psi, LimitSchedule::toward_infinity(t)).value;
    EXPECT_NEAR(v, ref, 0.01 * ref);
  }
}

TEST(Dixmier, TwistedMeanAndDataLimit) {
  const auto mu = continuous_harmonic(1e6);
  const auto psi = PsiFunction::inverse_linear();
  const auto s = LimitSchedule::geometric_to_infinity(16.0, 5e5, 12);
  DixmierOptions opt;
  opt.twisted_mean = true;
  EXPECT_NEAR(dixmier_trace(mu, psi, s, opt).value, 1.0, 0.01);
  try {
    dixmier_trace(harmonic(1000), psi, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ScheduleExceedsData);
  }
}

TEST(RegularVariation, InverseLinear) {
  const auto r = regular_variation_diagnostics(PsiFunction::inverse_linear(), -1.0);
  EXPECT_TRUE(r.pass());
  EXPECT_NEAR(r.invas_constant, 1.0, 1e-6);
  EXPECT_NEAR(r.exp2_limits[0].second, 0.5, 1e-6);
  EXPECT_NEAR(r.exp2_limits[1].second, 2.0, 1e-6);
}

TEST(RegularVariation, SlowlyVarying) {
  const auto psi = PsiFunction::inverse_log_power(1.0);
  EXPECT_TRUE(regular_variation_diagnostics(psi, 0.0).index_pass);
  EXPECT_FALSE(regular_variation_diagnostics(psi, -1.0).index_pass);
  EXPECT_FALSE(regular_variation_diagnostics(psi, -1.0).pass());
}

TEST(RegularVariation, LogOverLinear) {
  const auto r = regular_variation_diagnostics(PsiFunction::log_over_linear(), -1.0);
  EXPECT_TRUE(r.pass());
  EXPECT_NEAR(r.invas_constant, 1.0, 0.01);
  EXPECT_NEAR(r.exp2_limits[0].second, 0.25, 0.01);
  EXPECT_NEAR(r.exp2_limits[1].second, 4.0, 0.02);
}

TEST(Psi, CatalogueConsistency) {
  for (const auto& psi : {PsiFunction::inverse_linear(2.0), PsiFunction::log_over_linear(),
                          PsiFunction::inverse_log_power(1.5)}) {
    for (double t : {1.0, 10.0, 1000.0}) {
      EXPECT_NEAR(psi.inverse(psi(t)), t, 1e-8 * (1.0 + t));
      EXPECT_NEAR(psi.log_at_log(std::log(t)), std::log(psi(t)), 1e-12);
      // Psi' = psi by central differences
      const double h = 1e-4 * (1.0 + t);
      EXPECT_NEAR((psi.primitive(t + h) - psi.primitive(t - h)) / (2 * h), psi(t), 1e-6);
    }
  }
}

TEST(Karamata, LinearExponent) {
  const auto r = karamata_heat([](double n) { return 1.0 / (1.0 + n); }, PsiFunction::inverse_linear(), 1.0,
                               {100, 200, 400, 800, 1600, 3200, 6400, 10000});
  EXPECT_LT(r.deviation, 0.02);
}

TEST(Karamata, SquareRootExponent) {
  const auto r = karamata_heat([](double n) { return 1.0 / (1.0 + n); }, PsiFunction::inverse_linear(), 0.5,
                               {8, 12, 16, 24, 32, 48, 64, 96});
  EXPECT_LT(r.deviation, 0.05);
}

TEST(Karamata, ScaledSequence) {
  const auto r = karamata_heat([](double n) { return 2.0 / (1.0 + n); }, PsiFunction::inverse_linear(2.0), 1.0,
                               {100, 200, 400, 800, 1600, 3200, 6400, 10000});
  EXPECT_LT(r.deviation, 0.02);
}

TEST(Karamata, UncertifiedTail) {
  // mu(n) = 1/log(2+n) makes exp(-mu^{-1}/t) = (2+n)^{-1/t}, not summable for t >= 1
  try {
    KaramataOptions opt;
    opt.max_terms = 100000;
    karamata_heat([](double n) { return 1.0 / std::log(2.0 + n); }, PsiFunction::inverse_linear(), 1.0,
                  {1, 2, 3, 4}, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DivergentSum);
  }
}
