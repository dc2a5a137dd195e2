#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "kmsheat/spectral.hpp"

using namespace kmsheat;

namespace {

// Levels n >= 0 with weight 2^n, generated lazily.
SpectralMeasure doubling_levels() {
  auto gen = [](double R) {
    std::vector<SpectralEntry> out;
    for (int n = 0; n <= static_cast<int>(std::floor(R)); ++n) out.push_back({double(n), 1.0, n * std::log(2.0)});
    return out;
  };
  // sum_{n<=R} 2^n <= 2 * 2^R
  return SpectralMeasure(gen, GrowthBound{2.0, std::log(2.0)});
}

SpectralMeasure unit_levels() {
  auto gen = [](double R) {
    std::vector<SpectralEntry> out;
    for (int n = 0; n <= static_cast<int>(std::floor(R)); ++n) out.push_back({double(n), 1.0, 0.0});
    return out;
  };
  // R + 1 <= (1/b) e^{bR} for the certificate below
  const double b = 0.05;
  return SpectralMeasure(gen, GrowthBound{std::max(1.0, 1.0 / (b * std::exp(1.0 - b))) + 1.0, b});
}

}  // namespace

TEST(HeatTrace, GeometricSumAgainstClosedFormAndTruncation) {
  const auto m = doubling_levels();
  const auto h = heat_trace(m, 1.0, {1e-10});
  const double closed = 1.0 / (1.0 - 2.0 * std::exp(-1.0));
  long double direct = 0.0L;
  for (int n = 0; n <= 80; ++n) direct += std::pow(2.0L, n) * std::exp(-1.0L * n);
  EXPECT_NEAR(h.value, closed, 1e-10);
  EXPECT_LE(h.tail_bound, 1e-10);
  EXPECT_NEAR(h.value, static_cast<double>(direct), 1e-9);
  EXPECT_NEAR(std::fabs(h.value - closed), 0.0, h.tail_bound + 1e-13);
}

TEST(HeatTrace, IdentityInsertionMatchesBase) {
  const auto m = doubling_levels();
  for (double t : {0.8, 1.0, 2.5}) {
    const auto ins = ObservableInsertion::identity(m);
    EXPECT_DOUBLE_EQ(heat_trace(ins, t).value, heat_trace(m, t).value);
  }
}

TEST(HeatTrace, CirclePositivePart) {
  auto gen = [](double R) {
    std::vector<SpectralEntry> out;
    for (int n = -static_cast<int>(R); n <= static_cast<int>(R); ++n) out.push_back({double(n), 1.0, 0.0});
    return out;
  };
  SpectralMeasure circle(gen, GrowthBound{3.0 / (0.05 * std::exp(1.0)) + 1.0, 0.05});
  HeatTraceOptions opt;
  opt.positive_only = true;
  EXPECT_NEAR(heat_trace(circle, std::log(2.0), opt).value, 2.0, 1e-12);
}

TEST(HeatTrace, Errors) {
  EXPECT_THROW(heat_trace(doubling_levels(), std::log(2.0)), Error);
  try {
    heat_trace(doubling_levels(), 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DivergentSeries);
  }
  SpectralMeasure no_bound([](double) { return std::vector<SpectralEntry>{{0.0, 1.0, 0.0}}; }, std::nullopt);
  try {
    heat_trace(no_bound, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingGrowthBound);
  }
  EXPECT_THROW(SpectralMeasure(std::vector<SpectralEntry>{}), Error);
  EXPECT_THROW(SpectralMeasure(std::vector<SpectralEntry>{{1.0, -1.0, 0.0}}), Error);
}

TEST(HeatTrace, MonotoneAndTailSound) {
  const auto m = doubling_levels();
  double prev = std::numeric_limits<double>::infinity();
  for (double t = 0.75; t < 3.0; t += 0.25) {
    const double v = heat_trace(m, t).value;
    EXPECT_LT(v, prev);
    prev = v;
  }
  for (double t : {0.75, 1.0, 1.7}) {
    HeatTraceOptions coarse;
    coarse.tail_tolerance = 1e-3;
    const auto a = heat_trace(m, t, coarse);
    const auto b = heat_trace(m, t, {1e-14});
    EXPECT_LE(b.value, a.value + a.tail_bound + 1e-12);
    EXPECT_GE(b.value, a.value - 1e-12);
  }
}

TEST(HeatTrace, GeometricDomination) {
  const auto m = doubling_levels();
  const GrowthBound g = *m.growth();
  for (double t : {0.75, 1.0, 2.0})
    EXPECT_LE(heat_trace(m, t).value, g.C / (1.0 - std::exp(-(t - g.b))));
  const auto u = unit_levels();
  const GrowthBound gu = *u.growth();
  for (double t : {0.1, 0.5, 1.0}) EXPECT_LE(heat_trace(u, t).value, gu.C / (1.0 - std::exp(-(t - gu.b))));
}

TEST(Gibbs, IdentityIsOneAndOffDiagonalIsZero) {
  const auto m = doubling_levels();
  const auto g = gibbs_functional(ObservableInsertion::identity(m), m, 1.3);
  EXPECT_NEAR(g.value, 1.0, 1e-15);

  std::vector<SpectralEntry> circle;
  for (int n = -200; n <= 200; ++n) circle.push_back({double(n), 1.0, 0.0});
  SpectralMeasure c(circle);
  ObservableInsertion rotation(c, std::vector<double>(circle.size(), 0.0), "e^{i theta}");
  EXPECT_EQ(gibbs_functional(rotation, c, 0.7).value, 0.0);
}

TEST(Gibbs, NonnegativeInsertionAndZeroDenominator) {
  const auto m = doubling_levels();
  ObservableInsertion half(m, [](const std::vector<SpectralEntry>& e) {
    std::vector<double> w(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) w[i] = 0.5 * e[i].weight;
    return w;
  }, "half");
  const auto g = gibbs_functional(half, 1.0);
  EXPECT_NEAR(g.value, 0.5, 1e-15);
  EXPECT_GE(g.value, 0.0);

  SpectralMeasure zero(std::vector<SpectralEntry>{{0.0, 0.0, 0.0}});
  try {
    gibbs_functional(ObservableInsertion::identity(zero), zero, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroDenominator);
  }
  ObservableInsertion too_big(m, [](const std::vector<SpectralEntry>& e) {
    std::vector<double> w(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) w[i] = 2.0 * e[i].weight;
    return w;
  }, "too big");
  EXPECT_THROW(gibbs_functional(too_big, 1.0), Error);
}

TEST(CriticalBeta, ExponentialLevels) {
  const auto r = critical_beta(doubling_levels(), 0.0, 2.0, 1e-6);
  // ratio-test oracle on the generating sequence 2^n
  EXPECT_NEAR(r.beta, std::log(2.0), 1e-6);
  EXPECT_TRUE(r.diverges_at_beta);
}

TEST(CriticalBeta, UnitLevels) {
  const auto r = critical_beta(unit_levels(), -1.0, 1.0, 1e-6);
  EXPECT_NEAR(r.beta, 0.0, 1e-6);
  EXPECT_TRUE(r.diverges_at_beta);
}

TEST(CriticalBeta, SummablePolynomialCorrection) {
  const double p = 0.7;
  auto gen = [p](double R) {
    std::vector<SpectralEntry> out;
    for (int n = 1; n <= static_cast<int>(std::floor(R)); ++n)
      out.push_back({double(n), 1.0 / (double(n) * n), p * n});
    return out;
  };
  SpectralMeasure m(gen, GrowthBound{2.0, p});
  const auto r = critical_beta(m, 0.0, 2.0, 1e-6);
  EXPECT_NEAR(r.beta, p, 1e-6);
  EXPECT_NEAR(r.polynomial_exponent, -2.0, 1e-4);
  EXPECT_FALSE(r.diverges_at_beta);
}

TEST(CriticalBeta, WindowTooNarrow) {
  try {
    critical_beta(doubling_levels(), 1.0, 2.0, 1e-6);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::WindowTooNarrow);
  }
}

TEST(SingularValues, Sorting) {
  const auto f = SingularValueFunction::from_sequence({3.0, 1.0, 2.0});
  EXPECT_EQ(f(0.0), 3.0);
  EXPECT_EQ(f(0.999), 3.0);
  EXPECT_EQ(f(1.0), 2.0);
  EXPECT_EQ(f(2.5), 1.0);
  EXPECT_EQ(f(3.0), 0.0);
  EXPECT_DOUBLE_EQ(f.integral(2.5), 3.0 + 2.0 + 0.5);
  EXPECT_THROW(SingularValueFunction::from_multiset({{1.0, -1.0}}), Error);
}

TEST(SingularValues, AlreadyDecreasing) {
  std::vector<double> v;
  for (int n = 0; n < 1000; ++n) v.push_back(1.0 / (1.0 + n));
  const auto f = SingularValueFunction::from_sequence(v);
  for (double t : {0.0, 0.5, 17.3, 998.9}) EXPECT_EQ(f(t), 1.0 / (1.0 + std::floor(t)));
}

TEST(SingularValues, DistributionDuality) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> val(0.0, 5.0), wt(0.1, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<double, double>> ms;
    for (int i = 0; i < 30; ++i) ms.emplace_back(std::round(val(rng) * 4) / 4, wt(rng));
    const auto f = SingularValueFunction::from_multiset(ms);
    for (double t : f.breakpoints()) {
      if (t >= f.support()) continue;
      EXPECT_LE(f.distribution(f(t) + 1e-12), t + 1e-9);
    }
  }
}
