#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "kmsheat/group_boundary.hpp"

using namespace kmsheat;
using boost::multiprecision::cpp_rational;

namespace {

// Sum over reduced words gamma with |gamma| <= n_max of e^{-t|gamma|}, split by
// whether gamma starts with w; counts by last-letter transfer, no closed forms.
std::pair<long double, long double> truncated_sums(const FreeGroup& G, const Word& w, double t, int n_max) {
  const int k = G.rank();
  auto idx = [k](int x) { return x > 0 ? x - 1 : k - x - 1; };
  std::vector<long double> ending(2 * k, 0.0L);
  for (int x : w) (void)x;
  ending[idx(w.back())] = 1.0L;
  long double num = 0.0L, den = 1.0L;
  std::vector<long double> all(2 * k, 1.0L);
  for (int n = 1; n <= n_max; ++n) {
    if (n > 1) {
      std::vector<long double> next(2 * k, 0.0L);
      for (int i = 1; i <= k; ++i)
        for (int x : {i, -i}) {
          long double s = 0.0L;
          for (int j = 1; j <= k; ++j)
            for (int y : {j, -j})
              if (y != -x) s += all[idx(y)];
          next[idx(x)] = s;
        }
      all = next;
    }
    long double sphere = 0.0L;
    for (auto v : all) sphere += v;
    den += sphere * std::exp(-static_cast<long double>(t) * n);
    if (n >= static_cast<int>(w.size())) {
      if (n > static_cast<int>(w.size())) {
        std::vector<long double> next(2 * k, 0.0L);
        for (int i = 1; i <= k; ++i)
          for (int x : {i, -i}) {
            long double s = 0.0L;
            for (int j = 1; j <= k; ++j)
              for (int y : {j, -j})
                if (y != -x) s += ending[idx(y)];
            next[idx(x)] = s;
          }
        ending = next;
      }
      long double c = 0.0L;
      for (auto v : ending) c += v;
      num += c * std::exp(-static_cast<long double>(t) * n);
    }
  }
  return {num, den};
}

CylinderMeasureTable table(const FreeGroup& G) { return CylinderMeasureTable(G); }

}  // namespace

TEST(FreeGroup, WordArithmetic) {
  FreeGroup G(2);
  EXPECT_EQ(G.format(G.parse("abBA")), "e");
  EXPECT_EQ(G.format(G.multiply(G.parse("ab"), G.parse("Ba"))), "aa");
  const Word g = G.parse("abAb");
  EXPECT_TRUE(G.multiply(g, G.inverse(g)).empty());
  EXPECT_EQ(G.cancellation(G.parse("ab"), G.parse("BAb")), 2u);
  for (const auto& x : G.sphere(3))
    for (const auto& y : G.sphere(2)) EXPECT_LE(G.multiply(x, y).size(), x.size() + y.size());
  EXPECT_THROW(G.parse("c"), Error);
  try {
    FreeGroup bad(1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidInput);
  }
}

TEST(FreeGroup, SphereCountsMatchEnumeration) {
  for (int k : {2, 3}) {
    FreeGroup G(k);
    const auto S = sphere_counts(G, 5);
    for (std::size_t n = 0; n <= 5; ++n) {
      std::set<Word> distinct;
      for (const auto& w : G.sphere(n)) {
        EXPECT_EQ(G.reduce(w), w);
        distinct.insert(w);
      }
      EXPECT_EQ(BigInt(distinct.size()), S[n]);
    }
  }
  const auto S = sphere_counts(FreeGroup(2), 3);
  EXPECT_EQ(S, (std::vector<BigInt>{1, 4, 12, 36}));
  const auto g = sphere_growth(FreeGroup(2));
  EXPECT_NEAR(g.b, std::log(3.0), 1e-15);
  long double cum = 0.0L;
  for (std::size_t R = 0; R <= 30; ++R) {
    cum += sphere_counts(FreeGroup(2), R)[R].convert_to<long double>();
    EXPECT_LE(cum, g.C * std::pow(3.0L, static_cast<long double>(R)) * (1 + 1e-15L));
  }
}

TEST(FreeGroup, PoincareCritical) {
  const auto c2 = poincare_critical(FreeGroup(2));
  EXPECT_NEAR(c2.beta, std::log(3.0), 1e-12);
  EXPECT_TRUE(c2.is_critical);
  EXPECT_NEAR(c2.polynomial_exponent, 0.0, 1e-9);
  EXPECT_NEAR(poincare_critical(FreeGroup(3)).beta, std::log(5.0), 1e-12);
  const auto cb = critical_beta(length_spectrum(FreeGroup(2)), 0.0, 3.0, 1e-3);
  EXPECT_NEAR(cb.beta, c2.beta, 1e-3);
}

TEST(PattersonSullivan, GibbsRatioMatchesTruncatedSummation) {
  FreeGroup G(2);
  const double t = G.beta() + 0.2;
  for (const std::string s : {"a", "bA", "abab"}) {
    const Word w = G.parse(s);
    const auto [num, den] = truncated_sums(G, w, t, 400);
    const double expect = static_cast<double>(num / den);
    const double q = 3.0;
    const double m = static_cast<double>(w.size());
    const auto base = length_spectrum(G);
    ObservableInsertion ins(
        base,
        [m, q](const std::vector<SpectralEntry>& e) {
          std::vector<double> out(e.size(), 0.0);
          for (std::size_t i = 0; i < e.size(); ++i)
            if (e[i].lambda >= m) out[i] = std::exp((e[i].lambda - m) * std::log(q) - e[i].log_scale);
          return out;
        },
        s);
    EXPECT_NEAR(gibbs_functional(ins, t).value, expect, 1e-12 * expect) << s;
  }
}

TEST(PattersonSullivan, CylinderMeasures) {
  FreeGroup G(2);
  const auto sched = ps_default_schedule(G);
  const auto one = ps_cylinder_measure(G, {G.parse("a")}, sched);
  EXPECT_TRUE(one.converged);
  EXPECT_NEAR(one.value, 0.25, 1e-10);
  for (std::size_t m = 1; m <= 6; ++m) {
    const Word w = G.sphere(m)[m * 7 % G.sphere(m).size()];
    const auto mu = ps_cylinder_measure(G, {w}, ps_default_schedule(G, m));
    EXPECT_TRUE(mu.converged);
    const double expect = 0.25 * std::pow(3.0, -(static_cast<double>(m) - 1));
    EXPECT_NEAR(mu.value, expect, 1e-10 * expect) << G.format(w);
    EXPECT_EQ(ps_cylinder_measure_exact(G, {w}), cpp_rational(1, 4 * static_cast<int>(std::pow(3, m - 1))));
  }
  // rank 3: 1/(6 * 5^{m-1})
  FreeGroup H(3);
  EXPECT_NEAR(ps_cylinder_measure(H, {H.parse("cA")}, ps_default_schedule(H)).value, 1.0 / 30.0, 1e-11);
  EXPECT_THROW(ps_cylinder_measure(G, {Word{1, -1}}, sched), Error);
  EXPECT_THROW(ps_cylinder_measure(G, {Word{}}, sched), Error);
}

TEST(PattersonSullivan, PartitionPositivityConformality) {
  FreeGroup G(2);
  const auto mu = table(G);
  for (std::size_t m = 1; m <= 6; ++m) {
    cpp_rational exact = 0;
    long double approx = 0.0L;
    for (const auto& w : G.sphere(m)) {
      exact += ps_cylinder_measure_exact(G, {w});
      approx += mu(w);
      EXPECT_GT(mu(w), 0.0);
    }
    EXPECT_EQ(exact, 1);
    EXPECT_NEAR(static_cast<double>(approx), 1.0, 1e-10);
  }
  EXPECT_TRUE(mu.all_converged());
  for (const auto& w : G.sphere(3)) {
    double ext = 0.0;
    for (const auto& v : G.sphere(4))
      if (std::equal(w.begin(), w.end(), v.begin())) ext += mu(v);
    EXPECT_NEAR(ext, mu(w), 1e-12);
    for (int x : {1, -1, 2, -2}) {
      if (x == -w.front()) continue;
      Word xw{x};
      xw.insert(xw.end(), w.begin(), w.end());
      EXPECT_NEAR(mu(xw), mu(w) / 3.0, 1e-12);
    }
  }
}

TEST(RadonNikodym, CocycleValues) {
  FreeGroup G(2);
  const auto mu = table(G);
  EXPECT_NEAR(rn_cocycle(G, G.parse("a"), {G.parse("bab")}, mu), 1.0 / 3.0, 1e-10);
  EXPECT_NEAR(rn_cocycle(G, G.parse("a"), {G.parse("Abab")}, mu), 3.0, 1e-9);
  try {
    rn_cocycle(G, G.parse("ab"), {G.parse("BA")}, mu);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShallowCylinder);
  }
  double worst = 0.0;
  const auto words = G.sphere(2);
  for (const auto& g : words)
    for (const auto& h : words)
      for (const auto& w : G.sphere(6)) {
        const Word hw = G.multiply(h, w);
        if (G.cancellation(h, w) >= w.size() || G.cancellation(g, hw) >= hw.size()) continue;
        const double lhs = rn_cocycle(G, G.multiply(g, h), {w}, mu);
        const double rhs = rn_cocycle(G, g, {hw}, mu) * rn_cocycle(G, h, {w}, mu);
        worst = std::max(worst, std::fabs(lhs - rhs) / std::fabs(rhs));
      }
  EXPECT_LT(worst, 1e-10);
}

TEST(CrossedProduct, KmsCondition) {
  FreeGroup G(2);
  const auto mu = table(G);
  const auto one = CylinderFunction::constant(1.0);
  std::vector<CrossedElement> pair{{one, G.parse("a")}, {one, G.parse("A")}};
  const auto r = crossed_product_kms_check(G, pair, required_depth(pair), mu);
  EXPECT_LT(r.max_violation, 1e-9);

  std::vector<CrossedElement> set;
  CylinderFunction f;
  f.coeffs = {{G.parse("a"), 2.0}, {G.parse("bA"), -1.0}, {Word{}, 0.5}};
  CylinderFunction h;
  h.coeffs = {{G.parse("B"), 1.0}, {G.parse("ab"), 3.0}};
  for (const std::string g : {"e", "a", "A", "b", "ab", "BA", "aB", "bA"}) {
    const Word w = g == "e" ? Word{} : G.parse(g);
    set.push_back({f, w});
    set.push_back({h, w});
  }
  const std::size_t d = required_depth(set);
  const auto good = crossed_product_kms_check(G, set, d, mu);
  EXPECT_LT(good.max_violation, 1e-8);
  EXPECT_EQ(good.pairs, set.size() * set.size());
  const auto bad = crossed_product_kms_check(G, set, d, mu, 1.1);
  EXPECT_GT(bad.max_violation, 1e-3);
  try {
    crossed_product_kms_check(G, set, d - 1, mu);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DepthInsufficient);
  }
}

TEST(CrossedProduct, GroupSubalgebraIsTheCanonicalTrace) {
  FreeGroup G(2);
  const auto mu = table(G);
  const auto one = CylinderFunction::constant(1.0);
  for (const auto& g : G.sphere(2)) {
    EXPECT_EQ(crossed_phi(G, {one, g}, mu), 0.0);
  }
  EXPECT_NEAR(crossed_phi(G, {one, Word{}}, mu), 1.0, 1e-10);
  CylinderFunction f;
  f.coeffs = {{G.parse("ab"), 4.0}};
  EXPECT_NEAR(crossed_phi(G, {f, Word{}}, mu), 4.0 / 12.0, 1e-10);
}
