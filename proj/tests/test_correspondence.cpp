#include <gtest/gtest.h>

#include <Eigen/QR>
#include <cmath>
#include <random>

#include "kmsheat/correspondence.hpp"

using namespace kmsheat;

namespace {

// Perron eigenvector of M from a dense eigendecomposition, l1-normalized.
Eigen::VectorXd eigen_perron(const Eigen::MatrixXd& M) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(M);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()(i).real() > es.eigenvalues()(best).real()) best = i;
  Eigen::VectorXd v = es.eigenvectors().col(best).real();
  return v / v.sum();
}

// Orthogonal matrix mixing parallel edges by a random rotation within each parallel class.
Eigen::MatrixXd random_parallel_frame(const DirectedGraph& g, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> nd;
  const auto E = static_cast<Eigen::Index>(g.num_edges());
  Eigen::MatrixXd U = Eigen::MatrixXd::Zero(E, E);
  std::vector<bool> done(g.num_edges(), false);
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    if (done[e]) continue;
    std::vector<std::size_t> cls;
    for (std::size_t f = e; f < g.num_edges(); ++f)
      if (g.edge(f).src == g.edge(e).src && g.edge(f).dst == g.edge(e).dst) cls.push_back(f);
    const auto m = static_cast<Eigen::Index>(cls.size());
    Eigen::MatrixXd G(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) G(i, j) = nd(rng);
    const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(G).householderQ();
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) U(cls[i], cls[j]) = Q(i, j);
    for (auto f : cls) done[f] = true;
  }
  return U;
}

Monomial diag(const DirectedGraph& g, const std::vector<std::string>& ids) {
  const Path p = Path::of_ids(g, ids);
  return {p, p};
}

LimitSchedule zero_schedule() { return LimitSchedule::geometric(0.0, 0.4, 0.5, 8, ExtrapolationPolicy::Richardson, 0); }

}  // namespace

TEST(InducedTrace, MatrixPowerAndExamples) {
  const auto c = GraphCorrespondence::two_vertex();
  const TraceFunctional tau(Eigen::Vector2d(0.3, 0.7));
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(2, 2);
  for (std::size_t n = 0; n <= 10; ++n) {
    EXPECT_NEAR(induced_trace(c, tau, Eigen::Vector2d::Ones(), n), (P * tau.weights()).sum(), 1e-9 * P.sum());
    P = P * c.vertex_matrix();
  }
  const auto on = GraphCorrespondence::cuntz(3);
  for (std::size_t k = 0; k <= 5; ++k)
    EXPECT_DOUBLE_EQ(induced_trace(on, TraceFunctional(Eigen::VectorXd::Ones(1)), Eigen::VectorXd::Ones(1), k),
                     std::pow(3.0, k));
  // doubling on Z/8: edges out of 0 land on 0 and 1, each of mass 1/8
  const auto d = GraphCorrespondence::doubling(8);
  Eigen::VectorXd delta0 = Eigen::VectorXd::Zero(8);
  delta0(0) = 1.0;
  double direct = 0.0;
  for (const auto& e : d.graph().edges())
    if (e.src == 0) direct += 1.0 / 8.0;
  EXPECT_DOUBLE_EQ(induced_trace(d, TraceFunctional::uniform(8), delta0, 1), direct);
  EXPECT_DOUBLE_EQ(direct, 0.25);
}

TEST(LnMap, FixedPointLinearityAndPowers) {
  const auto c = GraphCorrespondence::two_vertex();
  const Eigen::VectorXd v = eigen_perron(c.vertex_matrix());
  const double r = (3.0 + std::sqrt(5.0)) / 2.0;
  const TraceFunctional tau(v);
  EXPECT_LT((ln_map(c, tau, std::log(r)).weights() - v).cwiseAbs().maxCoeff(), 1e-12);
  const auto on = GraphCorrespondence::cuntz(4);
  EXPECT_DOUBLE_EQ(ln_map(on, TraceFunctional(Eigen::VectorXd::Constant(1, 0.5)), 0.0).at(0), 2.0);
  const TraceFunctional t1(Eigen::Vector2d(0.2, 0.9)), t2(Eigen::Vector2d(1.5, 0.1));
  const TraceFunctional sum(t1.weights() + t2.weights());
  EXPECT_LT((ln_map(c, sum, 0.3).weights() - ln_map(c, t1, 0.3).weights() - ln_map(c, t2, 0.3).weights())
                .cwiseAbs()
                .maxCoeff(),
            1e-14);
  EXPECT_GE(ln_map(c, t1, 0.3).weights().minCoeff(), 0.0);
  TraceFunctional it = t1;
  for (int n = 0; n < 6; ++n) it = ln_map(c, it, 0.3);
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(2, 2);
  for (int n = 0; n < 6; ++n) P = P * c.vertex_matrix();
  EXPECT_LT((it.weights() - std::exp(-1.8) * P * t1.weights()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CriticalValue, Examples) {
  const auto on = GraphCorrespondence::cuntz(3);
  const auto cv = critical_value(on, TraceFunctional(Eigen::VectorXd::Constant(1, 0.4)));
  EXPECT_NEAR(cv.beta, std::log(3.0), 1e-12);
  EXPECT_TRUE(cv.is_critical);

  const GraphCorrespondence fib(DirectedGraph::fibonacci());
  const auto cf = critical_value(fib, TraceFunctional(Eigen::Vector2d(0.5, 0.5)));
  EXPECT_NEAR(cf.beta, std::log((1.0 + std::sqrt(5.0)) / 2.0), 1e-10);
  EXPECT_TRUE(cf.is_critical);

  // tau = delta_0 on the reducible example: only the loop at 0 ends at 0, so tau_*(E^n) = 1
  const auto red = GraphCorrespondence::reducible();
  const auto cr = critical_value(red, TraceFunctional::point_mass(3, 0));
  EXPECT_NEAR(cr.beta, 0.0, 1e-12);
  EXPECT_TRUE(cr.undershoots);
  EXPECT_FALSE(cr.faithful);
  EXPECT_NEAR(cr.log_spectral_radius, std::log(2.0), 1e-12);
  const auto crf = critical_value(red, TraceFunctional::uniform(3));
  EXPECT_NEAR(crf.beta, std::log(2.0), 1e-2);

  try {
    critical_value(on, TraceFunctional(Eigen::VectorXd::Zero(1)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroTrace);
  }
}

TEST(LnFixedPoint, DoublingUniform) {
  const auto c = GraphCorrespondence::doubling(8);
  const auto fp = ln_fixed_point(c, std::log(2.0), TraceFunctional::point_mass(8, 0), zero_schedule());
  EXPECT_LT(fp.residual, 1e-8);
  for (std::size_t y = 0; y < 8; ++y) EXPECT_NEAR(fp.tau.at(y), 0.125, 1e-8);
  EXPECT_LT(fp.cross_check, 1e-8);
}

TEST(LnFixedPoint, TwoVertexAgainstEigenOracle) {
  const auto c = GraphCorrespondence::two_vertex();
  const double alpha = std::log((3.0 + std::sqrt(5.0)) / 2.0);
  const auto fp = ln_fixed_point(c, alpha, TraceFunctional(Eigen::Vector2d(0.0, 1.0)), zero_schedule());
  const Eigen::VectorXd v = eigen_perron(c.vertex_matrix());
  for (std::size_t y = 0; y < 2; ++y) EXPECT_NEAR(fp.tau.at(y), v(static_cast<Eigen::Index>(y)), 1e-8);
  EXPECT_LT(fp.residual, 1e-8);
  EXPECT_TRUE(fp.converged);
}

TEST(LnFixedPoint, CuntzAndNotCritical) {
  const auto c = GraphCorrespondence::cuntz(2);
  const auto fp = ln_fixed_point(c, std::log(2.0), TraceFunctional(Eigen::VectorXd::Constant(1, 3.0)), zero_schedule());
  EXPECT_NEAR(fp.tau.at(0), 1.0, 1e-14);
  try {
    ln_fixed_point(c, std::log(2.0) + 0.1, TraceFunctional(Eigen::VectorXd::Ones(1)), zero_schedule());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotCritical);
  }
}

TEST(KmsStateLn, Examples) {
  const auto on = GraphCorrespondence::cuntz(2);
  const auto& g = on.graph();
  const TraceFunctional one(Eigen::VectorXd::Ones(1));
  EXPECT_NEAR(kms_state_ln(on, one, std::log(2.0), diag(g, {"e1", "e2", "e2"})), 0.125, 1e-15);
  EXPECT_EQ(kms_state_ln(on, one, std::log(2.0), {Path::of_ids(g, {"e1"}), Path::of_ids(g, {"e1", "e2"})}), 0.0);

  const auto d = GraphCorrespondence::doubling(8);
  const auto tau = TraceFunctional::uniform(8);
  for (const auto& e : d.graph().edges())
    EXPECT_NEAR(kms_state_ln(d, tau, std::log(2.0), diag(d.graph(), {e.id})), 0.5 * tau.at(e.dst), 1e-15);
  try {
    kms_state_ln(d, TraceFunctional::point_mass(8, 3), std::log(2.0), diag(d.graph(), {"d0_0"}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LNConditionViolated);
  }
}

TEST(KmsStateLn, MatchesGraphModel) {
  const GraphCorrespondence c(DirectedGraph::fibonacci());
  const GraphKmsModel model(DirectedGraph::fibonacci());
  const auto& g = c.graph();
  const auto fp = ln_fixed_point(c, model.beta(), TraceFunctional::uniform(2), zero_schedule());
  const auto y = BasePoint::of_ids(model.graph(), {}, {"a"});
  for (const auto& p : paths_up_to(g, 3))
    EXPECT_NEAR(kms_state_ln(c, fp.tau, model.beta(), {p, p}), model.state(y, {p, p}, model.default_schedule()).value,
                1e-9)
        << p.label(g);
}

TEST(KmsStateLn, FunctionalEquation) {
  {
    const auto c = GraphCorrespondence::two_vertex();
    const double alpha = std::log(c.irreducible_perron().spectral_radius);
    const auto fp = ln_fixed_point(c, alpha, TraceFunctional::uniform(2), zero_schedule());
    const auto tests = monomials_up_to(c.graph(), 3);
    const auto phi = [&](const Monomial& m) { return kms_state_ln(c, fp.tau, alpha, m); };
    const auto table = build_state_table(c.graph(), tests, phi);
    EXPECT_LT(kms_condition_check(c.graph(), table, tests, alpha).max_violation, 1e-8);
    EXPECT_GT(kms_condition_check(c.graph(), table, tests, alpha + 0.1).max_violation, 1e-3);
  }
  {
    const auto c = GraphCorrespondence::doubling(8);
    const auto tau = TraceFunctional::uniform(8);
    const auto tests = monomials_up_to(c.graph(), 2);
    const auto table =
        build_state_table(c.graph(), tests, [&](const Monomial& m) { return kms_state_ln(c, tau, std::log(2.0), m); });
    EXPECT_LT(kms_condition_check(c.graph(), table, tests, std::log(2.0)).max_violation, 1e-12);
  }
}

TEST(Watatani, RecursionMatchesBigIntegerMatrixPower) {
  for (const auto& c : {GraphCorrespondence::two_vertex(), GraphCorrespondence::doubling(8),
                        GraphCorrespondence::reducible()}) {
    const WatataniIndex W(c);
    const std::size_t n = c.num_coefficients();
    std::vector<std::vector<BigInt>> M(n, std::vector<BigInt>(n, 0));
    for (const auto& e : c.graph().edges()) M[e.src][e.dst] += 1;
    std::vector<BigInt> v(n, 1);
    for (std::size_t k = 0; k <= 12; ++k) {
      EXPECT_EQ(W.level(k), v) << "k=" << k;
      std::vector<BigInt> next(n, 0);
      for (std::size_t x = 0; x < n; ++x)
        for (std::size_t y = 0; y < n; ++y) next[x] += M[x][y] * v[y];
      v = next;
    }
  }
  const auto on = GraphCorrespondence::cuntz(3);
  EXPECT_EQ(WatataniIndex(on).level(12)[0], BigInt(531441));
}

TEST(Watatani, FrameSumIsFrameIndependent) {
  for (const auto& c : {GraphCorrespondence::two_vertex(), GraphCorrespondence::cuntz(2)}) {
    const auto& g = c.graph();
    const WatataniIndex W(c);
    const auto id = Eigen::MatrixXd::Identity(g.num_edges(), g.num_edges());
    const auto U = random_parallel_frame(g, 11);
    for (const auto& m : monomials_up_to(g, 2))
      for (std::size_t k = 0; k <= 4; ++k) {
        const auto a = phi_k_frame_sum(c, m, k, id);
        const auto b = phi_k_frame_sum(c, m, k, U);
        EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12) << m.label(g) << " k=" << k;
        // closed form Phi_k e^{-beta_k}, rescaled by e^{beta_k}
        Eigen::VectorXd closed = phi_k(c, W, m, k);
        for (Eigen::Index x = 0; x < closed.size(); ++x)
          closed(x) *= W.level(k)[static_cast<std::size_t>(x)].convert_to<double>();
        EXPECT_LT((a - closed).cwiseAbs().maxCoeff(), 1e-12) << m.label(g) << " k=" << k;
      }
  }
}

TEST(PhiInfinity, Examples) {
  const auto on = GraphCorrespondence::cuntz(2);
  const auto& g = on.graph();
  for (const auto& p : paths_up_to(g, 3)) {
    const auto r = watatani_phi_infinity(on, {p, p});
    EXPECT_EQ(r.value(0), std::pow(2.0, -double(p.length())));
    EXPECT_TRUE(r.converged);
  }
  EXPECT_EQ(watatani_phi_infinity(on, {Path::of_ids(g, {"e1", "e2"}), Path::of_ids(g, {"e1"})}).value(0), 0.0);

  // E_g for a rotation: beta_k = 0, so Phi_k e^{-beta_k} is the same for every k
  const auto rot = GraphCorrespondence::rotation(8);
  const WatataniIndex W(rot);
  for (std::size_t k = 0; k <= 20; ++k)
    for (std::size_t x = 0; x < 8; ++x) EXPECT_EQ(W.level(k)[x], BigInt(1));
  const auto w = diag(rot.graph(), {"g2", "g3"});
  const auto r = watatani_phi_infinity(rot, w);
  for (const auto& s : r.samples) EXPECT_EQ(s, r.samples.front());
  EXPECT_EQ(r.value(2), 1.0);
  EXPECT_FALSE(r.primitive);
}

TEST(QuasiInvariance, Examples) {
  const auto on = GraphCorrespondence::cuntz(2);
  const auto words_on = monomials_up_to(on.graph(), 3);
  EXPECT_LT(quasi_invariance_check(on, TraceFunctional(Eigen::VectorXd::Ones(1)), std::log(2.0), words_on).max_violation,
            1e-10);

  const auto rot = GraphCorrespondence::rotation(8);
  const auto rep = quasi_invariance_check(rot, TraceFunctional::uniform(8), 0.0, monomials_up_to(rot.graph(), 3));
  EXPECT_LT(rep.max_violation, 1e-8);
  EXPECT_TRUE(rep.implication_holds);

  const auto c = GraphCorrespondence::two_vertex();
  const double alpha = std::log(c.irreducible_perron().spectral_radius);
  const auto words = monomials_up_to(c.graph(), 2);
  const auto fp = ln_fixed_point(c, alpha, TraceFunctional::uniform(2), zero_schedule());
  const auto good = quasi_invariance_check(c, fp.tau, alpha, words);
  EXPECT_LT(good.max_violation, 1e-8);
  EXPECT_TRUE(good.all_limits_converged);
  const TraceFunctional off(fp.tau.weights() + Eigen::Vector2d(0.05, -0.05));
  const auto bad = quasi_invariance_check(c, off, alpha, words);
  EXPECT_GT(bad.max_violation, 1e-3);
  EXPECT_GT(bad.ln_residual, 1e-3);
  EXPECT_TRUE(bad.implication_holds);
}

TEST(DpsiHeatTrace, PositivePartAndCriticalBeta) {
  const auto on = GraphCorrespondence::cuntz(2);
  const TraceFunctional one(Eigen::VectorXd::Ones(1));
  EXPECT_NEAR(dpsi_heat_trace(on, one, 1.0, false).value, 1.0 / (1.0 - 2.0 * std::exp(-1.0)), 1e-10);
  const auto c = GraphCorrespondence::two_vertex();
  const auto tau = TraceFunctional::uniform(2);
  const auto cb = critical_beta(dpsi_positive_spectrum(c, tau), 0.0, 3.0, 1e-3);
  EXPECT_NEAR(cb.beta, critical_value(c, tau).beta, 1e-6);
  EXPECT_NEAR(cb.beta, std::log((3.0 + std::sqrt(5.0)) / 2.0), 1e-6);
  try {
    dpsi_heat_trace(on, one, std::log(2.0), false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BelowThreshold);
  }
}

TEST(DpsiHeatTrace, FullTraceFiniteAndMonotone) {
  const auto on = GraphCorrespondence::cuntz(2);
  const TraceFunctional one(Eigen::VectorXd::Ones(1));
  const auto a = dpsi_heat_trace(on, one, std::log(2.0) + 1.0, true);
  const auto b = dpsi_heat_trace(on, one, std::log(2.0) + 0.1, true);
  EXPECT_TRUE(std::isfinite(a.value) && std::isfinite(b.value));
  EXPECT_GT(b.value, a.value);
  EXPECT_GT(a.value, a.positive_part);
  double prev = std::numeric_limits<double>::infinity();
  for (double t = std::log(2.0) + 0.2; t < 3.0; t += 0.3) {
    const double v = dpsi_heat_trace(on, one, t, true).value;
    EXPECT_LT(v, prev);
    prev = v;
  }
  // for O_N: Tr(Q_{n,r}) = N^r N^{r-n}, so P_{n,r} has trace N^{2r-n}(1 - 1/N^2) off the boundary
  const double t = 2.0;
  long double direct = 0.0L;
  for (int r = 0; r <= 80; ++r)
    for (int n = -160; n <= r; ++n) {
      const int lo = std::max(0, n);
      if (r < lo || 2 * r - n > 80) continue;
      const long double q = std::pow(2.0L, 2 * r - n);
      const long double p = r > lo ? q * 0.75L : q;
      const int psi = n == r ? n : -(2 * r - n);
      direct += p * std::exp(-t * std::abs(psi));
    }
  EXPECT_NEAR(dpsi_heat_trace(on, one, t, true).value, static_cast<double>(direct), 1e-9);
}

TEST(CpHeatRatioState, MatchesLnStateOnDoubling) {
  const auto c = GraphCorrespondence::doubling(8);
  const double beta = critical_value(c, TraceFunctional::point_mass(8, 0)).beta;
  EXPECT_NEAR(beta, std::log(2.0), 1e-10);
  const auto sched = LimitSchedule::geometric(std::log(2.0), 0.4, 0.5, 8, ExtrapolationPolicy::Richardson, 0);
  const auto fp = ln_fixed_point(c, std::log(2.0), TraceFunctional::point_mass(8, 0), zero_schedule());
  for (const auto& m : monomials_up_to(c.graph(), 2)) {
    const double ht = cp_heat_ratio_state(c, TraceFunctional::point_mass(8, 0), m, sched).limit;
    EXPECT_NEAR(ht, kms_state_ln(c, fp.tau, std::log(2.0), m), 1e-6) << m.label(c.graph());
  }
}
