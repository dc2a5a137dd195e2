#pragma once

// The acceptance suite: one aggregated check per criterion, shared by the
// acceptance test binary and the reproduce-all command.

#include <boost/multiprecision/cpp_int.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "kmsheat/correspondence.hpp"
#include "kmsheat/graph.hpp"
#include "kmsheat/group_boundary.hpp"
#include "kmsheat/torus.hpp"

namespace kmsheat::acceptance {

struct CriterionResult {
  int id = 0;
  std::string name;
  std::string anchor;
  std::string expected;
  std::string observed;
  std::string tolerance;
  bool pass = false;
  double seconds = 0.0;
  double time_limit = 0.0;
};

namespace detail {

inline std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

/// Collects named sub-checks of one criterion.
class Checks {
 public:
  void add(const std::string& what, double observed, double bound, bool below = true) {
    const bool ok = below ? (observed < bound) : (observed > bound);
    all_ = all_ && ok;
    if (!parts_.empty()) parts_ += "; ";
    parts_ += what + " " + fmt(observed) + (below ? " < " : " > ") + fmt(bound) + (ok ? "" : " FAILED");
  }
  void require(const std::string& what, bool ok) {
    all_ = all_ && ok;
    if (!parts_.empty()) parts_ += "; ";
    parts_ += what + (ok ? " ok" : " FAILED");
  }
  bool pass() const { return all_; }
  const std::string& text() const { return parts_; }

 private:
  bool all_ = true;
  std::string parts_;
};

inline Monomial diagonal(const Path& p) { return {p, p}; }

inline Eigen::VectorXd eigen_perron(const Eigen::MatrixXd& M) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(M);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()(i).real() > es.eigenvalues()(best).real()) best = i;
  Eigen::VectorXd v = es.eigenvectors().col(best).real();
  return v / v.sum();
}

inline LimitSchedule zero_schedule() {
  return LimitSchedule::geometric(0.0, 0.4, 0.5, 8, ExtrapolationPolicy::Richardson, 0);
}

inline TrigPolynomial random_trig(int d, std::mt19937& rng, int K) {
  std::uniform_int_distribution<int> freq(-K, K);
  std::normal_distribution<double> coef(0.0, 1.0);
  TrigPolynomial p(d);
  for (int i = 0; i < 4; ++i) {
    LatticePoint k(d);
    for (int& x : k) x = freq(rng);
    LatticePoint mk(k);
    for (int& x : mk) x = -x;
    const Complex c(coef(rng), k == mk ? 0.0 : coef(rng));
    p.set(k, p.at(k) + c);
    p.set(mk, p.at(mk) + std::conj(c));
  }
  p.set(LatticePoint(d, 0), p.zero_mode() + Complex(coef(rng), 0.0));
  return p;
}

inline CriterionResult timed(int id, std::string name, std::string anchor, std::string expected,
                             std::string tolerance, double limit, const std::function<void(Checks&)>& body) {
  CriterionResult r;
  r.id = id;
  r.name = std::move(name);
  r.anchor = std::move(anchor);
  r.expected = std::move(expected);
  r.tolerance = std::move(tolerance);
  r.time_limit = limit;
  Checks c;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.require(std::string("exception: ") + e.what(), false);
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.observed = c.text();
  r.pass = c.pass() && r.seconds < limit;
  if (r.seconds >= limit) r.observed += "; runtime limit exceeded";
  return r;
}

}  // namespace detail

inline CriterionResult criterion1() {
  return detail::timed(
      1, "O_N gauge KMS state", "graph KMS state of O_N equals N^{-|mu|} at beta = log N", "phi(S_mu S_mu^*) = N^{-|mu|}",
      "1e-4 vs truncated ratio; beta 1e-3", 5.0, [](detail::Checks& c) {
        for (std::size_t N : {2u, 3u}) {
          const GraphKmsModel model(DirectedGraph::cuntz(N));
          const auto& g = model.graph();
          const auto y = BasePoint(g, {}, {0});
          const PathCounts pc(g);
          const std::size_t n = 60;
          const BigInt den = pc.ending_at(0, n);
          double worst = 0.0, closed = 0.0;
          for (const auto& p : paths_up_to(g, 3)) {
            const double v = model.state(y, detail::diagonal(p), model.default_schedule()).value;
            const BigInt num = pc.to_target(0, n - p.length())[p.range(g)];
            worst = std::max(worst, std::fabs(v - boost::multiprecision::cpp_rational(num, den).convert_to<double>()));
            closed = std::max(closed, std::fabs(v - std::pow(double(N), -double(p.length()))));
          }
          const auto cb = critical_beta(model.positive_spectrum(y), 0.0, 3.0, 1e-3);
          const std::string tag = "N=" + std::to_string(N);
          c.add(tag + " |state - truncated ratio|", worst, 1e-4);
          c.add(tag + " |state - N^-|mu||", closed, 1e-4);
          c.add(tag + " |beta - log N|", std::fabs(cb.beta - std::log(double(N))), 1e-3);
        }
      });
}

inline CriterionResult criterion2() {
  return detail::timed(
      2, "KMS functional equation", "graph KMS states satisfy the KMS condition at beta = log r(A)",
      "violation at log r < 1e-8; at log r + 0.1 > 1e-3", "1e-8 / 1e-3", 10.0, [](detail::Checks& c) {
        for (const auto& [tag, graph] :
             std::vector<std::pair<std::string, DirectedGraph>>{{"O_2", DirectedGraph::cuntz(2)},
                                                               {"Fibonacci", DirectedGraph::fibonacci()}}) {
          const GraphKmsModel model(graph);
          const auto& g = model.graph();
          const auto y = BasePoint(g, {}, {0});
          const auto tests = monomials_up_to(g, 3);
          const auto sched = model.default_schedule();
          const auto table = build_state_table(g, tests, [&](const Monomial& m) { return model.state(y, m, sched).value; });
          c.add(tag + " violation", kms_condition_check(g, table, tests, model.beta()).max_violation, 1e-8);
          c.add(tag + " violation at beta+0.1", kms_condition_check(g, table, tests, model.beta() + 0.1).max_violation,
                1e-3, false);
        }
      });
}

inline CriterionResult criterion3() {
  return detail::timed(
      3, "LN fixed point", "LN equation tau = e^{-beta} F(tau) has the Perron fixed point",
      "fixed point equals the eigen-decomposition Perron vector", "residual 1e-8; components 1e-8", 5.0,
      [](detail::Checks& c) {
        const auto d = GraphCorrespondence::doubling(8);
        const auto tv = GraphCorrespondence::two_vertex();
        for (const auto& [tag, corr, seed] :
             std::vector<std::tuple<std::string, GraphCorrespondence, TraceFunctional>>{
                 {"doubling Z/8", d, TraceFunctional::point_mass(8, 0)},
                 {"two-vertex", tv, TraceFunctional(Eigen::Vector2d(0.0, 1.0))}}) {
          const double alpha = std::log(corr.irreducible_perron().spectral_radius);
          const auto fp = ln_fixed_point(corr, alpha, seed, detail::zero_schedule());
          const Eigen::VectorXd v = detail::eigen_perron(corr.vertex_matrix());
          c.add(tag + " residual", fp.residual, 1e-8);
          c.add(tag + " |tau - eigen oracle|", (fp.tau.weights() - v).cwiseAbs().maxCoeff(), 1e-8);
        }
      });
}

inline CriterionResult criterion4() {
  return detail::timed(4, "LN state equals heat-ratio state", "the LN-fixed-point KMS state is the heat-trace-ratio state",
                       "kms_state_ln = heat-ratio state on words of length <= 2", "1e-6", 10.0,
                       [](detail::Checks& c) {
                         const auto corr = GraphCorrespondence::doubling(8);
                         const double beta = std::log(2.0);
                         const auto tau0 = TraceFunctional::point_mass(8, 0);
                         const auto fp = ln_fixed_point(corr, beta, tau0, detail::zero_schedule());
                         const auto sched =
                             LimitSchedule::geometric(beta, 0.4, 0.5, 8, ExtrapolationPolicy::Richardson, 0);
                         double worst = 0.0;
                         for (const auto& m : monomials_up_to(corr.graph(), 2))
                           worst = std::max(worst, std::fabs(cp_heat_ratio_state(corr, tau0, m, sched).limit -
                                                             kms_state_ln(corr, fp.tau, beta, m)));
                         c.add("max |LN - heat ratio|", worst, 1e-6);
                       });
}

inline CriterionResult criterion5() {
  return detail::timed(
      5, "Watatani index and Phi_infinity", "e^{beta_k} path-count recursion; Phi_oo on O_N; quasi-invariance of LN traces",
      "exact recursion k <= 12; Phi_oo = N^{-|mu|} exactly; quasi-invariance < 1e-8", "exact / exact / 1e-8", 5.0,
      [](detail::Checks& c) {
        bool exact = true;
        for (const auto& corr : {GraphCorrespondence::two_vertex(), GraphCorrespondence::doubling(8),
                                 GraphCorrespondence::reducible(), GraphCorrespondence::cuntz(3)}) {
          const WatataniIndex W(corr);
          const std::size_t n = corr.num_coefficients();
          std::vector<BigInt> v(n, 1);
          for (std::size_t k = 0; k <= 12; ++k) {
            exact = exact && W.level(k) == v;
            std::vector<BigInt> next(n, 0);
            for (const auto& e : corr.graph().edges()) next[e.src] += v[e.dst];
            v = next;
          }
        }
        c.require("big-integer recursion k <= 12", exact);
        bool phi_exact = true;
        for (std::size_t N : {2u, 3u}) {
          const auto on = GraphCorrespondence::cuntz(N);
          for (const auto& p : paths_up_to(on.graph(), 3))
            phi_exact = phi_exact && watatani_phi_infinity(on, detail::diagonal(p)).value(0) ==
                                         std::pow(double(N), -double(p.length()));
        }
        c.require("Phi_oo(S_mu S_mu^*) == N^{-|mu|}", phi_exact);
        double qi = 0.0;
        const auto on = GraphCorrespondence::cuntz(2);
        qi = std::max(qi, quasi_invariance_check(on, TraceFunctional(Eigen::VectorXd::Ones(1)), std::log(2.0),
                                                 monomials_up_to(on.graph(), 3))
                              .max_violation);
        const auto tv = GraphCorrespondence::two_vertex();
        const double alpha = std::log(tv.irreducible_perron().spectral_radius);
        const auto fp = ln_fixed_point(tv, alpha, TraceFunctional::uniform(2), detail::zero_schedule());
        qi = std::max(qi, quasi_invariance_check(tv, fp.tau, alpha, monomials_up_to(tv.graph(), 2)).max_violation);
        c.add("quasi-invariance violation", qi, 1e-8);
      });
}

inline CriterionResult criterion6() {
  return detail::timed(
      6, "Patterson-Sullivan on F_2", "Patterson-Sullivan crossed-product state is KMS_1 for the Radon-Nikodym flow",
      "beta = log 3; mu(C_w) = (1/4) 3^{-(|w|-1)}; partitions sum to 1; cocycle identity; KMS_1",
      "1e-4 / 1e-6 / exact / 1e-10 / 1e-8 (control > 1e-3)", 10.0, [](detail::Checks& c) {
        const FreeGroup G(2);
        c.add("|beta - log 3|", std::fabs(poincare_critical(G).beta - std::log(3.0)), 1e-4);
        double worst = 0.0;
        bool converged = true;
        for (std::size_t m = 1; m <= 5; ++m)
          for (const auto& w : G.sphere(m)) {
            const auto mu = ps_cylinder_measure(G, {w}, ps_default_schedule(G, m));
            converged = converged && mu.converged;
            worst = std::max(worst, std::fabs(mu.value - 0.25 * std::pow(3.0, 1.0 - double(m))));
          }
        c.add("max |mu(C_w) - (1/4)3^{-(|w|-1)}|, |w| <= 5", worst, 1e-6);
        c.require("all cylinder limits converged", converged);
        bool exact = true;
        for (std::size_t m = 1; m <= 6; ++m) {
          boost::multiprecision::cpp_rational s = 0;
          for (const auto& w : G.sphere(m)) s += ps_cylinder_measure_exact(G, {w});
          exact = exact && s == 1;
        }
        c.require("partition sums == 1 for levels 1..6", exact);
        const CylinderMeasureTable mu(G);
        double coc = 0.0;
        for (const auto& g : G.sphere(2))
          for (const auto& h : G.sphere(2))
            for (const auto& w : G.sphere(5)) {
              const Word hw = G.multiply(h, w);
              if (G.cancellation(h, w) >= w.size() || G.cancellation(g, hw) >= hw.size()) continue;
              const double rhs = rn_cocycle(G, g, {hw}, mu) * rn_cocycle(G, h, {w}, mu);
              coc = std::max(coc, std::fabs(rn_cocycle(G, G.multiply(g, h), {w}, mu) - rhs) / rhs);
            }
        c.add("cocycle identity relative error", coc, 1e-10);
        CylinderFunction f, h;
        f.coeffs = {{G.parse("a"), 2.0}, {G.parse("bA"), -1.0}, {Word{}, 0.5}};
        h.coeffs = {{G.parse("B"), 1.0}, {G.parse("ab"), 3.0}};
        std::vector<CrossedElement> set;
        for (const std::string s : {"e", "a", "A", "b", "ab", "BA", "aB", "bA"}) {
          const Word g = s == "e" ? Word{} : G.parse(s);
          set.push_back({f, g});
          set.push_back({h, g});
        }
        const std::size_t depth = required_depth(set);
        c.add("KMS_1 violation", crossed_product_kms_check(G, set, depth, mu).max_violation, 1e-8);
        c.add("KMS violation with exponent 1.1", crossed_product_kms_check(G, set, depth, mu, 1.1).max_violation, 1e-3,
              false);
      });
}

inline CriterionResult criterion7(unsigned seed = 20260) {
  return detail::timed(
      7, "Flat torus", "heat-trace ratio state on the torus is the normalized integral; F_D symmetry",
      "Weyl exponent d; state = a_0 exactly; F_D ratio -> 0 with order >= 0.9", "5% / exact / 0.9", 30.0,
      [seed](detail::Checks& c) {
        const auto s = weyl_default_schedule();
        for (int d : {1, 2}) {
          const TorusSpectrum spec(d, d == 1 ? 4000 : 1000);
          const auto fit = weyl_fit(spec, s);
          c.add("d=" + std::to_string(d) + " |p/d - 1|", std::fabs(fit.exponent / d - 1.0), 0.05);
        }
        std::mt19937 rng(seed);
        const TorusSpectrum line(1, 2000), plane(2, 200);
        bool exact = true;
        for (int i = 0; i < 20; ++i) {
          const int d = 1 + i % 2;
          const auto p = detail::random_trig(d, rng, 3);
          for (double t : s.offsets) exact = exact && torus_trace_ratio(d == 1 ? line : plane, p, t) == p.zero_mode();
        }
        c.require("20 random trig polynomials: state == a_0 at every t", exact);
        const auto fd = fd_symmetry_check(TorusSpectrum(1, 4000), TrigPolynomial::constant(1, 1.0), s);
        c.add("|F_D ratio limit|", std::fabs(fd.f_limit), 1e-6);
        c.add("F_D decay order", fd.decay_order, 0.9, false);
        c.add("|P_D ratio - full ratio| limit", std::fabs(fd.pd_limit - fd.full_limit), 1e-10);
      });
}

inline CriterionResult criterion8() {
  return detail::timed(
      8, "Regular variation and Karamata", "heat asymptotics of psi-summable sequences; conditions exp2 and invas",
      "Karamata ratio 1; A_Psi(alpha) = alpha (1/(1+t)), alpha^2 (log t / t); invas constant 1",
      "2% (q=1) / 5% (q=1/2) / 2%", 10.0, [](detail::Checks& c) {
        auto mu = [](double n) { return 1.0 / (1.0 + n); };
        const auto psi = PsiFunction::inverse_linear();
        c.add("Karamata q=1 deviation", karamata_heat(mu, psi, 1.0, {100, 200, 400, 800, 1600, 3200, 6400, 10000}).deviation,
              0.02);
        c.add("Karamata q=1/2 deviation", karamata_heat(mu, psi, 0.5, {8, 12, 16, 24, 32, 48, 64, 96}).deviation, 0.05);
        for (const auto& [tag, f, power] :
             std::vector<std::tuple<std::string, PsiFunction, double>>{{"1/(1+t)", PsiFunction::inverse_linear(), 1.0},
                                                                       {"log t/t", PsiFunction::log_over_linear(), 2.0}}) {
          const auto r = regular_variation_diagnostics(f, -1.0);
          c.require(tag + " index, exp2, invas", r.pass());
          double prod = 1.0;
          for (const auto& [alpha, A] : r.exp2_limits) {
            c.add(tag + " |A(" + detail::fmt(alpha) + ") / alpha^k - 1|", std::fabs(A / std::pow(alpha, power) - 1.0),
                  0.02);
            prod *= A;
          }
          c.add(tag + " |A(1/2) A(2) - 1|", std::fabs(prod - 1.0), 0.02);
          c.add(tag + " |invas constant - 1|", std::fabs(r.invas_constant - 1.0), 0.02);
        }
      });
}

inline CriterionResult criterion9() {
  return detail::timed(
      9, "Dixmier identity", "Dixmier trace of P_D a (1+D^2)^{-1/2} equals the heat-ratio state",
      "a = 1 -> 1; a = 1 + cos -> 1 with improvement from N = 2048", "2% / 10% at N = 4096", 120.0,
      [](detail::Checks& c) {
        const auto one = dixmier_vs_state(TrigPolynomial::constant(1, 1.0), 4096, dixmier_default_schedule(4096));
        c.add("a=1 relative error", one.relative_error, 0.02);
        TrigPolynomial a = TrigPolynomial::constant(1, 1.0);
        a.set({1}, 0.5);
        a.set({-1}, 0.5);
        const auto lo = dixmier_vs_state(a, 2048, dixmier_default_schedule(2048));
        const auto hi = dixmier_vs_state(a, 4096, dixmier_default_schedule(4096));
        c.add("a=1+cos relative error N=4096", hi.relative_error, 0.10);
        c.require("improvement " + detail::fmt(lo.relative_error) + " -> " + detail::fmt(hi.relative_error),
                  hi.relative_error <= lo.relative_error);
      });
}

inline CriterionResult criterion10() {
  return detail::timed(
      10, "Cross-module critical values", "critical inverse temperatures agree across models",
      "critical_beta = critical_value = poincare_critical = log r(A) on shared instances", "1e-3", 10.0,
      [](detail::Checks& c) {
        for (const auto& [tag, graph] :
             std::vector<std::pair<std::string, DirectedGraph>>{{"O_2", DirectedGraph::cuntz(2)},
                                                               {"O_3", DirectedGraph::cuntz(3)},
                                                               {"Fibonacci", DirectedGraph::fibonacci()}}) {
          const GraphKmsModel model(graph);
          const GraphCorrespondence corr(graph);
          const auto y = BasePoint(model.graph(), {}, {0});
          const double spectral = critical_beta(model.positive_spectrum(y), 0.0, 3.0, 1e-3).beta;
          const double cv = critical_value(corr, TraceFunctional::uniform(corr.num_coefficients())).beta;
          const double lr = model.beta();
          c.add(tag + " |critical_beta - log r|", std::fabs(spectral - lr), 1e-3);
          c.add(tag + " |critical_value - log r|", std::fabs(cv - lr), 1e-3);
        }
        const FreeGroup G(2);
        const double pc = poincare_critical(G).beta;
        c.add("F_2 |poincare - critical_beta|", std::fabs(pc - critical_beta(length_spectrum(G), 0.0, 3.0, 1e-3).beta),
              1e-3);
        c.add("F_2 vs O_3 |poincare - log r|", std::fabs(pc - GraphKmsModel(DirectedGraph::cuntz(3)).beta()), 1e-3);
      });
}

inline std::vector<CriterionResult> run_all(unsigned seed = 20260) {
  return {criterion1(), criterion2(), criterion3(), criterion4(), criterion5(),
          criterion6(), criterion7(seed), criterion8(), criterion9(), criterion10()};
}

inline CriterionResult run_one(int id, unsigned seed = 20260) {
  switch (id) {
    case 1: return criterion1();
    case 2: return criterion2();
    case 3: return criterion3();
    case 4: return criterion4();
    case 5: return criterion5();
    case 6: return criterion6();
    case 7: return criterion7(seed);
    case 8: return criterion8();
    case 9: return criterion9();
    case 10: return criterion10();
  }
  fail(ErrorCode::InvalidInput, "no criterion " + std::to_string(id));
}

/// Perturbed inputs; each detector passes when it flags the perturbation.
inline std::vector<CriterionResult> run_negative_controls(unsigned seed = 20260) {
  std::vector<CriterionResult> out;
  out.push_back(detail::timed(101, "graph KMS at wrong beta", "KMS condition detector", "violation > 1e-3", "1e-3", 10.0,
                              [](detail::Checks& c) {
                                const GraphKmsModel model(DirectedGraph::fibonacci());
                                const auto& g = model.graph();
                                const auto y = BasePoint(g, {}, {0});
                                const auto tests = monomials_up_to(g, 2);
                                const auto sched = model.default_schedule();
                                const auto table = build_state_table(
                                    g, tests, [&](const Monomial& m) { return model.state(y, m, sched).value; });
                                c.add("violation at beta - 0.1",
                                      kms_condition_check(g, table, tests, model.beta() - 0.1).max_violation, 1e-3,
                                      false);
                              }));
  out.push_back(detail::timed(102, "non-LN trace", "quasi-invariance detector", "violation > 1e-3", "1e-3", 5.0,
                              [](detail::Checks& c) {
                                const auto tv = GraphCorrespondence::two_vertex();
                                const double alpha = std::log(tv.irreducible_perron().spectral_radius);
                                const auto fp =
                                    ln_fixed_point(tv, alpha, TraceFunctional::uniform(2), detail::zero_schedule());
                                const TraceFunctional off(fp.tau.weights() + Eigen::Vector2d(0.05, -0.05));
                                c.add("quasi-invariance violation",
                                      quasi_invariance_check(tv, off, alpha, monomials_up_to(tv.graph(), 2)).max_violation,
                                      1e-3, false);
                              }));
  out.push_back(detail::timed(103, "Radon-Nikodym exponent 1.1", "crossed-product KMS detector", "violation > 1e-3",
                              "1e-3", 10.0, [](detail::Checks& c) {
                                const FreeGroup G(2);
                                const CylinderMeasureTable mu(G);
                                const auto one = CylinderFunction::constant(1.0);
                                std::vector<CrossedElement> set{{one, G.parse("a")}, {one, G.parse("A")},
                                                                {one, G.parse("ab")}, {one, G.parse("BA")}};
                                c.add("violation", crossed_product_kms_check(G, set, required_depth(set), mu, 1.1).max_violation,
                                      1e-3, false);
                              }));
  out.push_back(detail::timed(104, "odd perturbation of M_a", "F_D symmetry detector", "|F_D limit| > 1e-3", "1e-3", 10.0,
                              [seed](detail::Checks& c) {
                                std::mt19937 rng(seed);
                                std::uniform_real_distribution<double> eta(0.05, 0.5);
                                const double e = eta(rng);
                                const auto r = fd_symmetry_check(TorusSpectrum(1, 4000), TrigPolynomial::constant(1, 1.0),
                                                                 weyl_default_schedule(), e);
                                c.add("|F_D ratio limit|", std::fabs(r.f_limit), 1e-3, false);
                                c.require("symmetry flagged as broken", !r.symmetric);
                              }));
  out.push_back(detail::timed(105, "Dixmier at 0.1% tolerance", "slow-rate diagnostic", "relative error > 1e-3",
                              "1e-3", 120.0, [](detail::Checks& c) {
                                TrigPolynomial a = TrigPolynomial::constant(1, 1.0);
                                a.set({1}, 0.5);
                                a.set({-1}, 0.5);
                                c.add("relative error at N=4096",
                                      dixmier_vs_state(a, 4096, dixmier_default_schedule(4096)).relative_error, 1e-3,
                                      false);
                              }));
  return out;
}

inline std::string summary_line(const CriterionResult& r) {
  std::ostringstream os;
  os << (r.pass ? "PASS" : "FAIL") << " criterion " << r.id << " (" << r.name << "): " << r.observed;
  return os.str();
}

}  // namespace kmsheat::acceptance
