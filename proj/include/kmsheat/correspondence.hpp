#pragma once

// Cuntz-Pimsner data of a correspondence over functions on a finite set Y,
// presented by a multigraph: xi_e with (xi_e|xi_f)_A = delta_{ef} p_{r(e)} and
// a . xi_e = a(s(e)) xi_e. Traces on A are nonnegative vectors on Y.

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kmsheat/asymptotics.hpp"
#include "kmsheat/errors.hpp"
#include "kmsheat/graph.hpp"
#include "kmsheat/perron.hpp"
#include "kmsheat/spectral.hpp"

namespace kmsheat {

using LongVector = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
using LongMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

/// tau(a) = sum_y a(y) weight(y).
class TraceFunctional {
 public:
  explicit TraceFunctional(Eigen::VectorXd weights) : w_(std::move(weights)) {
    if (w_.size() == 0) fail(ErrorCode::InvalidInput, "trace needs at least one weight");
    for (Eigen::Index i = 0; i < w_.size(); ++i)
      if (!std::isfinite(w_(i)) || w_(i) < 0.0) fail(ErrorCode::NegativeWeight, "trace weights must be nonnegative");
  }

  static TraceFunctional uniform(std::size_t n) {
    return TraceFunctional(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n)));
  }
  static TraceFunctional point_mass(std::size_t n, std::size_t y) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    w(static_cast<Eigen::Index>(y)) = 1.0;
    return TraceFunctional(w);
  }

  const Eigen::VectorXd& weights() const { return w_; }
  double operator()(const Eigen::VectorXd& a) const { return a.dot(w_); }
  double at(std::size_t y) const { return w_(static_cast<Eigen::Index>(y)); }
  double total() const { return w_.sum(); }
  bool faithful() const { return w_.minCoeff() > 0.0; }
  bool normalized(double tol = 1e-12) const { return std::fabs(total() - 1.0) <= tol; }
  TraceFunctional normalize() const {
    if (total() <= 0.0) fail(ErrorCode::ZeroTrace, "cannot normalize the zero trace");
    return TraceFunctional(w_ / total());
  }
  std::size_t size() const { return static_cast<std::size_t>(w_.size()); }

 private:
  Eigen::VectorXd w_;
};

class GraphCorrespondence {
 public:
  explicit GraphCorrespondence(DirectedGraph g) : g_(std::move(g)), M_(g_.vertex_matrix()) {
    try {
      PerronData d = perron_data(Eigen::MatrixXd::Identity(M_.rows(), M_.cols()) + M_, 1e-14);
      d.spectral_radius -= 1.0;
      perron_ = std::move(d);
    } catch (const Error& e) {
      perron_error_ = e.what();
    }
  }

  /// C^N over C.
  static GraphCorrespondence cuntz(std::size_t n) { return GraphCorrespondence(DirectedGraph::cuntz(n)); }

  /// Z/n with edges y -> 2y and y -> 2y+1 (the two inverse branches of the doubling map).
  static GraphCorrespondence doubling(std::size_t n = 8) {
    std::vector<std::string> v;
    std::vector<DirectedGraph::EdgeSpec> e;
    for (std::size_t y = 0; y < n; ++y) v.push_back(std::to_string(y));
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t b = 0; b < 2; ++b)
        e.push_back({"d" + std::to_string(y) + "_" + std::to_string(b), v[y], v[(2 * y + b) % n]});
    return GraphCorrespondence(DirectedGraph(v, e));
  }

  /// E_g for the rotation g(y) = y + 1 on Z/n: one edge y -> g(y).
  static GraphCorrespondence rotation(std::size_t n = 8) {
    std::vector<std::string> v;
    std::vector<DirectedGraph::EdgeSpec> e;
    for (std::size_t y = 0; y < n; ++y) v.push_back(std::to_string(y));
    for (std::size_t y = 0; y < n; ++y) e.push_back({"g" + std::to_string(y), v[y], v[(y + 1) % n]});
    return GraphCorrespondence(DirectedGraph(v, e));
  }

  /// Vertex matrix [[2,1],[1,1]].
  static GraphCorrespondence two_vertex() {
    return GraphCorrespondence(DirectedGraph(
        {"a", "b"}, {{"a1", "a", "a"}, {"a2", "a", "a"}, {"ab", "a", "b"}, {"ba", "b", "a"}, {"b1", "b", "b"}}));
  }

  /// Reducible vertex matrix [[1,1,0],[0,2,1],[0,0,1]].
  static GraphCorrespondence reducible() {
    return GraphCorrespondence(DirectedGraph({"0", "1", "2"}, {{"l0", "0", "0"},
                                                               {"x01", "0", "1"},
                                                               {"l1a", "1", "1"},
                                                               {"l1b", "1", "1"},
                                                               {"x12", "1", "2"},
                                                               {"l2", "2", "2"}}));
  }

  const DirectedGraph& graph() const { return g_; }
  const Eigen::MatrixXd& vertex_matrix() const { return M_; }
  std::size_t num_coefficients() const { return g_.num_vertices(); }
  std::size_t frame_size() const { return g_.num_edges(); }

  /// Perron data of I + M with r(M) = r(I+M) - 1; throws NotPrimitive unless M is irreducible.
  const PerronData& irreducible_perron() const {
    if (!perron_) fail(ErrorCode::NotPrimitive, "vertex matrix is reducible: " + perron_error_);
    return *perron_;
  }

  bool irreducible() const { return perron_.has_value(); }

  bool primitive() const {
    try {
      primitivity_exponent(M_);
      return true;
    } catch (const Error&) {
      return false;
    }
  }

  /// Spectral radius of M from a dense eigensolver.
  double spectral_radius() const {
    Eigen::EigenSolver<Eigen::MatrixXd> es(M_, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }

 private:
  DirectedGraph g_;
  Eigen::MatrixXd M_;
  std::optional<PerronData> perron_;
  std::string perron_error_;
};

namespace detail {

inline LongVector to_long(const Eigen::VectorXd& v) { return v.cast<long double>(); }

inline void require_size(const GraphCorrespondence& c, const TraceFunctional& tau) {
  if (tau.size() != c.num_coefficients()) fail(ErrorCode::InvalidInput, "trace size does not match the coefficient set");
}

}  // namespace detail

/// Tr^{E^{(x)n}}_tau(a) = sum over length-n paths rho of a(s(rho)) tau(r(rho)).
inline double induced_trace(const GraphCorrespondence& c, const TraceFunctional& tau, const Eigen::VectorXd& a,
                            std::size_t n) {
  detail::require_size(c, tau);
  if (static_cast<std::size_t>(a.size()) != c.num_coefficients())
    fail(ErrorCode::InvalidInput, "coefficient function has the wrong size");
  const LongMatrix M = c.vertex_matrix().cast<long double>();
  LongVector v = detail::to_long(tau.weights());
  for (std::size_t k = 0; k < n; ++k) v = M * v;
  return static_cast<double>(detail::to_long(a).dot(v));
}

/// (F tau)_x = e^{-alpha} sum_{s(e)=x} tau(r(e)).
inline TraceFunctional ln_map(const GraphCorrespondence& c, const TraceFunctional& tau, double alpha) {
  detail::require_size(c, tau);
  return TraceFunctional(std::exp(-alpha) * (c.vertex_matrix() * tau.weights()));
}

/// sup-norm of F tau - tau for normalized tau.
inline double ln_residual(const GraphCorrespondence& c, const TraceFunctional& tau, double alpha) {
  const TraceFunctional t = tau.normalize();
  return (ln_map(c, t, alpha).weights() - t.weights()).cwiseAbs().maxCoeff();
}

struct CriticalValue {
  double beta = 0.0;
  bool is_critical = false;
  bool faithful = false;
  double log_spectral_radius = 0.0;
  bool undershoots = false;  ///< beta below log r(M)
  double polynomial_exponent = 0.0;
  std::size_t levels = 0;
};

/// beta(E, tau) from the growth of tau_*(E^{(x)n}) = 1^T M^n tau.
inline CriticalValue critical_value(const GraphCorrespondence& c, const TraceFunctional& tau,
                                    std::size_t levels = 400) {
  detail::require_size(c, tau);
  if (tau.total() <= 0.0) fail(ErrorCode::ZeroTrace, "trace is zero");
  const LongMatrix M = c.vertex_matrix().cast<long double>();
  LongVector v = detail::to_long(tau.weights());
  std::vector<long double> logs(levels + 1);
  long double shift = 0.0L;
  for (std::size_t n = 0; n <= levels; ++n) {
    if (n > 0) v = M * v;
    const long double s = v.sum();
    if (!(s > 0.0L)) fail(ErrorCode::ZeroTrace, "tau_*(E^n) vanishes at n = " + std::to_string(n));
    logs[n] = shift + std::log(s);
    shift += std::log(s);
    v /= s;
  }
  // ratio test with Aitken acceleration on q_n = s_{n+1}/s_n
  auto q = [&](std::size_t n) { return std::exp(logs[n + 1] - logs[n]); };
  const std::size_t n = levels - 2;
  const long double q0 = q(n - 1), q1 = q(n), q2 = q(n + 1);
  const long double den = q2 - 2.0L * q1 + q0;
  long double acc = q2;
  if (std::fabs(den) > 1e-30L) {
    const long double a = q2 - (q2 - q1) * (q2 - q1) / den;
    if (std::isfinite(static_cast<double>(a)) && a > 0.0L) acc = a;
  }
  // periodic data make the ratios oscillate; fall back to the averaged growth rate
  const long double spread = std::fabs(q2 - q1);
  CriticalValue out;
  out.beta = spread > 1e-6L * q2 ? static_cast<double>((logs[levels] - logs[levels / 2]) / (levels - levels / 2))
                                 : static_cast<double>(std::log(acc));
  out.beta = std::max(0.0, out.beta);
  out.levels = levels;
  out.faithful = tau.faithful();
  out.log_spectral_radius = std::log(c.spectral_radius());
  out.undershoots = out.beta < out.log_spectral_radius - 1e-6;

  // sum_n e^{-beta n} s_n diverges iff the fitted polynomial order of e^{-beta n} s_n exceeds -1
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t m = 0;
  for (std::size_t k = levels / 2; k <= levels; ++k) {
    const double x = std::log(static_cast<double>(k));
    const double y = static_cast<double>(logs[k]) - out.beta * static_cast<double>(k);
    sx += x, sy += y, sxx += x * x, sxy += x * y, ++m;
  }
  out.polynomial_exponent = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  out.is_critical = out.polynomial_exponent > -1.0;
  return out;
}

struct LnFixedPoint {
  TraceFunctional tau{Eigen::VectorXd::Ones(1)};
  double residual = 0.0;            ///< |F tau - tau|_oo
  bool converged = false;
  double error_estimate = 0.0;      ///< max extrapolation error over components
  TraceFunctional power_iteration{Eigen::VectorXd::Ones(1)};
  double cross_check = 0.0;         ///< |tau - power_iteration|_oo
  std::vector<LimitEstimate> components;
};

namespace detail {

/// S^t tau = sum_n e^{-tn} F^n tau with F = e^{-alpha} M, truncated when the
/// tail certified by the Perron supersolution u is below tol times the sum.
inline LongVector abel_sum(const GraphCorrespondence& c, const LongVector& tau, double alpha, double t, double tol,
                           double* tail_out) {
  const auto& P = c.irreducible_perron();
  const Eigen::VectorXd& u = P.right;
  const LongMatrix F = (std::exp(-static_cast<long double>(alpha)) * c.vertex_matrix().cast<long double>());
  // F u <= rho u componentwise
  const Eigen::VectorXd Fu = std::exp(-alpha) * (c.vertex_matrix() * u);
  const double rho = (Fu.array() / u.array()).maxCoeff() * (1.0 + 1e-15);
  const double kappa = (tau.cast<double>().array() / u.array()).maxCoeff();
  const double q = rho * std::exp(-t);
  if (!(q < 1.0)) fail(ErrorCode::DivergentSeries, "Abel sum diverges at this t");
  LongVector acc = LongVector::Zero(tau.size());
  LongVector term = tau;
  long double damp = 1.0L;
  const long double et = std::exp(-static_cast<long double>(t));
  for (std::size_t n = 0;; ++n) {
    acc += damp * term;
    const double tail = kappa * u.sum() * std::pow(q, static_cast<double>(n + 1)) / (1.0 - q);
    if (tail <= tol * static_cast<double>(acc.sum()) || n > 50'000'000) {
      *tail_out = tail;
      break;
    }
    term = F * term;
    damp *= et;
  }
  return acc;
}

}  // namespace detail

/// Fixed point of F at the critical alpha as the extended limit t -> 0 of the
/// normalized Abel sums S^t tau.
inline LnFixedPoint ln_fixed_point(const GraphCorrespondence& c, double alpha, const TraceFunctional& seed,
                                   const LimitSchedule& schedule, double tol = 1e-15,
                                   const ExtrapolationOptions& opt = {1e-9, 1e-8, -1}) {
  detail::require_size(c, seed);
  if (seed.total() <= 0.0) fail(ErrorCode::ZeroTrace, "seed trace is zero");
  if (schedule.at_infinity || schedule.beta != 0.0)
    fail(ErrorCode::InvalidInput, "fixed-point schedule must approach t = 0");
  const auto& P = c.irreducible_perron();
  const double rho = P.spectral_radius * std::exp(-alpha);
  if (rho < 1.0 - 1e-9) fail(ErrorCode::NotCritical, "S^t tau stays bounded: alpha exceeds the critical value");
  if (rho > 1.0 + 1e-9) fail(ErrorCode::InvalidInput, "alpha lies below the critical value");

  const auto ts = schedule.points();
  const std::size_t n = c.num_coefficients();
  std::vector<std::vector<double>> samples(n, std::vector<double>(ts.size()));
  const LongVector s0 = detail::to_long(seed.weights());
  for (std::size_t j = 0; j < ts.size(); ++j) {
    double tail = 0.0;
    const LongVector s = detail::abel_sum(c, s0, alpha, ts[j], tol, &tail);
    const long double tot = s.sum();
    for (std::size_t y = 0; y < n; ++y) samples[y][j] = static_cast<double>(s(static_cast<Eigen::Index>(y)) / tot);
  }
  LnFixedPoint out;
  Eigen::VectorXd w(static_cast<Eigen::Index>(n));
  out.converged = true;
  for (std::size_t y = 0; y < n; ++y) {
    auto est = extended_limit(schedule, std::span<const double>(samples[y]), opt);
    w(static_cast<Eigen::Index>(y)) = std::max(0.0, est.limit);
    out.error_estimate = std::max(out.error_estimate, est.error_estimate);
    out.converged = out.converged && est.converged;
    out.components.push_back(std::move(est));
  }
  out.tau = TraceFunctional(w).normalize();
  out.residual = ln_residual(c, out.tau, alpha);
  out.power_iteration = TraceFunctional(P.right).normalize();
  out.cross_check = (out.tau.weights() - out.power_iteration.weights()).cwiseAbs().maxCoeff();
  return out;
}

/// phi_{LN,tau}(S_mu S_nu^*) = delta_{|mu|,|nu|} e^{-alpha|mu|} tau((nu|mu)_A).
inline double kms_state_ln(const GraphCorrespondence& c, const TraceFunctional& tau, double alpha, const Monomial& w,
                           double gate = 1e-8) {
  detail::require_size(c, tau);
  const double res = ln_residual(c, tau, alpha);
  if (res > gate)
    fail(ErrorCode::LNConditionViolated, "Laca-Neshveyev residual " + std::to_string(res) + " exceeds the gate");
  if (!(w.mu == w.nu)) return 0.0;
  const TraceFunctional t = tau.normalize();
  return std::exp(-alpha * static_cast<double>(w.mu.length())) * t.at(w.mu.range(c.graph()));
}

/// e^{beta_k}(x) = number of paths of length k starting at x, exactly.
class WatataniIndex {
 public:
  explicit WatataniIndex(const GraphCorrespondence& c) : g_(&c.graph()) {
    levels_.push_back(std::vector<BigInt>(g_->num_vertices(), 1));
  }

  const std::vector<BigInt>& level(std::size_t k) const {
    while (levels_.size() <= k) {
      const auto& prev = levels_.back();
      std::vector<BigInt> next(g_->num_vertices(), 0);
      for (const auto& e : g_->edges()) next[e.src] += prev[e.dst];
      levels_.push_back(std::move(next));
    }
    return levels_[k];
  }

  /// e^{beta_a}(x) / e^{beta_b}(y) as a double.
  double ratio(std::size_t a, std::size_t x, std::size_t b, std::size_t y) const {
    const BigInt num = level(a)[x];
    const BigInt den = level(b)[y];
    return boost::multiprecision::cpp_rational(num, den).convert_to<double>();
  }

 private:
  const DirectedGraph* g_;
  mutable std::vector<std::vector<BigInt>> levels_;
};

/// Phi_k(T_mu T_nu^*) e^{-beta_k} as a function on Y, from exact Watatani indices.
inline Eigen::VectorXd phi_k(const GraphCorrespondence& c, const WatataniIndex& W, const Monomial& w, std::size_t k) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c.num_coefficients()));
  const std::size_t n = w.mu.length();
  if (!(w.mu == w.nu) || k < n) return out;
  const std::size_t s = w.mu.vertex, r = w.mu.range(c.graph());
  out(static_cast<Eigen::Index>(s)) = W.ratio(k - n, r, k, s);
  return out;
}

/// Phi_k(T_mu T_nu^*) = sum_{|rho|=k} _A(T_mu T_nu^* f_rho | f_rho) evaluated literally for the
/// frame f_j = sum_e U_{je} xi_e, U orthogonal and supported on parallel edges; not divided by e^{beta_k}.
inline Eigen::VectorXd phi_k_frame_sum(const GraphCorrespondence& c, const Monomial& w, std::size_t k,
                                       const Eigen::MatrixXd& U) {
  const auto& g = c.graph();
  const auto E = static_cast<Eigen::Index>(g.num_edges());
  if (U.rows() != E || U.cols() != E) fail(ErrorCode::InvalidInput, "frame matrix has the wrong size");
  for (Eigen::Index i = 0; i < E; ++i)
    for (Eigen::Index j = 0; j < E; ++j)
      if (U(i, j) != 0.0 && (g.edge(i).src != g.edge(j).src || g.edge(i).dst != g.edge(j).dst))
        fail(ErrorCode::InvalidInput, "frame mixes non-parallel edges");
  if ((U * U.transpose() - Eigen::MatrixXd::Identity(E, E)).cwiseAbs().maxCoeff() > 1e-12)
    fail(ErrorCode::InvalidInput, "frame matrix is not orthogonal");

  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c.num_coefficients()));
  const std::size_t n = w.mu.length();
  if (n != w.nu.length() || k < n) return out;
  if (k == 0) {
    // the frame of E^{(x)0} = A is {1}
    if (w.mu.vertex == w.nu.vertex) out(static_cast<Eigen::Index>(w.mu.vertex)) = 1.0;
    return out;
  }
  // frame multi-indices are label sequences whose parallel classes form a path
  std::vector<std::vector<std::size_t>> labels;
  for (const auto& p : paths_up_to(g, k))
    if (p.length() == k) labels.push_back(p.edges);
  // f_rho = sum over paths pi parallel to rho of prod_i U_{rho_i pi_i} xi_pi
  auto expand = [&](const std::vector<std::size_t>& rho) {
    std::map<std::vector<std::size_t>, double> terms{{{}, 1.0}};
    for (std::size_t lab : rho) {
      std::map<std::vector<std::size_t>, double> next;
      for (const auto& [p, coef] : terms)
        for (Eigen::Index e = 0; e < E; ++e) {
          const double u = U(static_cast<Eigen::Index>(lab), e);
          if (u == 0.0) continue;
          auto q = p;
          q.push_back(static_cast<std::size_t>(e));
          next[q] += coef * u;
        }
      terms = std::move(next);
    }
    return terms;
  };
  for (const auto& rho : labels) {
    const auto f = expand(rho);
    for (const auto& [pi, cp] : f) {
      // T_mu T_nu^* xi_pi = [pi starts with nu] xi_{mu pi''}, and _A(xi_a|xi_b) = delta_{ab} p_{s(a)}
      if (g.edge(pi.front()).src != w.nu.vertex) continue;
      if (!std::equal(w.nu.edges.begin(), w.nu.edges.end(), pi.begin())) continue;
      std::vector<std::size_t> img = w.mu.edges;
      img.insert(img.end(), pi.begin() + static_cast<std::ptrdiff_t>(n), pi.end());
      const auto it = f.find(img);
      if (it != f.end()) out(static_cast<Eigen::Index>(w.mu.vertex)) += cp * it->second;
    }
  }
  return out;
}

struct PhiInfinity {
  Eigen::VectorXd value;
  double error_estimate = 0.0;
  bool converged = false;
  bool primitive = false;
  std::vector<std::size_t> ks;
  std::vector<Eigen::VectorXd> samples;
};

/// Phi_oo(S_mu S_nu^*) = lim_k Phi_k(T_mu T_nu^*) e^{-beta_k}, Aitken-accelerated over k.
inline PhiInfinity watatani_phi_infinity(const GraphCorrespondence& c, const Monomial& w,
                                         std::vector<std::size_t> ks = {},
                                         double tol = 1e-10) {
  if (ks.empty())
    for (std::size_t k = 16; k <= 96; k += 8) ks.push_back(k);
  if (ks.size() < 3) fail(ErrorCode::InsufficientSamples, "Phi_oo needs at least three k values");
  const WatataniIndex W(c);
  PhiInfinity out;
  out.ks = ks;
  out.primitive = c.primitive();
  for (std::size_t k : ks) out.samples.push_back(phi_k(c, W, w, k));
  const std::size_t m = ks.size();
  const Eigen::VectorXd &a = out.samples[m - 3], &b = out.samples[m - 2], &d = out.samples[m - 1];
  out.value = d;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double den = d(i) - 2.0 * b(i) + a(i);
    if (std::fabs(den) > 1e-14 * std::max(1.0, std::fabs(d(i)))) {
      const double acc = d(i) - (d(i) - b(i)) * (d(i) - b(i)) / den;
      if (std::isfinite(acc)) out.value(i) = acc;
    }
  }
  out.error_estimate = (out.value - d).cwiseAbs().maxCoeff() + (d - b).cwiseAbs().maxCoeff();
  out.converged = out.error_estimate <= tol * std::max(1.0, d.cwiseAbs().maxCoeff());
  return out;
}

struct QuasiInvarianceReport {
  double max_violation = 0.0;
  std::string worst;
  double ln_residual = 0.0;
  bool all_limits_converged = true;
  bool implication_holds = true;  ///< quasi-invariance within tol implies the LN residual within tol
};

/// max over words of |e^{-alpha|mu|} tau((nu|mu)_A) - lim_k tau(Phi_k(T_mu T_nu^*) e^{-beta_k})|.
inline QuasiInvarianceReport quasi_invariance_check(const GraphCorrespondence& c, const TraceFunctional& tau,
                                                    double alpha, const std::vector<Monomial>& words,
                                                    double tol = 1e-8) {
  detail::require_size(c, tau);
  const TraceFunctional t = tau.normalize();
  QuasiInvarianceReport rep;
  for (const auto& w : words) {
    if (w.mu.length() != w.nu.length()) continue;
    const double lhs =
        w.mu == w.nu ? std::exp(-alpha * static_cast<double>(w.mu.length())) * t.at(w.mu.range(c.graph())) : 0.0;
    const auto phi = watatani_phi_infinity(c, w);
    rep.all_limits_converged = rep.all_limits_converged && phi.converged;
    const double rhs = t(phi.value);
    const double v = std::fabs(lhs - rhs);
    if (v > rep.max_violation) {
      rep.max_violation = v;
      rep.worst = w.label(c.graph());
    }
  }
  rep.ln_residual = ln_residual(c, t, alpha);
  rep.implication_holds = !(rep.max_violation <= tol) || rep.ln_residual <= 10.0 * tol;
  return rep;
}

struct DpsiHeatTrace {
  double value = 0.0;
  double tail_bound = 0.0;
  double positive_part = 0.0;
  double cutoff = 0.0;
};

/// Positive part of D_psi: eigenvalue n with weight tau_*(E^{(x)n}) = 1^T M^n tau.
inline SpectralMeasure dpsi_positive_spectrum(const GraphCorrespondence& c, const TraceFunctional& tau) {
  detail::require_size(c, tau);
  const LongMatrix M = c.vertex_matrix().cast<long double>();
  const LongVector t0 = detail::to_long(tau.weights());
  auto gen = [M, t0](double R) {
    std::vector<SpectralEntry> out;
    LongVector v = t0;
    long double shift = 0.0L;
    for (int n = 0; n <= static_cast<int>(std::floor(R)); ++n) {
      if (n > 0) v = M * v;
      const long double s = v.sum();
      out.push_back({static_cast<double>(n), s > 0.0L ? 1.0 : 0.0,
                     s > 0.0L ? static_cast<double>(shift + std::log(s)) : 0.0});
      if (s > 0.0L) {
        shift += std::log(s);
        v /= s;
      }
    }
    return out;
  };
  // 1^T M^n tau <= |tau|_1 (max column sum)^n, summed over n <= R
  const double colmax = c.vertex_matrix().colwise().sum().maxCoeff();
  std::optional<GrowthBound> gb;
  if (c.irreducible()) {
    const auto& P = c.irreducible_perron();
    const double r = P.spectral_radius;
    const double kappa = (tau.weights().array() / P.right.array()).maxCoeff();
    if (r > 1.0 + 1e-9) gb = GrowthBound{1.001 * kappa * P.right.sum() * r / (r - 1.0), std::log(r)};
  }
  if (!gb && colmax > 1.0 + 1e-9) gb = GrowthBound{1.001 * tau.total() * colmax / (colmax - 1.0), std::log(colmax)};
  if (!gb) {
    const double delta = 0.05;
    gb = GrowthBound{tau.total() * (1.0 / (delta * std::exp(1.0 - delta)) + 1.0), delta};
  }
  return SpectralMeasure(gen, gb);
}

/// Tr_tau(e^{-t|D_psi|}), optionally including the non-positive part through Tr_tau(Q_{n,r}).
inline DpsiHeatTrace dpsi_heat_trace(const GraphCorrespondence& c, const TraceFunctional& tau, double t,
                                     bool with_Qnr, double tail_tolerance = 1e-12) {
  detail::require_size(c, tau);
  DpsiHeatTrace out;
  const auto crit = critical_value(c, tau);
  if (!(t > crit.beta + 1e-12)) fail(ErrorCode::BelowThreshold, "t must exceed the critical value of tau");
  HeatTraceOptions opt;
  opt.tail_tolerance = tail_tolerance;
  const auto pos = heat_trace(dpsi_positive_spectrum(c, tau), t, opt);
  out.positive_part = pos.value;
  if (!with_Qnr) {
    out.value = pos.value;
    out.tail_bound = pos.tail_bound;
    out.cutoff = pos.cutoff;
    return out;
  }
  const double N = static_cast<double>(c.frame_size());
  if (N < 2.0) fail(ErrorCode::InvalidInput, "full D_psi trace needs a frame with at least two elements");
  if (!(t > std::log(N))) fail(ErrorCode::BelowThreshold, "t must exceed log N = " + std::to_string(std::log(N)));
  // level L = |psi(n,r)| carries at most L+1 pairs (n,r), each with Tr_tau(P_{n,r}) <= tau(1) N^L;
  // (R+1) e^{-delta R} <= max(1, e^{delta-1}/delta)
  const double delta = 0.5 * (t - std::log(N));
  const GrowthBound gb{tau.total() * std::max(1.0, std::exp(delta - 1.0) / delta) * N / (N - 1.0),
                       std::log(N) + delta};
  const double R = gb.cutoff_for(t, tail_tolerance);
  const auto top = static_cast<long>(std::floor(R));
  // a_r = 1^T M^r (paths of length r ending at v), b_m = tau^T M^m
  const LongMatrix M = c.vertex_matrix().cast<long double>();
  std::vector<LongVector> a(static_cast<std::size_t>(top) + 1), b(static_cast<std::size_t>(top) + 1);
  a[0] = LongVector::Ones(M.rows());
  b[0] = detail::to_long(tau.weights());
  for (long r = 1; r <= top; ++r) {
    a[r] = M.transpose() * a[r - 1];
    b[r] = M.transpose() * b[r - 1];
  }
  auto Q = [&](long n, long r) -> long double { return a[r].dot(b[r - n]); };
  long double sum = 0.0L;
  for (long r = 0; r <= top; ++r)
    for (long n = 2 * r - top; n <= r; ++n) {
      const long lo = std::max<long>(0, n);
      if (r < lo) continue;
      const long double p = r > lo ? Q(n, r) - Q(n, r - 1) : Q(n, r);
      const long psi = n == r ? n : -(2 * r - n);
      sum += p * std::exp(-static_cast<long double>(t) * std::labs(psi));
    }
  out.value = static_cast<double>(sum);
  out.tail_bound = gb.tail(t, R);
  out.cutoff = R;
  return out;
}

/// Tr(P_D S_mu S_nu^* e^{-tD}) / Tr(P_D e^{-tD}) on the D_psi spectral data of tau.
inline double cp_gibbs_ratio(const GraphCorrespondence& c, const TraceFunctional& tau, const Monomial& w, double t,
                             double tol = 1e-15) {
  detail::require_size(c, tau);
  if (!(w.mu == w.nu)) return 0.0;
  double tail = 0.0;
  const LongVector G = detail::abel_sum(c, detail::to_long(tau.weights()), 0.0, t, tol, &tail);
  const long double num = std::exp(-static_cast<long double>(t) * w.mu.length()) *
                          G(static_cast<Eigen::Index>(w.mu.range(c.graph())));
  return static_cast<double>(num / G.sum());
}

/// Gauge-KMS state from the heat-trace ratio as t -> beta(E, tau).
inline LimitEstimate cp_heat_ratio_state(const GraphCorrespondence& c, const TraceFunctional& tau, const Monomial& w,
                                         const LimitSchedule& schedule,
                                         const ExtrapolationOptions& opt = {1e-9, 1e-8, -1}) {
  if (schedule.at_infinity) fail(ErrorCode::InvalidInput, "state schedule must approach the critical value");
  if (!(w.mu == w.nu)) {
    std::vector<double> zeros(schedule.size(), 0.0);
    return extended_limit(schedule, std::span<const double>(zeros), opt);
  }
  return extended_limit(schedule, [&](double t) { return cp_gibbs_ratio(c, tau, w, t); }, opt);
}

}  // namespace kmsheat
