#pragma once

// Extended limits as certified extrapolation, pole fitting of heat traces,
// the psi-function catalogue with regular variation diagnostics, Karamata
// heat asymptotics and Dixmier traces of truncated singular value data.

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/lambert_w.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kmsheat/errors.hpp"
#include "kmsheat/spectral.hpp"

namespace kmsheat {

enum class ExtrapolationPolicy { PoleResidueFit, Richardson, PlainTailAverage };

inline std::string to_string(ExtrapolationPolicy p) {
  switch (p) {
    case ExtrapolationPolicy::PoleResidueFit: return "pole_residue_fit";
    case ExtrapolationPolicy::Richardson: return "richardson";
    case ExtrapolationPolicy::PlainTailAverage: return "plain_tail_average";
  }
  return "unknown";
}

inline ExtrapolationPolicy policy_from_string(const std::string& s) {
  if (s == "pole_residue_fit") return ExtrapolationPolicy::PoleResidueFit;
  if (s == "richardson") return ExtrapolationPolicy::Richardson;
  if (s == "plain_tail_average") return ExtrapolationPolicy::PlainTailAverage;
  fail(ErrorCode::InvalidInput, "unknown extrapolation policy '" + s + "'");
}

/// Sample points approaching beta from above (offsets eps_j decreasing) or
/// approaching infinity (times t_j increasing).
struct LimitSchedule {
  double beta = 0.0;
  bool at_infinity = false;
  std::vector<double> offsets;
  std::vector<double> times;
  ExtrapolationPolicy policy = ExtrapolationPolicy::PoleResidueFit;
  int order = 2;

  static LimitSchedule geometric(double beta, double eps0 = 0.4, double ratio = 0.5, std::size_t n = 8,
                                 ExtrapolationPolicy policy = ExtrapolationPolicy::PoleResidueFit, int order = 2) {
    LimitSchedule s;
    s.beta = beta;
    s.policy = policy;
    s.order = order;
    for (std::size_t j = 0; j < n; ++j) s.offsets.push_back(eps0 * std::pow(ratio, static_cast<double>(j)));
    s.validate();
    return s;
  }

  static LimitSchedule toward_infinity(std::vector<double> t,
                                       ExtrapolationPolicy policy = ExtrapolationPolicy::PoleResidueFit,
                                       int order = 1) {
    LimitSchedule s;
    s.at_infinity = true;
    s.times = std::move(t);
    s.policy = policy;
    s.order = order;
    s.validate();
    return s;
  }

  /// n points geometrically spaced in [t0, t1].
  static LimitSchedule geometric_to_infinity(double t0, double t1, std::size_t n,
                                             ExtrapolationPolicy policy = ExtrapolationPolicy::PoleResidueFit,
                                             int order = 1) {
    std::vector<double> t(n);
    for (std::size_t j = 0; j < n; ++j)
      t[j] = t0 * std::pow(t1 / t0, static_cast<double>(j) / static_cast<double>(n - 1));
    return toward_infinity(std::move(t), policy, order);
  }

  void validate() const {
    const auto& v = at_infinity ? times : offsets;
    if (v.size() < 4) fail(ErrorCode::InsufficientSamples, "a limit schedule needs at least 4 samples");
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (!std::isfinite(v[j]) || v[j] <= 0.0) fail(ErrorCode::InvalidInput, "schedule samples must be positive");
      if (j > 0 && (at_infinity ? !(v[j] > v[j - 1]) : !(v[j] < v[j - 1])))
        fail(ErrorCode::InvalidInput, "schedule samples must be strictly monotone");
    }
    if (order < 0) fail(ErrorCode::InvalidInput, "negative model order");
  }

  std::size_t size() const { return at_infinity ? times.size() : offsets.size(); }

  /// The parameter values t_j at which the function is sampled.
  std::vector<double> points() const {
    if (at_infinity) return times;
    std::vector<double> t(offsets.size());
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = beta + offsets[j];
    return t;
  }

  /// Extrapolation variable tending to 0: eps_j, or 1/t_j at infinity.
  std::vector<double> variable() const {
    if (!at_infinity) return offsets;
    std::vector<double> x(times.size());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = 1.0 / times[j];
    return x;
  }
};

struct ExtrapolationOptions {
  double residual_tol = 1e-9;   ///< relative rms residual accepted by the polynomial fit
  double stability_tol = 1e-6;  ///< relative error estimate required for convergence
  int max_order = -1;           ///< highest polynomial degree tried; -1 means n-2
};

struct LimitEstimate {
  double limit = 0.0;
  double error_estimate = 0.0;
  bool converged = false;
  int order_used = 0;
  double residual = 0.0;
  std::vector<double> points;
  std::vector<double> samples;
};

namespace detail {

struct PolyFit {
  double constant;
  double rms;
};

inline PolyFit poly_fit(std::span<const double> x, std::span<const double> y, int degree) {
  const auto n = static_cast<Eigen::Index>(x.size());
  double xmax = 0.0;
  for (double v : x) xmax = std::max(xmax, std::fabs(v));
  Eigen::MatrixXd V(n, degree + 1);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double p = 1.0;
    const double u = x[i] / xmax;
    for (int k = 0; k <= degree; ++k) {
      V(i, k) = p;
      p *= u;
    }
    b(i) = y[i];
  }
  const Eigen::VectorXd c = V.colPivHouseholderQr().solve(b);
  const Eigen::VectorXd r = b - V * c;
  return {c(0), std::sqrt(r.squaredNorm() / static_cast<double>(n))};
}

/// Value at 0 of the interpolating polynomial through the given points.
inline double neville_at_zero(std::span<const double> x, std::span<const double> y) {
  std::vector<double> p(y.begin(), y.end());
  const std::size_t n = p.size();
  for (std::size_t m = 1; m < n; ++m)
    for (std::size_t i = 0; i + m < n; ++i)
      p[i] = (x[i + m] * p[i] - x[i] * p[i + 1]) / (x[i + m] - x[i]);
  return p[0];
}

}  // namespace detail

/// Extrapolates samples y_j taken at x_j -> 0 to x = 0.
inline LimitEstimate extrapolate_to_zero(std::span<const double> x, std::span<const double> y,
                                         ExtrapolationPolicy policy, int order,
                                         const ExtrapolationOptions& opt = {}) {
  const std::size_t n = x.size();
  if (n < 4 || y.size() != n) fail(ErrorCode::InsufficientSamples, "extrapolation needs at least 4 aligned samples");
  for (std::size_t j = 0; j < n; ++j)
    if (!std::isfinite(x[j]) || !std::isfinite(y[j])) fail(ErrorCode::InvalidInput, "non-finite sample");

  LimitEstimate est;
  est.samples.assign(y.begin(), y.end());
  double scale = 0.0;
  for (double v : y) scale = std::max(scale, std::fabs(v));
  if (scale == 0.0) {
    est.converged = true;
    return est;
  }

  switch (policy) {
    case ExtrapolationPolicy::PoleResidueFit: {
      const int top = opt.max_order >= 0 ? std::min<int>(opt.max_order, static_cast<int>(n) - 2)
                                         : static_cast<int>(n) - 2;
      const int lo = std::min(order, top);
      std::vector<detail::PolyFit> fits;
      for (int d = 0; d <= top; ++d) fits.push_back(detail::poly_fit(x, y, d));
      int chosen = -1;
      for (int d = lo; d <= top; ++d)
        if (fits[d].rms <= opt.residual_tol * scale) {
          chosen = d;
          break;
        }
      const bool fitted = chosen >= 0;
      if (!fitted) chosen = top;
      const int other = chosen < top ? chosen + 1 : chosen - 1;
      est.limit = fits[chosen].constant;
      est.order_used = chosen;
      est.residual = fits[chosen].rms;
      est.error_estimate = std::max(std::fabs(fits[chosen].constant - fits[other].constant), fits[chosen].rms);
      est.converged = fitted && est.error_estimate <= opt.stability_tol * scale;
      break;
    }
    case ExtrapolationPolicy::Richardson: {
      est.limit = detail::neville_at_zero(x, y);
      const double drop_last = detail::neville_at_zero(x.first(n - 1), y.first(n - 1));
      const double drop_first = detail::neville_at_zero(x.subspan(1), y.subspan(1));
      est.order_used = static_cast<int>(n) - 1;
      est.error_estimate = std::max(std::fabs(est.limit - drop_last), std::fabs(est.limit - drop_first));
      est.converged = est.error_estimate <= opt.stability_tol * scale;
      break;
    }
    case ExtrapolationPolicy::PlainTailAverage: {
      const std::size_t k = std::max<std::size_t>(2, n / 4);
      const auto tail = y.subspan(n - k);
      est.limit = std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(k);
      const auto [mn, mx] = std::minmax_element(tail.begin(), tail.end());
      est.error_estimate = *mx - *mn;
      est.converged = est.error_estimate <= opt.stability_tol * scale;
      break;
    }
  }
  return est;
}

/// Extended limit of sampled values along a schedule.
inline LimitEstimate extended_limit(const LimitSchedule& s, std::span<const double> values,
                                    const ExtrapolationOptions& opt = {}) {
  s.validate();
  if (values.size() != s.size()) fail(ErrorCode::InsufficientSamples, "sample count does not match the schedule");
  const auto x = s.variable();
  auto est = extrapolate_to_zero(x, values, s.policy, s.order, opt);
  est.points = s.points();
  return est;
}

/// Extended limit of f sampled at the schedule points.
template <class F>
  requires std::is_invocable_r_v<double, F, double>
LimitEstimate extended_limit(const LimitSchedule& s, F&& f, const ExtrapolationOptions& opt = {}) {
  s.validate();
  const auto t = s.points();
  std::vector<double> v(t.size());
  for (std::size_t j = 0; j < t.size(); ++j) v[j] = f(t[j]);
  return extended_limit(s, std::span<const double>(v), opt);
}

struct PoleFitOptions {
  int remainder_order = 2;
  double min_pole_order = 0.05;
};

struct PoleFit {
  double residue = 0.0;
  double order = 0.0;
  double residue_stderr = 0.0;
  double order_stderr = 0.0;
  double max_log_residual = 0.0;
  std::vector<double> remainder;
};

/// Fits  log g = log c - p log eps + sum_{k<=q} b_k eps^k  by least squares.
inline PoleFit pole_fit(std::span<const double> eps, std::span<const double> g, const PoleFitOptions& opt = {}) {
  const std::size_t n = eps.size();
  const int q = opt.remainder_order;
  if (n != g.size() || static_cast<int>(n) < q + 3)
    fail(ErrorCode::InsufficientSamples, "pole fit needs more samples than parameters");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return eps[a] > eps[b]; });
  for (std::size_t j = 0; j < n; ++j) {
    if (!(eps[j] > 0.0)) fail(ErrorCode::InvalidInput, "pole fit offsets must be positive");
    if (!(g[j] > 0.0) || !std::isfinite(g[j])) fail(ErrorCode::InvalidInput, "pole fit needs positive finite values");
  }
  if (!(g[idx.back()] > g[idx.front()])) fail(ErrorCode::NotDivergent, "values do not increase toward the anchor");

  const auto N = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd X(N, 2 + q);
  Eigen::VectorXd y(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = -std::log(eps[i]);
    double p = 1.0;
    for (int k = 1; k <= q; ++k) {
      p *= eps[i];
      X(i, 1 + k) = p;
    }
    y(i) = std::log(g[i]);
  }
  const Eigen::VectorXd c = X.colPivHouseholderQr().solve(y);
  const Eigen::VectorXd r = y - X * c;
  const double dof = static_cast<double>(N - X.cols());
  const double s2 = dof > 0 ? r.squaredNorm() / dof : 0.0;
  const Eigen::MatrixXd cov = s2 * (X.transpose() * X).inverse();

  PoleFit out;
  out.order = c(1);
  out.residue = std::exp(c(0));
  out.order_stderr = std::sqrt(std::max(0.0, cov(1, 1)));
  out.residue_stderr = out.residue * std::sqrt(std::max(0.0, cov(0, 0)));
  out.max_log_residual = r.cwiseAbs().maxCoeff();
  for (int k = 1; k <= q; ++k) out.remainder.push_back(c(1 + k));
  if (out.order < opt.min_pole_order) fail(ErrorCode::NotDivergent, "fitted pole order is not positive");
  return out;
}

/// Decreasing positive weight function psi from a closed catalogue, with its
/// primitive Psi and inverse.
class PsiFunction {
 public:
  enum class Kind { InverseLinear, LogOverLinear, InverseLogPower, Tabulated };

  /// scale / (1 + t)
  static PsiFunction inverse_linear(double scale = 1.0) { return PsiFunction(Kind::InverseLinear, scale, 1.0); }
  /// scale * log(e + t) / (e + t)
  static PsiFunction log_over_linear(double scale = 1.0) { return PsiFunction(Kind::LogOverLinear, scale, 1.0); }
  /// scale * log(2 + t)^{-s}
  static PsiFunction inverse_log_power(double s = 1.0, double scale = 1.0) {
    if (!(s > 0.0)) fail(ErrorCode::InvalidInput, "log power must be positive");
    return PsiFunction(Kind::InverseLogPower, scale, s);
  }
  /// Tabulated psi together with a tabulated inverse; both interpolated log-log.
  static PsiFunction tabulated(std::vector<double> t, std::vector<double> psi, std::vector<double> y,
                               std::vector<double> inverse) {
    if (t.size() < 2 || t.size() != psi.size() || y.size() < 2 || y.size() != inverse.size())
      fail(ErrorCode::InvalidInput, "tabulated psi needs aligned tables of length >= 2");
    if (t.front() != 0.0) fail(ErrorCode::InvalidInput, "tabulated psi must start at t = 0");
    for (std::size_t i = 1; i < t.size(); ++i)
      if (!(t[i] > t[i - 1]) || !(psi[i] <= psi[i - 1]) || !(psi[i] > 0.0))
        fail(ErrorCode::InvalidInput, "tabulated psi must be positive and nonincreasing on increasing t");
    for (std::size_t i = 1; i < y.size(); ++i)
      if (!(y[i] > y[i - 1]) || !(y[0] > 0.0)) fail(ErrorCode::InvalidInput, "inverse table needs increasing y > 0");
    PsiFunction f(Kind::Tabulated, 1.0, 1.0);
    f.tt_ = std::move(t);
    f.tp_ = std::move(psi);
    f.ty_ = std::move(y);
    f.ti_ = std::move(inverse);
    f.tprim_.assign(f.tt_.size(), 0.0);
    for (std::size_t i = 1; i < f.tt_.size(); ++i)
      f.tprim_[i] = f.tprim_[i - 1] + 0.5 * (f.tp_[i] + f.tp_[i - 1]) * (f.tt_[i] - f.tt_[i - 1]);
    return f;
  }

  Kind kind() const { return kind_; }
  double scale() const { return scale_; }

  std::string name() const {
    switch (kind_) {
      case Kind::InverseLinear: return "1/(1+t)";
      case Kind::LogOverLinear: return "log(e+t)/(e+t)";
      case Kind::InverseLogPower: return "log(2+t)^-" + std::to_string(power_);
      case Kind::Tabulated: return "tabulated";
    }
    return "unknown";
  }

  double operator()(double t) const {
    switch (kind_) {
      case Kind::InverseLinear: return scale_ / (1.0 + t);
      case Kind::LogOverLinear: return scale_ * std::log(e_ + t) / (e_ + t);
      case Kind::InverseLogPower: return scale_ * std::pow(std::log(2.0 + t), -power_);
      case Kind::Tabulated: return std::exp(table_log_interp(tt_, tp_, t));
    }
    return 0.0;
  }

  /// Psi(t) = integral of psi over [0, t].
  double primitive(double t) const {
    switch (kind_) {
      case Kind::InverseLinear: return scale_ * std::log1p(t);
      case Kind::LogOverLinear: {
        const double l = std::log(e_ + t);
        return 0.5 * scale_ * (l * l - 1.0);
      }
      case Kind::InverseLogPower: {
        const double s = power_;
        auto integrand = [s](double u) { return std::exp(u - s * std::log(u)); };
        return scale_ * boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
                            integrand, std::log(2.0), std::log(2.0 + t), 15, 1e-12);
      }
      case Kind::Tabulated: {
        if (t > tt_.back()) fail(ErrorCode::InvalidInput, "t beyond the psi table");
        const auto it = std::upper_bound(tt_.begin(), tt_.end(), t);
        const auto i = static_cast<std::size_t>(it - tt_.begin()) - 1;
        if (i + 1 >= tt_.size()) return tprim_.back();
        return tprim_[i] + 0.5 * (tp_[i] + (*this)(t)) * (t - tt_[i]);
      }
    }
    return 0.0;
  }

  /// psi^{-1}(y) on the decreasing branch.
  double inverse(double y) const {
    if (!(y > 0.0)) fail(ErrorCode::InvalidInput, "psi inverse needs y > 0");
    switch (kind_) {
      case Kind::InverseLinear: return scale_ / y - 1.0;
      case Kind::LogOverLinear: {
        const double z = -y / scale_;
        if (z < -1.0 / e_) fail(ErrorCode::InvalidInput, "value above the range of psi");
        return std::exp(-boost::math::lambert_wm1(z)) - e_;
      }
      case Kind::InverseLogPower: return std::exp(std::pow(scale_ / y, 1.0 / power_)) - 2.0;
      case Kind::Tabulated: return std::exp(table_log_interp(ty_, ti_, y));
    }
    return 0.0;
  }

  /// log psi(e^L), usable far beyond double range of t.
  double log_at_log(double L) const {
    const double ls = std::log(scale_);
    switch (kind_) {
      case Kind::InverseLinear: return ls - softplus(L);
      case Kind::LogOverLinear: {
        const double l = log_sum_exp(1.0, L);
        return ls + std::log(l) - l;
      }
      case Kind::InverseLogPower: return ls - power_ * std::log(log_sum_exp(std::log(2.0), L));
      case Kind::Tabulated: return std::log((*this)(std::exp(L)));
    }
    return 0.0;
  }

  /// log psi^{-1}(e^Y), usable for very small arguments.
  double log_inverse_at_log(double Y) const {
    const double A = std::log(scale_) - Y;  // log(scale / y)
    switch (kind_) {
      case Kind::InverseLinear: {
        if (A <= 0.0) return -std::numeric_limits<double>::infinity();
        return A + std::log1p(-std::exp(-A));
      }
      case Kind::LogOverLinear: {
        // u = e + t solves  log u - log log u = A  on the branch u >= e.
        if (A < 1.0) fail(ErrorCode::InvalidInput, "value above the range of psi");
        double l = std::max(1.0, A + std::log(std::max(A, 1.0)));
        for (int i = 0; i < 100; ++i) {
          const double step = (l - std::log(l) - A) / (1.0 - 1.0 / l);
          l -= step;
          if (l < 1.0) l = 1.0 + 1e-12;
          if (std::fabs(step) < 1e-14 * l) break;
        }
        return l + std::log1p(-std::exp(1.0 - l));
      }
      case Kind::InverseLogPower: {
        const double v = std::exp(A / power_);  // log(2 + t)
        return v + std::log1p(-2.0 * std::exp(-v));
      }
      case Kind::Tabulated: return std::log(inverse(std::exp(Y)));
    }
    return 0.0;
  }

  /// Largest log t on which psi can be evaluated.
  double max_log_t() const {
    return kind_ == Kind::Tabulated ? std::log(tt_.back()) : std::numeric_limits<double>::infinity();
  }

 private:
  PsiFunction(Kind k, double scale, double power) : kind_(k), scale_(scale), power_(power) {
    if (!(scale > 0.0)) fail(ErrorCode::InvalidInput, "psi scale must be positive");
  }

  static double softplus(double L) { return L > 0 ? L + std::log1p(std::exp(-L)) : std::log1p(std::exp(L)); }
  static double log_sum_exp(double a, double b) {
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
  }

  static double table_log_interp(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
    if (x < xs.front() || x > xs.back()) fail(ErrorCode::InvalidInput, "argument outside the tabulated range");
    auto it = std::upper_bound(xs.begin(), xs.end(), x);
    if (it == xs.end()) return std::log(ys.back());
    const auto i = static_cast<std::size_t>(it - xs.begin());
    const double x0 = xs[i - 1], x1 = xs[i];
    const double y0 = std::log(ys[i - 1]), y1 = std::log(ys[i]);
    if (x0 > 0.0) {
      const double w = (std::log(x) - std::log(x0)) / (std::log(x1) - std::log(x0));
      return y0 + w * (y1 - y0);
    }
    const double w = (x - x0) / (x1 - x0);
    return y0 + w * (y1 - y0);
  }

  Kind kind_;
  double scale_ = 1.0;
  double power_ = 1.0;
  double e_ = std::exp(1.0);
  std::vector<double> tt_, tp_, ty_, ti_, tprim_;
};

struct RegularVariationOptions {
  double tolerance = 0.02;
  std::vector<double> log_grid = {50, 100, 200, 400, 800, 1600, 3200};
};

struct RegularVariationReport {
  double rho_hypothesis = 0.0;
  double tolerance = 0.0;
  std::vector<std::pair<double, double>> index_estimates;  ///< (lambda, estimated index)
  bool index_pass = false;
  std::vector<std::pair<double, double>> exp2_limits;      ///< (alpha, limit estimate)
  bool exp2_pass = false;
  double invas_constant = 0.0;
  bool invas_pass = false;
  double doubling_sup = 0.0;
  bool doubling_finite = false;
  bool pass() const { return index_pass && exp2_pass && invas_pass && doubling_finite; }
};

/// Diagnoses regular variation of psi, the existence of the exp2 limits
/// alpha psi(t^alpha) t^{alpha-1} / psi(t) and of  lim t^2 psi(t) / psi^{-1}(1/t).
inline RegularVariationReport regular_variation_diagnostics(const PsiFunction& psi, double rho,
                                                            const RegularVariationOptions& opt = {}) {
  RegularVariationReport rep;
  rep.rho_hypothesis = rho;
  rep.tolerance = opt.tolerance;
  std::vector<double> grid;
  for (double L : opt.log_grid)
    if (L + std::log(8.0) <= psi.max_log_t()) grid.push_back(L);
  if (grid.size() < 2) fail(ErrorCode::InvalidInput, "psi is not evaluable on a wide enough logarithmic grid");
  const double Lmax = grid.back();
  const double Lprev = grid[grid.size() - 2];

  rep.index_pass = true;
  for (double lam : {2.0, 4.0, 8.0}) {
    const double est = (psi.log_at_log(Lmax + std::log(lam)) - psi.log_at_log(Lmax)) / std::log(lam);
    rep.index_estimates.emplace_back(lam, est);
    if (!(std::fabs(est - rho) <= opt.tolerance)) rep.index_pass = false;
  }

  auto exp2_at = [&](double alpha, double L) {
    return std::log(alpha) + psi.log_at_log(alpha * L) + (alpha - 1.0) * L - psi.log_at_log(L);
  };
  rep.exp2_pass = true;
  for (double alpha : {0.5, 2.0}) {
    double a = Lprev, b = Lmax;
    if (alpha > 1.0) {
      std::vector<double> ok;
      for (double L : grid)
        if (alpha * L <= psi.max_log_t()) ok.push_back(L);
      if (ok.size() < 2) {
        rep.exp2_limits.emplace_back(alpha, std::nan(""));
        rep.exp2_pass = false;
        continue;
      }
      a = ok[ok.size() - 2];
      b = ok.back();
    }
    const double la = exp2_at(alpha, a), lb = exp2_at(alpha, b);
    const double vb = std::exp(lb);
    rep.exp2_limits.emplace_back(alpha, vb);
    if (!(std::isfinite(la) && std::isfinite(lb) && std::fabs(lb - la) <= opt.tolerance && vb > 0.0))
      rep.exp2_pass = false;
  }

  auto invas_at = [&](double L) { return 2.0 * L + psi.log_at_log(L) - psi.log_inverse_at_log(-L); };
  const double ia = invas_at(Lprev), ib = invas_at(Lmax);
  rep.invas_constant = std::exp(ib);
  rep.invas_pass = std::isfinite(ia) && std::isfinite(ib) && std::fabs(ib - ia) <= opt.tolerance &&
                   rep.invas_constant > 0.0 && std::isfinite(rep.invas_constant);

  rep.doubling_sup = 0.0;
  for (double L = 0.0; L <= Lmax; L += Lmax / 64.0)
    rep.doubling_sup = std::max(rep.doubling_sup, std::exp(psi.log_at_log(L) - psi.log_at_log(L + std::log(2.0))));
  rep.doubling_finite = std::isfinite(rep.doubling_sup);
  return rep;
}

struct KaramataOptions {
  double relative_tail = 1e-15;
  std::size_t max_terms = 400'000'000;
  ExtrapolationOptions extrapolation{1e-9, 1e-4, -1};
  ExtrapolationPolicy policy = ExtrapolationPolicy::Richardson;
};

struct KaramataReport {
  std::vector<double> t;
  std::vector<double> sums;
  std::vector<double> ratios;
  std::vector<double> tail_bounds;
  LimitEstimate limit;
  double deviation = 0.0;
};

/// Compares sum_n exp(-mu(n)^{-q}/t) with Gamma(1 + 1/q) psi^{-1}(t^{-1/q}) on
/// an increasing schedule of t and extrapolates the ratio in 1/t.
inline KaramataReport karamata_heat(const std::function<double(double)>& mu, const PsiFunction& psi, double q,
                                    const std::vector<double>& t_schedule, const KaramataOptions& opt = {}) {
  if (!(q > 0.0)) fail(ErrorCode::InvalidInput, "q must be positive");
  auto sched = LimitSchedule::toward_infinity(t_schedule, opt.policy, 1);
  KaramataReport rep;
  const double gamma = boost::math::tgamma(1.0 + 1.0 / q);
  for (double t : sched.times) {
    auto f = [&](double n) {
      const double m = mu(n);
      if (!(m > 0.0)) return 0.0;
      return std::exp(-std::pow(m, -q) / t);
    };
    long double s = 0.0L;
    std::size_t n = 0;
    for (;; ++n) {
      if (n >= opt.max_terms) fail(ErrorCode::DivergentSum, "series did not settle within the term budget");
      const double v = f(static_cast<double>(n));
      s += v;
      if (n > 16 && v <= opt.relative_tail * static_cast<double>(s)) break;
    }
    // Cauchy condensation bound on the remaining terms of a nonincreasing sequence.
    const double N = static_cast<double>(n + 1);
    double tail = 0.0, prev = std::numeric_limits<double>::infinity();
    int growing = 0;
    for (int k = 0; k < 1024; ++k) {
      const double x = std::ldexp(N, k);
      const double term = x * f(x);
      tail += term;
      if (term > prev) ++growing;
      prev = term;
      if (term < 1e-300 || growing > 8) break;
    }
    if (growing > 8 || !(tail <= 1e-6 * static_cast<double>(s)))
      fail(ErrorCode::DivergentSum, "truncation tail could not be certified");
    const double denom = gamma * psi.inverse(std::pow(t, -1.0 / q));
    rep.t.push_back(t);
    rep.sums.push_back(static_cast<double>(s));
    rep.tail_bounds.push_back(tail);
    rep.ratios.push_back(static_cast<double>(s) / denom);
  }
  rep.limit = extended_limit(sched, std::span<const double>(rep.ratios), opt.extrapolation);
  rep.deviation = std::fabs(rep.limit.limit - 1.0);
  return rep;
}

inline KaramataReport karamata_heat(const SingularValueFunction& mu, const PsiFunction& psi, double q,
                                    const std::vector<double>& t_schedule, const KaramataOptions& opt = {}) {
  return karamata_heat([&mu](double n) { return mu(n); }, psi, q, t_schedule, opt);
}

struct DixmierOptions {
  bool twisted_mean = false;
  ExtrapolationOptions extrapolation{5e-5, 2e-2, 4};
  std::size_t twisted_grid = 4000;
};

struct DixmierResult {
  double value = 0.0;
  double error_estimate = 0.0;
  bool converged = false;
  std::vector<double> t;
  std::vector<double> ratios;
  LimitEstimate fit;
};

/// lim (1/Psi(t)) int_0^t mu, extrapolated in 1/Psi(t) along a schedule at infinity.
inline DixmierResult dixmier_trace(const SingularValueFunction& mu, const PsiFunction& psi,
                                   const LimitSchedule& schedule, const DixmierOptions& opt = {}) {
  if (!schedule.at_infinity) fail(ErrorCode::InvalidInput, "Dixmier traces need a schedule at infinity");
  schedule.validate();
  if (schedule.times.back() > mu.support())
    fail(ErrorCode::ScheduleExceedsData, "schedule reaches beyond the singular value data");

  auto cesaro = [&](double t) { return t > 0.0 ? mu.integral(t) / psi.primitive(t) : mu(0.0) / psi(0.0); };

  DixmierResult res;
  std::vector<double> x;
  for (double t : schedule.times) {
    double r;
    if (!opt.twisted_mean) {
      r = cesaro(t);
    } else {
      // (1/Psi(t)) int_0^t cesaro(s) psi(s) ds by Simpson's rule on a logarithmic grid.
      const double s0 = std::min(1e-6, t * 1e-6);
      const std::size_t m = opt.twisted_grid + (opt.twisted_grid % 2);
      const double la = std::log(s0), lb = std::log(t), h = (lb - la) / static_cast<double>(m);
      long double acc = 0.0L;
      for (std::size_t i = 0; i <= m; ++i) {
        const double s = std::exp(la + h * static_cast<double>(i));
        const double w = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += w * cesaro(s) * psi(s) * s;
      }
      const double integral = static_cast<double>(acc) * h / 3.0 + cesaro(0.0) * psi.primitive(s0);
      r = integral / psi.primitive(t);
    }
    res.t.push_back(t);
    res.ratios.push_back(r);
    x.push_back(1.0 / psi.primitive(t));
  }
  res.fit = extrapolate_to_zero(x, res.ratios, schedule.policy, schedule.order, opt.extrapolation);
  res.fit.points = res.t;
  res.value = res.fit.limit;
  res.error_estimate = res.fit.error_estimate;
  res.converged = res.fit.converged;
  return res;
}

}  // namespace kmsheat
