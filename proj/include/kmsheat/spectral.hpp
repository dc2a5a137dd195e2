#pragma once

// Discrete spectral data, truncated heat traces with certified tails, Gibbs
// ratios, critical inverse temperature detection and singular value functions.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kmsheat/errors.hpp"

namespace kmsheat {

/// One eigenvalue with its trace weight. The weight is stored as a mantissa
/// times exp(log_scale) so that exponentially growing multiplicities stay
/// representable.
struct SpectralEntry {
  double lambda = 0.0;
  double weight = 0.0;
  double log_scale = 0.0;

  double true_weight() const { return weight * std::exp(log_scale); }
};

/// Certificate  sum_{|lambda| <= R} weight <= C exp(b R)  for every R >= 0.
struct GrowthBound {
  double C = 1.0;
  double b = 0.0;

  /// Bound on sum_{|lambda| > R} weight exp(-t|lambda|), obtained by
  /// integrating the cumulative bound by parts.
  double tail(double t, double R) const {
    const double gap = t - b;
    return C * t * std::exp(-gap * R) / gap;
  }

  /// Smallest cutoff whose tail bound is at most eps.
  double cutoff_for(double t, double eps) const {
    const double gap = t - b;
    const double R = std::max(0.0, std::log(C * t / (gap * eps)) / gap);
    return R * (1.0 + 1e-12) + 1e-12;
  }
};

class SpectralMeasure {
 public:
  /// Must return every entry with |lambda| <= cutoff.
  using Generator = std::function<std::vector<SpectralEntry>(double cutoff)>;

  explicit SpectralMeasure(std::vector<SpectralEntry> entries,
                           std::optional<GrowthBound> growth = std::nullopt)
      : entries_(std::move(entries)), growth_(growth) {
    if (entries_.empty()) fail(ErrorCode::EmptySpectrum, "spectral measure has no entries");
    for (const auto& e : entries_) check_entry(e);
  }

  SpectralMeasure(Generator gen, std::optional<GrowthBound> growth)
      : generator_(std::move(gen)), growth_(growth) {
    if (!generator_) fail(ErrorCode::InvalidInput, "empty generator");
  }

  bool has_generator() const { return static_cast<bool>(generator_); }
  const std::optional<GrowthBound>& growth() const { return growth_; }

  /// Entries with |lambda| <= cutoff. Finite measures return their entries in
  /// stored order so that insertions stay aligned.
  std::vector<SpectralEntry> entries_up_to(double cutoff) const {
    if (!generator_) {
      if (std::isinf(cutoff)) return entries_;
      std::vector<SpectralEntry> out;
      for (const auto& e : entries_)
        if (std::fabs(e.lambda) <= cutoff) out.push_back(e);
      return out;
    }
    if (std::isinf(cutoff)) fail(ErrorCode::InvalidInput, "infinite cutoff on a generated spectrum");
    auto out = generator_(cutoff);
    for (const auto& e : out) check_entry(e);
    return out;
  }

  const std::vector<SpectralEntry>& finite_entries() const { return entries_; }

 private:
  static void check_entry(const SpectralEntry& e) {
    if (!std::isfinite(e.lambda) || !std::isfinite(e.weight) || !std::isfinite(e.log_scale))
      fail(ErrorCode::InvalidInput, "non-finite spectral entry");
    if (e.weight < 0.0) fail(ErrorCode::NegativeWeight, "negative trace weight");
  }

  std::vector<SpectralEntry> entries_;
  Generator generator_;
  std::optional<GrowthBound> growth_;
};

/// Per-entry weights tau(P_lambda B) for an observable B, expressed in the same
/// exp(log_scale) units as the base entries.
class ObservableInsertion {
 public:
  using WeightMap = std::function<std::vector<double>(const std::vector<SpectralEntry>&)>;

  ObservableInsertion(SpectralMeasure base, WeightMap map, std::string label, double norm_bound = 1.0)
      : base_(std::move(base)), map_(std::move(map)), label_(std::move(label)), norm_(norm_bound) {}

  ObservableInsertion(SpectralMeasure base, std::vector<double> weights, std::string label,
                      double norm_bound = 1.0)
      : base_(std::move(base)), label_(std::move(label)), norm_(norm_bound) {
    if (base_.has_generator())
      fail(ErrorCode::InvalidInput, "explicit insertion weights need a finite base spectrum");
    if (weights.size() != base_.finite_entries().size())
      fail(ErrorCode::InvalidInput, "insertion weights are not aligned with the base spectrum");
    map_ = [w = std::move(weights)](const std::vector<SpectralEntry>& entries) {
      if (entries.size() != w.size())
        fail(ErrorCode::InvalidInput, "insertion evaluated on a truncated finite spectrum");
      return w;
    };
  }

  static ObservableInsertion identity(SpectralMeasure base) {
    return ObservableInsertion(
        std::move(base),
        [](const std::vector<SpectralEntry>& entries) {
          std::vector<double> w(entries.size());
          for (std::size_t i = 0; i < entries.size(); ++i) w[i] = entries[i].weight;
          return w;
        },
        "identity", 1.0);
  }

  const SpectralMeasure& base() const { return base_; }
  const std::string& label() const { return label_; }
  double norm_bound() const { return norm_; }

  std::vector<double> inserted(const std::vector<SpectralEntry>& entries) const {
    auto w = map_(entries);
    if (w.size() != entries.size()) fail(ErrorCode::InvalidInput, "insertion weights misaligned");
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!std::isfinite(w[i])) fail(ErrorCode::InvalidInput, "non-finite insertion weight");
      const double cap = norm_ * entries[i].weight;
      if (std::fabs(w[i]) > cap * (1.0 + 1e-12) + 1e-300)
        fail(ErrorCode::InvalidInput, "insertion weight exceeds norm bound times trace weight");
    }
    return w;
  }

 private:
  SpectralMeasure base_;
  WeightMap map_;
  std::string label_;
  double norm_ = 1.0;
};

struct HeatTraceOptions {
  double tail_tolerance = 1e-13;
  bool positive_only = false;            ///< restrict to lambda >= 0
  std::optional<double> cutoff;          ///< force a cutoff instead of deriving it from the tolerance
};

struct HeatTrace {
  double value = 0.0;
  double tail_bound = 0.0;
  double cutoff = 0.0;
  std::size_t terms = 0;
};

namespace detail {

inline double resolve_cutoff(const SpectralMeasure& m, double t, const HeatTraceOptions& opt,
                             double* tail) {
  *tail = 0.0;
  if (!m.has_generator()) return opt.cutoff.value_or(std::numeric_limits<double>::infinity());
  if (!m.growth()) fail(ErrorCode::MissingGrowthBound, "generated spectrum without growth certificate");
  const GrowthBound& g = *m.growth();
  if (!(t > g.b)) fail(ErrorCode::DivergentSeries, "t does not exceed the growth exponent");
  const double R = opt.cutoff ? *opt.cutoff : g.cutoff_for(t, opt.tail_tolerance);
  *tail = g.tail(t, R);
  return R;
}

inline long double term(double mantissa, const SpectralEntry& e, double t) {
  return static_cast<long double>(mantissa) *
         std::exp(static_cast<long double>(e.log_scale) - static_cast<long double>(t) * std::fabs(e.lambda));
}

}  // namespace detail

inline HeatTrace heat_trace(const SpectralMeasure& m, double t, const HeatTraceOptions& opt = {}) {
  HeatTrace out;
  out.cutoff = detail::resolve_cutoff(m, t, opt, &out.tail_bound);
  const auto entries = m.entries_up_to(out.cutoff);
  long double s = 0.0L;
  for (const auto& e : entries) {
    if (opt.positive_only && e.lambda < 0.0) continue;
    s += detail::term(e.weight, e, t);
    ++out.terms;
  }
  out.value = static_cast<double>(s);
  return out;
}

inline HeatTrace heat_trace(const ObservableInsertion& ins, double t, const HeatTraceOptions& opt = {}) {
  HeatTrace out;
  out.cutoff = detail::resolve_cutoff(ins.base(), t, opt, &out.tail_bound);
  out.tail_bound *= ins.norm_bound();
  const auto entries = ins.base().entries_up_to(out.cutoff);
  const auto w = ins.inserted(entries);
  long double s = 0.0L;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (opt.positive_only && entries[i].lambda < 0.0) continue;
    s += detail::term(w[i], entries[i], t);
    ++out.terms;
  }
  out.value = static_cast<double>(s);
  return out;
}

struct GibbsValue {
  double value = 0.0;
  double error = 0.0;  ///< absolute error certificate from both tails
  HeatTrace numerator;
  HeatTrace denominator;
};

inline GibbsValue gibbs_functional(const ObservableInsertion& numer, const SpectralMeasure& denom, double t,
                                   const HeatTraceOptions& opt = {}) {
  GibbsValue g;
  g.denominator = heat_trace(denom, t, opt);
  if (!(g.denominator.value > g.denominator.tail_bound) || g.denominator.value <= 0.0)
    fail(ErrorCode::ZeroDenominator, "denominator heat trace vanishes");
  g.numerator = heat_trace(numer, t, opt);
  g.value = g.numerator.value / g.denominator.value;
  g.error = (g.numerator.tail_bound + std::fabs(g.value) * g.denominator.tail_bound) /
            (g.denominator.value - g.denominator.tail_bound);
  return g;
}

/// Ratio with the insertion's own base as denominator, in one pass.
inline GibbsValue gibbs_functional(const ObservableInsertion& numer, double t, const HeatTraceOptions& opt = {}) {
  GibbsValue g;
  double tail = 0.0;
  const double R = detail::resolve_cutoff(numer.base(), t, opt, &tail);
  const auto entries = numer.base().entries_up_to(R);
  const auto w = numer.inserted(entries);
  long double num = 0.0L, den = 0.0L;
  std::size_t terms = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (opt.positive_only && entries[i].lambda < 0.0) continue;
    num += detail::term(w[i], entries[i], t);
    den += detail::term(entries[i].weight, entries[i], t);
    ++terms;
  }
  g.numerator = {static_cast<double>(num), tail * numer.norm_bound(), R, terms};
  g.denominator = {static_cast<double>(den), tail, R, terms};
  if (!(g.denominator.value > tail) || g.denominator.value <= 0.0)
    fail(ErrorCode::ZeroDenominator, "denominator heat trace vanishes");
  g.value = g.numerator.value / g.denominator.value;
  g.error = (g.numerator.tail_bound + std::fabs(g.value) * tail) / (g.denominator.value - tail);
  return g;
}

struct CriticalBetaOptions {
  double level_width = 1.0;
  std::size_t levels = 240;
  double fit_fraction = 0.5;  ///< fraction of the top levels used in the growth fit
};

struct CriticalBeta {
  double beta = 0.0;
  bool diverges_at_beta = false;
  double polynomial_exponent = 0.0;  ///< gamma in  level sum ~ n^gamma exp(beta n)
  double beta_stderr = 0.0;
  bool within_tolerance = false;
  std::size_t levels_used = 0;
};

/// Estimates beta = inf{t : sum weight e^{-t lambda} < oo} over lambda >= 0 by
/// fitting  log L_n = c + beta n + gamma log n  to the level sums L_n.  The series
/// diverges at beta exactly when gamma >= -1.
inline CriticalBeta critical_beta(const SpectralMeasure& m, double lo, double hi, double tol,
                                  const CriticalBetaOptions& opt = {}) {
  if (!m.growth()) fail(ErrorCode::MissingGrowthBound, "critical_beta requires a growth certificate");
  if (opt.levels < 8) fail(ErrorCode::InvalidInput, "too few levels for a growth fit");
  const double h = opt.level_width;
  const double R = h * static_cast<double>(opt.levels) - 1e-9 * h;
  const auto entries = m.entries_up_to(R);

  const double ninf = -std::numeric_limits<double>::infinity();
  std::vector<double> lmax(opt.levels, ninf), acc(opt.levels, 0.0);
  for (const auto& e : entries) {
    if (e.lambda < 0.0 || e.weight <= 0.0) continue;
    const auto j = static_cast<std::size_t>(std::floor(e.lambda / h));
    if (j >= opt.levels) continue;
    const double lw = std::log(e.weight) + e.log_scale;
    if (lw > lmax[j]) {
      acc[j] = acc[j] * std::exp(lmax[j] - lw) + 1.0;
      lmax[j] = lw;
    } else {
      acc[j] += std::exp(lw - lmax[j]);
    }
  }
  const auto first = static_cast<std::size_t>(std::floor(static_cast<double>(opt.levels) * (1.0 - opt.fit_fraction)));
  std::vector<double> xs, ys;
  for (std::size_t j = std::max<std::size_t>(first, 1); j < opt.levels; ++j) {
    if (lmax[j] == ninf) continue;
    xs.push_back(static_cast<double>(j) * h);
    ys.push_back(lmax[j] + std::log(acc[j]));
  }
  if (xs.size() < 4) fail(ErrorCode::EmptySpectrum, "not enough nonempty levels for a growth fit");

  const auto n = static_cast<Eigen::Index>(xs.size());
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = xs[i];
    X(i, 2) = std::log(xs[i]);
    y(i) = ys[i];
  }
  const Eigen::VectorXd coef = X.colPivHouseholderQr().solve(y);
  const Eigen::VectorXd res = y - X * coef;
  const double dof = static_cast<double>(n) - 3.0;
  const double s2 = dof > 0 ? res.squaredNorm() / dof : 0.0;
  const Eigen::MatrixXd cov = s2 * (X.transpose() * X).inverse();

  CriticalBeta out;
  out.beta = coef(1);
  out.polynomial_exponent = coef(2);
  out.beta_stderr = std::sqrt(std::max(0.0, cov(1, 1)));
  out.levels_used = xs.size();
  out.within_tolerance = out.beta_stderr <= tol;
  out.diverges_at_beta = out.polynomial_exponent > -1.0;
  if (!(out.beta > lo && out.beta < hi))
    fail(ErrorCode::WindowTooNarrow, "estimated beta " + std::to_string(out.beta) + " lies outside the search window");
  return out;
}

/// Right-continuous nonincreasing step function t -> mu(t), the decreasing
/// rearrangement of a weighted multiset of absolute values.
class SingularValueFunction {
 public:
  static SingularValueFunction from_multiset(std::vector<std::pair<double, double>> value_weight) {
    for (const auto& [v, w] : value_weight) {
      if (!std::isfinite(v) || !std::isfinite(w)) fail(ErrorCode::InvalidInput, "non-finite singular value data");
      if (w < 0.0) fail(ErrorCode::NegativeWeight, "negative multiplicity");
    }
    for (auto& vw : value_weight) vw.first = std::fabs(vw.first);
    std::stable_sort(value_weight.begin(), value_weight.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    SingularValueFunction f;
    for (const auto& [v, w] : value_weight) {
      if (w == 0.0) continue;
      if (!f.values_.empty() && f.values_.back() == v) {
        f.lengths_.back() += w;
      } else {
        f.values_.push_back(v);
        f.lengths_.push_back(w);
      }
    }
    f.finish();
    return f;
  }

  static SingularValueFunction from_sequence(const std::vector<double>& values) {
    std::vector<std::pair<double, double>> vw;
    vw.reserve(values.size());
    for (double v : values) vw.emplace_back(v, 1.0);
    return from_multiset(std::move(vw));
  }

  /// mu(t); zero beyond the support.
  double operator()(double t) const {
    if (t < 0.0) t = 0.0;
    const auto k = step_index(t);
    return k < values_.size() ? values_[k] : 0.0;
  }

  /// Integral of mu over [0, t].
  double integral(double t) const {
    if (t <= 0.0) return 0.0;
    const auto k = step_index(t);
    if (k >= values_.size()) return cumulative_.back();
    return cumulative_[k] + (t - starts_[k]) * values_[k];
  }

  /// n(s) = total multiplicity of values strictly greater than s.
  double distribution(double s) const {
    double n = 0.0;
    for (std::size_t k = 0; k < values_.size() && values_[k] > s; ++k) n += lengths_[k];
    return n;
  }

  double support() const { return starts_.empty() ? 0.0 : starts_.back(); }
  const std::vector<double>& values() const { return values_; }
  /// Left endpoints of the steps followed by the end of the support.
  const std::vector<double>& breakpoints() const { return starts_; }

 private:
  void finish() {
    starts_.assign(values_.size() + 1, 0.0);
    cumulative_.assign(values_.size() + 1, 0.0);
    long double s = 0.0L, c = 0.0L;
    for (std::size_t k = 0; k < values_.size(); ++k) {
      starts_[k] = static_cast<double>(s);
      cumulative_[k] = static_cast<double>(c);
      s += lengths_[k];
      c += static_cast<long double>(lengths_[k]) * values_[k];
    }
    starts_.back() = static_cast<double>(s);
    cumulative_.back() = static_cast<double>(c);
  }

  std::size_t step_index(double t) const {
    if (t >= starts_.back()) return values_.size();
    const auto it = std::upper_bound(starts_.begin(), starts_.end() - 1, t);
    return static_cast<std::size_t>(it - starts_.begin()) - 1;
  }

  std::vector<double> values_, lengths_, starts_, cumulative_;
};

}  // namespace kmsheat
