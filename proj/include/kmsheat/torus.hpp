#pragma once

// Flat-torus Dirac spectra: lattice heat traces, Weyl exponents, the
// trace state on trigonometric polynomials, the F_D symmetry, commutator
// bounds and the Dixmier trace of P_D a (1 + D^2)^{-1/2}.

#include <lapacke.h>

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "kmsheat/asymptotics.hpp"
#include "kmsheat/errors.hpp"
#include "kmsheat/spectral.hpp"

namespace kmsheat {

using Complex = std::complex<double>;
using LatticePoint = std::vector<int>;

/// Finitely many Fourier coefficients a_k, k in Z^d.
class TrigPolynomial {
 public:
  explicit TrigPolynomial(int d) : d_(d) {
    if (d < 1) fail(ErrorCode::InvalidInput, "torus dimension must be positive");
  }

  static TrigPolynomial constant(int d, Complex c) {
    TrigPolynomial p(d);
    p.set(LatticePoint(d, 0), c);
    return p;
  }

  int dimension() const { return d_; }
  const std::map<LatticePoint, Complex>& coeffs() const { return coeffs_; }

  void set(const LatticePoint& k, Complex c) {
    if (static_cast<int>(k.size()) != d_) fail(ErrorCode::InvalidInput, "frequency has the wrong dimension");
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) fail(ErrorCode::InvalidInput, "non-finite coefficient");
    if (c == Complex{})
      coeffs_.erase(k);
    else
      coeffs_[k] = c;
  }

  Complex at(const LatticePoint& k) const {
    auto it = coeffs_.find(k);
    return it == coeffs_.end() ? Complex{} : it->second;
  }

  Complex zero_mode() const { return at(LatticePoint(d_, 0)); }

  bool is_real(double tol = 0.0) const {
    for (const auto& [k, c] : coeffs_) {
      LatticePoint mk(k);
      for (int& x : mk) x = -x;
      if (std::abs(at(mk) - std::conj(c)) > tol) return false;
    }
    return true;
  }

  int max_frequency() const {
    int m = 0;
    for (const auto& [k, c] : coeffs_)
      for (int x : k) m = std::max(m, std::abs(x));
    return m;
  }

  double l1_norm() const {
    double s = 0.0;
    for (const auto& [k, c] : coeffs_) s += std::abs(c);
    return s;
  }

  Complex operator()(const std::vector<double>& theta) const {
    Complex s{};
    for (const auto& [k, c] : coeffs_) {
      double ph = 0.0;
      for (int i = 0; i < d_; ++i) ph += k[i] * theta[i];
      s += c * std::polar(1.0, ph);
    }
    return s;
  }

  friend TrigPolynomial operator*(const TrigPolynomial& a, const TrigPolynomial& b) {
    if (a.d_ != b.d_) fail(ErrorCode::InvalidInput, "dimension mismatch");
    std::map<LatticePoint, Complex> out;
    for (const auto& [k, x] : a.coeffs_)
      for (const auto& [l, y] : b.coeffs_) {
        LatticePoint s(k);
        for (int i = 0; i < a.d_; ++i) s[i] += l[i];
        out[s] += x * y;
      }
    TrigPolynomial p(a.d_);
    for (const auto& [k, c] : out) p.set(k, c);
    return p;
  }

 private:
  int d_;
  std::map<LatticePoint, Complex> coeffs_;
};

/// Eigenvalues |m| of the flat Dirac operator on T^d for |m| <= R, grouped in
/// shells, with spinor multiplicity 2^{floor(d/2)}; d = 1 keeps the sign n in Z.
class TorusSpectrum {
 public:
  TorusSpectrum(int d, int R) : d_(d), R_(R) {
    if (d < 1 || d > 3) fail(ErrorCode::InvalidInput, "torus dimension must be 1, 2 or 3");
    if (R < 1) fail(ErrorCode::InvalidInput, "lattice cutoff must be positive");
    const double spin = std::ldexp(1.0, d / 2);
    if (d == 1) {
      for (int n = -R; n <= R; ++n) entries_.push_back({static_cast<double>(n), spin, 0.0});
      return;
    }
    const long long R2 = static_cast<long long>(R) * R;
    std::vector<long long> count(static_cast<std::size_t>(R2) + 1, 0);
    for (int x = -R; x <= R; ++x) {
      const long long rx = R2 - static_cast<long long>(x) * x;
      const int ymax = static_cast<int>(std::floor(std::sqrt(static_cast<double>(rx))));
      for (int y = -ymax; y <= ymax; ++y) {
        const long long r2 = static_cast<long long>(x) * x + static_cast<long long>(y) * y;
        if (d == 2) {
          ++count[r2];
          continue;
        }
        const int zmax = static_cast<int>(std::floor(std::sqrt(static_cast<double>(R2 - r2))));
        for (int z = -zmax; z <= zmax; ++z) ++count[r2 + static_cast<long long>(z) * z];
      }
    }
    for (std::size_t k = 0; k < count.size(); ++k)
      if (count[k] > 0)
        entries_.push_back({std::sqrt(static_cast<double>(k)), spin * static_cast<double>(count[k]), 0.0});
  }

  int dimension() const { return d_; }
  int cutoff() const { return R_; }
  double spin_multiplicity() const { return std::ldexp(1.0, d_ / 2); }
  const std::vector<SpectralEntry>& entries() const { return entries_; }

  /// Number of lattice points with |m| <= r, without multiplicity.
  long long lattice_count(double r) const {
    double s = 0.0;
    for (const auto& e : entries_)
      if (std::fabs(e.lambda) <= r + 1e-12) s += e.weight;
    return std::llround(s / spin_multiplicity());
  }

  /// Bound on sum_{|m| > R} mult e^{-t |m|^{1/s}} from #{|m| <= rho} <= (2 rho + 1)^d.
  double tail_bound(double t, double s = 1.0) const {
    const double q = 1.0 / s;
    if (q < 1.0) fail(ErrorCode::InvalidInput, "heat exponent must satisfy s <= 1");
    const double R = R_;
    // |m|^q >= R^{q-1} |m| for |m| >= R
    const double te = t * std::pow(R, q - 1.0);
    // e^{-tR} sum_j C(d,j) (2R+1)^{d-j} (2/t)^j j!
    double sum = 0.0, binom = 1.0, fact = 1.0;
    for (int j = 0; j <= d_; ++j) {
      if (j > 0) {
        binom *= static_cast<double>(d_ - j + 1) / j;
        fact *= j;
      }
      sum += binom * std::pow(2.0 * R + 1.0, d_ - j) * std::pow(2.0 / te, j) * fact;
    }
    return spin_multiplicity() * std::exp(-te * R) * sum;
  }

  /// sum mult e^{-t |lambda|^{1/s}} over the stored shells.
  double heat_trace(double t, double s = 1.0) const {
    std::vector<SpectralEntry> e = entries_;
    if (s != 1.0)
      for (auto& x : e) x.lambda = std::pow(std::fabs(x.lambda), 1.0 / s);
    HeatTraceOptions opt;
    opt.cutoff = std::numeric_limits<double>::infinity();
    return kmsheat::heat_trace(SpectralMeasure(std::move(e)), t, opt).value;
  }

 private:
  int d_;
  int R_;
  std::vector<SpectralEntry> entries_;
};

struct WeylFit {
  double exponent = 0.0;
  double constant = 0.0;
  double exponent_stderr = 0.0;
  double max_tail_ratio = 0.0;
  std::vector<double> t;
  std::vector<double> traces;
};

/// Pole fit of Tr e^{-t|D|^{1/s}} ~ c t^{-p} as t -> 0 along the schedule offsets.
inline WeylFit weyl_fit(const TorusSpectrum& spec, const LimitSchedule& schedule, double s = 1.0,
                        double weight_scale = 1.0, double tail_tol = 1e-10) {
  if (schedule.at_infinity || schedule.beta != 0.0) fail(ErrorCode::InvalidInput, "Weyl fits need a schedule at 0");
  schedule.validate();
  WeylFit out;
  out.t = schedule.offsets;
  for (double t : out.t) {
    const double g = weight_scale * spec.heat_trace(t, s);
    const double ratio = weight_scale * spec.tail_bound(t, s) / g;
    out.max_tail_ratio = std::max(out.max_tail_ratio, ratio);
    if (ratio > tail_tol)
      fail(ErrorCode::CutoffInsufficient, "lattice cutoff " + std::to_string(spec.cutoff()) +
                                              " leaves a relative tail of " + std::to_string(ratio) +
                                              " at t = " + std::to_string(t));
    out.traces.push_back(g);
  }
  const auto fit = pole_fit(out.t, out.traces);
  out.exponent = fit.order;
  out.constant = fit.residue;
  out.exponent_stderr = fit.order_stderr;
  return out;
}

inline LimitSchedule weyl_default_schedule() {
  return LimitSchedule::geometric(0.0, 0.4, 0.7, 8, ExtrapolationPolicy::PoleResidueFit, 2);
}

struct TorusStateValue {
  Complex value;
  std::vector<double> t;
  std::vector<Complex> samples;
  LimitEstimate real_limit;
  LimitEstimate imag_limit;
};

/// Tr(P_D M_a e^{-t|D|}) / Tr(P_D e^{-t|D|}); multiplication operators have diagonal a_0 in the Fourier basis.
inline Complex torus_trace_ratio(const TorusSpectrum& spec, const TrigPolynomial& a, double t) {
  if (a.dimension() != spec.dimension()) fail(ErrorCode::InvalidInput, "dimension mismatch");
  const Complex a0 = a.zero_mode();
  long double num_re = 0.0L, num_im = 0.0L, den = 0.0L;
  for (const auto& e : spec.entries()) {
    if (spec.dimension() == 1 && e.lambda < 0.0) continue;
    const long double w = e.weight * std::exp(-static_cast<long double>(t) * std::fabs(e.lambda));
    num_re += a0.real() * w;
    num_im += a0.imag() * w;
    den += w;
  }
  return {static_cast<double>(num_re / den), static_cast<double>(num_im / den)};
}

inline TorusStateValue torus_trace_state(const TorusSpectrum& spec, const TrigPolynomial& a,
                                         const LimitSchedule& schedule) {
  if (schedule.at_infinity || schedule.beta != 0.0) fail(ErrorCode::InvalidInput, "torus states need a schedule at 0");
  TorusStateValue out;
  std::vector<double> re, im;
  for (double t : schedule.offsets) {
    const Complex v = torus_trace_ratio(spec, a, t);
    out.t.push_back(t);
    out.samples.push_back(v);
    re.push_back(v.real());
    im.push_back(v.imag());
  }
  out.real_limit = extended_limit(schedule, std::span<const double>(re));
  out.imag_limit = extended_limit(schedule, std::span<const double>(im));
  out.value = {out.real_limit.limit, out.imag_limit.limit};
  return out;
}

struct FdSymmetryReport {
  std::vector<double> t;
  std::vector<double> f_ratio;     ///< Tr(F_D M_a e^{-t|D|}) / Tr(e^{-t|D|})
  std::vector<double> pd_ratio;    ///< Tr(P_D M_a e^{-t|D|}) / Tr(P_D e^{-t|D|})
  std::vector<double> full_ratio;  ///< Tr(M_a e^{-t|D|}) / Tr(e^{-t|D|})
  double f_limit = 0.0;
  double decay_order = 0.0;
  double pd_limit = 0.0;
  double full_limit = 0.0;
  bool symmetric = false;
};

/// d = 1 with F_D = sign(D), sign(0) = +1. `odd_perturbation` adds eta sign(n) to the diagonal of M_a.
inline FdSymmetryReport fd_symmetry_check(const TorusSpectrum& spec, const TrigPolynomial& a,
                                          const LimitSchedule& schedule, double odd_perturbation = 0.0,
                                          double tol = 1e-6) {
  if (spec.dimension() != 1 || a.dimension() != 1) fail(ErrorCode::InvalidInput, "F_D symmetry needs the signed d = 1 spectrum");
  if (schedule.at_infinity || schedule.beta != 0.0) fail(ErrorCode::InvalidInput, "F_D symmetry needs a schedule at 0");
  const double a0 = a.zero_mode().real();
  FdSymmetryReport rep;
  for (double t : schedule.offsets) {
    if (spec.tail_bound(t) > 1e-12 * spec.heat_trace(t))
      fail(ErrorCode::CutoffInsufficient, "lattice cutoff too small for t = " + std::to_string(t));
    long double f = 0.0L, p = 0.0L, pn = 0.0L, full = 0.0L, fn = 0.0L;
    for (const auto& e : spec.entries()) {
      const double sgn = e.lambda >= 0.0 ? 1.0 : -1.0;
      const long double w = e.weight * std::exp(-static_cast<long double>(t) * std::fabs(e.lambda));
      const double diag = a0 + odd_perturbation * (e.lambda == 0.0 ? 0.0 : sgn);
      f += sgn * diag * w;
      full += diag * w;
      fn += w;
      if (sgn > 0) {
        p += diag * w;
        pn += w;
      }
    }
    rep.t.push_back(t);
    rep.f_ratio.push_back(static_cast<double>(f / fn));
    rep.pd_ratio.push_back(static_cast<double>(p / pn));
    rep.full_ratio.push_back(static_cast<double>(full / fn));
  }
  rep.f_limit = extended_limit(schedule, std::span<const double>(rep.f_ratio)).limit;
  rep.pd_limit = extended_limit(schedule, std::span<const double>(rep.pd_ratio)).limit;
  rep.full_limit = extended_limit(schedule, std::span<const double>(rep.full_ratio)).limit;
  // slope of log|ratio| against log t over the schedule
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(rep.t.size());
  for (double r : rep.f_ratio)
    if (r == 0.0) fail(ErrorCode::InvalidInput, "F_D ratio vanishes identically; no decay order to fit");
  for (std::size_t j = 0; j < rep.t.size(); ++j) {
    const double x = std::log(rep.t[j]), y = std::log(std::fabs(rep.f_ratio[j]));
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  rep.decay_order = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  rep.symmetric = std::fabs(rep.f_limit) <= tol && std::fabs(rep.pd_limit - rep.full_limit) <= tol;
  return rep;
}

struct CommutatorReport {
  int rank = 0;
  double max_singular_value = 0.0;
  int rank_bound = 0;
  double norm_bound = 0.0;
};

/// [F_D, M_a] on the modes |n| <= N: entries (sign j - sign k) a_{j-k}.
inline CommutatorReport commutator_report(const TrigPolynomial& a, int N) {
  if (a.dimension() != 1) fail(ErrorCode::InvalidInput, "commutator report needs d = 1");
  const int n = 2 * N + 1;
  Eigen::MatrixXcd C = Eigen::MatrixXcd::Zero(n, n);
  auto sgn = [](int x) { return x >= 0 ? 1.0 : -1.0; };
  for (int j = -N; j <= N; ++j)
    for (int k = -N; k <= N; ++k) C(j + N, k + N) = (sgn(j) - sgn(k)) * a.at({j - k});
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(C);
  const auto& sv = svd.singularValues();
  CommutatorReport rep;
  rep.max_singular_value = sv.size() ? sv(0) : 0.0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > 1e-12 * std::max(1.0, rep.max_singular_value)) ++rep.rank;
  rep.rank_bound = 2 * a.max_frequency();
  rep.norm_bound = 2.0 * a.l1_norm();
  return rep;
}

/// Decreasing singular values of rows 0 <= j < N of P_D M_a (1 + D^2)^{-1/2}, from the banded
/// Hermitian matrix B B^* = sum_k a_{j-k} conj(a_{l-k}) / (1 + k^2).
inline std::vector<double> dixmier_singular_values(const TrigPolynomial& a, int N) {
  if (a.dimension() != 1) fail(ErrorCode::InvalidInput, "Dixmier comparison needs d = 1");
  if (N > 4096) fail(ErrorCode::MatrixTooLarge, "truncation " + std::to_string(N) + " exceeds 4096");
  if (N < 1) fail(ErrorCode::InvalidInput, "truncation must be positive");
  const int K = a.max_frequency();
  const int kd = std::min(2 * K, N - 1);
  const int ld = kd + 1;
  std::vector<Complex> ab(static_cast<std::size_t>(ld) * N, Complex{});
  for (int l = 0; l < N; ++l)
    for (int j = std::max(0, l - kd); j <= l; ++j) {
      Complex s{};
      for (int k = l - K; k <= j + K; ++k) s += a.at({j - k}) * std::conj(a.at({l - k})) / (1.0 + double(k) * k);
      ab[static_cast<std::size_t>(kd + j - l) + static_cast<std::size_t>(l) * ld] = s;
    }
  std::vector<double> w(N);
  const lapack_int info = LAPACKE_zhbev(LAPACK_COL_MAJOR, 'N', 'U', N, kd,
                                          reinterpret_cast<lapack_complex_double*>(ab.data()), ld, w.data(),
                                          nullptr, 1);
  if (info != 0) fail(ErrorCode::InvalidInput, "banded eigensolver failed with info " + std::to_string(info));
  std::vector<double> sv(N);
  for (int i = 0; i < N; ++i) sv[i] = std::sqrt(std::max(0.0, w[N - 1 - i]));
  return sv;
}

struct DixmierComparison {
  int N = 0;
  double dixmier_value = 0.0;
  double error_estimate = 0.0;
  bool converged = false;
  double state_value = 0.0;  ///< zero mode a_0
  double relative_error = 0.0;
  std::string normalization;
  DixmierResult dixmier;
};

inline LimitSchedule dixmier_default_schedule(int N) {
  return LimitSchedule::geometric_to_infinity(16.0, 0.25 * N, 12);
}

/// Dixmier trace of P_D M_a (1 + D^2)^{-1/2} with psi(t) = 1/(1+t), Psi(t) = log(1+t), against a_0.
inline DixmierComparison dixmier_vs_state(const TrigPolynomial& a, int N, const LimitSchedule& schedule,
                                          const DixmierOptions& opt = {}) {
  if (!a.is_real(1e-14)) fail(ErrorCode::InvalidInput, "Dixmier comparison needs a real-valued observable");
  const int grid = 4 * std::max(1, a.max_frequency()) + 64;
  for (int i = 0; i < grid; ++i)
    if (a({2.0 * std::numbers::pi * i / grid}).real() < -1e-12)
      fail(ErrorCode::InvalidInput, "Dixmier comparison needs a nonnegative observable");
  DixmierComparison out;
  out.N = N;
  const auto sv = dixmier_singular_values(a, N);
  out.dixmier = dixmier_trace(SingularValueFunction::from_sequence(sv), PsiFunction::inverse_linear(), schedule, opt);
  out.dixmier_value = out.dixmier.value;
  out.error_estimate = out.dixmier.error_estimate;
  out.converged = out.dixmier.converged;
  out.state_value = a.zero_mode().real();
  out.relative_error = std::fabs(out.dixmier_value - out.state_value) / std::max(1e-300, std::fabs(out.state_value));
  out.normalization =
      "mu(n, P_D D) = n exactly, so psi(t) = 1/(1+t) with constant 1 and Psi(t) = log(1+t); "
      "the normalized integral is the zero Fourier mode";
  return out;
}

}  // namespace kmsheat
