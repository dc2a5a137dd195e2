#pragma once

// Free groups F_k with word length: sphere counts, the Poincare series, the
// Patterson-Sullivan measure on boundary cylinders, its Radon-Nikodym cocycle
// and the KMS condition on the cylinder-function crossed product.

#include <boost/multiprecision/cpp_int.hpp>

#include <cctype>
#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "kmsheat/asymptotics.hpp"
#include "kmsheat/errors.hpp"
#include "kmsheat/spectral.hpp"

namespace kmsheat {

using BigInt = boost::multiprecision::cpp_int;

/// Reduced word; letter +i is a_i, -i its inverse (1 <= i <= rank).
using Word = std::vector<int>;

class FreeGroup {
 public:
  explicit FreeGroup(int rank) : k_(rank) {
    if (rank < 2) fail(ErrorCode::InvalidInput, "free group rank must be at least 2 (rank 1 is the degenerate case Z)");
    if (rank > 13) fail(ErrorCode::InvalidInput, "rank above 13 has no letter encoding");
  }

  int rank() const { return k_; }
  double beta() const { return std::log(2.0 * k_ - 1.0); }

  Word reduce(const Word& w) const {
    Word out;
    for (int x : w) {
      check_letter(x);
      if (!out.empty() && out.back() == -x)
        out.pop_back();
      else
        out.push_back(x);
    }
    return out;
  }

  Word multiply(const Word& g, const Word& h) const {
    Word w = g;
    w.insert(w.end(), h.begin(), h.end());
    return reduce(w);
  }

  Word inverse(const Word& g) const {
    Word w(g.rbegin(), g.rend());
    for (int& x : w) x = -x;
    return w;
  }

  /// Number of letters cancelled when forming g h.
  std::size_t cancellation(const Word& g, const Word& h) const {
    std::size_t c = 0;
    while (c < g.size() && c < h.size() && g[g.size() - 1 - c] == -h[c]) ++c;
    return c;
  }

  /// Letters a, b, c, ... and inverses A, B, C, ...
  Word parse(const std::string& s) const {
    Word w;
    for (char ch : s) {
      const int i = std::tolower(static_cast<unsigned char>(ch)) - 'a' + 1;
      if (i < 1 || i > k_) fail(ErrorCode::InvalidInput, std::string("letter '") + ch + "' is not a generator");
      w.push_back(std::islower(static_cast<unsigned char>(ch)) ? i : -i);
    }
    return reduce(w);
  }

  std::string format(const Word& w) const {
    std::string s;
    for (int x : w) s += static_cast<char>(x > 0 ? 'a' + x - 1 : 'A' - x - 1);
    return s.empty() ? "e" : s;
  }

  /// All reduced words of length exactly n.
  std::vector<Word> sphere(std::size_t n) const {
    std::vector<Word> layer{{}};
    for (std::size_t len = 0; len < n; ++len) {
      std::vector<Word> next;
      for (const auto& w : layer)
        for (int i = 1; i <= k_; ++i)
          for (int x : {i, -i}) {
            if (!w.empty() && w.back() == -x) continue;
            Word v = w;
            v.push_back(x);
            next.push_back(std::move(v));
          }
      layer = std::move(next);
    }
    return layer;
  }

 private:
  void check_letter(int x) const {
    if (x == 0 || std::abs(x) > k_) fail(ErrorCode::InvalidInput, "letter outside the generating set");
  }
  int k_;
};

/// #{|gamma| = n} for n <= n_max: 1, 2k, 2k(2k-1), ...
inline std::vector<BigInt> sphere_counts(const FreeGroup& G, std::size_t n_max) {
  std::vector<BigInt> out{1};
  const int k = G.rank();
  for (std::size_t n = 1; n <= n_max; ++n) out.push_back(n == 1 ? BigInt(2 * k) : out.back() * (2 * k - 1));
  return out;
}

/// sum_{n <= R} #{|gamma| = n} <= (1 + k/(k-1)) (2k-1)^R.
inline GrowthBound sphere_growth(const FreeGroup& G) {
  const double k = G.rank();
  return {1.0 + k / (k - 1.0), std::log(2.0 * k - 1.0)};
}

/// Spectrum of D_l: eigenvalue n with multiplicity #{|gamma| = n}.
inline SpectralMeasure length_spectrum(const FreeGroup& G) {
  const double k = G.rank();
  auto gen = [k](double R) {
    std::vector<SpectralEntry> out{{0.0, 1.0, 0.0}};
    for (int n = 1; n <= static_cast<int>(std::floor(R)); ++n)
      out.push_back({static_cast<double>(n), 2.0 * k, (n - 1) * std::log(2.0 * k - 1.0)});
    return out;
  };
  return SpectralMeasure(gen, sphere_growth(G));
}

struct PoincareCritical {
  double beta = 0.0;
  bool is_critical = false;
  double ratio = 0.0;               ///< limiting ratio of consecutive sphere counts
  double polynomial_exponent = 0.0;
};

/// beta = lim log(S_{n+1}/S_n); critical iff e^{-beta n} S_n is not summable.
inline PoincareCritical poincare_critical(const FreeGroup& G, std::size_t n_max = 64) {
  const auto S = sphere_counts(G, n_max);
  PoincareCritical out;
  out.ratio = boost::multiprecision::cpp_rational(S[n_max], S[n_max - 1]).convert_to<double>();
  out.beta = std::log(out.ratio);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t m = 0;
  for (std::size_t n = n_max / 2; n <= n_max; ++n) {
    const double x = std::log(static_cast<double>(n));
    const double y = std::log(S[n].convert_to<double>()) - out.beta * static_cast<double>(n);
    sx += x, sy += y, sxx += x * x, sxy += x * y, ++m;
  }
  out.polynomial_exponent = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  out.is_critical = out.polynomial_exponent > -1.0;
  return out;
}

struct CylinderSet {
  Word base;
};

struct CylinderMeasure {
  double value = 0.0;
  double error = 0.0;
  bool converged = false;
  LimitEstimate limit;
};

/// Offsets shrink with the cylinder depth so that e^{-t|w|} varies uniformly across the schedule.
inline LimitSchedule ps_default_schedule(const FreeGroup& G, std::size_t depth = 1) {
  const double eps0 = 0.4 / static_cast<double>(std::max<std::size_t>(1, depth));
  return LimitSchedule::geometric(G.beta(), eps0, 0.5, 8, ExtrapolationPolicy::Richardson, 0);
}

/// mu(C_w) = extended limit of sum_{gamma starts with w} e^{-t|gamma|} / sum_gamma e^{-t|gamma|}.
inline CylinderMeasure ps_cylinder_measure(const FreeGroup& G, const CylinderSet& cyl, const LimitSchedule& schedule,
                                           const ExtrapolationOptions& opt = {1e-9, 1e-8, -1}) {
  const Word w = G.reduce(cyl.base);
  if (w != cyl.base) fail(ErrorCode::InvalidInput, "cylinder base must be reduced");
  if (w.empty()) fail(ErrorCode::InvalidInput, "cylinder base must be nonempty");
  if (schedule.at_infinity || std::fabs(schedule.beta - G.beta()) > 1e-12)
    fail(ErrorCode::InvalidInput, "Patterson-Sullivan schedule must approach the critical exponent");
  // the series depend on w only through |w|
  using Key = std::tuple<int, std::size_t, std::vector<double>, int, int, double, double, int>;
  static std::mutex cache_mutex;
  static std::map<Key, CylinderMeasure> cache;
  const Key key{G.rank(), w.size(), schedule.offsets, static_cast<int>(schedule.policy), schedule.order,
                opt.residual_tol, opt.stability_tol, opt.max_order};
  {
    std::lock_guard<std::mutex> lock(cache_mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  const auto m = static_cast<double>(w.size());
  const double q = 2.0 * G.rank() - 1.0;
  // words of length n >= m starting with w number (2k-1)^{n-m}
  const SpectralMeasure base = length_spectrum(G);
  ObservableInsertion ins(
      base,
      [m, q](const std::vector<SpectralEntry>& e) {
        std::vector<double> out(e.size(), 0.0);
        for (std::size_t i = 0; i < e.size(); ++i)
          if (e[i].lambda >= m)
            out[i] = std::exp((e[i].lambda - m) * std::log(q) - e[i].log_scale);
        return out;
      },
      "1_C(" + G.format(w) + ")");
  HeatTraceOptions hopt;
  hopt.tail_tolerance = 1e-14;
  CylinderMeasure out;
  out.limit = extended_limit(schedule, [&](double t) { return gibbs_functional(ins, t, hopt).value; }, opt);
  out.value = out.limit.limit;
  out.error = out.limit.error_estimate;
  out.converged = out.limit.converged;
  std::lock_guard<std::mutex> lock(cache_mutex);
  cache.emplace(key, out);
  return out;
}

/// Closed-form limit 1/(2k (2k-1)^{|w|-1}) as an exact rational.
inline boost::multiprecision::cpp_rational ps_cylinder_measure_exact(const FreeGroup& G, const CylinderSet& cyl) {
  const std::size_t m = G.reduce(cyl.base).size();
  if (m == 0) return 1;
  BigInt den = 2 * G.rank();
  for (std::size_t i = 1; i < m; ++i) den *= 2 * G.rank() - 1;
  return boost::multiprecision::cpp_rational(BigInt(1), den);
}

/// Memoized extrapolated cylinder measures; mu(C_w) depends only on |w|.
class CylinderMeasureTable {
 public:
  /// Depth-adapted default schedules.
  explicit CylinderMeasureTable(const FreeGroup& G) : G_(G) {}
  CylinderMeasureTable(const FreeGroup& G, LimitSchedule schedule) : G_(G), schedule_(std::move(schedule)) {}

  double operator()(const Word& w) const {
    if (w.empty()) return 1.0;
    std::lock_guard<std::mutex> lock(mu_);
    auto it = by_length_.find(w.size());
    if (it == by_length_.end()) {
      const Word rep(w.size(), 1);
      const auto sched = schedule_ ? *schedule_ : ps_default_schedule(G_, w.size());
      it = by_length_.emplace(w.size(), ps_cylinder_measure(G_, {rep}, sched)).first;
    }
    return it->second.value;
  }

  /// Every cylinder measure computed so far reported convergence.
  bool all_converged() const {
    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& [m, c] : by_length_)
      if (!c.converged) return false;
    return true;
  }

 private:
  FreeGroup G_;
  std::optional<LimitSchedule> schedule_;
  mutable std::mutex mu_;
  mutable std::map<std::size_t, CylinderMeasure> by_length_;
};

/// mu(g C_w) / mu(C_w), constant on C_w once w survives the cancellation against g.
inline double rn_cocycle(const FreeGroup& G, const Word& g, const CylinderSet& cyl, const CylinderMeasureTable& mu) {
  const Word w = G.reduce(cyl.base);
  const std::size_t c = G.cancellation(G.reduce(g), w);
  if (w.size() <= c)
    fail(ErrorCode::ShallowCylinder, "cylinder " + G.format(w) + " is consumed by the cancellation against " +
                                         G.format(g) + "; refine it");
  return mu(G.multiply(g, w)) / mu(w);
}

/// Finite combination of cylinder indicators; the empty word is the constant function 1.
struct CylinderFunction {
  std::map<Word, double> coeffs;

  static CylinderFunction constant(double c) { return {{{Word{}, c}}}; }

  std::size_t depth() const {
    std::size_t d = 0;
    for (const auto& [w, c] : coeffs) d = std::max(d, w.size());
    return d;
  }

  /// Value on the cylinder C_v, assuming |v| >= depth().
  double on(const Word& v) const {
    double s = 0.0;
    for (const auto& [w, c] : coeffs)
      if (w.size() <= v.size() && std::equal(w.begin(), w.end(), v.begin())) s += c;
    return s;
  }
};

struct CrossedElement {
  CylinderFunction a;
  Word g;
};

struct CrossedKmsReport {
  double max_violation = 0.0;
  std::size_t pairs = 0;
  std::size_t depth = 0;
  std::string worst;
};

/// Depth at which every product in the test set is a cylinder function.
inline std::size_t required_depth(const std::vector<CrossedElement>& elements) {
  std::size_t d = 0, L = 0;
  for (const auto& x : elements) {
    d = std::max(d, x.a.depth());
    L = std::max(L, x.g.size());
  }
  return d + 2 * L + 1;
}

/// max |phi(x y) - phi(y sigma_i(x))| with sigma_s(a lambda_g) = (d g_* mu / d mu)^{is} a lambda_g;
/// `exponent` replaces the power -1 of the Radon-Nikodym derivative in sigma_i by -exponent.
inline CrossedKmsReport crossed_product_kms_check(const FreeGroup& G, const std::vector<CrossedElement>& elements,
                                                  std::size_t depth, const CylinderMeasureTable& mu,
                                                  double exponent = 1.0) {
  const std::size_t need = required_depth(elements);
  if (depth < need)
    fail(ErrorCode::DepthInsufficient,
         "cylinder depth " + std::to_string(depth) + " is below the required " + std::to_string(need));
  const auto level = G.sphere(depth);
  CrossedKmsReport rep;
  rep.depth = depth;
  for (const auto& x : elements)
    for (const auto& y : elements) {
      ++rep.pairs;
      if (!G.multiply(x.g, y.g).empty()) continue;
      const Word ginv = G.inverse(x.g);
      long double lhs = 0.0L, rhs = 0.0L;
      for (const auto& v : level) {
        const double mv = mu(v);
        // (g.b)(xi) = b(g^{-1} xi)
        lhs += mv * x.a.on(v) * y.a.on(G.multiply(ginv, v));
        // int b . h.(D_g^{-p} a) dmu with h = g^{-1}, D_g = mu(C_v)/mu(C_{gv}) on C_{gv}
        const Word gv = G.multiply(x.g, v);
        rhs += mv * y.a.on(v) * x.a.on(gv) * std::pow(mu(gv) / mv, exponent);
      }
      const double viol = static_cast<double>(std::fabs(lhs - rhs));
      if (viol > rep.max_violation) {
        rep.max_violation = viol;
        rep.worst = "(" + G.format(x.g) + ", " + G.format(y.g) + ")";
      }
    }
  return rep;
}

/// phi(a lambda_g) = delta_{g,e} int a dmu, with the integral taken at the coefficient depth.
inline double crossed_phi(const FreeGroup& G, const CrossedElement& x, const CylinderMeasureTable& mu) {
  if (!x.g.empty()) return 0.0;
  const std::size_t d = std::max<std::size_t>(1, x.a.depth());
  double s = 0.0;
  for (const auto& v : G.sphere(d)) s += mu(v) * x.a.on(v);
  return s;
}

}  // namespace kmsheat
