#pragma once

// Finite directed graphs, their path algebra S_mu S_nu^*, exact path counting,
// the path-space Dirac operator D_y at an eventually periodic base point and
// the gauge KMS state obtained from its heat traces.

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "kmsheat/asymptotics.hpp"
#include "kmsheat/errors.hpp"
#include "kmsheat/perron.hpp"
#include "kmsheat/spectral.hpp"

namespace kmsheat {

using BigInt = boost::multiprecision::cpp_int;

struct Edge {
  std::string id;
  std::size_t src = 0;
  std::size_t dst = 0;
};

/// Finite directed multigraph without sinks or sources.
class DirectedGraph {
 public:
  struct EdgeSpec {
    std::string id, src, dst;
  };

  DirectedGraph(std::vector<std::string> vertices, const std::vector<EdgeSpec>& edges)
      : vertices_(std::move(vertices)) {
    if (vertices_.empty()) fail(ErrorCode::InvalidInput, "graph has no vertices");
    for (std::size_t i = 0; i < vertices_.size(); ++i)
      if (!vertex_index_.emplace(vertices_[i], i).second)
        fail(ErrorCode::InvalidInput, "duplicate vertex id '" + vertices_[i] + "'");
    out_.resize(vertices_.size());
    in_.resize(vertices_.size());
    for (const auto& e : edges) {
      const auto s = vertex_index_.find(e.src), d = vertex_index_.find(e.dst);
      if (s == vertex_index_.end() || d == vertex_index_.end())
        fail(ErrorCode::InvalidInput, "edge '" + e.id + "' references an unknown vertex");
      if (!edge_index_.emplace(e.id, edges_.size()).second)
        fail(ErrorCode::InvalidInput, "duplicate edge id '" + e.id + "'");
      out_[s->second].push_back(edges_.size());
      in_[d->second].push_back(edges_.size());
      edges_.push_back({e.id, s->second, d->second});
    }
    for (std::size_t v = 0; v < vertices_.size(); ++v)
      if (out_[v].empty() || in_[v].empty())
        fail(ErrorCode::InvalidInput, "vertex '" + vertices_[v] + "' is a sink or a source");
  }

  /// One vertex carrying n loops e1..en.
  static DirectedGraph cuntz(std::size_t n) {
    std::vector<EdgeSpec> e;
    for (std::size_t i = 1; i <= n; ++i) e.push_back({"e" + std::to_string(i), "v", "v"});
    return DirectedGraph({"v"}, e);
  }

  /// Two vertices with vertex matrix [[1,1],[1,0]]: a loop at v1 and edges v1 -> v2 -> v1.
  static DirectedGraph fibonacci() {
    return DirectedGraph({"v1", "v2"}, {{"a", "v1", "v1"}, {"b", "v1", "v2"}, {"c", "v2", "v1"}});
  }

  std::size_t num_vertices() const { return vertices_.size(); }
  std::size_t num_edges() const { return edges_.size(); }
  const std::string& vertex(std::size_t v) const { return vertices_.at(v); }
  const std::vector<std::string>& vertices() const { return vertices_; }
  const Edge& edge(std::size_t e) const { return edges_.at(e); }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<std::size_t>& out_edges(std::size_t v) const { return out_.at(v); }
  const std::vector<std::size_t>& in_edges(std::size_t v) const { return in_.at(v); }

  std::size_t vertex_index(const std::string& id) const {
    const auto it = vertex_index_.find(id);
    if (it == vertex_index_.end()) fail(ErrorCode::InvalidInput, "unknown vertex '" + id + "'");
    return it->second;
  }
  std::size_t edge_index(const std::string& id) const {
    const auto it = edge_index_.find(id);
    if (it == edge_index_.end()) fail(ErrorCode::InvalidInput, "unknown edge '" + id + "'");
    return it->second;
  }

  /// M_{xy} = number of edges x -> y.
  Eigen::MatrixXd vertex_matrix() const {
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(num_vertices(), num_vertices());
    for (const auto& e : edges_) M(e.src, e.dst) += 1.0;
    return M;
  }

  /// A_{ef} = 1 iff r(e) = s(f).
  Eigen::MatrixXd edge_matrix() const {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(num_edges(), num_edges());
    for (std::size_t e = 0; e < num_edges(); ++e)
      for (std::size_t f : out_[edges_[e].dst]) A(e, f) = 1.0;
    return A;
  }

 private:
  std::vector<std::string> vertices_;
  std::vector<Edge> edges_;
  std::unordered_map<std::string, std::size_t> vertex_index_, edge_index_;
  std::vector<std::vector<std::size_t>> out_, in_;
};

/// Finite path; with no edges it is the vertex projection p_vertex.
struct Path {
  std::size_t vertex = 0;  ///< source vertex
  std::vector<std::size_t> edges;

  std::size_t length() const { return edges.size(); }
  std::size_t source(const DirectedGraph&) const { return vertex; }
  std::size_t range(const DirectedGraph& g) const { return edges.empty() ? vertex : g.edge(edges.back()).dst; }
  bool operator==(const Path& o) const { return vertex == o.vertex && edges == o.edges; }
  bool operator<(const Path& o) const { return std::tie(vertex, edges) < std::tie(o.vertex, o.edges); }

  static Path at_vertex(std::size_t v) { return {v, {}}; }

  static Path of_edges(const DirectedGraph& g, std::vector<std::size_t> es) {
    if (es.empty()) fail(ErrorCode::InvalidInput, "use Path::at_vertex for empty paths");
    for (std::size_t i = 1; i < es.size(); ++i)
      if (g.edge(es[i - 1]).dst != g.edge(es[i]).src) fail(ErrorCode::InvalidInput, "edges do not compose to a path");
    return {g.edge(es.front()).src, std::move(es)};
  }

  static Path of_ids(const DirectedGraph& g, const std::vector<std::string>& ids) {
    std::vector<std::size_t> es;
    for (const auto& id : ids) es.push_back(g.edge_index(id));
    return of_edges(g, std::move(es));
  }

  std::string label(const DirectedGraph& g) const {
    if (edges.empty()) return "p_" + g.vertex(vertex);
    std::string s;
    for (std::size_t i = 0; i < edges.size(); ++i) s += (i ? "." : "") + g.edge(edges[i]).id;
    return s;
  }
};

/// S_mu S_nu^*, nonzero exactly when r(mu) = r(nu).
struct Monomial {
  Path mu, nu;
  int degree() const { return static_cast<int>(mu.length()) - static_cast<int>(nu.length()); }
  Monomial adjoint() const { return {nu, mu}; }
  bool operator<(const Monomial& o) const { return std::tie(mu, nu) < std::tie(o.mu, o.nu); }
  bool operator==(const Monomial& o) const { return mu == o.mu && nu == o.nu; }
  std::string label(const DirectedGraph& g) const { return "S[" + mu.label(g) + "]S*[" + nu.label(g) + "]"; }
};

inline Monomial make_monomial(const DirectedGraph& g, Path mu, Path nu) {
  if (mu.range(g) != nu.range(g)) fail(ErrorCode::InvalidInput, "S_mu S_nu^* needs r(mu) = r(nu)");
  return {std::move(mu), std::move(nu)};
}

namespace detail {

inline bool is_prefix(const Path& p, const Path& q) {
  if (p.vertex != q.vertex || p.edges.size() > q.edges.size()) return false;
  return std::equal(p.edges.begin(), p.edges.end(), q.edges.begin());
}

inline Path remainder(const DirectedGraph& g, const Path& p, const Path& q) {
  Path r{p.range(g), std::vector<std::size_t>(q.edges.begin() + static_cast<std::ptrdiff_t>(p.edges.size()), q.edges.end())};
  return r;
}

inline Path concat(const DirectedGraph& g, const Path& a, const Path& b) {
  Path r = a;
  if (a.range(g) != b.vertex) fail(ErrorCode::InvalidInput, "paths do not compose");
  r.edges.insert(r.edges.end(), b.edges.begin(), b.edges.end());
  return r;
}

}  // namespace detail

/// (S_mu S_nu^*)(S_a S_b^*) in the path algebra.
inline std::optional<Monomial> multiply(const DirectedGraph& g, const Monomial& x, const Monomial& y) {
  if (detail::is_prefix(x.nu, y.mu)) {
    const Path rest = detail::remainder(g, x.nu, y.mu);
    return Monomial{detail::concat(g, x.mu, rest), y.nu};
  }
  if (detail::is_prefix(y.mu, x.nu)) {
    const Path rest = detail::remainder(g, y.mu, x.nu);
    return Monomial{x.mu, detail::concat(g, y.nu, rest)};
  }
  return std::nullopt;
}

/// All paths of length <= L (vertex paths included).
inline std::vector<Path> paths_up_to(const DirectedGraph& g, std::size_t L) {
  std::vector<Path> out;
  std::vector<Path> layer;
  for (std::size_t v = 0; v < g.num_vertices(); ++v) layer.push_back(Path::at_vertex(v));
  for (std::size_t len = 0;; ++len) {
    out.insert(out.end(), layer.begin(), layer.end());
    if (len == L) break;
    std::vector<Path> next;
    for (const auto& p : layer)
      for (std::size_t e : g.out_edges(p.range(g))) {
        Path q = p;
        q.edges.push_back(e);
        next.push_back(std::move(q));
      }
    layer = std::move(next);
  }
  return out;
}

/// All S_mu S_nu^* with |mu|, |nu| <= L and r(mu) = r(nu).
inline std::vector<Monomial> monomials_up_to(const DirectedGraph& g, std::size_t L) {
  const auto ps = paths_up_to(g, L);
  std::vector<Monomial> out;
  for (const auto& a : ps)
    for (const auto& b : ps)
      if (a.range(g) == b.range(g)) out.push_back({a, b});
  return out;
}

/// Values of a state on finitely many monomials.
class StateTable {
 public:
  void set(const Monomial& m, double v) { values_[m] = v; }
  bool contains(const Monomial& m) const { return values_.count(m) > 0; }
  double at(const DirectedGraph& g, const Monomial& m) const {
    const auto it = values_.find(m);
    if (it == values_.end()) fail(ErrorCode::IncompleteStateTable, "no state value for " + m.label(g));
    return it->second;
  }
  std::size_t size() const { return values_.size(); }
  const std::map<Monomial, double>& values() const { return values_; }

 private:
  std::map<Monomial, double> values_;
};

/// Evaluates phi on every product x y and y x for x, y in the test set.
inline StateTable build_state_table(const DirectedGraph& g, const std::vector<Monomial>& tests,
                                    const std::function<double(const Monomial&)>& phi) {
  StateTable t;
  auto put = [&](const std::optional<Monomial>& m) {
    if (m && !t.contains(*m)) t.set(*m, phi(*m));
  };
  for (const auto& x : tests) {
    put(x);
    for (const auto& y : tests) put(multiply(g, x, y));
  }
  return t;
}

struct KmsCheckReport {
  double max_violation = 0.0;
  std::size_t pairs = 0;
  std::string worst;
};

/// max |phi(x y) - e^{-beta deg x} phi(y x)| over the test set.
inline KmsCheckReport kms_condition_check(const DirectedGraph& g, const StateTable& table,
                                          const std::vector<Monomial>& tests, double beta) {
  KmsCheckReport rep;
  auto value = [&](const std::optional<Monomial>& m) { return m ? table.at(g, *m) : 0.0; };
  for (const auto& x : tests)
    for (const auto& y : tests) {
      const double lhs = value(multiply(g, x, y));
      const double rhs = std::exp(-beta * x.degree()) * value(multiply(g, y, x));
      const double v = std::fabs(lhs - rhs);
      ++rep.pairs;
      if (v > rep.max_violation) {
        rep.max_violation = v;
        rep.worst = x.label(g) + " * " + y.label(g);
      }
    }
  return rep;
}

/// Smallest eigenvalue of the Gram matrix phi(m_i^* m_j); nonnegative for a positive functional.
inline double state_gram_min_eigenvalue(const DirectedGraph& g, const std::vector<Monomial>& words,
                                        const std::function<double(const Monomial&)>& phi) {
  const auto n = static_cast<Eigen::Index>(words.size());
  Eigen::MatrixXd G(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto m = multiply(g, words[i].adjoint(), words[j]);
      G(i, j) = m ? phi(*m) : 0.0;
    }
  const Eigen::MatrixXd S = 0.5 * (G + G.transpose());
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

/// Perron data of the edge adjacency matrix.
inline PerronData perron(const DirectedGraph& g, double tol = 1e-13) { return perron_data(g.edge_matrix(), tol); }

/// Eventually periodic infinite path prefix . cycle^oo.
class BasePoint {
 public:
  BasePoint(const DirectedGraph& g, std::vector<std::size_t> prefix, std::vector<std::size_t> cycle)
      : prefix_(std::move(prefix)), cycle_(std::move(cycle)) {
    if (cycle_.empty()) fail(ErrorCode::InvalidInput, "base point cycle must be nonempty");
    std::vector<std::size_t> all = prefix_;
    all.insert(all.end(), cycle_.begin(), cycle_.end());
    all.push_back(cycle_.front());
    for (std::size_t i = 1; i < all.size(); ++i)
      if (g.edge(all[i - 1]).dst != g.edge(all[i]).src)
        fail(ErrorCode::InvalidInput, "base point prefix and cycle do not chain into an infinite path");
  }

  static BasePoint of_ids(const DirectedGraph& g, const std::vector<std::string>& prefix,
                          const std::vector<std::string>& cycle) {
    std::vector<std::size_t> p, c;
    for (const auto& id : prefix) p.push_back(g.edge_index(id));
    for (const auto& id : cycle) c.push_back(g.edge_index(id));
    return BasePoint(g, std::move(p), std::move(c));
  }

  /// i-th edge y_{i+1} (0-based).
  std::size_t edge_at(std::size_t i) const {
    return i < prefix_.size() ? prefix_[i] : cycle_[(i - prefix_.size()) % cycle_.size()];
  }
  std::size_t source(const DirectedGraph& g) const { return g.edge(edge_at(0)).src; }
  const std::vector<std::size_t>& prefix() const { return prefix_; }
  const std::vector<std::size_t>& cycle() const { return cycle_; }

  /// Whether y starts with the given edges, read from offset `from` of the list.
  bool starts_with(const std::vector<std::size_t>& es, std::size_t from) const {
    for (std::size_t i = from; i < es.size(); ++i)
      if (edge_at(i - from) != es[i]) return false;
    return true;
  }

 private:
  std::vector<std::size_t> prefix_, cycle_;
};

namespace detail {

inline long bigint_shift(const BigInt& x) {
  if (x == 0) return 0;
  return std::max<long>(0, static_cast<long>(boost::multiprecision::msb(x)) - 62);
}

/// x * 2^{-shift} as a double.
inline double bigint_scaled(const BigInt& x, long shift) {
  if (x == 0) return 0.0;
  const long top = static_cast<long>(boost::multiprecision::msb(x));
  if (top - shift < -1060) return 0.0;
  const long k = std::max<long>(0, top - 62);
  const BigInt head = x >> k;
  return std::ldexp(head.convert_to<double>(), static_cast<int>(k - shift));
}

}  // namespace detail

/// Exact path counts (M^m)_{v,w}, memoized per target vertex w.
class PathCounts {
 public:
  explicit PathCounts(const DirectedGraph& g) : n_(g.num_vertices()), cols_(n_), totals_(n_) {
    for (std::size_t v = 0; v < n_; ++v)
      for (std::size_t e : g.out_edges(v)) out_targets_.resize(n_), out_targets_[v].push_back(g.edge(e).dst);
  }

  /// Number of paths of length m from each vertex to w.
  const std::vector<BigInt>& to_target(std::size_t w, std::size_t m) const {
    std::lock_guard<std::mutex> lock(mu_);
    extend(w, m);
    return cols_[w][m];
  }

  /// Number of paths of length m ending at w.
  const BigInt& ending_at(std::size_t w, std::size_t m) const {
    std::lock_guard<std::mutex> lock(mu_);
    extend(w, m);
    return totals_[w][m];
  }

 private:
  void extend(std::size_t w, std::size_t m) const {
    auto& cols = cols_.at(w);
    auto& tot = totals_.at(w);
    if (cols.empty()) {
      std::vector<BigInt> c(n_, 0);
      c[w] = 1;
      cols.push_back(std::move(c));
      tot.push_back(1);
    }
    while (cols.size() <= m) {
      const auto& prev = cols.back();
      std::vector<BigInt> next(n_, 0);
      BigInt sum = 0;
      for (std::size_t v = 0; v < n_; ++v) {
        for (std::size_t d : out_targets_[v]) next[v] += prev[d];
        sum += next[v];
      }
      cols.push_back(std::move(next));
      tot.push_back(std::move(sum));
    }
  }

  std::size_t n_;
  std::vector<std::vector<std::size_t>> out_targets_;
  mutable std::mutex mu_;
  mutable std::vector<std::deque<std::vector<BigInt>>> cols_;
  mutable std::vector<std::deque<BigInt>> totals_;
};

struct GraphKmsValue {
  double value = 0.0;
  double error_estimate = 0.0;
  bool converged = false;
  double closed_form_prediction = 0.0;  ///< r^{-|mu|} m_{r(mu)} with m the normalized Perron vertex vector
  double printed_formula = std::nan("");  ///< (w_e/|w|_1) r^{-|mu|}, w the edge Perron vector, e the last edge
  double agreement = 0.0;                 ///< value / closed_form_prediction
  double proportionality = std::nan("");  ///< value / printed_formula
  LimitEstimate limit;
};

struct FullHeatTrace {
  double value = 0.0;
  double tail_bound = 0.0;
  double positive_part = 0.0;  ///< contribution of kappa = 0
  double cutoff = 0.0;
};

/// Graph model with cached Perron data and path counts.
class GraphKmsModel {
 public:
  explicit GraphKmsModel(DirectedGraph g, double tol = 1e-13)
      : g_(std::move(g)),
        edge_perron_(perron_data(g_.edge_matrix(), tol)),
        vertex_perron_(perron_data(g_.vertex_matrix(), tol)),
        counts_(std::make_shared<PathCounts>(g_)) {}

  const DirectedGraph& graph() const { return g_; }
  const PerronData& edge_perron() const { return edge_perron_; }
  const PerronData& vertex_perron() const { return vertex_perron_; }
  const PathCounts& counts() const { return *counts_; }
  double spectral_radius() const { return edge_perron_.spectral_radius; }
  double beta() const { return std::log(spectral_radius()); }

  /// Positive part of D_y: eigenvalue n with multiplicity #{paths of length n ending at s(y)}.
  SpectralMeasure positive_spectrum(const BasePoint& y) const {
    const std::size_t w = y.source(g_);
    auto counts = counts_;
    auto gen = [counts, w](double R) {
      std::vector<SpectralEntry> out;
      const auto top = static_cast<std::size_t>(std::floor(R));
      out.reserve(top + 1);
      for (std::size_t n = 0; n <= top; ++n) {
        const BigInt& c = counts->ending_at(w, n);
        const long sh = detail::bigint_shift(c);
        out.push_back({static_cast<double>(n), detail::bigint_scaled(c, sh), static_cast<double>(sh) * std::log(2.0)});
      }
      return out;
    };
    return SpectralMeasure(gen, positive_growth(w));
  }

  /// Insertion of S_mu S_nu^* into the positive part of D_y.
  ObservableInsertion insertion(const BasePoint& y, const Monomial& word) const {
    auto base = positive_spectrum(y);
    if (!(word.mu == word.nu))
      return ObservableInsertion(std::move(base),
                                 [](const std::vector<SpectralEntry>& e) { return std::vector<double>(e.size(), 0.0); },
                                 word.label(g_));
    const std::size_t w = y.source(g_);
    const Path mu = word.mu;
    const std::size_t len = mu.length();
    const std::size_t rmu = mu.range(g_);
    auto counts = counts_;
    auto map = [counts, w, mu, len, rmu, y](const std::vector<SpectralEntry>& entries) {
      std::vector<double> out(entries.size(), 0.0);
      for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto n = static_cast<std::size_t>(entries[i].lambda);
        const long sh = std::lround(entries[i].log_scale / std::log(2.0));
        if (n >= len) {
          out[i] = detail::bigint_scaled(counts->to_target(w, n - len)[rmu], sh);
        } else {
          // x = mu_1..mu_n y starts with mu iff y starts with mu_{n+1}..mu_len
          out[i] = y.starts_with(mu.edges, n) ? detail::bigint_scaled(BigInt(1), sh) : 0.0;
        }
      }
      return out;
    };
    return ObservableInsertion(std::move(base), map, word.label(g_));
  }

  /// Tr(P_D S_mu S_nu^* e^{-tD}) on the positive part of D_y.
  HeatTrace dy_positive_heat_trace(const BasePoint& y, const std::optional<Monomial>& word, double t,
                                   const HeatTraceOptions& opt = {}) const {
    require_above_critical(t);
    if (!word) return heat_trace(positive_spectrum(y), t, opt);
    return heat_trace(insertion(y, *word), t, opt);
  }

  /// Tr(e^{-t|D_y|}) over all of V_y, graded by psi_0(n, kappa).
  FullHeatTrace dy_full_heat_trace(const BasePoint& y, double t, const HeatTraceOptions& opt = {}) const {
    const double logE = std::log(static_cast<double>(g_.num_edges()));
    if (g_.num_edges() < 2) fail(ErrorCode::InvalidInput, "full D_y trace needs at least two edges");
    if (!(t > logE)) fail(ErrorCode::BelowLogE, "t must exceed log|E| = " + std::to_string(logE));
    const SpectralMeasure m = full_spectrum(y, t);
    const HeatTrace h = heat_trace(m, t, opt);
    HeatTraceOptions pos = opt;
    pos.positive_only = true;
    pos.cutoff = h.cutoff;
    FullHeatTrace out;
    out.value = h.value;
    out.tail_bound = h.tail_bound;
    out.cutoff = h.cutoff;
    out.positive_part = heat_trace(m, t, pos).value;
    return out;
  }

  /// Entries of |D_y| on V_y: (n, kappa) contributes at psi_0 = n if kappa = 0, -|n|-kappa otherwise.
  /// The growth certificate is built for temperatures near t.
  SpectralMeasure full_spectrum(const BasePoint& y, double t) const {
    const double N = static_cast<double>(g_.num_edges());
    const double delta = std::max(1e-3, 0.5 * (t - std::log(N)));
    // sum_{L<=R} (2L+1) N^L <= (2R+1) N^R N/(N-1) and (2R+1) e^{-delta R} <= (2/delta) e^{delta/2-1}
    const GrowthBound gb{(2.0 / delta) * std::exp(0.5 * delta - 1.0) * N / (N - 1.0), std::log(N) + delta};
    auto counts = counts_;
    const DirectedGraph* g = &g_;
    auto gen = [counts, g, y](double R) {
      std::vector<SpectralEntry> out;
      const auto top = static_cast<long>(std::floor(R));
      auto src = [&](long k) { return g->edge(y.edge_at(static_cast<std::size_t>(k))).src; };
      for (long L = 0; L <= top; ++L)
        for (long n = -L / 2; n <= L; ++n) {
          const long k = L - std::labs(n);
          const long kmin = std::max<long>(0, -n);
          if (k < kmin) continue;
          BigInt c = counts->ending_at(src(k), static_cast<std::size_t>(n + k));
          if (k > kmin) c -= counts->ending_at(src(k - 1), static_cast<std::size_t>(n + k - 1));
          if (c == 0) continue;
          const long sh = detail::bigint_shift(c);
          const double lambda = k == 0 ? static_cast<double>(n) : -static_cast<double>(L);
          out.push_back({lambda, detail::bigint_scaled(c, sh), static_cast<double>(sh) * std::log(2.0)});
        }
      return out;
    };
    return SpectralMeasure(gen, gb);
  }

  /// Sum_m (M^m e_w)_v e^{-tm} for every vertex v, w = s(y), with the tail of the
  /// positive spectrum below tol. Memoized per (w, t).
  std::vector<long double> resolvent_column(std::size_t w, double t, double tol = 1e-13) const {
    require_above_critical(t);
    const auto key = std::make_tuple(w, t, tol);
    {
      std::lock_guard<std::mutex> lock(*cache_mu_);
      const auto it = cache_->find(key);
      if (it != cache_->end()) return it->second;
    }
    const double R = positive_growth(w).cutoff_for(t, tol);
    const auto top = static_cast<std::size_t>(std::floor(R));
    std::vector<long double> acc(g_.num_vertices(), 0.0L);
    for (std::size_t m = 0; m <= top; ++m) {
      const auto& col = counts_->to_target(w, m);
      for (std::size_t v = 0; v < acc.size(); ++v) {
        if (col[v] == 0) continue;
        const long sh = detail::bigint_shift(col[v]);
        acc[v] += static_cast<long double>(detail::bigint_scaled(col[v], sh)) *
                  std::exp(static_cast<long double>(sh) * std::log(2.0L) - static_cast<long double>(t) * m);
      }
    }
    std::lock_guard<std::mutex> lock(*cache_mu_);
    cache_->emplace(key, acc);
    return acc;
  }

  /// The Gibbs ratio Tr(P_D S_mu S_nu^* e^{-tD}) / Tr(P_D e^{-tD}) from memoized resolvent columns.
  double gibbs_ratio(const BasePoint& y, const Monomial& word, double t, double tol = 1e-13) const {
    if (!(word.mu == word.nu)) return 0.0;
    const std::size_t w = y.source(g_);
    const auto G = resolvent_column(w, t, tol);
    long double denom = 0.0L;
    for (auto x : G) denom += x;
    const std::size_t len = word.mu.length();
    long double num = std::exp(-static_cast<long double>(t) * len) * G[word.mu.range(g_)];
    for (std::size_t n = 0; n < len; ++n)
      if (y.starts_with(word.mu.edges, n)) num += std::exp(-static_cast<long double>(t) * n);
    return static_cast<double>(num / denom);
  }

  /// Default schedule: eps_j = 0.4 * 2^{-j}, j < 8, above log r with Richardson extrapolation.
  LimitSchedule default_schedule() const {
    return LimitSchedule::geometric(beta(), 0.4, 0.5, 8, ExtrapolationPolicy::Richardson, 0);
  }

  /// Gauge-KMS state value on S_mu S_nu^* as the extended limit of the Gibbs ratio at t -> log r.
  GraphKmsValue state(const BasePoint& y, const Monomial& word, const LimitSchedule& schedule,
                      const ExtrapolationOptions& opt = {1e-9, 1e-8, -1}) const {
    if (schedule.at_infinity || std::fabs(schedule.beta - beta()) > 1e-9)
      fail(ErrorCode::InvalidInput, "graph KMS schedule must approach log r");
    GraphKmsValue out;
    const std::size_t len = word.mu.length();
    const double r = spectral_radius();
    out.closed_form_prediction = 0.0;
    if (word.mu == word.nu) {
      out.closed_form_prediction = std::pow(r, -static_cast<double>(len)) *
                                   vertex_perron_.right(static_cast<Eigen::Index>(word.mu.range(g_)));
      if (len > 0)
        out.printed_formula = edge_perron_.right(static_cast<Eigen::Index>(word.mu.edges.back())) *
                              std::pow(r, -static_cast<double>(len));
    } else if (len > 0 && word.nu.length() > 0) {
      out.printed_formula = 0.0;
    }
    if (!(word.mu == word.nu)) {
      // the ratio vanishes identically at every t
      std::vector<double> zeros(schedule.size(), 0.0);
      out.limit = extended_limit(schedule, std::span<const double>(zeros), opt);
    } else {
      out.limit = extended_limit(schedule, [&](double t) { return gibbs_ratio(y, word, t); }, opt);
    }
    out.value = out.limit.limit;
    out.error_estimate = out.limit.error_estimate;
    out.converged = out.limit.converged;
    out.agreement = out.closed_form_prediction != 0.0 ? out.value / out.closed_form_prediction
                                                      : (out.value == 0.0 ? 1.0 : std::nan(""));
    if (std::isfinite(out.printed_formula) && out.printed_formula != 0.0)
      out.proportionality = out.value / out.printed_formula;
    return out;
  }

 private:
  void require_above_critical(double t) const {
    if (!(t > beta())) fail(ErrorCode::BelowCritical, "t must exceed log r = " + std::to_string(beta()));
  }

  GrowthBound positive_growth(std::size_t w) const {
    const double r = vertex_perron_.spectral_radius;
    const auto& u = vertex_perron_.right;
    // (M^n e_w)_v <= r^n u_v / u_w, summed over v and over n <= R
    const double K = 1.001 * u.sum() / u(static_cast<Eigen::Index>(w));
    if (r > 1.0 + 1e-9) return {K * r / (r - 1.0), std::log(r)};
    const double delta = 0.05;
    return {K / (delta * std::exp(1.0 - delta)) + K, delta};
  }

  DirectedGraph g_;
  PerronData edge_perron_, vertex_perron_;
  std::shared_ptr<PathCounts> counts_;
  std::shared_ptr<std::mutex> cache_mu_ = std::make_shared<std::mutex>();
  std::shared_ptr<std::map<std::tuple<std::size_t, double, double>, std::vector<long double>>> cache_ =
      std::make_shared<std::map<std::tuple<std::size_t, double, double>, std::vector<long double>>>();
};

}  // namespace kmsheat
