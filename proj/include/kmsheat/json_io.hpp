#pragma once

// Strict JSON readers for model payloads. Every unknown key, wrong type or
// dangling reference raises SchemaError.

#include <json.hpp>

#include <algorithm>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include "kmsheat/asymptotics.hpp"
#include "kmsheat/correspondence.hpp"
#include "kmsheat/errors.hpp"
#include "kmsheat/graph.hpp"
#include "kmsheat/group_boundary.hpp"
#include "kmsheat/torus.hpp"

namespace kmsheat::json_io {

using nlohmann::json;

[[noreturn]] inline void schema(const std::string& where, const std::string& what) {
  fail(ErrorCode::SchemaError, where + ": " + what);
}

inline const json& object(const json& j, const std::string& where) {
  if (!j.is_object()) schema(where, "expected an object");
  return j;
}

inline void only_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  object(j, where);
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) schema(where, "unknown field '" + k + "'");
  }
}

inline void required(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) schema(where, std::string("missing field '") + key + "'");
}

inline double number(const json& j, const char* key, const std::string& where, std::optional<double> def = {}) {
  if (!j.contains(key)) {
    if (def) return *def;
    schema(where, std::string("missing field '") + key + "'");
  }
  if (!j.at(key).is_number()) schema(where, std::string("field '") + key + "' must be a number");
  return j.at(key).get<double>();
}

inline long long integer(const json& j, const char* key, const std::string& where, std::optional<long long> def = {}) {
  if (!j.contains(key)) {
    if (def) return *def;
    schema(where, std::string("missing field '") + key + "'");
  }
  if (!j.at(key).is_number_integer()) schema(where, std::string("field '") + key + "' must be an integer");
  return j.at(key).get<long long>();
}

inline bool boolean(const json& j, const char* key, const std::string& where, bool def) {
  if (!j.contains(key)) return def;
  if (!j.at(key).is_boolean()) schema(where, std::string("field '") + key + "' must be a boolean");
  return j.at(key).get<bool>();
}

inline std::string string(const json& j, const char* key, const std::string& where,
                          std::optional<std::string> def = {}) {
  if (!j.contains(key)) {
    if (def) return *def;
    schema(where, std::string("missing field '") + key + "'");
  }
  if (!j.at(key).is_string()) schema(where, std::string("field '") + key + "' must be a string");
  return j.at(key).get<std::string>();
}

inline std::vector<std::string> strings(const json& j, const std::string& where) {
  if (!j.is_array()) schema(where, "expected an array of strings");
  std::vector<std::string> out;
  for (const auto& x : j) {
    if (!x.is_string()) schema(where, "expected an array of strings");
    out.push_back(x.get<std::string>());
  }
  return out;
}

inline std::vector<double> numbers(const json& j, const std::string& where) {
  if (!j.is_array()) schema(where, "expected an array of numbers");
  std::vector<double> out;
  for (const auto& x : j) {
    if (!x.is_number()) schema(where, "expected an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

/// {"preset": "cuntz", "n": N} | {"preset": "fibonacci"} | {"vertices": [...], "edges": [{"id", "src", "dst"}]}
inline DirectedGraph graph(const json& j, const std::string& where) {
  object(j, where);
  if (j.contains("preset")) {
    only_keys(j, {"preset", "n"}, where);
    const auto p = string(j, "preset", where);
    if (p == "cuntz") return DirectedGraph::cuntz(static_cast<std::size_t>(std::max(1LL, integer(j, "n", where))));
    if (p == "fibonacci") return DirectedGraph::fibonacci();
    schema(where, "unknown graph preset '" + p + "'");
  }
  only_keys(j, {"vertices", "edges"}, where);
  required(j, "vertices", where);
  required(j, "edges", where);
  const auto vertices = strings(j.at("vertices"), where + ".vertices");
  if (!j.at("edges").is_array()) schema(where + ".edges", "expected an array");
  std::vector<DirectedGraph::EdgeSpec> edges;
  std::size_t i = 0;
  for (const auto& e : j.at("edges")) {
    const std::string w = where + ".edges[" + std::to_string(i++) + "]";
    only_keys(e, {"id", "src", "dst"}, w);
    DirectedGraph::EdgeSpec s{string(e, "id", w), string(e, "src", w), string(e, "dst", w)};
    for (const auto& v : {s.src, s.dst})
      if (std::find(vertices.begin(), vertices.end(), v) == vertices.end())
        schema(w, "edge '" + s.id + "' references unknown vertex '" + v + "'");
    edges.push_back(std::move(s));
  }
  return DirectedGraph(vertices, edges);
}

/// Presets cuntz(n), doubling(n), rotation(n), two_vertex, reducible, or {"graph": ...}.
inline GraphCorrespondence correspondence(const json& j, const std::string& where) {
  object(j, where);
  if (j.contains("graph")) {
    only_keys(j, {"graph"}, where);
    return GraphCorrespondence(graph(j.at("graph"), where + ".graph"));
  }
  only_keys(j, {"preset", "n"}, where);
  const auto p = string(j, "preset", where);
  const auto n = static_cast<std::size_t>(std::max(1LL, integer(j, "n", where, 8)));
  if (p == "cuntz") return GraphCorrespondence::cuntz(n);
  if (p == "doubling") return GraphCorrespondence::doubling(n);
  if (p == "rotation") return GraphCorrespondence::rotation(n);
  if (p == "two_vertex") return GraphCorrespondence::two_vertex();
  if (p == "reducible") return GraphCorrespondence::reducible();
  schema(where, "unknown correspondence preset '" + p + "'");
}

inline Path path(const DirectedGraph& g, const json& ids, const std::optional<std::string>& vertex,
                 const std::string& where) {
  const auto v = strings(ids, where);
  for (const auto& id : v) {
    bool found = false;
    for (const auto& e : g.edges()) found = found || e.id == id;
    if (!found) schema(where, "unknown edge '" + id + "'");
  }
  if (v.empty()) {
    if (!vertex) schema(where, "an empty path needs a 'vertex'");
    const auto& vs = g.vertices();
    if (std::find(vs.begin(), vs.end(), *vertex) == vs.end()) schema(where, "unknown vertex '" + *vertex + "'");
    return Path::at_vertex(g.vertex_index(*vertex));
  }
  try {
    return Path::of_ids(g, v);
  } catch (const Error& e) {
    schema(where, e.what());
  }
}

/// {"mu": [edge ids], "nu": [edge ids], "vertex": id for empty paths}; "nu" defaults to "mu".
inline Monomial monomial(const DirectedGraph& g, const json& j, const std::string& where) {
  only_keys(j, {"mu", "nu", "vertex"}, where);
  required(j, "mu", where);
  std::optional<std::string> vertex;
  if (j.contains("vertex")) vertex = string(j, "vertex", where);
  const Path mu = path(g, j.at("mu"), vertex, where + ".mu");
  const Path nu = j.contains("nu") ? path(g, j.at("nu"), vertex, where + ".nu") : mu;
  if (mu.range(g) != nu.range(g)) schema(where, "S_mu S_nu^* needs r(mu) = r(nu)");
  return {mu, nu};
}

inline json monomial_to_json(const DirectedGraph& g, const Monomial& m) {
  auto ids = [&](const Path& p) {
    json a = json::array();
    for (auto e : p.edges) a.push_back(g.edge(e).id);
    return a;
  };
  json out{{"mu", ids(m.mu)}, {"nu", ids(m.nu)}};
  if (m.mu.edges.empty() || m.nu.edges.empty()) out["vertex"] = g.vertex(m.mu.vertex);
  return out;
}

/// {"coeffs": [{"k": [...], "re": x, "im": y}]}
inline TrigPolynomial trig_polynomial(const json& j, int d, const std::string& where) {
  only_keys(j, {"coeffs"}, where);
  required(j, "coeffs", where);
  if (!j.at("coeffs").is_array()) schema(where + ".coeffs", "expected an array");
  TrigPolynomial p(d);
  std::size_t i = 0;
  for (const auto& c : j.at("coeffs")) {
    const std::string w = where + ".coeffs[" + std::to_string(i++) + "]";
    only_keys(c, {"k", "re", "im"}, w);
    required(c, "k", w);
    if (!c.at("k").is_array() || static_cast<int>(c.at("k").size()) != d)
      schema(w, "'k' must be an integer array of length " + std::to_string(d));
    LatticePoint k;
    for (const auto& x : c.at("k")) {
      if (!x.is_number_integer()) schema(w, "'k' must contain integers");
      k.push_back(x.get<int>());
    }
    p.set(k, p.at(k) + Complex(number(c, "re", w, 0.0), number(c, "im", w, 0.0)));
  }
  return p;
}

inline ExtrapolationPolicy policy(const std::string& s, const std::string& where) {
  try {
    return policy_from_string(s);
  } catch (const Error&) {
    schema(where, "unknown extrapolation policy '" + s + "'");
  }
}

/// {"eps0", "ratio", "points", "policy", "order"} anchored at beta; missing fields take the defaults given.
inline LimitSchedule schedule(const json& j, double beta, const LimitSchedule& def, const std::string& where) {
  if (j.is_null()) return def;
  only_keys(j, {"eps0", "ratio", "points", "policy", "order"}, where);
  const double eps0 = number(j, "eps0", where, def.offsets.front());
  const double ratio = number(j, "ratio", where, def.offsets[1] / def.offsets[0]);
  const auto n = integer(j, "points", where, static_cast<long long>(def.offsets.size()));
  if (n < 4 || n > 64) schema(where, "'points' must lie in [4, 64]");
  const auto pol = j.contains("policy") ? policy(string(j, "policy", where), where) : def.policy;
  const auto order = static_cast<int>(integer(j, "order", where, def.order));
  if (!(eps0 > 0.0) || !(ratio > 0.0 && ratio < 1.0)) schema(where, "need eps0 > 0 and 0 < ratio < 1");
  return LimitSchedule::geometric(beta, eps0, ratio, static_cast<std::size_t>(n), pol, order);
}

/// {"kind": "inverse_linear" | "log_over_linear" | "inverse_log_power", "scale": c, "power": s}
inline PsiFunction psi(const json& j, const std::string& where) {
  only_keys(j, {"kind", "scale", "power"}, where);
  const auto kind = string(j, "kind", where);
  const double scale = number(j, "scale", where, 1.0);
  if (kind == "inverse_linear") return PsiFunction::inverse_linear(scale);
  if (kind == "log_over_linear") return PsiFunction::log_over_linear(scale);
  if (kind == "inverse_log_power") return PsiFunction::inverse_log_power(number(j, "power", where, 1.0), scale);
  schema(where, "unknown psi kind '" + kind + "'");
}

inline Word word(const FreeGroup& G, const json& j, const std::string& where) {
  if (!j.is_string()) schema(where, "expected a word string");
  const auto s = j.get<std::string>();
  if (s == "e" || s.empty()) return {};
  try {
    return G.parse(s);
  } catch (const Error& e) {
    schema(where, e.what());
  }
}

}  // namespace kmsheat::json_io
