#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "symforce/name.hpp"

namespace symforce {

using formula_id = std::uint32_t;

enum class op : std::uint8_t { eq, in, neg, conj, disj, implies, exists_in, forall_in, exists_u, forall_u };

struct term {
  bool is_var = false;
  std::uint32_t v = 0;  // name id, or variable id
  static term name(name_id n) { return {false, n}; }
  static term var(std::uint32_t x) { return {true, x}; }
  bool operator==(const term& o) const { return is_var == o.is_var && v == o.v; }
};

struct formula_node {
  op o = op::eq;
  term a, b;                       // eq / in operands; a = bounding term of bounded quantifiers
  formula_id f1 = 0, f2 = 0;       // subformulas
  std::uint32_t var = 0;           // bound variable
  std::uint32_t universe = 0;      // universe tag of unbounded quantifiers
  bool operator==(const formula_node& x) const {
    return o == x.o && a == x.a && b == x.b && f1 == x.f1 && f2 == x.f2 && var == x.var && universe == x.universe;
  }
};

struct formula_node_hash {
  std::size_t operator()(const formula_node& n) const {
    std::size_t h = static_cast<std::size_t>(n.o);
    for (std::size_t v : {std::size_t(n.a.is_var), std::size_t(n.a.v), std::size_t(n.b.is_var), std::size_t(n.b.v),
                          std::size_t(n.f1), std::size_t(n.f2), std::size_t(n.var), std::size_t(n.universe)})
      hash_combine(h, v);
    return h;
  }
};

inline interner<formula_node, formula_node_hash>& formula_table() {
  static interner<formula_node, formula_node_hash> t;
  return t;
}

inline const formula_node& fnode(formula_id f) { return formula_table().get(f); }

// interned symbol tables for variable names and universe tags
class symbol_table {
 public:
  std::uint32_t id(const std::string& s) {
    std::lock_guard lock(mu_);
    auto it = ids_.find(s);
    if (it != ids_.end()) return it->second;
    names_.push_back(s);
    return ids_[s] = static_cast<std::uint32_t>(names_.size() - 1);
  }
  std::string str(std::uint32_t i) {
    std::lock_guard lock(mu_);
    return names_.at(i);
  }

 private:
  std::mutex mu_;
  std::map<std::string, std::uint32_t> ids_;
  std::vector<std::string> names_;
};

inline symbol_table& variables() {
  static symbol_table t;
  return t;
}
inline symbol_table& universe_tags() {
  static symbol_table t;
  return t;
}

inline formula_id mk(formula_node n) { return formula_table().intern(n); }

inline formula_id f_eq(term a, term b) { return mk({op::eq, a, b}); }
inline formula_id f_in(term a, term b) { return mk({op::in, a, b}); }
inline formula_id f_eq(name_id a, name_id b) { return f_eq(term::name(a), term::name(b)); }
inline formula_id f_in(name_id a, name_id b) { return f_in(term::name(a), term::name(b)); }
inline formula_id f_not(formula_id f) { return mk({op::neg, {}, {}, f}); }
inline formula_id f_and(formula_id f, formula_id g) { return mk({op::conj, {}, {}, f, g}); }
inline formula_id f_or(formula_id f, formula_id g) { return mk({op::disj, {}, {}, f, g}); }
inline formula_id f_implies(formula_id f, formula_id g) { return mk({op::implies, {}, {}, f, g}); }
inline formula_id f_exists_in(std::uint32_t var, term bound, formula_id body) {
  return mk({op::exists_in, bound, {}, body, 0, var});
}
inline formula_id f_forall_in(std::uint32_t var, term bound, formula_id body) {
  return mk({op::forall_in, bound, {}, body, 0, var});
}
inline formula_id f_exists_u(std::uint32_t var, std::uint32_t tag, formula_id body) {
  return mk({op::exists_u, {}, {}, body, 0, var, tag});
}
inline formula_id f_forall_u(std::uint32_t var, std::uint32_t tag, formula_id body) {
  return mk({op::forall_u, {}, {}, body, 0, var, tag});
}

inline bool is_quantifier(op o) { return o == op::exists_in || o == op::forall_in || o == op::exists_u || o == op::forall_u; }
inline bool is_binary(op o) { return o == op::conj || o == op::disj || o == op::implies; }

// replace free occurrences of var by the name n
inline formula_id substitute(formula_id f, std::uint32_t var, name_id n) {
  static std::mutex mu;
  static std::map<std::tuple<formula_id, std::uint32_t, name_id>, formula_id> memo;
  {
    std::lock_guard lock(mu);
    auto it = memo.find({f, var, n});
    if (it != memo.end()) return it->second;
  }
  formula_node x = fnode(f);
  auto sub = [&](term t) { return t.is_var && t.v == var ? term::name(n) : t; };
  switch (x.o) {
    case op::eq:
    case op::in:
      x.a = sub(x.a);
      x.b = sub(x.b);
      break;
    case op::neg:
      x.f1 = substitute(x.f1, var, n);
      break;
    case op::conj:
    case op::disj:
    case op::implies:
      x.f1 = substitute(x.f1, var, n);
      x.f2 = substitute(x.f2, var, n);
      break;
    default:
      x.a = sub(x.a);
      if (x.var != var) x.f1 = substitute(x.f1, var, n);
      break;
  }
  formula_id out = mk(x);
  std::lock_guard lock(mu);
  memo[{f, var, n}] = out;
  return out;
}

inline void free_vars(formula_id f, std::set<std::uint32_t>& out, std::set<std::uint32_t> bound = {}) {
  const formula_node& x = fnode(f);
  auto t = [&](term a) {
    if (a.is_var && !bound.count(a.v)) out.insert(a.v);
  };
  switch (x.o) {
    case op::eq:
    case op::in:
      t(x.a);
      t(x.b);
      break;
    case op::neg:
      free_vars(x.f1, out, bound);
      break;
    case op::conj:
    case op::disj:
    case op::implies:
      free_vars(x.f1, out, bound);
      free_vars(x.f2, out, bound);
      break;
    default:
      if (x.o == op::exists_in || x.o == op::forall_in) t(x.a);
      bound.insert(x.var);
      free_vars(x.f1, out, bound);
      break;
  }
}

inline bool is_closed(formula_id f) {
  std::set<std::uint32_t> fv;
  free_vars(f, fv);
  return fv.empty();
}

inline void names_in(formula_id f, std::set<name_id>& out) {
  const formula_node& x = fnode(f);
  auto t = [&](term a) {
    if (!a.is_var) out.insert(a.v);
  };
  switch (x.o) {
    case op::eq:
    case op::in:
      t(x.a);
      t(x.b);
      break;
    case op::neg:
      names_in(x.f1, out);
      break;
    case op::conj:
    case op::disj:
    case op::implies:
      names_in(x.f1, out);
      names_in(x.f2, out);
      break;
    default:
      if (x.o == op::exists_in || x.o == op::forall_in) t(x.a);
      names_in(x.f1, out);
      break;
  }
}

// apply a name transformation to every name leaf (automorphism action on formulas)
template <class F>
formula_id map_names(formula_id f, F&& fn) {
  formula_node x = fnode(f);
  auto t = [&](term a) { return a.is_var ? a : term::name(fn(a.v)); };
  switch (x.o) {
    case op::eq:
    case op::in:
      x.a = t(x.a);
      x.b = t(x.b);
      break;
    case op::neg:
      x.f1 = map_names(x.f1, fn);
      break;
    case op::conj:
    case op::disj:
    case op::implies:
      x.f1 = map_names(x.f1, fn);
      x.f2 = map_names(x.f2, fn);
      break;
    default:
      x.a = t(x.a);
      x.f1 = map_names(x.f1, fn);
      break;
  }
  return mk(x);
}

inline std::size_t formula_size(formula_id f) {
  const formula_node& x = fnode(f);
  if (x.o == op::eq || x.o == op::in) return 1;
  if (x.o == op::neg || is_quantifier(x.o)) return 1 + formula_size(x.f1);
  return 1 + formula_size(x.f1) + formula_size(x.f2);
}

// ---- JSON AST -----------------------------------------------------------

inline json term_to_json(const poset& P, term t) {
  if (t.is_var) return {{"var", variables().str(t.v)}};
  return name_to_json(P, t.v);
}

inline json formula_to_json(const poset& P, formula_id f) {
  const formula_node& x = fnode(f);
  switch (x.o) {
    case op::eq:
      return {{"op", "eq"}, {"lhs", term_to_json(P, x.a)}, {"rhs", term_to_json(P, x.b)}};
    case op::in:
      return {{"op", "in"}, {"lhs", term_to_json(P, x.a)}, {"rhs", term_to_json(P, x.b)}};
    case op::neg:
      return {{"op", "not"}, {"arg", formula_to_json(P, x.f1)}};
    case op::conj:
      return {{"op", "and"}, {"lhs", formula_to_json(P, x.f1)}, {"rhs", formula_to_json(P, x.f2)}};
    case op::disj:
      return {{"op", "or"}, {"lhs", formula_to_json(P, x.f1)}, {"rhs", formula_to_json(P, x.f2)}};
    case op::implies:
      return {{"op", "implies"}, {"lhs", formula_to_json(P, x.f1)}, {"rhs", formula_to_json(P, x.f2)}};
    case op::exists_in:
    case op::forall_in:
      return {{"op", x.o == op::exists_in ? "exists_in" : "forall_in"},
              {"var", variables().str(x.var)},
              {"bound", term_to_json(P, x.a)},
              {"body", formula_to_json(P, x.f1)}};
    case op::exists_u:
    case op::forall_u:
      return {{"op", x.o == op::exists_u ? "exists" : "forall"},
              {"var", variables().str(x.var)},
              {"universe", universe_tags().str(x.universe)},
              {"body", formula_to_json(P, x.f1)}};
  }
  return {};
}

inline term term_from_json(const poset& P, const json& j, const name_lookup& lookup) {
  if (j.is_object() && j.contains("var")) return term::var(variables().id(j["var"].get<std::string>()));
  return term::name(name_from_json(P, j, lookup));
}

inline formula_id formula_from_json(const poset& P, const json& j, const name_lookup& lookup = {}) {
  if (!j.is_object() || !j.contains("op") || !j["op"].is_string()) throw input_error("formula node needs an op: " + j.dump());
  const std::string o = j["op"].get<std::string>();
  auto need = [&](const char* k) -> const json& {
    if (!j.contains(k)) throw input_error("formula node " + o + " lacks field " + k);
    return j[k];
  };
  auto sub = [&](const char* k) { return formula_from_json(P, need(k), lookup); };
  auto tm = [&](const char* k) { return term_from_json(P, need(k), lookup); };
  if (o == "eq") return f_eq(tm("lhs"), tm("rhs"));
  if (o == "in") return f_in(tm("lhs"), tm("rhs"));
  if (o == "neq") return f_not(f_eq(tm("lhs"), tm("rhs")));
  if (o == "notin") return f_not(f_in(tm("lhs"), tm("rhs")));
  if (o == "not") return f_not(sub("arg"));
  if (o == "and") return f_and(sub("lhs"), sub("rhs"));
  if (o == "or") return f_or(sub("lhs"), sub("rhs"));
  if (o == "implies") return f_implies(sub("lhs"), sub("rhs"));
  if (o == "exists_in" || o == "forall_in") {
    auto v = variables().id(need("var").get<std::string>());
    auto b = tm("bound");
    auto body = sub("body");
    return o == "exists_in" ? f_exists_in(v, b, body) : f_forall_in(v, b, body);
  }
  if (o == "exists" || o == "forall") {
    auto v = variables().id(need("var").get<std::string>());
    auto u = universe_tags().id(need("universe").get<std::string>());
    auto body = sub("body");
    return o == "exists" ? f_exists_u(v, u, body) : f_forall_u(v, u, body);
  }
  throw input_error("unknown formula op: " + o);
}

}  // namespace symforce
