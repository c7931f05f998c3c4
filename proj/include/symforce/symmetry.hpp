#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "symforce/forcing.hpp"
#include "symforce/name.hpp"
#include "symforce/permutation.hpp"
#include "symforce/poset.hpp"

namespace symforce {

struct automorphism {
  enum class kind { base_perm, iter_seq };
  kind k = kind::base_perm;
  perm base;                           // base_perm: coordinate permutation
  std::vector<std::uint32_t> stages;   // iter_seq: stage entries (see iteration.hpp)
  std::vector<cond_id> cond_map;       // the action on conditions
  std::string label;
};

struct filter_generator {
  std::vector<coord> e;                // fix(e) data; for iteration generators the constant sections
  std::vector<std::uint32_t> stages;   // iteration generators: stage entries
  bitset members;                      // over the system's group elements
  std::string label;
};

inline std::vector<std::uint32_t> section(const std::vector<coord>& e, std::uint32_t stage) {
  std::vector<std::uint32_t> out;
  for (auto [s, c] : e)
    if (s == stage) out.push_back(c);
  return out;
}

inline json coords_to_json(const std::vector<coord>& e, bool flat) {
  json arr = json::array();
  for (auto [s, c] : e) {
    if (flat) arr.push_back(c);
    else arr.push_back(json::array({s, c}));
  }
  return arr;
}

struct vec_hash {
  std::size_t operator()(const std::vector<cond_id>& v) const {
    std::size_t h = v.size();
    for (auto x : v) hash_combine(h, x);
    return h;
  }
};

// (poset, group, filter generators). The group is held as its full finite
// element list with element 0 the identity; the listed generators index into it.
class symmetric_system {
 public:
  poset_ptr P;
  truncation_config cfg;
  std::vector<automorphism> group;
  std::vector<std::uint32_t> generators;
  std::vector<filter_generator> filters;
  std::uint32_t width = 0;       // copies of a base product system; 0 when coordinates are staged
  std::uint32_t stage_count = 1; // stages of an iteration system
  coord_fn coords;               // coordinates mentioned by a condition
  std::function<bool(std::uint32_t, coord)> fixes_coord;  // does group element g fix coordinate c pointwise
  std::shared_ptr<const void> iteration;  // set by the iteration module

  void index_group() {
    by_map_.clear();
    for (std::uint32_t g = 0; g < group.size(); ++g) by_map_.emplace(group[g].cond_map, g);
    act_cache_.assign(group.size(), {});
  }

  std::optional<std::uint32_t> find(const std::vector<cond_id>& cmap) const {
    auto it = by_map_.find(cmap);
    if (it == by_map_.end()) return std::nullopt;
    return it->second;
  }

  // a o b on conditions; nullopt if the product is not in the element list
  std::optional<std::uint32_t> compose(std::uint32_t a, std::uint32_t b) const {
    return find(compose_maps(group[a].cond_map, group[b].cond_map));
  }
  std::optional<std::uint32_t> inverse(std::uint32_t a) const { return find(invert_map(group[a].cond_map)); }

  static std::vector<cond_id> compose_maps(const std::vector<cond_id>& a, const std::vector<cond_id>& b) {
    std::vector<cond_id> m(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) m[i] = a[b[i]];
    return m;
  }
  static std::vector<cond_id> invert_map(const std::vector<cond_id>& a) {
    std::vector<cond_id> m(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) m[a[i]] = static_cast<cond_id>(i);
    return m;
  }

  // pi(x) = {(pi(p), pi(y)) : (p, y) in x}
  name_id act(std::uint32_t g, name_id n) const {
    if (poset_of(n) != P->id()) throw input_error("name is over a different poset than the system");
    if (g == 0) return n;
    return act_rec(g, n);
  }

  bitset fix_members(const std::vector<coord>& e) const {
    bitset m(group.size());
    for (std::uint32_t g = 0; g < group.size(); ++g) {
      bool ok = true;
      for (auto c : e) ok = ok && fixes_coord(g, c);
      if (ok) m.set(g);
    }
    return m;
  }

  std::optional<std::uint32_t> element_with_base(const perm& p) const {
    for (std::uint32_t g = 0; g < group.size(); ++g)
      if (group[g].k == automorphism::kind::base_perm && group[g].base == p) return g;
    return std::nullopt;
  }

 private:
  name_id act_rec(std::uint32_t g, name_id n) const {
    {
      std::lock_guard lock(mu_);
      auto& c = act_cache_[g];
      if (auto it = c.find(n); it != c.end()) return it->second;
    }
    std::vector<entry> es;
    es.reserve(entries(n).size());
    const auto& m = group[g].cond_map;
    for (auto [p, y] : entries(n)) es.emplace_back(m[p], act_rec(g, y));
    name_id out = make_name(P->id(), std::move(es));
    std::lock_guard lock(mu_);
    act_cache_[g].emplace(n, out);
    return out;
  }

  std::unordered_map<std::vector<cond_id>, std::uint32_t, vec_hash> by_map_;
  mutable std::vector<std::unordered_map<name_id, name_id>> act_cache_;
  mutable std::mutex mu_;
};

using system_ptr = std::shared_ptr<const symmetric_system>;

// ---- base product systems ---------------------------------------------------

// coordinate action on a product poset: pi(q)(pi(n)) = q(n)
inline std::vector<cond_id> product_action(const poset& P, const perm& pi) {
  std::vector<cond_id> m(P.size());
  for (cond_id q = 0; q < P.size(); ++q) {
    const condition& c = P.at(q);
    condition d{c.k, std::vector<std::int32_t>(c.cells.size(), -1)};
    for (std::uint32_t k = 0; k < c.cells.size(); ++k) d.cells[pi(k)] = c.cells[k];
    auto idx = P.find(d);
    if (!idx) throw input_error("permutation does not act on the product poset");
    m[q] = *idx;
  }
  return m;
}

inline automorphism base_automorphism(const poset& P, const perm& pi) {
  automorphism a;
  a.k = automorphism::kind::base_perm;
  a.base = pi;
  a.cond_map = product_action(P, pi);
  a.label = pi.cycles();
  return a;
}

inline std::vector<std::vector<coord>> all_subsets(std::uint32_t width, std::uint32_t stage = 0) {
  std::vector<std::vector<coord>> out;
  for (std::uint32_t mask = 0; mask < (1u << width); ++mask) {
    std::vector<coord> e;
    for (std::uint32_t k = 0; k < width; ++k)
      if (mask >> k & 1) e.push_back({stage, k});
    out.push_back(e);
  }
  std::stable_sort(out.begin(), out.end(), [](auto& a, auto& b) { return a.size() < b.size(); });
  return out;
}

// A product-coordinate system with the given group elements (identity first)
// and fix(e) generators.
inline std::shared_ptr<symmetric_system> make_base_system(poset_ptr P, std::uint32_t width,
                                                          const std::vector<perm>& elements,
                                                          const std::vector<std::uint32_t>& generators,
                                                          const std::vector<std::vector<coord>>& fix_sets,
                                                          truncation_config cfg) {
  auto S = std::make_shared<symmetric_system>();
  S->P = P;
  S->cfg = cfg;
  S->width = width;
  for (const perm& p : elements) {
    if (p.size() != width) throw input_error("permutation width mismatch");
    S->group.push_back(base_automorphism(*P, p));
  }
  if (S->group.empty() || !S->group[0].base.is_identity()) throw input_error("group list must start with the identity");
  S->generators = generators;
  const poset* raw = P.get();
  S->coords = product_coords(*raw);
  auto* self = S.get();
  S->fixes_coord = [self](std::uint32_t g, coord c) { return c.first == 0 && self->group[g].base(c.second) == c.second; };
  S->index_group();
  for (const auto& e : fix_sets) {
    for (auto [s, c] : e)
      if (s != 0 || c >= width) throw input_error("fix(e) index outside the product width");
    filter_generator f;
    f.e = e;
    f.members = S->fix_members(e);
    f.label = "fix" + coords_to_json(e, true).dump();
    S->filters.push_back(std::move(f));
  }
  return S;
}

// T(R): finite-support product of W copies, S_W acting on coordinates,
// generators the adjacent transpositions, filter generated by fix(e) for all e.
inline std::shared_ptr<symmetric_system> build_T(const poset_ptr& R, std::uint32_t width, truncation_config cfg = {}) {
  cfg.product_width = width;
  auto P = build_product(R, width);
  auto elements = all_perms(width);
  std::vector<std::uint32_t> gens;
  for (std::uint32_t i = 0; i + 1 < width; ++i) {
    perm t = perm::transposition(width, i, i + 1);
    gens.push_back(static_cast<std::uint32_t>(std::find(elements.begin(), elements.end(), t) - elements.begin()));
  }
  return make_base_system(P, width, elements, gens, all_subsets(width), cfg);
}

// a poset with only the identity and the single filter generator {id}
inline std::shared_ptr<symmetric_system> make_plain_system(poset_ptr P, truncation_config cfg = {}) {
  auto S = std::make_shared<symmetric_system>();
  S->P = P;
  S->cfg = cfg;
  automorphism id;
  id.cond_map.resize(P->size());
  for (cond_id i = 0; i < P->size(); ++i) id.cond_map[i] = i;
  id.label = "()";
  S->group.push_back(id);
  S->coords = [](cond_id, std::set<coord>&) {};
  S->fixes_coord = [](std::uint32_t, coord) { return true; };
  S->index_group();
  filter_generator f;
  f.members = bitset(1).set();
  f.label = "fix[]";
  S->filters.push_back(f);
  return S;
}

// ---- conjugation --------------------------------------------------------

// pi fix(e) pi^-1 = fix(pi''e)
inline std::vector<coord> conjugate_fix(const perm& pi, const std::vector<coord>& e) {
  std::vector<coord> out;
  for (auto [s, c] : e) out.push_back({s, pi(c)});
  std::sort(out.begin(), out.end());
  return out;
}

// {g : pi^-1 g pi in H}, by direct group multiplication
inline bitset conjugate_members(const symmetric_system& S, std::uint32_t pi, const bitset& H) {
  bitset out(S.group.size());
  auto inv = S.inverse(pi);
  if (!inv) throw input_error("group element without inverse in the element list");
  for (std::uint32_t g = 0; g < S.group.size(); ++g) {
    auto a = S.compose(g, pi);
    if (!a) continue;
    auto b = S.compose(*inv, *a);
    if (b && H[*b]) out.set(g);
  }
  return out;
}

// ---- sym and HS ---------------------------------------------------------

enum class group_semantics {
  truncated,  // the finite group S_W
  finitary    // S_W standing in for the finitary permutations of omega: a fresh index always exists
};

struct sym_result {
  bool value = false;
  bool exhaustive_fallback = false;  // no fresh index: decided over the full finite group
};

// transpositions (i j), i in coords\e, j in (coords u {f})\e, f fresh
inline std::optional<std::vector<std::pair<std::uint32_t, std::uint32_t>>> reduced_transpositions(
    const std::set<std::uint32_t>& used, const std::set<std::uint32_t>& e, std::uint32_t width,
    std::optional<std::uint32_t>& fresh) {
  fresh.reset();
  for (std::uint32_t f = 0; f < width; ++f)
    if (!used.count(f) && !e.count(f)) {
      fresh = f;
      break;
    }
  if (!fresh) return std::nullopt;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  std::set<std::uint32_t> targets = used;
  targets.insert(*fresh);
  for (auto i : used) {
    if (e.count(i)) continue;
    for (auto j : targets)
      if (!e.count(j) && j != i) out.emplace_back(std::min(i, j), std::max(i, j));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// every g in H fixes n
inline bool members_fix(const symmetric_system& S, const bitset& H, name_id n) {
  for (std::size_t g = H.find_first(); g != bitset::npos; g = H.find_next(g))
    if (S.act(static_cast<std::uint32_t>(g), n) != n) return false;
  return true;
}

inline bool fix_leq_sym_exhaustive(const symmetric_system& S, const std::vector<coord>& e, name_id n) {
  return members_fix(S, S.fix_members(e), n);
}

// fix(e) <= sym(n)
inline sym_result fix_leq_sym(const symmetric_system& S, const std::vector<coord>& e, name_id n,
                              group_semantics sem = group_semantics::truncated) {
  if (S.width == 0) return {fix_leq_sym_exhaustive(S, e, n), true};
  std::set<std::uint32_t> used, es;
  for (auto [s, c] : coordinates_used(n, S.coords)) used.insert(c);
  for (auto [s, c] : e) es.insert(c);
  if (sem == group_semantics::finitary) {
    // with a virtual fresh index f, (i f) moves n for every i in coords(n)
    for (auto i : used)
      if (!es.count(i)) return {false, false};
    return {true, false};
  }
  std::optional<std::uint32_t> fresh;
  auto ts = reduced_transpositions(used, es, S.width, fresh);
  if (!ts) return {fix_leq_sym_exhaustive(S, e, n), true};
  for (auto [i, j] : *ts) {
    auto g = S.element_with_base(perm::transposition(S.width, i, j));
    if (!g) throw input_error("transposition missing from the group element list");
    if (S.act(*g, n) != n) return {false, false};
  }
  return {true, false};
}

inline bool generator_leq_sym(const symmetric_system& S, const filter_generator& H, name_id n) {
  if (S.width > 0 && H.stages.empty()) return fix_leq_sym(S, H.e, n).value;
  return members_fix(S, H.members, n);
}

// some listed generator fixes the node, recursively at every child
class hs_checker {
 public:
  explicit hs_checker(const symmetric_system& S) : S_(S) {}

  bool operator()(name_id n) { return witness(n) >= 0; }

  // index of the first listed generator below sym(n) if n is HS, else -1
  int witness(name_id n) {
    if (auto it = memo_.find(n); it != memo_.end()) return it->second;
    int w = -1;
    bool children = true;
    for (auto [p, y] : entries(n))
      if (witness(y) < 0) {
        children = false;
        break;
      }
    if (children)
      for (std::size_t i = 0; i < S_.filters.size(); ++i)
        if (generator_leq_sym(S_, S_.filters[i], n)) {
          w = static_cast<int>(i);
          break;
        }
    memo_.emplace(n, w);
    return w;
  }

 private:
  const symmetric_system& S_;
  std::unordered_map<name_id, int> memo_;
};

inline bool is_hereditarily_symmetric(const symmetric_system& S, name_id n) { return hs_checker(S)(n); }

// closure of {n} under the listed generators
inline std::vector<name_id> orbit(const symmetric_system& S, name_id n, std::size_t budget = 100000) {
  budget = search_budget(budget);
  std::vector<name_id> out{n};
  std::set<name_id> seen{n};
  for (std::size_t i = 0; i < out.size(); ++i)
    for (auto g : S.generators) {
      name_id m = S.act(g, out[i]);
      if (seen.insert(m).second) {
        out.push_back(m);
        if (out.size() > budget) throw budget_error("orbit exceeds budget " + std::to_string(budget));
      }
    }
  return out;
}

// stabilizer of a name as a member set over the group
inline bitset sym_members(const symmetric_system& S, name_id n) {
  bitset m(S.group.size());
  for (std::uint32_t g = 0; g < S.group.size(); ++g)
    if (S.act(g, n) == n) m.set(g);
  return m;
}

// canonical generic name {(p, p-check) : p in P}, conditions coded by index
inline name_id canonical_generic(const poset& P) {
  std::vector<entry> es;
  for (cond_id p = 0; p < P.size(); ++p) es.emplace_back(p, check_name(P, hf::ackermann(p)));
  return make_name(P, std::move(es));
}

// ---- symmetric dense sets ---------------------------------------------------

inline bool stabilizes(const symmetric_system& S, std::uint32_t g, const bitset& D) {
  const auto& m = S.group[g].cond_map;
  for (std::size_t p = D.find_first(); p != bitset::npos; p = D.find_next(p))
    if (!D[m[p]]) return false;
  return true;
}

// some listed fix(e) stabilizes D setwise
inline bool symmetric_dense_check(const symmetric_system& S, const bitset& D) {
  if (D.size() != S.P->size()) throw input_error("set of conditions is not over the system's poset");
  std::set<std::uint32_t> used;
  std::set<coord> cs;
  for (std::size_t p = D.find_first(); p != bitset::npos; p = D.find_next(p)) S.coords(static_cast<cond_id>(p), cs);
  for (auto [s, c] : cs) used.insert(c);
  for (const auto& H : S.filters) {
    bool ok = true;
    std::optional<std::uint32_t> fresh;
    std::set<std::uint32_t> es;
    for (auto [s, c] : H.e) es.insert(c);
    auto ts = S.width > 0 && H.stages.empty() ? reduced_transpositions(used, es, S.width, fresh) : std::nullopt;
    if (ts) {
      for (auto [i, j] : *ts) {
        auto g = S.element_with_base(perm::transposition(S.width, i, j));
        if (!g || !stabilizes(S, *g, D)) {
          ok = false;
          break;
        }
      }
    } else {
      for (std::size_t g = H.members.find_first(); g != bitset::npos && ok; g = H.members.find_next(g))
        ok = stabilizes(S, static_cast<std::uint32_t>(g), D);
    }
    if (ok) return true;
  }
  return false;
}

// ---- symmetric forcing ------------------------------------------------------

// forcing with every quantifier universe filtered through the HS test
inline forcing_engine symmetric_engine(const system_ptr& S, universe_map U = {},
                                       forcing_mode m = forcing_mode::automatic) {
  auto hs = std::make_shared<hs_checker>(*S);
  return forcing_engine(S->P, std::move(U), m, [hs, S](name_id n) { return (*hs)(n); });
}

inline bool forces_symmetric(const system_ptr& S, cond_id p, formula_id f, universe_map U = {}) {
  auto E = symmetric_engine(S, std::move(U));
  return E.forces(p, f);
}

// name_by_formula inside the symmetric system, plus the recorded lower bound:
// the intersection of the parameters' stabilizers, which must stabilize y.
struct symmetric_definition {
  name_id y;
  bitset params_sym;
};

inline symmetric_definition name_by_formula_symmetric(const system_ptr& S, cond_id p, formula_id phi, std::uint32_t var,
                                                      const std::vector<name_id>& witnesses,
                                                      const std::vector<name_id>& children, std::uint32_t rank_bound) {
  hs_checker hs(*S);
  std::vector<name_id> ws, cs;
  for (name_id w : witnesses)
    if (hs(w)) ws.push_back(w);
  for (name_id c : children)
    if (rank(c) < rank_bound && hs(c)) cs.push_back(c);
  auto E = symmetric_engine(S);
  auto r = name_by_formula(E, p, phi, var, ws, cs);
  bitset lower(S->group.size());
  lower.set();
  for (name_id x : r.params) lower &= sym_members(*S, x);
  return {r.y, lower};
}

// ---- validation ---------------------------------------------------------

struct validation_issue {
  std::string check;
  std::string detail;
};

inline std::vector<validation_issue> validate_system(const symmetric_system& S) {
  std::vector<validation_issue> out;
  const poset& P = *S.P;
  const std::size_t n = P.size();
  if (n <= poset::matrix_limit) {
    for (cond_id p = 0; p < n; ++p) {
      if (!P.leq(p, p)) out.push_back({"order reflexive", "condition " + std::to_string(p)});
      if (!P.leq(p, P.top())) out.push_back({"top maximal", "condition " + std::to_string(p)});
      for (cond_id q = 0; q < n; ++q)
        if (P.leq(q, p) && !P.below(q).is_subset_of(P.below(p)))
          out.push_back({"order transitive", std::to_string(q) + " <= " + std::to_string(p)});
    }
  }
  for (std::uint32_t g = 0; g < S.group.size(); ++g) {
    const auto& m = S.group[g].cond_map;
    std::vector<char> hit(n, 0);
    for (auto x : m) hit[x] = 1;
    if (std::count(hit.begin(), hit.end(), 1) != static_cast<long>(n)) {
      out.push_back({"automorphism bijective", S.group[g].label});
      continue;
    }
    if (n <= poset::matrix_limit) {
      bool ok = true;
      for (cond_id p = 0; p < n && ok; ++p)
        for (cond_id q = 0; q < n && ok; ++q)
          if (P.leq(q, p) != P.leq(m[q], m[p])) ok = false;
      if (!ok) out.push_back({"automorphism preserves order", S.group[g].label});
    }
  }
  // closure, identity, inverses
  for (std::uint32_t a = 0; a < S.group.size(); ++a) {
    if (!S.inverse(a)) out.push_back({"group inverses", "no inverse for " + S.group[a].label});
    for (std::uint32_t b = 0; b < S.group.size(); ++b)
      if (!S.compose(a, b)) {
        out.push_back({"group closure", S.group[a].label + " o " + S.group[b].label + " is not in the group"});
        return out;
      }
  }
  // normality on generators: conjugates stay above some listed generator
  for (auto g : S.generators)
    for (const auto& H : S.filters) {
      bitset conj = conjugate_members(S, g, H.members);
      bool above = false;
      for (const auto& K : S.filters) above = above || K.members.is_subset_of(conj);
      if (!above) out.push_back({"normality", S.group[g].label + " conjugating " + H.label});
    }
  return out;
}

}  // namespace symforce
