#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "symforce/forcing.hpp"
#include "symforce/iteration.hpp"
#include "symforce/name.hpp"
#include "symforce/symmetry.hpp"

// The truncated tower: stage 0 is T(Cohen), stage d is T(Coll(C, A_d)) with
// A_d the orbit closure of the earlier copy generics.
namespace symforce {

// x over level `from` as a name over level `to` >= from
inline name_id pad_name(const iteration& it, std::size_t from, name_id x, std::size_t to,
                        std::map<name_id, name_id>* memo = nullptr) {
  if (from == to) return x;
  std::map<name_id, name_id> local;
  if (!memo) memo = &local;
  if (auto f = memo->find(x); f != memo->end()) return f->second;
  std::vector<entry> es;
  for (auto [p, y] : entries(x)) es.emplace_back(it.pad_cond(from, p, to), pad_name(it, from, y, to, memo));
  name_id out = make_name(*it.level(to)->P, std::move(es));
  memo->emplace(x, out);
  return out;
}

struct tower {
  truncation_config cfg;
  std::shared_ptr<iteration> it;
  std::vector<std::vector<name_id>> g_local;  // [a][n] over level a
  std::vector<std::vector<name_id>> g;        // [a][n] over the top
  std::vector<std::vector<name_id>> index_lists;  // [d] for d >= 1, over level d-1
  std::vector<name_id> A;                          // [d] for d = 1..D over the top (A[0] unused)
  name_id Gdot = 0, Gamma = 0;
  std::vector<std::pair<std::string, name_id>> registry;

  const symmetric_system& top() const { return *it->top(); }
  std::size_t depth() const { return it->depth(); }
  name_id lookup(const std::string& id) const {
    for (const auto& [k, v] : registry)
      if (k == id) return v;
    throw input_error("unknown registry id " + id);
  }
};

namespace detail {

// copy-0 bit of the stage-0 part of a prior-level minimal class
inline std::uint32_t stage0_bit(const iteration& it, std::size_t level, std::size_t k) {
  const poset& P = *it.level(level)->P;
  cond_id base = it.restrict_cond(level, P.atoms()[k], 0);
  const poset& B = *it.level(0)->P;
  std::int32_t inner = B.at(base).cells[0];
  if (inner < 0) throw std::logic_error("minimal condition with an undecided copy");
  return static_cast<std::uint32_t>(B.inner()->at(static_cast<cond_id>(inner)).cells[0]);
}

// coll condition c with every stored index i replaced by f[i]
inline cond_id remap_coll(const poset& coll, cond_id c, const std::vector<std::uint32_t>& f) {
  condition x = coll.at(c);
  for (auto& v : x.cells)
    if (v >= 0) v = static_cast<std::int32_t>(f[static_cast<std::size_t>(v)]);
  return *coll.find(x);
}

inline cond_id remap_product(const poset& prod, cond_id o, const std::vector<std::uint32_t>& f) {
  condition x = prod.at(o);
  for (auto& v : x.cells)
    if (v >= 0) v = static_cast<std::int32_t>(remap_coll(*prod.inner(), static_cast<cond_id>(v), f));
  return *prod.find(x);
}

// the name r_c = {(i, L[c(i)]) : i in dom c} over the prior level
inline name_id coll_value_name(const poset& P, const poset& coll, cond_id c, const std::vector<name_id>& L) {
  std::vector<name_id> ps;
  const auto& cells = coll.at(c).cells;
  for (std::uint32_t i = 0; i < cells.size(); ++i)
    if (cells[i] >= 0) ps.push_back(pair_bullet(P, check_name(P, hf::nat(i)), L[static_cast<std::size_t>(cells[i])]));
  return bullet(P, ps);
}

}  // namespace detail

inline iterand_spec collapse_iterand(const iteration& it, const std::vector<name_id>& L, truncation_config cfg) {
  const std::size_t d = it.depth();
  const auto& below = *it.top();
  auto coll = build_coll(static_cast<std::uint32_t>(L.size()), cfg.coll_target_bound);
  iterand_spec spec;
  spec.label = "T(Coll(" + std::to_string(cfg.coll_target_bound) + ", A_" + std::to_string(d) + "))";
  spec.T = build_T(coll, cfg.product_width, cfg);
  spec.index_names = L;
  const poset* prod = spec.T->P.get();
  spec.map_indices = [prod](cond_id o, const std::vector<std::uint32_t>& f) { return detail::remap_product(*prod, o, f); };
  if (cfg.product_width == 2) {
    // case splits on the copy-0 bit of the stage-0 Cohen real
    const auto& T = *spec.T;
    auto swap = T.element_with_base(perm::transposition(2, 0, 1));
    std::optional<std::uint32_t> f0, f1;
    for (std::uint32_t i = 0; i < T.filters.size(); ++i) {
      if (T.filters[i].e == std::vector<coord>{{0, 0}}) f0 = i;
      if (T.filters[i].e == std::vector<coord>{{0, 1}}) f1 = i;
    }
    stage_fn ps, gs;
    for (std::size_t k = 0; k < below.P->atoms().size(); ++k) {
      bool bit = detail::stage0_bit(it, d - 1, k);
      ps.push_back(bit ? *swap : 0);
      gs.push_back(bit ? *f0 : *f1);
    }
    spec.perm_seeds.push_back(ps);
    spec.gen_seeds.push_back(gs);
  }
  return spec;
}

// g_{0,n} = {(p, c-check) : c = p(0)(n), the inner top when n is outside the domain}.
// thin keeps only p supported on copy n; the two are forced equal.
inline name_id copy_generic_base(const poset& P, std::uint32_t n, bool thin = true) {
  const poset& in = *P.inner();
  auto code = [&](cond_id c) {
    std::vector<std::pair<std::uint32_t, hf::value>> kv;
    const auto& cells = in.at(c).cells;
    for (std::uint32_t i = 0; i < cells.size(); ++i)
      if (cells[i] >= 0) kv.emplace_back(i, hf::nat(static_cast<std::uint32_t>(cells[i])));
    return hf::nat_map(kv);
  };
  std::vector<entry> es;
  for (cond_id p = 0; p < P.size(); ++p) {
    const auto& cells = P.at(p).cells;
    bool off = false;
    for (std::uint32_t i = 0; i < cells.size(); ++i) off = off || (i != n && cells[i] >= 0);
    if (thin && off) continue;
    std::int32_t c = cells[n];
    es.emplace_back(p, check_name(P, code(c < 0 ? in.top() : static_cast<cond_id>(c))));
  }
  return make_name(P, std::move(es));
}

// g_{d,n} = {(p, r_c) : p|d forces r_c = p(d)(n)} over level d; thin keeps only
// p = (1, o-check) with o supported on copy n
inline name_id copy_generic_stage(const iteration& it, std::size_t d, std::uint32_t n, const std::vector<name_id>& L,
                                  bool thin = true) {
  const auto& st = it.stage(d);
  const poset& lower = *st.below->P;
  const poset& prod = *st.T().P;
  const poset& coll = *prod.inner();
  const std::uint32_t nc = st.conds.size();
  const std::size_t A = st.atoms();
  // canonical copy-n cell of each object and of each lone coll condition, per minimal class
  std::vector<std::vector<cond_id>> cell(A, std::vector<cond_id>(prod.size()));
  std::vector<std::vector<cond_id>> lone(A, std::vector<cond_id>(coll.size()));
  for (std::size_t k = 0; k < A; ++k) {
    for (cond_id o = 0; o < prod.size(); ++o) {
      std::int32_t v = prod.at(st.canon[k][o]).cells[n];
      cell[k][o] = v < 0 ? coll.top() : static_cast<cond_id>(v);
    }
    for (cond_id c = 0; c < coll.size(); ++c) {
      condition x{condition::kind::product, std::vector<std::int32_t>(prod.at(0).cells.size(), -1)};
      x.cells[n] = static_cast<std::int32_t>(c);
      std::int32_t v = prod.at(st.canon[k][*prod.find(x)]).cells[n];
      lone[k][c] = static_cast<cond_id>(v);
    }
  }
  std::vector<name_id> rs;
  for (cond_id c = 0; c < coll.size(); ++c) rs.push_back(pad_name(it, d - 1, detail::coll_value_name(lower, coll, c, L), d));
  const poset& P = *it.level(d)->P;
  std::vector<entry> es;
  for (cond_id p = 0; p < P.size(); ++p) {
    if (thin) {
      if (p / nc != lower.top() || p % nc >= prod.size()) continue;
      const auto& cells = prod.at(p % nc).cells;
      bool off = false;
      for (std::uint32_t i = 0; i < cells.size(); ++i) off = off || (i != n && cells[i] >= 0);
      if (off) continue;
    }
    const bitset& ab = lower.atoms_below(p / nc);
    const auto& f = st.conds[p % nc];
    for (cond_id c = 0; c < coll.size(); ++c) {
      bool ok = true;
      for (std::size_t k = ab.find_first(); k != bitset::npos && ok; k = ab.find_next(k))
        ok = lone[k][c] == cell[k][f[k]];
      if (ok) es.emplace_back(p, rs[c]);
    }
  }
  return make_name(P, std::move(es));
}

inline tower build_tower(truncation_config cfg) {
  cfg.validate();
  tower t;
  t.cfg = cfg;
  const std::uint32_t W = cfg.product_width;
  auto base = build_T(build_cohen(cfg), W, cfg);
  t.it = std::make_shared<iteration>(base);
  t.g_local.emplace_back();
  for (std::uint32_t n = 0; n < W; ++n) t.g_local[0].push_back(copy_generic_base(*base->P, n));
  t.index_lists.emplace_back();
  for (std::uint32_t d = 1; d <= cfg.iteration_depth; ++d) {
    // A_d over level d-1: orbit closure of the earlier copy generics
    const auto& S = *t.it->level(d - 1);
    std::vector<name_id> L;
    std::set<name_id> seen;
    for (std::size_t a = 0; a < d; ++a)
      for (name_id x : t.g_local[a]) {
        name_id y = pad_name(*t.it, a, x, d - 1);
        for (name_id z : orbit(S, y))
          if (seen.insert(z).second) L.push_back(z);
      }
    t.index_lists.push_back(L);
    if (d == cfg.iteration_depth) break;
    try {
      t.it->extend(collapse_iterand(*t.it, L, cfg));
    } catch (const budget_error& e) {
      std::string m = e.what();
      throw budget_error(m.rfind("stage", 0) == 0 ? m : "stage " + std::to_string(d) + ": " + m);
    }
    t.g_local.emplace_back();
    for (std::uint32_t n = 0; n < W; ++n) t.g_local[d].push_back(copy_generic_stage(*t.it, d, n, L));
  }
  const std::size_t top = t.it->depth() - 1;
  const poset& P = *t.it->top()->P;
  t.g.resize(t.g_local.size());
  for (std::size_t a = 0; a < t.g_local.size(); ++a)
    for (std::uint32_t n = 0; n < W; ++n) {
      t.g[a].push_back(pad_name(*t.it, a, t.g_local[a][n], top));
      t.registry.emplace_back("g_" + std::to_string(a) + "_" + std::to_string(n), t.g[a][n]);
    }
  t.A.assign(cfg.iteration_depth + 1, 0);
  for (std::uint32_t d = 1; d <= cfg.iteration_depth; ++d) {
    t.A[d] = pad_name(*t.it, d - 1, bullet(*t.it->level(d - 1)->P, t.index_lists[d]), top);
    t.registry.emplace_back("A_" + std::to_string(d), t.A[d]);
  }
  t.Gdot = canonical_generic(P);
  t.Gamma = bullet(P, orbit(*t.it->top(), t.Gdot));
  t.registry.emplace_back("Gdot", t.Gdot);
  t.registry.emplace_back("Gamma", t.Gamma);
  return t;
}

// ---- the canonical order on the truncated hierarchy ------------------------

// X_0 = {0..base-1}, X_{k+1} = sequences of length `length` from X_k
struct hierarchy {
  std::uint32_t base = 2, length = 2, levels = 2;

  std::optional<std::vector<hf::value>> as_sequence(hf::value v) const {
    const auto& ms = hf::members(v);
    if (ms.size() != length) return std::nullopt;
    std::vector<hf::value> out(length);
    std::vector<char> got(length, 0);
    for (hf::value m : ms) {
      auto pr = hf::as_pair(m);
      if (!pr) return std::nullopt;
      auto i = hf::as_nat(pr->first);
      if (!i || *i >= length || got[*i]) return std::nullopt;
      got[*i] = 1;
      out[*i] = pr->second;
    }
    return out;
  }

  bool in_level(hf::value v, std::uint32_t k) const {
    if (k == 0) {
      auto n = hf::as_nat(v);
      return n && *n < base;
    }
    auto s = as_sequence(v);
    if (!s) return false;
    return std::all_of(s->begin(), s->end(), [&](hf::value x) { return in_level(x, k - 1); });
  }

  // least level containing v
  std::uint32_t level_of(hf::value v) const {
    for (std::uint32_t k = 0; k <= levels; ++k)
      if (in_level(v, k)) return k;
    throw input_error("value " + hf::to_string(v) + " is outside the truncated hierarchy");
  }

  std::vector<hf::value> enumerate(std::uint32_t k) const {
    if (k > levels) throw input_error("hierarchy level beyond the truncation");
    std::vector<hf::value> out;
    if (k == 0) {
      for (std::uint32_t i = 0; i < base; ++i) out.push_back(hf::nat(i));
      return out;
    }
    auto lower = enumerate(k - 1);
    std::vector<std::size_t> idx(length, 0);
    while (true) {
      std::vector<hf::value> xs;
      for (auto i : idx) xs.push_back(lower[i]);
      out.push_back(hf::tuple(xs));
      std::size_t j = length;
      while (j > 0 && ++idx[j - 1] == lower.size()) idx[--j] = 0;
      if (j == 0) break;
    }
    return out;
  }

  bool lt_at(hf::value x, hf::value y, std::uint32_t k) const {
    if (k == 0) return *hf::as_nat(x) < *hf::as_nat(y);
    auto a = *as_sequence(x), b = *as_sequence(y);
    for (std::uint32_t i = 0; i < length; ++i) {
      if (a[i] == b[i]) continue;
      return lt_at(a[i], b[i], k - 1);
    }
    return false;
  }

  // earlier level first, lexicographic within a level
  bool lt(hf::value x, hf::value y) const {
    std::uint32_t kx = level_of(x), ky = level_of(y);
    if (kx != ky) return kx < ky;
    return lt_at(x, y, kx);
  }
};

// ---- minimal supports --------------------------------------------------------

struct minimal_support {
  cond_id q = 0;
  name_id y = 0;
  std::uint32_t alpha = 0;
  std::vector<std::uint32_t> a;
};

struct support_search_options {
  bool reversed = false;  // reverse the order of conditions, copy sets within a size, and candidates
  std::uint32_t rank = 2;
  std::vector<name_id> extra;  // further candidates, e.g. registry names
};

inline group_semantics tower_semantics(const symmetric_system& S) {
  return S.width > 0 ? group_semantics::finitary : group_semantics::truncated;
}

inline std::vector<std::vector<std::uint32_t>> copy_sets(std::uint32_t W, bool reversed) {
  std::vector<std::vector<std::uint32_t>> out;
  for (std::uint32_t m = 0; m < (1u << W); ++m) {
    std::vector<std::uint32_t> a;
    for (std::uint32_t i = 0; i < W; ++i)
      if (m >> i & 1) a.push_back(i);
    out.push_back(a);
  }
  std::stable_sort(out.begin(), out.end(), [&](auto& x, auto& y) {
    if (x.size() != y.size()) return x.size() < y.size();
    return reversed ? y < x : x < y;
  });
  return out;
}

// q <= p, a stage alpha and copies a with fix({alpha} x a) <= sym(y), q forces x = y,
// alpha a minimal index and {alpha} x a minimal below q, all over a bounded universe
inline minimal_support minimal_support_search(const symmetric_system& S, std::uint32_t stages, name_id x, cond_id p,
                                              const support_search_options& o = {}) {
  const poset& P = *S.P;
  std::uint32_t W = S.cfg.product_width;
  const auto sem = tower_semantics(S);
  std::vector<name_id> U = orbit(S, x);
  for (name_id z : o.extra) U.push_back(z);
  universe_spec us;
  us.conditions = {P.top()};
  us.rank = o.rank;
  for (name_id z : generate_universe(P, us)) U.push_back(z);
  {
    std::set<name_id> seen;
    std::vector<name_id> d;
    for (name_id z : U)
      if (seen.insert(z).second) d.push_back(z);
    U = d;
  }
  if (o.reversed) std::reverse(U.begin(), U.end());

  forcing_engine E(S.P);
  std::map<std::tuple<name_id, std::uint32_t, std::uint32_t>, bool> sym_memo;
  auto sym_ok = [&](name_id z, std::uint32_t alpha, const std::vector<std::uint32_t>& a) {
    std::uint32_t mask = 0;
    for (auto i : a) mask |= 1u << i;
    auto key = std::make_tuple(z, alpha, mask);
    if (auto f = sym_memo.find(key); f != sym_memo.end()) return f->second;
    std::vector<coord> e;
    for (auto i : a) e.push_back({alpha, i});
    bool v = fix_leq_sym(S, e, z, sem).value;
    sym_memo.emplace(key, v);
    return v;
  };
  const auto sets = copy_sets(W, o.reversed);
  std::vector<std::uint32_t> all(W);
  for (std::uint32_t i = 0; i < W; ++i) all[i] = i;

  std::vector<cond_id> qs{p};
  for (cond_id q = 0; q < P.size(); ++q)
    if (q != p && P.leq(q, p)) qs.push_back(q);
  if (o.reversed) std::reverse(qs.begin(), qs.end());

  for (cond_id q : qs)
    for (std::uint32_t alpha = 0; alpha < stages; ++alpha)
      for (const auto& a : sets)
        for (name_id y : U) {
          if (!sym_ok(y, alpha, a) || !E.forces(q, f_eq(x, y))) continue;
          // no earlier stage carries a support for anything y may equal
          bool index_min = true;
          for (std::uint32_t b = 0; b < alpha && index_min; ++b)
            for (name_id z : U)
              if (sym_ok(z, b, all) && !E.forces(q, f_not(f_eq(y, z)))) {
                index_min = false;
                break;
              }
          if (!index_min) continue;
          // a is contained in every support at alpha of anything y may equal below q
          bool minimal = true;
          for (name_id z : U) {
            if (!minimal) break;
            if (E.forces(q, f_not(f_eq(y, z)))) continue;
            for (const auto& b : sets)
              if (sym_ok(z, alpha, b) && !std::includes(b.begin(), b.end(), a.begin(), a.end())) {
                minimal = false;
                break;
              }
          }
          if (minimal) return {q, y, alpha, a};
        }
  throw budget_error("no minimal support found within the bounded name universe");
}

// ---- homogeneity --------------------------------------------------------------

namespace detail {

// permutation moving every copy in both da and dp to a copy outside both
inline std::optional<perm> separating_perm(std::uint32_t W, const std::set<std::uint32_t>& dr,
                                           const std::set<std::uint32_t>& dp) {
  perm pi = perm::identity(W);
  std::set<std::uint32_t> used(dr.begin(), dr.end());
  used.insert(dp.begin(), dp.end());
  std::uint32_t next = 0;
  for (auto i : dr) {
    if (!dp.count(i)) continue;
    while (next < W && used.count(next)) ++next;
    if (next == W) return std::nullopt;
    used.insert(next);
    pi = compose(perm::transposition(W, i, next), pi);
  }
  return pi;
}

inline std::set<std::uint32_t> domain(const poset& prod, cond_id o) {
  std::set<std::uint32_t> out;
  const auto& cells = prod.at(o).cells;
  for (std::uint32_t i = 0; i < cells.size(); ++i)
    if (cells[i] >= 0) out.insert(i);
  return out;
}

}  // namespace detail

// identity below alpha; from alpha on, move the domain of (pi|b)(r(b)) away
// from the domain of p(b). Verified: pi in fix(e) for e below alpha, pi(r) || p.
inline std::uint32_t homogeneity_automorphism(const iteration& it, cond_id p, cond_id r, std::size_t alpha) {
  const std::size_t D = it.depth();
  if (alpha > D) throw input_error("cutoff beyond the iteration depth");
  const std::size_t top = D - 1;
  const auto& S0 = *it.level(0);
  const std::uint32_t W = S0.cfg.product_width;
  std::uint32_t pi = 0;
  if (alpha == 0) {
    const poset& B = *S0.P;
    auto s = detail::separating_perm(W, detail::domain(B, it.cond_entry(top, r, 0)), detail::domain(B, it.cond_entry(top, p, 0)));
    if (!s) throw budget_error("stage 0: width too small to separate the domains");
    pi = *S0.element_with_base(*s);
  }
  for (std::size_t b = 1; b <= top; ++b) {
    const auto& st = it.stage(b);
    const std::uint32_t np = st.perms.size();
    if (b < alpha) {
      pi = pi * np;
      continue;
    }
    const poset& lower = *st.below->P;
    const poset& prod = *st.T().P;
    stage_fn moved = st.act_cond(pi, st.conds[it.cond_entry(top, r, b)]);
    const auto& fp = st.conds[it.cond_entry(top, p, b)];
    const auto& lm = st.below->group[pi].cond_map;
    cond_id rl = lm[it.restrict_cond(top, r, b - 1)], pl = it.restrict_cond(top, p, b - 1);
    const bitset both = lower.atoms_below(rl) & lower.atoms_below(pl);
    stage_fn s(st.atoms(), 0);
    for (std::size_t k = 0; k < s.size(); ++k) {
      auto sp = detail::separating_perm(W, detail::domain(prod, moved[k]), detail::domain(prod, fp[k]));
      if (!sp) {
        if (both[k]) throw budget_error("stage " + std::to_string(b) + ": width too small to separate the domains");
        continue;
      }
      s[k] = *st.T().element_with_base(*sp);
    }
    auto id = st.perms.find(s);
    if (!id) throw budget_error("stage " + std::to_string(b) + ": the separating permutation name is not in the catalog");
    pi = pi * np + *id;
  }
  const auto& S = *it.top();
  for (std::uint32_t b = 0; b < alpha && b <= top; ++b)
    for (std::uint32_t c = 0; c < W; ++c)
      if (!S.fixes_coord(pi, {b, c})) throw std::logic_error("homogeneity automorphism moves a coordinate below the cutoff");
  if (!S.P->compatible(S.group[pi].cond_map[r], p))
    throw precondition_error("pi(r) and p are incompatible (their restrictions below the cutoff already clash)");
  return pi;
}

// ---- the failure of choice witness ----------------------------------------------

struct notac_report {
  std::uint32_t pi = 0;
  std::uint32_t n = 0;
  cond_id q_trunc = 0;
  bool fact1 = false, fact2 = false, fact3 = false;
  std::size_t generics = 0, agreements = 0;  // evaluation cross-check of fact 2
  bool evaluation_agrees = false;
  json to_json() const {
    return {{"pi", pi},        {"n", n},
            {"q_trunc", q_trunc}, {"fact1", fact1},
            {"fact2", fact2},  {"fact3", fact3},
            {"generics", generics}, {"generics_with_equal_values", agreements},
            {"evaluation_agrees", evaluation_agrees}};
  }
  bool all() const { return fact1 && fact2 && fact3; }
};

// pi: identity off stage alpha, the transposition (0 n) at alpha with n the least
// positive copy outside the domain of q(alpha)
inline notac_report notac_witness(const tower& t, const std::vector<coord>& e, std::size_t alpha, cond_id q) {
  const iteration& it = *t.it;
  const std::size_t top = it.depth() - 1;
  const std::uint32_t W = t.cfg.product_width;
  if (alpha > top) throw input_error("stage beyond the tower");
  for (auto [s, c] : e)
    if (s >= alpha)
      throw precondition_error("e pins (" + std::to_string(s) + "," + std::to_string(c) +
                               "), not below stage " + std::to_string(alpha) + (c == 0 && s == alpha ? ": 0 is pinned" : ""));
  // the domain of q(alpha), decided by q|alpha
  std::set<std::uint32_t> dom;
  if (alpha == 0) {
    dom = detail::domain(*it.level(0)->P, it.cond_entry(top, q, 0));
  } else {
    const auto& st = it.stage(alpha);
    const auto& f = st.conds[it.cond_entry(top, q, alpha)];
    const bitset& ab = st.below->P->atoms_below(it.restrict_cond(top, q, alpha - 1));
    bool first = true;
    for (std::size_t k = ab.find_first(); k != bitset::npos; k = ab.find_next(k)) {
      auto d = detail::domain(*st.T().P, st.canon[k][f[k]]);
      if (!first && d != dom) throw precondition_error("q does not decide the domain of its stage entry");
      dom = d;
      first = false;
    }
  }
  notac_report rep;
  std::uint32_t n = 1;
  while (n < W && dom.count(n)) ++n;
  if (n >= W) throw budget_error("width too small: no free copy outside the domain");
  rep.n = n;
  perm sw = perm::transposition(W, 0, n);
  std::uint32_t pi;
  if (alpha == 0) {
    pi = *it.level(0)->element_with_base(sw);
  } else {
    const auto& st = it.stage(alpha);
    auto h = st.T().element_with_base(sw);
    pi = *st.perms.find(stage_fn(st.atoms(), *h));
  }
  pi = it.pad_group(alpha, pi, top);
  rep.pi = pi;
  const auto& S = *it.top();
  rep.fact1 = true;
  for (auto c : e) rep.fact1 = rep.fact1 && S.fixes_coord(pi, c);
  name_id g = t.g[alpha][0];
  name_id moved = S.act(pi, g);
  forcing_engine E(it.top()->P);
  rep.fact2 = E.forces(S.P->top(), f_not(f_eq(moved, g)));
  rep.q_trunc = it.pad_cond(alpha, it.restrict_cond(top, q, alpha), top);
  rep.fact3 = S.P->compatible(S.group[pi].cond_map[rep.q_trunc], rep.q_trunc);
  const auto& atoms = S.P->atoms();
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    evaluator ev(up_closure_of_atom(it.top()->P, k));
    ++rep.generics;
    if (ev(moved) == ev(g)) ++rep.agreements;
  }
  rep.evaluation_agrees = rep.fact2 == (rep.agreements == 0);
  return rep;
}

// ---- reductions -----------------------------------------------------------------

namespace detail {

// q <= p such that q|(b-1) decides a stage-b entry for every b, via `value`
template <class F>
std::optional<cond_id> decide_below(const iteration& it, cond_id p, F&& decided) {
  const poset& P = *it.top()->P;
  for (cond_id q = 0; q < P.size(); ++q) {
    if (q != p && !P.leq(q, p)) continue;
    if (decided(q)) return q;
  }
  return std::nullopt;
}

}  // namespace detail

struct fix_reduction {
  cond_id q = 0;
  name_id y = 0;
  std::vector<coord> e;
};

// extend p to decide each stage of the generator H, read off fix(e), and
// collect y = {(r, z) : r decides H the same way, r forces z in x}
inline fix_reduction reduce_to_fix(const iteration& it, name_id x, cond_id p, std::optional<std::uint32_t> H = {}) {
  const auto& S = *it.top();
  const std::size_t top = it.depth() - 1;
  if (!H) {
    int w = hs_checker(S).witness(x);
    if (w < 0) throw precondition_error("the name is not hereditarily symmetric");
    H = static_cast<std::uint32_t>(w);
  }
  auto entry_value = [&](cond_id q, std::size_t b) -> std::optional<std::uint32_t> {
    const auto& st = it.stage(b);
    const auto& K = st.gens[it.filter_entry(top, *H, b)];
    const bitset& ab = st.below->P->atoms_below(it.restrict_cond(top, q, b - 1));
    std::optional<std::uint32_t> v;
    for (std::size_t k = ab.find_first(); k != bitset::npos; k = ab.find_next(k)) {
      if (v && *v != K[k]) return std::nullopt;
      v = K[k];
    }
    return v;
  };
  auto decides = [&](cond_id q) {
    for (std::size_t b = 1; b <= top; ++b)
      if (!entry_value(q, b)) return false;
    return true;
  };
  auto q = detail::decide_below(it, p, decides);
  if (!q) throw budget_error("no extension decides the generator");
  fix_reduction out;
  out.q = *q;
  out.e = it.level(0)->filters[it.filter_entry(top, *H, 0)].e;
  std::vector<std::uint32_t> vals(top + 1, 0);
  for (std::size_t b = 1; b <= top; ++b) {
    vals[b] = *entry_value(*q, b);
    for (auto [s, c] : it.stage(b).T().filters[vals[b]].e) out.e.push_back({static_cast<std::uint32_t>(b), c});
  }
  std::sort(out.e.begin(), out.e.end());
  if (fix_leq_sym_exhaustive(S, out.e, x)) {
    out.y = x;
    return out;
  }
  // candidates: the group closure of x's children
  std::vector<name_id> Z;
  std::set<name_id> seen;
  for (auto [r, z] : entries(x))
    for (name_id w : orbit(S, z))
      if (seen.insert(w).second) Z.push_back(w);
  forcing_engine E(it.top()->P);
  std::vector<entry> es;
  for (cond_id r = 0; r < S.P->size(); ++r) {
    bool same = true;
    for (std::size_t b = 1; b <= top && same; ++b) {
      auto v = entry_value(r, b);
      same = v && *v == vals[b];
    }
    if (!same) continue;
    for (name_id z : Z)
      if (E.forces(r, f_in(z, x))) es.emplace_back(r, z);
  }
  out.y = make_name(*S.P, std::move(es));
  if (!fix_leq_sym_exhaustive(S, out.e, out.y) || !E.forces(out.q, f_eq(x, out.y)))
    throw budget_error("the bounded candidate set does not yield a fix(e)-symmetric equivalent");
  return out;
}

struct autom_reduction {
  cond_id q = 0;
  std::uint32_t tau = 0;             // the automorphism with constant stage entries
  std::vector<std::uint32_t> f;      // f[0] base element, f[b] stage-b group element
  bool verified = false;             // q forces pi(x) = tau_f(x)
};

inline autom_reduction reduce_autom(const iteration& it, std::uint32_t pi, cond_id p, name_id x) {
  const auto& S = *it.top();
  const std::size_t top = it.depth() - 1;
  auto entry_value = [&](cond_id q, std::size_t b) -> std::optional<std::uint32_t> {
    const auto& st = it.stage(b);
    const auto& s = st.perms[it.group_entry(top, pi, b)];
    const bitset& ab = st.below->P->atoms_below(it.restrict_cond(top, q, b - 1));
    std::optional<std::uint32_t> v;
    for (std::size_t k = ab.find_first(); k != bitset::npos; k = ab.find_next(k)) {
      if (v && *v != s[k]) return std::nullopt;
      v = s[k];
    }
    return v;
  };
  auto q = detail::decide_below(it, p, [&](cond_id q) {
    for (std::size_t b = 1; b <= top; ++b)
      if (!entry_value(q, b)) return false;
    return true;
  });
  if (!q) throw budget_error("no extension decides the automorphism");
  autom_reduction out;
  out.q = *q;
  out.f.push_back(it.group_entry(top, pi, 0));
  out.tau = out.f[0];
  for (std::size_t b = 1; b <= top; ++b) {
    const auto& st = it.stage(b);
    std::uint32_t h = *entry_value(*q, b);
    out.f.push_back(h);
    out.tau = out.tau * st.perms.size() + *st.perms.find(stage_fn(st.atoms(), h));
  }
  forcing_engine E(it.top()->P);
  out.verified = E.forces(out.q, f_eq(S.act(pi, x), S.act(out.tau, x)));
  return out;
}

// ---- definability from Gamma and the generics ----------------------------------

// y = union of x^H over H in Gamma^G agreeing with G on g_{a,n} for (a,n) in e; y = x^G?
inline bool definability_check(const tower& t, name_id x, const std::vector<coord>& e, std::size_t m) {
  const auto& P = t.it->top()->P;
  filter G = up_closure_of_atom(P, m);
  evaluator eg(G);
  std::map<hf::value, std::size_t> atom_of;
  for (std::size_t k = 0; k < P->atoms().size(); ++k) {
    std::vector<hf::value> codes;
    const bitset& up = up_closure_of_atom(P, k).members;
    for (std::size_t c = up.find_first(); c != bitset::npos; c = up.find_next(c)) codes.push_back(hf::ackermann(c));
    atom_of.emplace(hf::make_set(codes), k);
  }
  std::set<hf::value> y;
  for (hf::value h : hf::members(eg(t.Gamma))) {
    auto f = atom_of.find(h);
    if (f == atom_of.end()) throw std::logic_error("Gamma member is not a generic of a minimal class");
    evaluator eh(up_closure_of_atom(P, f->second));
    bool agree = true;
    for (auto [a, n] : e) agree = agree && eh(t.g.at(a).at(n)) == eg(t.g.at(a).at(n));
    if (!agree) continue;
    for (hf::value z : hf::members(eh(x))) y.insert(z);
  }
  return hf::make_set(std::vector<hf::value>(y.begin(), y.end())) == eg(x);
}

}  // namespace symforce
