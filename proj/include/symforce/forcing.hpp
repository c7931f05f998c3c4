#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "symforce/formula.hpp"
#include "symforce/name.hpp"
#include "symforce/poset.hpp"

namespace symforce {

// tag -> finite list of names. Unbounded quantifiers range over these lists,
// an explicit approximation of class-sized quantification.
using universe_map = std::map<std::string, std::vector<name_id>>;

enum class forcing_mode { automatic, exhaustive, atomic };

inline const char* to_string(forcing_mode m) {
  switch (m) {
    case forcing_mode::exhaustive:
      return "exhaustive";
    case forcing_mode::atomic:
      return "atomic";
    default:
      return "automatic";
  }
}

// Forcing for closed formulas over a finite poset.
//
// exhaustive: the textbook recursion, one bitset over all conditions per
//   subformula; negation via "no extension forces", density via below-sets.
// atomic: the same recursion restricted to one representative per minimal
//   class. In a finite poset p forces phi iff every minimal condition below p
//   does, so this is exact; it is the only route for posets without an order
//   matrix, and the tests hold the two routes against each other.
//
// Memo tables are per engine; an engine is meant to be used by one thread.
class forcing_engine {
 public:
  explicit forcing_engine(poset_ptr P, universe_map U = {}, forcing_mode m = forcing_mode::automatic,
                          std::function<bool(name_id)> admit = {})
      : P_(std::move(P)), admit_(std::move(admit)) {
    mode_ = m == forcing_mode::automatic ? (P_->has_matrix() ? forcing_mode::exhaustive : forcing_mode::atomic) : m;
    if (mode_ == forcing_mode::exhaustive && !P_->has_matrix())
      throw budget_error("exhaustive forcing needs an order matrix; poset has " + std::to_string(P_->size()) +
                         " conditions");
    space_ = mode_ == forcing_mode::exhaustive ? P_->size() : P_->atoms().size();
    for (auto& [tag, names] : U) add_universe(tag, names);
  }

  void add_universe(const std::string& tag, const std::vector<name_id>& names) {
    std::vector<name_id> kept;
    for (name_id n : names) {
      if (poset_of(n) != P_->id()) throw input_error("universe " + tag + " contains a name over another poset");
      if (!admit_ || admit_(n)) kept.push_back(n);
    }
    universes_[universe_tags().id(tag)] = std::move(kept);
  }

  const std::vector<name_id>& universe(std::uint32_t tag) const {
    auto it = universes_.find(tag);
    if (it == universes_.end()) throw input_error("unknown universe tag: " + universe_tags().str(tag));
    return it->second;
  }

  std::size_t universe_size() const {
    std::size_t s = 0;
    for (auto& [t, v] : universes_) s += v.size();
    return s;
  }

  forcing_mode mode() const { return mode_; }
  const poset_ptr& P() const { return P_; }

  bool forces(cond_id p, formula_id f) {
    check_formula(f);
    const bitset& S = F(f);
    if (mode_ == forcing_mode::exhaustive) return S[p];
    return P_->atoms_below(p).is_subset_of(S);
  }

  // {p : p forces f}
  bitset forcing_set(formula_id f) {
    check_formula(f);
    const bitset& S = F(f);
    if (mode_ == forcing_mode::exhaustive) return S;
    bitset out(P_->size());
    for (cond_id p = 0; p < P_->size(); ++p)
      if (P_->atoms_below(p).is_subset_of(S)) out.set(p);
    return out;
  }

 private:
  void check_formula(formula_id f) {
    if (!is_closed(f)) throw input_error("formula has free variables");
    std::set<name_id> ns;
    names_in(f, ns);
    for (name_id n : ns)
      if (poset_of(n) != P_->id()) throw input_error("formula mentions a name over another poset");
  }

  bitset full() const { return bitset(space_).set(); }

  // the set of space elements below condition c
  const bitset& down(cond_id c) const {
    return mode_ == forcing_mode::exhaustive ? P_->below(c) : P_->atoms_below(c);
  }

  // exhaustive: {p : D is dense below p}; atomic: D itself
  bitset dense_closure(const bitset& D) const {
    if (mode_ == forcing_mode::atomic) return D;
    const std::size_t n = P_->size();
    bitset U(n);
    for (cond_id q = 0; q < n; ++q)
      if (P_->below(q).intersects(D)) U.set(q);
    bitset out(n);
    for (cond_id p = 0; p < n; ++p)
      if (P_->below(p).is_subset_of(U)) out.set(p);
    return out;
  }

  // exhaustive: {p : no q <= p lies in S}; atomic: complement
  bitset no_extension_in(const bitset& S) const {
    if (mode_ == forcing_mode::atomic) return ~S;
    bitset out(P_->size());
    for (cond_id p = 0; p < P_->size(); ++p)
      if (!P_->below(p).intersects(S)) out.set(p);
    return out;
  }

  // {p : every q <= p with q <= s lies in S}
  bitset guarded(cond_id s, const bitset& S) const {
    if (mode_ == forcing_mode::atomic) return ~P_->atoms_below(s) | S;
    bitset out(P_->size());
    bitset bad = P_->below(s) - S;
    for (cond_id p = 0; p < P_->size(); ++p)
      if (!P_->below(p).intersects(bad)) out.set(p);
    return out;
  }

  const bitset& EQ(name_id x, name_id y) {
    if (x > y) std::swap(x, y);
    auto key = std::make_pair(x, y);
    if (auto it = eq_.find(key); it != eq_.end()) return it->second;
    bitset r = x == y ? full() : SUB(x, y) & SUB(y, x);
    return eq_.emplace(key, std::move(r)).first->second;
  }

  // forcing x subset-of y
  bitset SUB(name_id x, name_id y) {
    bitset r = full();
    for (auto [s, z] : entries(x)) {
      r &= guarded(s, IN(z, y));
      if (r.none()) break;
    }
    return r;
  }

  const bitset& IN(name_id x, name_id y) {
    auto key = std::make_pair(x, y);
    if (auto it = in_.find(key); it != in_.end()) return it->second;
    bitset D(space_);
    for (auto [s, z] : entries(y)) D |= down(s) & EQ(z, x);
    bitset r = dense_closure(D);
    return in_.emplace(key, std::move(r)).first->second;
  }

  const bitset& F(formula_id f) {
    if (auto it = memo_.find(f); it != memo_.end()) return it->second;
    const formula_node x = fnode(f);
    bitset r;
    switch (x.o) {
      case op::eq:
        r = EQ(x.a.v, x.b.v);
        break;
      case op::in:
        r = IN(x.a.v, x.b.v);
        break;
      case op::neg:
        r = no_extension_in(F(x.f1));
        break;
      case op::conj:
        r = F(x.f1) & F(x.f2);
        break;
      case op::disj:
        r = dense_closure(F(x.f1) | F(x.f2));
        break;
      case op::implies:
        r = dense_closure(no_extension_in(F(x.f1)) | F(x.f2));
        break;
      case op::exists_in: {
        bitset D(space_);
        for (auto [s, z] : entries(x.a.v)) D |= down(s) & F(substitute(x.f1, x.var, z));
        r = dense_closure(D);
        break;
      }
      case op::forall_in: {
        r = full();
        for (auto [s, z] : entries(x.a.v)) r &= guarded(s, F(substitute(x.f1, x.var, z)));
        break;
      }
      case op::exists_u: {
        bitset D(space_);
        for (name_id z : universe(x.universe)) D |= F(substitute(x.f1, x.var, z));
        r = dense_closure(D);
        break;
      }
      case op::forall_u: {
        r = full();
        for (name_id z : universe(x.universe)) r &= F(substitute(x.f1, x.var, z));
        break;
      }
    }
    return memo_.emplace(f, std::move(r)).first->second;
  }

  struct pair_hash {
    std::size_t operator()(const std::pair<name_id, name_id>& p) const {
      return std::hash<std::uint64_t>{}((std::uint64_t(p.first) << 32) | p.second);
    }
  };

  poset_ptr P_;
  forcing_mode mode_;
  std::size_t space_ = 0;
  std::function<bool(name_id)> admit_;
  std::map<std::uint32_t, std::vector<name_id>> universes_;
  std::unordered_map<formula_id, bitset> memo_;
  std::unordered_map<std::pair<name_id, name_id>, bitset, pair_hash> eq_, in_;
};

// ---- semantics in the evaluated structure -------------------------------

class model_checker {
 public:
  model_checker(filter G, const forcing_engine& E) : ev_(std::move(G)), E_(E) {}

  bool holds(formula_id f) {
    if (auto it = memo_.find(f); it != memo_.end()) return it->second;
    const formula_node x = fnode(f);
    bool r = false;
    switch (x.o) {
      case op::eq:
        r = ev_(x.a.v) == ev_(x.b.v);
        break;
      case op::in:
        r = hf::contains(ev_(x.b.v), ev_(x.a.v));
        break;
      case op::neg:
        r = !holds(x.f1);
        break;
      case op::conj:
        r = holds(x.f1) && holds(x.f2);
        break;
      case op::disj:
        r = holds(x.f1) || holds(x.f2);
        break;
      case op::implies:
        r = !holds(x.f1) || holds(x.f2);
        break;
      case op::exists_in:
        for (auto [s, z] : entries(x.a.v))
          if (ev_.G().contains(s) && holds(substitute(x.f1, x.var, z))) {
            r = true;
            break;
          }
        break;
      case op::forall_in:
        r = true;
        for (auto [s, z] : entries(x.a.v))
          if (ev_.G().contains(s) && !holds(substitute(x.f1, x.var, z))) {
            r = false;
            break;
          }
        break;
      case op::exists_u:
        for (name_id z : E_.universe(x.universe))
          if (holds(substitute(x.f1, x.var, z))) {
            r = true;
            break;
          }
        break;
      case op::forall_u:
        r = true;
        for (name_id z : E_.universe(x.universe))
          if (!holds(substitute(x.f1, x.var, z))) {
            r = false;
            break;
          }
        break;
    }
    memo_.emplace(f, r);
    return r;
  }

 private:
  evaluator ev_;
  const forcing_engine& E_;
  std::unordered_map<formula_id, bool> memo_;
};

struct truth_violation {
  std::size_t generic;  // minimal class index
  bool forced;
  bool holds;
};

// For every generic filter G: (some p in G forces phi) iff phi holds in the
// evaluated structure. Returns the violations.
inline std::vector<truth_violation> truth_lemma_check(forcing_engine& E, formula_id phi) {
  std::vector<truth_violation> out;
  const bitset forced = E.forcing_set(phi);
  auto generics = generic_filters(E.P());
  for (std::size_t k = 0; k < generics.size(); ++k) {
    bool f = generics[k].members.intersects(forced);
    model_checker mc(generics[k], E);
    bool h = mc.holds(phi);
    if (f != h) out.push_back({k, f, h});
  }
  return out;
}

// ---- names by definition --------------------------------------------------

struct definition_result {
  name_id y;
  std::vector<name_id> params;  // names occurring in the defining formula
};

// Given p forcing "exactly one y in witnesses satisfies phi(y)", returns
// y = {(q, z) : z in children, q forces "for all y (phi(y) -> z in y)"}.
inline definition_result name_by_formula(forcing_engine& E, cond_id p, formula_id phi, std::uint32_t var,
                                         const std::vector<name_id>& witnesses, const std::vector<name_id>& children) {
  static std::atomic<std::uint32_t> counter{0};
  const std::string tag = "#definition" + std::to_string(counter++);
  E.add_universe(tag, witnesses);
  const auto utag = universe_tags().id(tag);
  const auto& W = E.universe(utag);
  if (!E.forces(p, f_exists_u(var, utag, phi)))
    throw precondition_error("no witness in the universe is forced to satisfy the formula");
  for (std::size_t i = 0; i < W.size(); ++i)
    for (std::size_t j = i + 1; j < W.size(); ++j) {
      formula_id both = f_and(f_and(substitute(phi, var, W[i]), substitute(phi, var, W[j])),
                              f_not(f_eq(W[i], W[j])));
      if (!E.forces(p, f_not(both)))
        throw precondition_error("uniqueness fails: witnesses #" + std::to_string(W[i]) + " and #" +
                                 std::to_string(W[j]) + " can both satisfy the formula while differing");
    }
  std::vector<entry> es;
  for (name_id z : children) {
    if (poset_of(z) != E.P()->id()) throw input_error("child candidate over another poset");
    formula_id body = f_forall_u(var, utag, f_implies(phi, f_in(term::name(z), term::var(var))));
    bitset S = E.forcing_set(body);
    for (cond_id q = 0; q < E.P()->size(); ++q)
      if (S[q]) es.emplace_back(q, z);
  }
  name_id y = make_name(*E.P(), std::move(es));
  if (!E.forces(p, substitute(phi, var, y)))
    throw budget_error("child candidates too small: the defined name does not satisfy the formula");
  std::set<name_id> ps;
  names_in(phi, ps);
  return {y, std::vector<name_id>(ps.begin(), ps.end())};
}

}  // namespace symforce
