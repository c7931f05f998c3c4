#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "symforce/forcing.hpp"
#include "symforce/name.hpp"
#include "symforce/symmetry.hpp"

namespace symforce {

// A stage entry (condition, automorphism or generator name of stage b) is
// stored by what it denotes under each generic filter of the prior level:
// one value per minimal class of that level. Names equal up to forced
// equality share a representative; the catalogs keep one per function.
using stage_fn = std::vector<std::uint32_t>;

struct stage_fn_hash {
  std::size_t operator()(const stage_fn& f) const {
    std::size_t h = f.size();
    for (auto x : f) hash_combine(h, x);
    return h;
  }
};

class fn_catalog {
 public:
  std::pair<std::uint32_t, bool> add(const stage_fn& f) {
    auto [it, fresh] = index_.emplace(f, static_cast<std::uint32_t>(items_.size()));
    if (fresh) items_.push_back(f);
    return {it->second, fresh};
  }
  std::optional<std::uint32_t> find(const stage_fn& f) const {
    auto it = index_.find(f);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  const stage_fn& operator[](std::uint32_t i) const { return items_[i]; }
  std::uint32_t size() const { return static_cast<std::uint32_t>(items_.size()); }
  static bool constant(const stage_fn& f) {
    return std::all_of(f.begin(), f.end(), [&](auto x) { return x == f.front(); });
  }

 private:
  std::vector<stage_fn> items_;
  std::unordered_map<stage_fn, std::uint32_t, stage_fn_hash> index_;
};

// What a stage adds on top of the prior level: a system T whose conditions
// may carry indices into a list of prior-level names (the collapse target),
// read as those names' values. index_names empty means T is a check-name.
struct iterand_spec {
  std::string label;
  system_ptr T;
  std::vector<name_id> index_names;
  // rewrite every index i stored in condition o of T as f[i]
  std::function<cond_id(cond_id, const std::vector<std::uint32_t>&)> map_indices;
  std::vector<stage_fn> perm_seeds, cond_seeds, gen_seeds;
  bool all_conditions = false;  // every function from minimal classes to conditions
  std::size_t budget = 50000;
};

struct stage_info {
  std::uint32_t stage = 0;
  system_ptr below;
  iterand_spec spec;
  std::vector<std::uint32_t> ginv;                   // inverses in the prior group
  std::vector<std::vector<std::uint32_t>> atom_act;  // [g][k]: class of g(atom k)
  std::vector<std::vector<hf::value>> index_values;  // [k][i]
  std::vector<std::vector<cond_id>> canon;           // [k][o]: o with indices replaced by value representatives
  std::vector<std::vector<cond_id>> relabel;         // [g][o]: o with indices moved along g
  std::vector<std::vector<std::uint32_t>> tmul;      // T group multiplication
  std::vector<std::uint32_t> tinv;
  std::vector<std::vector<std::uint32_t>> tconj;     // [h][filter]: filter index of h H h^-1
  std::vector<std::uint32_t> basis;                  // perm catalog ids generating the catalog
  fn_catalog conds, perms, gens;
  std::vector<char> cond_nontrivial, perm_nontrivial, gen_nontrivial;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> filters;  // (prior filter, generator name)

  std::size_t atoms() const { return below->P->atoms().size(); }
  const symmetric_system& T() const { return *spec.T; }

  // the prior-level automorphism g applied to a condition name
  stage_fn act_cond(std::uint32_t g, const stage_fn& f) const {
    stage_fn out(f.size());
    const auto& back = atom_act[ginv[g]];
    for (std::size_t k = 0; k < f.size(); ++k) out[k] = relabel[g][f[back[k]]];
    return out;
  }
  // the same for names of ground objects (group elements, filter generators)
  stage_fn act_plain(std::uint32_t g, const stage_fn& f) const {
    stage_fn out(f.size());
    const auto& back = atom_act[ginv[g]];
    for (std::size_t k = 0; k < f.size(); ++k) out[k] = f[back[k]];
    return out;
  }
  // sigma(q), generic-wise
  stage_fn apply_perm(std::uint32_t s, const stage_fn& f) const {
    stage_fn out(f.size());
    const auto& sf = perms[s];
    for (std::size_t k = 0; k < f.size(); ++k) out[k] = T().group[sf[k]].cond_map[f[k]];
    return out;
  }
  stage_fn multiply(const stage_fn& a, const stage_fn& b) const {
    stage_fn out(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) out[k] = tmul[a[k]][b[k]];
    return out;
  }
  bool obj_leq(std::size_t k, cond_id a, cond_id b) const { return T().P->leq(canon[k][a], canon[k][b]); }
};

namespace detail {

inline std::vector<std::int32_t> prefix_cells(const poset& P, cond_id p) {
  const condition& c = P.at(p);
  if (c.k == condition::kind::iter) return c.cells;
  return {static_cast<std::int32_t>(p)};
}

inline std::vector<std::uint32_t> prefix_stages(const symmetric_system& S, std::uint32_t g) {
  if (S.group[g].k == automorphism::kind::iter_seq) return S.group[g].stages;
  return {g};
}

inline std::vector<std::uint32_t> prefix_filter(const symmetric_system& S, std::uint32_t i) {
  if (!S.filters[i].stages.empty()) return S.filters[i].stages;
  return {i};
}

}  // namespace detail

inline std::shared_ptr<stage_info> make_stage(system_ptr below, std::uint32_t stage, iterand_spec spec) {
  if (!spec.T) throw input_error("iterand without a system");
  auto st = std::make_shared<stage_info>();
  st->stage = stage;
  st->below = below;
  st->spec = std::move(spec);
  const std::string where = "stage " + std::to_string(stage) + ": ";
  const poset& P = *below->P;
  const symmetric_system& T = *st->spec.T;
  const std::size_t A = P.atoms().size();
  const std::size_t G = below->group.size();
  const std::size_t nobj = T.P->size();
  const std::size_t budget = search_budget(st->spec.budget);

  st->ginv.resize(G);
  for (std::uint32_t g = 0; g < G; ++g) {
    auto inv = below->inverse(g);
    if (!inv) throw input_error(where + "prior group is not closed under inverses");
    st->ginv[g] = *inv;
  }
  st->atom_act.assign(G, std::vector<std::uint32_t>(A));
  for (std::uint32_t g = 0; g < G; ++g)
    for (std::size_t k = 0; k < A; ++k) {
      int c = P.minimal_class(below->group[g].cond_map[P.atoms()[k]]);
      if (c < 0) throw input_error(where + "automorphism does not preserve minimal classes");
      st->atom_act[g][k] = static_cast<std::uint32_t>(c);
    }

  // index values, per generic filter of the prior level
  const auto& L = st->spec.index_names;
  if (!L.empty() && !st->spec.map_indices) throw input_error(where + "index names without an index rewrite");
  for (name_id n : L)
    if (poset_of(n) != P.id()) throw input_error(where + "index name over another poset");
  st->index_values.assign(A, {});
  st->canon.assign(A, std::vector<cond_id>(nobj));
  for (std::size_t k = 0; k < A; ++k) {
    evaluator ev(up_closure_of_atom(below->P, k));
    std::vector<std::uint32_t> rep(L.size());
    for (std::size_t i = 0; i < L.size(); ++i) {
      st->index_values[k].push_back(ev(L[i]));
      rep[i] = static_cast<std::uint32_t>(i);
      for (std::size_t j = 0; j < i; ++j)
        if (st->index_values[k][j] == st->index_values[k][i]) {
          rep[i] = static_cast<std::uint32_t>(j);
          break;
        }
    }
    for (cond_id o = 0; o < nobj; ++o) st->canon[k][o] = L.empty() ? o : st->spec.map_indices(o, rep);
  }
  // sym(T) must be the whole prior group: the index list is closed under it
  std::map<name_id, std::uint32_t> pos;
  for (std::uint32_t i = 0; i < L.size(); ++i) pos.emplace(L[i], i);
  st->relabel.assign(G, std::vector<cond_id>(nobj));
  for (std::uint32_t g = 0; g < G; ++g) {
    std::vector<std::uint32_t> rel(L.size());
    for (std::size_t i = 0; i < L.size(); ++i) {
      auto it = pos.find(below->act(g, L[i]));
      if (it == pos.end())
        throw precondition_error(where + "the iterand name is not fixed by " + below->group[g].label +
                                 " (index list not closed)");
      rel[i] = it->second;
    }
    for (cond_id o = 0; o < nobj; ++o) st->relabel[g][o] = L.empty() ? o : st->spec.map_indices(o, rel);
  }

  const std::size_t H = T.group.size();
  st->tmul.assign(H, std::vector<std::uint32_t>(H));
  st->tinv.resize(H);
  for (std::uint32_t a = 0; a < H; ++a) {
    auto inv = T.inverse(a);
    if (!inv) throw input_error(where + "iterand group is not closed under inverses");
    st->tinv[a] = *inv;
    for (std::uint32_t b = 0; b < H; ++b) {
      auto c = T.compose(a, b);
      if (!c) throw input_error(where + "iterand group is not closed");
      st->tmul[a][b] = *c;
    }
  }
  std::unordered_map<bitset, std::uint32_t> by_members;
  for (std::uint32_t i = 0; i < T.filters.size(); ++i) by_members.emplace(T.filters[i].members, i);
  st->tconj.assign(H, std::vector<std::uint32_t>(T.filters.size()));
  for (std::uint32_t h = 0; h < H; ++h)
    for (std::uint32_t i = 0; i < T.filters.size(); ++i) {
      auto it = by_members.find(conjugate_members(T, h, T.filters[i].members));
      if (it == by_members.end()) throw input_error(where + "iterand filter generators not closed under conjugation");
      st->tconj[h][i] = it->second;
    }

  // automorphism names: the group generated by the constants and the seeds
  // (seeds closed under the prior group first)
  auto& perms = st->perms;
  for (std::uint32_t h = 0; h < H; ++h) perms.add(stage_fn(A, h));
  std::vector<stage_fn> base;
  for (auto h : T.generators) base.push_back(stage_fn(A, h));
  {
    fn_catalog seen;
    std::deque<stage_fn> q(st->spec.perm_seeds.begin(), st->spec.perm_seeds.end());
    while (!q.empty()) {
      stage_fn f = q.front();
      q.pop_front();
      if (f.size() != A) throw input_error(where + "automorphism seed has the wrong length");
      if (!seen.add(f).second) continue;
      base.push_back(f);
      for (auto g : below->generators) q.push_back(st->act_plain(g, f));
    }
  }
  for (const auto& b : base) st->basis.push_back(perms.add(b).first);
  for (std::uint32_t i = 0; i < perms.size(); ++i) {
    for (const auto& b : base) {
      perms.add(st->multiply(perms[i], b));
      if (perms.size() > budget) throw budget_error(where + "automorphism catalog exceeds budget");
    }
  }
  std::sort(st->basis.begin(), st->basis.end());
  st->basis.erase(std::unique(st->basis.begin(), st->basis.end()), st->basis.end());

  // condition names: closed under the new group
  auto& conds = st->conds;
  for (cond_id o = 0; o < nobj; ++o) conds.add(stage_fn(A, o));
  if (st->spec.all_conditions) {
    double total = 1;
    for (std::size_t k = 0; k < A; ++k) total *= static_cast<double>(nobj);
    if (total > static_cast<double>(budget)) throw budget_error(where + "full condition catalog exceeds budget");
    stage_fn f(A, 0);
    while (true) {
      conds.add(f);
      std::size_t k = 0;
      while (k < A && ++f[k] == nobj) f[k++] = 0;
      if (k == A) break;
    }
  }
  for (const auto& f : st->spec.cond_seeds) {
    if (f.size() != A) throw input_error(where + "condition seed has the wrong length");
    conds.add(f);
  }
  for (std::uint32_t i = 0; i < conds.size(); ++i) {
    for (auto g : below->generators) conds.add(st->act_cond(g, conds[i]));
    for (auto s : st->basis) conds.add(st->apply_perm(s, conds[i]));
    if (conds.size() > budget) throw budget_error(where + "condition catalog exceeds budget");
  }

  // generator names: closed under the prior group and conjugation
  auto& gens = st->gens;
  for (std::uint32_t i = 0; i < T.filters.size(); ++i) gens.add(stage_fn(A, i));
  for (const auto& f : st->spec.gen_seeds) {
    if (f.size() != A) throw input_error(where + "generator seed has the wrong length");
    gens.add(f);
  }
  for (std::uint32_t i = 0; i < gens.size(); ++i) {
    for (auto g : below->generators) gens.add(st->act_plain(g, gens[i]));
    for (auto s : st->basis) {
      stage_fn c(A);
      for (std::size_t k = 0; k < A; ++k) c[k] = st->tconj[perms[s][k]][gens[i][k]];
      gens.add(c);
    }
    if (gens.size() > budget) throw budget_error(where + "generator catalog exceeds budget");
  }

  st->cond_nontrivial.resize(conds.size());
  for (std::uint32_t c = 0; c < conds.size(); ++c) {
    bool nt = false;
    for (std::size_t k = 0; k < A && !nt; ++k) nt = st->canon[k][conds[c][k]] != T.P->top();
    st->cond_nontrivial[c] = nt;
  }
  st->perm_nontrivial.resize(perms.size());
  for (std::uint32_t s = 0; s < perms.size(); ++s)
    st->perm_nontrivial[s] = std::any_of(perms[s].begin(), perms[s].end(), [](auto h) { return h != 0; });
  st->gen_nontrivial.resize(gens.size());
  for (std::uint32_t i = 0; i < gens.size(); ++i)
    st->gen_nontrivial[i] = std::any_of(gens[i].begin(), gens[i].end(),
                                        [&](auto f) { return !T.filters[f].members.all(); });

  // generator pairs (H0, K) with H0 <= sym(K)
  for (std::uint32_t i = 0; i < below->filters.size(); ++i) {
    const bitset& M = below->filters[i].members;
    for (std::uint32_t K = 0; K < gens.size(); ++K) {
      bool ok = true;
      for (std::size_t h = M.find_first(); h != bitset::npos && ok; h = M.find_next(h))
        ok = st->act_plain(static_cast<std::uint32_t>(h), gens[K]) == gens[K];
      if (ok) st->filters.emplace_back(i, K);
    }
  }
  return st;
}

// S_{b+1} = S_b * T_b with conditions (p, c) at index p * |conds| + c and
// group elements (g, s) at index g * |perms| + s.
inline std::shared_ptr<symmetric_system> make_level(std::shared_ptr<const stage_info> st, truncation_config cfg) {
  const symmetric_system& B = *st->below;
  const poset& P = *B.P;
  const symmetric_system& T = st->T();
  const std::uint32_t nc = st->conds.size(), np = st->perms.size();
  const std::size_t A = P.atoms().size();
  const std::size_t n = P.size() * nc;
  if (n > search_budget(4'000'000)) throw budget_error("stage " + std::to_string(st->stage) + ": poset too large");

  poset::spec ps;
  ps.variant = "iteration";
  ps.config = {{"stages", st->stage + 1}, {"prior", P.describe()}, {"iterand", st->spec.label}};
  ps.conditions.reserve(n);
  for (cond_id p = 0; p < P.size(); ++p) {
    auto pre = detail::prefix_cells(P, p);
    for (std::uint32_t c = 0; c < nc; ++c) {
      condition x{condition::kind::iter, pre};
      x.cells.push_back(static_cast<std::int32_t>(c));
      ps.conditions.push_back(std::move(x));
    }
  }
  const stage_info* raw = st.get();
  ps.leq = [st, raw, nc](cond_id q, cond_id p) {
    const poset& Pb = *raw->below->P;
    cond_id qa = q / nc, pa = p / nc;
    if (!Pb.leq(qa, pa)) return false;
    const auto& fq = raw->conds[q % nc];
    const auto& fp = raw->conds[p % nc];
    const bitset& ab = Pb.atoms_below(qa);
    for (std::size_t k = ab.find_first(); k != bitset::npos; k = ab.find_next(k))
      if (!raw->obj_leq(k, fq[k], fp[k])) return false;
    return true;
  };
  std::vector<cond_id> atoms;
  for (std::size_t k = 0; k < A; ++k) {
    std::set<cond_id> seen;
    for (cond_id o : T.P->atoms()) {
      if (!seen.insert(st->canon[k][o]).second) continue;
      atoms.push_back(P.atoms()[k] * nc + *st->conds.find(stage_fn(A, o)));
    }
  }
  ps.atoms = std::move(atoms);
  ps.literal = [st, raw, nc](cond_id p) {
    json j = raw->below->P->literal(p / nc);
    if (raw->stage == 1) j = json::array({j});
    j.push_back(p % nc);
    return j;
  };

  auto S = std::make_shared<symmetric_system>();
  S->P = poset::make(std::move(ps));
  S->cfg = cfg;
  S->width = 0;
  S->stage_count = st->stage + 1;
  for (std::uint32_t g = 0; g < B.group.size(); ++g) {
    const auto& bm = B.group[g].cond_map;
    std::vector<stage_fn> moved(nc);
    for (std::uint32_t c = 0; c < nc; ++c) moved[c] = st->act_cond(g, st->conds[c]);
    for (std::uint32_t s = 0; s < np; ++s) {
      automorphism a;
      a.k = automorphism::kind::iter_seq;
      a.stages = detail::prefix_stages(B, g);
      a.stages.push_back(s);
      a.cond_map.resize(n);
      std::vector<cond_id> cmap(nc);
      for (std::uint32_t c = 0; c < nc; ++c) {
        auto idx = st->conds.find(st->apply_perm(s, moved[c]));
        if (!idx) throw std::logic_error("condition catalog not closed under the group");
        cmap[c] = *idx;
      }
      for (cond_id p = 0; p < P.size(); ++p)
        for (std::uint32_t c = 0; c < nc; ++c) a.cond_map[p * nc + c] = bm[p] * nc + cmap[c];
      const auto& sf = st->perms[s];
      std::string sl = fn_catalog::constant(sf) ? T.group[sf[0]].label : "s" + std::to_string(s);
      a.label = B.group[g].label + "|" + sl;
      S->group.push_back(std::move(a));
    }
  }
  for (auto g : B.generators) S->generators.push_back(g * np);
  for (auto s : st->basis)
    if (s != 0) S->generators.push_back(s);
  S->index_group();

  S->coords = [st, raw, nc](cond_id p, std::set<coord>& out) {
    raw->below->coords(p / nc, out);
    std::set<coord> inner;
    for (auto o : raw->conds[p % nc]) raw->T().coords(o, inner);
    for (auto [s, c] : inner) out.insert({raw->stage, c});
  };
  S->fixes_coord = [st, raw, np](std::uint32_t g, coord c) {
    if (c.first < raw->stage) return raw->below->fixes_coord(g / np, c);
    if (c.first > raw->stage) return true;
    for (auto h : raw->perms[g % np])
      if (!raw->T().fixes_coord(h, {0, c.second})) return false;
    return true;
  };

  struct ranked {
    std::size_t key;
    filter_generator f;
  };
  std::vector<ranked> fs;
  for (auto [i, K] : st->filters) {
    const auto& lower = B.filters[i];
    const auto& kf = st->gens[K];
    filter_generator f;
    f.stages = detail::prefix_filter(B, i);
    f.stages.push_back(K);
    f.e = lower.e;
    bool constant = fn_catalog::constant(kf) && (lower.stages.empty() || lower.label.rfind("fix", 0) == 0);
    if (fn_catalog::constant(kf))
      for (auto [s, c] : T.filters[kf[0]].e) f.e.push_back({st->stage, c});
    std::sort(f.e.begin(), f.e.end());
    f.label = constant ? "fix" + coords_to_json(f.e, false).dump() : "gen" + json(f.stages).dump();
    f.members = bitset(S->group.size());
    for (std::uint32_t g = 0; g < B.group.size(); ++g) {
      if (!lower.members[g]) continue;
      for (std::uint32_t s = 0; s < np; ++s) {
        bool ok = true;
        for (std::size_t k = 0; k < A && ok; ++k) ok = T.filters[kf[k]].members[st->perms[s][k]];
        if (ok) f.members.set(g * np + s);
      }
    }
    fs.push_back({(constant ? 0 : 1000000) + f.e.size() * 1000 + fs.size(), std::move(f)});
  }
  std::stable_sort(fs.begin(), fs.end(), [](auto& a, auto& b) { return a.key < b.key; });
  for (auto& r : fs) S->filters.push_back(std::move(r.f));
  return S;
}

// A finite-support iteration of finite depth: levels[j] covers stages 0..j.
class iteration {
 public:
  explicit iteration(system_ptr base) {
    levels_.push_back(std::move(base));
    stages_.push_back(nullptr);
    index_filters(0);
  }

  void extend(iterand_spec spec) {
    const auto j = static_cast<std::uint32_t>(levels_.size());
    auto st = make_stage(levels_.back(), j, std::move(spec));
    auto S = make_level(st, levels_.back()->cfg);
    stages_.push_back(std::move(st));
    levels_.push_back(std::move(S));
    index_filters(j);
  }

  std::size_t depth() const { return levels_.size(); }
  const system_ptr& level(std::size_t j) const { return levels_.at(j); }
  const system_ptr& top() const { return levels_.back(); }
  const stage_info& stage(std::size_t j) const {
    if (j == 0 || j >= stages_.size()) throw input_error("stage " + std::to_string(j) + " has no iterand");
    return *stages_[j];
  }

  // ---- sequences ----

  cond_id restrict_cond(std::size_t from, cond_id p, std::size_t to) const {
    for (std::size_t j = from; j > to; --j) p /= stages_[j]->conds.size();
    return p;
  }
  cond_id pad_cond(std::size_t from, cond_id p, std::size_t to) const {
    for (std::size_t j = from + 1; j <= to; ++j) p *= stages_[j]->conds.size();
    return p;
  }
  std::uint32_t restrict_group(std::size_t from, std::uint32_t g, std::size_t to) const {
    for (std::size_t j = from; j > to; --j) g /= stages_[j]->perms.size();
    return g;
  }
  std::uint32_t pad_group(std::size_t from, std::uint32_t g, std::size_t to) const {
    for (std::size_t j = from + 1; j <= to; ++j) g *= stages_[j]->perms.size();
    return g;
  }
  std::uint32_t restrict_filter(std::size_t from, std::uint32_t i, std::size_t to) const {
    for (std::size_t j = from; j > to; --j) i = stages_[j]->filters[filter_pair(j, i)].first;
    return i;
  }
  // position of level-j filter i in the stage's pair list
  std::uint32_t filter_pair(std::size_t j, std::uint32_t i) const { return filter_pos_[j][i]; }

  // stage b entry of a level-j condition: a base condition for b = 0, else a catalog id
  std::uint32_t cond_entry(std::size_t j, cond_id p, std::size_t b) const {
    p = restrict_cond(j, p, b);
    return b == 0 ? p : p % stages_[b]->conds.size();
  }
  std::uint32_t group_entry(std::size_t j, std::uint32_t g, std::size_t b) const {
    g = restrict_group(j, g, b);
    return b == 0 ? g : g % stages_[b]->perms.size();
  }
  std::uint32_t filter_entry(std::size_t j, std::uint32_t i, std::size_t b) const {
    i = restrict_filter(j, i, b);
    return b == 0 ? i : stages_[b]->filters[filter_pair(b, i)].second;
  }
  std::optional<std::uint32_t> find_filter(std::size_t j, std::uint32_t lower, std::uint32_t K) const {
    auto it = filter_lookup_[j].find({lower, K});
    if (it == filter_lookup_[j].end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::uint32_t> find_base_filter(const std::vector<coord>& e) const {
    for (std::uint32_t i = 0; i < levels_[0]->filters.size(); ++i)
      if (levels_[0]->filters[i].e == e) return i;
    return std::nullopt;
  }

  // ---- supports (cached path) ----

  std::set<std::uint32_t> cond_support(std::size_t j, cond_id p) const {
    std::set<std::uint32_t> out;
    if (cond_entry(j, p, 0) != levels_[0]->P->top()) out.insert(0);
    for (std::size_t b = 1; b <= j; ++b)
      if (stages_[b]->cond_nontrivial[cond_entry(j, p, b)]) out.insert(static_cast<std::uint32_t>(b));
    return out;
  }
  std::set<std::uint32_t> group_support(std::size_t j, std::uint32_t g) const {
    std::set<std::uint32_t> out;
    if (group_entry(j, g, 0) != 0) out.insert(0);
    for (std::size_t b = 1; b <= j; ++b)
      if (stages_[b]->perm_nontrivial[group_entry(j, g, b)]) out.insert(static_cast<std::uint32_t>(b));
    return out;
  }
  std::set<std::uint32_t> filter_support(std::size_t j, std::uint32_t i) const {
    std::set<std::uint32_t> out;
    if (!levels_[0]->filters[filter_entry(j, i, 0)].members.all()) out.insert(0);
    for (std::size_t b = 1; b <= j; ++b)
      if (stages_[b]->gen_nontrivial[filter_entry(j, i, b)]) out.insert(static_cast<std::uint32_t>(b));
    return out;
  }

  // ---- stage entries as names over the prior level ----

  // mixed name denoting code[k] under the generic filter of minimal class k
  name_id mixed_name(std::size_t b, const std::vector<hf::value>& code) const {
    const poset& P = *stages_[b]->below->P;
    std::vector<entry> es;
    for (std::size_t k = 0; k < code.size(); ++k)
      for (hf::value w : hf::members(code[k])) es.emplace_back(P.atoms()[k], check_name(P, w));
    return make_name(P, std::move(es));
  }
  // the condition name: its value is the code of the denoted stage condition
  name_id cond_name(std::size_t b, std::uint32_t c) const {
    const auto& st = *stages_[b];
    std::vector<hf::value> code;
    for (std::size_t k = 0; k < st.atoms(); ++k) code.push_back(hf::ackermann(st.canon[k][st.conds[c][k]]));
    return mixed_name(b, code);
  }
  name_id perm_name(std::size_t b, std::uint32_t s) const {
    std::vector<hf::value> code;
    for (auto h : stages_[b]->perms[s]) code.push_back(hf::ackermann(h));
    return mixed_name(b, code);
  }
  name_id gen_name(std::size_t b, std::uint32_t K) const {
    const auto& st = *stages_[b];
    std::vector<hf::value> code;
    for (auto f : st.gens[K]) {
      std::vector<hf::value> ms;
      const bitset& M = st.T().filters[f].members;
      for (std::size_t h = M.find_first(); h != bitset::npos; h = M.find_next(h)) ms.push_back(hf::ackermann(h));
      code.push_back(hf::make_set(ms));
    }
    return mixed_name(b, code);
  }

  // ---- formulas of the recursive definitions ----

  // (pi0, s0) o (pi1, s1) = (pi0 o pi1, s0 o pi0(s1))
  std::uint32_t compose_formula(std::size_t j, std::uint32_t a, std::uint32_t b) const {
    if (j == 0) {
      auto c = levels_[0]->compose(a, b);
      if (!c) throw input_error("base group not closed");
      return *c;
    }
    const auto& st = *stages_[j];
    const std::uint32_t np = st.perms.size();
    std::uint32_t ga = a / np, gb = b / np;
    stage_fn moved = st.act_plain(ga, st.perms[b % np]);
    auto s = st.perms.find(st.multiply(st.perms[a % np], moved));
    if (!s) throw std::logic_error("automorphism catalog not closed under composition");
    return compose_formula(j - 1, ga, gb) * np + *s;
  }

  // (pi, s)^-1 = (pi^-1, pi^-1(s^-1))
  std::uint32_t inverse_formula(std::size_t j, std::uint32_t a) const {
    if (j == 0) {
      auto c = levels_[0]->inverse(a);
      if (!c) throw input_error("base group not closed under inverses");
      return *c;
    }
    const auto& st = *stages_[j];
    const std::uint32_t np = st.perms.size();
    std::uint32_t g = a / np;
    stage_fn t(st.atoms());
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = st.tinv[st.perms[a % np][k]];
#ifndef SYMFORCE_FAULTY_INVERSE
    t = st.act_plain(st.ginv[g], t);
#endif
    auto s = st.perms.find(t);
    if (!s) throw std::logic_error("automorphism catalog not closed under inverses");
    return inverse_formula(j - 1, g) * np + *s;
  }

  // the hypothesis of the conjugation formula: H|b <= sym((pi|b)^-1(s_b^-1)) for every stage b >= 1
  bool conjugation_hypothesis(std::size_t j, std::uint32_t pi, std::uint32_t H) const {
    for (std::size_t b = 1; b <= j; ++b) {
      const auto& st = *stages_[b];
      std::uint32_t pr = restrict_group(j, pi, b);
      std::uint32_t s = pr % st.perms.size();
      std::uint32_t g = pr / st.perms.size();
      stage_fn t(st.atoms());
      for (std::size_t k = 0; k < t.size(); ++k) t[k] = st.tinv[st.perms[s][k]];
      t = st.act_plain(st.ginv[g], t);
      const bitset& M = levels_[b - 1]->filters[restrict_filter(j, H, b - 1)].members;
      for (std::size_t h = M.find_first(); h != bitset::npos; h = M.find_next(h))
        if (st.act_plain(static_cast<std::uint32_t>(h), t) != t) return false;
    }
    return true;
  }

  // pi H pi^-1 = < s_b (pi|b)(H_b) s_b^-1 >; nullopt if the result is not a listed generator
  std::optional<std::uint32_t> conjugate_formula(std::size_t j, std::uint32_t pi, std::uint32_t H) const {
    if (j == 0) {
      const auto& S = *levels_[0];
      if (S.group[pi].k != automorphism::kind::base_perm) {
        // a non-product base: conjugate by members
        bitset c = conjugate_members(S, pi, S.filters[H].members);
        for (std::uint32_t i = 0; i < S.filters.size(); ++i)
          if (S.filters[i].members == c) return i;
        return std::nullopt;
      }
      return find_base_filter(conjugate_fix(S.group[pi].base, S.filters[H].e));
    }
    const auto& st = *stages_[j];
    const std::uint32_t np = st.perms.size();
    std::uint32_t g = pi / np;
    const auto& [lower, K] = st.filters[filter_pair(j, H)];
    auto low = conjugate_formula(j - 1, g, lower);
    if (!low) return std::nullopt;
    stage_fn moved = st.act_plain(g, st.gens[K]);
    stage_fn c(st.atoms());
    for (std::size_t k = 0; k < c.size(); ++k) c[k] = st.tconj[st.perms[pi % np][k]][moved[k]];
    auto Kc = st.gens.find(c);
    if (!Kc) return std::nullopt;
    return find_filter(j, *low, *Kc);
  }

  // pointwise intersection of two generators, as a listed generator
  std::optional<std::uint32_t> intersect_formula(std::size_t j, std::uint32_t H, std::uint32_t K) const {
    if (j == 0) {
      const auto& S = *levels_[0];
      bitset m = S.filters[H].members & S.filters[K].members;
      std::vector<coord> e = S.filters[H].e;
      e.insert(e.end(), S.filters[K].e.begin(), S.filters[K].e.end());
      std::sort(e.begin(), e.end());
      e.erase(std::unique(e.begin(), e.end()), e.end());
      if (auto i = find_base_filter(e)) return i;
      for (std::uint32_t i = 0; i < S.filters.size(); ++i)
        if (S.filters[i].members == m) return i;
      return std::nullopt;
    }
    const auto& st = *stages_[j];
    const auto& [lh, kh] = st.filters[filter_pair(j, H)];
    const auto& [lk, kk] = st.filters[filter_pair(j, K)];
    auto low = intersect_formula(j - 1, lh, lk);
    if (!low) return std::nullopt;
    const auto& T = st.T();
    stage_fn c(st.atoms());
    for (std::size_t k = 0; k < c.size(); ++k) {
      bitset m = T.filters[st.gens[kh][k]].members & T.filters[st.gens[kk][k]].members;
      std::optional<std::uint32_t> hit;
      for (std::uint32_t i = 0; i < T.filters.size() && !hit; ++i)
        if (T.filters[i].members == m) hit = i;
      if (!hit) return std::nullopt;
      c[k] = *hit;
    }
    auto Kc = st.gens.find(c);
    if (!Kc) return std::nullopt;
    return find_filter(j, *low, *Kc);
  }

  // ---- condition identification ----

  // p ~ q: equal restrictions up to identification and the prior level forces
  // the last entries equal
  bool cond_equiv(std::size_t j, cond_id p, cond_id q) const {
    if (j == 0) return p == q;
    const auto& st = *stages_[j];
    const std::uint32_t nc = st.conds.size();
    if (!cond_equiv(j - 1, p / nc, q / nc)) return false;
    const bitset& ab = st.below->P->atoms_below(p / nc);
    const auto& fp = st.conds[p % nc];
    const auto& fq = st.conds[q % nc];
    for (std::size_t k = ab.find_first(); k != bitset::npos; k = ab.find_next(k))
      if (st.canon[k][fp[k]] != st.canon[k][fq[k]]) return false;
    return true;
  }

 private:
  void index_filters(std::size_t j) {
    filter_pos_.resize(j + 1);
    filter_lookup_.resize(j + 1);
    if (j == 0) return;
    const auto& S = *levels_[j];
    const auto& st = *stages_[j];
    std::map<std::vector<std::uint32_t>, std::uint32_t> pos;
    for (std::uint32_t i = 0; i < st.filters.size(); ++i) {
      auto pre = detail::prefix_filter(*st.below, st.filters[i].first);
      pre.push_back(st.filters[i].second);
      pos.emplace(pre, i);
    }
    filter_pos_[j].resize(S.filters.size());
    for (std::uint32_t i = 0; i < S.filters.size(); ++i) {
      std::uint32_t k = pos.at(S.filters[i].stages);
      filter_pos_[j][i] = k;
      filter_lookup_[j].emplace(st.filters[k], i);
    }
  }

  std::vector<system_ptr> levels_;
  std::vector<std::shared_ptr<const stage_info>> stages_;
  std::vector<std::vector<std::uint32_t>> filter_pos_;
  std::vector<std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t>> filter_lookup_;
};

// ---- operations -----------------------------------------------------------

// S * T-check: a ground iterand (sym(T-check) is the whole group automatically)
inline std::shared_ptr<iteration> two_step(system_ptr S, system_ptr T, bool all_conditions = false) {
  auto it = std::make_shared<iteration>(std::move(S));
  iterand_spec spec;
  spec.label = "check";
  spec.T = std::move(T);
  spec.all_conditions = all_conditions;
  it->extend(std::move(spec));
  return it;
}

using stage_builder = std::function<iterand_spec(const iteration&)>;

inline std::shared_ptr<iteration> fs_iteration(system_ptr base, const std::vector<stage_builder>& builders,
                                               std::size_t depth) {
  if (depth < 1) throw input_error("iteration depth must be >= 1");
  if (builders.size() + 1 < depth) throw input_error("not enough stage builders for the requested depth");
  auto it = std::make_shared<iteration>(std::move(base));
  for (std::size_t j = 1; j < depth; ++j) it->extend(builders[j - 1](*it));
  return it;
}

// slow-path supports, through the forcing relation on the prior levels
inline std::set<std::uint32_t> cond_support_slow(const iteration& it, std::size_t j, cond_id p) {
  std::set<std::uint32_t> out;
  const auto& base = *it.level(0)->P;
  const auto& cells = base.at(it.cond_entry(j, p, 0)).cells;
  if (base.at(0).cells != cells) out.insert(0);
  for (std::size_t b = 1; b <= j; ++b) {
    const auto& st = it.stage(b);
    forcing_engine E(st.below->P);
    name_id x = it.cond_name(b, it.cond_entry(j, p, b));
    name_id one = check_name(*st.below->P, hf::ackermann(st.T().P->top()));
    if (!E.forces(st.below->P->top(), f_eq(x, one))) out.insert(static_cast<std::uint32_t>(b));
  }
  return out;
}

inline std::set<std::uint32_t> group_support_slow(const iteration& it, std::size_t j, std::uint32_t g) {
  std::set<std::uint32_t> out;
  const auto& m = it.level(0)->group[it.group_entry(j, g, 0)].cond_map;
  for (cond_id p = 0; p < m.size(); ++p)
    if (m[p] != p) {
      out.insert(0);
      break;
    }
  for (std::size_t b = 1; b <= j; ++b) {
    const auto& st = it.stage(b);
    forcing_engine E(st.below->P);
    name_id x = it.perm_name(b, it.group_entry(j, g, b));
    name_id id = check_name(*st.below->P, hf::ackermann(0));
    if (!E.forces(st.below->P->top(), f_eq(x, id))) out.insert(static_cast<std::uint32_t>(b));
  }
  return out;
}

inline std::set<std::uint32_t> filter_support_slow(const iteration& it, std::size_t j, std::uint32_t i) {
  std::set<std::uint32_t> out;
  if (it.level(0)->filters[it.filter_entry(j, i, 0)].members.count() != it.level(0)->group.size()) out.insert(0);
  for (std::size_t b = 1; b <= j; ++b) {
    const auto& st = it.stage(b);
    forcing_engine E(st.below->P);
    name_id x = it.gen_name(b, it.filter_entry(j, i, b));
    std::vector<hf::value> all;
    for (std::size_t h = 0; h < st.T().group.size(); ++h) all.push_back(hf::ackermann(h));
    name_id full = check_name(*st.below->P, hf::make_set(all));
    if (!E.forces(st.below->P->top(), f_eq(x, full))) out.insert(static_cast<std::uint32_t>(b));
  }
  return out;
}

// p forces pi(x) = sigma(x) for every corpus name, given p|b forces pi(b) = sigma(b) at every stage
inline std::vector<name_id> equal_automorphism_check(const iteration& it, cond_id p, std::uint32_t pi,
                                                     std::uint32_t sigma, const std::vector<name_id>& corpus) {
  const std::size_t j = it.depth() - 1;
  if (it.group_entry(j, pi, 0) != it.group_entry(j, sigma, 0))
    throw precondition_error("stage 0: the automorphism entries differ");
  for (std::size_t b = 1; b <= j; ++b) {
    const auto& st = it.stage(b);
    const auto& fa = st.perms[it.group_entry(j, pi, b)];
    const auto& fb = st.perms[it.group_entry(j, sigma, b)];
    const bitset& ab = st.below->P->atoms_below(it.restrict_cond(j, p, b - 1));
    for (std::size_t k = ab.find_first(); k != bitset::npos; k = ab.find_next(k))
      if (fa[k] != fb[k])
        throw precondition_error("stage " + std::to_string(b) +
                                 ": the restriction does not force the automorphism entries equal");
  }
  const auto& S = *it.top();
  forcing_engine E(S.P);
  std::vector<name_id> bad;
  for (name_id x : corpus)
    if (!E.forces(p, f_eq(S.act(pi, x), S.act(sigma, x)))) bad.push_back(x);
  return bad;
}

// Limit clauses, with level j read as the formal limit of levels 0..j:
// order, action and generator membership are determined by restrictions.
struct limit_issue {
  std::string clause;
  std::string detail;
};

inline std::vector<limit_issue> limit_clause_check(const iteration& it, std::size_t j) {
  std::vector<limit_issue> out;
  const auto& S = *it.level(j);
  const poset& P = *S.P;
  for (cond_id p = 0; p < P.size(); ++p) {
    if (it.cond_support(j, p).size() > j + 1) out.push_back({"(a)", "support of " + std::to_string(p)});
    for (cond_id q = 0; q < P.size(); ++q) {
      bool all = true;
      for (std::size_t b = 0; b <= j && all; ++b)
        all = it.level(b)->P->leq(it.restrict_cond(j, q, b), it.restrict_cond(j, p, b));
      if (P.leq(q, p) != all) out.push_back({"(a)", std::to_string(q) + " vs " + std::to_string(p)});
    }
  }
  for (std::uint32_t g = 0; g < S.group.size(); ++g)
    for (cond_id p = 0; p < P.size(); ++p)
      for (std::size_t b = 0; b < j; ++b) {
        cond_id lhs = it.restrict_cond(j, S.group[g].cond_map[p], b);
        cond_id rhs = it.level(b)->group[it.restrict_group(j, g, b)].cond_map[it.restrict_cond(j, p, b)];
        if (lhs != rhs) out.push_back({"(b)", S.group[g].label + " on " + std::to_string(p)});
      }
  for (std::uint32_t i = 0; i < S.filters.size(); ++i)
    for (std::uint32_t g = 0; g < S.group.size(); ++g) {
      if (!S.filters[i].members[g]) continue;
      for (std::size_t b = 0; b < j; ++b)
        if (!it.level(b)->filters[it.restrict_filter(j, i, b)].members[it.restrict_group(j, g, b)])
          out.push_back({"(c)", S.filters[i].label + " member " + S.group[g].label});
    }
  return out;
}

// ---- factorization --------------------------------------------------------

// [x]_{a,d} for a in {0, d-1, d}. The result lives over the level holding
// stages < a (a trivial poset for a = 0); its value under G is a ground-coded
// name of the tail: a set of pairs (tail condition code, coded child).
class tail_projection {
 public:
  tail_projection(const iteration& it, std::size_t alpha) : it_(it), alpha_(alpha), d_(it.depth()) {
    if (alpha > d_) throw input_error("projection stage beyond the iteration depth");
    if (alpha != 0 && alpha + 1 != d_ && alpha != d_)
      throw input_error("tail projection supports a in {0, depth-1, depth}");
    if (alpha == 0) trivial_ = build_trivial();
  }

  const poset& base() const { return alpha_ == 0 ? *trivial_ : *it_.level(alpha_ - 1)->P; }
  poset_ptr base_ptr() const { return alpha_ == 0 ? trivial_ : it_.level(alpha_ - 1)->P; }

  // [p|[a,d)] as a name over the base
  name_id tail_code(cond_id p) const {
    const std::size_t top = d_ - 1;
    if (alpha_ == 0) return check_name(*trivial_, hf::ackermann(p));
    if (alpha_ == d_) return check_name(base(), hf::ackermann(0));
    return it_.cond_name(alpha_, it_.cond_entry(top, p, alpha_));
  }
  cond_id head(cond_id p) const {
    if (alpha_ == 0) return 0;
    return it_.restrict_cond(d_ - 1, p, alpha_ - 1);
  }

  name_id operator()(name_id x) {
    if (auto m = memo_.find(x); m != memo_.end()) return m->second;
    std::vector<entry> es;
    for (auto [p, z] : entries(x)) es.emplace_back(head(p), pair_bullet(base(), tail_code(p), (*this)(z)));
    name_id out = make_name(base(), std::move(es));
    memo_.emplace(x, out);
    return out;
  }

  // ]y[: y over the base, result over the top level
  name_id inject(name_id y) {
    if (auto m = inj_.find(y); m != inj_.end()) return m->second;
    if (!engine_) engine_ = std::make_unique<forcing_engine>(base_ptr());
    const poset& P = *it_.top()->P;
    std::set<name_id> children;
    const std::uint32_t b = base().id();
    for (auto [r, w] : entries(y)) {
      // w = {{c}, {c, z}} as bullets; z is the member of the pair set missing from the singleton
      name_id single = 0, both = 0;
      bool have_single = false, have_both = false;
      for (auto [r1, s] : entries(w)) {
        if (entries(s).size() == 1) single = s, have_single = true;
        if (entries(s).size() == 2) both = s, have_both = true;
      }
      if (!have_single) continue;
      name_id c = entries(single)[0].second;
      if (!have_both) children.insert(c);
      else
        for (auto [r2, z] : entries(both))
          if (z != c) children.insert(z);
    }
    std::vector<entry> es;
    for (name_id z : children) {
      if (poset_of(z) != b) continue;
      for (cond_id p = 0; p < P.size(); ++p) {
        formula_id f = f_in(pair_bullet(base(), tail_code(p), z), y);
        if (engine_->forces(head(p), f)) es.emplace_back(p, inject(z));
      }
    }
    name_id out = make_name(P, std::move(es));
    inj_.emplace(y, out);
    return out;
  }

  // the pieces of a top-level generic filter: G on the base, and membership in H for tail codes
  struct split {
    filter G;
    std::function<bool(hf::value)> in_H;
  };

  // generic of the top level through minimal class m
  split factor(std::size_t m) const {
    const poset_ptr& P = it_.top()->P;
    filter top = up_closure_of_atom(P, m);
    cond_id a = P->atoms()[m];
    if (alpha_ == 0) {
      auto codes = std::make_shared<std::map<hf::value, cond_id>>();
      for (cond_id p = 0; p < P->size(); ++p) codes->emplace(hf::ackermann(p), p);
      return {up_closure_of_atom(trivial_, 0), [codes, top](hf::value c) {
                auto f = codes->find(c);
                return f != codes->end() && top.contains(f->second);
              }};
    }
    if (alpha_ == d_) {
      filter G = top;
      return {G, [](hf::value c) { return c == hf::ackermann(0); }};
    }
    const auto& st = it_.stage(alpha_);
    const std::uint32_t nc = st.conds.size();
    cond_id lower = a / nc;
    int k = st.below->P->minimal_class(lower);
    filter G = up_closure_of_atom(st.below->P, static_cast<std::size_t>(k));
    cond_id o = st.canon[k][st.conds[a % nc][k]];
    const poset* T = st.T().P.get();
    auto codes = std::make_shared<std::map<hf::value, cond_id>>();
    for (cond_id x = 0; x < T->size(); ++x) codes->emplace(hf::ackermann(x), x);
    return {G, [codes, T, o](hf::value c) {
              auto f = codes->find(c);
              return f != codes->end() && T->leq(o, f->second);
            }};
  }

 private:
  const iteration& it_;
  std::size_t alpha_, d_;
  poset_ptr trivial_;
  std::unordered_map<name_id, name_id> memo_, inj_;
  std::unique_ptr<forcing_engine> engine_;
};

// (v)^H for a ground-coded tail name
inline hf::value evaluate_coded(hf::value v, const std::function<bool(hf::value)>& in_H) {
  std::vector<hf::value> out;
  for (hf::value m : hf::members(v)) {
    auto pr = hf::as_pair(m);
    if (!pr) throw input_error("coded name member is not a pair");
    if (in_H(pr->first)) out.push_back(evaluate_coded(pr->second, in_H));
  }
  return hf::make_set(std::move(out));
}

}  // namespace symforce
