#pragma once

#include <algorithm>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "symforce/forcing.hpp"
#include "symforce/iteration.hpp"

// The ten iteration laws as executable checks on the top level of an iteration.
namespace symforce {

struct law_result {
  int item = 0;
  std::string anchor;
  std::string mode;  // exhaustive | sampled | skipped
  std::size_t cases = 0;
  std::size_t space = 0;
  std::size_t failure_count = 0;
  json failures = json::array();

  bool passed() const { return failure_count == 0; }
  json to_json() const {
    return {{"item", item},   {"anchor", anchor},          {"mode", mode},
            {"cases", cases}, {"failure_count", failure_count}, {"failures", failures}};
  }
};

struct law_options {
  std::size_t cases = 1000;             // sample size when the space is too large; 0 skips everything
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  std::size_t exhaustive_limit = 1'000'000;
  std::size_t kept_failures = 20;
};

namespace detail {

using law_case = std::function<std::optional<std::string>(std::uint64_t)>;

inline law_result run_law(int item, std::string anchor, std::uint64_t space, const law_case& check, const law_options& o) {
  law_result r;
  r.item = item;
  r.anchor = std::move(anchor);
  r.space = space;
  if (o.cases == 0) {
    r.mode = "skipped";
    return r;
  }
  std::vector<std::uint64_t> idx;
  if (space <= o.exhaustive_limit) {
    r.mode = "exhaustive";
    idx.resize(space);
    for (std::uint64_t i = 0; i < space; ++i) idx[i] = i;
  } else {
    r.mode = "sampled";
    std::mt19937_64 rng(o.seed * 1000003u + static_cast<std::uint64_t>(item));
    std::uniform_int_distribution<std::uint64_t> d(0, space - 1);
    for (std::size_t i = 0; i < o.cases; ++i) idx.push_back(d(rng));
  }
  r.cases = idx.size();
  const unsigned jobs = std::max(1u, std::min<unsigned>(o.jobs, static_cast<unsigned>(idx.size() / 64 + 1)));
  std::vector<std::vector<std::pair<std::size_t, std::string>>> found(jobs);
  auto work = [&](unsigned w) {
    for (std::size_t i = w; i < idx.size(); i += jobs)
      if (auto f = check(idx[i])) found[w].emplace_back(i, *f);
  };
  if (jobs == 1) {
    work(0);
  } else {
    std::vector<std::thread> ts;
    for (unsigned w = 0; w < jobs; ++w) ts.emplace_back(work, w);
    for (auto& t : ts) t.join();
  }
  std::vector<std::pair<std::size_t, std::string>> all;
  for (auto& f : found) all.insert(all.end(), f.begin(), f.end());
  std::sort(all.begin(), all.end());
  r.failure_count = all.size();
  for (std::size_t i = 0; i < all.size() && i < o.kept_failures; ++i)
    r.failures.push_back({{"case", idx[all[i].first]}, {"detail", all[i].second}});
  return r;
}

inline std::string set_str(const std::set<std::uint32_t>& s) { return json(std::vector<std::uint32_t>(s.begin(), s.end())).dump(); }

inline bool subset_of(const std::set<std::uint32_t>& a, const std::set<std::uint32_t>& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

}  // namespace detail

inline std::vector<law_result> law_suite(const iteration& it, const law_options& o = {}) {
  using detail::set_str;
  using detail::subset_of;
  using opt = std::optional<std::string>;
  const std::size_t j = it.depth() - 1;
  const symmetric_system& S = *it.top();
  const poset& P = *S.P;
  const std::uint64_t N = P.size(), Gn = S.group.size(), Fn = S.filters.size();
  std::vector<law_result> out;

  // (1) supports: the cached flags against the forcing relation, per stage entry
  {
    std::vector<std::vector<char>> slow_c(j + 1), slow_p(j + 1), slow_g(j + 1);
    if (o.cases > 0)
      for (std::size_t b = 1; b <= j; ++b) {
        const auto& st = it.stage(b);
        const poset& L = *st.below->P;
        forcing_engine E(st.below->P);
        name_id one = check_name(L, hf::ackermann(st.T().P->top()));
        name_id id = check_name(L, hf::ackermann(0));
        std::vector<hf::value> all;
        for (std::size_t h = 0; h < st.T().group.size(); ++h) all.push_back(hf::ackermann(h));
        name_id full = check_name(L, hf::make_set(all));
        for (std::uint32_t c = 0; c < st.conds.size(); ++c)
          slow_c[b].push_back(!E.forces(L.top(), f_eq(it.cond_name(b, c), one)));
        for (std::uint32_t s = 0; s < st.perms.size(); ++s)
          slow_p[b].push_back(!E.forces(L.top(), f_eq(it.perm_name(b, s), id)));
        for (std::uint32_t K = 0; K < st.gens.size(); ++K)
          slow_g[b].push_back(!E.forces(L.top(), f_eq(it.gen_name(b, K), full)));
      }
    const auto& B = *it.level(0);
    out.push_back(detail::run_law(1, "finite support; supp(p) = {a : not forced p(a) = 1}", N + Gn + Fn,
                                  [&](std::uint64_t i) -> opt {
                                    std::set<std::uint32_t> cached, slow;
                                    std::string what;
                                    if (i < N) {
                                      cond_id p = static_cast<cond_id>(i);
                                      cached = it.cond_support(j, p);
                                      if (it.cond_entry(j, p, 0) != B.P->top()) slow.insert(0);
                                      for (std::size_t b = 1; b <= j; ++b)
                                        if (slow_c[b][it.cond_entry(j, p, b)]) slow.insert(static_cast<std::uint32_t>(b));
                                      what = "condition " + std::to_string(p);
                                    } else if (i < N + Gn) {
                                      auto g = static_cast<std::uint32_t>(i - N);
                                      cached = it.group_support(j, g);
                                      const auto& m = B.group[it.group_entry(j, g, 0)].cond_map;
                                      for (cond_id p = 0; p < m.size(); ++p)
                                        if (m[p] != p) {
                                          slow.insert(0);
                                          break;
                                        }
                                      for (std::size_t b = 1; b <= j; ++b)
                                        if (slow_p[b][it.group_entry(j, g, b)]) slow.insert(static_cast<std::uint32_t>(b));
                                      what = "automorphism " + S.group[g].label;
                                    } else {
                                      auto h = static_cast<std::uint32_t>(i - N - Gn);
                                      cached = it.filter_support(j, h);
                                      if (!B.filters[it.filter_entry(j, h, 0)].members.all()) slow.insert(0);
                                      for (std::size_t b = 1; b <= j; ++b)
                                        if (slow_g[b][it.filter_entry(j, h, b)]) slow.insert(static_cast<std::uint32_t>(b));
                                      what = "generator " + S.filters[h].label;
                                    }
                                    if (cached.size() > j + 1 || cached != slow)
                                      return what + ": cached " + set_str(cached) + " forced " + set_str(slow);
                                    return std::nullopt;
                                  },
                                  o));
  }

  // (2) supp(p) = supp(pi(p))
  out.push_back(detail::run_law(2, "supp(p) = supp(pi(p))", N * Gn, [&](std::uint64_t i) -> opt {
    cond_id p = static_cast<cond_id>(i % N);
    auto g = static_cast<std::uint32_t>(i / N);
    auto a = it.cond_support(j, p), b = it.cond_support(j, S.group[g].cond_map[p]);
    if (a != b) return S.group[g].label + " on " + std::to_string(p) + ": " + set_str(a) + " vs " + set_str(b);
    return std::nullopt;
  }, o));

  // (3) pi(p)|b = (pi|b)(p|b)
  out.push_back(detail::run_law(3, "pi(p)|b = (pi|b)(p|b)", N * Gn, [&](std::uint64_t i) -> opt {
    cond_id p = static_cast<cond_id>(i % N);
    auto g = static_cast<std::uint32_t>(i / N);
    for (std::size_t b = 0; b < j; ++b) {
      cond_id lhs = it.restrict_cond(j, S.group[g].cond_map[p], b);
      cond_id rhs = it.level(b)->group[it.restrict_group(j, g, b)].cond_map[it.restrict_cond(j, p, b)];
      if (lhs != rhs) return S.group[g].label + " on " + std::to_string(p) + " at " + std::to_string(b);
    }
    return std::nullopt;
  }, o));

  // (4) padding with trivial entries embeds every lower level; restriction is onto
  {
    std::vector<std::uint64_t> offs{0};
    for (std::size_t b = 0; b < j; ++b) {
      std::uint64_t n = it.level(b)->P->size();
      offs.push_back(offs.back() + n * n + it.level(b)->group.size() + it.level(b)->filters.size());
    }
    out.push_back(detail::run_law(4, "padding embeds P_b, G_b, F_b; P_b = {p|b}", offs.back(), [&](std::uint64_t i) -> opt {
      std::size_t b = std::upper_bound(offs.begin(), offs.end(), i) - offs.begin() - 1;
      i -= offs[b];
      const auto& Sb = *it.level(b);
      const std::uint64_t n = Sb.P->size();
      std::string at = " at level " + std::to_string(b);
      if (i < n * n) {
        cond_id p = static_cast<cond_id>(i % n), q = static_cast<cond_id>(i / n);
        cond_id pp = it.pad_cond(b, p, j), qp = it.pad_cond(b, q, j);
        if (it.restrict_cond(j, pp, b) != p) return "restriction of the padded " + std::to_string(p) + at;
        if (Sb.P->leq(q, p) != P.leq(qp, pp)) return "order of " + std::to_string(q) + ", " + std::to_string(p) + at;
        if (it.cond_support(b, p) != it.cond_support(j, pp)) return "support of the padded " + std::to_string(p) + at;
        return std::nullopt;
      }
      i -= n * n;
      if (i < Sb.group.size()) {
        auto g = static_cast<std::uint32_t>(i);
        auto gp = it.pad_group(b, g, j);
        if (it.restrict_group(j, gp, b) != g || it.group_support(b, g) != it.group_support(j, gp))
          return "padded automorphism " + Sb.group[g].label + at;
        // the padded automorphism acts on padded conditions as the original
        for (cond_id p = 0; p < n; ++p)
          if (S.group[gp].cond_map[it.pad_cond(b, p, j)] != it.pad_cond(b, Sb.group[g].cond_map[p], j))
            return "padded automorphism " + Sb.group[g].label + " on " + std::to_string(p) + at;
        return std::nullopt;
      }
      auto h = static_cast<std::uint32_t>(i - Sb.group.size());
      // pad with the full stage groups
      std::uint32_t cur = h;
      for (std::size_t c = b + 1; c <= j; ++c) {
        const auto& st = it.stage(c);
        std::optional<std::uint32_t> full;
        for (std::uint32_t K = 0; K < st.gens.size() && !full; ++K)
          if (!st.gen_nontrivial[K]) full = K;
        auto nx = full ? it.find_filter(c, cur, *full) : std::nullopt;
        if (!nx) return "no padded generator for " + Sb.filters[h].label + at;
        cur = *nx;
      }
      if (it.restrict_filter(j, cur, b) != h || it.filter_support(b, h) != it.filter_support(j, cur))
        return "padded generator " + Sb.filters[h].label + at;
      return std::nullopt;
    }, o));
  }

  // (5) composition formula
  out.push_back(detail::run_law(5, "pi o sigma = <pi(b) o (pi|b)(sigma(b))>", Gn * Gn, [&](std::uint64_t i) -> opt {
    auto a = static_cast<std::uint32_t>(i % Gn), b = static_cast<std::uint32_t>(i / Gn);
    std::uint32_t f = it.compose_formula(j, a, b);
    auto direct = symmetric_system::compose_maps(S.group[a].cond_map, S.group[b].cond_map);
    std::string what = S.group[a].label + " o " + S.group[b].label;
    if (S.group[f].cond_map != direct) return what + ": formula disagrees with composition";
    auto sa = it.group_support(j, a), sb = it.group_support(j, b);
    sa.insert(sb.begin(), sb.end());
    if (!subset_of(it.group_support(j, f), sa)) return what + ": support grows";
    for (std::size_t c = 0; c < j; ++c) {
      const auto& L = *it.level(c);
      auto m = symmetric_system::compose_maps(L.group[it.restrict_group(j, a, c)].cond_map,
                                              L.group[it.restrict_group(j, b, c)].cond_map);
      if (L.group[it.restrict_group(j, f, c)].cond_map != m) return what + ": restriction to " + std::to_string(c);
    }
    return std::nullopt;
  }, o));

  // (6) inverse formula against a brute-force inverse
  out.push_back(detail::run_law(6, "pi^-1 = <(pi|b)^-1(pi(b)^-1)>", Gn, [&](std::uint64_t i) -> opt {
    auto a = static_cast<std::uint32_t>(i);
    std::optional<std::uint32_t> brute;
    for (std::uint32_t s = 0; s < Gn && !brute; ++s) {
      auto m = symmetric_system::compose_maps(S.group[a].cond_map, S.group[s].cond_map);
      bool id = true;
      for (cond_id p = 0; p < N && id; ++p) id = m[p] == p;
      if (id) brute = s;
    }
    if (!brute) return S.group[a].label + ": no inverse in the group";
    std::uint32_t f;
    try {
      f = it.inverse_formula(j, a);
    } catch (const std::exception& e) {
      return S.group[a].label + ": " + e.what();
    }
    if (f != *brute) return S.group[a].label + ": formula gives " + S.group[f].label + ", inverse is " + S.group[*brute].label;
    if (it.group_support(j, f) != it.group_support(j, a)) return S.group[a].label + ": support changes";
    for (std::size_t c = 0; c < j; ++c) {
      const auto& L = *it.level(c);
      auto inv = L.inverse(it.restrict_group(j, a, c));
      if (!inv || *inv != it.restrict_group(j, f, c)) return S.group[a].label + ": restriction to " + std::to_string(c);
    }
    return std::nullopt;
  }, o));

  // (7) pointwise intersection of generators
  out.push_back(detail::run_law(7, "E <= H n K, supp(E) within supp(H) u supp(K)", Fn * Fn, [&](std::uint64_t i) -> opt {
    auto h = static_cast<std::uint32_t>(i % Fn), k = static_cast<std::uint32_t>(i / Fn);
    std::string what = S.filters[h].label + " n " + S.filters[k].label;
    auto e = it.intersect_formula(j, h, k);
    if (!e) return what + ": no listed generator";
    bitset both = S.filters[h].members & S.filters[k].members;
    if (!S.filters[*e].members.is_subset_of(both)) return what + ": E not below H n K";
    auto sh = it.filter_support(j, h), sk = it.filter_support(j, k);
    sh.insert(sk.begin(), sk.end());
    if (!subset_of(it.filter_support(j, *e), sh)) return what + ": support grows";
    return std::nullopt;
  }, o));

  // (8) generators respecting the entries of p and of the inverse entries of pi
  out.push_back(detail::run_law(8, "H|b <= sym(p(b)), K|b <= sym((pi|b)^-1(pi(b)^-1))", N + Gn, [&](std::uint64_t i) -> opt {
    auto respects = [&](std::uint32_t H, const std::function<bool(std::size_t, std::uint32_t)>& fixes) {
      for (std::size_t b = 1; b <= j; ++b) {
        const bitset& M = it.level(b - 1)->filters[it.restrict_filter(j, H, b - 1)].members;
        for (std::size_t g = M.find_first(); g != bitset::npos; g = M.find_next(g))
          if (!fixes(b, static_cast<std::uint32_t>(g))) return false;
      }
      return true;
    };
    std::function<bool(std::size_t, std::uint32_t)> fixes;
    std::string what;
    if (i < N) {
      cond_id p = static_cast<cond_id>(i);
      what = "condition " + std::to_string(p);
      fixes = [&, p](std::size_t b, std::uint32_t g) {
        const auto& st = it.stage(b);
        const auto& f = st.conds[it.cond_entry(j, p, b)];
        return st.act_cond(g, f) == f;
      };
    } else {
      auto a = static_cast<std::uint32_t>(i - N);
      what = "automorphism " + S.group[a].label;
      fixes = [&, a](std::size_t b, std::uint32_t g) {
        const auto& st = it.stage(b);
        std::uint32_t pr = it.restrict_group(j, a, b);
        std::uint32_t lower = pr / st.perms.size();
        stage_fn t(st.atoms());
        for (std::size_t k = 0; k < t.size(); ++k) t[k] = st.tinv[st.perms[pr % st.perms.size()][k]];
        t = st.act_plain(st.ginv[lower], t);
        return st.act_plain(g, t) == t;
      };
    }
    for (std::uint32_t H = 0; H < Fn; ++H)
      if (respects(H, fixes)) return std::nullopt;
    return what + ": no generator respects its entries";
  }, o));

  // (9) conjugation formula under its hypothesis
  out.push_back(detail::run_law(9, "pi H pi^-1 = <pi(b) (pi|b)(H(b)) pi(b)^-1>, equal support", Gn * Fn, [&](std::uint64_t i) -> opt {
    auto pi = static_cast<std::uint32_t>(i % Gn), H = static_cast<std::uint32_t>(i / Gn);
    if (!it.conjugation_hypothesis(j, pi, H)) return std::nullopt;
    std::string what = S.group[pi].label + " on " + S.filters[H].label;
    auto c = it.conjugate_formula(j, pi, H);
    if (!c) return what + ": the formula leaves the generator list";
    if (S.filters[*c].members != conjugate_members(S, pi, S.filters[H].members)) return what + ": members differ";
    if (it.filter_support(j, *c) != it.filter_support(j, H)) return what + ": support changes";
    return std::nullopt;
  }, o));

  // (10) density in the usual iteration: every pair (p, f) with f any function
  // from minimal classes to stage objects has an extension in the system
  {
    std::uint64_t space = 0, lower = 0, nobj = 0, A = 0;
    if (j > 0) {
      const auto& st = it.stage(j);
      lower = st.below->P->size();
      nobj = st.T().P->size();
      A = st.atoms();
      double sp = static_cast<double>(lower);
      for (std::uint64_t k = 0; k < A; ++k) sp *= static_cast<double>(nobj);
      space = sp > 1e18 ? static_cast<std::uint64_t>(1e18) : static_cast<std::uint64_t>(sp);
    }
    out.push_back(detail::run_law(10, "P is dense in the usual iteration P'", space, [&](std::uint64_t i) -> opt {
      const auto& st = it.stage(j);
      const poset& Lw = *st.below->P;
      const std::uint32_t nc = st.conds.size();
      cond_id p = static_cast<cond_id>(i % lower);
      std::uint64_t rest = i / lower;
      stage_fn f(A);
      for (std::uint64_t k = 0; k < A; ++k) {
        f[k] = static_cast<std::uint32_t>(rest % nobj);
        rest /= nobj;
      }
      // r <= (p, f) in P': r|lower <= p and the stage entry below f at every class under r|lower
      auto below_pf = [&](cond_id r) {
        cond_id rl = r / nc;
        if (!Lw.leq(rl, p)) return false;
        const auto& c = st.conds[r % nc];
        const bitset& ab = Lw.atoms_below(rl);
        for (std::size_t k = ab.find_first(); k != bitset::npos; k = ab.find_next(k))
          if (!st.obj_leq(k, c[k], f[k])) return false;
        return true;
      };
      const bitset& ab = Lw.atoms_below(p);
      for (std::size_t k = ab.find_first(); k != bitset::npos; k = ab.find_next(k)) {
        cond_id a = Lw.atoms()[k];
        for (cond_id o2 : st.T().P->atoms()) {
          auto c = st.conds.find(stage_fn(A, o2));
          if (c && below_pf(a * nc + *c)) return std::nullopt;
        }
      }
      return "(" + std::to_string(p) + ", " + json(f).dump() + ") has no extension in P";
    }, o));
  }
  return out;
}

inline bool laws_pass(const std::vector<law_result>& rs) {
  return std::all_of(rs.begin(), rs.end(), [](const law_result& r) { return r.passed(); });
}

}  // namespace symforce
