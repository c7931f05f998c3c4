#include <gtest/gtest.h>

#include "support.hpp"
#include "symforce/pincus.hpp"

using namespace symforce;
using namespace testing_support;

namespace {

const tower& tower_of(std::uint32_t depth, std::uint32_t width) {
  static std::map<std::pair<std::uint32_t, std::uint32_t>, tower> cache;
  auto key = std::make_pair(depth, width);
  auto f = cache.find(key);
  if (f == cache.end()) {
    truncation_config c;
    c.iteration_depth = depth;
    c.product_width = width;
    f = cache.emplace(key, build_tower(c)).first;
  }
  return f->second;
}

std::set<std::uint32_t> domain_of(const poset& prod, cond_id o) {
  std::set<std::uint32_t> out;
  const auto& cells = prod.at(o).cells;
  for (std::uint32_t i = 0; i < cells.size(); ++i)
    if (cells[i] >= 0) out.insert(i);
  return out;
}

}  // namespace

TEST(PincusTest, TowerShape) {
  const tower& t = tower_of(2, 2);
  EXPECT_EQ(t.depth(), 2u);
  EXPECT_EQ(t.top().P->size(), 832u);
  EXPECT_EQ(t.g.size(), 2u);
  EXPECT_EQ(t.index_lists[1].size(), 2u);
  EXPECT_NO_THROW(t.lookup("A_2"));
  EXPECT_THROW(t.lookup("A_3"), input_error);
  EXPECT_EQ(tower_of(1, 2).depth(), 1u);
}

TEST(PincusTest, ThinGenericsForcedEqualToFull) {
  const tower& t = tower_of(2, 2);
  const auto& B = t.it->level(0)->P;
  forcing_engine E0(B);
  for (std::uint32_t n = 0; n < 2; ++n) {
    name_id thin = copy_generic_base(*B, n), full = copy_generic_base(*B, n, false);
    EXPECT_LT(entries(thin).size(), entries(full).size());
    EXPECT_TRUE(E0.forces(B->top(), f_eq(thin, full)));
  }
  const auto& P1 = t.it->level(1)->P;
  forcing_engine E1(P1);
  for (std::uint32_t n = 0; n < 2; ++n) {
    name_id thin = copy_generic_stage(*t.it, 1, n, t.index_lists[1]);
    name_id full = copy_generic_stage(*t.it, 1, n, t.index_lists[1], false);
    EXPECT_LT(entries(thin).size(), entries(full).size());
    EXPECT_TRUE(E1.forces(P1->top(), f_eq(thin, full)));
  }
}

TEST(PincusTest, RegistryNamesAreSymmetric) {
  const tower& t = tower_of(2, 2);
  const auto& S = t.top();
  hs_checker hs(S);
  for (const auto& [id, x] : t.registry) EXPECT_TRUE(hs(x)) << id;
  // the canonical generic moves under the group, its orbit does not; with
  // finitely many coordinates the generic is still fixed by the pointwise
  // stabilizer of all of them, which is trivial here
  EXPECT_EQ(sym_members(S, t.Gamma).count(), S.group.size());
  EXPECT_EQ(sym_members(S, t.Gdot).count(), 1u);
  int w = hs.witness(t.Gdot);
  ASSERT_GE(w, 0);
  EXPECT_EQ(S.filters[w].members.count(), 1u);
}

TEST(PincusTest, RegistryCoherence) {
  const tower& t = tower_of(2, 2);
  const auto& P = t.top().P;
  for (std::size_t k = 0; k < P->atoms().size(); ++k) {
    evaluator ev(up_closure_of_atom(P, k));
    for (std::uint32_t d = 1; d <= 2; ++d) {
      std::vector<hf::value> vs;
      for (std::uint32_t a = 0; a < d; ++a)
        for (name_id g : t.g[a]) vs.push_back(ev(g));
      EXPECT_EQ(ev(t.A[d]), hf::make_set(vs)) << "generic " << k << " d " << d;
    }
  }
}

TEST(PincusTest, HierarchyOrder) {
  hierarchy h{2, 2, 2};
  auto x1 = h.enumerate(1);
  ASSERT_EQ(x1.size(), 4u);
  auto t = [](std::uint32_t a, std::uint32_t b) { return hf::tuple({hf::nat(a), hf::nat(b)}); };
  EXPECT_TRUE(h.lt(t(0, 0), t(0, 1)));
  EXPECT_TRUE(h.lt(t(0, 1), t(1, 0)));
  EXPECT_TRUE(h.lt(t(1, 0), t(1, 1)));
  EXPECT_FALSE(h.lt(t(1, 0), t(0, 1)));
  EXPECT_TRUE(h.lt(hf::nat(1), t(0, 0)));
  EXPECT_EQ(h.level_of(t(1, 1)), 1u);
  EXPECT_EQ(h.enumerate(2).size(), 16u);
  EXPECT_THROW(h.level_of(hf::nat(5)), input_error);
  EXPECT_THROW(h.enumerate(3), input_error);
}

TEST(PincusTest, HomogeneityMovesDomainsApart) {
  const tower& t = tower_of(1, 4);
  const auto& S = *t.it->top();
  const poset& P = *S.P;
  cond_id p = P.parse_literal(json{{"0", json{{"0", 1}}}, {"1", json{{"0", 0}}}});
  cond_id r = P.parse_literal(json{{"0", json{{"0", 0}}}, {"1", json{{"0", 1}}}});
  ASSERT_FALSE(P.compatible(p, r));
  std::uint32_t pi = homogeneity_automorphism(*t.it, p, r, 0);
  cond_id moved = S.group[pi].cond_map[r];
  EXPECT_TRUE(P.compatible(moved, p));
  EXPECT_EQ(domain_of(P, moved), (std::set<std::uint32_t>{2, 3}));
  // below the cutoff nothing may move: p and r clash at stage 0
  EXPECT_THROW(homogeneity_automorphism(*t.it, p, r, 1), precondition_error);
  EXPECT_THROW(homogeneity_automorphism(*t.it, p, r, 5), input_error);
  // two copies cannot separate two copies
  const tower& narrow = tower_of(1, 2);
  const poset& Q = *narrow.top().P;
  cond_id a = Q.parse_literal(json{{"0", json{{"0", 1}}}});
  cond_id b = Q.parse_literal(json{{"0", json{{"0", 0}}}, {"1", json{{"0", 0}}}});
  EXPECT_THROW(homogeneity_automorphism(*narrow.it, a, b, 0), budget_error);
}

// if r forces phi with parameters from below the cutoff, no p agreeing with r
// there forces not-phi
TEST(PincusTest, HomogeneityDecidesLowFormulas) {
  const tower& t = tower_of(2, 2);
  const iteration& it = *t.it;
  const auto& S = t.top();
  const poset& P = *S.P;
  const poset& B = *it.level(0)->P;
  std::map<name_id, name_id> memo;
  std::vector<name_id> low;
  for (name_id x : {t.g_local[0][0], t.g_local[0][1], check_name(B, hf::nat(0))}) low.push_back(pad_name(it, 0, x, 1, &memo));
  std::vector<formula_id> fs;
  for (name_id x : low)
    for (name_id y : low) {
      fs.push_back(f_eq(x, y));
      fs.push_back(f_in(x, y));
    }
  forcing_engine E(it.top()->P);
  int separated = 0;
  for (cond_id p = 0; p < P.size(); p += 17)
    for (cond_id r = 0; r < P.size(); r += 19) {
      if (!B.compatible(it.restrict_cond(1, p, 0), it.restrict_cond(1, r, 0))) continue;
      std::uint32_t pi;
      try {
        pi = homogeneity_automorphism(it, p, r, 1);
      } catch (const budget_error&) {
        continue;
      }
      ++separated;
      for (name_id x : low) ASSERT_EQ(S.act(pi, x), x);
      for (formula_id f : fs)
        if (E.forces(r, f)) {
          ASSERT_FALSE(E.forces(p, f_not(f))) << p << " " << r;
        }
    }
  EXPECT_GT(separated, 20);
}

TEST(PincusTest, MinimalSupportOfCopyGeneric) {
  const tower& t = tower_of(1, 2);
  const auto& S = t.top();
  support_search_options o;
  o.extra = t.g_local[0];
  for (std::uint32_t n = 0; n < 2; ++n) {
    auto w = minimal_support_search(S, 1, t.g_local[0][n], S.P->top(), o);
    EXPECT_EQ(w.alpha, 0u);
    EXPECT_EQ(w.a, std::vector<std::uint32_t>{n});
    forcing_engine E(S.P);
    EXPECT_TRUE(E.forces(w.q, f_eq(w.y, t.g_local[0][n])));
  }
  auto c = minimal_support_search(S, 1, check_name(*S.P, hf::nat(3)), S.P->top(), o);
  EXPECT_TRUE(c.a.empty());
}

TEST(PincusTest, NotacWitness) {
  const tower& t = tower_of(2, 2);
  auto w = notac_witness(t, {{0, 0}, {0, 1}}, 1, t.top().P->top());
  EXPECT_TRUE(w.fact1);
  EXPECT_TRUE(w.fact3);
  EXPECT_TRUE(w.evaluation_agrees);
  EXPECT_EQ(w.n, 1u);
  // at this size copies 0 and 1 of stage 1 can coincide, so the inequality is not forced
  EXPECT_FALSE(w.fact2);
  EXPECT_GT(w.agreements, 0u);
  EXPECT_THROW(notac_witness(t, {{1, 0}}, 1, t.top().P->top()), precondition_error);
  EXPECT_THROW(notac_witness(t, {}, 2, t.top().P->top()), input_error);
  // stage 0: n = 1 is the only free copy
  auto w0 = notac_witness(t, {}, 0, t.top().P->top());
  EXPECT_TRUE(w0.fact1);
  EXPECT_TRUE(w0.fact3);
}

TEST(PincusTest, ReduceToFix) {
  const tower& t = tower_of(2, 2);
  const auto& S = t.top();
  forcing_engine E(t.it->top()->P);
  int done = 0;
  for (name_id x : {t.g[0][1], t.g[1][0], t.A[2]}) {
    auto sym = sym_members(S, x);
    for (std::uint32_t H = 0; H < S.filters.size(); ++H) {
      if (!S.filters[H].members.is_subset_of(sym)) continue;
      fix_reduction r;
      try {
        r = reduce_to_fix(*t.it, x, S.P->top(), H);
      } catch (const budget_error&) {
        continue;
      }
      ++done;
      EXPECT_TRUE(fix_leq_sym_exhaustive(S, r.e, r.y));
      EXPECT_TRUE(E.forces(r.q, f_eq(x, r.y)));
    }
    // the witness found by the symmetry check
    auto r = reduce_to_fix(*t.it, x, S.P->top());
    EXPECT_TRUE(fix_leq_sym_exhaustive(S, r.e, r.y));
  }
  EXPECT_GT(done, 3);
  auto r = reduce_to_fix(*t.it, t.Gdot, S.P->top());
  EXPECT_TRUE(fix_leq_sym_exhaustive(S, r.e, r.y));
  EXPECT_TRUE(E.forces(r.q, f_eq(t.Gdot, r.y)));
}

TEST(PincusTest, ReduceAutomorphism) {
  const tower& t = tower_of(2, 2);
  const auto& S = t.top();
  for (std::uint32_t pi = 0; pi < S.group.size(); ++pi)
    for (name_id x : {t.g[0][1], t.g[1][0], t.g[1][1]}) {
      auto r = reduce_autom(*t.it, pi, S.P->top(), x);
      EXPECT_TRUE(r.verified) << pi;
      EXPECT_EQ(r.f.size(), 2u);
    }
}

TEST(PincusTest, DefinabilityFromGamma) {
  const tower& t = tower_of(1, 2);
  const auto m = t.top().P->atoms().size();
  int shrunk_fails = 0;
  for (std::size_t k = 0; k < m; ++k) {
    EXPECT_TRUE(definability_check(t, t.g[0][1], {{0, 1}}, k));
    shrunk_fails += !definability_check(t, t.g[0][1], {}, k);
  }
  EXPECT_GT(shrunk_fails, 0);
}

TEST(PincusTest, TailProjectionOverTower) {
  const tower& t = tower_of(2, 2);
  const poset& P = *t.top().P;
  tail_projection proj(*t.it, 1);
  std::vector<name_id> xs;
  for (const auto& [id, x] : t.registry)
    if (id != "Gamma") xs.push_back(x);
  for (std::size_t m = 0; m < P.atoms().size(); ++m) {
    auto s = proj.factor(m);
    evaluator top(up_closure_of_atom(t.it->top()->P, m)), low(s.G);
    for (name_id x : xs) EXPECT_EQ(evaluate_coded(low(proj(x)), s.in_H), top(x)) << m;
  }
}
