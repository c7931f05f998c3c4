#include <gtest/gtest.h>

#include "support.hpp"
#include "symforce/iteration.hpp"
#include "symforce/pincus.hpp"

using namespace symforce;
using namespace testing_support;

namespace {

std::shared_ptr<iteration> toy() {
  auto c = cohen_cfg(1);
  c.product_width = 2;
  return two_step(build_T(build_cohen(c), 2, c), build_T(build_cohen(c), 2, c));
}

const tower& small_tower() {
  static tower t = [] {
    truncation_config c;
    c.product_width = 2;
    c.iteration_depth = 2;
    return build_tower(c);
  }();
  return t;
}

std::vector<name_id> top_corpus(const iteration& it, std::size_t want) {
  const poset& P = *it.top()->P;
  universe_spec u;
  for (cond_id c = 0; c < P.size(); c += std::max<std::size_t>(1, P.size() / 6)) u.conditions.push_back(c);
  u.seeds = {check_name(P, hf::nat(1))};
  u.rank = 2;
  u.max_entries = 1;
  auto out = generate_universe(P, u);
  if (out.size() > want) out.resize(want);
  return out;
}

}  // namespace

TEST(IterationTest, ShapeOfTwoStep) {
  auto it = toy();
  ASSERT_EQ(it->depth(), 2u);
  const auto& st = it->stage(1);
  EXPECT_EQ(it->top()->P->size(), it->level(0)->P->size() * st.conds.size());
  EXPECT_EQ(it->top()->group.size(), it->level(0)->group.size() * st.perms.size());
  EXPECT_THROW(it->stage(0), input_error);
  EXPECT_THROW(it->stage(2), input_error);
  const poset& B = *it->level(0)->P;
  for (cond_id p = 0; p < B.size(); ++p) {
    cond_id up = it->pad_cond(0, p, 1);
    EXPECT_EQ(it->restrict_cond(1, up, 0), p);
    EXPECT_EQ(it->cond_entry(1, up, 1), 0u);
  }
  EXPECT_EQ(it->pad_cond(0, B.top(), 1), it->top()->P->top());
}

TEST(IterationTest, OrderIsByRestrictions) {
  auto it = toy();
  EXPECT_TRUE(limit_clause_check(*it, 1).empty());
  EXPECT_TRUE(validate_system(*it->top()).empty());
  EXPECT_TRUE(limit_clause_check(*small_tower().it, 1).empty());
}

TEST(IterationTest, SupportsCachedMatchSlow) {
  auto two = toy();
  for (const iteration* it : {two.get(), small_tower().it.get()}) {
    const auto& S = *it->top();
    const std::size_t j = it->depth() - 1;
    for (cond_id p = 0; p < S.P->size(); p += 7) ASSERT_EQ(it->cond_support(j, p), cond_support_slow(*it, j, p));
    for (std::uint32_t g = 0; g < S.group.size(); ++g) ASSERT_EQ(it->group_support(j, g), group_support_slow(*it, j, g));
    for (std::uint32_t i = 0; i < S.filters.size(); ++i)
      ASSERT_EQ(it->filter_support(j, i), filter_support_slow(*it, j, i));
  }
}

TEST(IterationTest, GroupFormulasMatchComposition) {
  const iteration& it = *small_tower().it;
  const auto& S = *it.top();
  for (std::uint32_t a = 0; a < S.group.size(); ++a) {
    // oracle: composition of the condition maps
    auto inv = it.inverse_formula(1, a);
    for (cond_id p = 0; p < S.P->size(); p += 5) ASSERT_EQ(S.group[inv].cond_map[S.group[a].cond_map[p]], p);
    for (std::uint32_t b = 0; b < S.group.size(); ++b) {
      auto c = it.compose_formula(1, a, b);
      for (cond_id p = 0; p < S.P->size(); p += 11)
        ASSERT_EQ(S.group[c].cond_map[p], S.group[a].cond_map[S.group[b].cond_map[p]]);
    }
  }
}

TEST(IterationTest, ConjugationAndIntersection) {
  const iteration& it = *small_tower().it;
  const auto& S = *it.top();
  int used = 0;
  for (std::uint32_t pi = 0; pi < S.group.size(); ++pi)
    for (std::uint32_t H = 0; H < S.filters.size(); ++H) {
      if (!it.conjugation_hypothesis(1, pi, H)) continue;
      auto c = it.conjugate_formula(1, pi, H);
      ASSERT_TRUE(c) << pi << " " << H;
      EXPECT_EQ(S.filters[*c].members, conjugate_members(S, pi, S.filters[H].members));
      ++used;
    }
  EXPECT_GT(used, 0);
  for (std::uint32_t H = 0; H < S.filters.size(); ++H)
    for (std::uint32_t K = 0; K < S.filters.size(); ++K)
      if (auto i = it.intersect_formula(1, H, K)) {
        EXPECT_EQ(S.filters[*i].members, S.filters[H].members & S.filters[K].members);
      }
}

TEST(IterationTest, IdentifiedConditionsAreEquivalent) {
  const iteration& it = *small_tower().it;
  const poset& P = *it.top()->P;
  int distinct = 0;
  for (cond_id p = 0; p < P.size(); p += 13)
    for (cond_id q = 0; q < P.size(); ++q)
      if (it.cond_equiv(1, p, q)) {
        EXPECT_TRUE(P.leq(p, q) && P.leq(q, p)) << p << " " << q;
        distinct += p != q;
      }
  EXPECT_GT(distinct, 0);
}

TEST(IterationTest, EqualAutomorphisms) {
  auto it = toy();
  const auto& S = *it->top();
  auto corpus = top_corpus(*it, 40);
  for (std::uint32_t g = 0; g < S.group.size(); ++g) EXPECT_TRUE(equal_automorphism_check(*it, S.P->top(), g, g, corpus).empty());
  // different base entries violate the hypothesis
  std::uint32_t np = it->stage(1).perms.size();
  ASSERT_GT(S.group.size(), np);
  EXPECT_THROW(equal_automorphism_check(*it, S.P->top(), 0, np, corpus), precondition_error);
}

TEST(IterationTest, TailProjectionRoundTrip) {
  auto it = toy();
  const poset& P = *it->top()->P;
  auto corpus = top_corpus(*it, 60);
  ASSERT_GE(corpus.size(), 50u);
  for (std::size_t alpha : {0u, 1u, 2u}) {
    tail_projection proj(*it, alpha);
    for (std::size_t m = 0; m < P.atoms().size(); ++m) {
      auto s = proj.factor(m);
      evaluator top(up_closure_of_atom(it->top()->P, m)), low(s.G);
      for (name_id x : corpus) ASSERT_EQ(evaluate_coded(low(proj(x)), s.in_H), top(x)) << "alpha " << alpha << " m " << m;
    }
  }
  EXPECT_THROW(tail_projection(*it, 3), input_error);
}

TEST(IterationTest, InjectionInvertsProjection) {
  auto it = toy();
  const poset& P = *it->top()->P;
  forcing_engine E(it->top()->P);
  tail_projection proj(*it, 1);
  auto corpus = top_corpus(*it, 12);
  for (name_id x : corpus) EXPECT_TRUE(E.forces(P.top(), f_eq(proj.inject(proj(x)), x))) << x;
}

TEST(IterationTest, DepthBounds) {
  auto c = cohen_cfg(1);
  auto base = build_T(build_cohen(c), 2, c);
  EXPECT_THROW(fs_iteration(base, {}, 0), input_error);
  EXPECT_THROW(fs_iteration(base, {}, 2), input_error);
  EXPECT_EQ(fs_iteration(base, {}, 1)->depth(), 1u);
}
