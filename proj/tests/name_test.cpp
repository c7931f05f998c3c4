#include <gtest/gtest.h>

#include "support.hpp"
#include "symforce/symmetry.hpp"

using namespace symforce;
using namespace testing_support;

namespace {

// set-theoretic rank computed straight from the membership tree
std::uint32_t set_rank(hf::value v) {
  std::uint32_t r = 0;
  for (auto m : hf::members(v)) r = std::max(r, set_rank(m) + 1);
  return r;
}

std::vector<name_id> product_corpus(const poset& P) {
  universe_spec u;
  for (cond_id c = 0; c < P.size(); c += 3) u.conditions.push_back(c);
  u.seeds = {check_name(P, hf::nat(0)), check_name(P, hf::nat(1))};
  u.rank = 2;
  u.max_entries = 2;
  return generate_universe(P, u);
}

}  // namespace

TEST(NameTest, CheckNames) {
  auto P = build_cohen(cohen_cfg(2));
  name_id e = check_name(*P, hf::empty());
  EXPECT_TRUE(entries(e).empty());
  EXPECT_EQ(rank(e), 0u);
  name_id one = check_name(*P, hf::singleton(hf::empty()));
  ASSERT_EQ(entries(one).size(), 1u);
  EXPECT_EQ(entries(one)[0], entry(P->top(), e));
  for (std::uint32_t k = 0; k < 5; ++k) {
    hf::value x = hf::nat(k);
    EXPECT_EQ(rank(check_name(*P, x)), set_rank(x));
    for (const auto& G : generic_filters(P)) EXPECT_EQ(evaluate(check_name(*P, x), G), x);
  }
  hf::value odd = hf::make_set({hf::nat(3), hf::singleton(hf::nat(2))});
  EXPECT_EQ(rank(check_name(*P, odd)), set_rank(odd));
}

TEST(NameTest, BulletNames) {
  auto P = build_cohen(cohen_cfg(2));
  EXPECT_EQ(bullet(*P, {}), empty_name(*P));
  hf::value x = hf::nat(2);
  for (const auto& G : generic_filters(P)) EXPECT_EQ(evaluate(bullet(*P, {check_name(*P, x)}), G), hf::singleton(x));
}

TEST(NameTest, TupleBulletEvaluatesToTuple) {
  auto P = build_cohen(cohen_cfg(2));
  name_id g = cohen_real(*P);
  name_id t = tuple_bullet(*P, {g, check_name(*P, hf::nat(1)), g});
  for (const auto& G : generic_filters(P)) {
    hf::value gv = evaluate(g, G);
    // oracle: Kuratowski pairs assembled by hand
    hf::value p0 = hf::make_set({hf::singleton(hf::nat(0)), hf::make_set({hf::nat(0), gv})});
    hf::value p1 = hf::make_set({hf::singleton(hf::nat(1)), hf::make_set({hf::nat(1), hf::nat(1)})});
    hf::value p2 = hf::make_set({hf::singleton(hf::nat(2)), hf::make_set({hf::nat(2), gv})});
    EXPECT_EQ(evaluate(t, G), hf::make_set({p0, p1, p2}));
    EXPECT_EQ(evaluate(t, G), hf::tuple({gv, hf::nat(1), gv}));
  }
}

TEST(NameTest, EvaluateCohenReal) {
  auto P = build_cohen(cohen_cfg(2));
  name_id g = cohen_real(*P);
  cond_id m = P->parse_literal(json{{"0", 1}, {"1", 0}});
  ASSERT_GE(P->minimal_class(m), 0);
  filter G = up_closure_of_atom(P, static_cast<std::size_t>(P->minimal_class(m)));
  EXPECT_EQ(evaluate(g, G), hf::make_set({hf::nat(0)}));
  EXPECT_EQ(evaluate(empty_name(*P), G), hf::empty());
  // every generic reads its own total map
  for (const auto& H : generic_filters(P)) {
    const auto& cells = P->at(P->atoms()[H.atom]).cells;
    std::vector<hf::value> ones;
    for (std::uint32_t n = 0; n < cells.size(); ++n)
      if (cells[n] == 1) ones.push_back(hf::nat(n));
    EXPECT_EQ(evaluate(g, H), hf::make_set(ones));
  }
}

TEST(NameTest, EvaluateRejectsForeignPoset) {
  auto P = build_cohen(cohen_cfg(1));
  auto Q = build_cohen(cohen_cfg(1));
  name_id g = cohen_real(*P);
  EXPECT_THROW(evaluate(g, generic_filters(Q)[0]), input_error);
  EXPECT_THROW(make_name(*P, {{0, cohen_real(*Q)}}), input_error);
}

TEST(NameTest, SwapMapsCopyZeroToCopyOne) {
  auto T = build_T(build_cohen(cohen_cfg(2)), 2);
  const poset& P = *T->P;
  auto swap = T->element_with_base(perm::transposition(2, 0, 1));
  ASSERT_TRUE(swap);
  name_id g0 = copy_real(P, 0), g1 = copy_real(P, 1);
  EXPECT_NE(g0, g1);
  EXPECT_EQ(T->act(*swap, g0), g1);
  EXPECT_EQ(T->act(*swap, g1), g0);
  EXPECT_EQ(T->act(0, g0), g0);
  hf::value x = hf::make_set({hf::nat(1), hf::nat(3)});
  EXPECT_EQ(T->act(*swap, check_name(P, x)), check_name(P, x));
}

TEST(NameTest, CoordinatesUsed) {
  auto T = build_T(build_cohen(cohen_cfg(1)), 3);
  const poset& P = *T->P;
  EXPECT_TRUE(coordinates_used(check_name(P, hf::nat(4)), T->coords).empty());
  name_id g0 = copy_real(P, 0, true), g2 = copy_real(P, 2, true);
  EXPECT_EQ(coordinates_used(g0, T->coords), (std::set<coord>{{0, 0}}));
  EXPECT_EQ(coordinates_used(bullet(P, {g0, g2}), T->coords), (std::set<coord>{{0, 0}, {0, 2}}));
  // the full name also mentions conditions with larger domains
  EXPECT_TRUE(coordinates_used(copy_real(P, 0), T->coords).count({0, 0}));
}

TEST(NameTest, AutomorphismProperties) {
  auto T = build_T(build_cohen(cohen_cfg(1)), 2);
  const poset& P = *T->P;
  auto corpus = product_corpus(P);
  ASSERT_GT(corpus.size(), 100u);
  auto generics = generic_filters(T->P);
  for (name_id x : corpus) {
    for (std::uint32_t g = 0; g < T->group.size(); ++g) {
      name_id y = T->act(g, x);
      ASSERT_EQ(rank(y), rank(x));
      for (const auto& G : generics) ASSERT_EQ(evaluate(y, G), evaluate(x, preimage(G, T->group[g].cond_map)));
      for (std::uint32_t h = 0; h < T->group.size(); ++h) {
        auto gh = T->compose(g, h);
        ASSERT_TRUE(gh);
        ASSERT_EQ(T->act(*gh, x), T->act(g, T->act(h, x)));
      }
    }
  }
}

TEST(NameTest, ForcedEqualNamesEvaluateEqually) {
  auto P = build_cohen(cohen_cfg(1));
  universe_spec u;
  for (cond_id c = 0; c < P->size(); ++c) u.conditions.push_back(c);
  u.rank = 2;
  auto corpus = generate_universe(*P, u);
  forcing_engine E(P);
  auto generics = generic_filters(P);
  for (std::size_t i = 0; i < corpus.size(); ++i)
    for (std::size_t j = i; j < corpus.size(); ++j) {
      bitset S = E.forcing_set(f_eq(corpus[i], corpus[j]));
      for (const auto& G : generics) {
        if (!G.members.intersects(S)) continue;
        ASSERT_EQ(evaluate(corpus[i], G), evaluate(corpus[j], G));
      }
    }
}

TEST(NameTest, UniverseBudget) {
  auto P = build_cohen(cohen_cfg(2));
  universe_spec u;
  for (cond_id c = 0; c < P->size(); ++c) u.conditions.push_back(c);
  u.rank = 3;
  u.max_entries = 3;
  u.budget = 1000;
  EXPECT_THROW(generate_universe(*P, u), budget_error);
}

TEST(NameTest, JsonRoundTrip) {
  auto P = build_cohen(cohen_cfg(2));
  name_id g = cohen_real(*P);
  name_id t = tuple_bullet(*P, {g, check_name(*P, hf::nat(3))});
  EXPECT_EQ(name_from_json(*P, name_to_json(*P, t)), t);
  EXPECT_EQ(name_from_json(*P, json{{"check", 2}}), check_name(*P, hf::nat(2)));
  EXPECT_THROW(name_from_json(*P, json("g_0_1")), input_error);
  EXPECT_THROW(name_from_json(*P, json{{"entries", json::array({json::array({json{{"7", 1}}, json{{"check", 0}}})})}}),
               input_error);
}
