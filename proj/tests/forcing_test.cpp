#include <gtest/gtest.h>

#include "support.hpp"
#include "symforce/symmetry.hpp"

using namespace symforce;
using namespace testing_support;

namespace {

std::vector<name_id> small_corpus(const poset& P, std::vector<name_id> seeds, std::uint32_t step = 1) {
  universe_spec u;
  for (cond_id c = 0; c < P.size(); c += step) u.conditions.push_back(c);
  u.seeds = std::move(seeds);
  u.rank = 2;
  u.max_entries = 1;
  return generate_universe(P, u);
}

std::uint32_t var(const char* s) { return variables().id(s); }

}  // namespace

TEST(ForcingTest, Reflexivity) {
  auto P = build_cohen(cohen_cfg(2));
  forcing_engine E(P);
  name_id a = check_name(*P, hf::nat(3));
  for (cond_id p = 0; p < P->size(); ++p) EXPECT_TRUE(E.forces(p, f_eq(a, a)));
}

TEST(ForcingTest, CohenRealMembership) {
  auto P = build_cohen(cohen_cfg(2));
  forcing_engine E(P);
  name_id g = cohen_real(*P);
  name_id zero = check_name(*P, hf::nat(0));
  cond_id p = P->parse_literal(json{{"0", 1}});
  EXPECT_TRUE(E.forces(p, f_in(zero, g)));
  EXPECT_FALSE(E.forces(P->top(), f_in(zero, g)));
  EXPECT_FALSE(E.forces(P->top(), f_not(f_in(zero, g))));
  cond_id q = P->parse_literal(json{{"0", 0}});
  EXPECT_TRUE(E.forces(q, f_not(f_in(zero, g))));
  // oracle: the brute-force truth lemma over the four generics
  for (const auto& G : generic_filters(P)) {
    bool in = hf::contains(evaluate(g, G), hf::nat(0));
    EXPECT_EQ(in, G.contains(p));
  }
}

TEST(ForcingTest, ModesAgree) {
  auto P = build_product(build_cohen(cohen_cfg(1)), 2);
  auto names = small_corpus(*P, {copy_real(*P, 0), copy_real(*P, 1), check_name(*P, hf::nat(0))}, 5);
  std::mt19937_64 rng(3);
  forcing_engine ex(P, {}, forcing_mode::exhaustive), at(P, {}, forcing_mode::atomic);
  for (int i = 0; i < 150; ++i) {
    formula_id f = random_formula(rng, names, 3);
    ASSERT_EQ(ex.forcing_set(f), at.forcing_set(f)) << "formula " << i;
  }
}

TEST(ForcingTest, MonotoneConsistentDecided) {
  auto P = build_cohen(cohen_cfg(2));
  auto names = small_corpus(*P, {cohen_real(*P)}, 2);
  std::mt19937_64 rng(5);
  forcing_engine E(P);
  for (int i = 0; i < 150; ++i) {
    formula_id f = random_formula(rng, names, 3);
    bitset yes = E.forcing_set(f), no = E.forcing_set(f_not(f));
    EXPECT_FALSE(yes.intersects(no));
    EXPECT_TRUE(dense_below(*P, yes | no, P->top()));
    for (cond_id p = 0; p < P->size(); ++p)
      for (cond_id q = 0; q < P->size(); ++q)
        if (yes[p] && P->leq(q, p)) {
          EXPECT_TRUE(yes[q]);
        }
  }
}

TEST(ForcingTest, SymmetryLemmaOnSwaps) {
  auto T = build_T(build_cohen(cohen_cfg(1)), 2);
  const poset& P = *T->P;
  auto names = small_corpus(P, {copy_real(P, 0), copy_real(P, 1)}, 3);
  std::mt19937_64 rng(9);
  forcing_engine E(T->P);
  for (int i = 0; i < 60; ++i) {
    formula_id f = random_formula(rng, names, 2);
    for (std::uint32_t g = 0; g < T->group.size(); ++g) {
      formula_id h = map_names(f, [&](name_id x) { return T->act(g, x); });
      for (cond_id p = 0; p < P.size(); ++p)
        ASSERT_EQ(E.forces(p, f), E.forces(T->group[g].cond_map[p], h));
    }
  }
}

TEST(ForcingTest, TruthLemma) {
  auto P1 = build_cohen(cohen_cfg(1));
  forcing_engine E1(P1);
  formula_id phi = f_in(check_name(*P1, hf::nat(0)), cohen_real(*P1));
  EXPECT_TRUE(truth_lemma_check(E1, phi).empty());
  int holding = 0;
  for (const auto& G : generic_filters(P1)) {
    model_checker mc(G, E1);
    if (mc.holds(phi)) {
      ++holding;
      EXPECT_EQ(P1->at(P1->atoms()[G.atom]).cells[0], 1);
    }
  }
  EXPECT_EQ(holding, 1);
  name_id a = check_name(*P1, hf::nat(2));
  EXPECT_TRUE(truth_lemma_check(E1, f_eq(a, a)).empty());
  EXPECT_TRUE(E1.forces(P1->top(), f_eq(a, a)));

  auto P2 = build_cohen(cohen_cfg(2));
  forcing_engine E2(P2);
  auto names = small_corpus(*P2, {cohen_real(*P2)}, 2);
  std::mt19937_64 rng(1);
  int undecided = 0;
  for (int i = 0; i < 100; ++i) {
    formula_id f = random_formula(rng, names, 3);
    EXPECT_TRUE(truth_lemma_check(E2, f).empty()) << "formula " << i;
    if (!E2.forces(P2->top(), f) && !E2.forces(P2->top(), f_not(f))) ++undecided;
  }
  // the battery must contain formulas the top condition leaves open
  EXPECT_GT(undecided, 10);
}

TEST(ForcingTest, UnboundedQuantifiers) {
  auto P = build_cohen(cohen_cfg(1));
  name_id g = cohen_real(*P);
  forcing_engine E(P, {{"u", {g, check_name(*P, hf::empty())}}});
  auto u = universe_tags().id("u");
  auto y = var("y");
  formula_id some_empty = f_exists_u(y, u, f_forall_in(var("z"), term::var(y), f_not(f_eq(term::var(var("z")), term::var(var("z"))))));
  EXPECT_TRUE(E.forces(P->top(), some_empty));
  formula_id zero_in = f_exists_u(y, u, f_in(term::name(check_name(*P, hf::nat(0))), term::var(y)));
  EXPECT_FALSE(E.forces(P->top(), zero_in));
  EXPECT_TRUE(E.forces(P->parse_literal(json{{"0", 1}}), zero_in));
  EXPECT_THROW(E.forces(P->top(), f_exists_u(y, universe_tags().id("nowhere"), zero_in)), input_error);
  EXPECT_THROW(E.forces(P->top(), f_in(term::var(y), term::name(g))), input_error);
}

TEST(ForcingTest, SymmetricRestriction) {
  auto P = build_product(build_cohen(cohen_cfg(1)), 2);
  // only fix(empty set): every name must be fixed by the swap
  auto S = make_base_system(P, 2, all_perms(2), {1}, {{}}, {});
  cond_id c0 = P->parse_literal(json{{"0", json{{"0", 1}}}});
  name_id zero = check_name(*P, hf::nat(0));
  name_id lopsided = make_name(*P, {{c0, zero}});
  EXPECT_FALSE(is_hereditarily_symmetric(*S, lopsided));
  universe_map U{{"u", {lopsided, empty_name(*P)}}};
  auto y = var("y");
  formula_id phi = f_exists_u(y, universe_tags().id("u"), f_in(term::name(zero), term::var(y)));
  forcing_engine plain(P, U);
  EXPECT_TRUE(plain.forces(c0, phi));
  EXPECT_FALSE(forces_symmetric(S, c0, phi, U));
  // no quantifiers: identical
  std::mt19937_64 rng(2);
  auto names = small_corpus(*P, {copy_real(*P, 0)}, 4);
  auto E = symmetric_engine(S);
  for (int i = 0; i < 50; ++i) {
    formula_id f = random_formula(rng, names, 0);
    EXPECT_EQ(plain.forcing_set(f), E.forcing_set(f));
  }
}

TEST(ForcingTest, NameByFormulaCheck) {
  auto P = build_cohen(cohen_cfg(1));
  forcing_engine E(P);
  auto y = var("y");
  name_id a = check_name(*P, hf::nat(1));
  formula_id phi = f_eq(term::var(y), term::name(a));
  std::vector<name_id> pool = small_corpus(*P, {a});
  auto r = name_by_formula(E, P->top(), phi, y, pool, pool);
  EXPECT_TRUE(E.forces(P->top(), f_eq(r.y, a)));
  EXPECT_EQ(r.params, std::vector<name_id>{a});
}

TEST(ForcingTest, NameByFormulaSingleton) {
  auto P = build_cohen(cohen_cfg(1));
  forcing_engine E(P);
  name_id x = cohen_real(*P);
  auto y = var("y"), z = var("z");
  formula_id phi = f_and(f_in(term::name(x), term::var(y)),
                         f_forall_in(z, term::var(y), f_eq(term::var(z), term::name(x))));
  std::vector<name_id> pool = small_corpus(*P, {x});
  pool.push_back(bullet(*P, {x}));
  auto r = name_by_formula(E, P->top(), phi, y, pool, pool);
  for (const auto& G : generic_filters(P)) EXPECT_EQ(evaluate(r.y, G), hf::singleton(evaluate(x, G)));
}

TEST(ForcingTest, NameByFormulaPreconditions) {
  auto P = build_cohen(cohen_cfg(1));
  forcing_engine E(P);
  auto y = var("y");
  name_id zero = check_name(*P, hf::nat(0)), one = check_name(*P, hf::nat(1));
  formula_id two_ways = f_in(term::var(y), term::name(bullet(*P, {zero, one})));
  EXPECT_THROW(name_by_formula(E, P->top(), two_ways, y, {zero, one}, {zero}), precondition_error);
  formula_id none = f_not(f_eq(term::var(y), term::var(y)));
  EXPECT_THROW(name_by_formula(E, P->top(), none, y, {zero, one}, {zero}), precondition_error);
}

TEST(ForcingTest, NameByFormulaSymLowerBound) {
  auto T = build_T(build_cohen(cohen_cfg(1)), 3);
  const poset& P = *T->P;
  name_id x = copy_real(P, 0, true);
  auto y = var("y"), z = var("z");
  formula_id phi = f_and(f_in(term::name(x), term::var(y)),
                         f_forall_in(z, term::var(y), f_eq(term::var(z), term::name(x))));
  std::vector<name_id> pool{x, bullet(P, {x}), empty_name(P)};
  auto r = name_by_formula_symmetric(T, P.top(), phi, y, pool, pool, 3);
  auto tau = T->element_with_base(perm::transposition(3, 1, 2));
  ASSERT_TRUE(tau);
  EXPECT_EQ(T->act(*tau, x), x);
  EXPECT_EQ(T->act(*tau, r.y), r.y);
  EXPECT_TRUE(r.params_sym.is_subset_of(sym_members(*T, r.y)));
  EXPECT_TRUE(r.params_sym[*tau]);
}
