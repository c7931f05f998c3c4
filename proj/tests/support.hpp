#pragma once

#include <algorithm>
#include <random>
#include <vector>

#include "symforce/forcing.hpp"
#include "symforce/name.hpp"
#include "symforce/poset.hpp"

namespace testing_support {

using namespace symforce;

inline truncation_config cohen_cfg(std::uint32_t n) {
  truncation_config c;
  c.cohen_domain = n;
  return c;
}

// {(p, n-check) : p(n) = 1} over a Cohen poset
inline name_id cohen_real(const poset& P) {
  std::vector<entry> es;
  for (cond_id p = 0; p < P.size(); ++p) {
    const auto& cells = P.at(p).cells;
    for (std::uint32_t n = 0; n < cells.size(); ++n)
      if (cells[n] == 1) es.emplace_back(p, check_name(P, hf::nat(n)));
  }
  return make_name(P, es);
}

// the same real read off copy k of a product of Cohen posets; thin keeps
// only conditions whose domain is {k}
inline name_id copy_real(const poset& P, std::uint32_t k, bool thin = false) {
  const poset& in = *P.inner();
  std::vector<entry> es;
  for (cond_id q = 0; q < P.size(); ++q) {
    const auto& cells = P.at(q).cells;
    if (cells[k] < 0) continue;
    if (thin && std::count_if(cells.begin(), cells.end(), [](auto c) { return c >= 0; }) != 1) continue;
    const auto& inner = in.at(static_cast<cond_id>(cells[k])).cells;
    for (std::uint32_t n = 0; n < inner.size(); ++n)
      if (inner[n] == 1) es.emplace_back(q, check_name(P, hf::nat(n)));
  }
  return make_name(P, es);
}

// filter {p : m(p) in G}
inline filter preimage(const filter& G, const std::vector<cond_id>& m) {
  filter out{G.P, bitset(G.P->size()), -1};
  for (cond_id p = 0; p < G.P->size(); ++p)
    if (G.contains(m[p])) out.members.set(p);
  return out;
}

// random closed formula over the given names, quantifiers bounded by those names
inline formula_id random_formula(std::mt19937_64& rng, const std::vector<name_id>& names, int depth,
                                 std::vector<std::uint32_t> vars = {}) {
  auto pick_term = [&]() -> term {
    std::uniform_int_distribution<std::size_t> d(0, names.size() + vars.size() - 1);
    std::size_t i = d(rng);
    if (i < names.size()) return term::name(names[i]);
    return term::var(vars[i - names.size()]);
  };
  std::uniform_int_distribution<int> kind(0, depth <= 0 ? 1 : 7);
  switch (kind(rng)) {
    case 0:
      return f_eq(pick_term(), pick_term());
    case 1:
      return f_in(pick_term(), pick_term());
    case 2:
      return f_not(random_formula(rng, names, depth - 1, vars));
    case 3:
      return f_and(random_formula(rng, names, depth - 1, vars), random_formula(rng, names, depth - 1, vars));
    case 4:
      return f_or(random_formula(rng, names, depth - 1, vars), random_formula(rng, names, depth - 1, vars));
    case 5:
      return f_implies(random_formula(rng, names, depth - 1, vars), random_formula(rng, names, depth - 1, vars));
    default: {
      std::uint32_t v = variables().id("v" + std::to_string(vars.size()));
      std::uniform_int_distribution<std::size_t> d(0, names.size() - 1);
      term bound = term::name(names[d(rng)]);
      auto inner = vars;
      inner.push_back(v);
      formula_id body = random_formula(rng, names, depth - 1, inner);
      return kind(rng) % 2 ? f_exists_in(v, bound, body) : f_forall_in(v, bound, body);
    }
  }
}

}  // namespace testing_support
