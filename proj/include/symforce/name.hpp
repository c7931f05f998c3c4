#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "symforce/ground.hpp"
#include "symforce/poset.hpp"

namespace symforce {

using name_id = std::uint32_t;
using entry = std::pair<cond_id, name_id>;

struct name_node {
  std::uint32_t poset = 0;
  std::vector<entry> entries;  // sorted, unique
  std::uint32_t rank = 0;
  bool operator==(const name_node& o) const { return poset == o.poset && entries == o.entries; }
};

struct name_node_hash {
  std::size_t operator()(const name_node& n) const {
    std::size_t h = n.poset;
    for (auto [c, x] : n.entries) {
      hash_combine(h, c);
      hash_combine(h, x);
    }
    return h;
  }
};

inline interner<name_node, name_node_hash>& name_table() {
  static interner<name_node, name_node_hash> t;
  return t;
}

inline const name_node& node(name_id n) { return name_table().get(n); }
inline std::uint32_t rank(name_id n) { return node(n).rank; }
inline const std::vector<entry>& entries(name_id n) { return node(n).entries; }
inline std::uint32_t poset_of(name_id n) { return node(n).poset; }

inline name_id make_name(std::uint32_t poset_id, std::vector<entry> es) {
  std::sort(es.begin(), es.end());
  es.erase(std::unique(es.begin(), es.end()), es.end());
  name_node n;
  n.poset = poset_id;
  for (auto [c, x] : es) {
    const auto& child = node(x);
    if (child.poset != poset_id) throw input_error("name mixes conditions of different posets");
    n.rank = std::max(n.rank, child.rank + 1);
  }
  n.entries = std::move(es);
  return name_table().intern(std::move(n));
}

inline name_id make_name(const poset& P, std::vector<entry> es) {
  for (auto [c, x] : es)
    if (c >= P.size()) throw input_error("condition index outside poset");
  return make_name(P.id(), std::move(es));
}

inline name_id empty_name(const poset& P) { return make_name(P.id(), {}); }

// x-check = {(1, y-check) : y in x}
inline name_id check_name(const poset& P, hf::value x) {
  static std::mutex mu;
  static std::map<std::pair<std::uint32_t, hf::value>, name_id> memo;
  {
    std::lock_guard lock(mu);
    auto it = memo.find({P.id(), x});
    if (it != memo.end()) return it->second;
  }
  std::vector<entry> es;
  for (hf::value y : hf::members(x)) es.emplace_back(P.top(), check_name(P, y));
  name_id out = make_name(P.id(), std::move(es));
  std::lock_guard lock(mu);
  memo[{P.id(), x}] = out;
  return out;
}

// A-bullet = {1} x A
inline name_id bullet(const poset& P, const std::vector<name_id>& xs) {
  std::vector<entry> es;
  for (name_id x : xs) es.emplace_back(P.top(), x);
  return make_name(P, std::move(es));
}

// Kuratowski pair (a, b) as a bullet name
inline name_id pair_bullet(const poset& P, name_id a, name_id b) {
  return bullet(P, {bullet(P, {a}), bullet(P, {a, b})});
}

// <a_0..a_k> as the bullet name of pairs (i-check, a_i)
inline name_id tuple_bullet(const poset& P, const std::vector<name_id>& xs) {
  std::vector<name_id> ps;
  for (std::uint32_t i = 0; i < xs.size(); ++i) ps.push_back(pair_bullet(P, check_name(P, hf::nat(i)), xs[i]));
  return bullet(P, ps);
}

// Re-homes a name to another poset along a condition map (padding, restriction
// to an isomorphic copy, automorphisms when target == source).
class name_mapper {
 public:
  name_mapper(const std::vector<cond_id>& cmap, std::uint32_t target) : map_(&cmap), target_(target) {}
  name_mapper(std::vector<cond_id>&& cmap, std::uint32_t target) : own_(std::move(cmap)), map_(&own_), target_(target) {}

  name_id operator()(name_id n) {
    auto it = memo_.find(n);
    if (it != memo_.end()) return it->second;
    std::vector<entry> es;
    es.reserve(entries(n).size());
    for (auto [c, x] : entries(n)) es.emplace_back((*map_)[c], (*this)(x));
    name_id out = make_name(target_, std::move(es));
    memo_.emplace(n, out);
    return out;
  }

 private:
  std::vector<cond_id> own_;
  const std::vector<cond_id>* map_;
  std::uint32_t target_;
  std::unordered_map<name_id, name_id> memo_;
};

// x^G = {y^G : (p, y) in x, p in G}
class evaluator {
 public:
  explicit evaluator(filter G) : G_(std::move(G)) {}

  hf::value operator()(name_id n) {
    if (poset_of(n) != G_.P->id()) throw input_error("name is over a different poset than the filter");
    return eval(n);
  }
  const filter& G() const { return G_; }

 private:
  hf::value eval(name_id n) {
    auto it = memo_.find(n);
    if (it != memo_.end()) return it->second;
    std::vector<hf::value> ms;
    for (auto [c, x] : entries(n))
      if (G_.contains(c)) ms.push_back(eval(x));
    hf::value v = hf::make_set(std::move(ms));
    memo_.emplace(n, v);
    return v;
  }

  filter G_;
  std::unordered_map<name_id, hf::value> memo_;
};

inline hf::value evaluate(name_id n, const filter& G) { return evaluator(G)(n); }

// (stage, copy)
using coord = std::pair<std::uint32_t, std::uint32_t>;
using coord_fn = std::function<void(cond_id, std::set<coord>&)>;

inline std::set<coord> coordinates_used(name_id n, const coord_fn& of_condition) {
  std::set<coord> out;
  std::set<name_id> seen;
  std::set<cond_id> conds;
  std::vector<name_id> stack{n};
  while (!stack.empty()) {
    name_id x = stack.back();
    stack.pop_back();
    if (!seen.insert(x).second) continue;
    for (auto [c, y] : entries(x)) {
      conds.insert(c);
      stack.push_back(y);
    }
  }
  for (cond_id c : conds) of_condition(c, out);
  return out;
}

// copies in the domain of a product condition, as stage-0 coordinates
inline coord_fn product_coords(const poset& P) {
  return [&P](cond_id c, std::set<coord>& out) {
    const auto& cells = P.at(c).cells;
    for (std::uint32_t k = 0; k < cells.size(); ++k)
      if (cells[k] >= 0) out.insert({0, k});
  };
}

// every node reachable from n, children before parents
inline std::vector<name_id> subnames(name_id n) {
  std::vector<name_id> order;
  std::set<name_id> seen;
  std::function<void(name_id)> visit = [&](name_id x) {
    if (!seen.insert(x).second) return;
    for (auto [c, y] : entries(x)) visit(y);
    order.push_back(x);
  };
  visit(n);
  return order;
}

// Names(R) over a declared condition set: all names of rank <= R whose
// entries pair a declared condition with a previously generated name (or a
// declared seed), at most max_entries entries per node.
struct universe_spec {
  std::vector<cond_id> conditions;
  std::vector<name_id> seeds;
  std::uint32_t rank = 1;
  std::uint32_t max_entries = 2;
  std::size_t budget = 200000;
};

inline std::vector<name_id> generate_universe(const poset& P, const universe_spec& u) {
  const std::size_t budget = search_budget(u.budget);
  std::vector<name_id> pool{empty_name(P)};
  std::set<name_id> have(pool.begin(), pool.end());
  for (name_id s : u.seeds)
    if (rank(s) <= u.rank && have.insert(s).second) pool.push_back(s);
  for (std::uint32_t r = 1; r <= u.rank; ++r) {
    std::vector<entry> cand;
    for (cond_id c : u.conditions)
      for (name_id x : pool)
        if (rank(x) < r) cand.emplace_back(c, x);
    // count subsets of size <= max_entries before generating
    double total = 1, term = 1;
    for (std::uint32_t k = 1; k <= u.max_entries && k <= cand.size(); ++k) {
      term = term * static_cast<double>(cand.size() - k + 1) / k;
      total += term;
    }
    if (total + pool.size() > static_cast<double>(budget))
      throw budget_error("name universe of rank " + std::to_string(r) + " exceeds budget " + std::to_string(budget));
    std::vector<std::size_t> pick;
    std::function<void(std::size_t)> rec = [&](std::size_t from) {
      std::vector<entry> es;
      for (auto i : pick) es.push_back(cand[i]);
      name_id x = make_name(P, es);
      if (have.insert(x).second) pool.push_back(x);
      if (pick.size() == u.max_entries) return;
      for (std::size_t i = from; i < cand.size(); ++i) {
        pick.push_back(i);
        rec(i + 1);
        pick.pop_back();
      }
    };
    rec(0);
  }
  return pool;
}

// ---- JSON ---------------------------------------------------------------

inline json name_to_json(const poset& P, name_id n) {
  json arr = json::array();
  for (auto [c, x] : entries(n)) arr.push_back(json::array({P.literal(c), name_to_json(P, x)}));
  return {{"entries", arr}};
}

using name_lookup = std::function<name_id(const std::string&)>;

// {"entries": [[cond, name], ...]}, {"check": literal}, {"ref": "g_0_1"} or a bare registry string
inline name_id name_from_json(const poset& P, const json& j, const name_lookup& lookup = {}) {
  if (j.is_string()) {
    if (!lookup) throw input_error("no registry available for name reference " + j.get<std::string>());
    return lookup(j.get<std::string>());
  }
  if (!j.is_object()) throw input_error("bad name literal: " + j.dump());
  if (j.contains("ref")) return name_from_json(P, j["ref"], lookup);
  if (j.contains("check")) return check_name(P, hf::from_json(j["check"]));
  if (!j.contains("entries") || !j["entries"].is_array()) throw input_error("name literal needs entries: " + j.dump());
  std::vector<entry> es;
  for (const auto& e : j["entries"]) {
    if (!e.is_array() || e.size() != 2) throw input_error("name entry must be [cond, name]");
    es.emplace_back(P.parse_literal(e[0]), name_from_json(P, e[1], lookup));
  }
  return make_name(P, std::move(es));
}

}  // namespace symforce
