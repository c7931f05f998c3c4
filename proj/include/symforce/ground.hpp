#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "symforce/interner.hpp"

// Hereditarily finite sets in sorted-dedup normal form. Two values are
// extensionally equal iff their ids are equal.
namespace symforce::hf {

using value = std::uint32_t;

struct node {
  std::vector<value> members;  // sorted, unique
  std::uint32_t rank = 0;
  bool operator==(const node& o) const { return members == o.members; }
};

struct node_hash {
  std::size_t operator()(const node& n) const {
    std::size_t h = n.members.size();
    for (value v : n.members) hash_combine(h, v);
    return h;
  }
};

inline interner<node, node_hash>& table() {
  static interner<node, node_hash> t;
  return t;
}

inline value make_set(std::vector<value> members) {
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  node n;
  for (value m : members) n.rank = std::max(n.rank, table().get(m).rank + 1);
  n.members = std::move(members);
  return table().intern(std::move(n));
}

inline value empty() {
  static const value e = make_set({});
  return e;
}

inline const std::vector<value>& members(value v) { return table().get(v).members; }
inline std::uint32_t rank(value v) { return table().get(v).rank; }

inline bool contains(value set, value x) {
  const auto& m = members(set);
  return std::binary_search(m.begin(), m.end(), x);
}

inline bool subset(value a, value b) {
  const auto& ma = members(a);
  const auto& mb = members(b);
  return std::includes(mb.begin(), mb.end(), ma.begin(), ma.end());
}

inline value singleton(value a) { return make_set({a}); }

// von Neumann natural number
inline value nat(std::uint32_t n) {
  static std::vector<value> cache;
  static std::mutex mu;
  std::lock_guard lock(mu);
  if (cache.empty()) cache.push_back(empty());
  while (cache.size() <= n) {
    std::vector<value> prev(cache.begin(), cache.end());
    cache.push_back(make_set(std::move(prev)));
  }
  return cache[n];
}

inline std::optional<std::uint32_t> as_nat(value v) {
  std::uint32_t k = static_cast<std::uint32_t>(members(v).size());
  if (k > 256) return std::nullopt;
  if (nat(k) == v) return k;
  return std::nullopt;
}

// Ackermann coding: n = sum of 2^i over i in the set. Compact for large codes.
inline value ackermann(std::uint64_t n) {
  std::vector<value> m;
  for (std::uint32_t i = 0; i < 64; ++i)
    if (n >> i & 1) m.push_back(ackermann(i));
  return make_set(std::move(m));
}

inline value pair(value a, value b) { return make_set({singleton(a), make_set({a, b})}); }

inline std::optional<std::pair<value, value>> as_pair(value p) {
  const auto& m = members(p);
  if (m.size() == 1) {
    const auto& inner = members(m[0]);
    if (inner.size() != 1) return std::nullopt;
    return std::make_pair(inner[0], inner[0]);
  }
  if (m.size() != 2) return std::nullopt;
  value s = members(m[0]).size() == 1 ? m[0] : m[1];
  value d = s == m[0] ? m[1] : m[0];
  if (members(s).size() != 1 || members(d).size() != 2) return std::nullopt;
  value a = members(s)[0];
  if (!contains(d, a)) return std::nullopt;
  value b = members(d)[0] == a ? members(d)[1] : members(d)[0];
  return std::make_pair(a, b);
}

// tuple <a_0..a_{k-1}> as the function {(i, a_i)}
inline value tuple(const std::vector<value>& xs) {
  std::vector<value> m;
  for (std::uint32_t i = 0; i < xs.size(); ++i) m.push_back(pair(nat(i), xs[i]));
  return make_set(std::move(m));
}

// finite partial map from naturals to values, as a set of pairs
inline value nat_map(const std::vector<std::pair<std::uint32_t, value>>& kv) {
  std::vector<value> m;
  for (auto [k, v] : kv) m.push_back(pair(nat(k), v));
  return make_set(std::move(m));
}

inline std::string to_string(value v) {
  if (auto n = as_nat(v); n && *n < 64) return std::to_string(*n);
  std::string s = "{";
  bool first = true;
  for (value m : members(v)) {
    if (!first) s += ",";
    first = false;
    s += to_string(m);
  }
  return s + "}";
}

// JSON literal: a natural number, or an array of literals read as a set.
inline value from_json(const nlohmann::json& j) {
  if (j.is_number_unsigned() || j.is_number_integer()) {
    auto n = j.get<long long>();
    if (n < 0 || n > 256) throw input_error("ground literal out of range: " + j.dump());
    return nat(static_cast<std::uint32_t>(n));
  }
  if (j.is_array()) {
    std::vector<value> m;
    for (const auto& e : j) m.push_back(from_json(e));
    return make_set(std::move(m));
  }
  throw input_error("bad ground literal: " + j.dump());
}

inline nlohmann::json to_json(value v) {
  if (auto n = as_nat(v); n && *n < 64) return *n;
  auto arr = nlohmann::json::array();
  for (value m : members(v)) arr.push_back(to_json(m));
  return arr;
}

}  // namespace symforce::hf
