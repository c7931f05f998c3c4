#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <boost/dynamic_bitset.hpp>
#include <json.hpp>

#include "symforce/errors.hpp"
#include "symforce/interner.hpp"

namespace symforce {

using json = nlohmann::json;
using cond_id = std::uint32_t;
using bitset = boost::dynamic_bitset<std::uint64_t>;

struct truncation_config {
  std::uint32_t cohen_domain = 1;      // N
  std::uint32_t product_width = 1;     // W
  std::uint32_t coll_target_bound = 1; // C
  std::uint32_t iteration_depth = 1;   // D
  std::uint32_t name_rank_bound = 2;   // R

  void validate() const {
    if (!cohen_domain || !product_width || !coll_target_bound || !iteration_depth || !name_rank_bound)
      throw input_error("truncation config fields must be >= 1");
  }
  json to_json() const {
    return {{"cohen_domain", cohen_domain},
            {"product_width", product_width},
            {"coll_target_bound", coll_target_bound},
            {"iteration_depth", iteration_depth},
            {"name_rank_bound", name_rank_bound}};
  }
  static truncation_config from_json(const json& j) {
    truncation_config c;
    auto get = [&](const char* k, std::uint32_t& f) {
      if (!j.contains(k)) return;
      if (!j[k].is_number_integer() || j[k].get<long long>() < 1)
        throw input_error(std::string("config field ") + k + " must be a positive integer");
      f = j[k].get<std::uint32_t>();
    };
    get("cohen_domain", c.cohen_domain);
    get("product_width", c.product_width);
    get("coll_target_bound", c.coll_target_bound);
    get("iteration_depth", c.iteration_depth);
    get("name_rank_bound", c.name_rank_bound);
    return c;
  }
};

// A condition is a finite partial function, stored densely: cells[i] < 0 means
// i is outside the domain. For product cells the value is an index into the
// inner poset; for iteration sequences the entries are stage catalog ids.
struct condition {
  enum class kind : std::uint8_t { point, cohen, product, coll, iter };
  kind k = kind::point;
  std::vector<std::int32_t> cells;

  bool defined(std::size_t i) const { return i < cells.size() && cells[i] >= 0; }
  bool operator==(const condition& o) const { return k == o.k && cells == o.cells; }
};

struct condition_hash {
  std::size_t operator()(const condition& c) const {
    std::size_t h = static_cast<std::size_t>(c.k);
    for (auto v : c.cells) hash_combine(h, static_cast<std::size_t>(v + 1));
    return h;
  }
};

class poset;
using poset_ptr = std::shared_ptr<const poset>;

inline std::uint32_t next_poset_id() {
  static std::atomic<std::uint32_t> counter{1};
  return counter++;
}

class poset {
 public:
  static constexpr std::size_t matrix_limit = 4096;

  struct spec {
    std::string variant;
    json config = json::object();
    std::vector<condition> conditions;            // index 0 must be the top
    std::function<bool(cond_id, cond_id)> leq;    // leq(q, p): q <= p
    std::optional<std::vector<cond_id>> atoms;    // one representative per minimal class, if known
    poset_ptr inner;                              // product: the inner poset
    std::function<json(cond_id)> literal;         // optional override for rendering
  };

  static poset_ptr make(spec s) {
    auto p = std::shared_ptr<poset>(new poset(std::move(s)));
    p->finish();
    return p;
  }

  std::uint32_t id() const { return id_; }
  std::size_t size() const { return s_.conditions.size(); }
  const std::string& variant() const { return s_.variant; }
  const json& config() const { return s_.config; }
  const poset_ptr& inner() const { return s_.inner; }
  const condition& at(cond_id p) const { return s_.conditions.at(p); }
  const std::vector<condition>& conditions() const { return s_.conditions; }
  cond_id top() const { return 0; }

  bool leq(cond_id q, cond_id p) const {
    if (has_matrix()) return below_[p][q];
    return s_.leq(q, p);
  }
  bool has_matrix() const { return !below_.empty(); }
  // {q : q <= p}; only available for posets within matrix_limit
  const bitset& below(cond_id p) const {
    if (!has_matrix()) throw budget_error("poset of size " + std::to_string(size()) + " has no order matrix");
    return below_[p];
  }

  const std::vector<cond_id>& atoms() const { return atoms_; }
  const bitset& atoms_below(cond_id p) const { return atoms_below_[p]; }
  // index of the minimal class containing p, or -1 when p is not minimal
  int minimal_class(cond_id p) const { return minimal_class_[p]; }
  int class_of_atom_condition(cond_id m) const { return minimal_class_[m]; }

  // finite posets: p and q are compatible iff some minimal condition lies below both
  bool compatible(cond_id p, cond_id q) const { return atoms_below_[p].intersects(atoms_below_[q]); }

  std::optional<cond_id> find(const condition& c) const {
    auto it = index_.find(c);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  json literal(cond_id p) const {
    if (s_.literal) return s_.literal(p);
    const condition& c = at(p);
    json j = json::object();
    for (std::size_t i = 0; i < c.cells.size(); ++i) {
      if (c.cells[i] < 0) continue;
      if (c.k == condition::kind::product)
        j[std::to_string(i)] = s_.inner->literal(static_cast<cond_id>(c.cells[i]));
      else
        j[std::to_string(i)] = c.cells[i];
    }
    return j;
  }

  // Accepts a condition index, or a map literal for cohen / coll / product posets.
  cond_id parse_literal(const json& j) const {
    if (j.is_number_integer()) {
      auto v = j.get<long long>();
      if (v < 0 || static_cast<std::size_t>(v) >= size()) throw input_error("condition index out of range");
      return static_cast<cond_id>(v);
    }
    if (!j.is_object()) throw input_error("condition literal must be an object or an index: " + j.dump());
    if (size() == 0) throw input_error("empty poset");
    condition c;
    c.k = at(0).k;
    c.cells.assign(at(0).cells.size(), -1);
    for (auto& [key, val] : j.items()) {
      std::size_t i;
      try {
        i = std::stoul(key);
      } catch (...) {
        throw input_error("condition key is not an integer: " + key);
      }
      if (i >= c.cells.size()) throw input_error("condition key out of range: " + key);
      if (c.k == condition::kind::product)
        c.cells[i] = static_cast<std::int32_t>(s_.inner->parse_literal(val));
      else if (c.k == condition::kind::cohen || c.k == condition::kind::coll) {
        if (!val.is_number_integer()) throw input_error("cell value must be an integer");
        c.cells[i] = val.get<std::int32_t>();
      } else
        throw input_error("map literals are not accepted for variant " + variant());
    }
    auto found = find(c);
    if (!found) throw input_error("condition literal not in poset: " + j.dump());
    return *found;
  }

  json describe() const { return {{"variant", variant()}, {"config", config()}, {"size", size()}}; }

 private:
  explicit poset(spec s) : s_(std::move(s)), id_(next_poset_id()) {}

  void finish() {
    const std::size_t n = size();
    if (n == 0) throw input_error("poset must be nonempty");
    for (cond_id i = 0; i < n; ++i) {
      if (!index_.emplace(s_.conditions[i], i).second) throw input_error("duplicate condition in poset universe");
    }
    if (n <= matrix_limit) {
      below_.assign(n, bitset(n));
      for (cond_id p = 0; p < n; ++p)
        for (cond_id q = 0; q < n; ++q)
          if (s_.leq(q, p)) below_[p].set(q);
    }
    if (s_.atoms) {
      atoms_ = *s_.atoms;
    } else {
      // minimal: every r <= q satisfies q <= r; one representative per class
      std::vector<char> taken(n, 0);
      for (cond_id q = 0; q < n; ++q) {
        bool minimal = true;
        for (cond_id r = 0; r < n && minimal; ++r)
          if (leq(r, q) && !leq(q, r)) minimal = false;
        if (!minimal || taken[q]) continue;
        atoms_.push_back(q);
        for (cond_id r = q; r < n; ++r)
          if (leq(r, q) && leq(q, r)) taken[r] = 1;
      }
    }
    const std::size_t a = atoms_.size();
    atoms_below_.assign(n, bitset(a));
    minimal_class_.assign(n, -1);
    for (cond_id p = 0; p < n; ++p) {
      for (std::size_t k = 0; k < a; ++k)
        if (leq(atoms_[k], p)) atoms_below_[p].set(k);
      if (atoms_below_[p].count() == 1) {
        std::size_t k = atoms_below_[p].find_first();
        if (leq(p, atoms_[k])) minimal_class_[p] = static_cast<int>(k);
      }
    }
    for (cond_id p = 0; p < n; ++p)
      if (atoms_below_[p].none()) throw input_error("condition with no minimal extension: finite posets must be atomic");
  }

  spec s_;
  std::uint32_t id_;
  std::unordered_map<condition, cond_id, condition_hash> index_;
  std::vector<bitset> below_;
  std::vector<cond_id> atoms_;
  std::vector<bitset> atoms_below_;
  std::vector<int> minimal_class_;
};

// ---- constructors ---------------------------------------------------------

namespace detail {

// all partial maps dom -> {0..values-1}, top first, in base (values+1) order
inline std::vector<condition> partial_maps(condition::kind k, std::uint32_t dom, std::uint32_t values) {
  std::vector<condition> out;
  std::vector<std::int32_t> digits(dom, -1);
  while (true) {
    out.push_back({k, digits});
    std::size_t i = 0;
    while (i < dom) {
      if (digits[i] + 1 < static_cast<std::int32_t>(values)) {
        ++digits[i];
        break;
      }
      digits[i] = -1;
      ++i;
    }
    if (i == dom) break;
  }
  return out;
}

inline bool extends(const condition& q, const condition& p) {
  for (std::size_t i = 0; i < p.cells.size(); ++i)
    if (p.cells[i] >= 0 && q.cells[i] != p.cells[i]) return false;
  return true;
}

inline std::vector<cond_id> total_maps(const std::vector<condition>& cs) {
  std::vector<cond_id> out;
  for (cond_id i = 0; i < cs.size(); ++i) {
    bool total = true;
    for (auto v : cs[i].cells) total = total && v >= 0;
    if (total) out.push_back(i);
  }
  return out;
}

}  // namespace detail

inline poset_ptr build_trivial() {
  poset::spec s;
  s.variant = "trivial";
  s.conditions = {condition{}};
  s.leq = [](cond_id, cond_id) { return true; };
  return poset::make(std::move(s));
}

inline poset_ptr build_cohen(const truncation_config& cfg) {
  cfg.validate();
  poset::spec s;
  s.variant = "cohen";
  s.config = {{"cohen_domain", cfg.cohen_domain}};
  s.conditions = detail::partial_maps(condition::kind::cohen, cfg.cohen_domain, 2);
  auto cs = std::make_shared<std::vector<condition>>(s.conditions);
  s.leq = [cs](cond_id q, cond_id p) { return detail::extends((*cs)[q], (*cs)[p]); };
  s.atoms = detail::total_maps(s.conditions);
  return poset::make(std::move(s));
}

inline poset_ptr build_coll(std::uint32_t target_size, std::uint32_t bound) {
  if (target_size < 1 || bound < 1) throw input_error("collapse target size and bound must be >= 1");
  poset::spec s;
  s.variant = "coll";
  s.config = {{"target_size", target_size}, {"coll_target_bound", bound}};
  s.conditions = detail::partial_maps(condition::kind::coll, bound, target_size);
  auto cs = std::make_shared<std::vector<condition>>(s.conditions);
  s.leq = [cs](cond_id q, cond_id p) { return detail::extends((*cs)[q], (*cs)[p]); };
  s.atoms = detail::total_maps(s.conditions);
  return poset::make(std::move(s));
}

inline poset_ptr build_product(const poset_ptr& inner, std::uint32_t width) {
  if (width < 1) throw input_error("product width must be >= 1");
  std::size_t n = 1;
  for (std::uint32_t i = 0; i < width; ++i) {
    n *= inner->size() + 1;
    if (n > search_budget(4'000'000)) throw budget_error("product poset too large");
  }
  poset::spec s;
  s.variant = "product";
  s.config = {{"product_width", width}, {"inner", inner->describe()}};
  s.inner = inner;
  s.conditions = detail::partial_maps(condition::kind::product, width, static_cast<std::uint32_t>(inner->size()));
  auto cs = std::make_shared<std::vector<condition>>(s.conditions);
  s.leq = [cs, inner](cond_id q, cond_id p) {
    const auto& qc = (*cs)[q];
    const auto& pc = (*cs)[p];
    for (std::size_t k = 0; k < pc.cells.size(); ++k) {
      if (pc.cells[k] < 0) continue;
      if (qc.cells[k] < 0) return false;
      if (!inner->leq(static_cast<cond_id>(qc.cells[k]), static_cast<cond_id>(pc.cells[k]))) return false;
    }
    return true;
  };
  // minimal classes: every copy present and minimal in the inner poset
  std::vector<cond_id> atoms;
  std::unordered_map<condition, cond_id, condition_hash> idx;
  for (cond_id i = 0; i < s.conditions.size(); ++i) idx.emplace(s.conditions[i], i);
  const auto& ia = inner->atoms();
  std::vector<std::size_t> pick(width, 0);
  while (true) {
    condition c{condition::kind::product, std::vector<std::int32_t>(width)};
    for (std::uint32_t k = 0; k < width; ++k) c.cells[k] = static_cast<std::int32_t>(ia[pick[k]]);
    atoms.push_back(idx.at(c));
    std::uint32_t k = 0;
    while (k < width && ++pick[k] == ia.size()) pick[k++] = 0;
    if (k == width) break;
  }
  s.atoms = std::move(atoms);
  return poset::make(std::move(s));
}

// ---- density and filters --------------------------------------------------

// literal definition: every q <= p has some r <= q in D
inline bool dense_below_exhaustive(const poset& P, const bitset& D, cond_id p) {
  for (cond_id q = 0; q < P.size(); ++q) {
    if (!P.below(p)[q]) continue;
    if (!P.below(q).intersects(D)) return false;
  }
  return true;
}

// finite posets: D is dense below p iff every minimal class below p has a member in D
inline bool dense_below_atomic(const poset& P, const bitset& D, cond_id p) {
  bitset hit(P.atoms().size());
  for (cond_id r = 0; r < P.size(); ++r)
    if (D[r] && P.minimal_class(r) >= 0) hit.set(static_cast<std::size_t>(P.minimal_class(r)));
  return P.atoms_below(p).is_subset_of(hit);
}

inline bool dense_below(const poset& P, const bitset& D, cond_id p) {
  if (D.size() != P.size()) throw input_error("dense set is not over this poset");
  return P.has_matrix() ? dense_below_exhaustive(P, D, p) : dense_below_atomic(P, D, p);
}

struct filter {
  poset_ptr P;
  bitset members;
  int atom = -1;  // minimal class generating the filter, when generic

  bool contains(cond_id p) const { return members[p]; }
};

inline filter up_closure_of_atom(const poset_ptr& P, std::size_t k) {
  filter f{P, bitset(P->size()), static_cast<int>(k)};
  for (cond_id p = 0; p < P->size(); ++p)
    if (P->atoms_below(p)[k]) f.members.set(p);
  return f;
}

inline std::vector<filter> generic_filters(const poset_ptr& P) {
  std::vector<filter> out;
  for (std::size_t k = 0; k < P->atoms().size(); ++k) out.push_back(up_closure_of_atom(P, k));
  return out;
}

// upward closed, downward directed, nonempty
inline bool is_filter(const poset& P, const bitset& F) {
  if (F.none()) return false;
  for (cond_id p = 0; p < P.size(); ++p) {
    if (!F[p]) continue;
    for (cond_id q = 0; q < P.size(); ++q)
      if (P.leq(p, q) && !F[q]) return false;
  }
  for (cond_id a = 0; a < P.size(); ++a) {
    if (!F[a]) continue;
    for (cond_id b = a + 1; b < P.size(); ++b) {
      if (!F[b]) continue;
      bool common = false;
      for (cond_id c = 0; c < P.size() && !common; ++c) common = F[c] && P.leq(c, a) && P.leq(c, b);
      if (!common) return false;
    }
  }
  return true;
}

}  // namespace symforce
