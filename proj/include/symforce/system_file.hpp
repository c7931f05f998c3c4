#pragma once

#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "symforce/iteration.hpp"
#include "symforce/pincus.hpp"
#include "symforce/symmetry.hpp"

// JSON descriptions of systems:
//   {"kind": "trivial"}
//   {"kind": "plain", "poset": P}
//   {"kind": "T", "poset": P, "width": W, "elements": ["()", "(0 1)"], "generators": ["(0 1)"], "fix_sets": [[0]]}
//   {"kind": "two_step", "first": S, "second": S}
//   {"kind": "tower", "config": {"cohen_domain": 1, "product_width": 2, ...}}
// with P one of {"kind": "cohen", "cohen_domain": N}, {"kind": "coll", "target_size": k, "bound": C},
// {"kind": "trivial"}, {"kind": "product", "inner": P, "width": W}.
namespace symforce {

struct loaded_system {
  system_ptr S;
  std::shared_ptr<iteration> it;  // always set; depth 1 for plain systems
  std::optional<tower> t;
  json config;

  name_lookup lookup() const {
    if (!t) return {};
    const tower* tp = &*t;
    return [tp](const std::string& id) { return tp->lookup(id); };
  }
};

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw input_error("malformed JSON in " + path + ": " + e.what());
  }
}

namespace detail {

inline std::uint32_t need_uint(const json& j, const char* k) {
  if (!j.contains(k) || !j[k].is_number_integer() || j[k].get<long long>() < 0)
    throw input_error(std::string("field ") + k + " must be a non-negative integer");
  return j[k].get<std::uint32_t>();
}

inline std::string need_kind(const json& j) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) throw input_error("description needs a string kind");
  return j["kind"].get<std::string>();
}

}  // namespace detail

inline poset_ptr poset_from_json(const json& j) {
  const std::string k = detail::need_kind(j);
  if (k == "trivial") return build_trivial();
  if (k == "cohen") {
    truncation_config c;
    c.cohen_domain = detail::need_uint(j, "cohen_domain");
    return build_cohen(c);
  }
  if (k == "coll") return build_coll(detail::need_uint(j, "target_size"), detail::need_uint(j, "bound"));
  if (k == "product") {
    if (!j.contains("inner")) throw input_error("product poset needs an inner poset");
    return build_product(poset_from_json(j["inner"]), detail::need_uint(j, "width"));
  }
  throw input_error("unknown poset kind " + k);
}

inline system_ptr base_system_from_json(const json& j) {
  const std::string k = detail::need_kind(j);
  if (k == "trivial") return make_plain_system(build_trivial());
  if (k == "plain") {
    if (!j.contains("poset")) throw input_error("plain system needs a poset");
    return make_plain_system(poset_from_json(j["poset"]));
  }
  if (k != "T") throw input_error("unknown system kind " + k);
  if (!j.contains("poset")) throw input_error("T system needs a poset");
  const std::uint32_t W = detail::need_uint(j, "width");
  if (W == 0) throw input_error("width must be >= 1");
  auto R = poset_from_json(j["poset"]);
  truncation_config cfg;
  cfg.product_width = W;
  if (R->variant() == "cohen") cfg.cohen_domain = static_cast<std::uint32_t>(std::max<std::size_t>(1, R->at(0).cells.size()));
  if (!j.contains("elements") && !j.contains("generators") && !j.contains("fix_sets")) return build_T(R, W, cfg);
  auto parse_list = [&](const char* key) {
    std::vector<perm> out;
    if (!j[key].is_array()) throw input_error(std::string(key) + " must be an array of cycle strings");
    for (const auto& s : j[key]) {
      if (!s.is_string()) throw input_error(std::string(key) + " must be an array of cycle strings");
      out.push_back(perm::parse(s.get<std::string>(), W));
    }
    return out;
  };
  std::vector<perm> elements = j.contains("elements") ? parse_list("elements") : all_perms(W);
  std::vector<std::uint32_t> gens;
  if (j.contains("generators")) {
    for (const perm& g : parse_list("generators")) {
      auto f = std::find(elements.begin(), elements.end(), g);
      if (f == elements.end()) throw input_error("generator " + g.cycles() + " is not among the elements");
      gens.push_back(static_cast<std::uint32_t>(f - elements.begin()));
    }
  } else {
    for (std::uint32_t i = 0; i + 1 < W; ++i) {
      auto f = std::find(elements.begin(), elements.end(), perm::transposition(W, i, i + 1));
      if (f != elements.end()) gens.push_back(static_cast<std::uint32_t>(f - elements.begin()));
    }
  }
  std::vector<std::vector<coord>> fix_sets;
  if (j.contains("fix_sets")) {
    for (const auto& e : j["fix_sets"]) {
      std::vector<coord> cs;
      for (const auto& c : e) cs.push_back({0, c.get<std::uint32_t>()});
      std::sort(cs.begin(), cs.end());
      fix_sets.push_back(cs);
    }
  } else {
    fix_sets = all_subsets(W);
  }
  return make_base_system(build_product(R, W), W, elements, gens, fix_sets, cfg);
}

inline loaded_system load_system(const json& j) {
  loaded_system out;
  const std::string k = detail::need_kind(j);
  out.config = j;
  if (k == "tower") {
    truncation_config c = truncation_config::from_json(j.value("config", json::object()));
    out.t = build_tower(c);
    out.it = out.t->it;
  } else if (k == "two_step") {
    if (!j.contains("first") || !j.contains("second")) throw input_error("two_step needs first and second systems");
    out.it = two_step(base_system_from_json(j["first"]), base_system_from_json(j["second"]),
                      j.value("all_conditions", false));
  } else {
    out.it = std::make_shared<iteration>(base_system_from_json(j));
  }
  out.S = out.it->top();
  return out;
}

}  // namespace symforce
