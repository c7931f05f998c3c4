#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "symforce/laws.hpp"
#include "symforce/poset.hpp"

namespace symforce {

inline constexpr const char* tool_version = "0.1.0";

struct check_record {
  std::string name;
  std::string anchor;
  std::string mode = "exhaustive";
  std::size_t cases = 0;
  json failures = json::array();
  double seconds = 0;  // kept out of the JSON so reports stay byte-stable
};

struct run_report {
  json config = json::object();
  std::vector<check_record> checks;

  bool passed() const {
    for (const auto& c : checks)
      if (!c.failures.empty()) return false;
    return true;
  }
  void add_laws(const std::vector<law_result>& rs) {
    for (const auto& r : rs) {
      check_record c{"law " + std::to_string(r.item), r.anchor, r.mode, r.cases, r.failures, 0};
      if (r.failure_count > r.failures.size()) c.failures.push_back({{"more", r.failure_count - r.failures.size()}});
      checks.push_back(std::move(c));
    }
  }
  json to_json() const {
    json cs = json::array();
    for (const auto& c : checks)
      cs.push_back({{"name", c.name}, {"anchor", c.anchor}, {"mode", c.mode}, {"cases", c.cases}, {"failures", c.failures}});
    return {{"tool_version", tool_version}, {"config", config}, {"checks", cs}, {"status", passed() ? "pass" : "fail"}};
  }
};

// times a callable into the record
template <class F>
check_record timed(std::string name, std::string anchor, F&& f) {
  check_record r;
  r.name = std::move(name);
  r.anchor = std::move(anchor);
  auto t0 = std::chrono::steady_clock::now();
  f(r);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace symforce
