#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "symforce/errors.hpp"

namespace symforce {

// A permutation of {0..n-1}; img[i] is the image of i.
struct perm {
  std::vector<std::uint32_t> img;

  static perm identity(std::uint32_t n) {
    perm p;
    p.img.resize(n);
    std::iota(p.img.begin(), p.img.end(), 0u);
    return p;
  }
  static perm transposition(std::uint32_t n, std::uint32_t i, std::uint32_t j) {
    perm p = identity(n);
    std::swap(p.img[i], p.img[j]);
    return p;
  }

  std::uint32_t size() const { return static_cast<std::uint32_t>(img.size()); }
  std::uint32_t operator()(std::uint32_t i) const { return img[i]; }
  bool is_identity() const {
    for (std::uint32_t i = 0; i < size(); ++i)
      if (img[i] != i) return false;
    return true;
  }
  bool operator==(const perm& o) const { return img == o.img; }
  bool operator<(const perm& o) const { return img < o.img; }

  perm inverse() const {
    perm p;
    p.img.resize(size());
    for (std::uint32_t i = 0; i < size(); ++i) p.img[img[i]] = i;
    return p;
  }

  // pointwise image of a set
  std::vector<std::uint32_t> image(const std::vector<std::uint32_t>& e) const {
    std::vector<std::uint32_t> out;
    for (auto i : e) out.push_back(img.at(i));
    std::sort(out.begin(), out.end());
    return out;
  }

  bool fixes_all(const std::vector<std::uint32_t>& e) const {
    for (auto i : e)
      if (img.at(i) != i) return false;
    return true;
  }

  // "(0 1)(3 4)"; the identity renders as "()"
  std::string cycles() const {
    std::string s;
    std::vector<char> seen(size(), 0);
    for (std::uint32_t i = 0; i < size(); ++i) {
      if (seen[i] || img[i] == i) continue;
      s += "(";
      std::uint32_t j = i;
      bool first = true;
      while (!seen[j]) {
        seen[j] = 1;
        if (!first) s += " ";
        first = false;
        s += std::to_string(j);
        j = img[j];
      }
      s += ")";
    }
    return s.empty() ? "()" : s;
  }

  static perm parse(const std::string& text, std::uint32_t n) {
    perm p = identity(n);
    std::vector<char> used(n, 0);
    std::size_t i = 0;
    auto skip = [&] {
      while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    };
    skip();
    while (i < text.size()) {
      if (text[i] != '(') throw input_error("bad cycle notation: " + text);
      ++i;
      std::vector<std::uint32_t> cyc;
      while (true) {
        skip();
        if (i < text.size() && text[i] == ')') {
          ++i;
          break;
        }
        std::size_t j = i;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
        if (j == i) throw input_error("bad cycle notation: " + text);
        unsigned long v = std::stoul(text.substr(i, j - i));
        if (v >= n) throw input_error("cycle entry " + std::to_string(v) + " outside width " + std::to_string(n));
        if (used[v]) throw input_error("cycle entry repeated: " + text);
        used[v] = 1;
        cyc.push_back(static_cast<std::uint32_t>(v));
        i = j;
      }
      for (std::size_t k = 0; k < cyc.size(); ++k) p.img[cyc[k]] = cyc[(k + 1) % cyc.size()];
      skip();
    }
    return p;
  }
};

// a o b: apply b first
inline perm compose(const perm& a, const perm& b) {
  perm p;
  p.img.resize(b.size());
  for (std::uint32_t i = 0; i < b.size(); ++i) p.img[i] = a.img[b.img[i]];
  return p;
}

inline std::vector<perm> all_perms(std::uint32_t n) {
  std::vector<perm> out;
  perm p = perm::identity(n);
  do out.push_back(p);
  while (std::next_permutation(p.img.begin(), p.img.end()));
  return out;
}

}  // namespace symforce
