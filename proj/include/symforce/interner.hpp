#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "symforce/errors.hpp"

namespace symforce {

inline void hash_combine(std::size_t& seed, std::size_t v) {
  seed ^= v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2);
}

// Search budget: SYMFORCE_BUDGET overrides every default when set.
inline std::size_t search_budget(std::size_t fallback) {
  if (const char* s = std::getenv("SYMFORCE_BUDGET")) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(s, &end, 10);
    if (end != s && v > 0) return static_cast<std::size_t>(v);
  }
  return fallback;
}

// Append-only hash-cons table. Ids are dense and stable; reading a node by id
// never takes the lock because chunks are never moved once published.
template <class Node, class Hash = std::hash<Node>>
class interner {
 public:
  static constexpr std::size_t chunk_bits = 12;
  static constexpr std::size_t chunk_size = std::size_t{1} << chunk_bits;
  static constexpr std::size_t max_chunks = std::size_t{1} << 18;

  interner() { chunks_.reserve(max_chunks); }

  std::uint32_t intern(Node n) {
    std::size_t h = Hash{}(n);
    std::lock_guard lock(mu_);
    auto& bucket = index_[h];
    for (std::uint32_t id : bucket)
      if (get(id) == n) return id;
    std::uint32_t id = size_.load(std::memory_order_relaxed);
    if ((id >> chunk_bits) >= chunks_.size()) {
      if (chunks_.size() == max_chunks) throw budget_error("hash-cons table is full");
      chunks_.push_back(std::make_unique<Node[]>(chunk_size));
    }
    chunks_[id >> chunk_bits][id & (chunk_size - 1)] = std::move(n);
    bucket.push_back(id);
    size_.store(id + 1, std::memory_order_release);
    return id;
  }

  const Node& get(std::uint32_t id) const { return chunks_[id >> chunk_bits][id & (chunk_size - 1)]; }

  std::size_t size() const { return size_.load(std::memory_order_acquire); }

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::size_t, std::vector<std::uint32_t>> index_;
  std::vector<std::unique_ptr<Node[]>> chunks_;
  std::atomic<std::uint32_t> size_{0};
};

}  // namespace symforce
