#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "skl/matrix.hpp"

namespace skl {

// Per-training-sample store of frozen-path activations, directly indexed by
// the dataset sample index. Entries are inserted once and never mutated for
// the lifetime of one fine-tuning run; lookup touches exactly one slot.
class SkipCache {
 public:
  struct Entry {
    // acts[k-1] holds the cached vector for layer k: the post-block output
    // for k < n, the pre-adapter FC output for k = n.
    std::vector<std::vector<float>> acts;
  };
  struct Stats {
    std::uint64_t hits = 0;
    std::uint64_t misses = 0;
    std::size_t occupancy = 0;
    std::size_t bytes_used = 0;  // payload bytes of stored activations
  };

  // layer_dims is the full model shape [d0, ..., dn]; entries store d1..dn.
  SkipCache(std::size_t num_samples, const std::vector<int>& layer_dims);

  std::size_t capacity() const { return slots_.size(); }

  // Returns the entry and counts a hit if present, counts a miss otherwise.
  const Entry* lookup(std::size_t i);

  // Counter-free access to a slot known to be occupied.
  const Entry& entry(std::size_t i) const;

  void insert(std::size_t i, std::vector<std::vector<float>> acts);

  Stats stats() const {
    return {hits_, misses_, occupancy_, payload_bytes_};
  }

 private:
  void check_index(std::size_t i) const;

  std::vector<int> entry_dims_;  // d1..dn
  std::vector<std::optional<Entry>> slots_;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
  std::size_t occupancy_ = 0;
  std::size_t payload_bytes_ = 0;
};

}  // namespace skl
