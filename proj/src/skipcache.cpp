#include "skl/skipcache.hpp"

#include <string>

namespace skl {

SkipCache::SkipCache(std::size_t num_samples,
                     const std::vector<int>& layer_dims) {
  if (num_samples == 0)
    throw ContractError("SkipCache: need at least one sample slot");
  if (layer_dims.size() < 2)
    throw ContractError("SkipCache: need at least two layer dims");
  entry_dims_.assign(layer_dims.begin() + 1, layer_dims.end());
  slots_.resize(num_samples);
}

void SkipCache::check_index(std::size_t i) const {
  if (i >= slots_.size())
    throw ContractError("SkipCache: sample index " + std::to_string(i) +
                        " out of range [0, " + std::to_string(slots_.size()) +
                        ")");
}

const SkipCache::Entry* SkipCache::lookup(std::size_t i) {
  check_index(i);
  if (slots_[i]) {
    ++hits_;
    return &*slots_[i];
  }
  ++misses_;
  return nullptr;
}

const SkipCache::Entry& SkipCache::entry(std::size_t i) const {
  check_index(i);
  if (!slots_[i])
    throw ContractError("SkipCache: slot " + std::to_string(i) + " is empty");
  return *slots_[i];
}

void SkipCache::insert(std::size_t i, std::vector<std::vector<float>> acts) {
  check_index(i);
  if (slots_[i])
    throw ContractError("SkipCache: slot " + std::to_string(i) +
                        " already occupied; entries are immutable");
  if (acts.size() != entry_dims_.size())
    throw ContractError("SkipCache: expected " +
                        std::to_string(entry_dims_.size()) +
                        " activation vectors, got " +
                        std::to_string(acts.size()));
  std::size_t bytes = 0;
  for (std::size_t k = 0; k < acts.size(); ++k) {
    if (static_cast<int>(acts[k].size()) != entry_dims_[k])
      throw ContractError("SkipCache: layer " + std::to_string(k + 1) +
                          " vector has length " +
                          std::to_string(acts[k].size()) + ", expected " +
                          std::to_string(entry_dims_[k]));
    bytes += acts[k].size() * sizeof(float);
  }
  slots_[i] = Entry{std::move(acts)};
  ++occupancy_;
  payload_bytes_ += bytes;
}

}  // namespace skl
