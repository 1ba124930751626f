#pragma once

#include <cstdint>
#include <vector>

#include "skl/data.hpp"
#include "skl/network.hpp"
#include "skl/rng.hpp"
#include "skl/skipcache.hpp"

namespace skl {

struct TrainConfig {
  int epochs = 1;
  int batch_size = 20;
  float learning_rate = 0.01f;
  std::uint64_t seed = 0;
  FineTuneMode mode = FineTuneMode::FTAll;
  bool cache_enabled = false;  // only valid with Skip2LoRA
  enum class Sampling { WithReplacement, ShuffledEpochs };
  Sampling sampling = Sampling::WithReplacement;

  void validate() const;
};

struct BatchRecord {
  int epoch = 0;
  int batch = 0;
  float loss = 0.0f;
  std::uint64_t fc_fwd_macs = 0;  // frozen-path forward (FC + BN kernels)
  std::uint64_t lora_fwd_macs = 0;
  std::uint64_t bwd_macs = 0;
  std::uint64_t update_macs = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t cache_misses = 0;
  std::uint64_t elapsed_us = 0;
};

struct RunMetrics {
  std::vector<BatchRecord> batches;
  int epochs = 0;
  int batches_per_epoch = 0;
  std::uint64_t total_fc_fwd_macs = 0;
  std::uint64_t total_lora_fwd_macs = 0;
  std::uint64_t total_bwd_macs = 0;
  std::uint64_t total_update_macs = 0;
  std::uint64_t total_hits = 0;
  std::uint64_t total_misses = 0;
  std::uint64_t fwd_us = 0;
  std::uint64_t bwd_us = 0;
  std::uint64_t update_us = 0;
  std::uint64_t total_us = 0;
  // Same phase totals with the first (all-miss) epoch excluded.
  std::uint64_t fwd_us_excl_first = 0;
  std::uint64_t bwd_us_excl_first = 0;
  std::uint64_t update_us_excl_first = 0;
  float final_loss = 0.0f;

  std::uint64_t total_fwd_macs() const {
    return total_fc_fwd_macs + total_lora_fwd_macs;
  }
  std::uint64_t total_macs() const {
    return total_fwd_macs() + total_bwd_macs + total_update_macs;
  }
};

// Aggregated view of a MacCounter by label convention:
// "FC*.fwd", "BN*.fwd", "LoRA*.fwd", "*.bwd", "update".
struct MacBreakdown {
  std::uint64_t fc_fwd = 0;
  std::uint64_t bn_fwd = 0;
  std::uint64_t lora_fwd = 0;
  std::uint64_t bwd = 0;
  std::uint64_t update = 0;

  std::uint64_t frozen_fwd() const { return fc_fwd + bn_fwd; }
};
MacBreakdown mac_breakdown(const MacCounter& mc);

// B indices drawn uniformly with replacement from [0, num_samples).
std::vector<std::uint32_t> sample_batch(Rng& rng, std::size_t num_samples,
                                        int batch_size);

Matrix gather_rows(const Matrix& features,
                   const std::vector<std::uint32_t>& indices);

// Cache-aware forward for the skip wiring: frozen-path activations are read
// from the cache on a hit and computed-then-inserted on a miss; the adapter
// recomposition runs for every sample. Hit and miss paths share one
// arithmetic route (the frozen path is row-independent), so the returned
// logits are bit-identical to the uncached forward.
Matrix forward_fc_cached(Model& model, SkipCache& cache,
                         const std::vector<std::uint32_t>& indices,
                         const Matrix& x);

RunMetrics finetune(Model& model, const Dataset& data, const TrainConfig& cfg);
RunMetrics pretrain(Model& model, const Dataset& data, const TrainConfig& cfg);

double evaluate(Model& model, const Dataset& data);

// Central finite differences of the loss against the analytic gradients of
// every trainable scalar, using a float64 shadow evaluation of the whole
// network. Returns the max relative error.
double grad_check(Model& model, const Matrix& x, const std::vector<int>& labels,
                  double h);

}  // namespace skl
