#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "skl/layers.hpp"

namespace skl {

enum class FineTuneMode {
  FTAll,
  FTLast,
  FTBias,
  FTAllLoRA,
  LoRAAll,
  LoRALast,
  SkipLoRA,
  Skip2LoRA,
};

std::string mode_name(FineTuneMode mode);  // kebab-case, e.g. "skip2-lora"
FineTuneMode parse_mode(std::string_view name);
bool mode_has_adapters(FineTuneMode mode);
// Adapters attached to their own layer (LoRA-All, LoRA-Last, FT-All-LoRA).
bool mode_per_layer_adapters(FineTuneMode mode);
// Adapters feeding the last layer's output from earlier layer inputs.
bool mode_is_skip(FineTuneMode mode);

struct ModelSpec {
  std::vector<int> layer_dims;  // [d0, d1, ..., dn]
  int rank = 4;
  FineTuneMode mode = FineTuneMode::FTAll;
  std::uint64_t seed = 0;

  int num_layers() const { return static_cast<int>(layer_dims.size()) - 1; }
};

struct ComputeTypeTable {
  std::vector<ComputeType> fc;    // one per FC layer
  std::vector<ComputeType> lora;  // one per layer slot, None where absent
};

// Per-layer compute types for an n-layer network under the given mode.
// For n=3 this reproduces the published enumerations; larger n repeats the
// middle-layer pattern, and the first layer never computes gx.
ComputeTypeTable compute_type_assignment(FineTuneMode mode, int n);

struct ForwardResult {
  Matrix logits;
  // When requested: post-block outputs for layers 1..n-1 and the
  // pre-adapter FC output for layer n (the cacheable activations).
  std::vector<Matrix> taps;
};

struct Model {
  ModelSpec spec;
  std::vector<FcLayer> fc;          // n layers
  std::vector<BatchNormLayer> bn;   // n-1, after each non-final FC
  std::vector<ReluLayer> act;       // n-1
  std::vector<LoraAdapter> adapters;
  std::vector<int> adapter_at_layer;  // per-layer wiring; -1 where absent
  std::vector<char> train_w;
  std::vector<char> train_b;
  bool train_bn_affine = false;
  MacCounter mac;

  int num_layers() const { return static_cast<int>(fc.size()); }

  // FC/BN/ReLU path only, no adapters, no state mutation. Returns the
  // cacheable activations (see ForwardResult::taps).
  std::vector<Matrix> frozen_forward(const Matrix& x, MacCounter* mc);

  ForwardResult forward(const Matrix& x, bool training,
                        bool collect_taps = false);
  void backward(const Matrix& glogits);
  void update(float eta);
  void backward_and_update(const Matrix& glogits, float eta);
  std::vector<int> predict(const Matrix& x);  // argmax, ties to lowest index
};

Model build_model(const ModelSpec& spec);

}  // namespace skl
