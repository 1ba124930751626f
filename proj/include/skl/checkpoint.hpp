#pragma once

#include <string>

#include "skl/network.hpp"

namespace skl {
namespace checkpoint {

// Binary checkpoint, little-endian. Layout:
//   magic "SKL2", u32 format version, u8 mode id, u16 n,
//   u32 dims[n+1], u32 rank,
//   then f32 row-major tensors in fixed order:
//     per layer k=1..n:   W, b, and for k<n: gamma, beta,
//                         running_mean, running_var
//     per adapter (modes with adapters only): W_A, W_B
void save(const Model& model, const std::string& path);
Model load(const std::string& path);

// Builds a model for `mode` on top of a loaded checkpoint. If the modes
// match, the checkpoint is restored as-is (adapters included). A
// no-adapter checkpoint can seed any mode: base tensors are copied and
// fresh adapters are drawn from `seed`. Anything else is a mismatch.
Model transplant(const Model& loaded, FineTuneMode mode, int rank,
                 std::uint64_t seed);

}  // namespace checkpoint
}  // namespace skl
