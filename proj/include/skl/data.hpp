#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "skl/matrix.hpp"

namespace skl {

struct Dataset {
  Matrix features;          // S x d0
  std::vector<int> labels;  // contiguous class indices in [0, num_classes)
  int num_classes = 0;
  std::string name;
  // Original label values by remapped index (identity for generated data).
  std::vector<int> label_values;

  int num_samples() const { return features.rows(); }
  int feature_dim() const { return features.cols(); }
};

// Parameters of the synthetic concept-drift generator: Gaussian class blobs
// whose centers shift (and whose noise rescales) between the pre-train and
// the fine-tune/test distributions.
struct DriftSpec {
  int num_classes = 3;
  int feature_dim = 256;
  int pretrain_samples = 470;
  int finetune_samples = 470;
  int test_samples = 470;
  float separation = 4.0f;       // norm of each class center
  float noise_sigma = 1.0f;      // per-feature noise std
  float drift_shift = 8.0f;      // norm of the shift toward the next class
  float drift_noise_mult = 1.0f; // noise multiplier after drift
  std::uint64_t seed = 0;
};

struct DriftDatasets {
  Dataset pretrain;
  Dataset finetune;
  Dataset test;
};

// CSV: comma-separated float features plus one integer label column
// (label_column < 0 counts from the end; -1 = last). An optional non-numeric
// header line is skipped. Labels are remapped to contiguous 0..C-1 in
// ascending order of original value.
Dataset load_csv(const std::string& path, int label_column = -1);

// Writes features followed by the label as the last column, with
// float32-round-trip-exact decimal formatting.
void save_csv(const Dataset& ds, const std::string& path);

DriftDatasets gen_drifted(const DriftSpec& spec);

struct NormStats {
  std::vector<float> mean;
  std::vector<float> std_dev;
};

// Standardizes every dataset with per-feature statistics computed on `train`
// only. Zero-variance features map to zero.
NormStats normalize(Dataset& train, const std::vector<Dataset*>& others);

}  // namespace skl
