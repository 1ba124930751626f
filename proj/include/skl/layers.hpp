#pragma once

#include <optional>
#include <string>
#include <vector>

#include "skl/matrix.hpp"

namespace skl {

// Which tensors a layer or adapter computes during one training step.
// FC* variants apply to FC layers, LoRA* variants to adapters; None marks
// an absent adapter slot.
enum class ComputeType {
  FCy,
  FCywbx,
  FCywb,
  FCybx,
  FCyb,
  FCyx,
  LoRAywx,
  LoRAyw,
  None,
};

const char* compute_type_name(ComputeType t);
bool is_fc_type(ComputeType t);
bool is_lora_type(ComputeType t);
bool fc_wants_gw(ComputeType t);
bool fc_wants_gb(ComputeType t);
bool fc_wants_gx(ComputeType t);

// Fully-connected layer, y = x * W + b. The activation lives in a separate
// ReLU layer so batch normalization can sit between them.
struct FcLayer {
  std::string name;
  Matrix w;              // N x M
  std::vector<float> b;  // M
  Matrix gw;
  std::vector<float> gb;
  ComputeType compute_type = ComputeType::FCy;
  std::optional<Matrix> cached_input;
  bool fresh_gw = false;
  bool fresh_gb = false;

  int in_dim() const { return w.rows(); }
  int out_dim() const { return w.cols(); }

  // Returns the pre-activation x*W + b. In training mode the input is
  // retained when the layer's compute type needs gW.
  Matrix forward(const Matrix& x, bool training, MacCounter* mc);

  // Computes exactly the gradients the compute type lists; returns gx when
  // listed, nothing otherwise. Other gradient buffers are left untouched.
  std::optional<Matrix> backward(const Matrix& gy, ComputeType ctype,
                                 MacCounter* mc);

  void update(float eta, bool update_w, bool update_b, MacCounter* mc);
};

// Low-rank adapter, y_B = (x * W_A) * W_B, added into a host layer's output.
struct LoraAdapter {
  std::string name;
  int src = 0;  // 1-based index of the layer whose input it reads
  int dst = 0;  // 1-based index of the layer whose output it perturbs
  Matrix wa;    // N x R
  Matrix wb;    // R x M
  Matrix gwa;
  Matrix gwb;
  ComputeType compute_type = ComputeType::None;
  std::optional<Matrix> cached_x;
  std::optional<Matrix> cached_ya;
  bool fresh_grads = false;

  int rank() const { return wa.cols(); }

  Matrix forward(const Matrix& x, bool training, MacCounter* mc);
  std::optional<Matrix> backward(const Matrix& gy, ComputeType ctype,
                                 MacCounter* mc);
  void update(float eta, MacCounter* mc);
};

// Batch normalization. train_stats selects batch statistics plus a running
// EMA update; otherwise the layer is a frozen per-feature affine map.
struct BatchNormLayer {
  std::string name;
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> running_mean;
  std::vector<float> running_var;
  std::vector<float> ggamma;
  std::vector<float> gbeta;
  float eps = 1e-5f;
  float momentum = 0.1f;
  bool train_stats = false;
  // Retain normalized inputs during frozen-mode training so ggamma can be
  // computed. Only set when gamma/beta are trainable.
  bool retain_input = false;
  Matrix cached_xhat;
  std::vector<float> cached_inv_std;
  std::vector<float> cached_mean;
  bool cache_valid = false;
  bool cache_train_mode = false;
  bool fresh_grads = false;

  int dim() const { return static_cast<int>(gamma.size()); }

  Matrix forward(const Matrix& x, bool training, MacCounter* mc);
  Matrix backward(const Matrix& gy, bool train_affine, MacCounter* mc);
  void update(float eta, MacCounter* mc);
};

struct ReluLayer {
  std::optional<Matrix> cached_input;

  Matrix forward(const Matrix& x, bool training);
  Matrix backward(const Matrix& gy);
};

// Softmax + cross entropy, mean-reduced over the batch.
struct SoftmaxCrossEntropy {
  Matrix probs;
  std::vector<int> labels;

  float forward(const Matrix& logits, const std::vector<int>& batch_labels);
  Matrix backward() const;  // (softmax - onehot) / B
};

}  // namespace skl
