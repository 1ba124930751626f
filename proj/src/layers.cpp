#include "skl/layers.hpp"

#include <cmath>

namespace skl {

const char* compute_type_name(ComputeType t) {
  switch (t) {
    case ComputeType::FCy: return "FC_y";
    case ComputeType::FCywbx: return "FC_ywbx";
    case ComputeType::FCywb: return "FC_ywb";
    case ComputeType::FCybx: return "FC_ybx";
    case ComputeType::FCyb: return "FC_yb";
    case ComputeType::FCyx: return "FC_yx";
    case ComputeType::LoRAywx: return "LoRA_ywx";
    case ComputeType::LoRAyw: return "LoRA_yw";
    case ComputeType::None: return "none";
  }
  return "?";
}

bool is_fc_type(ComputeType t) {
  switch (t) {
    case ComputeType::FCy:
    case ComputeType::FCywbx:
    case ComputeType::FCywb:
    case ComputeType::FCybx:
    case ComputeType::FCyb:
    case ComputeType::FCyx:
      return true;
    default:
      return false;
  }
}

bool is_lora_type(ComputeType t) {
  return t == ComputeType::LoRAywx || t == ComputeType::LoRAyw;
}

bool fc_wants_gw(ComputeType t) {
  return t == ComputeType::FCywbx || t == ComputeType::FCywb;
}

bool fc_wants_gb(ComputeType t) {
  return t == ComputeType::FCywbx || t == ComputeType::FCywb ||
         t == ComputeType::FCybx || t == ComputeType::FCyb;
}

bool fc_wants_gx(ComputeType t) {
  return t == ComputeType::FCywbx || t == ComputeType::FCybx ||
         t == ComputeType::FCyx;
}

Matrix FcLayer::forward(const Matrix& x, bool training, MacCounter* mc) {
  if (x.cols() != in_dim())
    throw ContractError(name + ": input has " + std::to_string(x.cols()) +
                        " features, layer expects " + std::to_string(in_dim()));
  Matrix out = matmul(x, w, mc, name + ".fwd");
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) out(i, j) += b[j];
  if (training && fc_wants_gw(compute_type)) cached_input = x;
  return out;
}

std::optional<Matrix> FcLayer::backward(const Matrix& gy, ComputeType ctype,
                                        MacCounter* mc) {
  if (!is_fc_type(ctype) || ctype == ComputeType::FCy)
    throw ContractError(name + ": backward undefined for compute type " +
                        compute_type_name(ctype));
  if (gy.cols() != out_dim())
    throw ContractError(name + ": gy has " + std::to_string(gy.cols()) +
                        " cols, expected " + std::to_string(out_dim()));
  if (fc_wants_gw(ctype)) {
    if (!cached_input)
      throw ContractError(name + ": gW requested but no input was retained");
    gw = matmul_at(*cached_input, gy, mc, name + ".bwd");
    fresh_gw = true;
  }
  if (fc_wants_gb(ctype)) {
    gb = col_sum(gy);
    fresh_gb = true;
  }
  if (fc_wants_gx(ctype)) return matmul_bt(gy, w, mc, name + ".bwd");
  return std::nullopt;
}

void FcLayer::update(float eta, bool update_w, bool update_b, MacCounter* mc) {
  if (update_w) {
    if (!fresh_gw)
      throw ContractError(name + ": weight update without a fresh gW");
    scaled_sub_inplace(w, gw, eta, mc, "update");
    fresh_gw = false;
  }
  if (update_b) {
    if (!fresh_gb)
      throw ContractError(name + ": bias update without a fresh gb");
    scaled_sub_inplace(b, gb, eta, mc, "update");
    fresh_gb = false;
  }
}

Matrix LoraAdapter::forward(const Matrix& x, bool training, MacCounter* mc) {
  if (x.cols() != wa.rows())
    throw ContractError(name + ": input has " + std::to_string(x.cols()) +
                        " features, adapter expects " +
                        std::to_string(wa.rows()));
  Matrix ya = matmul(x, wa, mc, name + ".fwd");
  Matrix yb = matmul(ya, wb, mc, name + ".fwd");
  if (training) {
    cached_x = x;
    cached_ya = std::move(ya);
  }
  return yb;
}

std::optional<Matrix> LoraAdapter::backward(const Matrix& gy,
                                            ComputeType ctype, MacCounter* mc) {
  if (!is_lora_type(ctype))
    throw ContractError(name + ": backward undefined for compute type " +
                        compute_type_name(ctype));
  if (!cached_x || !cached_ya)
    throw ContractError(name + ": backward without a retained forward");
  gwb = matmul_at(*cached_ya, gy, mc, name + ".bwd");
  Matrix gxb = matmul_bt(gy, wb, mc, name + ".bwd");
  gwa = matmul_at(*cached_x, gxb, mc, name + ".bwd");
  fresh_grads = true;
  if (ctype == ComputeType::LoRAywx)
    return matmul_bt(gxb, wa, mc, name + ".bwd");
  return std::nullopt;
}

void LoraAdapter::update(float eta, MacCounter* mc) {
  if (!fresh_grads)
    throw ContractError(name + ": update without fresh gradients");
  scaled_sub_inplace(wa, gwa, eta, mc, "update");
  scaled_sub_inplace(wb, gwb, eta, mc, "update");
  fresh_grads = false;
}

Matrix BatchNormLayer::forward(const Matrix& x, bool training, MacCounter* mc) {
  const int m = dim();
  if (x.cols() != m)
    throw ContractError(name + ": input has " + std::to_string(x.cols()) +
                        " features, layer expects " + std::to_string(m));
  const int batch = x.rows();
  Matrix out(batch, m);

  if (train_stats && training) {
    if (batch < 2)
      throw ContractError(name + ": train-stats mode needs a batch of >= 2");
    std::vector<float> mean(m, 0.0f), var(m, 0.0f), inv_std(m, 0.0f);
    for (int j = 0; j < m; ++j) {
      float s = 0.0f;
      for (int i = 0; i < batch; ++i) s += x(i, j);
      mean[j] = s / static_cast<float>(batch);
    }
    for (int j = 0; j < m; ++j) {
      float s = 0.0f;
      for (int i = 0; i < batch; ++i) {
        const float d = x(i, j) - mean[j];
        s += d * d;
      }
      var[j] = s / static_cast<float>(batch);
      inv_std[j] = 1.0f / std::sqrt(var[j] + eps);
    }
    cached_xhat = Matrix(batch, m);
    for (int i = 0; i < batch; ++i)
      for (int j = 0; j < m; ++j) {
        const float xh = (x(i, j) - mean[j]) * inv_std[j];
        cached_xhat(i, j) = xh;
        out(i, j) = gamma[j] * xh + beta[j];
      }
    // EMA tracks the unbiased variance, as inference-time statistics should.
    const float unbias =
        static_cast<float>(batch) / static_cast<float>(batch - 1);
    for (int j = 0; j < m; ++j) {
      running_mean[j] = (1.0f - momentum) * running_mean[j] + momentum * mean[j];
      running_var[j] =
          (1.0f - momentum) * running_var[j] + momentum * unbias * var[j];
    }
    cached_inv_std = std::move(inv_std);
    cached_mean = std::move(mean);
    cache_valid = true;
    cache_train_mode = true;
    if (mc) mc->add(name + ".fwd", 3ull * batch * m);
    return out;
  }

  // Frozen statistics: a deterministic per-feature affine map.
  for (int j = 0; j < m; ++j) {
    const float inv_std = 1.0f / std::sqrt(running_var[j] + eps);
    const float scale = gamma[j] * inv_std;
    const float shift = beta[j] - running_mean[j] * scale;
    for (int i = 0; i < batch; ++i) out(i, j) = scale * x(i, j) + shift;
  }
  if (training && retain_input) {
    cached_xhat = Matrix(batch, m);
    cached_inv_std.assign(m, 0.0f);
    for (int j = 0; j < m; ++j) {
      const float inv_std = 1.0f / std::sqrt(running_var[j] + eps);
      cached_inv_std[j] = inv_std;
      for (int i = 0; i < batch; ++i)
        cached_xhat(i, j) = (x(i, j) - running_mean[j]) * inv_std;
    }
    cache_valid = true;
    cache_train_mode = false;
  }
  if (mc) mc->add(name + ".fwd", static_cast<std::uint64_t>(batch) * m);
  return out;
}

Matrix BatchNormLayer::backward(const Matrix& gy, bool train_affine,
                                MacCounter* mc) {
  const int m = dim();
  const int batch = gy.rows();
  if (gy.cols() != m)
    throw ContractError(name + ": gy has " + std::to_string(gy.cols()) +
                        " cols, expected " + std::to_string(m));
  Matrix gx(batch, m);

  if (train_stats) {
    if (!cache_valid || !cache_train_mode)
      throw ContractError(name +
                          ": backward without a matching train-stats forward");
    if (cached_xhat.rows() != batch)
      throw ContractError(name + ": batch size changed since forward");
    for (int j = 0; j < m; ++j) {
      float sum_gy = 0.0f, sum_gy_xh = 0.0f;
      for (int i = 0; i < batch; ++i) {
        sum_gy += gy(i, j);
        sum_gy_xh += gy(i, j) * cached_xhat(i, j);
      }
      const float k = gamma[j] * cached_inv_std[j] / static_cast<float>(batch);
      for (int i = 0; i < batch; ++i)
        gx(i, j) = k * (static_cast<float>(batch) * gy(i, j) - sum_gy -
                        cached_xhat(i, j) * sum_gy_xh);
      if (train_affine) {
        ggamma[j] = sum_gy_xh;
        gbeta[j] = sum_gy;
      }
    }
    if (train_affine) fresh_grads = true;
    if (mc)
      mc->add(name + ".bwd",
              (3ull + (train_affine ? 1ull : 0ull)) * batch * m);
    return gx;
  }

  for (int j = 0; j < m; ++j) {
    const float scale = gamma[j] / std::sqrt(running_var[j] + eps);
    for (int i = 0; i < batch; ++i) gx(i, j) = gy(i, j) * scale;
  }
  if (train_affine) {
    if (!cache_valid || cache_train_mode)
      throw ContractError(name +
                          ": affine gradients need inputs retained by a "
                          "frozen-mode forward");
    if (cached_xhat.rows() != batch)
      throw ContractError(name + ": batch size changed since forward");
    for (int j = 0; j < m; ++j) {
      float sum_gy = 0.0f, sum_gy_xh = 0.0f;
      for (int i = 0; i < batch; ++i) {
        sum_gy += gy(i, j);
        sum_gy_xh += gy(i, j) * cached_xhat(i, j);
      }
      ggamma[j] = sum_gy_xh;
      gbeta[j] = sum_gy;
    }
    fresh_grads = true;
  }
  if (mc)
    mc->add(name + ".bwd",
            (1ull + (train_affine ? 1ull : 0ull)) * batch * m);
  return gx;
}

void BatchNormLayer::update(float eta, MacCounter* mc) {
  if (!fresh_grads)
    throw ContractError(name + ": update without fresh gradients");
  scaled_sub_inplace(gamma, ggamma, eta, mc, "update");
  scaled_sub_inplace(beta, gbeta, eta, mc, "update");
  fresh_grads = false;
}

Matrix ReluLayer::forward(const Matrix& x, bool training) {
  Matrix out(x.rows(), x.cols());
  const float* in = x.data();
  float* o = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) o[i] = in[i] > 0.0f ? in[i] : 0.0f;
  if (training) cached_input = x;
  return out;
}

Matrix ReluLayer::backward(const Matrix& gy) {
  if (!cached_input)
    throw ContractError("relu: backward without a retained forward");
  if (!cached_input->same_shape(gy))
    throw ContractError("relu: gy shape differs from the retained input");
  Matrix gx(gy.rows(), gy.cols());
  const float* in = cached_input->data();
  const float* g = gy.data();
  float* o = gx.data();
  // Subgradient at exactly zero is zero.
  for (std::size_t i = 0; i < gy.size(); ++i) o[i] = in[i] > 0.0f ? g[i] : 0.0f;
  return gx;
}

float SoftmaxCrossEntropy::forward(const Matrix& logits,
                                   const std::vector<int>& batch_labels) {
  const int batch = logits.rows(), classes = logits.cols();
  if (static_cast<int>(batch_labels.size()) != batch)
    throw ContractError("cel: label count does not match batch size");
  for (int i = 0; i < batch; ++i) {
    if (batch_labels[i] < 0 || batch_labels[i] >= classes)
      throw ContractError("cel: label " + std::to_string(batch_labels[i]) +
                          " out of range [0, " + std::to_string(classes) + ")");
    for (int j = 0; j < classes; ++j)
      if (!std::isfinite(logits(i, j)))
        throw ContractError("cel: non-finite logit");
  }
  probs = Matrix(batch, classes);
  labels = batch_labels;
  double loss = 0.0;
  for (int i = 0; i < batch; ++i) {
    float mx = logits(i, 0);
    for (int j = 1; j < classes; ++j) mx = std::max(mx, logits(i, j));
    float denom = 0.0f;
    for (int j = 0; j < classes; ++j) denom += std::exp(logits(i, j) - mx);
    for (int j = 0; j < classes; ++j)
      probs(i, j) = std::exp(logits(i, j) - mx) / denom;
    loss -= std::log(static_cast<double>(probs(i, labels[i])));
  }
  return static_cast<float>(loss / batch);
}

Matrix SoftmaxCrossEntropy::backward() const {
  if (probs.rows() == 0)
    throw ContractError("cel: backward without a forward");
  const int batch = probs.rows(), classes = probs.cols();
  Matrix g(batch, classes);
  const float inv_b = 1.0f / static_cast<float>(batch);
  for (int i = 0; i < batch; ++i)
    for (int j = 0; j < classes; ++j)
      g(i, j) = (probs(i, j) - (labels[i] == j ? 1.0f : 0.0f)) * inv_b;
  return g;
}

}  // namespace skl
