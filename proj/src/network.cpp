#include "skl/network.hpp"

#include <algorithm>
#include <cmath>

#include "skl/rng.hpp"

namespace skl {

std::string mode_name(FineTuneMode mode) {
  switch (mode) {
    case FineTuneMode::FTAll: return "ft-all";
    case FineTuneMode::FTLast: return "ft-last";
    case FineTuneMode::FTBias: return "ft-bias";
    case FineTuneMode::FTAllLoRA: return "ft-all-lora";
    case FineTuneMode::LoRAAll: return "lora-all";
    case FineTuneMode::LoRALast: return "lora-last";
    case FineTuneMode::SkipLoRA: return "skip-lora";
    case FineTuneMode::Skip2LoRA: return "skip2-lora";
  }
  return "?";
}

FineTuneMode parse_mode(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(FineTuneMode::Skip2LoRA); ++i) {
    const auto m = static_cast<FineTuneMode>(i);
    if (mode_name(m) == name) return m;
  }
  throw ContractError("unknown fine-tune mode: " + std::string(name));
}

bool mode_has_adapters(FineTuneMode mode) {
  switch (mode) {
    case FineTuneMode::FTAll:
    case FineTuneMode::FTLast:
    case FineTuneMode::FTBias:
      return false;
    default:
      return true;
  }
}

bool mode_per_layer_adapters(FineTuneMode mode) {
  return mode == FineTuneMode::FTAllLoRA || mode == FineTuneMode::LoRAAll ||
         mode == FineTuneMode::LoRALast;
}

bool mode_is_skip(FineTuneMode mode) {
  return mode == FineTuneMode::SkipLoRA || mode == FineTuneMode::Skip2LoRA;
}

ComputeTypeTable compute_type_assignment(FineTuneMode mode, int n) {
  if (n < 2) throw ContractError("compute_type_assignment: need n >= 2");
  ComputeTypeTable t;
  t.fc.assign(n, ComputeType::FCy);
  t.lora.assign(n, ComputeType::None);
  auto fill_fc = [&](ComputeType first, ComputeType rest) {
    t.fc[0] = first;
    for (int k = 1; k < n; ++k) t.fc[k] = rest;
  };
  auto fill_lora = [&](ComputeType first, ComputeType rest) {
    t.lora[0] = first;
    for (int k = 1; k < n; ++k) t.lora[k] = rest;
  };
  switch (mode) {
    case FineTuneMode::FTAll:
      fill_fc(ComputeType::FCywb, ComputeType::FCywbx);
      break;
    case FineTuneMode::FTLast:
      t.fc[n - 1] = ComputeType::FCywb;
      break;
    case FineTuneMode::FTBias:
      fill_fc(ComputeType::FCyb, ComputeType::FCybx);
      break;
    case FineTuneMode::FTAllLoRA:
      fill_fc(ComputeType::FCywb, ComputeType::FCywbx);
      fill_lora(ComputeType::LoRAyw, ComputeType::LoRAywx);
      break;
    case FineTuneMode::LoRAAll:
      fill_fc(ComputeType::FCy, ComputeType::FCyx);
      fill_lora(ComputeType::LoRAyw, ComputeType::LoRAywx);
      break;
    case FineTuneMode::LoRALast:
      t.lora[n - 1] = ComputeType::LoRAyw;
      break;
    case FineTuneMode::SkipLoRA:
    case FineTuneMode::Skip2LoRA:
      fill_lora(ComputeType::LoRAyw, ComputeType::LoRAyw);
      break;
  }
  return t;
}

Model build_model(const ModelSpec& spec) {
  const int n = spec.num_layers();
  if (n < 2)
    throw ContractError("build_model: need at least 2 layers, got " +
                        std::to_string(n));
  for (int d : spec.layer_dims)
    if (d < 1) throw ContractError("build_model: all dims must be >= 1");
  if (spec.rank < 1) throw ContractError("build_model: rank must be >= 1");
  if (mode_has_adapters(spec.mode)) {
    // The rank must not exceed any adapter's input width. The output side
    // may be narrower than the rank (a 3-class head with rank 4 is the
    // published default configuration).
    for (int k = 1; k <= n; ++k)
      if (spec.rank > spec.layer_dims[k - 1])
        throw ContractError("build_model: rank exceeds layer " +
                            std::to_string(k) + " input width");
  }

  Model m;
  m.spec = spec;
  Rng init(spec.seed, /*stream=*/0);

  const auto table = compute_type_assignment(spec.mode, n);
  for (int k = 1; k <= n; ++k) {
    FcLayer layer;
    layer.name = "FC" + std::to_string(k);
    const int in = spec.layer_dims[k - 1], out = spec.layer_dims[k];
    layer.w = Matrix(in, out);
    layer.gw = Matrix(in, out);
    layer.b.assign(out, 0.0f);
    layer.gb.assign(out, 0.0f);
    const float he_std = std::sqrt(2.0f / static_cast<float>(in));
    for (std::size_t i = 0; i < layer.w.size(); ++i)
      layer.w.data()[i] = he_std * init.gaussian();
    layer.compute_type = table.fc[k - 1];
    m.fc.push_back(std::move(layer));
  }
  for (int k = 1; k < n; ++k) {
    BatchNormLayer bnl;
    bnl.name = "BN" + std::to_string(k);
    const int d = spec.layer_dims[k];
    bnl.gamma.assign(d, 1.0f);
    bnl.beta.assign(d, 0.0f);
    bnl.running_mean.assign(d, 0.0f);
    bnl.running_var.assign(d, 1.0f);
    bnl.ggamma.assign(d, 0.0f);
    bnl.gbeta.assign(d, 0.0f);
    m.bn.push_back(std::move(bnl));
    m.act.emplace_back();
  }

  m.adapter_at_layer.assign(n, -1);
  auto add_adapter = [&](int src, int dst) {
    LoraAdapter ad;
    ad.name = "LoRA" + std::to_string(src);
    ad.src = src;
    ad.dst = dst;
    const int in = spec.layer_dims[src - 1], out = spec.layer_dims[dst];
    ad.wa = Matrix(in, spec.rank);
    ad.wb = Matrix(spec.rank, out);  // zero: a fresh adapter is transparent
    ad.gwa = Matrix(in, spec.rank);
    ad.gwb = Matrix(spec.rank, out);
    const float wa_std = 1.0f / std::sqrt(static_cast<float>(in));
    for (std::size_t i = 0; i < ad.wa.size(); ++i)
      ad.wa.data()[i] = wa_std * init.gaussian();
    ad.compute_type = table.lora[src - 1];
    m.adapters.push_back(std::move(ad));
  };
  switch (spec.mode) {
    case FineTuneMode::FTAllLoRA:
    case FineTuneMode::LoRAAll:
      for (int k = 1; k <= n; ++k) {
        m.adapter_at_layer[k - 1] = static_cast<int>(m.adapters.size());
        add_adapter(k, k);
      }
      break;
    case FineTuneMode::LoRALast:
      m.adapter_at_layer[n - 1] = 0;
      add_adapter(n, n);
      break;
    case FineTuneMode::SkipLoRA:
    case FineTuneMode::Skip2LoRA:
      for (int k = 1; k <= n; ++k) add_adapter(k, n);
      break;
    default:
      break;
  }

  m.train_w.assign(n, 0);
  m.train_b.assign(n, 0);
  switch (spec.mode) {
    case FineTuneMode::FTAll:
    case FineTuneMode::FTAllLoRA:
      std::fill(m.train_w.begin(), m.train_w.end(), 1);
      std::fill(m.train_b.begin(), m.train_b.end(), 1);
      m.train_bn_affine = true;
      break;
    case FineTuneMode::FTLast:
      m.train_w[n - 1] = 1;
      m.train_b[n - 1] = 1;
      break;
    case FineTuneMode::FTBias:
      std::fill(m.train_b.begin(), m.train_b.end(), 1);
      break;
    default:
      break;  // adapter-only modes
  }
  for (auto& bnl : m.bn) bnl.retain_input = m.train_bn_affine;
  return m;
}

std::vector<Matrix> Model::frozen_forward(const Matrix& x, MacCounter* mc) {
  const int n = num_layers();
  std::vector<Matrix> taps;
  taps.reserve(n);
  const Matrix* cur = &x;
  for (int k = 1; k <= n; ++k) {
    Matrix pre = fc[k - 1].forward(*cur, /*training=*/false, mc);
    if (k < n) {
      Matrix h = bn[k - 1].forward(pre, /*training=*/false, mc);
      taps.push_back(act[k - 1].forward(h, /*training=*/false));
      cur = &taps.back();
    } else {
      taps.push_back(std::move(pre));
    }
  }
  return taps;
}

ForwardResult Model::forward(const Matrix& x, bool training,
                             bool collect_taps) {
  if (x.cols() != spec.layer_dims.front())
    throw ContractError("forward: input has " + std::to_string(x.cols()) +
                        " features, model expects " +
                        std::to_string(spec.layer_dims.front()));
  const int n = num_layers();
  ForwardResult r;

  if (mode_is_skip(spec.mode)) {
    auto taps = frozen_forward(x, &mac);
    Matrix logits = taps.back();
    for (int k = 1; k <= n; ++k) {
      const Matrix& xk = (k == 1) ? x : taps[k - 2];
      Matrix yb = adapters[k - 1].forward(xk, training, &mac);
      add_inplace(logits, yb);
    }
    r.logits = std::move(logits);
    if (collect_taps) r.taps = std::move(taps);
    return r;
  }

  Matrix cur = x;
  for (int k = 1; k <= n; ++k) {
    Matrix pre = fc[k - 1].forward(cur, training, &mac);
    const int ai = adapter_at_layer[k - 1];
    if (ai >= 0) {
      Matrix yb = adapters[ai].forward(cur, training, &mac);
      add_inplace(pre, yb);
    }
    if (k < n) {
      Matrix h = bn[k - 1].forward(pre, training, &mac);
      h = act[k - 1].forward(h, training);
      if (collect_taps) r.taps.push_back(h);
      cur = std::move(h);
    } else {
      if (collect_taps) r.taps.push_back(pre);
      r.logits = std::move(pre);
    }
  }
  return r;
}

void Model::backward(const Matrix& glogits) {
  const int n = num_layers();
  if (glogits.cols() != spec.layer_dims.back())
    throw ContractError("backward: glogits width mismatch");

  if (mode_is_skip(spec.mode)) {
    for (auto& ad : adapters) ad.backward(glogits, ad.compute_type, &mac);
    return;
  }

  auto layer_needs_grad = [&](int k) {  // 1-based
    const int ai = adapter_at_layer[k - 1];
    return fc[k - 1].compute_type != ComputeType::FCy ||
           (ai >= 0 && adapters[ai].compute_type != ComputeType::None);
  };
  std::vector<char> lower_needs(n + 1, 0);  // any j <= k needing a gradient
  for (int k = 1; k <= n; ++k)
    lower_needs[k] = lower_needs[k - 1] || layer_needs_grad(k);

  Matrix g = glogits;
  bool have_g = true;
  for (int k = n; k >= 1; --k) {
    if (k < n) {
      if (!have_g) {
        if (lower_needs[k])
          throw ContractError("backward: compute-type table needs a gradient "
                              "below layer " + std::to_string(k + 1) +
                              " but none propagates");
        break;
      }
      g = act[k - 1].backward(g);
      g = bn[k - 1].backward(g, train_bn_affine, &mac);
    }
    std::optional<Matrix> gx, gxa;
    const int ai = adapter_at_layer[k - 1];
    if (ai >= 0 && adapters[ai].compute_type != ComputeType::None)
      gxa = adapters[ai].backward(g, adapters[ai].compute_type, &mac);
    if (fc[k - 1].compute_type != ComputeType::FCy)
      gx = fc[k - 1].backward(g, fc[k - 1].compute_type, &mac);
    if (gxa) {
      if (gx)
        add_inplace(*gx, *gxa);
      else
        gx = std::move(gxa);
    }
    have_g = gx.has_value();
    if (have_g) g = std::move(*gx);
  }
}

void Model::update(float eta) {
  const int n = num_layers();
  for (int k = 0; k < n; ++k)
    if (train_w[k] || train_b[k])
      fc[k].update(eta, train_w[k] != 0, train_b[k] != 0, &mac);
  if (train_bn_affine)
    for (auto& bnl : bn) bnl.update(eta, &mac);
  for (auto& ad : adapters) ad.update(eta, &mac);
}

void Model::backward_and_update(const Matrix& glogits, float eta) {
  backward(glogits);
  update(eta);
}

std::vector<int> Model::predict(const Matrix& x) {
  const Matrix logits = forward(x, /*training=*/false).logits;
  std::vector<int> out(logits.rows(), 0);
  for (int i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (int j = 1; j < logits.cols(); ++j)
      if (logits(i, j) > logits(i, best)) best = j;
    out[i] = best;
  }
  return out;
}

}  // namespace skl
