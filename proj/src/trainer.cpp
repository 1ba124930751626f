#include "skl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <optional>
#include <string>

namespace skl {

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t us_between(Clock::time_point a, Clock::time_point b) {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::microseconds>(b - a).count());
}

std::vector<int> gather_labels(const Dataset& data,
                               const std::vector<std::uint32_t>& idx) {
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = data.labels[idx[i]];
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ContractError("TrainConfig: epochs must be >= 1");
  if (batch_size < 1)
    throw ContractError("TrainConfig: batch size must be >= 1");
  if (!(learning_rate > 0.0f) || !std::isfinite(learning_rate))
    throw ContractError("TrainConfig: learning rate must be positive");
  if (cache_enabled && mode != FineTuneMode::Skip2LoRA)
    throw ContractError("TrainConfig: the cache is only valid in skip2-lora "
                        "mode");
}

MacBreakdown mac_breakdown(const MacCounter& mc) {
  MacBreakdown b;
  for (const auto& [label, count] : mc.tallies()) {
    if (label == "update") {
      b.update += count;
    } else if (label.ends_with(".bwd")) {
      b.bwd += count;
    } else if (label.ends_with(".fwd")) {
      if (label.starts_with("FC"))
        b.fc_fwd += count;
      else if (label.starts_with("BN"))
        b.bn_fwd += count;
      else if (label.starts_with("LoRA"))
        b.lora_fwd += count;
    }
  }
  return b;
}

std::vector<std::uint32_t> sample_batch(Rng& rng, std::size_t num_samples,
                                        int batch_size) {
  if (num_samples == 0)
    throw ContractError("sample_batch: empty sample pool");
  std::vector<std::uint32_t> idx(batch_size);
  for (auto& i : idx)
    i = rng.uniform_below(static_cast<std::uint32_t>(num_samples));
  return idx;
}

Matrix gather_rows(const Matrix& features,
                   const std::vector<std::uint32_t>& indices) {
  Matrix out(static_cast<int>(indices.size()), features.cols());
  const std::size_t row_bytes = sizeof(float) * features.cols();
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::memcpy(out.data() + i * features.cols(),
                features.data() +
                    static_cast<std::size_t>(indices[i]) * features.cols(),
                row_bytes);
  return out;
}

Matrix forward_fc_cached(Model& model, SkipCache& cache,
                         const std::vector<std::uint32_t>& indices,
                         const Matrix& x) {
  if (!mode_is_skip(model.spec.mode))
    throw ContractError("forward_fc_cached: model is not in a skip wiring");
  const int n = model.num_layers();
  const int batch = static_cast<int>(indices.size());

  // Fill the cache for unseen samples, one row at a time. The frozen path
  // is row-independent, so a 1-row computation is bit-identical to the same
  // row inside any batch.
  for (int p = 0; p < batch; ++p) {
    if (cache.lookup(indices[p])) continue;
    Matrix row(1, x.cols());
    std::memcpy(row.data(), x.data() + static_cast<std::size_t>(p) * x.cols(),
                sizeof(float) * x.cols());
    auto taps = model.frozen_forward(row, &model.mac);
    std::vector<std::vector<float>> acts;
    acts.reserve(n);
    for (const Matrix& t : taps)
      acts.emplace_back(t.data(), t.data() + t.size());
    cache.insert(indices[p], std::move(acts));
  }

  // Reassemble the batch activations from the cache (misses included) and
  // run the per-batch adapter recomposition.
  Matrix logits(batch, model.spec.layer_dims.back());
  for (int p = 0; p < batch; ++p) {
    const auto& last = cache.entry(indices[p]).acts[n - 1];
    std::memcpy(logits.data() + static_cast<std::size_t>(p) * logits.cols(),
                last.data(), sizeof(float) * last.size());
  }
  for (int k = 1; k <= n; ++k) {
    Matrix xk(batch, model.spec.layer_dims[k - 1]);
    if (k == 1) {
      xk = x;
    } else {
      for (int p = 0; p < batch; ++p) {
        const auto& v = cache.entry(indices[p]).acts[k - 2];
        std::memcpy(xk.data() + static_cast<std::size_t>(p) * xk.cols(),
                    v.data(), sizeof(float) * v.size());
      }
    }
    Matrix yb = model.adapters[k - 1].forward(xk, /*training=*/true,
                                              &model.mac);
    add_inplace(logits, yb);
  }
  return logits;
}

namespace {

RunMetrics run_loop(Model& model, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (model.spec.mode != cfg.mode)
    throw ContractError("train: model was built for mode '" +
                        mode_name(model.spec.mode) + "', config asks for '" +
                        mode_name(cfg.mode) + "'");
  if (data.feature_dim() != model.spec.layer_dims.front())
    throw ContractError("train: dataset has " +
                        std::to_string(data.feature_dim()) +
                        " features, model expects " +
                        std::to_string(model.spec.layer_dims.front()));
  if (data.num_classes > model.spec.layer_dims.back())
    throw ContractError("train: dataset has " +
                        std::to_string(data.num_classes) +
                        " classes, model has only " +
                        std::to_string(model.spec.layer_dims.back()) +
                        " outputs");
  const std::size_t num_samples = data.labels.size();
  const int nb = static_cast<int>(num_samples) / cfg.batch_size;
  if (nb == 0)
    throw ContractError("train: only " + std::to_string(num_samples) +
                        " samples for batch size " +
                        std::to_string(cfg.batch_size) +
                        "; lower the batch size");

  std::optional<SkipCache> cache;
  if (cfg.cache_enabled) cache.emplace(num_samples, model.spec.layer_dims);
  Rng sampler(cfg.seed, /*stream=*/1);
  std::vector<std::uint32_t> perm;
  if (cfg.sampling == TrainConfig::Sampling::ShuffledEpochs) {
    perm.resize(num_samples);
    for (std::size_t i = 0; i < num_samples; ++i)
      perm[i] = static_cast<std::uint32_t>(i);
  }

  RunMetrics rm;
  rm.epochs = cfg.epochs;
  rm.batches_per_epoch = nb;
  rm.batches.reserve(static_cast<std::size_t>(cfg.epochs) * nb);
  std::uint64_t prev_hits = 0, prev_misses = 0;

  for (int e = 0; e < cfg.epochs; ++e) {
    if (!perm.empty()) {
      // Fisher-Yates with the sampling stream.
      for (std::size_t i = num_samples - 1; i > 0; --i) {
        const std::uint32_t j =
            sampler.uniform_below(static_cast<std::uint32_t>(i + 1));
        std::swap(perm[i], perm[j]);
      }
    }
    for (int b = 0; b < nb; ++b) {
      std::vector<std::uint32_t> idx;
      if (perm.empty()) {
        idx = sample_batch(sampler, num_samples, cfg.batch_size);
      } else {
        idx.assign(perm.begin() + static_cast<std::ptrdiff_t>(b) *
                                      cfg.batch_size,
                   perm.begin() + (static_cast<std::ptrdiff_t>(b) + 1) *
                                      cfg.batch_size);
      }
      const Matrix x = gather_rows(data.features, idx);
      const std::vector<int> labels = gather_labels(data, idx);

      const MacBreakdown m0 = mac_breakdown(model.mac);
      const auto t0 = Clock::now();
      Matrix logits = cache ? forward_fc_cached(model, *cache, idx, x)
                            : model.forward(x, /*training=*/true).logits;
      SoftmaxCrossEntropy cel;
      const float loss = cel.forward(logits, labels);
      const auto t1 = Clock::now();
      model.backward(cel.backward());
      const auto t2 = Clock::now();
      model.update(cfg.learning_rate);
      const auto t3 = Clock::now();
      const MacBreakdown m1 = mac_breakdown(model.mac);

      BatchRecord rec;
      rec.epoch = e;
      rec.batch = b;
      rec.loss = loss;
      rec.fc_fwd_macs = m1.frozen_fwd() - m0.frozen_fwd();
      rec.lora_fwd_macs = m1.lora_fwd - m0.lora_fwd;
      rec.bwd_macs = m1.bwd - m0.bwd;
      rec.update_macs = m1.update - m0.update;
      if (cache) {
        const auto st = cache->stats();
        rec.cache_hits = st.hits - prev_hits;
        rec.cache_misses = st.misses - prev_misses;
        prev_hits = st.hits;
        prev_misses = st.misses;
      }
      rec.elapsed_us = us_between(t0, t3);

      rm.total_fc_fwd_macs += rec.fc_fwd_macs;
      rm.total_lora_fwd_macs += rec.lora_fwd_macs;
      rm.total_bwd_macs += rec.bwd_macs;
      rm.total_update_macs += rec.update_macs;
      rm.total_hits += rec.cache_hits;
      rm.total_misses += rec.cache_misses;
      const std::uint64_t fwd = us_between(t0, t1), bwd = us_between(t1, t2),
                          upd = us_between(t2, t3);
      rm.fwd_us += fwd;
      rm.bwd_us += bwd;
      rm.update_us += upd;
      rm.total_us += rec.elapsed_us;
      if (e > 0) {
        rm.fwd_us_excl_first += fwd;
        rm.bwd_us_excl_first += bwd;
        rm.update_us_excl_first += upd;
      }
      rm.final_loss = loss;
      rm.batches.push_back(rec);
    }
  }
  return rm;
}

}  // namespace

RunMetrics finetune(Model& model, const Dataset& data, const TrainConfig& cfg) {
  for (const auto& bnl : model.bn)
    if (bnl.train_stats)
      throw ContractError("finetune: batch-norm must run with frozen "
                          "statistics");
  return run_loop(model, data, cfg);
}

RunMetrics pretrain(Model& model, const Dataset& data, const TrainConfig& cfg) {
  if (model.spec.mode != FineTuneMode::FTAll || cfg.mode != FineTuneMode::FTAll)
    throw ContractError("pretrain: requires an ft-all model and config");
  for (auto& bnl : model.bn) bnl.train_stats = true;
  RunMetrics rm = run_loop(model, data, cfg);
  for (auto& bnl : model.bn) bnl.train_stats = false;
  return rm;
}

double evaluate(Model& model, const Dataset& data) {
  if (data.num_samples() == 0) throw ContractError("evaluate: empty dataset");
  const std::vector<int> pred = model.predict(data.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == data.labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

namespace {

struct Override {
  const float* tensor = nullptr;
  std::size_t index = 0;
  double delta = 0.0;
};

double getp(const float* t, std::size_t i, const Override& o) {
  double v = t[i];
  if (t == o.tensor && i == o.index) v += o.delta;
  return v;
}

// Full-precision re-evaluation of the network loss with one parameter
// perturbed. Mirrors Model::forward for frozen-statistics networks.
double shadow_loss(const Model& m, const Matrix& x,
                   const std::vector<int>& labels, const Override& o) {
  const int n = m.num_layers();
  const int batch = x.rows();
  for (const auto& bnl : m.bn)
    if (bnl.train_stats)
      throw ContractError("grad_check: batch-norm must use frozen statistics");

  std::vector<std::vector<std::vector<double>>> layer_inputs;  // x^1..x^n
  std::vector<std::vector<double>> cur(batch,
                                       std::vector<double>(x.cols(), 0.0));
  for (int i = 0; i < batch; ++i)
    for (int j = 0; j < x.cols(); ++j) cur[i][j] = x(i, j);

  std::vector<std::vector<double>> logits;
  for (int k = 1; k <= n; ++k) {
    layer_inputs.push_back(cur);
    const FcLayer& l = m.fc[k - 1];
    const int in = l.in_dim(), out = l.out_dim();
    std::vector<std::vector<double>> pre(batch, std::vector<double>(out, 0.0));
    for (int i = 0; i < batch; ++i)
      for (int j = 0; j < out; ++j) {
        double acc = getp(l.b.data(), j, o);
        for (int q = 0; q < in; ++q)
          acc += cur[i][q] *
                 getp(l.w.data(), static_cast<std::size_t>(q) * out + j, o);
        pre[i][j] = acc;
      }
    const int ai = m.adapter_at_layer.empty() ? -1 : m.adapter_at_layer[k - 1];
    if (ai >= 0 && !mode_is_skip(m.spec.mode)) {
      const LoraAdapter& ad = m.adapters[ai];
      const int r = ad.rank();
      for (int i = 0; i < batch; ++i) {
        std::vector<double> ya(r, 0.0);
        for (int p = 0; p < r; ++p)
          for (int q = 0; q < in; ++q)
            ya[p] += cur[i][q] *
                     getp(ad.wa.data(), static_cast<std::size_t>(q) * r + p, o);
        for (int j = 0; j < out; ++j)
          for (int p = 0; p < r; ++p)
            pre[i][j] += ya[p] * getp(ad.wb.data(),
                                      static_cast<std::size_t>(p) * out + j, o);
      }
    }
    if (k < n) {
      const BatchNormLayer& bnl = m.bn[k - 1];
      for (int j = 0; j < out; ++j) {
        const double inv_std =
            1.0 / std::sqrt(static_cast<double>(bnl.running_var[j]) + bnl.eps);
        const double g = getp(bnl.gamma.data(), j, o);
        const double bt = getp(bnl.beta.data(), j, o);
        for (int i = 0; i < batch; ++i) {
          double v = g * (pre[i][j] - bnl.running_mean[j]) * inv_std + bt;
          pre[i][j] = v > 0.0 ? v : 0.0;  // ReLU
        }
      }
      cur = std::move(pre);
    } else {
      logits = std::move(pre);
    }
  }

  if (mode_is_skip(m.spec.mode)) {
    for (int k = 1; k <= n; ++k) {
      const LoraAdapter& ad = m.adapters[k - 1];
      const auto& xk = layer_inputs[k - 1];
      const int in = ad.wa.rows(), r = ad.rank(), out = ad.wb.cols();
      for (int i = 0; i < batch; ++i) {
        std::vector<double> ya(r, 0.0);
        for (int p = 0; p < r; ++p)
          for (int q = 0; q < in; ++q)
            ya[p] += xk[i][q] *
                     getp(ad.wa.data(), static_cast<std::size_t>(q) * r + p, o);
        for (int j = 0; j < out; ++j)
          for (int p = 0; p < r; ++p)
            logits[i][j] += ya[p] * getp(ad.wb.data(),
                                         static_cast<std::size_t>(p) * out + j,
                                         o);
      }
    }
  }

  double loss = 0.0;
  for (int i = 0; i < batch; ++i) {
    double mx = logits[i][0];
    for (double v : logits[i]) mx = std::max(mx, v);
    double denom = 0.0;
    for (double v : logits[i]) denom += std::exp(v - mx);
    loss -= logits[i][labels[i]] - mx - std::log(denom);
  }
  return loss / batch;
}

struct ParamView {
  const float* data = nullptr;
  const float* grad = nullptr;
  std::size_t count = 0;
};

std::vector<ParamView> trainable_params(const Model& m) {
  std::vector<ParamView> out;
  for (int k = 0; k < m.num_layers(); ++k) {
    if (m.train_w[k])
      out.push_back({m.fc[k].w.data(), m.fc[k].gw.data(), m.fc[k].w.size()});
    if (m.train_b[k])
      out.push_back({m.fc[k].b.data(), m.fc[k].gb.data(), m.fc[k].b.size()});
  }
  if (m.train_bn_affine)
    for (const auto& bnl : m.bn) {
      out.push_back({bnl.gamma.data(), bnl.ggamma.data(), bnl.gamma.size()});
      out.push_back({bnl.beta.data(), bnl.gbeta.data(), bnl.beta.size()});
    }
  for (const auto& ad : m.adapters) {
    out.push_back({ad.wa.data(), ad.gwa.data(), ad.wa.size()});
    out.push_back({ad.wb.data(), ad.gwb.data(), ad.wb.size()});
  }
  return out;
}

}  // namespace

double grad_check(Model& model, const Matrix& x, const std::vector<int>& labels,
                  double h) {
  if (!(h > 0.0)) throw ContractError("grad_check: step h must be positive");

  ForwardResult fr = model.forward(x, /*training=*/true);
  SoftmaxCrossEntropy cel;
  cel.forward(fr.logits, labels);
  model.backward(cel.backward());

  double max_err = 0.0;
  for (const ParamView& pv : trainable_params(model)) {
    for (std::size_t i = 0; i < pv.count; ++i) {
      const double lp = shadow_loss(model, x, labels, {pv.data, i, h});
      const double lm = shadow_loss(model, x, labels, {pv.data, i, -h});
      const double gn = (lp - lm) / (2.0 * h);
      const double ga = pv.grad[i];
      const double err = std::abs(ga - gn) /
                         std::max({std::abs(ga), std::abs(gn), 1e-6});
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace skl
