// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Criteria cover gradient correctness, cache transparency, the
// MAC-reduction ratios, cache sizing, compute-type tables, the drift-recovery
// pattern, the parameter-freeze matrix, and cache event conservation.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "skl/checkpoint.hpp"
#include "skl/trainer.hpp"

using namespace skl;

namespace {

int failures = 0;

void report(int criterion, const char* name, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s%s%s\n", ok ? "PASS" : "FAIL", criterion,
              name, detail.empty() ? "" : " — ", detail.c_str());
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void randomize_wb(Model& model, std::uint64_t seed, float scale = 0.3f) {
  Rng rng(seed, 9);
  for (auto& ad : model.adapters)
    for (int r = 0; r < ad.wb.rows(); ++r)
      for (int c = 0; c < ad.wb.cols(); ++c) ad.wb(r, c) = scale * rng.gaussian();
}

struct Skip2Run {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t expected_events = 0;
};
std::vector<Skip2Run> skip2_runs;

RunMetrics run_finetune(Model& model, const Dataset& data, FineTuneMode mode,
                        int epochs, std::uint64_t seed, int batch_size = 20) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch_size;
  cfg.seed = seed;
  cfg.mode = mode;
  cfg.cache_enabled = mode == FineTuneMode::Skip2LoRA;
  RunMetrics rm = finetune(model, data, cfg);
  if (mode == FineTuneMode::Skip2LoRA) {
    const auto events = static_cast<std::uint64_t>(epochs) *
                        (data.num_samples() / batch_size) * batch_size;
    skip2_runs.push_back({rm.total_hits, rm.total_misses, events});
  }
  return rm;
}

// Per-batch backward MACs derived from the compute-type tables alone, with
// the same counting convention as the instrumented kernels: matrix products
// cost P*Q*S, a frozen BN backward costs B*M, column sums cost nothing.
std::uint64_t analytic_bwd_macs_per_batch(FineTuneMode mode,
                                          const std::vector<int>& dims,
                                          int rank, int batch) {
  const int n = static_cast<int>(dims.size()) - 1;
  const auto table = compute_type_assignment(mode, n);
  const auto B = static_cast<std::uint64_t>(batch);
  const auto R = static_cast<std::uint64_t>(rank);
  std::uint64_t macs = 0;
  for (int k = n; k >= 1; --k) {
    const auto N = static_cast<std::uint64_t>(dims[k - 1]);
    const auto M = static_cast<std::uint64_t>(dims[k]);
    // Adapter k reads the input of layer k (width N) in both wirings; skip
    // adapters write into the last layer's output (width d_n == M for k=n,
    // but their gy is always the final-layer gradient of width d_n).
    const ComputeType lt = table.lora[k - 1];
    if (is_lora_type(lt)) {
      const auto out = mode_is_skip(mode)
                           ? static_cast<std::uint64_t>(dims.back())
                           : M;
      macs += R * B * out;  // gW_B = y_A^T * gy
      macs += B * out * R;  // gx_B = gy * W_B^T
      macs += N * B * R;    // gW_A = x^T * gx_B
      if (lt == ComputeType::LoRAywx) macs += B * R * N;  // gx_A = gx_B * W_A^T
    }
    const ComputeType ft = table.fc[k - 1];
    if (fc_wants_gw(ft)) macs += N * B * M;  // gW = x^T * gy
    if (fc_wants_gx(ft)) macs += B * M * N;  // gx = gy * W^T
    // Walking through a block boundary crosses ReLU (free) and a frozen BN.
    const bool propagates = fc_wants_gx(ft) ||
                            (is_lora_type(lt) && lt == ComputeType::LoRAywx &&
                             !mode_is_skip(mode));
    if (k > 1 && propagates) {
      macs += B * N;                                        // BN gx
      if (mode == FineTuneMode::FTAll ||
          mode == FineTuneMode::FTAllLoRA)
        macs += B * N;                                      // ggamma
    }
  }
  return macs;
}

bool tensors_equal(const Matrix& a, const Matrix& b) { return a == b; }

}  // namespace

int main() {
  // ---- Criterion 1: gradient correctness across all eight modes ----
  {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    std::string worst_mode;
    bool ok = true;
    Rng rng(101, 2);
    Matrix x(2, 4);
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 4; ++c) x(r, c) = rng.gaussian();
    const std::vector<int> labels{0, 1};
    for (int i = 0; i < 8; ++i) {
      const auto mode = static_cast<FineTuneMode>(i);
      ModelSpec spec;
      spec.layer_dims = {4, 3, 3, 2};
      spec.rank = 2;
      spec.mode = mode;
      spec.seed = 11;
      Model m = build_model(spec);
      randomize_wb(m, 13 + i);
      const double err = grad_check(m, x, labels, 1e-3);
      if (err > worst) {
        worst = err;
        worst_mode = mode_name(mode);
      }
      if (err > 1e-2) ok = false;
    }
    const double secs = seconds_since(t0);
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "max rel err %.2e (%s), %.2f s (budget 10 s)", worst,
                  worst_mode.c_str(), secs);
    report(1, "gradient correctness in every mode", ok && secs < 10.0, buf);
  }

  // ---- Shared fixture: drifted dataset + pre-trained 256-96-96-3 model ----
  DriftSpec dspec;
  dspec.seed = 1;
  DriftDatasets data = gen_drifted(dspec);
  normalize(data.pretrain, {&data.finetune, &data.test});

  ModelSpec pre_spec;
  pre_spec.layer_dims = {256, 96, 96, 3};
  pre_spec.rank = 4;
  pre_spec.mode = FineTuneMode::FTAll;
  pre_spec.seed = 1;
  Model pre = build_model(pre_spec);
  {
    TrainConfig cfg;
    cfg.epochs = 100;
    cfg.batch_size = 20;
    cfg.seed = 1;
    pretrain(pre, data.pretrain, cfg);
  }

  // ---- Criterion 2: cache transparency at E=50 ----
  {
    const auto t0 = std::chrono::steady_clock::now();
    Model plain = checkpoint::transplant(pre, FineTuneMode::SkipLoRA, 4, 2);
    Model cached = checkpoint::transplant(pre, FineTuneMode::Skip2LoRA, 4, 2);
    const RunMetrics rm_plain =
        run_finetune(plain, data.finetune, FineTuneMode::SkipLoRA, 50, 7);
    const RunMetrics rm_cached =
        run_finetune(cached, data.finetune, FineTuneMode::Skip2LoRA, 50, 7);
    bool ok = plain.adapters.size() == cached.adapters.size();
    for (std::size_t i = 0; ok && i < plain.adapters.size(); ++i)
      ok = tensors_equal(plain.adapters[i].wa, cached.adapters[i].wa) &&
           tensors_equal(plain.adapters[i].wb, cached.adapters[i].wb);
    bool losses_ok = rm_plain.batches.size() == rm_cached.batches.size();
    for (std::size_t i = 0; losses_ok && i < rm_plain.batches.size(); ++i)
      losses_ok = rm_plain.batches[i].loss == rm_cached.batches[i].loss;
    const double secs = seconds_since(t0);
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "adapters %s, losses %s, %.2f s (budget 60 s)",
                  ok ? "bit-identical" : "DIFFER",
                  losses_ok ? "identical" : "DIFFER", secs);
    report(2, "skip-cache transparency", ok && losses_ok && secs < 60.0, buf);
  }

  // ---- Criteria 3/4/5: MAC reductions at E=300 ----
  Model skip_model = checkpoint::transplant(pre, FineTuneMode::SkipLoRA, 4, 2);
  Model skip2_model = checkpoint::transplant(pre, FineTuneMode::Skip2LoRA, 4, 2);
  Model loraall_model = checkpoint::transplant(pre, FineTuneMode::LoRAAll, 4, 2);
  const RunMetrics rm_skip =
      run_finetune(skip_model, data.finetune, FineTuneMode::SkipLoRA, 300, 7);
  const RunMetrics rm_skip2 =
      run_finetune(skip2_model, data.finetune, FineTuneMode::Skip2LoRA, 300, 7);
  const RunMetrics rm_loraall =
      run_finetune(loraall_model, data.finetune, FineTuneMode::LoRAAll, 300, 7);

  {
    const double frozen_ratio =
        static_cast<double>(rm_skip2.total_fc_fwd_macs) /
        static_cast<double>(rm_skip.total_fc_fwd_macs);
    const double fwd_reduction =
        1.0 - static_cast<double>(rm_skip2.total_fwd_macs()) /
                  static_cast<double>(rm_skip.total_fwd_macs());
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "frozen-path ratio %.3f%% (limit 1.5%%), forward reduction "
                  "%.1f%% (floor 85%%)",
                  100.0 * frozen_ratio, 100.0 * fwd_reduction);
    report(3, "forward-cost reduction",
           frozen_ratio <= 0.015 && fwd_reduction >= 0.85, buf);
  }

  {
    const double bwd_ratio = static_cast<double>(rm_skip.total_bwd_macs) /
                             static_cast<double>(rm_loraall.total_bwd_macs);
    const auto batches = static_cast<std::uint64_t>(rm_skip.batches.size());
    const std::uint64_t skip_expected =
        analytic_bwd_macs_per_batch(FineTuneMode::SkipLoRA, {256, 96, 96, 3},
                                    4, 20) *
        batches;
    const std::uint64_t loraall_expected =
        analytic_bwd_macs_per_batch(FineTuneMode::LoRAAll, {256, 96, 96, 3},
                                    4, 20) *
        batches;
    const bool exact = rm_skip.total_bwd_macs == skip_expected &&
                       rm_loraall.total_bwd_macs == loraall_expected;
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "backward ratio %.1f%% (limit 20%%); instrumented %llu/%llu "
                  "vs analytic %llu/%llu",
                  100.0 * bwd_ratio,
                  static_cast<unsigned long long>(rm_skip.total_bwd_macs),
                  static_cast<unsigned long long>(rm_loraall.total_bwd_macs),
                  static_cast<unsigned long long>(skip_expected),
                  static_cast<unsigned long long>(loraall_expected));
    report(4, "backward-cost reduction", bwd_ratio <= 0.20 && exact, buf);
  }

  {
    const double total_ratio = static_cast<double>(rm_skip2.total_macs()) /
                               static_cast<double>(rm_loraall.total_macs());
    char buf[120];
    std::snprintf(buf, sizeof(buf), "total MAC ratio %.2f%% (limit 15%%)",
                  100.0 * total_ratio);
    report(5, "total-cost reduction", total_ratio <= 0.15, buf);
  }

  // ---- Criterion 6: cache sizing ----
  {
    SkipCache cache(470, {256, 96, 96, 3});
    for (std::size_t i = 0; i < 470; ++i) {
      std::vector<std::vector<float>> acts;
      for (int d : {96, 96, 3}) acts.emplace_back(d, 0.0f);
      cache.insert(i, std::move(acts));
    }
    const auto st = cache.stats();
    char buf[96];
    std::snprintf(buf, sizeof(buf), "payload %zu bytes (expect 366600)",
                  st.bytes_used);
    report(6, "cache sizing", st.bytes_used == 366600, buf);
  }

  // ---- Criterion 7: compute-type tables for n=3 ----
  {
    using CT = ComputeType;
    auto eq = [](FineTuneMode m, std::vector<CT> fc, std::vector<CT> lora) {
      const auto t = compute_type_assignment(m, 3);
      return t.fc == fc && t.lora == lora;
    };
    const std::vector<CT> none3{CT::None, CT::None, CT::None};
    const bool ok =
        eq(FineTuneMode::FTAll, {CT::FCywb, CT::FCywbx, CT::FCywbx}, none3) &&
        eq(FineTuneMode::FTLast, {CT::FCy, CT::FCy, CT::FCywb}, none3) &&
        eq(FineTuneMode::FTBias, {CT::FCyb, CT::FCybx, CT::FCybx}, none3) &&
        eq(FineTuneMode::LoRAAll, {CT::FCy, CT::FCyx, CT::FCyx},
           {CT::LoRAyw, CT::LoRAywx, CT::LoRAywx}) &&
        eq(FineTuneMode::LoRALast, {CT::FCy, CT::FCy, CT::FCy},
           {CT::None, CT::None, CT::LoRAyw}) &&
        eq(FineTuneMode::FTAllLoRA, {CT::FCywb, CT::FCywbx, CT::FCywbx},
           {CT::LoRAyw, CT::LoRAywx, CT::LoRAywx}) &&
        eq(FineTuneMode::SkipLoRA, {CT::FCy, CT::FCy, CT::FCy},
           {CT::LoRAyw, CT::LoRAyw, CT::LoRAyw}) &&
        eq(FineTuneMode::Skip2LoRA, {CT::FCy, CT::FCy, CT::FCy},
           {CT::LoRAyw, CT::LoRAyw, CT::LoRAyw});
    report(7, "compute-type tables (n=3)", ok, "");
  }

  // ---- Criterion 8: drift gap and recovery ----
  {
    const auto t0 = std::chrono::steady_clock::now();
    const double before = evaluate(pre, data.test);
    const double after_skip2 = evaluate(skip2_model, data.test);
    const double after_skip = evaluate(skip_model, data.test);
    const double secs = seconds_since(t0);
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "before %.1f%% (cap 60%%), after %.1f%% (floor 85%%), "
                  "skip/skip2 equal: %s, eval %.2f s",
                  100.0 * before, 100.0 * after_skip2,
                  after_skip == after_skip2 ? "yes" : "NO", secs);
    report(8, "drift gap and recovery",
           before <= 0.60 && after_skip2 >= 0.85 && after_skip == after_skip2,
           buf);
  }

  // ---- Criterion 9: parameter-freeze matrix ----
  {
    bool ok = true;
    std::string detail;
    for (int i = 0; i < 8; ++i) {
      const auto mode = static_cast<FineTuneMode>(i);
      Model m = checkpoint::transplant(pre, mode, 4, 5);
      randomize_wb(m, 33 + i);
      Model before = m;
      run_finetune(m, data.finetune, mode, 1, 9);

      const bool ft_affine = mode == FineTuneMode::FTAll ||
                             mode == FineTuneMode::FTAllLoRA;
      auto expect = [&](bool trainable, bool changed, const char* what) {
        if (changed != trainable) {
          ok = false;
          if (detail.empty())
            detail = mode_name(mode) + std::string(": ") + what +
                     (changed ? " changed unexpectedly" : " failed to change");
        }
      };
      const int n = m.num_layers();
      for (int k = 0; k < n; ++k) {
        const bool w_train =
            mode == FineTuneMode::FTAll || mode == FineTuneMode::FTAllLoRA ||
            (mode == FineTuneMode::FTLast && k == n - 1);
        const bool b_train = w_train || mode == FineTuneMode::FTBias;
        expect(w_train, m.fc[k].w != before.fc[k].w, "fc weight");
        expect(b_train, m.fc[k].b != before.fc[k].b, "fc bias");
      }
      for (int k = 0; k + 1 < n; ++k) {
        expect(ft_affine, m.bn[k].gamma != before.bn[k].gamma, "bn gamma");
        expect(ft_affine, m.bn[k].beta != before.bn[k].beta, "bn beta");
        expect(false, m.bn[k].running_mean != before.bn[k].running_mean,
               "bn running mean");
        expect(false, m.bn[k].running_var != before.bn[k].running_var,
               "bn running var");
      }
      for (std::size_t a = 0; a < m.adapters.size(); ++a) {
        expect(true, m.adapters[a].wa != before.adapters[a].wa, "lora W_A");
        expect(true, m.adapters[a].wb != before.adapters[a].wb, "lora W_B");
      }
    }
    report(9, "parameter-freeze matrix", ok, detail);
  }

  // ---- Criterion 10: cache event conservation over all runs above ----
  {
    bool ok = !skip2_runs.empty();
    char buf[120];
    for (const auto& r : skip2_runs)
      if (r.hits + r.misses != r.expected_events) ok = false;
    std::snprintf(buf, sizeof(buf), "%zu cached runs audited",
                  skip2_runs.size());
    report(10, "cache event conservation", ok, buf);
  }

  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
