#include "skl/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "skl/checkpoint.hpp"
#include "skl/data.hpp"
#include "skl/trainer.hpp"

namespace skl {

namespace {

namespace fs = std::filesystem;

std::vector<int> parse_dims(const std::string& s) {
  std::vector<int> dims;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      dims.push_back(std::stoi(cell));
    } catch (const std::exception&) {
      throw CLI::ValidationError("--dims", "not a dimension list: " + s);
    }
  }
  if (dims.size() < 3)
    throw CLI::ValidationError("--dims", "need at least 3 entries: " + s);
  return dims;
}

void write_metrics_csv(const RunMetrics& rm, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics file: " + path);
  out << "epoch,batch,loss,fc_fwd_macs,lora_fwd_macs,bwd_macs,update_macs,"
         "cache_hits,cache_misses,elapsed_us\n";
  char loss_buf[32];
  for (const BatchRecord& r : rm.batches) {
    std::snprintf(loss_buf, sizeof(loss_buf), "%.9g",
                  static_cast<double>(r.loss));
    out << r.epoch << ',' << r.batch << ',' << loss_buf << ','
        << r.fc_fwd_macs << ',' << r.lora_fwd_macs << ',' << r.bwd_macs << ','
        << r.update_macs << ',' << r.cache_hits << ',' << r.cache_misses << ','
        << r.elapsed_us << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

void print_run_summary(const RunMetrics& rm) {
  std::printf("epochs=%d batches/epoch=%d final_loss=%.6f\n", rm.epochs,
              rm.batches_per_epoch, static_cast<double>(rm.final_loss));
  std::printf("macs: fc_fwd=%llu lora_fwd=%llu bwd=%llu update=%llu "
              "total=%llu\n",
              static_cast<unsigned long long>(rm.total_fc_fwd_macs),
              static_cast<unsigned long long>(rm.total_lora_fwd_macs),
              static_cast<unsigned long long>(rm.total_bwd_macs),
              static_cast<unsigned long long>(rm.total_update_macs),
              static_cast<unsigned long long>(rm.total_macs()));
  std::printf("cache: hits=%llu misses=%llu\n",
              static_cast<unsigned long long>(rm.total_hits),
              static_cast<unsigned long long>(rm.total_misses));
  std::printf("time: fwd=%.3fms bwd=%.3fms update=%.3fms total=%.3fms\n",
              rm.fwd_us / 1000.0, rm.bwd_us / 1000.0, rm.update_us / 1000.0,
              rm.total_us / 1000.0);
}

struct CommonTrainFlags {
  int epochs = 0;
  int batch_size = 20;
  float lr = 0.01f;
  std::uint64_t seed = 0;
  int label_col = -1;
  bool shuffle_epochs = false;
};

void add_train_flags(CLI::App* cmd, CommonTrainFlags& f, int default_epochs) {
  f.epochs = default_epochs;
  cmd->add_option("--epochs", f.epochs, "Training epochs")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--batch-size", f.batch_size, "Batch size")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--lr", f.lr, "SGD learning rate");
  cmd->add_option("--seed", f.seed, "RNG seed");
  cmd->add_option("--label-col", f.label_col,
                  "Label column index (-1 = last)");
  cmd->add_flag("--shuffle-epochs", f.shuffle_epochs,
                "Per-epoch shuffling instead of with-replacement sampling");
}

int cmd_gen_data(const DriftSpec& spec, const std::string& out_dir, bool raw) {
  DriftDatasets d = gen_drifted(spec);
  if (!raw) normalize(d.pretrain, {&d.finetune, &d.test});
  fs::create_directories(out_dir);
  save_csv(d.pretrain, (fs::path(out_dir) / "pretrain.csv").string());
  save_csv(d.finetune, (fs::path(out_dir) / "finetune.csv").string());
  save_csv(d.test, (fs::path(out_dir) / "test.csv").string());
  std::printf("wrote %s/{pretrain,finetune,test}.csv (%d/%d/%d samples, "
              "%d features, %d classes)\n",
              out_dir.c_str(), spec.pretrain_samples, spec.finetune_samples,
              spec.test_samples, spec.feature_dim, spec.num_classes);
  return 0;
}

int cmd_pretrain(const std::string& data_path, const std::string& ck_out,
                 const std::string& dims_str, const CommonTrainFlags& f) {
  Dataset data = load_csv(data_path, f.label_col);
  ModelSpec spec;
  spec.layer_dims = parse_dims(dims_str);
  spec.mode = FineTuneMode::FTAll;
  spec.seed = f.seed;
  if (spec.layer_dims.front() != data.feature_dim())
    throw ContractError("dataset has " + std::to_string(data.feature_dim()) +
                        " features but --dims starts with " +
                        std::to_string(spec.layer_dims.front()));
  if (spec.layer_dims.back() < data.num_classes)
    throw ContractError("dataset has " + std::to_string(data.num_classes) +
                        " classes but --dims ends with " +
                        std::to_string(spec.layer_dims.back()));
  Model model = build_model(spec);
  TrainConfig cfg;
  cfg.epochs = f.epochs;
  cfg.batch_size = f.batch_size;
  cfg.learning_rate = f.lr;
  cfg.seed = f.seed;
  cfg.mode = FineTuneMode::FTAll;
  cfg.sampling = f.shuffle_epochs ? TrainConfig::Sampling::ShuffledEpochs
                                  : TrainConfig::Sampling::WithReplacement;
  RunMetrics rm = pretrain(model, data, cfg);
  checkpoint::save(model, ck_out);
  const double acc = evaluate(model, data);
  std::printf("pretrain: final_loss=%.6f train_accuracy=%.2f%%\n",
              static_cast<double>(rm.final_loss), 100.0 * acc);
  std::printf("checkpoint written to %s\n", ck_out.c_str());
  return 0;
}

int cmd_finetune(const std::string& data_path, const std::string& ck_in,
                 const std::string& ck_out, const std::string& metrics_out,
                 const std::string& mode_str, int rank, bool no_cache,
                 const CommonTrainFlags& f) {
  const FineTuneMode mode = parse_mode(mode_str);
  Dataset data = load_csv(data_path, f.label_col);
  Model loaded = checkpoint::load(ck_in);
  Model model = checkpoint::transplant(loaded, mode, rank, f.seed);
  TrainConfig cfg;
  cfg.epochs = f.epochs;
  cfg.batch_size = f.batch_size;
  cfg.learning_rate = f.lr;
  cfg.seed = f.seed;
  cfg.mode = mode;
  cfg.cache_enabled = (mode == FineTuneMode::Skip2LoRA) && !no_cache;
  cfg.sampling = f.shuffle_epochs ? TrainConfig::Sampling::ShuffledEpochs
                                  : TrainConfig::Sampling::WithReplacement;
  RunMetrics rm = finetune(model, data, cfg);
  if (!ck_out.empty()) checkpoint::save(model, ck_out);
  if (!metrics_out.empty()) write_metrics_csv(rm, metrics_out);
  std::printf("finetune mode=%s cache=%s\n", mode_name(mode).c_str(),
              cfg.cache_enabled ? "on" : "off");
  print_run_summary(rm);
  if (!ck_out.empty())
    std::printf("checkpoint written to %s\n", ck_out.c_str());
  return 0;
}

int cmd_eval(const std::string& data_path, const std::string& ck_path,
             const std::string& report_path, int label_col) {
  Dataset data = load_csv(data_path, label_col);
  Model model = checkpoint::load(ck_path);
  if (data.feature_dim() != model.spec.layer_dims.front())
    throw ContractError("dataset has " + std::to_string(data.feature_dim()) +
                        " features, checkpoint expects " +
                        std::to_string(model.spec.layer_dims.front()));
  const double acc = evaluate(model, data);
  std::printf("accuracy: %.2f\n", 100.0 * acc);
  if (!report_path.empty()) {
    nlohmann::json report = {
        {"accuracy", acc},
        {"num_samples", data.num_samples()},
        {"mode", mode_name(model.spec.mode)},
    };
    std::ofstream out(report_path);
    if (!out) throw IoError("cannot write report: " + report_path);
    out << report.dump(2) << '\n';
  }
  return 0;
}

int cmd_bench(const std::string& data_path, const std::string& ck_in,
              const std::string& modes_str, const std::string& baseline_str,
              int rank, const CommonTrainFlags& f) {
  std::vector<FineTuneMode> modes;
  {
    std::stringstream ss(modes_str);
    std::string cell;
    while (std::getline(ss, cell, ',')) modes.push_back(parse_mode(cell));
  }
  const FineTuneMode baseline = parse_mode(baseline_str);
  Dataset data = load_csv(data_path, f.label_col);
  Model loaded = checkpoint::load(ck_in);

  struct Row {
    FineTuneMode mode;
    RunMetrics rm;
    double predict_us_per_sample = 0.0;
  };
  std::vector<Row> rows;
  for (FineTuneMode mode : modes) {
    Model model = checkpoint::transplant(loaded, mode, rank, f.seed);
    TrainConfig cfg;
    cfg.epochs = f.epochs;
    cfg.batch_size = f.batch_size;
    cfg.learning_rate = f.lr;
    cfg.seed = f.seed;
    cfg.mode = mode;
    cfg.cache_enabled = mode == FineTuneMode::Skip2LoRA;
    Row row;
    row.mode = mode;
    row.rm = finetune(model, data, cfg);
    const auto t0 = std::chrono::steady_clock::now();
    model.predict(data.features);
    const auto t1 = std::chrono::steady_clock::now();
    row.predict_us_per_sample =
        std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0)
            .count() /
        static_cast<double>(data.num_samples());
    rows.push_back(std::move(row));
  }

  const Row* base = nullptr;
  for (const Row& r : rows)
    if (r.mode == baseline) base = &r;

  std::printf("%-12s %10s %10s %10s %10s %12s %14s %14s %14s\n", "mode",
              "train(ms)", "fwd(ms)", "bwd(ms)", "upd(ms)", "pred(ms)",
              "fwd_macs", "bwd_macs", "total_macs");
  for (const Row& r : rows) {
    const double nb = static_cast<double>(r.rm.batches.size());
    std::printf("%-12s %10.3f %10.3f %10.3f %10.3f %12.4f %14llu %14llu "
                "%14llu\n",
                mode_name(r.mode).c_str(), r.rm.total_us / 1000.0 / nb,
                r.rm.fwd_us / 1000.0 / nb, r.rm.bwd_us / 1000.0 / nb,
                r.rm.update_us / 1000.0 / nb,
                r.predict_us_per_sample / 1000.0,
                static_cast<unsigned long long>(r.rm.total_fwd_macs()),
                static_cast<unsigned long long>(r.rm.total_bwd_macs),
                static_cast<unsigned long long>(r.rm.total_macs()));
  }
  if (f.epochs > 1) {
    std::printf("\nper-batch means excluding the first (all-miss) epoch:\n");
    for (const Row& r : rows) {
      const double nb =
          static_cast<double>((r.rm.epochs - 1) * r.rm.batches_per_epoch);
      std::printf("%-12s fwd=%.3fms bwd=%.3fms upd=%.3fms\n",
                  mode_name(r.mode).c_str(),
                  r.rm.fwd_us_excl_first / 1000.0 / nb,
                  r.rm.bwd_us_excl_first / 1000.0 / nb,
                  r.rm.update_us_excl_first / 1000.0 / nb);
    }
  }
  if (base) {
    std::printf("\nreductions vs %s:\n", mode_name(baseline).c_str());
    auto pct = [](double v, double b) {
      return b > 0.0 ? 100.0 * (1.0 - v / b) : 0.0;
    };
    for (const Row& r : rows) {
      if (&r == base) continue;
      std::printf("%-12s fwd_macs=%.1f%% bwd_macs=%.1f%% total_macs=%.1f%% "
                  "train_time=%.1f%%\n",
                  mode_name(r.mode).c_str(),
                  pct(static_cast<double>(r.rm.total_fwd_macs()),
                      static_cast<double>(base->rm.total_fwd_macs())),
                  pct(static_cast<double>(r.rm.total_bwd_macs),
                      static_cast<double>(base->rm.total_bwd_macs)),
                  pct(static_cast<double>(r.rm.total_macs()),
                      static_cast<double>(base->rm.total_macs())),
                  pct(static_cast<double>(r.rm.total_us),
                      static_cast<double>(base->rm.total_us)));
    }
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Skip2-LoRA trainer: lightweight fine-tuning of small MLPs "
               "with skip-topology LoRA adapters and a forward-activation "
               "cache"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data",
                                 "Generate a synthetic concept-drift dataset");
  DriftSpec dspec;
  std::string out_dir = "data";
  bool raw = false;
  gen->add_option("--out-dir", out_dir, "Output directory");
  gen->add_option("--samples", dspec.pretrain_samples,
                  "Samples per split")
      ->check(CLI::PositiveNumber);
  gen->add_option("--features", dspec.feature_dim, "Feature count")
      ->check(CLI::PositiveNumber);
  gen->add_option("--classes", dspec.num_classes, "Class count")
      ->check(CLI::Range(2, 1 << 20));
  gen->add_option("--separation", dspec.separation, "Class center norm");
  gen->add_option("--noise", dspec.noise_sigma, "Per-feature noise std");
  gen->add_option("--drift-shift", dspec.drift_shift,
                  "Norm of the per-class center shift after drift");
  gen->add_option("--drift-noise-mult", dspec.drift_noise_mult,
                  "Noise multiplier after drift");
  gen->add_option("--seed", dspec.seed, "RNG seed");
  gen->add_flag("--raw", raw, "Skip train-stat standardization");

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "Train a fresh model (ft-all)");
  std::string pre_data, pre_ck_out, pre_dims = "256,96,96,3";
  CommonTrainFlags pre_flags;
  pre->add_option("--data", pre_data, "Training CSV")->required();
  pre->add_option("--checkpoint-out", pre_ck_out, "Checkpoint path")
      ->required();
  pre->add_option("--dims", pre_dims, "Layer dims, e.g. 256,96,96,3");
  add_train_flags(pre, pre_flags, /*default_epochs=*/100);

  // finetune
  auto* ft = app.add_subcommand("finetune",
                                "Fine-tune a pre-trained checkpoint");
  std::string ft_data, ft_ck_in, ft_ck_out, ft_metrics, ft_mode;
  int ft_rank = 4;
  bool ft_no_cache = false;
  CommonTrainFlags ft_flags;
  ft->add_option("--data", ft_data, "Fine-tune CSV")->required();
  ft->add_option("--checkpoint-in", ft_ck_in, "Input checkpoint")->required();
  ft->add_option("--checkpoint-out", ft_ck_out, "Output checkpoint");
  ft->add_option("--metrics-out", ft_metrics, "Per-batch metrics CSV");
  ft->add_option("--mode", ft_mode,
                 "ft-all | ft-last | ft-bias | ft-all-lora | lora-all | "
                 "lora-last | skip-lora | skip2-lora")
      ->required();
  ft->add_option("--rank", ft_rank, "LoRA rank")->check(CLI::PositiveNumber);
  ft->add_flag("--no-cache", ft_no_cache,
               "Disable the skip-cache (skip2-lora only)");
  add_train_flags(ft, ft_flags, /*default_epochs=*/300);

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string ev_data, ev_ck, ev_report;
  int ev_label_col = -1;
  ev->add_option("--data", ev_data, "Test CSV")->required();
  ev->add_option("--checkpoint", ev_ck, "Checkpoint path")->required();
  ev->add_option("--report", ev_report, "Optional JSON report path");
  ev->add_option("--label-col", ev_label_col, "Label column (-1 = last)");

  // bench
  auto* be = app.add_subcommand("bench",
                                "Compare fine-tuning modes on one dataset");
  std::string be_data, be_ck_in, be_modes = "lora-all,skip-lora,skip2-lora",
              be_baseline = "lora-all";
  int be_rank = 4;
  CommonTrainFlags be_flags;
  be->add_option("--data", be_data, "Fine-tune CSV")->required();
  be->add_option("--checkpoint-in", be_ck_in, "Pre-trained checkpoint")
      ->required();
  be->add_option("--modes", be_modes, "Comma-separated mode list");
  be->add_option("--baseline", be_baseline, "Baseline mode for reductions");
  be->add_option("--rank", be_rank, "LoRA rank")->check(CLI::PositiveNumber);
  add_train_flags(be, be_flags, /*default_epochs=*/50);

  try {
    app.parse(argc, argv);
    if (*gen) {
      dspec.finetune_samples = dspec.pretrain_samples;
      dspec.test_samples = dspec.pretrain_samples;
      return cmd_gen_data(dspec, out_dir, raw);
    }
    if (*pre) return cmd_pretrain(pre_data, pre_ck_out, pre_dims, pre_flags);
    if (*ft)
      return cmd_finetune(ft_data, ft_ck_in, ft_ck_out, ft_metrics, ft_mode,
                          ft_rank, ft_no_cache, ft_flags);
    if (*ev) return cmd_eval(ev_data, ev_ck, ev_report, ev_label_col);
    if (*be)
      return cmd_bench(be_data, be_ck_in, be_modes, be_baseline, be_rank,
                       be_flags);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace skl
