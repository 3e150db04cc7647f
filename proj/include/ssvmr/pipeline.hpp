#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ssvmr/back_retrieval.hpp"
#include "ssvmr/config.hpp"
#include "ssvmr/eval.hpp"
#include "ssvmr/training.hpp"

namespace ssvmr {

struct EvalSplit {
  FeatureBank videos;
  FeatureBank music;
  std::vector<PairRecord> pairs;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 0 = before training
  std::string phase;      // "init", "warmup", "ssvmr"
  std::size_t steps = 0;
  double l_t = 0.0;  // means over the epoch's steps
  double l_r = 0.0;
  double l_m = 0.0;
  double total = 0.0;
  std::optional<std::size_t> n_clean;
  std::optional<std::size_t> n_noisy;
  std::map<std::size_t, double> recall;
};

struct PartitionDiagnostics {
  std::size_t epoch = 0;
  Gmm1D gmm;
  std::size_t n_clean = 0;
  std::size_t n_noisy = 0;
  // Against true_match ground truth, when the manifest carries it.
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> auroc;
};

struct TrainResult {
  ModelParams params;
  std::vector<StepLog> steps;
  std::vector<EpochRecord> epochs;
  std::vector<PartitionDiagnostics> diagnostics;
  std::optional<AugmentationReport> augmentation;
};

using ProgressFn = std::function<void(const EpochRecord&)>;

// Full training run:
//   1. optional back-retrieval augmentation (once, before training)
//   2. warm-up epochs with L_T only
//   3. remaining epochs: refit the GMM on dropout-free losses, partition,
//      relabel the noisy set, and train on L_T + L_R + L_M (disabled terms
//      contribute exactly zero)
TrainResult train_pipeline(const TrainConfig& config, TrainingSet set, const EvalSplit* test = nullptr,
                           const ProgressFn& progress = {});

TrainingSet load_training_set(const TrainConfig& config);
std::optional<EvalSplit> load_eval_split(const TrainConfig& config);

std::string epoch_to_json(const EpochRecord& r);
std::string step_to_json(const StepLog& s);
std::string diagnostics_to_json(const PartitionDiagnostics& d);

// Writes config.snapshot, checkpoint.ssvm, metrics.jsonl, steps.jsonl,
// diagnostics.jsonl and (with back retrieval) augmentation.jsonl.
void write_run(const std::filesystem::path& dir, const TrainConfig& config, const TrainResult& result);

}  // namespace ssvmr
