#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "ssvmr/backbone.hpp"
#include "ssvmr/batch.hpp"
#include "ssvmr/config.hpp"
#include "ssvmr/dataset.hpp"
#include "ssvmr/losses.hpp"
#include "ssvmr/noise_partition.hpp"
#include "ssvmr/optim.hpp"
#include "ssvmr/saliency_mix.hpp"

namespace ssvmr {

// Banks plus a pair list, with ids resolved to bank rows.
class TrainingSet {
 public:
  TrainingSet(FeatureBank videos, FeatureBank music, std::vector<PairRecord> pairs);

  const FeatureBank& videos() const { return videos_; }
  const FeatureBank& music() const { return music_; }
  const std::vector<PairRecord>& pairs() const { return pairs_; }
  std::size_t size() const { return pairs_.size(); }
  std::size_t video_row(std::size_t sample) const { return video_row_[sample]; }
  std::size_t music_row(std::size_t sample) const { return music_row_[sample]; }
  // Raw music features stacked in bank order (N_m x d_m).
  const Tensor& music_features() const { return music_features_; }

  void append(std::span<const PairRecord> extra);

 private:
  FeatureBank videos_;
  FeatureBank music_;
  std::vector<PairRecord> pairs_;
  std::vector<std::size_t> video_row_;
  std::vector<std::size_t> music_row_;
  std::vector<Tensor> intra_video_;
  Tensor music_features_;

  friend TrainingBatch build_batch(const TrainingSet&, std::span<const std::size_t>,
                                   std::span<const std::optional<SoftLabel>>, std::size_t);
};

// soft_labels is either empty or has one slot per sample; filled slots
// replace the labeled music by the soft target.
TrainingBatch build_batch(const TrainingSet& set, std::span<const std::size_t> samples,
                          std::span<const std::optional<SoftLabel>> soft_labels, std::size_t d_e);

struct StepOptions {
  LossWeights weights;
  double drop_rate = 0.0;
  StructureSampling structure;
  // R-Drop over these batch rows against the candidate embeddings.
  bool rdrop = false;
  std::vector<std::size_t> rdrop_rows;
  const Tensor* candidates = nullptr;
  bool mix = false;
  MixOptions mix_options;
  MixWeightConvention mix_convention = MixWeightConvention::literal;
};

struct StepLog {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double l_t = 0.0;
  double l_r = 0.0;
  double l_m = 0.0;
  double total = 0.0;
  std::size_t mixed = 0;
};

// One optimizer step on total = L_T + L_R + L_M. Disabled terms are exactly
// zero. dropout_rng drives every dropout mask; mix_rng picks mix partners.
StepLog train_step(ModelParams& params, AdamState& adam, const TrainingBatch& batch, const StepOptions& options,
                   Rng& dropout_rng, Rng& mix_rng);

// Dropout-free per-sample triplet losses (original labels) for every sample,
// in seeded covering batches.
std::vector<double> per_sample_losses(const ModelParams& params, const TrainingSet& set, const LossWeights& weights,
                                      std::size_t batch_size, std::uint64_t seed,
                                      const StructureSampling& structure = {});

struct EpochPlan {
  LossWeights weights;
  double drop_rate = 0.0;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  std::size_t structure_full_max = 32;
  std::size_t structure_pairs = 64;
  // Empty, or one slot per sample.
  std::span<const std::optional<SoftLabel>> soft_labels;
  bool rdrop = false;
  // Samples that receive the R-Drop term (one flag per sample).
  std::vector<bool> rdrop_members;
  const Tensor* candidates = nullptr;
  bool mix = false;
  MixOptions mix_options;
  MixWeightConvention mix_convention = MixWeightConvention::literal;
};

// One pass over seeded batches of the set. Randomness per step comes from
// streams keyed by (seed, epoch, step) only.
std::vector<StepLog> run_epoch(ModelParams& params, AdamState& adam, const TrainingSet& set, const EpochPlan& plan);

// One epoch of L_T-only training (warm-up and the backbone baseline share
// this path).
std::vector<StepLog> supervised_epoch(ModelParams& params, AdamState& adam, const TrainingSet& set,
                                      const LossWeights& weights, double drop_rate, std::size_t batch_size,
                                      std::uint64_t seed, std::size_t epoch, std::size_t structure_full_max = 32,
                                      std::size_t structure_pairs = 64);

// Stream tags for make_rng.
enum RngStream : std::uint64_t {
  kStreamInit = 1,
  kStreamBatches = 2,
  kStreamDropout = 3,
  kStreamMix = 4,
  kStreamStructure = 5,
  kStreamScoring = 6,
  kStreamAugment = 7,
  kStreamReverse = 8,
};

}  // namespace ssvmr
