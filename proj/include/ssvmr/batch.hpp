#pragma once

#include <cstddef>
#include <vector>

#include "ssvmr/backbone.hpp"
#include "ssvmr/losses.hpp"
#include "ssvmr/tensor.hpp"

namespace ssvmr {

// One mini-batch resolved against the banks. Row i pairs video i with its
// current target: the labeled music (through the music branch) or, for a
// relabeled sample, a constant soft-label embedding.
struct TrainingBatch {
  std::vector<std::size_t> sample_ids;  // positions in the training pair list
  std::vector<const Tensor*> videos;
  Tensor music_features;  // B x d_m, raw features of the labeled music
  Tensor soft_targets;    // B x d_e, zero rows where is_soft is false
  std::vector<bool> is_soft;
  Tensor intra_video;  // B x d_v
  Tensor intra_music;  // B x d_m (soft rows hold the q-weighted raw features)

  std::size_t size() const { return videos.size(); }
};

// Music-side embeddings of a batch: branch output for labeled rows, the
// constant soft target for relabeled rows.
Var batch_music_embeddings(const BoundParams& p, const TrainingBatch& batch, double dropout_rate, Rng* rng);

// Rows of x selected by index, as a differentiable product with a 0/1
// selection matrix.
Var select_rows(const Var& x, const std::vector<std::size_t>& rows);

}  // namespace ssvmr
