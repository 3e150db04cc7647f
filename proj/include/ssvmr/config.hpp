#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ssvmr/backbone.hpp"
#include "ssvmr/losses.hpp"
#include "ssvmr/saliency_mix.hpp"

namespace ssvmr {

enum class DropoutSemantics { drop, keep };
enum class RDropScope { noisy, all };

struct TrainConfig {
  LossWeights weights;
  double temperature = 0.8;
  double tau = 0.3;
  double lambda0 = 0.4;
  // Read as a drop probability unless dropout_semantics = keep.
  double dropout = 0.9;
  DropoutSemantics dropout_semantics = DropoutSemantics::drop;
  double learning_rate = 4e-4;
  std::size_t batch_size = 32;
  std::size_t warmup_epochs = 10;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  std::size_t hidden = 256;
  std::size_t embed_dim = 64;

  bool back_retrieval = true;
  bool mixup = true;
  bool rdrop = true;
  bool self_training = true;
  std::size_t n_spans = 1;
  MixWeightConvention mix_weight_convention = MixWeightConvention::literal;
  SpanRounding span_rounding = SpanRounding::half_up;
  RDropScope rdrop_scope = RDropScope::noisy;

  // Epochs of supervised training for the music->video model.
  std::size_t reverse_epochs = 10;
  std::size_t top_k_retrieved = 3;
  // Candidate music embeddings are recomputed every this many epochs.
  std::size_t refresh_every = 1;
  std::size_t gmm_max_iters = 100;
  double gmm_tol = 1e-8;
  std::size_t structure_full_max = 32;
  std::size_t structure_pairs = 64;
  // Test-set evaluation cadence in epochs; 0 disables per-epoch evaluation.
  std::size_t eval_every = 1;
  std::vector<std::size_t> eval_ks{1, 10, 25};

  std::string train_video;
  std::string train_music;
  std::string train_manifest;
  std::string test_video;
  std::string test_music;
  std::string test_manifest;
  std::string out_dir = "run";

  // The drop probability actually applied.
  double drop_rate() const { return dropout_semantics == DropoutSemantics::drop ? dropout : 1.0 - dropout; }
  BackboneDims dims(std::size_t d_v, std::size_t d_m) const { return {d_v, d_m, hidden, embed_dim}; }

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Flat "key = value" text; '#' starts a comment. Unknown keys are errors.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
// Every key with its value, one per line, in a fixed order. Parsing the
// output yields an identical config.
std::string format_config(const TrainConfig& config);
void set_config_value(TrainConfig& config, const std::string& key, const std::string& value);

}  // namespace ssvmr
