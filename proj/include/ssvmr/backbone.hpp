#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ssvmr/autodiff.hpp"
#include "ssvmr/dataset.hpp"
#include "ssvmr/rng.hpp"
#include "ssvmr/tensor.hpp"

namespace ssvmr {

struct BackboneDims {
  std::size_t d_v = 128;
  std::size_t d_m = 128;
  std::size_t hidden = 256;
  std::size_t d_e = 64;

  friend bool operator==(const BackboneDims&, const BackboneDims&) = default;
};

// Two-branch embedding network.
//   video: per-frame affine -> tanh -> mean over frames -> dropout -> affine
//   music: affine -> tanh -> dropout -> affine
// Both branches end in d_e and are compared by inner product.
struct ModelParams {
  static constexpr std::size_t kCount = 8;

  BackboneDims dims;
  Tensor video_w1, video_b1, video_w2, video_b2;
  Tensor music_w1, music_b1, music_w2, music_b2;

  std::array<Tensor*, kCount> tensors();
  std::array<const Tensor*, kCount> tensors() const;
  static const std::array<std::string, kCount>& names();

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Xavier-uniform weights, zero biases.
ModelParams init_params(const BackboneDims& dims, Rng& rng);

// Parameters registered on a tape, either tracked (training) or constant.
struct BoundParams {
  std::array<Var, ModelParams::kCount> vars;

  const Var& video_w1() const { return vars[0]; }
  const Var& video_b1() const { return vars[1]; }
  const Var& video_w2() const { return vars[2]; }
  const Var& video_b2() const { return vars[3]; }
  const Var& music_w1() const { return vars[4]; }
  const Var& music_b1() const { return vars[5]; }
  const Var& music_w2() const { return vars[6]; }
  const Var& music_b2() const { return vars[7]; }

  std::vector<Tensor> grads() const;
};

BoundParams bind(Tape& tape, const ModelParams& params, bool track);

struct BranchOutput {
  Var embedding;   // B x d_e
  Var inputs;      // stacked raw input rows (frames for video)
  Var activations; // per-frame (video) or per-item (music) hidden activations before pooling
};

// Dropout is applied when rng != nullptr and dropout_rate > 0. With
// record_tape the stacked frames are a tracked variable so gradients reach
// individual frames.
BranchOutput embed_video_batch(const BoundParams& p, std::span<const Tensor* const> videos, double dropout_rate,
                               Rng* rng, bool record_tape);
BranchOutput embed_video(const BoundParams& p, const Tensor& frames, double dropout_rate, Rng* rng,
                         bool record_tape);
// features: B x d_m
BranchOutput embed_music_batch(const BoundParams& p, const Tensor& features, double dropout_rate, Rng* rng);
BranchOutput embed_music(const BoundParams& p, const Tensor& features, double dropout_rate, Rng* rng);

// Dropout-free embeddings of whole banks (rows follow bank order, or the
// given index order).
Tensor embed_video_bank(const ModelParams& params, const FeatureBank& bank);
Tensor embed_video_bank(const ModelParams& params, const FeatureBank& bank, std::span<const std::size_t> indices);
Tensor embed_music_bank(const ModelParams& params, const FeatureBank& bank);

// x-tilde: the pre-embedding representation used by the intra-modal
// structure terms. Mean of raw frames for video, the raw vector for music.
Tensor intra_features(const FeatureSequence& item);
Tensor intra_features(const Tensor& frames);

// Checkpoint: "SSVM" | version u16 | d_v d_m hidden d_e (u32 each) | weights
// as little-endian f64 in ModelParams::names() order.
inline constexpr std::uint16_t kCheckpointVersion = 1;
std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams read_checkpoint(const std::filesystem::path& path);

}  // namespace ssvmr
