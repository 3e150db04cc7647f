#pragma once

#include <cstddef>
#include <span>

#include "ssvmr/autodiff.hpp"
#include "ssvmr/rng.hpp"
#include "ssvmr/tensor.hpp"

namespace ssvmr {

// corrected: the structure term enters with a minus sign so every ordering
// violation is penalized by 2|x_i.x_j - x_i.x_k|. literal: the opposite sign,
// which rewards violations and is unbounded below.
enum class StructureSign { corrected, literal };

struct LossWeights {
  double lambda1 = 3.0;  // video -> music ranking
  double lambda2 = 1.0;  // music -> video ranking
  double lambda3 = 0.2;  // video intra-modal structure
  double lambda4 = 0.2;  // music intra-modal structure
  double margin = 6.0;
  StructureSign structure_sign = StructureSign::corrected;

  void validate() const;
};

// How structure triples (i, j, k) are enumerated. Batches up to
// full_enumeration_max are enumerated exhaustively; larger batches draw
// pairs_per_anchor random (j, k) per anchor, reweighted to the full count.
struct StructureSampling {
  std::size_t full_enumeration_max = 32;
  std::size_t pairs_per_anchor = 64;
  Rng* rng = nullptr;
};

struct TripletLossOutput {
  Var total;       // 1 x 1
  Var per_sample;  // B x 1; row i holds every term anchored at i
  // Weighted term values, for logging and sign checks.
  double video_to_music = 0.0;
  double music_to_video = 0.0;
  double video_structure = 0.0;
  double music_structure = 0.0;
};

// C_ijk(x) = sign(x_i.x_k - x_i.x_j) - sign(xt_i.xt_k - xt_i.xt_j), sign(0) = 0.
int structure_coefficient(const Tensor& trained, const Tensor& intra, std::size_t i, std::size_t j, std::size_t k);

// W with sum_{j!=i, k!=i, j!=k} C_ijk (g_ij - g_ik) = sum_j W_ij g_ij for any
// Gram matrix g. Treated as a constant of the embeddings.
Tensor structure_weights(const Tensor& trained, const Tensor& intra, const StructureSampling& sampling);

// Ranking + structure loss over a batch of B >= 3 aligned pairs. Row i of
// video_embs is paired with row i of music_embs. intra_* are the
// pre-embedding features.
TripletLossOutput triplet_loss(const Var& video_embs, const Var& music_embs, const Tensor& intra_video,
                               const Tensor& intra_music, const LossWeights& weights,
                               const StructureSampling& sampling = {});

// Symmetric KL between row-softmax distributions of two dropout passes,
// summed over rows: sum_r 1/2 (KL(p1||p2) + KL(p2||p1)). Zero rows -> 0.
Var rdrop_loss(const Var& logits_pass1, const Var& logits_pass2);

enum class MixWeightConvention { literal, swapped };

struct MixLossInputs {
  Var mixed_video_embs;  // B x d_e
  Var music1_embs;       // receivers' targets
  Var music2_embs;       // donors' targets, row-aligned with the mixed videos
  Tensor intra_mixed_video;
  Tensor intra_music1;
  Tensor intra_music2;
  std::span<const double> lambdas;  // per mixed sample, each in (0, 1)
};

// sum_i lambda_i l_i(v_hat, m1) + (1 - lambda_i) l_i(v_hat, m2) under the
// literal convention; the swapped convention exchanges the two weights.
Var mix_loss(const MixLossInputs& in, const LossWeights& weights,
             MixWeightConvention convention = MixWeightConvention::literal,
             const StructureSampling& sampling = {});

inline double total_loss(double l_t, double l_r, double l_m) { return l_t + l_r + l_m; }

}  // namespace ssvmr
