#include "ssvmr/losses.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "ssvmr/error.hpp"

namespace ssvmr {

void LossWeights::validate() const {
  for (double w : {lambda1, lambda2, lambda3, lambda4, margin}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ContractError("loss weights and margin must be finite and >= 0");
  }
}

namespace {

int sign(double x) { return (x > 0.0) - (x < 0.0); }

int coefficient_from_grams(const Tensor& gt, const Tensor& gx, std::size_t i, std::size_t j, std::size_t k) {
  return sign(gt(i, k) - gt(i, j)) - sign(gx(i, k) - gx(i, j));
}

}  // namespace

int structure_coefficient(const Tensor& trained, const Tensor& intra, std::size_t i, std::size_t j, std::size_t k) {
  const double t = dot(trained.row(i), trained.row(k)) - dot(trained.row(i), trained.row(j));
  const double x = dot(intra.row(i), intra.row(k)) - dot(intra.row(i), intra.row(j));
  return sign(t) - sign(x);
}

Tensor structure_weights(const Tensor& trained, const Tensor& intra, const StructureSampling& sampling) {
  const std::size_t b = trained.rows();
  if (intra.rows() != b) throw DimensionError("structure_weights: row count mismatch");
  const Tensor gt = matmul_nt(trained, trained);
  const Tensor gx = matmul_nt(intra, intra);
  Tensor w(b, b);
  auto add_triple = [&](std::size_t i, std::size_t j, std::size_t k, double scale) {
    const int c = coefficient_from_grams(gt, gx, i, j, k);
    if (c == 0) return;
    w(i, j) += scale * c;
    w(i, k) -= scale * c;
  };
  if (b <= sampling.full_enumeration_max) {
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < b; ++j) {
        if (j == i) continue;
        for (std::size_t k = 0; k < b; ++k) {
          if (k == i || k == j) continue;
          add_triple(i, j, k, 1.0);
        }
      }
    }
    return w;
  }
  if (sampling.rng == nullptr) {
    throw ContractError("structure triples for batch size " + std::to_string(b) + " need a sampling rng");
  }
  const double full = static_cast<double>((b - 1) * (b - 2));
  const double scale = full / static_cast<double>(sampling.pairs_per_anchor);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t s = 0; s < sampling.pairs_per_anchor; ++s) {
      std::size_t j = uniform_index(*sampling.rng, b - 1);
      if (j >= i) ++j;
      std::size_t k = uniform_index(*sampling.rng, b - 2);
      const std::size_t lo = std::min(i, j);
      const std::size_t hi = std::max(i, j);
      if (k >= lo) ++k;
      if (k >= hi) ++k;
      add_triple(i, j, k, scale);
    }
  }
  return w;
}

namespace {

// Row i: sum_{j != i} max(0, s_ij - s_ii + margin)
Var hinge_rows(const Var& scores, double margin) {
  Tape& t = *scores.tape();
  const std::size_t b = scores.value().rows();
  const Tensor eye = Tensor::identity(b);
  Tensor off_diag(b, b, 1.0);
  for (std::size_t i = 0; i < b; ++i) off_diag(i, i) = 0.0;
  const Var diag = row_sums(mul(scores, t.constant(eye)));
  const Var diag_cols = matmul(diag, t.constant(Tensor(1, b, 1.0)));
  const Var hinge = max_with_zero(add_scalar(sub(scores, diag_cols), margin));
  return row_sums(mul(hinge, t.constant(std::move(off_diag))));
}

Var structure_rows(const Var& embs, const Tensor& intra, const StructureSampling& sampling, StructureSign sign) {
  Tape& t = *embs.tape();
  Tensor w = structure_weights(embs.value(), intra, sampling);
  if (sign == StructureSign::corrected) {
    for (double& x : w.data()) x = -x;
  }
  const Var gram = matmul(embs, transpose(embs));
  return row_sums(mul(gram, t.constant(std::move(w))));
}

double total_of(const Var& v) {
  double s = 0.0;
  for (double x : v.value().data()) s += x;
  return s;
}

}  // namespace

TripletLossOutput triplet_loss(const Var& video_embs, const Var& music_embs, const Tensor& intra_video,
                               const Tensor& intra_music, const LossWeights& weights,
                               const StructureSampling& sampling) {
  const std::size_t b = video_embs.value().rows();
  if (b < 3) throw ContractError("triplet_loss needs a batch of at least 3, got " + std::to_string(b));
  if (music_embs.value().rows() != b || intra_video.rows() != b || intra_music.rows() != b) {
    throw DimensionError("triplet_loss: all inputs must have " + std::to_string(b) + " rows");
  }
  if (video_embs.value().cols() != music_embs.value().cols()) {
    throw DimensionError("triplet_loss: embedding widths differ");
  }

  TripletLossOutput out;
  const Var scores = matmul(video_embs, transpose(music_embs));  // s_ij = v_i . m_j
  const Var v2m = scale(hinge_rows(scores, weights.margin), weights.lambda1);
  const Var m2v = scale(hinge_rows(transpose(scores), weights.margin), weights.lambda2);
  Var rows = add(v2m, m2v);
  out.video_to_music = total_of(v2m);
  out.music_to_video = total_of(m2v);
  if (weights.lambda3 != 0.0) {
    const Var vs = scale(structure_rows(video_embs, intra_video, sampling, weights.structure_sign), weights.lambda3);
    out.video_structure = total_of(vs);
    rows = add(rows, vs);
  }
  if (weights.lambda4 != 0.0) {
    const Var ms = scale(structure_rows(music_embs, intra_music, sampling, weights.structure_sign), weights.lambda4);
    out.music_structure = total_of(ms);
    rows = add(rows, ms);
  }
  out.per_sample = rows;
  out.total = sum(rows);
  return out;
}

Var rdrop_loss(const Var& logits_pass1, const Var& logits_pass2) {
  Tape& t = *logits_pass1.tape();
  if (logits_pass2.tape() != &t) throw ContractError("rdrop_loss operands on different tapes");
  if (!logits_pass1.value().same_shape(logits_pass2.value())) {
    throw DimensionError("rdrop_loss: shape mismatch " + logits_pass1.value().shape_string() + " vs " +
                         logits_pass2.value().shape_string());
  }
  if (logits_pass1.value().rows() == 0) return t.constant(Tensor::scalar(0.0));
  // 1/2 (KL(p1||p2) + KL(p2||p1)) = 1/2 sum (p1 - p2)(log p1 - log p2)
  const Var lp1 = log_softmax(logits_pass1);
  const Var lp2 = log_softmax(logits_pass2);
  const Var p1 = softmax(logits_pass1);
  const Var p2 = softmax(logits_pass2);
  return scale(sum(mul(sub(p1, p2), sub(lp1, lp2))), 0.5);
}

Var mix_loss(const MixLossInputs& in, const LossWeights& weights, MixWeightConvention convention,
             const StructureSampling& sampling) {
  const std::size_t b = in.mixed_video_embs.value().rows();
  if (in.lambdas.size() != b) throw DimensionError("mix_loss: one lambda per mixed sample required");
  Tensor w1(b, 1);
  Tensor w2(b, 1);
  for (std::size_t i = 0; i < b; ++i) {
    const double lambda = in.lambdas[i];
    if (!(lambda > 0.0 && lambda < 1.0)) {
      throw ContractError("mix_loss: lambda must lie in (0, 1), got " + std::to_string(lambda));
    }
    const double on_first = convention == MixWeightConvention::literal ? lambda : 1.0 - lambda;
    w1[i] = on_first;
    w2[i] = 1.0 - on_first;
  }
  Tape& t = *in.mixed_video_embs.tape();
  const auto first = triplet_loss(in.mixed_video_embs, in.music1_embs, in.intra_mixed_video, in.intra_music1,
                                  weights, sampling);
  const auto second = triplet_loss(in.mixed_video_embs, in.music2_embs, in.intra_mixed_video, in.intra_music2,
                                   weights, sampling);
  return add(dot(t.constant(std::move(w1)), first.per_sample), dot(t.constant(std::move(w2)), second.per_sample));
}

}  // namespace ssvmr
