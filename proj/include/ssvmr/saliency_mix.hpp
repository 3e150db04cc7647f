#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ssvmr/backbone.hpp"
#include "ssvmr/batch.hpp"
#include "ssvmr/losses.hpp"
#include "ssvmr/rng.hpp"

namespace ssvmr {

// Per-frame saliency: L2 norm of the loss gradient w.r.t. each input frame.
struct SaliencyProfile {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

// Saliency of every video in the batch from one dropout-free backward pass of
// the batch triplet loss.
std::vector<SaliencyProfile> batch_saliency(const ModelParams& params, const TrainingBatch& batch,
                                            const LossWeights& weights);

enum class SpanRounding { half_up, floor };

// max(min([lambda0 * len_v1], len_v2), 1), additionally capped at len_v1.
std::size_t span_length(std::size_t len_v1, std::size_t len_v2, double lambda0,
                        SpanRounding rounding = SpanRounding::half_up);

struct Span {
  std::size_t start = 0;
  std::size_t length = 0;

  std::size_t end() const { return start + length; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct SpanChoice {
  Span receiver;  // least salient window of v1
  Span donor;     // most salient window of v2

  friend bool operator==(const SpanChoice&, const SpanChoice&) = default;
};

// Window sums of length `length`; ties go to the smallest start.
SpanChoice select_spans(const SaliencyProfile& receiver, const SaliencyProfile& donor, std::size_t length);

// Up to n_spans disjoint windows, each of `length`, chosen greedily: the
// k-th least salient free receiver window pairs with the k-th most salient
// free donor window. Stops at the first window that no longer fits.
std::vector<SpanChoice> select_spans(const SaliencyProfile& receiver, const SaliencyProfile& donor,
                                     std::size_t length, std::size_t n_spans);

struct MixedSample {
  Tensor frames;   // same frame count as v1
  double lambda = 0.0;  // replaced frames / |v_hat|
  std::size_t receiver_index = 0;
  std::size_t donor_index = 0;
  std::vector<SpanChoice> spans;
};

MixedSample splice(const Tensor& v1, const Tensor& v2, std::span<const SpanChoice> spans);
MixedSample splice(const Tensor& v1, const Tensor& v2, const SpanChoice& span);

// Uniform random permutation without fixed points (n >= 2).
std::vector<std::size_t> random_derangement(std::size_t n, Rng& rng);

struct MixOptions {
  double lambda0 = 0.4;
  std::size_t n_spans = 1;
  SpanRounding rounding = SpanRounding::half_up;
};

struct MixedBatch {
  std::vector<MixedSample> samples;  // one per batch row, row order kept
  std::vector<std::size_t> partner;  // donor row for each receiver row
};

// Pairs each row with a derangement partner and splices the partner's most
// salient span into the row's least salient span. Batches of one are not
// mixed (empty result).
MixedBatch mix_batch(const ModelParams& params, const TrainingBatch& batch, const LossWeights& weights,
                     const MixOptions& options, Rng& rng);

}  // namespace ssvmr
