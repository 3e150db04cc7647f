#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ssvmr/backbone.hpp"
#include "ssvmr/config.hpp"
#include "ssvmr/dataset.hpp"

namespace ssvmr {

struct RetrievedCandidate {
  std::string video_id;
  double score = 0.0;
};

struct AugmentationEntry {
  std::string music_id;
  std::vector<RetrievedCandidate> top;  // best first
  std::string chosen_video_id;
};

struct AugmentationReport {
  std::vector<AugmentationEntry> entries;
  std::uint64_t seed = 0;
  std::size_t added = 0;
};

struct AugmentResult {
  std::vector<PairRecord> pairs;
  AugmentationReport report;
};

// Music->video model on the given pairs: the backbone trained with L_T only,
// ranking weights exchanged so music is the query side. Back-retrieved
// pairs in the input are rejected.
ModelParams train_reverse_model(const FeatureBank& videos, const FeatureBank& music, std::span<const PairRecord> pairs,
                                const TrainConfig& config);

// For every music item: rank all videos by inner product, keep the top
// `top_k` (all videos when fewer), draw one uniformly, emit a
// back_retrieved pair.
AugmentResult augment(const ModelParams& reverse, const FeatureBank& music, const FeatureBank& videos,
                      std::uint64_t seed, std::size_t top_k = 3);

std::string report_to_jsonl(const AugmentationReport& report);

}  // namespace ssvmr
