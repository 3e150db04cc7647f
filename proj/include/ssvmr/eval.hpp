#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ssvmr/backbone.hpp"
#include "ssvmr/dataset.hpp"
#include "ssvmr/tensor.hpp"

namespace ssvmr {

struct EvalResult {
  std::map<std::size_t, double> recall_at;  // K -> fraction of queries hit within top K
  std::size_t n_queries = 0;
  std::size_t gallery_size = 0;
  std::string similarity_checksum;
  std::string checkpoint_id;

  double recall(std::size_t k) const;
};

// 1-based rank of each query's ground-truth item: 1 + #items scoring higher
// + #items scoring equal with a smaller gallery index.
std::vector<std::size_t> ground_truth_ranks(const Tensor& scores, std::span<const std::size_t> ground_truth);

EvalResult recall_from_scores(const Tensor& scores, std::span<const std::size_t> ground_truth,
                              std::span<const std::size_t> ks);

// Queries are the videos of `pairs`; the gallery is the whole music bank
// and each query's ground truth is its paired music. Dropout is off.
EvalResult recall_at_k(const ModelParams& params, const FeatureBank& videos, const FeatureBank& music,
                       std::span<const PairRecord> pairs, std::span<const std::size_t> ks);

std::string fnv1a_hex(std::span<const std::uint8_t> bytes);
std::string checkpoint_id(const ModelParams& params);

std::string eval_to_json(const EvalResult& r);
std::string eval_to_table(const EvalResult& r);

}  // namespace ssvmr
