#include "ssvmr/back_retrieval.hpp"

#include <algorithm>
#include <numeric>

#include <json.hpp>

#include "ssvmr/error.hpp"
#include "ssvmr/training.hpp"

namespace ssvmr {

ModelParams train_reverse_model(const FeatureBank& videos, const FeatureBank& music, std::span<const PairRecord> pairs,
                                const TrainConfig& config) {
  if (pairs.size() < 3) throw ContractError("reverse model needs at least 3 pairs");
  for (const auto& p : pairs) {
    if (p.origin == PairOrigin::back_retrieved) {
      throw ContractError("reverse model must be trained on original pairs only");
    }
  }
  TrainingSet set(videos, music, std::vector<PairRecord>(pairs.begin(), pairs.end()));
  LossWeights weights = config.weights;
  std::swap(weights.lambda1, weights.lambda2);
  std::swap(weights.lambda3, weights.lambda4);

  const std::uint64_t seed = make_rng(config.seed, {kStreamReverse})();
  Rng init = make_rng(seed, {kStreamInit});
  ModelParams params = init_params(config.dims(videos.dim(), music.dim()), init);
  AdamState adam = make_adam_state(
      [&] {
        std::vector<Tensor> v;
        for (const auto* t : params.tensors()) v.push_back(*t);
        return v;
      }(),
      AdamOptions{config.learning_rate});
  for (std::size_t e = 0; e < config.reverse_epochs; ++e) {
    supervised_epoch(params, adam, set, weights, config.drop_rate(), std::min(config.batch_size, set.size()), seed, e,
                     config.structure_full_max, config.structure_pairs);
  }
  return params;
}

AugmentResult augment(const ModelParams& reverse, const FeatureBank& music, const FeatureBank& videos,
                      std::uint64_t seed, std::size_t top_k) {
  if (videos.empty()) throw ContractError("augment: empty video gallery");
  if (top_k == 0) throw ContractError("augment: top_k must be >= 1");
  const Tensor queries = embed_music_bank(reverse, music);
  const Tensor gallery = embed_video_bank(reverse, videos);
  const Tensor scores = matmul_nt(queries, gallery);
  const std::size_t keep = std::min(top_k, videos.size());

  AugmentResult out;
  out.report.seed = seed;
  Rng rng = make_rng(seed, {kStreamAugment});
  std::vector<std::size_t> order(videos.size());
  for (std::size_t q = 0; q < music.size(); ++q) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto row = scores.row(q);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                      [&](std::size_t a, std::size_t b) { return row[a] > row[b] || (row[a] == row[b] && a < b); });
    AugmentationEntry entry;
    entry.music_id = music[q].id;
    for (std::size_t i = 0; i < keep; ++i) entry.top.push_back({videos[order[i]].id, row[order[i]]});
    entry.chosen_video_id = entry.top[uniform_index(rng, keep)].video_id;
    out.pairs.push_back(PairRecord{entry.chosen_video_id, entry.music_id, PairOrigin::back_retrieved, std::nullopt});
    out.report.entries.push_back(std::move(entry));
  }
  out.report.added = out.pairs.size();
  return out;
}

std::string report_to_jsonl(const AugmentationReport& report) {
  std::string out;
  for (const auto& e : report.entries) {
    nlohmann::ordered_json j;
    j["music_id"] = e.music_id;
    nlohmann::ordered_json top = nlohmann::ordered_json::array();
    for (const auto& c : e.top) top.push_back({{"video_id", c.video_id}, {"score", c.score}});
    j["top"] = top;
    j["chosen_video_id"] = e.chosen_video_id;
    j["seed"] = report.seed;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace ssvmr
