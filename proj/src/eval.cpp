#include "ssvmr/eval.hpp"

#include <bit>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "ssvmr/error.hpp"

namespace ssvmr {

double EvalResult::recall(std::size_t k) const {
  auto it = recall_at.find(k);
  if (it == recall_at.end()) throw ContractError("recall@" + std::to_string(k) + " was not computed");
  return it->second;
}

std::vector<std::size_t> ground_truth_ranks(const Tensor& scores, std::span<const std::size_t> ground_truth) {
  if (ground_truth.size() != scores.rows()) throw DimensionError("one ground-truth index per query required");
  std::vector<std::size_t> ranks(scores.rows());
  for (std::size_t q = 0; q < scores.rows(); ++q) {
    const std::size_t gt = ground_truth[q];
    if (gt >= scores.cols()) throw ContractError("ground-truth index outside the gallery");
    const double s = scores(q, gt);
    std::size_t ahead = 0;
    for (std::size_t g = 0; g < scores.cols(); ++g) {
      const double v = scores(q, g);
      if (v > s || (v == s && g < gt)) ++ahead;
    }
    ranks[q] = ahead + 1;
  }
  return ranks;
}

std::string fnv1a_hex(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (auto b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string checkpoint_id(const ModelParams& params) { return fnv1a_hex(encode_checkpoint(params)); }

EvalResult recall_from_scores(const Tensor& scores, std::span<const std::size_t> ground_truth,
                              std::span<const std::size_t> ks) {
  if (scores.rows() == 0) throw ContractError("recall: no queries");
  for (auto k : ks) {
    if (k == 0 || k > scores.cols()) {
      throw ContractError("recall@" + std::to_string(k) + " invalid for gallery of " + std::to_string(scores.cols()));
    }
  }
  const auto ranks = ground_truth_ranks(scores, ground_truth);
  EvalResult r;
  r.n_queries = scores.rows();
  r.gallery_size = scores.cols();
  for (auto k : ks) {
    std::size_t hits = 0;
    for (auto rank : ranks) hits += rank <= k ? 1 : 0;
    r.recall_at[k] = static_cast<double>(hits) / static_cast<double>(ranks.size());
  }
  std::vector<std::uint8_t> bytes;
  bytes.reserve(scores.size() * 8);
  for (double v : scores.data()) {
    const auto u = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  r.similarity_checksum = fnv1a_hex(bytes);
  return r;
}

EvalResult recall_at_k(const ModelParams& params, const FeatureBank& videos, const FeatureBank& music,
                       std::span<const PairRecord> pairs, std::span<const std::size_t> ks) {
  if (videos.dim() != params.dims.d_v || music.dim() != params.dims.d_m) {
    throw DimensionError("evaluation banks do not match checkpoint dimensions");
  }
  std::vector<std::size_t> query_idx;
  std::vector<std::size_t> gt;
  for (const auto& p : pairs) {
    query_idx.push_back(videos.index_of(p.video_id));
    gt.push_back(music.index_of(p.music_id));
  }
  const Tensor q = embed_video_bank(params, videos, query_idx);
  const Tensor g = embed_music_bank(params, music);
  EvalResult r = recall_from_scores(matmul_nt(q, g), gt, ks);
  r.checkpoint_id = checkpoint_id(params);
  return r;
}

std::string eval_to_json(const EvalResult& r) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json rec;
  for (const auto& [k, v] : r.recall_at) rec["R@" + std::to_string(k)] = v;
  j["recall"] = rec;
  j["n_queries"] = r.n_queries;
  j["gallery_size"] = r.gallery_size;
  j["similarity_checksum"] = r.similarity_checksum;
  j["checkpoint_id"] = r.checkpoint_id;
  return j.dump();
}

std::string eval_to_table(const EvalResult& r) {
  std::ostringstream out;
  char buf[64];
  for (const auto& [k, v] : r.recall_at) {
    std::snprintf(buf, sizeof(buf), "  R@%-5zu %7.2f%%\n", k, 100.0 * v);
    out << buf;
  }
  out << "  queries " << r.n_queries << ", gallery " << r.gallery_size << "\n";
  return out.str();
}

}  // namespace ssvmr
