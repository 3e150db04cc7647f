#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ssvmr/tensor.hpp"

namespace ssvmr {

enum class Modality : std::uint8_t { video = 0, music = 1 };

const char* to_string(Modality m);

// Frames of one item: F x d for video, 1 x d for music.
struct FeatureSequence {
  std::string id;
  Tensor frames;

  std::size_t frame_count() const { return frames.rows(); }
};

// Immutable-after-load collection of feature sequences sharing one
// dimension. Items keep insertion order; ids are unique.
class FeatureBank {
 public:
  FeatureBank() = default;
  FeatureBank(Modality modality, std::size_t dim) : modality_(modality), dim_(dim) {}

  void add(FeatureSequence item);

  Modality modality() const { return modality_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  std::size_t max_frames() const;

  const FeatureSequence& operator[](std::size_t i) const { return items_[i]; }
  const std::vector<FeatureSequence>& items() const { return items_; }
  std::optional<std::size_t> find(const std::string& id) const;
  // Throws ContractError for an unknown id.
  std::size_t index_of(const std::string& id) const;

 private:
  Modality modality_ = Modality::video;
  std::size_t dim_ = 0;
  std::vector<FeatureSequence> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Binary bank format, little-endian:
//   "SSVB" | version u16 | modality u8 | count u32 | dim u32 | max_frames u32
//   per item: id_len u32 | id bytes | frames u32 | frames*dim f64
inline constexpr std::uint16_t kBankVersion = 1;
inline constexpr std::size_t kBankHeaderSize = 19;

std::vector<std::uint8_t> encode_bank(const FeatureBank& bank);
FeatureBank decode_bank(std::span<const std::uint8_t> bytes);
void write_bank(const FeatureBank& bank, const std::filesystem::path& path);
FeatureBank read_bank(const std::filesystem::path& path);

enum class PairOrigin { original, back_retrieved, synthetic };

const char* to_string(PairOrigin o);
PairOrigin parse_origin(const std::string& s);

struct PairRecord {
  std::string video_id;
  std::string music_id;
  PairOrigin origin = PairOrigin::original;
  std::optional<bool> true_match;

  friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

// One JSON object per line: video_id, music_id, origin, true_match (nullable).
std::string encode_manifest(std::span<const PairRecord> pairs);
std::vector<PairRecord> decode_manifest(const std::string& text);
void write_manifest(std::span<const PairRecord> pairs, const std::filesystem::path& path);
std::vector<PairRecord> read_manifest(const std::filesystem::path& path);

// Throws ContractError if any pair references an id missing from its bank.
void validate_pairs(std::span<const PairRecord> pairs, const FeatureBank& videos,
                    const FeatureBank& music);

// Seeded permutation of [0, n) cut into batches of batch_size. A trailing
// batch with fewer than 3 samples is dropped.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   std::uint64_t seed);

// Deterministic chunks of [0, n) covering every index (remainder merged into
// the last chunk). Used when every sample needs a loss value.
std::vector<std::vector<std::size_t>> covering_batches(std::size_t n, std::size_t batch_size);

struct SyntheticSpec {
  std::size_t n_pairs = 1000;
  std::size_t n_test_pairs = 500;
  std::size_t latent_dim = 16;
  std::size_t d_v = 128;
  std::size_t d_m = 128;
  std::size_t min_frames = 8;
  std::size_t max_frames = 16;
  double noise_rate = 0.3;
  double feature_noise_sigma = 0.5;
  // Fraction of each video's frames forming the contiguous span that
  // carries the full latent signal.
  double salient_fraction = 0.3;
  // Signal strength of frames outside the salient span.
  double background_signal = 0.2;
  // Per-frame distractor content living in the orthogonal complement of the
  // video signal subspace.
  std::size_t distractor_dim = 16;
  double distractor_scale = 1.0;
  // Latents are sqrt(1 - s^2) c + s eps with c one of n_clusters shared
  // centres and s = cluster_spread, so items of a cluster are plausible
  // matches for each other's music. 0 clusters gives isotropic latents.
  std::size_t n_clusters = 0;
  double cluster_spread = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticSplit {
  FeatureBank videos;
  FeatureBank music;
  std::vector<PairRecord> pairs;
  // Row i is the latent shared by video i and music i.
  Tensor latents;
  std::vector<std::size_t> clusters;  // empty without clusters
};

struct SyntheticData {
  SyntheticSplit train;
  SyntheticSplit test;
  // Columns span the signal subspace: d_v x latent_dim and d_m x latent_dim.
  Tensor video_map;
  Tensor music_map;
};

// Pair i of a split is (video i, music i). In the training split exactly
// floor(noise_rate * n_pairs) pairs get a different, uniformly chosen music
// id and true_match = false. The test split is clean.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace ssvmr
