#include "ssvmr/dataset.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "ssvmr/error.hpp"
#include "ssvmr/rng.hpp"

namespace ssvmr {

const char* to_string(Modality m) { return m == Modality::video ? "video" : "music"; }

void FeatureBank::add(FeatureSequence item) {
  if (item.frames.rows() == 0) throw ContractError("bank item '" + item.id + "' has no frames");
  if (item.frames.cols() != dim_) {
    throw DimensionError("bank item '" + item.id + "' has dim " + std::to_string(item.frames.cols()) +
                         ", bank dim is " + std::to_string(dim_));
  }
  if (modality_ == Modality::music && item.frames.rows() != 1) {
    throw ContractError("music item '" + item.id + "' must be a single vector");
  }
  if (!item.frames.all_finite()) throw NumericError("bank item '" + item.id + "' has non-finite values");
  if (index_.contains(item.id)) throw ContractError("duplicate bank id '" + item.id + "'");
  index_.emplace(item.id, items_.size());
  items_.push_back(std::move(item));
}

std::size_t FeatureBank::max_frames() const {
  std::size_t m = 0;
  for (const auto& it : items_) m = std::max(m, it.frame_count());
  return m;
}

std::optional<std::size_t> FeatureBank::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t FeatureBank::index_of(const std::string& id) const {
  auto idx = find(id);
  if (!idx) throw ContractError(std::string("unknown ") + to_string(modality_) + " id '" + id + "'");
  return *idx;
}

using detail::ByteReader;
using detail::ByteWriter;

std::vector<std::uint8_t> encode_bank(const FeatureBank& bank) {
  ByteWriter w;
  w.bytes("SSVB");
  w.u16(kBankVersion);
  w.u8(static_cast<std::uint8_t>(bank.modality()));
  w.u32(static_cast<std::uint32_t>(bank.size()));
  w.u32(static_cast<std::uint32_t>(bank.dim()));
  w.u32(static_cast<std::uint32_t>(bank.max_frames()));
  for (const auto& item : bank.items()) {
    w.u32(static_cast<std::uint32_t>(item.id.size()));
    w.bytes(item.id);
    w.u32(static_cast<std::uint32_t>(item.frame_count()));
    for (double v : item.frames.data()) w.f64(v);
  }
  return w.take();
}

FeatureBank decode_bank(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.str(4, "magic") != "SSVB") {
    throw FormatError("bad magic, expected 'SSVB' at byte offset 0");
  }
  const auto version = r.u16("version");
  if (version != kBankVersion) r.fail("unsupported bank version " + std::to_string(version));
  const auto modality = r.u8("modality");
  if (modality > 1) r.fail("unknown modality " + std::to_string(modality));
  const auto count = r.u32("count");
  const auto dim = r.u32("dim");
  const auto max_frames = r.u32("max_frames");

  FeatureBank bank(static_cast<Modality>(modality), dim);
  std::uint32_t seen_max = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto id_len = r.u32("id length");
    std::string id = r.str(id_len, "id");
    const auto frames_offset = r.offset();
    const auto frames = r.u32("frame count");
    if (frames == 0) r.fail("item '" + id + "' declares zero frames");
    if (frames > max_frames) {
      throw FormatError("item '" + id + "' has " + std::to_string(frames) + " frames, header max is " +
                        std::to_string(max_frames) + " at byte offset " + std::to_string(frames_offset));
    }
    const std::size_t n = static_cast<std::size_t>(frames) * dim;
    if (r.remaining() / 8 < n) r.fail("truncated payload reading frames of '" + id + "'");
    std::vector<double> data(n);
    for (auto& v : data) v = r.f64("frame value");
    seen_max = std::max(seen_max, frames);
    try {
      bank.add(FeatureSequence{std::move(id), Tensor(frames, dim, std::move(data))});
    } catch (const Error& e) {
      throw FormatError(std::string(e.what()) + " at byte offset " + std::to_string(frames_offset));
    }
  }
  if (seen_max != max_frames) r.fail("header max_frames " + std::to_string(max_frames) + " does not match payload");
  if (r.remaining() != 0) r.fail(std::to_string(r.remaining()) + " trailing bytes after declared items");
  return bank;
}

void write_bank(const FeatureBank& bank, const std::filesystem::path& path) {
  detail::write_file(path, encode_bank(bank));
}

FeatureBank read_bank(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  try {
    return decode_bank(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

const char* to_string(PairOrigin o) {
  switch (o) {
    case PairOrigin::original: return "original";
    case PairOrigin::back_retrieved: return "back_retrieved";
    case PairOrigin::synthetic: return "synthetic";
  }
  return "original";
}

PairOrigin parse_origin(const std::string& s) {
  if (s == "original") return PairOrigin::original;
  if (s == "back_retrieved") return PairOrigin::back_retrieved;
  if (s == "synthetic") return PairOrigin::synthetic;
  throw FormatError("unknown pair origin '" + s + "'");
}

std::string encode_manifest(std::span<const PairRecord> pairs) {
  std::string out;
  for (const auto& p : pairs) {
    nlohmann::ordered_json j;
    j["video_id"] = p.video_id;
    j["music_id"] = p.music_id;
    j["origin"] = to_string(p.origin);
    j["true_match"] = p.true_match ? nlohmann::ordered_json(*p.true_match) : nlohmann::ordered_json(nullptr);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<PairRecord> decode_manifest(const std::string& text) {
  std::vector<PairRecord> pairs;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PairRecord p;
      p.video_id = j.at("video_id").get<std::string>();
      p.music_id = j.at("music_id").get<std::string>();
      p.origin = j.contains("origin") ? parse_origin(j.at("origin").get<std::string>()) : PairOrigin::original;
      if (j.contains("true_match") && !j.at("true_match").is_null()) p.true_match = j.at("true_match").get<bool>();
      pairs.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pairs;
}

void write_manifest(std::span<const PairRecord> pairs, const std::filesystem::path& path) {
  detail::write_text(path, encode_manifest(pairs));
}

std::vector<PairRecord> read_manifest(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  return decode_manifest(std::string(bytes.begin(), bytes.end()));
}

void validate_pairs(std::span<const PairRecord> pairs, const FeatureBank& videos, const FeatureBank& music) {
  for (const auto& p : pairs) {
    videos.index_of(p.video_id);
    music.index_of(p.music_id);
  }
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed) {
  if (batch_size < 3) throw ContractError("batch size must be >= 3, got " + std::to_string(batch_size));
  if (n < 3) throw ContractError("need at least 3 pairs to form a batch, got " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed);
  shuffle(std::span(order), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    if (end - start < 3) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<std::vector<std::size_t>> covering_batches(std::size_t n, std::size_t batch_size) {
  if (batch_size < 3) throw ContractError("batch size must be >= 3, got " + std::to_string(batch_size));
  if (n < 3) throw ContractError("need at least 3 pairs to form a batch, got " + std::to_string(n));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    std::vector<std::size_t> b(end - start);
    std::iota(b.begin(), b.end(), start);
    if (b.size() < 3 && !batches.empty()) {
      batches.back().insert(batches.back().end(), b.begin(), b.end());
    } else {
      batches.push_back(std::move(b));
    }
  }
  return batches;
}

}  // namespace ssvmr
