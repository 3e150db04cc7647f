#include "ssvmr/backbone.hpp"

#include <cmath>

#include "binary_io.hpp"
#include "ssvmr/error.hpp"

namespace ssvmr {

std::array<Tensor*, ModelParams::kCount> ModelParams::tensors() {
  return {&video_w1, &video_b1, &video_w2, &video_b2, &music_w1, &music_b1, &music_w2, &music_b2};
}

std::array<const Tensor*, ModelParams::kCount> ModelParams::tensors() const {
  return {&video_w1, &video_b1, &video_w2, &video_b2, &music_w1, &music_b1, &music_w2, &music_b2};
}

const std::array<std::string, ModelParams::kCount>& ModelParams::names() {
  static const std::array<std::string, kCount> kNames{"video_w1", "video_b1", "video_w2", "video_b2",
                                                      "music_w1", "music_b1", "music_w2", "music_b2"};
  return kNames;
}

namespace {

Tensor xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor w(fan_in, fan_out);
  for (auto& v : w.data()) v = (2.0 * uniform01(rng) - 1.0) * limit;
  return w;
}

// x * w + 1 * b, the bias broadcast done by an outer product with ones.
Var affine(const Var& x, const Var& w, const Var& b) {
  Tape& t = *x.tape();
  const Var ones = t.constant(Tensor(x.value().rows(), 1, 1.0));
  return add(matmul(x, w), matmul(ones, b));
}

Var maybe_dropout(const Var& h, double rate, Rng* rng) {
  if (rng == nullptr || rate == 0.0) return h;
  return dropout_mask_apply(h, make_dropout_mask(h.value().rows(), h.value().cols(), rate, *rng));
}

void check_dims(const Tensor& w, std::size_t rows, std::size_t cols, const char* name) {
  if (w.rows() != rows || w.cols() != cols) {
    throw DimensionError(std::string("parameter ") + name + " has shape " + w.shape_string() + ", expected [" +
                         std::to_string(rows) + "x" + std::to_string(cols) + "]");
  }
}

void check_params(const ModelParams& p) {
  const auto& d = p.dims;
  check_dims(p.video_w1, d.d_v, d.hidden, "video_w1");
  check_dims(p.video_b1, 1, d.hidden, "video_b1");
  check_dims(p.video_w2, d.hidden, d.d_e, "video_w2");
  check_dims(p.video_b2, 1, d.d_e, "video_b2");
  check_dims(p.music_w1, d.d_m, d.hidden, "music_w1");
  check_dims(p.music_b1, 1, d.hidden, "music_b1");
  check_dims(p.music_w2, d.hidden, d.d_e, "music_w2");
  check_dims(p.music_b2, 1, d.d_e, "music_b2");
}

}  // namespace

ModelParams init_params(const BackboneDims& dims, Rng& rng) {
  if (dims.d_v == 0 || dims.d_m == 0 || dims.hidden == 0 || dims.d_e == 0) {
    throw ContractError("backbone dimensions must be positive");
  }
  ModelParams p;
  p.dims = dims;
  p.video_w1 = xavier(dims.d_v, dims.hidden, rng);
  p.video_b1 = Tensor(1, dims.hidden);
  p.video_w2 = xavier(dims.hidden, dims.d_e, rng);
  p.video_b2 = Tensor(1, dims.d_e);
  p.music_w1 = xavier(dims.d_m, dims.hidden, rng);
  p.music_b1 = Tensor(1, dims.hidden);
  p.music_w2 = xavier(dims.hidden, dims.d_e, rng);
  p.music_b2 = Tensor(1, dims.d_e);
  return p;
}

std::vector<Tensor> BoundParams::grads() const {
  std::vector<Tensor> out;
  out.reserve(vars.size());
  for (const auto& v : vars) out.push_back(v.grad());
  return out;
}

BoundParams bind(Tape& tape, const ModelParams& params, bool track) {
  check_params(params);
  BoundParams b;
  const auto ts = params.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    b.vars[i] = track ? tape.variable(*ts[i]) : tape.constant(*ts[i]);
  }
  return b;
}

BranchOutput embed_video_batch(const BoundParams& p, std::span<const Tensor* const> videos, double dropout_rate,
                               Rng* rng, bool record_tape) {
  if (videos.empty()) throw ContractError("embed_video_batch: empty batch");
  Tape& t = *p.video_w1().tape();
  const std::size_t d_v = p.video_w1().value().rows();
  std::size_t total = 0;
  for (const Tensor* v : videos) {
    if (v->rows() == 0) throw ContractError("video with zero frames");
    if (v->cols() != d_v) {
      throw DimensionError("video frame dim " + std::to_string(v->cols()) + " does not match model d_v " +
                           std::to_string(d_v));
    }
    total += v->rows();
  }
  std::vector<double> stacked;
  stacked.reserve(total * d_v);
  // pool(i, f) = 1/F_i for the frames of video i
  Tensor pool(videos.size(), total);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const Tensor& v = *videos[i];
    stacked.insert(stacked.end(), v.data().begin(), v.data().end());
    const double w = 1.0 / static_cast<double>(v.rows());
    for (std::size_t f = 0; f < v.rows(); ++f) pool(i, offset + f) = w;
    offset += v.rows();
  }
  Tensor frames(total, d_v, std::move(stacked));
  const Var inputs = record_tape ? t.variable(std::move(frames)) : t.constant(std::move(frames));
  const Var h = tanh(affine(inputs, p.video_w1(), p.video_b1()));
  const Var pooled = matmul(t.constant(std::move(pool)), h);
  const Var dropped = maybe_dropout(pooled, dropout_rate, rng);
  return {affine(dropped, p.video_w2(), p.video_b2()), inputs, h};
}

BranchOutput embed_video(const BoundParams& p, const Tensor& frames, double dropout_rate, Rng* rng,
                         bool record_tape) {
  const Tensor* one[] = {&frames};
  return embed_video_batch(p, one, dropout_rate, rng, record_tape);
}

BranchOutput embed_music_batch(const BoundParams& p, const Tensor& features, double dropout_rate, Rng* rng) {
  if (features.rows() == 0) throw ContractError("embed_music_batch: empty batch");
  const std::size_t d_m = p.music_w1().value().rows();
  if (features.cols() != d_m) {
    throw DimensionError("music feature dim " + std::to_string(features.cols()) + " does not match model d_m " +
                         std::to_string(d_m));
  }
  Tape& t = *p.music_w1().tape();
  const Var inputs = t.constant(features);
  const Var h = tanh(affine(inputs, p.music_w1(), p.music_b1()));
  const Var dropped = maybe_dropout(h, dropout_rate, rng);
  return {affine(dropped, p.music_w2(), p.music_b2()), inputs, h};
}

BranchOutput embed_music(const BoundParams& p, const Tensor& features, double dropout_rate, Rng* rng) {
  return embed_music_batch(p, features, dropout_rate, rng);
}

namespace {
constexpr std::size_t kInferenceChunk = 128;
}

Tensor embed_video_bank(const ModelParams& params, const FeatureBank& bank, std::span<const std::size_t> indices) {
  std::vector<Tensor> parts;
  for (std::size_t start = 0; start < indices.size(); start += kInferenceChunk) {
    const std::size_t end = std::min(indices.size(), start + kInferenceChunk);
    Tape tape;
    const BoundParams p = bind(tape, params, false);
    std::vector<const Tensor*> videos;
    for (std::size_t i = start; i < end; ++i) videos.push_back(&bank[indices[i]].frames);
    parts.push_back(embed_video_batch(p, videos, 0.0, nullptr, false).embedding.value());
  }
  if (parts.empty()) return Tensor(0, params.dims.d_e);
  return concat_rows(parts);
}

Tensor embed_video_bank(const ModelParams& params, const FeatureBank& bank) {
  std::vector<std::size_t> all(bank.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return embed_video_bank(params, bank, all);
}

Tensor embed_music_bank(const ModelParams& params, const FeatureBank& bank) {
  if (bank.empty()) return Tensor(0, params.dims.d_e);
  std::vector<Tensor> rows;
  rows.reserve(bank.size());
  for (const auto& it : bank.items()) rows.push_back(it.frames);
  const Tensor features = concat_rows(rows);
  Tape tape;
  const BoundParams p = bind(tape, params, false);
  return embed_music_batch(p, features, 0.0, nullptr).embedding.value();
}

Tensor intra_features(const Tensor& frames) { return mean_rows(frames); }
Tensor intra_features(const FeatureSequence& item) { return mean_rows(item.frames); }

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params) {
  check_params(params);
  detail::ByteWriter w;
  w.bytes("SSVM");
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.dims.d_v));
  w.u32(static_cast<std::uint32_t>(params.dims.d_m));
  w.u32(static_cast<std::uint32_t>(params.dims.hidden));
  w.u32(static_cast<std::uint32_t>(params.dims.d_e));
  for (const Tensor* t : params.tensors()) {
    for (double v : t->data()) w.f64(v);
  }
  return w.take();
}

ModelParams decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (r.str(4, "magic") != "SSVM") throw FormatError("bad checkpoint magic, expected 'SSVM' at byte offset 0");
  const auto version = r.u16("version");
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  ModelParams p;
  p.dims.d_v = r.u32("d_v");
  p.dims.d_m = r.u32("d_m");
  p.dims.hidden = r.u32("hidden");
  p.dims.d_e = r.u32("d_e");
  const auto& d = p.dims;
  const std::array<std::pair<std::size_t, std::size_t>, ModelParams::kCount> shapes{{
      {d.d_v, d.hidden}, {1, d.hidden}, {d.hidden, d.d_e}, {1, d.d_e},
      {d.d_m, d.hidden}, {1, d.hidden}, {d.hidden, d.d_e}, {1, d.d_e}}};
  auto ts = p.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const auto [rows, cols] = shapes[i];
    if (r.remaining() / 8 < rows * cols) r.fail("truncated payload reading " + ModelParams::names()[i]);
    Tensor t(rows, cols);
    for (auto& v : t.data()) v = r.f64("weight");
    if (!t.all_finite()) r.fail("non-finite weight in " + ModelParams::names()[i]);
    *ts[i] = std::move(t);
  }
  if (r.remaining() != 0) r.fail(std::to_string(r.remaining()) + " trailing bytes after weights");
  return p;
}

void write_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  detail::write_file(path, encode_checkpoint(params));
}

ModelParams read_checkpoint(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace ssvmr
