#include "ssvmr/saliency_mix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ssvmr/error.hpp"

namespace ssvmr {

std::vector<SaliencyProfile> batch_saliency(const ModelParams& params, const TrainingBatch& batch,
                                            const LossWeights& weights) {
  for (const Tensor* v : batch.videos) {
    if (v->rows() == 0) throw ContractError("saliency of a zero-length video");
  }
  Tape tape;
  const BoundParams p = bind(tape, params, false);
  const BranchOutput video = embed_video_batch(p, batch.videos, 0.0, nullptr, true);
  const Var music = batch_music_embeddings(p, batch, 0.0, nullptr);
  const auto lt = triplet_loss(video.embedding, music, batch.intra_video, batch.intra_music, weights);
  tape.backward(lt.total);
  const Tensor g = video.inputs.grad();

  std::vector<SaliencyProfile> out;
  out.reserve(batch.size());
  std::size_t row = 0;
  for (const Tensor* v : batch.videos) {
    SaliencyProfile s;
    s.values.reserve(v->rows());
    for (std::size_t f = 0; f < v->rows(); ++f, ++row) {
      const auto gr = g.row(row);
      s.values.push_back(std::sqrt(dot(gr, gr)));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::size_t span_length(std::size_t len_v1, std::size_t len_v2, double lambda0, SpanRounding rounding) {
  if (len_v1 == 0 || len_v2 == 0) throw ContractError("span_length: video lengths must be >= 1");
  if (!(lambda0 > 0.0 && lambda0 <= 1.0)) throw ContractError("span_length: lambda0 must lie in (0, 1]");
  const double raw = lambda0 * static_cast<double>(len_v1);
  const double rounded = rounding == SpanRounding::half_up ? std::floor(raw + 0.5) : std::floor(raw);
  std::size_t len = std::min(static_cast<std::size_t>(rounded), len_v2);
  len = std::max<std::size_t>(len, 1);
  return std::min(len, len_v1);
}

namespace {

double window_sum(const std::vector<double>& s, std::size_t start, std::size_t length) {
  double acc = 0.0;
  for (std::size_t f = start; f < start + length; ++f) acc += s[f];
  return acc;
}

bool overlaps(const std::vector<Span>& taken, std::size_t start, std::size_t length) {
  return std::any_of(taken.begin(), taken.end(),
                     [&](const Span& t) { return start < t.end() && t.start < start + length; });
}

// Best free window; lowest sum when minimize, highest otherwise. Returns
// false when no free window of this length exists.
bool best_window(const std::vector<double>& s, std::size_t length, bool minimize, const std::vector<Span>& taken,
                 Span& out) {
  if (length == 0 || length > s.size()) return false;
  bool found = false;
  double best = 0.0;
  for (std::size_t start = 0; start + length <= s.size(); ++start) {
    if (overlaps(taken, start, length)) continue;
    const double w = window_sum(s, start, length);
    if (!found || (minimize ? w < best : w > best)) {
      best = w;
      out = Span{start, length};
      found = true;
    }
  }
  return found;
}

}  // namespace

SpanChoice select_spans(const SaliencyProfile& receiver, const SaliencyProfile& donor, std::size_t length) {
  if (length == 0 || length > receiver.size() || length > donor.size()) {
    throw ContractError("select_spans: span length must fit both videos");
  }
  SpanChoice c;
  best_window(receiver.values, length, true, {}, c.receiver);
  best_window(donor.values, length, false, {}, c.donor);
  return c;
}

std::vector<SpanChoice> select_spans(const SaliencyProfile& receiver, const SaliencyProfile& donor,
                                     std::size_t length, std::size_t n_spans) {
  if (n_spans == 0) throw ContractError("select_spans: need at least one span");
  std::vector<SpanChoice> out{select_spans(receiver, donor, length)};
  std::vector<Span> taken_r{out[0].receiver};
  std::vector<Span> taken_d{out[0].donor};
  for (std::size_t k = 1; k < n_spans; ++k) {
    SpanChoice c;
    if (!best_window(receiver.values, length, true, taken_r, c.receiver)) break;
    if (!best_window(donor.values, length, false, taken_d, c.donor)) break;
    taken_r.push_back(c.receiver);
    taken_d.push_back(c.donor);
    out.push_back(c);
  }
  return out;
}

MixedSample splice(const Tensor& v1, const Tensor& v2, std::span<const SpanChoice> spans) {
  if (v1.cols() != v2.cols()) throw DimensionError("splice: frame dimensions differ");
  MixedSample m;
  m.frames = v1;
  std::size_t replaced = 0;
  for (const auto& c : spans) {
    if (c.receiver.length != c.donor.length) throw ContractError("splice: span lengths differ");
    if (c.receiver.end() > v1.rows() || c.donor.end() > v2.rows()) throw ContractError("splice: span out of range");
    for (std::size_t f = 0; f < c.receiver.length; ++f) {
      const auto src = v2.row(c.donor.start + f);
      std::copy(src.begin(), src.end(), m.frames.row(c.receiver.start + f).begin());
    }
    replaced += c.receiver.length;
  }
  m.lambda = static_cast<double>(replaced) / static_cast<double>(m.frames.rows());
  m.spans.assign(spans.begin(), spans.end());
  return m;
}

MixedSample splice(const Tensor& v1, const Tensor& v2, const SpanChoice& span) {
  return splice(v1, v2, std::span<const SpanChoice>(&span, 1));
}

std::vector<std::size_t> random_derangement(std::size_t n, Rng& rng) {
  if (n < 2) throw ContractError("a derangement needs at least 2 elements");
  std::vector<std::size_t> perm(n);
  for (;;) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    shuffle(std::span(perm), rng);
    bool fixed = false;
    for (std::size_t i = 0; i < n && !fixed; ++i) fixed = perm[i] == i;
    if (!fixed) return perm;
  }
}

MixedBatch mix_batch(const ModelParams& params, const TrainingBatch& batch, const LossWeights& weights,
                     const MixOptions& options, Rng& rng) {
  MixedBatch out;
  const std::size_t b = batch.size();
  if (b < 2) return out;
  out.partner = random_derangement(b, rng);
  const auto saliency = batch_saliency(params, batch, weights);
  out.samples.reserve(b);
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t j = out.partner[i];
    const Tensor& v1 = *batch.videos[i];
    const Tensor& v2 = *batch.videos[j];
    const std::size_t len = span_length(v1.rows(), v2.rows(), options.lambda0, options.rounding);
    const auto spans = select_spans(saliency[i], saliency[j], len, options.n_spans);
    MixedSample m = splice(v1, v2, spans);
    m.receiver_index = i;
    m.donor_index = j;
    out.samples.push_back(std::move(m));
  }
  return out;
}

}  // namespace ssvmr
