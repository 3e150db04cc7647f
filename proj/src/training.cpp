#include "ssvmr/training.hpp"

#include <numeric>

#include "ssvmr/error.hpp"

namespace ssvmr {

TrainingSet::TrainingSet(FeatureBank videos, FeatureBank music, std::vector<PairRecord> pairs)
    : videos_(std::move(videos)), music_(std::move(music)) {
  if (videos_.modality() != Modality::video || music_.modality() != Modality::music) {
    throw ContractError("TrainingSet needs a video bank and a music bank");
  }
  for (const auto& item : videos_.items()) intra_video_.push_back(intra_features(item));
  std::vector<Tensor> rows;
  rows.reserve(music_.size());
  for (const auto& item : music_.items()) rows.push_back(item.frames);
  music_features_ = rows.empty() ? Tensor(0, music_.dim()) : concat_rows(rows);
  append(pairs);
}

void TrainingSet::append(std::span<const PairRecord> extra) {
  validate_pairs(extra, videos_, music_);
  for (const auto& p : extra) {
    video_row_.push_back(videos_.index_of(p.video_id));
    music_row_.push_back(music_.index_of(p.music_id));
    pairs_.push_back(p);
  }
}

TrainingBatch build_batch(const TrainingSet& set, std::span<const std::size_t> samples,
                          std::span<const std::optional<SoftLabel>> soft_labels, std::size_t d_e) {
  const std::size_t b = samples.size();
  const std::size_t d_v = set.videos_.dim();
  const std::size_t d_m = set.music_.dim();
  TrainingBatch batch;
  batch.sample_ids.assign(samples.begin(), samples.end());
  batch.music_features = Tensor(b, d_m);
  batch.soft_targets = Tensor(b, d_e);
  batch.is_soft.assign(b, false);
  batch.intra_video = Tensor(b, d_v);
  batch.intra_music = Tensor(b, d_m);
  for (std::size_t r = 0; r < b; ++r) {
    const std::size_t s = samples[r];
    if (s >= set.size()) throw ContractError("batch sample index out of range");
    const std::size_t vr = set.video_row_[s];
    const std::size_t mr = set.music_row_[s];
    batch.videos.push_back(&set.videos_[vr].frames);
    const auto iv = set.intra_video_[vr].row(0);
    std::copy(iv.begin(), iv.end(), batch.intra_video.row(r).begin());
    const auto mf = set.music_features_.row(mr);
    std::copy(mf.begin(), mf.end(), batch.music_features.row(r).begin());
    const SoftLabel* soft = (!soft_labels.empty() && soft_labels[s]) ? &*soft_labels[s] : nullptr;
    if (soft != nullptr) {
      if (soft->target.cols() != d_e || soft->intra_target.cols() != d_m) {
        throw DimensionError("soft label shape does not match batch");
      }
      batch.is_soft[r] = true;
      std::copy(soft->target.data().begin(), soft->target.data().end(), batch.soft_targets.row(r).begin());
      std::copy(soft->intra_target.data().begin(), soft->intra_target.data().end(), batch.intra_music.row(r).begin());
    } else {
      std::copy(mf.begin(), mf.end(), batch.intra_music.row(r).begin());
    }
  }
  return batch;
}

namespace {

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  Tensor out(rows.size(), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = x.row(rows[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace

StepLog train_step(ModelParams& params, AdamState& adam, const TrainingBatch& batch, const StepOptions& options,
                   Rng& dropout_rng, Rng& mix_rng) {
  const std::size_t b = batch.size();
  if (b < 3) throw ContractError("train_step needs a batch of at least 3");

  // Mixing uses saliency under the current (pre-update) parameters.
  MixedBatch mixed;
  std::vector<std::size_t> mix_rows;
  if (options.mix) {
    mixed = mix_batch(params, batch, options.weights, options.mix_options, mix_rng);
    for (std::size_t r = 0; r < mixed.samples.size(); ++r) {
      const double lambda = mixed.samples[r].lambda;
      if (lambda > 0.0 && lambda < 1.0) mix_rows.push_back(r);
    }
    if (mix_rows.size() < 3) mix_rows.clear();
  }

  Tape tape;
  const BoundParams p = bind(tape, params, true);
  Rng* drop = options.drop_rate > 0.0 ? &dropout_rng : nullptr;
  const Var video = embed_video_batch(p, batch.videos, options.drop_rate, drop, false).embedding;
  const Var music = batch_music_embeddings(p, batch, options.drop_rate, drop);
  const auto lt = triplet_loss(video, music, batch.intra_video, batch.intra_music, options.weights, options.structure);

  StepLog log;
  log.l_t = lt.total.value().item();
  Var total = lt.total;

  if (options.rdrop && !options.rdrop_rows.empty()) {
    if (options.candidates == nullptr) throw ContractError("R-Drop needs candidate embeddings");
    std::vector<const Tensor*> again;
    for (auto r : options.rdrop_rows) again.push_back(batch.videos[r]);
    const Var pass1 = select_rows(video, options.rdrop_rows);
    const Var pass2 = embed_video_batch(p, again, options.drop_rate, drop, false).embedding;
    const Var bank_t = tape.constant(transpose(*options.candidates));
    const Var lr = rdrop_loss(matmul(pass1, bank_t), matmul(pass2, bank_t));
    log.l_r = lr.value().item();
    total = add(total, lr);
  }

  if (!mix_rows.empty()) {
    std::vector<const Tensor*> frames;
    std::vector<Tensor> intra_rows;
    std::vector<std::size_t> partner_rows;
    std::vector<double> lambdas;
    for (auto r : mix_rows) {
      frames.push_back(&mixed.samples[r].frames);
      intra_rows.push_back(intra_features(mixed.samples[r].frames));
      partner_rows.push_back(mixed.partner[r]);
      lambdas.push_back(mixed.samples[r].lambda);
    }
    const Var mixed_video = embed_video_batch(p, frames, options.drop_rate, drop, false).embedding;
    MixLossInputs in{mixed_video,
                     select_rows(music, mix_rows),
                     select_rows(music, partner_rows),
                     concat_rows(intra_rows),
                     gather_rows(batch.intra_music, mix_rows),
                     gather_rows(batch.intra_music, partner_rows),
                     lambdas};
    const Var lm = mix_loss(in, options.weights, options.mix_convention, options.structure);
    log.l_m = lm.value().item();
    log.mixed = mix_rows.size();
    total = add(total, lm);
  }

  log.total = total.value().item();
  tape.backward(total);
  const auto grads = p.grads();
  auto ts = params.tensors();
  std::vector<Tensor> values;
  values.reserve(ts.size());
  for (auto* t : ts) values.push_back(std::move(*t));
  adam_step(adam, values, grads, ModelParams::names());
  for (std::size_t i = 0; i < ts.size(); ++i) *ts[i] = std::move(values[i]);
  return log;
}

std::vector<double> per_sample_losses(const ModelParams& params, const TrainingSet& set, const LossWeights& weights,
                                      std::size_t batch_size, std::uint64_t seed,
                                      const StructureSampling& structure) {
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, {kStreamScoring});
  shuffle(std::span(order), rng);
  std::vector<double> losses(set.size(), 0.0);
  for (const auto& chunk : covering_batches(set.size(), batch_size)) {
    std::vector<std::size_t> samples;
    samples.reserve(chunk.size());
    for (auto c : chunk) samples.push_back(order[c]);
    const TrainingBatch batch = build_batch(set, samples, {}, params.dims.d_e);
    Tape tape;
    const BoundParams p = bind(tape, params, false);
    const Var video = embed_video_batch(p, batch.videos, 0.0, nullptr, false).embedding;
    const Var music = batch_music_embeddings(p, batch, 0.0, nullptr);
    StructureSampling s = structure;
    Rng srng = make_rng(seed, {kStreamScoring, samples.front()});
    if (s.rng == nullptr) s.rng = &srng;
    const auto lt = triplet_loss(video, music, batch.intra_video, batch.intra_music, weights, s);
    const Tensor& rows = lt.per_sample.value();
    for (std::size_t r = 0; r < samples.size(); ++r) losses[samples[r]] = rows[r];
  }
  return losses;
}

std::vector<StepLog> run_epoch(ModelParams& params, AdamState& adam, const TrainingSet& set, const EpochPlan& plan) {
  if (plan.rdrop && plan.rdrop_members.size() != set.size()) {
    throw ContractError("run_epoch: one R-Drop flag per sample required");
  }
  std::vector<StepLog> logs;
  const auto batches = make_batches(set.size(), plan.batch_size, make_rng(plan.seed, {kStreamBatches, plan.epoch})());
  for (std::size_t s = 0; s < batches.size(); ++s) {
    const TrainingBatch batch = build_batch(set, batches[s], plan.soft_labels, params.dims.d_e);
    Rng dropout_rng = make_rng(plan.seed, {kStreamDropout, plan.epoch, s});
    Rng mix_rng = make_rng(plan.seed, {kStreamMix, plan.epoch, s});
    Rng structure_rng = make_rng(plan.seed, {kStreamStructure, plan.epoch, s});
    StepOptions opts;
    opts.weights = plan.weights;
    opts.drop_rate = plan.drop_rate;
    opts.structure = {plan.structure_full_max, plan.structure_pairs, &structure_rng};
    if (plan.rdrop) {
      opts.rdrop = true;
      opts.candidates = plan.candidates;
      for (std::size_t r = 0; r < batch.size(); ++r) {
        if (plan.rdrop_members[batch.sample_ids[r]]) opts.rdrop_rows.push_back(r);
      }
    }
    opts.mix = plan.mix;
    opts.mix_options = plan.mix_options;
    opts.mix_convention = plan.mix_convention;
    StepLog log = train_step(params, adam, batch, opts, dropout_rng, mix_rng);
    log.epoch = plan.epoch;
    log.step = s;
    logs.push_back(log);
  }
  return logs;
}

std::vector<StepLog> supervised_epoch(ModelParams& params, AdamState& adam, const TrainingSet& set,
                                      const LossWeights& weights, double drop_rate, std::size_t batch_size,
                                      std::uint64_t seed, std::size_t epoch, std::size_t structure_full_max,
                                      std::size_t structure_pairs) {
  EpochPlan plan;
  plan.weights = weights;
  plan.drop_rate = drop_rate;
  plan.batch_size = batch_size;
  plan.seed = seed;
  plan.epoch = epoch;
  plan.structure_full_max = structure_full_max;
  plan.structure_pairs = structure_pairs;
  return run_epoch(params, adam, set, plan);
}

}  // namespace ssvmr
