#include "ssvmr/pipeline.hpp"

#include <json.hpp>

#include "binary_io.hpp"
#include "ssvmr/error.hpp"

namespace ssvmr {

namespace {

std::vector<Tensor> copy_tensors(const ModelParams& params) {
  std::vector<Tensor> v;
  for (const auto* t : params.tensors()) v.push_back(*t);
  return v;
}

EpochRecord summarize(std::size_t epoch, const char* phase, const std::vector<StepLog>& logs) {
  EpochRecord r;
  r.epoch = epoch;
  r.phase = phase;
  r.steps = logs.size();
  for (const auto& s : logs) {
    r.l_t += s.l_t;
    r.l_r += s.l_r;
    r.l_m += s.l_m;
    r.total += s.total;
  }
  if (!logs.empty()) {
    const double n = static_cast<double>(logs.size());
    r.l_t /= n;
    r.l_r /= n;
    r.l_m /= n;
    r.total /= n;
  }
  return r;
}

PartitionDiagnostics diagnose(std::size_t epoch, const Gmm1D& gmm, const NoisePartition& part,
                              const TrainingSet& set) {
  PartitionDiagnostics d;
  d.epoch = epoch;
  d.gmm = gmm;
  d.n_clean = part.clean.size();
  d.n_noisy = part.noisy.size();
  std::vector<double> scores;
  std::vector<bool> is_noisy;
  std::size_t tp = 0;
  std::size_t flagged = 0;
  std::size_t actual = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& truth = set.pairs()[i].true_match;
    if (!truth) continue;
    const bool noisy = !*truth;
    const bool flag = part.w[i] > part.tau;
    scores.push_back(part.w[i]);
    is_noisy.push_back(noisy);
    actual += noisy ? 1 : 0;
    flagged += flag ? 1 : 0;
    tp += (noisy && flag) ? 1 : 0;
  }
  if (!scores.empty()) {
    if (flagged > 0) d.precision = static_cast<double>(tp) / static_cast<double>(flagged);
    if (actual > 0) d.recall = static_cast<double>(tp) / static_cast<double>(actual);
    if (actual > 0 && actual < scores.size()) d.auroc = ssvmr::auroc(scores, is_noisy);
  }
  return d;
}

}  // namespace

TrainResult train_pipeline(const TrainConfig& config, TrainingSet set, const EvalSplit* test,
                           const ProgressFn& progress) {
  config.validate();
  if (set.size() < 3) throw ContractError("training needs at least 3 pairs");
  TrainResult result;

  if (config.back_retrieval) {
    std::vector<PairRecord> originals;
    for (const auto& p : set.pairs()) {
      if (p.origin != PairOrigin::back_retrieved) originals.push_back(p);
    }
    const ModelParams reverse = train_reverse_model(set.videos(), set.music(), originals, config);
    auto aug = augment(reverse, set.music(), set.videos(), make_rng(config.seed, {kStreamAugment})(),
                       config.top_k_retrieved);
    set.append(aug.pairs);
    result.augmentation = std::move(aug.report);
  }

  const BackboneDims dims = config.dims(set.videos().dim(), set.music().dim());
  Rng init = make_rng(config.seed, {kStreamInit});
  result.params = init_params(dims, init);
  ModelParams& params = result.params;
  AdamState adam = make_adam_state(copy_tensors(params), AdamOptions{config.learning_rate});
  const StructureSampling scoring{config.structure_full_max, config.structure_pairs, nullptr};

  auto evaluate = [&](EpochRecord& r) {
    if (test == nullptr || config.eval_every == 0) return;
    if (r.epoch % config.eval_every != 0 && r.epoch != config.epochs) return;
    r.recall = recall_at_k(params, test->videos, test->music, test->pairs, config.eval_ks).recall_at;
  };
  auto emit = [&](EpochRecord r) {
    evaluate(r);
    if (progress) progress(r);
    result.epochs.push_back(std::move(r));
  };

  emit(EpochRecord{0, "init", 0, 0, 0, 0, 0, {}, {}, {}});

  const bool any_ssvmr = config.self_training || config.mixup || config.rdrop;
  Tensor candidates;
  std::vector<std::optional<SoftLabel>> soft(set.size());
  for (std::size_t e = 0; e < config.epochs; ++e) {
    EpochPlan plan;
    plan.weights = config.weights;
    plan.drop_rate = config.drop_rate();
    plan.batch_size = config.batch_size;
    plan.seed = config.seed;
    plan.epoch = e;
    plan.structure_full_max = config.structure_full_max;
    plan.structure_pairs = config.structure_pairs;

    const bool warm = e < config.warmup_epochs || !any_ssvmr;
    std::optional<std::size_t> n_clean;
    std::optional<std::size_t> n_noisy;
    if (!warm) {
      const std::size_t since = e - config.warmup_epochs;
      if ((config.self_training || config.rdrop) && (since % config.refresh_every == 0 || candidates.empty())) {
        candidates = embed_music_bank(params, set.music());
      }
      std::vector<bool> noisy_flag(set.size(), false);
      if (config.self_training) {
        const auto losses = per_sample_losses(params, set, config.weights, config.batch_size,
                                              make_rng(config.seed, {kStreamScoring, e})(), scoring);
        const Gmm1D gmm = fit_gmm(losses, GmmOptions{config.gmm_max_iters, config.gmm_tol});
        const NoisePartition part = partition(noisy_posterior(gmm, losses), config.tau);
        result.diagnostics.push_back(diagnose(e + 1, gmm, part, set));
        std::vector<std::size_t> video_rows;
        for (auto i : part.noisy) video_rows.push_back(set.video_row(i));
        auto labels = relabel(params, set.videos(), video_rows, candidates, set.music_features(),
                              config.temperature);
        std::fill(soft.begin(), soft.end(), std::nullopt);
        for (std::size_t k = 0; k < part.noisy.size(); ++k) {
          soft[part.noisy[k]] = std::move(labels[k]);
          noisy_flag[part.noisy[k]] = true;
        }
        plan.soft_labels = soft;
        n_clean = part.clean.size();
        n_noisy = part.noisy.size();
      }
      if (config.rdrop) {
        plan.rdrop = true;
        plan.candidates = &candidates;
        plan.rdrop_members = config.rdrop_scope == RDropScope::all ? std::vector<bool>(set.size(), true) : noisy_flag;
      }
      if (config.mixup) {
        plan.mix = true;
        plan.mix_options = MixOptions{config.lambda0, config.n_spans, config.span_rounding};
        plan.mix_convention = config.mix_weight_convention;
      }
    }

    auto logs = run_epoch(params, adam, set, plan);
    for (const auto& s : logs) {
      if ((!plan.rdrop && s.l_r != 0.0) || (!plan.mix && s.l_m != 0.0)) {
        throw ContractError("disabled loss term contributed a non-zero value");
      }
    }
    EpochRecord r = summarize(e + 1, warm ? "warmup" : "ssvmr", logs);
    r.n_clean = n_clean;
    r.n_noisy = n_noisy;
    result.steps.insert(result.steps.end(), logs.begin(), logs.end());
    emit(std::move(r));
  }
  return result;
}

TrainingSet load_training_set(const TrainConfig& config) {
  if (config.train_video.empty() || config.train_music.empty() || config.train_manifest.empty()) {
    throw ConfigError("config field 'train_video'/'train_music'/'train_manifest': training paths are required");
  }
  return TrainingSet(read_bank(config.train_video), read_bank(config.train_music), read_manifest(config.train_manifest));
}

std::optional<EvalSplit> load_eval_split(const TrainConfig& config) {
  if (config.test_video.empty() || config.test_music.empty() || config.test_manifest.empty()) return std::nullopt;
  EvalSplit split{read_bank(config.test_video), read_bank(config.test_music), read_manifest(config.test_manifest)};
  validate_pairs(split.pairs, split.videos, split.music);
  return split;
}

std::string epoch_to_json(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["phase"] = r.phase;
  j["steps"] = r.steps;
  j["l_t"] = r.l_t;
  j["l_r"] = r.l_r;
  j["l_m"] = r.l_m;
  j["total"] = r.total;
  if (r.n_clean) j["n_clean"] = *r.n_clean;
  if (r.n_noisy) j["n_noisy"] = *r.n_noisy;
  if (!r.recall.empty()) {
    nlohmann::ordered_json rec;
    for (const auto& [k, v] : r.recall) rec["R@" + std::to_string(k)] = v;
    j["recall"] = rec;
  }
  return j.dump();
}

std::string step_to_json(const StepLog& s) {
  nlohmann::ordered_json j;
  j["epoch"] = s.epoch + 1;
  j["step"] = s.step;
  j["l_t"] = s.l_t;
  j["l_r"] = s.l_r;
  j["l_m"] = s.l_m;
  j["total"] = s.total;
  j["mixed"] = s.mixed;
  return j.dump();
}

std::string diagnostics_to_json(const PartitionDiagnostics& d) {
  nlohmann::ordered_json j;
  j["epoch"] = d.epoch;
  j["gmm_means"] = {d.gmm.means[0], d.gmm.means[1]};
  j["gmm_variances"] = {d.gmm.variances[0], d.gmm.variances[1]};
  j["gmm_weights"] = {d.gmm.weights[0], d.gmm.weights[1]};
  j["gmm_iterations"] = d.gmm.iterations;
  j["n_clean"] = d.n_clean;
  j["n_noisy"] = d.n_noisy;
  if (d.precision) j["detection_precision"] = *d.precision;
  if (d.recall) j["detection_recall"] = *d.recall;
  if (d.auroc) j["detection_auroc"] = *d.auroc;
  return j.dump();
}

void write_run(const std::filesystem::path& dir, const TrainConfig& config, const TrainResult& result) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  detail::write_text(dir / "config.snapshot", format_config(config));
  write_checkpoint(result.params, dir / "checkpoint.ssvm");
  std::string metrics;
  for (const auto& e : result.epochs) metrics += epoch_to_json(e) + "\n";
  detail::write_text(dir / "metrics.jsonl", metrics);
  std::string steps;
  for (const auto& s : result.steps) steps += step_to_json(s) + "\n";
  detail::write_text(dir / "steps.jsonl", steps);
  std::string diag;
  for (const auto& d : result.diagnostics) diag += diagnostics_to_json(d) + "\n";
  detail::write_text(dir / "diagnostics.jsonl", diag);
  if (result.augmentation) detail::write_text(dir / "augmentation.jsonl", report_to_jsonl(*result.augmentation));
}

}  // namespace ssvmr
