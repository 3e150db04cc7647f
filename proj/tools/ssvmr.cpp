#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ssvmr/ablation.hpp"
#include "ssvmr/back_retrieval.hpp"
#include "ssvmr/config.hpp"
#include "ssvmr/dataset.hpp"
#include "ssvmr/error.hpp"
#include "ssvmr/eval.hpp"
#include "ssvmr/pipeline.hpp"

namespace fs = std::filesystem;
using namespace ssvmr;

namespace {

enum ExitCode : int { kOk = 0, kOther = 1, kConfig = 2, kFormat = 3, kNumeric = 4 };

TrainConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  TrainConfig cfg = path.empty() ? TrainConfig{} : load_config(path);
  for (const auto& kv : overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

int cmd_gen(const SyntheticSpec& spec, const fs::path& out) {
  spec.validate();
  ensure_dir(out);
  const SyntheticData data = generate_synthetic(spec);
  write_bank(data.train.videos, out / "train_video.ssvb");
  write_bank(data.train.music, out / "train_music.ssvb");
  write_manifest(data.train.pairs, out / "train_manifest.jsonl");
  write_bank(data.test.videos, out / "test_video.ssvb");
  write_bank(data.test.music, out / "test_music.ssvb");
  write_manifest(data.test.pairs, out / "test_manifest.jsonl");

  TrainConfig cfg;
  cfg.train_video = (out / "train_video.ssvb").string();
  cfg.train_music = (out / "train_music.ssvb").string();
  cfg.train_manifest = (out / "train_manifest.jsonl").string();
  cfg.test_video = (out / "test_video.ssvb").string();
  cfg.test_music = (out / "test_music.ssvb").string();
  cfg.test_manifest = (out / "test_manifest.jsonl").string();
  cfg.out_dir = (out / "run").string();
  std::FILE* f = std::fopen((out / "train.cfg").c_str(), "wb");
  if (!f) throw IoError("cannot write " + (out / "train.cfg").string());
  const std::string text = format_config(cfg);
  std::fwrite(text.data(), 1, text.size(), f);
  std::fclose(f);

  std::size_t corrupted = 0;
  for (const auto& p : data.train.pairs) corrupted += p.true_match == false;
  std::printf("train: %zu pairs (%zu corrupted, %.3f), test: %zu pairs\n", data.train.pairs.size(), corrupted,
              static_cast<double>(corrupted) / static_cast<double>(data.train.pairs.size()),
              data.test.pairs.size());
  std::printf("d_v=%zu d_m=%zu latent=%zu frames=[%zu,%zu]\n", spec.d_v, spec.d_m, spec.latent_dim, spec.min_frames,
              spec.max_frames);
  std::printf("wrote %s\n", out.c_str());
  return kOk;
}

int cmd_augment(const TrainConfig& cfg, const fs::path& out_manifest, const fs::path& out_report) {
  const TrainingSet set = load_training_set(cfg);
  const ModelParams reverse = train_reverse_model(set.videos(), set.music(), set.pairs(), cfg);
  const AugmentResult res = augment(reverse, set.music(), set.videos(), cfg.seed, cfg.top_k_retrieved);
  std::vector<PairRecord> all = set.pairs();
  all.insert(all.end(), res.pairs.begin(), res.pairs.end());
  write_manifest(all, out_manifest);
  if (!out_report.empty()) {
    std::FILE* f = std::fopen(out_report.c_str(), "wb");
    if (!f) throw IoError("cannot write " + out_report.string());
    const std::string text = report_to_jsonl(res.report);
    std::fwrite(text.data(), 1, text.size(), f);
    std::fclose(f);
  }
  std::printf("added %zu back-retrieved pairs (%zu total)\n", res.report.added, all.size());
  return kOk;
}

int cmd_train(const TrainConfig& cfg, bool quiet) {
  const TrainingSet set = load_training_set(cfg);
  const auto test = load_eval_split(cfg);
  ProgressFn progress;
  if (!quiet) {
    progress = [](const EpochRecord& r) {
      std::printf("epoch %3zu %-6s L_T=%.4f L_R=%.4f L_M=%.4f", r.epoch, r.phase.c_str(), r.l_t, r.l_r, r.l_m);
      for (const auto& [k, v] : r.recall) std::printf(" R@%zu=%.4f", k, v);
      if (r.n_noisy) std::printf(" noisy=%zu", *r.n_noisy);
      std::printf("\n");
      std::fflush(stdout);
    };
  }
  const TrainResult result = train_pipeline(cfg, set, test ? &*test : nullptr, progress);
  write_run(cfg.out_dir, cfg, result);
  std::printf("wrote %s\n", cfg.out_dir.c_str());
  return kOk;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& videos_path, const fs::path& music_path,
             const fs::path& manifest_path, const std::vector<std::size_t>& ks, const fs::path& out_json) {
  const ModelParams params = read_checkpoint(checkpoint);
  const FeatureBank videos = read_bank(videos_path);
  const FeatureBank music = read_bank(music_path);
  std::vector<PairRecord> pairs;
  if (!manifest_path.empty()) {
    pairs = read_manifest(manifest_path);
  } else {
    if (videos.size() != music.size()) {
      throw ContractError("without a manifest the query and gallery banks must have equal sizes");
    }
    for (std::size_t i = 0; i < videos.size(); ++i) {
      pairs.push_back({videos.items()[i].id, music.items()[i].id, PairOrigin::original, std::nullopt});
    }
  }
  const EvalResult r = recall_at_k(params, videos, music, pairs, ks);
  std::cout << eval_to_table(r);
  if (!out_json.empty()) {
    std::FILE* f = std::fopen(out_json.c_str(), "wb");
    if (!f) throw IoError("cannot write " + out_json.string());
    const std::string text = eval_to_json(r) + "\n";
    std::fwrite(text.data(), 1, text.size(), f);
    std::fclose(f);
  }
  return kOk;
}

int cmd_ablate(const TrainConfig& cfg, const std::string& grid, bool parallel, const fs::path& out) {
  const TrainingSet set = load_training_set(cfg);
  const auto test = load_eval_split(cfg);
  if (!test) throw ConfigError("test_video/test_music/test_manifest: ablation needs a test split");
  std::string jsonl;
  auto run = [&](const std::string& title, const std::vector<AblationRow>& rows) {
    const auto outcomes = run_ablation(rows, set, *test, parallel);
    std::cout << ablation_table(title, outcomes, cfg.eval_ks) << "\n";
    jsonl += ablation_jsonl(outcomes);
  };
  if (grid == "components" || grid == "all") run("Component ablation", component_grid(cfg));
  if (grid == "spans" || grid == "all") run("Span count", span_grid(cfg));
  if (!out.empty()) {
    std::FILE* f = std::fopen(out.c_str(), "wb");
    if (!f) throw IoError("cannot write " + out.string());
    std::fwrite(jsonl.data(), 1, jsonl.size(), f);
    std::fclose(f);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Saliency-based self-training for video-music retrieval"};
  app.require_subcommand(1);

  SyntheticSpec spec;
  std::string gen_out = "data";
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  gen->add_option("--pairs", spec.n_pairs, "Training pairs");
  gen->add_option("--test-pairs", spec.n_test_pairs, "Test pairs");
  gen->add_option("--noise", spec.noise_rate, "Fraction of corrupted training pairs");
  gen->add_option("--latent-dim", spec.latent_dim);
  gen->add_option("--dv", spec.d_v, "Video feature dimension");
  gen->add_option("--dm", spec.d_m, "Music feature dimension");
  gen->add_option("--min-frames", spec.min_frames);
  gen->add_option("--max-frames", spec.max_frames);
  gen->add_option("--sigma", spec.feature_noise_sigma, "Feature noise standard deviation");
  gen->add_option("--clusters", spec.n_clusters, "Latent clusters (0 = isotropic)");
  gen->add_option("--cluster-spread", spec.cluster_spread, "Within-cluster latent spread in [0, 1]");
  gen->add_option("--salient-fraction", spec.salient_fraction);
  gen->add_option("--distractor-dim", spec.distractor_dim);
  gen->add_option("--seed", spec.seed);
  gen->add_option("--out", gen_out, "Output directory");

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_config = [&](CLI::App* sub, bool required) {
    auto* opt = sub->add_option("--config", config_path, "Config file");
    if (required) opt->required();
    sub->add_option("--set", overrides, "Override a config key (key=value)");
  };

  std::string aug_out = "augmented_manifest.jsonl";
  std::string aug_report;
  auto* aug = app.add_subcommand("augment", "Back-retrieval augmentation of a training manifest");
  add_config(aug, true);
  aug->add_option("--out", aug_out, "Augmented manifest path");
  aug->add_option("--report", aug_report, "Per-music retrieval report (JSONL)");

  bool quiet = false;
  auto* train = app.add_subcommand("train", "Train a model");
  add_config(train, true);
  train->add_flag("--quiet", quiet);

  std::string ckpt, ev_videos, ev_music, ev_manifest, ev_json;
  std::vector<std::size_t> ks{1, 10, 25};
  auto* eval = app.add_subcommand("eval", "Recall@K of a checkpoint");
  eval->add_option("--checkpoint", ckpt)->required();
  eval->add_option("--videos", ev_videos, "Query bank")->required();
  eval->add_option("--music", ev_music, "Gallery bank")->required();
  eval->add_option("--manifest", ev_manifest, "Ground-truth pairs; default pairs item i with item i");
  eval->add_option("--k", ks)->delimiter(',');
  eval->add_option("--json", ev_json, "Write the report as JSON");

  std::string grid = "all";
  bool parallel = false;
  std::string ablate_out;
  auto* ablate = app.add_subcommand("ablate", "Run ablation grids");
  add_config(ablate, true);
  ablate->add_option("--grid", grid)->check(CLI::IsMember({"components", "spans", "all"}));
  ablate->add_flag("--parallel", parallel, "Run grid rows concurrently");
  ablate->add_option("--out", ablate_out, "Write results as JSONL");

  auto* print = app.add_subcommand("print-config", "Print the effective configuration");
  add_config(print, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kOther;
  }

  try {
    if (*gen) return cmd_gen(spec, gen_out);
    if (*aug) return cmd_augment(resolve_config(config_path, overrides), aug_out, aug_report);
    if (*train) return cmd_train(resolve_config(config_path, overrides), quiet);
    if (*eval) return cmd_eval(ckpt, ev_videos, ev_music, ev_manifest, ks, ev_json);
    if (*ablate) return cmd_ablate(resolve_config(config_path, overrides), grid, parallel, ablate_out);
    if (*print) {
      std::cout << format_config(resolve_config(config_path, overrides));
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kFormat;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
  return kOther;
}
