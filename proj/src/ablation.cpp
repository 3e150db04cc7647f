#include "ssvmr/ablation.hpp"

#include <cstdio>
#include <future>

#include <json.hpp>

#include "ssvmr/error.hpp"

namespace ssvmr {

std::vector<AblationRow> component_grid(const TrainConfig& base) {
  std::vector<AblationRow> rows;
  TrainConfig c = base;
  c.back_retrieval = c.mixup = c.rdrop = c.self_training = true;
  rows.push_back({"SSVMR", c});
  c.back_retrieval = false;
  rows.push_back({"w/o BR", c});
  c.mixup = false;
  rows.push_back({"w/o BR + Mix", c});
  c.rdrop = false;
  rows.push_back({"w/o BR + Mix + R-Drop", c});
  c.self_training = false;
  rows.push_back({"w/o BR + Mix + R-Drop + SL", c});
  return rows;
}

std::vector<AblationRow> span_grid(const TrainConfig& base) {
  std::vector<AblationRow> rows;
  for (std::size_t n = 1; n <= 4; ++n) {
    TrainConfig c = base;
    c.back_retrieval = c.mixup = c.rdrop = c.self_training = true;
    c.n_spans = n;
    rows.push_back({"N=" + std::to_string(n), c});
  }
  return rows;
}

namespace {

AblationOutcome run_row(const AblationRow& row, const TrainingSet& set, const EvalSplit& test) {
  AblationOutcome out;
  out.label = row.label;
  try {
    TrainConfig cfg = row.config;
    cfg.eval_every = 0;
    const TrainResult r = train_pipeline(cfg, set, nullptr);
    out.result = recall_at_k(r.params, test.videos, test.music, test.pairs, cfg.eval_ks);
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace

std::vector<AblationOutcome> run_ablation(const std::vector<AblationRow>& rows, const TrainingSet& set,
                                          const EvalSplit& test, bool parallel) {
  std::vector<AblationOutcome> out;
  if (!parallel) {
    for (const auto& row : rows) out.push_back(run_row(row, set, test));
    return out;
  }
  std::vector<std::future<AblationOutcome>> futures;
  for (const auto& row : rows) {
    futures.push_back(std::async(std::launch::async, [&set, &test, row] { return run_row(row, set, test); }));
  }
  for (auto& f : futures) out.push_back(f.get());
  return out;
}

std::string ablation_table(const std::string& title, const std::vector<AblationOutcome>& outcomes,
                           const std::vector<std::size_t>& ks) {
  std::string out = title + "\n";
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%-30s", "Model");
  out += buf;
  for (auto k : ks) {
    std::snprintf(buf, sizeof(buf), " %8s", ("R@" + std::to_string(k)).c_str());
    out += buf;
  }
  out += "\n";
  for (const auto& o : outcomes) {
    std::snprintf(buf, sizeof(buf), "%-30s", o.label.c_str());
    out += buf;
    if (!o.result) {
      out += " error: " + o.error + "\n";
      continue;
    }
    for (auto k : ks) {
      auto it = o.result->recall_at.find(k);
      if (it == o.result->recall_at.end()) {
        std::snprintf(buf, sizeof(buf), " %8s", "-");
      } else {
        std::snprintf(buf, sizeof(buf), " %8.2f", 100.0 * it->second);
      }
      out += buf;
    }
    out += "\n";
  }
  return out;
}

std::string ablation_jsonl(const std::vector<AblationOutcome>& outcomes) {
  std::string out;
  for (const auto& o : outcomes) {
    nlohmann::ordered_json j;
    j["label"] = o.label;
    if (o.result) {
      nlohmann::ordered_json rec;
      for (const auto& [k, v] : o.result->recall_at) rec["R@" + std::to_string(k)] = v;
      j["recall"] = rec;
      j["checkpoint_id"] = o.result->checkpoint_id;
    } else {
      j["error"] = o.error;
    }
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace ssvmr
