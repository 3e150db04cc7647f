#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ssvmr/config.hpp"
#include "ssvmr/eval.hpp"
#include "ssvmr/pipeline.hpp"

namespace ssvmr {

struct AblationRow {
  std::string label;
  TrainConfig config;
};

struct AblationOutcome {
  std::string label;
  std::optional<EvalResult> result;
  std::string error;  // set when the run failed; the grid keeps going
};

// Component-removal rows: full, w/o BR, w/o BR + Mix, w/o BR + Mix + R-Drop,
// w/o BR + Mix + R-Drop + SL.
std::vector<AblationRow> component_grid(const TrainConfig& base);
// Full configuration with n_spans = 1..4.
std::vector<AblationRow> span_grid(const TrainConfig& base);

// Trains every row from the same seed and data and evaluates on the test
// split. parallel runs rows on separate threads; each run owns its RNG
// streams so results do not depend on scheduling.
std::vector<AblationOutcome> run_ablation(const std::vector<AblationRow>& rows, const TrainingSet& set,
                                          const EvalSplit& test, bool parallel = false);

std::string ablation_table(const std::string& title, const std::vector<AblationOutcome>& outcomes,
                           const std::vector<std::size_t>& ks);
std::string ablation_jsonl(const std::vector<AblationOutcome>& outcomes);

}  // namespace ssvmr
