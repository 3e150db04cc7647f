#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ssvmr/tensor.hpp"

namespace ssvmr {

struct AdamOptions {
  double learning_rate = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
};

AdamState make_adam_state(std::span<const Tensor> params, AdamOptions options = {});

// One bias-corrected Adam update, in place. names label parameters in error
// messages (a non-finite gradient names its parameter).
void adam_step(AdamState& state, std::span<Tensor> params, std::span<const Tensor> grads,
               std::span<const std::string> names = {});

}  // namespace ssvmr
