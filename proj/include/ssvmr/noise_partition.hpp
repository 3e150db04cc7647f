#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "ssvmr/backbone.hpp"
#include "ssvmr/tensor.hpp"

namespace ssvmr {

// Two-component 1-D Gaussian mixture.
struct Gmm1D {
  std::array<double, 2> means{};
  std::array<double, 2> variances{};
  std::array<double, 2> weights{};
  std::vector<double> log_likelihood;  // one entry per EM iteration (after the E-step)
  std::size_t iterations = 0;

  // Index of the component with the larger mean; ties go to component 1.
  std::size_t noisy_component() const { return means[0] > means[1] ? 0 : 1; }
};

struct GmmOptions {
  std::size_t max_iters = 100;
  double tol = 1e-8;
};

// EM on per-sample losses. Initial means sit at the 5% and 95% quantiles,
// variances start at the pooled variance and are floored at 1e-6 of it.
Gmm1D fit_gmm(std::span<const double> losses, const GmmOptions& options = {});

double gmm_log_likelihood(const Gmm1D& gmm, std::span<const double> losses);

// Posterior responsibility of the larger-mean component for each loss.
std::vector<double> noisy_posterior(const Gmm1D& gmm, std::span<const double> losses);

struct NoisePartition {
  std::vector<double> w;
  std::vector<std::size_t> clean;  // w_i <= tau
  std::vector<std::size_t> noisy;  // w_i > tau
  double tau = 0.3;
};

NoisePartition partition(std::span<const double> w, double tau);

// p_i^(1/T) / sum_j p_j^(1/T)
std::vector<double> sharpen(std::span<const double> p, double temperature);

struct SoftLabel {
  std::vector<double> q;  // over the candidate music set
  Tensor target;          // 1 x d_e, sum_j q_j * candidate_j
  Tensor intra_target;    // 1 x d_m, sum_j q_j * raw music feature_j
};

// For each video in the noisy set: softmax over inner products with every
// candidate embedding (dropout off), sharpened with temperature T. Targets
// are constants for the loss.
std::vector<SoftLabel> relabel(const ModelParams& params, const FeatureBank& videos,
                               std::span<const std::size_t> noisy_video_indices, const Tensor& candidate_embeddings,
                               const Tensor& candidate_features, double temperature);

// Area under the ROC curve of scores against binary labels (positive =
// true), ties counted half.
double auroc(std::span<const double> scores, const std::vector<bool>& positive);

}  // namespace ssvmr
