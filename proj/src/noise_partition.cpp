#include "ssvmr/noise_partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "ssvmr/error.hpp"

namespace ssvmr {

namespace {

double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

double log_sum_exp(double a, double b) {
  const double m = std::max(a, b);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double quantile(std::vector<double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

// Log joint densities log(pi_c N(x | mu_c, var_c)) for both components.
std::array<double, 2> log_joint(const Gmm1D& g, double x) {
  return {std::log(g.weights[0]) + log_normal_pdf(x, g.means[0], g.variances[0]),
          std::log(g.weights[1]) + log_normal_pdf(x, g.means[1], g.variances[1])};
}

}  // namespace

double gmm_log_likelihood(const Gmm1D& gmm, std::span<const double> losses) {
  double ll = 0.0;
  for (double x : losses) {
    const auto lj = log_joint(gmm, x);
    ll += log_sum_exp(lj[0], lj[1]);
  }
  return ll;
}

Gmm1D fit_gmm(std::span<const double> losses, const GmmOptions& options) {
  const std::size_t n = losses.size();
  if (n < 4) throw ContractError("fit_gmm needs at least 4 samples, got " + std::to_string(n));
  for (double x : losses) {
    if (!std::isfinite(x)) throw NumericError("fit_gmm: non-finite loss value");
  }
  const double mean = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double x : losses) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n);
  if (!(var > 0.0)) throw DegenerateDataError("fit_gmm: all losses are equal");
  const double floor = 1e-6 * var;

  std::vector<double> sorted(losses.begin(), losses.end());
  std::sort(sorted.begin(), sorted.end());
  Gmm1D g;
  g.means = {quantile(sorted, 0.05), quantile(sorted, 0.95)};
  if (g.means[0] == g.means[1]) g.means = {sorted.front(), sorted.back()};
  g.variances = {var, var};
  g.weights = {0.5, 0.5};

  std::vector<double> resp(n);  // responsibility of component 1
  double prev = -std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < options.max_iters; ++it) {
    // E-step
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto lj = log_joint(g, losses[i]);
      const double lse = log_sum_exp(lj[0], lj[1]);
      ll += lse;
      resp[i] = std::exp(lj[1] - lse);
    }
    g.log_likelihood.push_back(ll);
    g.iterations = it + 1;
    if (it > 0 && std::abs(ll - prev) < options.tol) break;
    prev = ll;

    // M-step
    std::array<double, 2> nk{0.0, 0.0};
    std::array<double, 2> sx{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      const double r1 = resp[i];
      const double r0 = 1.0 - r1;
      nk[0] += r0;
      nk[1] += r1;
      sx[0] += r0 * losses[i];
      sx[1] += r1 * losses[i];
    }
    for (std::size_t c = 0; c < 2; ++c) {
      // An emptied component keeps its previous parameters with a tiny weight.
      if (nk[c] <= std::numeric_limits<double>::min()) {
        g.weights[c] = std::numeric_limits<double>::min();
        continue;
      }
      g.means[c] = sx[c] / nk[c];
    }
    std::array<double, 2> sv{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      const double r1 = resp[i];
      sv[0] += (1.0 - r1) * (losses[i] - g.means[0]) * (losses[i] - g.means[0]);
      sv[1] += r1 * (losses[i] - g.means[1]) * (losses[i] - g.means[1]);
    }
    for (std::size_t c = 0; c < 2; ++c) {
      if (nk[c] <= std::numeric_limits<double>::min()) continue;
      g.variances[c] = std::max(sv[c] / nk[c], floor);
      g.weights[c] = nk[c] / static_cast<double>(n);
    }
    const double wsum = g.weights[0] + g.weights[1];
    g.weights[0] /= wsum;
    g.weights[1] /= wsum;
  }
  return g;
}

std::vector<double> noisy_posterior(const Gmm1D& gmm, std::span<const double> losses) {
  const std::size_t noisy = gmm.noisy_component();
  std::vector<double> w;
  w.reserve(losses.size());
  for (double x : losses) {
    const auto lj = log_joint(gmm, x);
    const double lse = log_sum_exp(lj[0], lj[1]);
    double p = std::exp(lj[noisy] - lse);
    if (!std::isfinite(p)) p = x > std::max(gmm.means[0], gmm.means[1]) ? 1.0 : 0.0;
    w.push_back(std::clamp(p, 0.0, 1.0));
  }
  return w;
}

NoisePartition partition(std::span<const double> w, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ContractError("partition threshold tau must lie in (0, 1)");
  NoisePartition out;
  out.w.assign(w.begin(), w.end());
  out.tau = tau;
  for (std::size_t i = 0; i < w.size(); ++i) {
    (w[i] > tau ? out.noisy : out.clean).push_back(i);
  }
  return out;
}

std::vector<double> sharpen(std::span<const double> p, double temperature) {
  if (!(temperature > 0.0)) throw ContractError("sharpen temperature must be > 0");
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ContractError("sharpen: probabilities must be finite and >= 0");
    if (v > 0.0) mx = std::max(mx, std::log(v));
  }
  if (mx == -std::numeric_limits<double>::infinity()) throw ContractError("sharpen: distribution is all zeros");
  // Log domain keeps p^(1/T) representable for small T.
  std::vector<double> q(p.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    q[i] = std::exp((std::log(p[i]) - mx) / temperature);
    z += q[i];
  }
  for (auto& v : q) v /= z;
  return q;
}

std::vector<SoftLabel> relabel(const ModelParams& params, const FeatureBank& videos,
                               std::span<const std::size_t> noisy_video_indices, const Tensor& candidate_embeddings,
                               const Tensor& candidate_features, double temperature) {
  std::vector<SoftLabel> out;
  if (noisy_video_indices.empty()) return out;
  if (candidate_embeddings.rows() == 0) throw ContractError("relabel: empty candidate music set");
  if (candidate_features.rows() != candidate_embeddings.rows()) {
    throw DimensionError("relabel: candidate features and embeddings disagree in count");
  }
  const Tensor video_embs = embed_video_bank(params, videos, noisy_video_indices);
  const Tensor probs = softmax_rows(matmul_nt(video_embs, candidate_embeddings));
  out.reserve(noisy_video_indices.size());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    SoftLabel label;
    label.q = sharpen(probs.row(r), temperature);
    const Tensor q_row = Tensor::row_vector(label.q);
    label.target = matmul(q_row, candidate_embeddings);
    label.intra_target = matmul(q_row, candidate_features);
    out.push_back(std::move(label));
  }
  return out;
}

double auroc(std::span<const double> scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw DimensionError("auroc: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney U with average ranks for ties.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (positive[order[k]]) {
        rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ContractError("auroc needs both positive and negative labels");
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

}  // namespace ssvmr
