#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "ssvmr/dataset.hpp"
#include "ssvmr/error.hpp"
#include "ssvmr/rng.hpp"

namespace ssvmr {

void SyntheticSpec::validate() const {
  if (n_pairs < 2) throw ContractError("synthetic n_pairs must be >= 2 so noisy swaps are possible");
  if (!(noise_rate >= 0.0 && noise_rate < 1.0)) throw ContractError("noise_rate must lie in [0, 1)");
  if (latent_dim < 2 || d_v < 2 || d_m < 2) throw ContractError("synthetic dimensions must be >= 2");
  if (d_v < latent_dim + distractor_dim) throw ContractError("d_v must be >= latent_dim + distractor_dim");
  if (d_m < latent_dim) throw ContractError("d_m must be >= latent_dim");
  if (min_frames < 1 || max_frames < min_frames) throw ContractError("invalid frames_per_video range");
  if (!(feature_noise_sigma >= 0.0)) throw ContractError("feature_noise_sigma must be >= 0");
  if (!(salient_fraction > 0.0 && salient_fraction <= 1.0)) throw ContractError("salient_fraction must lie in (0, 1]");
  if (!(cluster_spread >= 0.0 && cluster_spread <= 1.0)) throw ContractError("cluster_spread must lie in [0, 1]");
}

namespace {

// d x k matrix with orthonormal columns (modified Gram-Schmidt on Gaussian
// draws).
Tensor random_orthonormal(std::size_t d, std::size_t k, Rng& rng) {
  Tensor q(d, k);
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> col(d);
    double norm = 0.0;
    while (norm < 1e-8) {
      for (auto& v : col) v = standard_normal(rng);
      for (std::size_t p = 0; p < c; ++p) {
        double proj = 0.0;
        for (std::size_t r = 0; r < d; ++r) proj += col[r] * q(r, p);
        for (std::size_t r = 0; r < d; ++r) col[r] -= proj * q(r, p);
      }
      norm = std::sqrt(std::inner_product(col.begin(), col.end(), col.begin(), 0.0));
    }
    for (std::size_t r = 0; r < d; ++r) q(r, c) = col[r] / norm;
  }
  return q;
}

// out += scale * map * z, map is d x k
void accumulate_mapped(std::span<double> out, const Tensor& map, std::size_t col0, std::span<const double> z,
                       double scale) {
  for (std::size_t r = 0; r < out.size(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) s += map(r, col0 + c) * z[c];
    out[r] += scale * s;
  }
}

std::string make_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%05zu", prefix, i);
  return buf;
}

SyntheticSplit make_split(const SyntheticSpec& spec, std::size_t n, const Tensor& video_basis,
                          const Tensor& music_basis, const Tensor& centres, const char* vprefix, const char* mprefix,
                          Rng& rng) {
  const std::size_t k = spec.latent_dim;
  const double v_gain = std::sqrt(static_cast<double>(spec.d_v) / static_cast<double>(k));
  const double m_gain = std::sqrt(static_cast<double>(spec.d_m) / static_cast<double>(k));
  const double d_gain = spec.distractor_dim == 0
                            ? 0.0
                            : spec.distractor_scale *
                                  std::sqrt(static_cast<double>(spec.d_v) / static_cast<double>(spec.distractor_dim));

  SyntheticSplit split{FeatureBank(Modality::video, spec.d_v), FeatureBank(Modality::music, spec.d_m), {},
                       Tensor(n, k), {}};
  std::vector<double> u(spec.distractor_dim);
  for (std::size_t i = 0; i < n; ++i) {
    auto z = split.latents.row(i);
    for (auto& v : z) v = standard_normal(rng);
    if (spec.n_clusters > 0) {
      const std::size_t c = uniform_index(rng, spec.n_clusters);
      const double keep = std::sqrt(1.0 - spec.cluster_spread * spec.cluster_spread);
      for (std::size_t d = 0; d < k; ++d) z[d] = keep * centres(c, d) + spec.cluster_spread * z[d];
      split.clusters.push_back(c);
    }

    const std::size_t frames = spec.min_frames + uniform_index(rng, spec.max_frames - spec.min_frames + 1);
    const auto span_len = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(spec.salient_fraction * static_cast<double>(frames))));
    const std::size_t span_start = uniform_index(rng, frames - span_len + 1);
    Tensor vf(frames, spec.d_v);
    for (std::size_t f = 0; f < frames; ++f) {
      const bool salient = f >= span_start && f < span_start + span_len;
      const double a = salient ? 1.0 : spec.background_signal;
      auto row = vf.row(f);
      accumulate_mapped(row, video_basis, 0, z, a * v_gain);
      if (!salient && spec.distractor_dim > 0) {
        for (auto& v : u) v = standard_normal(rng);
        accumulate_mapped(row, video_basis, k, u, (1.0 - a) * d_gain);
      }
      for (auto& v : row) v += spec.feature_noise_sigma * standard_normal(rng);
    }
    split.videos.add({make_id(vprefix, i), std::move(vf)});

    Tensor mf(1, spec.d_m);
    accumulate_mapped(mf.row(0), music_basis, 0, z, m_gain);
    for (auto& v : mf.data()) v += spec.feature_noise_sigma * standard_normal(rng);
    split.music.add({make_id(mprefix, i), std::move(mf)});

    split.pairs.push_back(PairRecord{make_id(vprefix, i), make_id(mprefix, i), PairOrigin::synthetic, true});
  }
  return split;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng = make_rng(spec.seed, {0x5917});
  SyntheticData data;
  const Tensor video_basis = random_orthonormal(spec.d_v, spec.latent_dim + spec.distractor_dim, rng);
  const Tensor music_basis = random_orthonormal(spec.d_m, spec.latent_dim, rng);
  Tensor centres(spec.n_clusters, spec.latent_dim);
  for (double& v : centres.data()) v = standard_normal(rng);

  data.train = make_split(spec, spec.n_pairs, video_basis, music_basis, centres, "v", "m", rng);
  if (spec.n_test_pairs > 0) {
    data.test = make_split(spec, spec.n_test_pairs, video_basis, music_basis, centres, "tv", "tm", rng);
  }

  // Exactly floor(noise_rate * n) distinct pairs, chosen by partial
  // Fisher-Yates, get a uniformly random different music.
  const auto n = spec.n_pairs;
  const auto n_noisy = static_cast<std::size_t>(std::floor(spec.noise_rate * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < n_noisy; ++i) {
    const std::size_t j = i + uniform_index(rng, n - i);
    std::swap(order[i], order[j]);
    const std::size_t victim = order[i];
    std::size_t other = uniform_index(rng, n - 1);
    if (other >= victim) ++other;
    data.train.pairs[victim].music_id = data.train.music[other].id;
    data.train.pairs[victim].true_match = false;
  }

  data.video_map = Tensor(spec.d_v, spec.latent_dim);
  data.music_map = Tensor(spec.d_m, spec.latent_dim);
  for (std::size_t r = 0; r < spec.d_v; ++r) {
    for (std::size_t c = 0; c < spec.latent_dim; ++c) data.video_map(r, c) = video_basis(r, c);
  }
  for (std::size_t r = 0; r < spec.d_m; ++r) {
    for (std::size_t c = 0; c < spec.latent_dim; ++c) data.music_map(r, c) = music_basis(r, c);
  }
  return data;
}

}  // namespace ssvmr
