#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ssvmr/error.hpp"
#include "ssvmr/noise_partition.hpp"
#include "support.hpp"

using namespace ssvmr;

namespace {

std::vector<double> two_clusters(std::uint64_t seed, std::size_t n) {
  Rng rng = make_rng(seed, {});
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = (i % 2 == 0 ? 1.0 : 5.0) + 0.1 * standard_normal(rng);
  return x;
}

}  // namespace

TEST_CASE("EM recovers two well separated clusters") {
  const auto x = two_clusters(51, 1000);
  const Gmm1D g = fit_gmm(x);
  const std::size_t hi = g.noisy_component();
  const std::size_t lo = 1 - hi;
  CHECK(g.means[lo] == doctest::Approx(1.0).epsilon(0.1));
  CHECK(g.means[hi] == doctest::Approx(5.0).epsilon(0.04));
  CHECK(std::abs(g.weights[lo] - 0.5) < 0.05);
  CHECK(g.weights[0] + g.weights[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.variances[0] > 0.0);
  CHECK(g.variances[1] > 0.0);
}

TEST_CASE("EM log-likelihood never decreases") {
  Rng rng = make_rng(52, {});
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> x(300);
    for (auto& v : x) v = uniform01(rng) < 0.3 ? 3.0 + standard_normal(rng) : std::abs(standard_normal(rng));
    const Gmm1D g = fit_gmm(x, {.max_iters = 200, .tol = 0.0});
    for (std::size_t i = 1; i < g.log_likelihood.size(); ++i) {
      CHECK(g.log_likelihood[i] >= g.log_likelihood[i - 1] - 1e-9);
    }
  }
}

TEST_CASE("single cluster collapses without error") {
  Rng rng = make_rng(53, {});
  std::vector<double> x(500);
  for (auto& v : x) v = 3.0 + 0.1 * standard_normal(rng);
  const Gmm1D g = fit_gmm(x);
  CHECK(g.means[0] == doctest::Approx(3.0).epsilon(0.07));
  CHECK(g.means[1] == doctest::Approx(3.0).epsilon(0.07));
}

TEST_CASE("degenerate inputs") {
  const std::vector<double> same(10, 2.0);
  CHECK_THROWS_AS(fit_gmm(same), DegenerateDataError);
  const std::vector<double> tiny{1.0, 2.0, 3.0};
  CHECK_THROWS_AS(fit_gmm(tiny), ContractError);
}

TEST_CASE("EM is deterministic") {
  const auto x = two_clusters(54, 200);
  const Gmm1D a = fit_gmm(x);
  const Gmm1D b = fit_gmm(x);
  CHECK(a.means == b.means);
  CHECK(noisy_posterior(a, x) == noisy_posterior(b, x));
}

TEST_CASE("posterior at the midpoint of a symmetric mixture is one half") {
  Gmm1D g;
  g.means = {1.0, 5.0};
  g.variances = {0.5, 0.5};
  g.weights = {0.5, 0.5};
  const std::vector<double> x{3.0, 1e6, -1e6};
  const auto w = noisy_posterior(g, x);
  CHECK(w[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(1.0));
  CHECK(w[2] == doctest::Approx(0.0));
  g.means = {5.0, 1.0};  // the larger mean is component 0 now
  CHECK(noisy_posterior(g, std::vector<double>{1e6})[0] == doctest::Approx(1.0));
}

TEST_CASE("posterior lies in [0, 1]") {
  const auto x = two_clusters(55, 400);
  for (double w : noisy_posterior(fit_gmm(x), x)) {
    CHECK(w >= 0.0);
    CHECK(w <= 1.0);
  }
}

TEST_CASE("partition uses a strict threshold") {
  const std::vector<double> w{0.1, 0.3, 0.5};
  const auto p = partition(w, 0.3);
  CHECK(p.clean == std::vector<std::size_t>{0, 1});
  CHECK(p.noisy == std::vector<std::size_t>{2});
  const std::vector<double> low{0.2, 0.5, 0.998};
  CHECK(partition(low, 0.999).noisy.empty());
  CHECK_THROWS_AS(partition(w, 0.0), ContractError);
  CHECK_THROWS_AS(partition(w, 1.0), ContractError);
}

TEST_CASE("partition is total and disjoint") {
  Rng rng = make_rng(56, {});
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> w(50);
    for (auto& v : w) v = uniform01(rng);
    const double tau = 0.01 + 0.98 * uniform01(rng);
    const auto p = partition(w, tau);
    CHECK(p.clean.size() + p.noisy.size() == w.size());
    std::vector<int> seen(w.size(), 0);
    for (auto i : p.clean) {
      ++seen[i];
      CHECK(w[i] <= tau);
    }
    for (auto i : p.noisy) {
      ++seen[i];
      CHECK(w[i] > tau);
    }
    for (int s : seen) CHECK(s == 1);
  }
}

TEST_CASE("sharpen examples") {
  const std::vector<double> p{0.8, 0.2};
  const auto q = sharpen(p, 0.5);
  CHECK(q[0] == doctest::Approx(0.64 / 0.68).epsilon(1e-14));
  CHECK(q[1] == doctest::Approx(0.04 / 0.68).epsilon(1e-14));
  CHECK(q[0] == doctest::Approx(0.9412).epsilon(1e-4));
  const std::vector<double> even{0.5, 0.5};
  CHECK(sharpen(even, 0.3) == even);
  const std::vector<double> r{0.1, 0.6, 0.3};
  const auto same = sharpen(r, 1.0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(same[i] == doctest::Approx(r[i]).epsilon(1e-14));
  const std::vector<double> zeros{0.0, 0.0};
  CHECK_THROWS_AS(sharpen(zeros, 0.8), ContractError);
  const std::vector<double> with_zero{0.0, 1.0};
  CHECK(sharpen(with_zero, 0.8) == with_zero);
}

namespace {

ModelParams identity_params(std::size_t d) {
  ModelParams p;
  p.dims = {d, d, d, d};
  p.video_w1 = p.video_w2 = p.music_w1 = p.music_w2 = Tensor::identity(d);
  p.video_b1 = p.video_b2 = p.music_b1 = p.music_b2 = Tensor(1, d);
  return p;
}

}  // namespace

TEST_CASE("relabel with a confident model targets the favoured music") {
  const ModelParams p = identity_params(2);
  FeatureBank videos(Modality::video, 2);
  videos.add({"v", Tensor::row_vector({1.0, 0.0})});  // embeds to (tanh 1, 0)
  const Tensor candidates = Tensor::from_rows({{40, 0}, {0, 1}, {-40, 2}});
  const Tensor features = Tensor::from_rows({{1, 1}, {2, 2}, {3, 3}});
  const std::vector<std::size_t> noisy{0};
  const auto labels = relabel(p, videos, noisy, candidates, features, 0.8);
  REQUIRE(labels.size() == 1);
  const auto& l = labels[0];
  CHECK(std::accumulate(l.q.begin(), l.q.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(l.q[0] > 0.999);
  CHECK(l.target[0] == doctest::Approx(40.0).epsilon(1e-3));
  CHECK(l.intra_target[0] == doctest::Approx(1.0).epsilon(1e-3));
  // q-weighted convex combination.
  for (std::size_t c = 0; c < 2; ++c) {
    double want = 0.0;
    for (std::size_t j = 0; j < 3; ++j) want += l.q[j] * candidates(j, c);
    CHECK(l.target[c] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("relabel approaches the argmax as the temperature vanishes") {
  const ModelParams p = identity_params(2);
  FeatureBank videos(Modality::video, 2);
  videos.add({"v", Tensor::row_vector({0.5, 0.5})});
  const Tensor candidates = Tensor::from_rows({{1, 0}, {0.9, 0.6}, {0, 1}});
  const Tensor features = Tensor::from_rows({{1, 0}, {0, 1}, {1, 1}});
  const std::vector<std::size_t> noisy{0};
  const auto l = relabel(p, videos, noisy, candidates, features, 1e-3)[0];
  CHECK(l.target[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(l.target[1] == doctest::Approx(0.6).epsilon(1e-6));
  CHECK(relabel(p, videos, {}, candidates, features, 0.8).empty());
}

TEST_CASE("auroc against hand rankings") {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<bool> pos{false, false, true, true};
  CHECK(auroc(s, pos) == doctest::Approx(0.75));
  const std::vector<double> tied{0.5, 0.5};
  CHECK(auroc(tied, std::vector<bool>{true, false}) == doctest::Approx(0.5));
  const std::vector<double> perfect{0.9, 0.1, 0.8};
  CHECK(auroc(perfect, std::vector<bool>{true, false, true}) == 1.0);
}
