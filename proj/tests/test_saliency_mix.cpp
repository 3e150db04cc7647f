#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "ssvmr/error.hpp"
#include "ssvmr/saliency_mix.hpp"
#include "ssvmr/training.hpp"
#include "support.hpp"

using namespace ssvmr;

namespace {

std::size_t oracle_length(std::size_t l1, std::size_t l2, double lambda0, bool half_up) {
  const double raw = lambda0 * static_cast<double>(l1);
  long r = half_up ? static_cast<long>(std::floor(raw + 0.5)) : static_cast<long>(std::floor(raw));
  r = std::min<long>(r, static_cast<long>(l2));
  r = std::max<long>(r, 1);
  return static_cast<std::size_t>(std::min<long>(r, static_cast<long>(l1)));
}

SaliencyProfile profile(std::vector<double> v) { return SaliencyProfile{std::move(v)}; }

Tensor numbered_frames(std::size_t rows, std::size_t cols, double base) {
  Tensor t(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) t(r, c) = base + static_cast<double>(r);
  }
  return t;
}

struct SmallBatch {
  SyntheticData data;
  TrainingSet set;
  ModelParams params;
  TrainingBatch batch;
};

SmallBatch small_batch(std::uint64_t seed, std::size_t b) {
  auto spec = testing::small_spec(seed);
  auto data = generate_synthetic(spec);
  TrainingSet set(data.train.videos, data.train.music, data.train.pairs);
  Rng rng = make_rng(seed, {1});
  ModelParams params = init_params({spec.d_v, spec.d_m, 16, 8}, rng);
  SmallBatch out{std::move(data), std::move(set), std::move(params), {}};
  std::vector<std::size_t> samples(b);
  std::iota(samples.begin(), samples.end(), std::size_t{0});
  out.batch = build_batch(out.set, samples, {}, 8);
  return out;
}

double batch_loss(const ModelParams& params, const TrainingBatch& batch, const std::vector<Tensor>& videos) {
  std::vector<const Tensor*> ptrs;
  for (const auto& v : videos) ptrs.push_back(&v);
  Tape t;
  const BoundParams p = bind(t, params, false);
  const Var ev = embed_video_batch(p, ptrs, 0.0, nullptr, false).embedding;
  const Var em = batch_music_embeddings(p, batch, 0.0, nullptr);
  return triplet_loss(ev, em, batch.intra_video, batch.intra_music, LossWeights{}).total.value().item();
}

}  // namespace

TEST_CASE("span length examples") {
  CHECK(span_length(10, 10, 0.4) == 4);
  CHECK(span_length(5, 10, 0.5) == 3);
  CHECK(span_length(5, 10, 0.5, SpanRounding::floor) == 2);
  CHECK(span_length(10, 2, 0.4) == 2);
  CHECK(span_length(1, 1, 0.1) == 1);
  CHECK(span_length(2, 8, 1.0) == 2);
  CHECK_THROWS_AS(span_length(0, 3, 0.4), ContractError);
  CHECK_THROWS_AS(span_length(3, 0, 0.4), ContractError);
  CHECK_THROWS_AS(span_length(3, 3, 0.0), ContractError);
  CHECK_THROWS_AS(span_length(3, 3, 1.5), ContractError);
}

TEST_CASE("span length matches the closed form on an exhaustive grid") {
  for (std::size_t l1 = 1; l1 <= 24; ++l1) {
    for (std::size_t l2 = 1; l2 <= 24; ++l2) {
      for (int step = 1; step <= 20; ++step) {
        const double lambda0 = 0.05 * step;
        const std::size_t got = span_length(l1, l2, lambda0);
        CHECK(got == oracle_length(l1, l2, lambda0, true));
        CHECK(span_length(l1, l2, lambda0, SpanRounding::floor) == oracle_length(l1, l2, lambda0, false));
        CHECK(got >= 1);
        CHECK(got <= std::min(l1, l2));
      }
    }
  }
}

TEST_CASE("window selection agrees with brute force on 1000 profiles") {
  Rng rng = make_rng(61, {});
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n1 = 1 + uniform_index(rng, 12);
    const std::size_t n2 = 1 + uniform_index(rng, 12);
    std::vector<double> r(n1), d(n2);
    // Small integer values force ties.
    for (auto& x : r) x = static_cast<double>(uniform_index(rng, 4));
    for (auto& x : d) x = static_cast<double>(uniform_index(rng, 4));
    const std::size_t len = 1 + uniform_index(rng, std::min(n1, n2));
    const auto c = select_spans(profile(r), profile(d), len);
    const auto o = testing::brute_windows(r, d, len);
    CHECK(c.receiver == Span{o.min_start, len});
    CHECK(c.donor == Span{o.max_start, len});
  }
}

TEST_CASE("select_spans examples and ties") {
  const auto c = select_spans(profile({5, 1, 1, 5, 5}), profile({0, 0, 3, 4, 0}), 2);
  CHECK(c.receiver == Span{1, 2});
  CHECK(c.donor == Span{2, 2});
  const auto flat = select_spans(profile({0, 0, 0, 0}), profile({2, 2, 2}), 2);
  CHECK(flat.receiver.start == 0);
  CHECK(flat.donor.start == 0);
  CHECK_THROWS_AS(select_spans(profile({1, 2}), profile({1, 2, 3}), 3), ContractError);
  CHECK_THROWS_AS(select_spans(profile({1, 2}), profile({1, 2}), 0), ContractError);
}

TEST_CASE("multi-span windows are disjoint and share one length") {
  Rng rng = make_rng(62, {});
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t n = 2 + uniform_index(rng, 15);
    std::vector<double> r(n), d(n);
    for (auto& x : r) x = uniform01(rng);
    for (auto& x : d) x = uniform01(rng);
    const std::size_t len = 1 + uniform_index(rng, n / 2);
    const std::size_t want = 1 + uniform_index(rng, 4);
    const auto spans = select_spans(profile(r), profile(d), len, want);
    CHECK(spans.size() >= 1);
    CHECK(spans.size() <= want);
    CHECK(spans.front() == select_spans(profile(r), profile(d), len));
    std::vector<int> used_r(n, 0), used_d(n, 0);
    for (const auto& s : spans) {
      CHECK(s.receiver.length == len);
      CHECK(s.donor.length == len);
      for (std::size_t f = s.receiver.start; f < s.receiver.end(); ++f) CHECK(++used_r[f] == 1);
      for (std::size_t f = s.donor.start; f < s.donor.end(); ++f) CHECK(++used_d[f] == 1);
    }
  }
  // Four frames fit two windows of 2 and no third.
  CHECK(select_spans(profile({1, 2, 3, 4}), profile({4, 3, 2, 1}), 2, 4).size() == 2);
  const auto two = select_spans(profile({1, 2, 3, 4}), profile({4, 3, 2, 1}), 2, 2);
  CHECK(two[0].receiver == Span{0, 2});
  CHECK(two[1].receiver == Span{2, 2});
  CHECK(two[0].donor == Span{0, 2});
  CHECK(two[1].donor == Span{2, 2});
  CHECK_THROWS_AS(select_spans(profile({1, 2}), profile({1, 2}), 1, 0), ContractError);
}

TEST_CASE("splice replaces exactly the receiver window") {
  const Tensor v1 = numbered_frames(6, 3, 0.0);
  const Tensor v2 = numbered_frames(4, 3, 100.0);
  const SpanChoice c{Span{2, 2}, Span{1, 2}};
  const auto m = splice(v1, v2, c);
  REQUIRE(m.frames.rows() == 6);
  for (std::size_t r = 0; r < 6; ++r) {
    const double want = (r == 2 || r == 3) ? 100.0 + static_cast<double>(r - 1) : static_cast<double>(r);
    for (std::size_t col = 0; col < 3; ++col) CHECK(m.frames(r, col) == want);
  }
  CHECK(m.lambda == doctest::Approx(2.0 / 6.0));
  CHECK_THROWS_AS(splice(v1, v2, SpanChoice{Span{5, 2}, Span{0, 2}}), ContractError);
  CHECK_THROWS_AS(splice(v1, v2, SpanChoice{Span{0, 2}, Span{0, 3}}), ContractError);
  CHECK_THROWS_AS(splice(v1, Tensor(2, 4), c), DimensionError);
}

TEST_CASE("splice with several spans counts every replaced frame") {
  const Tensor v1 = numbered_frames(8, 2, 0.0);
  const Tensor v2 = numbered_frames(8, 2, 50.0);
  const std::vector<SpanChoice> spans{{Span{0, 2}, Span{6, 2}}, {Span{4, 2}, Span{0, 2}}};
  const auto m = splice(v1, v2, spans);
  CHECK(m.lambda == doctest::Approx(0.5));
  CHECK(m.frames(0, 0) == 56.0);
  CHECK(m.frames(5, 1) == 51.0);
  CHECK(m.frames(3, 0) == 3.0);
  CHECK(m.spans.size() == 2);
}

TEST_CASE("derangements have no fixed points") {
  Rng rng = make_rng(63, {});
  for (int rep = 0; rep < 500; ++rep) {
    const std::size_t n = 2 + uniform_index(rng, 30);
    const auto p = random_derangement(n, rng);
    std::vector<std::size_t> sorted = p;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(sorted[i] == i);
      CHECK(p[i] != i);
    }
  }
  Rng two = make_rng(64, {});
  CHECK(random_derangement(2, two) == std::vector<std::size_t>{1, 0});
  Rng a = make_rng(65, {}), b = make_rng(65, {});
  CHECK(random_derangement(20, a) == random_derangement(20, b));
  CHECK_THROWS_AS(random_derangement(1, a), ContractError);
}

TEST_CASE("derangements of three are uniform") {
  Rng rng = make_rng(66, {});
  std::map<std::vector<std::size_t>, int> counts;
  const int reps = 4000;
  for (int rep = 0; rep < reps; ++rep) ++counts[random_derangement(3, rng)];
  REQUIRE(counts.size() == 2);
  for (const auto& [perm, c] : counts) CHECK(std::abs(c - reps / 2) < 200);
}

TEST_CASE("saliency is the norm of the per-frame loss gradient") {
  auto s = small_batch(71, 5);
  const auto sal = batch_saliency(s.params, s.batch, LossWeights{});
  REQUIRE(sal.size() == 5);
  std::vector<Tensor> videos;
  for (const Tensor* v : s.batch.videos) videos.push_back(*v);
  const double h = 1e-5;
  for (std::size_t i = 0; i < 5; ++i) {
    REQUIRE(sal[i].size() == videos[i].rows());
    for (std::size_t f = 0; f < videos[i].rows(); ++f) {
      double sq = 0.0;
      for (std::size_t c = 0; c < videos[i].cols(); ++c) {
        auto plus = videos, minus = videos;
        plus[i](f, c) += h;
        minus[i](f, c) -= h;
        const double g = (batch_loss(s.params, s.batch, plus) - batch_loss(s.params, s.batch, minus)) / (2 * h);
        sq += g * g;
      }
      CHECK(sal[i].values[f] >= 0.0);
      CHECK(sal[i].values[f] == doctest::Approx(std::sqrt(sq)).epsilon(1e-4));
    }
  }
}

TEST_CASE("saliency separates frames of a video") {
  auto s = small_batch(72, 6);
  const auto sal = batch_saliency(s.params, s.batch, LossWeights{});
  std::size_t varied = 0;
  for (const auto& p : sal) {
    if (p.size() < 2) continue;
    const auto [lo, hi] = std::minmax_element(p.values.begin(), p.values.end());
    varied += *hi - *lo > 1e-12 * (1.0 + *hi);
  }
  CHECK(varied > 0);
}

TEST_CASE("identical frames have identical saliency") {
  auto s = small_batch(73, 4);
  Tensor repeated(4, s.batch.videos[0]->cols());
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < repeated.cols(); ++c) repeated(r, c) = (*s.batch.videos[0])(0, c);
  }
  s.batch.videos[0] = &repeated;
  const auto sal = batch_saliency(s.params, s.batch, LossWeights{});
  for (std::size_t f = 1; f < 4; ++f) CHECK(sal[0].values[f] == doctest::Approx(sal[0].values[0]).epsilon(1e-12));
}

TEST_CASE("zero loss gives zero saliency and the first window") {
  auto s = small_batch(74, 4);
  LossWeights off;
  off.lambda1 = off.lambda2 = off.lambda3 = off.lambda4 = 0.0;
  const auto sal = batch_saliency(s.params, s.batch, off);
  for (const auto& p : sal) {
    for (double v : p.values) CHECK(v == 0.0);
  }
  const auto c = select_spans(sal[0], sal[1], 1);
  CHECK(c.receiver.start == 0);
  CHECK(c.donor.start == 0);
}

TEST_CASE("mix_batch pairs every row with a derangement partner") {
  auto s = small_batch(75, 8);
  Rng rng = make_rng(76, {});
  MixOptions opts;
  const auto mixed = mix_batch(s.params, s.batch, LossWeights{}, opts, rng);
  REQUIRE(mixed.samples.size() == 8);
  REQUIRE(mixed.partner.size() == 8);
  std::set<std::size_t> partners(mixed.partner.begin(), mixed.partner.end());
  CHECK(partners.size() == 8);
  for (std::size_t i = 0; i < 8; ++i) {
    const auto& m = mixed.samples[i];
    const Tensor& v1 = *s.batch.videos[i];
    const Tensor& v2 = *s.batch.videos[mixed.partner[i]];
    CHECK(mixed.partner[i] != i);
    CHECK(m.receiver_index == i);
    CHECK(m.donor_index == mixed.partner[i]);
    CHECK(m.frames.rows() == v1.rows());
    const std::size_t len = span_length(v1.rows(), v2.rows(), opts.lambda0);
    CHECK(m.lambda == doctest::Approx(static_cast<double>(len) / static_cast<double>(v1.rows())));
    CHECK(m.lambda > 0.0);
    CHECK(m.lambda <= 1.0);
  }
  Rng r1 = make_rng(77, {}), r2 = make_rng(77, {});
  const auto a = mix_batch(s.params, s.batch, LossWeights{}, opts, r1);
  const auto b = mix_batch(s.params, s.batch, LossWeights{}, opts, r2);
  CHECK(a.partner == b.partner);
  for (std::size_t i = 0; i < 8; ++i) CHECK(a.samples[i].frames == b.samples[i].frames);
}

TEST_CASE("batches of one are not mixed") {
  auto s = small_batch(78, 3);
  s.batch.videos.resize(1);
  Rng rng = make_rng(79, {});
  CHECK(mix_batch(s.params, s.batch, LossWeights{}, MixOptions{}, rng).samples.empty());
}

TEST_CASE("mix loss gradient reaches both music targets and the mixed video") {
  Rng rng = make_rng(80, {});
  const Tensor v = testing::random_tensor(4, 3, rng);
  const Tensor m1 = testing::random_tensor(4, 3, rng);
  const Tensor m2 = testing::random_tensor(4, 3, rng);
  const Tensor iv = testing::random_tensor(4, 5, rng);
  const Tensor im1 = testing::random_tensor(4, 2, rng);
  const Tensor im2 = testing::random_tensor(4, 2, rng);
  const std::vector<double> lambdas{0.25, 0.5, 0.4, 0.3};
  Tape t;
  const Var vv = t.variable(v), vm1 = t.variable(m1), vm2 = t.variable(m2);
  LossWeights w;
  w.margin = 10.0;  // every hinge active
  const Var loss = mix_loss({vv, vm1, vm2, iv, im1, im2, lambdas}, w);
  t.backward(loss);
  auto nonzero = [](const Tensor& g) {
    return std::any_of(g.data().begin(), g.data().end(), [](double x) { return x != 0.0; });
  };
  CHECK(nonzero(vv.grad()));
  CHECK(nonzero(vm1.grad()));
  CHECK(nonzero(vm2.grad()));
}
