#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "ssvmr/autodiff.hpp"
#include "ssvmr/config.hpp"
#include "ssvmr/dataset.hpp"
#include "ssvmr/losses.hpp"
#include "ssvmr/rng.hpp"
#include "ssvmr/tensor.hpp"

// Independent reference implementations used as test oracles. Everything
// here works on plain loops over Tensor entries and shares no code with the
// library kernels it checks.
namespace ssvmr::testing {

inline Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Tensor t(rows, cols);
  for (double& x : t.data()) x = scale * standard_normal(rng);
  return t;
}

inline double norm(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

// ||a - b|| / (||a|| + ||b||), 0 when both vanish.
inline double relative_error(const Tensor& a, const Tensor& b) {
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
  const double denom = norm(a.data()) + norm(b.data());
  if (denom == 0.0) return 0.0;
  return std::sqrt(diff) / denom;
}

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double forward_value(const Builder& f, const std::vector<Tensor>& inputs) {
  Tape t;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(t.variable(x));
  return f(t, vars).value().item();
}

// Worst relative error between tape gradients and central differences over
// all inputs.
inline double gradcheck(const Builder& f, const std::vector<Tensor>& inputs, double h = 1e-5) {
  Tape t;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(t.variable(x));
  t.backward(f(t, vars));
  double worst = 0.0;
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    const Tensor analytic = vars[n].grad();
    Tensor numeric(inputs[n].rows(), inputs[n].cols());
    for (std::size_t e = 0; e < inputs[n].size(); ++e) {
      auto plus = inputs;
      auto minus = inputs;
      plus[n][e] += h;
      minus[n][e] -= h;
      numeric[e] = (forward_value(f, plus) - forward_value(f, minus)) / (2.0 * h);
    }
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

inline double row_dot(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) s += a(i, c) * b(j, c);
  return s;
}

inline int sgn(double x) { return (x > 0.0) - (x < 0.0); }

struct BruteTriplet {
  double total = 0.0;
  std::vector<double> per_sample;
  double v2m = 0.0, m2v = 0.0, vs = 0.0, ms = 0.0;  // weighted, signed as applied
};

// Literal enumeration of every (i, j) hinge and every distinct (i, j, k)
// structure triple.
inline BruteTriplet brute_triplet(const Tensor& v, const Tensor& m, const Tensor& vt, const Tensor& mt,
                                  const LossWeights& w) {
  const std::size_t b = v.rows();
  const double structure_sign = w.structure_sign == StructureSign::literal ? 1.0 : -1.0;
  BruteTriplet out;
  out.per_sample.assign(b, 0.0);
  auto c_ijk = [](const Tensor& x, const Tensor& xt, std::size_t i, std::size_t j, std::size_t k) {
    return sgn(row_dot(x, i, x, k) - row_dot(x, i, x, j)) - sgn(row_dot(xt, i, xt, k) - row_dot(xt, i, xt, j));
  };
  for (std::size_t i = 0; i < b; ++i) {
    double v2m = 0.0, m2v = 0.0, vs = 0.0, ms = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      v2m += std::max(0.0, row_dot(v, i, m, j) - row_dot(v, i, m, i) + w.margin);
      m2v += std::max(0.0, row_dot(m, i, v, j) - row_dot(m, i, v, i) + w.margin);
      for (std::size_t k = 0; k < b; ++k) {
        if (k == i || k == j) continue;
        vs += c_ijk(v, vt, i, j, k) * (row_dot(v, i, v, j) - row_dot(v, i, v, k));
        ms += c_ijk(m, mt, i, j, k) * (row_dot(m, i, m, j) - row_dot(m, i, m, k));
      }
    }
    out.v2m += w.lambda1 * v2m;
    out.m2v += w.lambda2 * m2v;
    out.vs += structure_sign * w.lambda3 * vs;
    out.ms += structure_sign * w.lambda4 * ms;
    out.per_sample[i] = w.lambda1 * v2m + w.lambda2 * m2v + structure_sign * (w.lambda3 * vs + w.lambda4 * ms);
    out.total += out.per_sample[i];
  }
  return out;
}

inline std::vector<double> brute_softmax(std::span<const double> z) {
  double mx = z[0];
  for (double x : z) mx = std::max(mx, x);
  std::vector<double> p(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += p[i] = std::exp(z[i] - mx);
  for (double& x : p) x /= s;
  return p;
}

inline double kl(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] * std::log(p[i] / q[i]);
  return s;
}

inline double brute_rdrop(const Tensor& l1, const Tensor& l2) {
  double total = 0.0;
  for (std::size_t r = 0; r < l1.rows(); ++r) {
    const auto p1 = brute_softmax(l1.row(r));
    const auto p2 = brute_softmax(l2.row(r));
    total += 0.5 * (kl(p1, p2) + kl(p2, p1));
  }
  return total;
}

inline double brute_mix(const Tensor& vhat, const Tensor& m1, const Tensor& m2, const Tensor& vt, const Tensor& m1t,
                        const Tensor& m2t, std::span<const double> lambdas, const LossWeights& w, bool swapped) {
  const auto first = brute_triplet(vhat, m1, vt, m1t, w);
  const auto second = brute_triplet(vhat, m2, vt, m2t, w);
  double total = 0.0;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    const double a = swapped ? 1.0 - lambdas[i] : lambdas[i];
    total += a * first.per_sample[i] + (1.0 - a) * second.per_sample[i];
  }
  return total;
}

// 1-based rank of gallery item gt in row q: sort by score descending, ties
// by gallery index.
inline std::size_t brute_rank(const Tensor& scores, std::size_t q, std::size_t gt) {
  std::vector<std::size_t> order(scores.cols());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores(q, a) > scores(q, b); });
  return static_cast<std::size_t>(std::find(order.begin(), order.end(), gt) - order.begin()) + 1;
}

struct WindowOracle {
  std::size_t min_start = 0;
  std::size_t max_start = 0;
};

inline WindowOracle brute_windows(std::span<const double> receiver, std::span<const double> donor, std::size_t len) {
  auto window = [](std::span<const double> s, std::size_t start, std::size_t len) {
    double t = 0.0;
    for (std::size_t f = start; f < start + len; ++f) t += s[f];
    return t;
  };
  WindowOracle o;
  double best_min = window(receiver, 0, len);
  for (std::size_t s = 1; s + len <= receiver.size(); ++s) {
    const double v = window(receiver, s, len);
    if (v < best_min) best_min = v, o.min_start = s;
  }
  double best_max = window(donor, 0, len);
  for (std::size_t s = 1; s + len <= donor.size(); ++s) {
    const double v = window(donor, s, len);
    if (v > best_max) best_max = v, o.max_start = s;
  }
  return o;
}

inline double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double x : p) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return h;
}

// Small dataset and model sizes for fast pipeline tests.
inline SyntheticSpec small_spec(std::uint64_t seed = 3) {
  SyntheticSpec s;
  s.n_pairs = 64;
  s.n_test_pairs = 32;
  s.latent_dim = 4;
  s.d_v = 12;
  s.d_m = 10;
  s.min_frames = 3;
  s.max_frames = 6;
  s.distractor_dim = 4;
  s.seed = seed;
  return s;
}

inline TrainConfig small_config() {
  TrainConfig c;
  c.hidden = 16;
  c.embed_dim = 8;
  c.batch_size = 8;
  c.epochs = 4;
  c.warmup_epochs = 2;
  c.reverse_epochs = 2;
  c.learning_rate = 1e-2;
  c.dropout = 0.2;
  c.eval_ks = {1, 5};
  return c;
}

}  // namespace ssvmr::testing
