#include "ssvmr/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "ssvmr/error.hpp"

namespace ssvmr {

const Tensor& Var::value() const { return tape_->value(id_); }
Tensor Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::variable(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite value for tracked variable");
  nodes_.push_back(Node{"variable", std::move(value), {}, true, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite value for constant");
  nodes_.push_back(Node{"constant", std::move(value), {}, false, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, std::vector<std::size_t> parents, Backward backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite output from op '") + op + "'");
  }
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [&](std::size_t p) { return nodes_[p].requires_grad; });
  Node node{op, std::move(value), {}, needs, std::move(parents), {}};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor Tape::grad(std::size_t id) const {
  const auto& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) return Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  auto& n = nodes_[id];
  if (!n.requires_grad) return;
  if (!g.same_shape(n.value)) {
    throw DimensionError(std::string("gradient shape ") + g.shape_string() +
                         " does not match value " + n.value.shape_string() + " of op '" + n.op + "'");
  }
  if (n.grad.empty()) {
    n.grad = g;
    return;
  }
  auto dst = n.grad.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
  const auto& lv = nodes_[loss.id()].value;
  if (lv.size() != 1) {
    throw ContractError("backward: loss must be scalar, got " + lv.shape_string());
  }
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = Tensor::scalar(1.0);
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    auto& n = nodes_[id];
    if (n.grad.empty() || !n.backward) continue;
    if (!n.grad.all_finite()) {
      throw NumericError(std::string("non-finite gradient at op '") + n.op + "'");
    }
    n.backward(*this, id);
  }
}

namespace {

Tape& same_tape(const Var& a, const Var& b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw ContractError("operands recorded on different tapes");
  }
  return *a.tape();
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.rows(), a.cols());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.rows(), a.cols());
  auto x = a.data();
  auto y = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const auto ia = a.id();
  const auto ib = b.id();
  return t.record("matmul", ssvmr::matmul(a.value(), b.value()), {ia, ib},
                  [ia, ib](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.upstream(self);
                    if (tp.requires_grad(ia)) tp.accumulate(ia, matmul_nt(g, tp.value(ib)));
                    if (tp.requires_grad(ib)) tp.accumulate(ib, matmul_tn(tp.value(ia), g));
                  });
}

Var transpose(const Var& a) {
  const auto ia = a.id();
  return a.tape()->record("transpose", ssvmr::transpose(a.value()), {ia},
                          [ia](Tape& tp, std::size_t self) {
                            tp.accumulate(ia, ssvmr::transpose(tp.upstream(self)));
                          });
}

Var add(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape("add", a.value(), b.value());
  const auto ia = a.id();
  const auto ib = b.id();
  return t.record("add", zip(a.value(), b.value(), [](double x, double y) { return x + y; }),
                  {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
                    tp.accumulate(ia, tp.upstream(self));
                    tp.accumulate(ib, tp.upstream(self));
                  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape("sub", a.value(), b.value());
  const auto ia = a.id();
  const auto ib = b.id();
  return t.record("sub", zip(a.value(), b.value(), [](double x, double y) { return x - y; }),
                  {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
                    tp.accumulate(ia, tp.upstream(self));
                    tp.accumulate(ib, map(tp.upstream(self), [](double g) { return -g; }));
                  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape("mul", a.value(), b.value());
  const auto ia = a.id();
  const auto ib = b.id();
  return t.record("mul", zip(a.value(), b.value(), [](double x, double y) { return x * y; }),
                  {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.upstream(self);
                    auto times = [](double x, double y) { return x * y; };
                    if (tp.requires_grad(ia)) tp.accumulate(ia, zip(g, tp.value(ib), times));
                    if (tp.requires_grad(ib)) tp.accumulate(ib, zip(g, tp.value(ia), times));
                  });
}

Var scale(const Var& a, double s) {
  const auto ia = a.id();
  return a.tape()->record("scale", map(a.value(), [s](double x) { return s * x; }), {ia},
                          [ia, s](Tape& tp, std::size_t self) {
                            tp.accumulate(ia, map(tp.upstream(self), [s](double g) { return s * g; }));
                          });
}

Var add_scalar(const Var& a, double s) {
  const auto ia = a.id();
  return a.tape()->record("add_scalar", map(a.value(), [s](double x) { return x + s; }), {ia},
                          [ia](Tape& tp, std::size_t self) { tp.accumulate(ia, tp.upstream(self)); });
}

Var relu(const Var& a) {
  const auto ia = a.id();
  return a.tape()->record("relu", map(a.value(), [](double x) { return x > 0.0 ? x : 0.0; }), {ia},
                          [ia](Tape& tp, std::size_t self) {
                            tp.accumulate(ia, zip(tp.upstream(self), tp.value(ia), [](double g, double x) {
                                            return x > 0.0 ? g : 0.0;
                                          }));
                          });
}

Var max_with_zero(const Var& a) { return relu(a); }

Var tanh(const Var& a) {
  const auto ia = a.id();
  return a.tape()->record("tanh", map(a.value(), [](double x) { return std::tanh(x); }), {ia},
                          [ia](Tape& tp, std::size_t self) {
                            tp.accumulate(ia, zip(tp.upstream(self), tp.value(self), [](double g, double y) {
                                            return g * (1.0 - y * y);
                                          }));
                          });
}

Var log(const Var& a) {
  const auto ia = a.id();
  return a.tape()->record("log", map(a.value(), [](double x) { return std::log(x); }), {ia},
                          [ia](Tape& tp, std::size_t self) {
                            tp.accumulate(ia, zip(tp.upstream(self), tp.value(ia),
                                                  [](double g, double x) { return g / x; }));
                          });
}

Var dot(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  require_same_shape("dot", a.value(), b.value());
  const auto ia = a.id();
  const auto ib = b.id();
  return t.record("dot", Tensor::scalar(ssvmr::dot(a.value().data(), b.value().data())), {ia, ib},
                  [ia, ib](Tape& tp, std::size_t self) {
                    const double g = tp.upstream(self).item();
                    auto times = [g](double x) { return g * x; };
                    if (tp.requires_grad(ia)) tp.accumulate(ia, map(tp.value(ib), times));
                    if (tp.requires_grad(ib)) tp.accumulate(ib, map(tp.value(ia), times));
                  });
}

Var l2_norm(const Var& a) {
  const auto ia = a.id();
  const double n = std::sqrt(ssvmr::dot(a.value().data(), a.value().data()));
  return a.tape()->record("l2_norm", Tensor::scalar(n), {ia}, [ia](Tape& tp, std::size_t self) {
    const double norm = tp.value(self).item();
    const Tensor& x = tp.value(ia);
    if (norm == 0.0) {
      tp.accumulate(ia, Tensor(x.rows(), x.cols()));
      return;
    }
    const double g = tp.upstream(self).item() / norm;
    tp.accumulate(ia, map(x, [g](double v) { return g * v; }));
  });
}

Var softmax(const Var& a) {
  const auto ia = a.id();
  return a.tape()->record("softmax", softmax_rows(a.value()), {ia}, [ia](Tape& tp, std::size_t self) {
    const Tensor& y = tp.value(self);
    const Tensor& g = tp.upstream(self);
    Tensor out(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      const double s = ssvmr::dot(g.row(i), y.row(i));
      for (std::size_t j = 0; j < y.cols(); ++j) out(i, j) = y(i, j) * (g(i, j) - s);
    }
    tp.accumulate(ia, out);
  });
}

Var log_softmax(const Var& a) {
  const auto ia = a.id();
  return a.tape()->record("log_softmax", log_softmax_rows(a.value()), {ia},
                          [ia](Tape& tp, std::size_t self) {
                            const Tensor& y = tp.value(self);
                            const Tensor& g = tp.upstream(self);
                            Tensor out(y.rows(), y.cols());
                            for (std::size_t i = 0; i < y.rows(); ++i) {
                              double s = 0.0;
                              for (double v : g.row(i)) s += v;
                              for (std::size_t j = 0; j < y.cols(); ++j) {
                                out(i, j) = g(i, j) - std::exp(y(i, j)) * s;
                              }
                            }
                            tp.accumulate(ia, out);
                          });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of zero vars");
  Tape* t = parts.front().tape();
  std::vector<Tensor> values;
  std::vector<std::size_t> ids;
  values.reserve(parts.size());
  ids.reserve(parts.size());
  for (const auto& p : parts) {
    if (p.tape() != t) throw ContractError("concat_rows operands on different tapes");
    values.push_back(p.value());
    ids.push_back(p.id());
  }
  auto joined = ssvmr::concat_rows(values);
  return t->record("concat_rows", std::move(joined), ids, [ids](Tape& tp, std::size_t self) {
    const Tensor& g = tp.upstream(self);
    std::size_t offset = 0;
    for (auto id : ids) {
      const Tensor& v = tp.value(id);
      if (tp.requires_grad(id)) {
        std::vector<double> slice(g.data().begin() + static_cast<std::ptrdiff_t>(offset * g.cols()),
                                  g.data().begin() + static_cast<std::ptrdiff_t>((offset + v.rows()) * g.cols()));
        tp.accumulate(id, Tensor(v.rows(), v.cols(), std::move(slice)));
      }
      offset += v.rows();
    }
  });
}

Var mean_rows(const Var& a) {
  const auto ia = a.id();
  return a.tape()->record("mean_rows", ssvmr::mean_rows(a.value()), {ia}, [ia](Tape& tp, std::size_t self) {
    const Tensor& x = tp.value(ia);
    const Tensor& g = tp.upstream(self);
    const double inv = 1.0 / static_cast<double>(x.rows());
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = g[j] * inv;
    }
    tp.accumulate(ia, out);
  });
}

Var sum(const Var& a) {
  const auto ia = a.id();
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape()->record("sum", Tensor::scalar(s), {ia}, [ia](Tape& tp, std::size_t self) {
    const Tensor& x = tp.value(ia);
    tp.accumulate(ia, Tensor(x.rows(), x.cols(), tp.upstream(self).item()));
  });
}

Var row_sums(const Var& a) {
  const auto ia = a.id();
  const Tensor& x = a.value();
  Tensor out(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v;
    out[i] = s;
  }
  return a.tape()->record("row_sums", std::move(out), {ia}, [ia](Tape& tp, std::size_t self) {
    const Tensor& x = tp.value(ia);
    const Tensor& g = tp.upstream(self);
    Tensor d(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) d(i, j) = g[i];
    }
    tp.accumulate(ia, d);
  });
}

Var dropout_mask_apply(const Var& a, const Tensor& mask) {
  require_same_shape("dropout_mask_apply", a.value(), mask);
  const auto ia = a.id();
  auto times = [](double x, double y) { return x * y; };
  return a.tape()->record("dropout_mask_apply", zip(a.value(), mask, times), {ia},
                          [ia, mask, times](Tape& tp, std::size_t self) {
                            tp.accumulate(ia, zip(tp.upstream(self), mask, times));
                          });
}

Tensor make_dropout_mask(std::size_t rows, std::size_t cols, double drop_rate, Rng& rng) {
  if (!(drop_rate >= 0.0 && drop_rate < 1.0)) {
    throw ContractError("dropout rate must lie in [0, 1), got " + std::to_string(drop_rate));
  }
  Tensor mask(rows, cols, 1.0);
  if (drop_rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - drop_rate);
  for (auto& m : mask.data()) m = uniform01(rng) < drop_rate ? 0.0 : keep_scale;
  return mask;
}

Tensor apply_dropout(const Tensor& x, double drop_rate, Rng& rng) {
  const Tensor mask = make_dropout_mask(x.rows(), x.cols(), drop_rate, rng);
  if (drop_rate == 0.0) return x;
  return zip(x, mask, [](double a, double m) { return a * m; });
}

}  // namespace ssvmr
