#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ssvmr/rng.hpp"
#include "ssvmr/tensor.hpp"

namespace ssvmr {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape
// lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  // Accumulated gradient after Tape::backward; zeros if the node was never
  // reached.
  Tensor grad() const;
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records operations in execution order. Execution order is a topological
// order of the graph, so backward walks node ids from high to low and
// visits each node exactly once.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf whose gradient is tracked (a parameter or an input of interest).
  Var variable(Tensor value);
  // Leaf that never receives a gradient.
  Var constant(Tensor value);

  // Used by ops: registers a computed node. Throws NumericError when value
  // holds NaN/Inf.
  Var record(const char* op, Tensor value, std::vector<std::size_t> parents, Backward backward);

  void backward(const Var& loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  Tensor grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Adds g into the gradient accumulator of node id.
  void accumulate(std::size_t id, const Tensor& g);
  const Tensor& upstream(std::size_t id) const { return nodes_[id].grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    const char* op = "leaf";
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::size_t> parents;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// Differentiable ops. Shapes must match exactly; the only broadcast is a
// scalar factor/offset passed as a double.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var relu(const Var& a);
Var max_with_zero(const Var& a);
Var tanh(const Var& a);
Var log(const Var& a);
Var dot(const Var& a, const Var& b);  // full contraction to 1x1
Var l2_norm(const Var& a);            // Frobenius norm, 1x1
Var softmax(const Var& a);            // per row
Var log_softmax(const Var& a);        // per row
Var concat_rows(std::span<const Var> parts);
Var mean_rows(const Var& a);          // r x c -> 1 x c
Var sum(const Var& a);                // -> 1x1
Var row_sums(const Var& a);           // r x c -> r x 1
Var dropout_mask_apply(const Var& a, const Tensor& mask);

// Inverted-dropout mask: entries are 0 with probability drop_rate and
// 1/(1-drop_rate) otherwise.
Tensor make_dropout_mask(std::size_t rows, std::size_t cols, double drop_rate, Rng& rng);
// Value-level dropout with the same semantics; drop_rate = 0 returns x.
Tensor apply_dropout(const Tensor& x, double drop_rate, Rng& rng);

}  // namespace ssvmr
