#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "speechut/tensor.hpp"

namespace speechut {

// A named trainable tensor. Gradients accumulate into `grad` across backward
// passes until the optimizer clears them.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor t) : name(std::move(n)), value(std::move(t)) {
    grad = Tensor::zeros(value.shape);
  }
  void zero_grad() { std::fill(grad.v.begin(), grad.v.end(), 0.0); }
};

// Handle into a Tape. Cheap to copy; only valid for the tape that made it.
struct Var {
  int32_t ix = -1;
  bool valid() const { return ix >= 0; }
};

// Reverse-mode tape over dense float64 tensors. Records are appended in
// execution order, which is a topological order by construction; backward()
// walks them in reverse. One tape per training step, single-threaded.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // leaves
  Var input(Tensor t, bool requires_grad = false);
  Var param(Parameter& p);  // gradient lands in p.grad after backward()

  // elementwise / structural
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var add_rowvec(Var a, Var bias);  // a [N,d] + bias [d] broadcast over rows
  Var reshape(Var a, std::vector<int64_t> shape);  // same element count
  Var transpose(Var a);
  Var slice_cols(Var a, int64_t c0, int64_t c1);
  Var concat_cols(const std::vector<Var>& parts);
  Var mix_rows(Var h, Var u, std::vector<uint8_t> replace);  // row t from u iff replace[t]

  // linear algebra
  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);  // a x b^T

  // nonlinearities / normalization
  Var softmax(Var a, int axis = 1);  // 2-D only; axis 1 = per row
  Var log_softmax_rows(Var a);
  Var gelu(Var a);
  Var layernorm_rows(Var a, Var gain, Var bias, double eps = 1e-5);
  Var normalize_rows(Var a);  // y_i = x_i / ||x_i||; zero norm is a NumericError

  // network pieces
  Var conv1d(Var x, Var w, Var b, int64_t stride);
  Var embedding(Var table, std::vector<int> ids);
  Var relative_bias(Var table, std::vector<int> buckets, int64_t rows, int64_t cols);

  // reductions / losses
  Var sum_all(Var a);
  // -sum_{r in rows} logp[r, targets[r]]; `targets` indexed by row of logp
  Var nll_pick(Var logp, std::vector<int> targets, std::vector<int> rows);
  // token-summed cross entropy over all rows with label smoothing epsilon
  Var cross_entropy(Var logits, const std::vector<int>& targets, double smooth_eps = 0.0);

  // Appends a custom record. forward value `out` was computed by the caller;
  // `backprop` receives the tape and the new node's index.
  Var custom(Tensor out, std::vector<Var> inputs, std::function<void(Tape&, int32_t)> backprop,
             bool check_finite = true);

  void backward(Var loss);
  void reset();

  const Tensor& val(Var v) const { return node(v.ix).value; }
  const Tensor& grad_of(Var v) const;
  bool requires_grad(Var v) const { return node(v.ix).requires_grad; }
  size_t num_nodes() const { return nodes_.size(); }

  // internal accessors for backprop closures
  Tensor& grad_buf(int32_t ix) { return nodes_[static_cast<size_t>(ix)].grad; }
  const Tensor& value_at(int32_t ix) const { return nodes_[static_cast<size_t>(ix)].value; }
  bool node_requires_grad(int32_t ix) const { return nodes_[static_cast<size_t>(ix)].requires_grad; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated during backward
    bool requires_grad = false;
    std::vector<int32_t> inputs;
    std::function<void(Tape&, int32_t)> backprop;  // nullptr for leaves
    Tensor* external_grad = nullptr;               // parameter sink
  };

  const Node& node(int32_t ix) const;
  Node& node(int32_t ix);
  Var push(Tensor value, std::vector<int32_t> inputs, std::function<void(Tape&, int32_t)> bp,
           bool check_finite = true, const char* opname = "op");
  static void accum(Tensor& dst, const Tensor& src);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace speechut
