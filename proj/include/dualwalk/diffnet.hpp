#pragma once

// Minimal reverse-mode differentiation for the policy networks.
//
// A Tape records one batch of forward computation. Values are rank-2
// row-major matrices whose rows are independent rollouts; operators act
// row-wise except where noted. Parameters live outside the tape and receive
// gradients when Tape::backward runs. Nothing here mutates operator inputs;
// parameters change only in Adam::step.
//
// Instantiated for float (training, inference) and double (gradient checks).

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "dualwalk/matrix.hpp"

namespace dualwalk::diffnet {

using IndexMatrix = Matrix<std::int32_t>;  // -1 marks padding
using Mask = Matrix<std::uint8_t>;

template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;

  Parameter() = default;
  Parameter(std::string n, std::size_t rows, std::size_t cols)
      : name(std::move(n)), value(rows, cols), grad(rows, cols) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T{}); }
};

template <typename T>
class Tape;

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Matrix<T>& value() const;
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  /// A non-recording tape computes values only (inference).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Matrix<T> value);
  Var<T> parameter(Parameter<T>& p);

  const Matrix<T>& value(std::size_t id) const;
  /// Gradient accumulated at a node during backward (zeros if untouched).
  const Matrix<T>& grad(Var<T> v);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable parameter.
  /// `loss` must be 1 x 1. Throws NumericError on a non-recording tape.
  void backward(Var<T> loss);

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  // Operator plumbing.
  Var<T> push(Matrix<T> value, std::span<const Var<T>> inputs, BackwardFn fn);
  Var<T> push(Matrix<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
    return push(std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()), std::move(fn));
  }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  Matrix<T>& grad_buffer(std::size_t id);

 private:
  struct Node {
    Matrix<T> value;
    const Matrix<T>* external = nullptr;  // parameter value, not copied
    Matrix<T> own_grad;
    Parameter<T>* param = nullptr;
    bool needs_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };
  bool record_;
  bool backward_done_ = false;
  std::vector<Node> nodes_;
};

template <typename T>
const Matrix<T>& Var<T>::value() const {
  return tape->value(id);
}

template <typename T>
struct LstmState {
  Var<T> hidden;
  Var<T> cell;
};

// ---- operators -------------------------------------------------------------

/// x[B x K] * w[N x K]^T
template <typename T>
Var<T> linear(Var<T> x, Var<T> w);
/// Column-wise concatenation of equally tall blocks.
template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts);
template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t offset, std::size_t width);
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> x, T factor);
template <typename T>
Var<T> relu(Var<T> x);

/// W2 * relu(W1 * x), row-wise.
template <typename T>
Var<T> mlp2_relu(Var<T> x, Var<T> w1, Var<T> w2);

/// Standard LSTM cell, gate order (i, f, g, o):
///   z = [input, hidden] W^T + bias;  c' = f*c + i*g;  h' = o*tanh(c').
/// weight: 4H x (I + H), bias: 1 x 4H.
template <typename T>
LstmState<T> lstm_cell(Var<T> input, LstmState<T> prev, Var<T> weight, Var<T> bias);

/// Rows of `table` selected by `index` (one per output row).
template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const std::int32_t> index);

/// out[b][a] = q[b][offset : offset + table.cols] . table[index[b][a]];
/// padded slots (-1) yield 0.
template <typename T>
Var<T> dot_gather(Var<T> q, std::size_t offset, Var<T> table, const IndexMatrix& index);

/// Row-wise log-softmax over slots where mask != 0. Masked slots hold the
/// lowest finite value (exp() of it is 0) and receive no gradient. Every row
/// needs at least one open slot.
template <typename T>
Var<T> masked_log_softmax(Var<T> scores, const Mask& mask);

/// out[b] = x[b][column[b]]  (B x 1)
template <typename T>
Var<T> pick(Var<T> x, std::span<const std::int32_t> column);

/// Row-wise entropy -sum p log p of a log-probability matrix (B x 1).
template <typename T>
Var<T> entropy(Var<T> log_probs, const Mask& mask);

/// sum over all entries of x * weights (1 x 1); weights has x's shape.
template <typename T>
Var<T> weighted_sum(Var<T> x, const Matrix<T>& weights);

/// sum over all entries (1 x 1).
template <typename T>
Var<T> sum(Var<T> x);

/// Plain masked softmax of one score vector (no tape). Throws if every slot is masked.
std::vector<double> masked_softmax(std::span<const double> scores, std::span<const std::uint8_t> mask);

// ---- optimisation ----------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam. step() applies one update from the accumulated
/// gradients, then clears them.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>*> params, AdamConfig config);
  void step();
  std::size_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  std::vector<Parameter<T>*> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::size_t steps_ = 0;
};

template <typename T>
double global_grad_norm(std::span<Parameter<T>* const> params);

/// Rescales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(std::span<Parameter<T>* const> params, double max_norm);

}  // namespace dualwalk::diffnet
