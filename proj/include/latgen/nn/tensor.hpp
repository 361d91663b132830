#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// Every value is a 2-D matrix (vectors are 1xN rows, scalars 1x1). Operations
// record a backward closure on the result when any input requires a gradient;
// Tensor::backward() on a 1x1 result walks the recorded graph in reverse
// topological order and accumulates d(result)/d(input) into each leaf's grad.
// All forward results are checked for finiteness and raise NumericalFault.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace latgen::nn {

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor full(std::size_t rows, std::size_t cols, double value, bool requires_grad = false);
  static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const { return rows() * cols(); }

  const std::vector<double>& values() const;
  std::vector<double>& mutable_values();
  const std::vector<double>& grad() const;
  std::vector<double>& mutable_grad();

  double at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }
  double item() const;
  bool requires_grad() const;

  /// Seeds d(this)/d(this) = 1 and back-propagates. Requires a 1x1 tensor.
  void backward() const;
  void zero_grad() const;

  /// Same values, no history.
  Tensor detach() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  friend struct OpBuilder;
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Linear algebra and elementwise arithmetic. Shapes must match exactly except
// where broadcasting is stated.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_row(const Tensor& a, const Tensor& row);  // row is 1xN, broadcast over rows of a
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor one_minus(const Tensor& a);
Tensor mul_scalar(const Tensor& a, const Tensor& s);  // s is 1x1

// Pointwise nonlinearities.
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

// Row-wise normalizers.
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);
Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Structural ops.
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor pad_cols(const Tensor& a, std::size_t extra);  // append zero columns
Tensor embedding(const Tensor& table, std::span<const int> ids);

/// out[0, index[i]] += a[0, i]; a is 1xL, result is 1xwidth.
Tensor scatter_add_cols(const Tensor& a, std::span<const int> index, std::size_t width);

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor pick(const Tensor& a, std::size_t r, std::size_t c);

/// Sum over rows i of -log_probs[i, targets[i]].
Tensor nll(const Tensor& log_probs, std::span<const int> targets);
/// Mean token cross-entropy of row-wise logits against targets.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

std::vector<std::size_t> argmax_rows(const Tensor& a);

}  // namespace latgen::nn
