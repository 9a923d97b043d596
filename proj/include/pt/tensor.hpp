#pragma once

// Dense row-major float64 tensors with tape-based reverse-mode autodiff.
//
// A Tensor is a cheap shared handle. Operations on tensors that require
// gradients record their inputs and a backward rule on the result, so the
// recorded graph is rebuilt on every forward pass. backward(loss) orders the
// graph topologically (the Tape) and replays the rules in reverse.
//
// A graph and its tensors belong to one thread while a pass is running.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace pt {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  // Convenience for small literals in tests: rows of equal length.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);
  static Tensor vector(std::initializer_list<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  // Only meaningful for rank-2 tensors.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  // Writes bypass the tape; use only on leaves between passes.
  std::span<double> mutable_data();

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  bool requires_grad() const;
  void set_requires_grad(bool value);

  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t r, std::size_t c) const;

  // Same values, no history, no gradient.
  Tensor detach() const;
  // Deep copy of values (keeps requires_grad, drops history and gradient).
  Tensor clone() const;

  // Identity of the underlying node, used by the tape.
  const detail::Node* id() const noexcept { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend struct TensorAccess;
};

// The recorded operations reachable from a loss, inputs before outputs.
struct Tape {
  std::vector<const detail::Node*> nodes;
  std::size_t size() const noexcept { return nodes.size(); }
};

// Topologically ordered graph of every gradient-carrying node reachable from
// `loss`. Each node appears exactly once.
Tape record_tape(const Tensor& loss);

// Populates grad on every requires_grad tensor reachable from the scalar
// `loss`. Gradients accumulate (+=) into existing leaf gradients.
void backward(const Tensor& loss);

// While alive on a thread, operations on that thread record no history.
// Used for inference and evaluation passes.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
// a[m x n] + b[n] broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor neg(const Tensor& a);

Tensor sqrt(const Tensor& a);
// max(a, floor) elementwise; no gradient flows where the floor is active.
Tensor clamp_min(const Tensor& a, double floor);
Tensor abs(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor elu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// Elementwise sign with sign(0) = +1, treated as a constant by backward.
Tensor sign_const(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Reduce one axis of a rank-1 or rank-2 tensor; the axis is removed.
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);

// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& a, std::size_t axis);

// Normalises each slice along the last axis with population variance, then
// applies gain and bias (both of last-axis length).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& a, Shape shape);

// Inverted dropout: zeroes each element with probability `rate` and scales
// survivors by 1/(1-rate). rate == 0 returns `a` unchanged.
Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng);

}  // namespace pt
