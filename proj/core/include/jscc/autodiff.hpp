#pragma once

// Minimal reverse-mode differentiation over dense double arrays.
//
// A Tensor is a shared handle to a Node. Operations create new nodes that
// remember their parents and a backward closure; `backward(loss)` replays the
// closures in reverse creation order. Leaves created with `parameter()` keep
// accumulating gradients until `zero_grad()` is called.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace jscc::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

struct Node;
using BackwardFn = std::function<void(const Node& self)>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
  std::uint64_t sequence = 0;
  bool requires_grad = false;
  std::string op;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor parameter(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor eye(std::size_t n);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> value() const { return node_->value; }
  std::span<double> mutable_value() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }
  double item() const;
  double at(std::size_t i, std::size_t j) const;

  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad();
  std::uint64_t sequence() const { return node_->sequence; }

  /// Copy of the value with no graph history.
  Tensor detach() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Nodes reachable from a root, in recording order.
class Graph {
 public:
  static Graph trace(const Tensor& root);

  std::span<Node* const> nodes() const { return nodes_; }
  /// Seeds d(root)/d(root) = 1 and runs every backward closure in reverse
  /// recording order.
  void backward();

 private:
  Tensor root_;
  std::vector<Node*> nodes_;
};

/// Populates gradients of every requires-grad node reachable from `loss`.
/// `loss` must hold exactly one element.
void backward(const Tensor& loss);

namespace detail {
/// Builds a result node. `backward` is dropped when no parent needs gradients.
Tensor make_result(std::string op, Shape shape, std::vector<double> value,
                   std::vector<Tensor> parents, BackwardFn backward);
}  // namespace detail

// Elementwise binary ops with trailing-dimension broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);
Tensor square(const Tensor& x);

Tensor relu(const Tensor& x);
Tensor lrelu(const Tensor& x, double slope = 0.2);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
/// Softmax over the last axis.
Tensor softmax(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Reduction over one axis, keeping it with extent 1.
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
/// Gathers rows of a 2-D tensor.
Tensor rows(const Tensor& x, std::span<const std::size_t> index);
/// out[i] = x[index[i]] viewed with `shape`; gradients scatter back.
Tensor take(const Tensor& x, std::vector<std::size_t> index, Shape shape);

/// log det of a symmetric positive-definite matrix. The input is symmetrized
/// as (M + M^T)/2 and factorized by Cholesky; throws DefinitenessError with
/// the failing pivot index.
Tensor logdet_psd(const Tensor& m);

/// 2-D convolution, NCHW input, weight [out, in, k, k].
Tensor conv2d(const Tensor& input, const Tensor& weight, std::size_t stride,
              std::size_t padding);
/// Transposed 2-D convolution (adjoint of conv2d), weight [in, out, k, k].
Tensor conv_transpose2d(const Tensor& input, const Tensor& weight,
                        std::size_t stride, std::size_t padding);

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> var;
};

/// Per-feature affine standardization. Features are columns of a 2-D input
/// or channels of an NCHW input. With `frozen` the supplied statistics are
/// used; otherwise batch statistics are computed and written to `batch_stats`.
Tensor standardize(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   double eps, const FeatureStats* frozen,
                   FeatureStats* batch_stats);

/// Plain Cholesky factor (lower, row-major); throws DefinitenessError.
std::vector<double> cholesky(std::span<const double> spd, std::size_t n);

}  // namespace jscc::ad
