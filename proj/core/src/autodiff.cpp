#include "jscc/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "jscc/error.hpp"

namespace jscc::ad {

namespace {

std::atomic<std::uint64_t> g_sequence{1};

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> value, bool requires_grad) {
  if (numel(shape) != value.size()) {
    throw DimensionError("value count " + std::to_string(value.size()) +
                         " does not match shape " + to_string(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->grad.assign(value.size(), 0.0);
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->sequence = g_sequence.fetch_add(1, std::memory_order_relaxed);
  return node;
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + to_string(x.shape()));
  }
}

// Output shape and per-output source offsets for numpy-style broadcasting.
struct Broadcast {
  Shape shape;
  std::vector<std::size_t> ia;
  std::vector<std::size_t> ib;
  bool same = false;
};

Broadcast broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast out;
  if (a == b) {
    out.shape = a;
    out.same = true;
    return out;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(rank - b.size()));
  out.shape.resize(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    if (pa[d] != pb[d] && pa[d] != 1 && pb[d] != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast " + to_string(a) + " with " +
                           to_string(b));
    }
    out.shape[d] = std::max(pa[d], pb[d]);
  }
  std::vector<std::size_t> sa(rank, 0), sb(rank, 0);
  std::size_t stride_a = 1, stride_b = 1;
  for (std::size_t d = rank; d-- > 0;) {
    sa[d] = pa[d] == 1 ? 0 : stride_a;
    sb[d] = pb[d] == 1 ? 0 : stride_b;
    stride_a *= pa[d];
    stride_b *= pb[d];
  }
  const std::size_t total = numel(out.shape);
  out.ia.resize(total);
  out.ib.resize(total);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t offset_a = 0, offset_b = 0;
  for (std::size_t i = 0; i < total; ++i) {
    out.ia[i] = offset_a;
    out.ib[i] = offset_b;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      offset_a += sa[d];
      offset_b += sb[d];
      if (idx[d] < out.shape[d]) break;
      offset_a -= sa[d] * idx[d];
      offset_b -= sb[d] * idx[d];
      idx[d] = 0;
    }
  }
  return out;
}

// Shared implementation of broadcasting binary ops. `fwd(a, b)` gives the
// value, `da(a, b)` / `db(a, b)` the partial derivatives.
template <class F, class DA, class DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F fwd, DA da, DB db) {
  auto plan = std::make_shared<Broadcast>(broadcast(a.shape(), b.shape(), op));
  const std::size_t total = numel(plan->shape);
  std::vector<double> out(total);
  auto av = a.value();
  auto bv = b.value();
  if (plan->same) {
    for (std::size_t i = 0; i < total; ++i) out[i] = fwd(av[i], bv[i]);
  } else {
    for (std::size_t i = 0; i < total; ++i) out[i] = fwd(av[plan->ia[i]], bv[plan->ib[i]]);
  }
  Node* pa = a.node();
  Node* pb = b.node();
  return detail::make_result(op, plan->shape, std::move(out), {a, b},
                             [pa, pb, plan, da, db](const Node& self) {
                               const std::size_t n = self.grad.size();
                               for (std::size_t i = 0; i < n; ++i) {
                                 const std::size_t ia = plan->same ? i : plan->ia[i];
                                 const std::size_t ib = plan->same ? i : plan->ib[i];
                                 const double g = self.grad[i];
                                 if (pa->requires_grad) pa->grad[ia] += g * da(pa->value[ia], pb->value[ib]);
                                 if (pb->requires_grad) pb->grad[ib] += g * db(pa->value[ia], pb->value[ib]);
                               }
                             });
}

// Elementwise unary op whose derivative is expressed through input x and output y.
template <class F, class D>
Tensor unary(const char* op, const Tensor& x, F fwd, D deriv) {
  std::vector<double> out(x.size());
  auto xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  Node* px = x.node();
  return detail::make_result(op, x.shape(), std::move(out), {x}, [px, deriv](const Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      px->grad[i] += self.grad[i] * deriv(px->value[i], self.value[i]);
    }
  });
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return Tensor(new_node(std::move(shape), std::move(values), false));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  auto node = new_node(std::move(shape), std::move(values), true);
  node->op = "parameter";
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = numel(shape);
  return constant(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return constant({1}, {value}); }

Tensor Tensor::eye(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return constant({n, n}, std::move(v));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         to_string(shape()));
  }
  return node_->shape[axis];
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  return node_->value[i * dim(1) + j];
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

Tensor Tensor::detach() const { return constant(shape(), node_->value); }

Graph Graph::trace(const Tensor& root) {
  Graph graph;
  graph.root_ = root;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.node()};
  while (!stack.empty()) {
    Node* node = stack.back();
    stack.pop_back();
    if (!node->requires_grad || !seen.insert(node).second) continue;
    graph.nodes_.push_back(node);
    for (const auto& parent : node->parents) stack.push_back(parent.get());
  }
  std::sort(graph.nodes_.begin(), graph.nodes_.end(),
            [](const Node* a, const Node* b) { return a->sequence < b->sequence; });
  return graph;
}

void Graph::backward() {
  if (root_.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + to_string(root_.shape()));
  }
  if (!root_.requires_grad()) return;
  root_.node()->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

void backward(const Tensor& loss) { Graph::trace(loss).backward(); }

namespace detail {

Tensor make_result(std::string op, Shape shape, std::vector<double> value,
                   std::vector<Tensor> parents, BackwardFn backward) {
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [](const Tensor& p) { return p.requires_grad(); });
  auto node = new_node(std::move(shape), std::move(value), needs);
  node->op = std::move(op);
  if (needs) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.shared());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

}  // namespace detail

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
Tensor operator-(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(
      "add_scalar", x, [offset](double v) { return v + offset; },
      [](double, double) { return 1.0; });
}

Tensor square(const Tensor& x) {
  return unary(
      "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor relu(const Tensor& x) {
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor lrelu(const Tensor& x, double slope) {
  return unary(
      "lrelu", x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor tanh(const Tensor& x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Tensor softmax(const Tensor& x) {
  if (x.rank() == 0) throw DimensionError("softmax: empty shape");
  const std::size_t width = x.shape().back();
  const std::size_t count = x.size() / width;
  std::vector<double> out(x.size());
  auto xv = x.value();
  for (std::size_t r = 0; r < count; ++r) {
    const double* in = xv.data() + r * width;
    double* o = out.data() + r * width;
    const double peak = *std::max_element(in, in + width);
    double total = 0.0;
    for (std::size_t i = 0; i < width; ++i) total += (o[i] = std::exp(in[i] - peak));
    for (std::size_t i = 0; i < width; ++i) o[i] /= total;
  }
  Node* px = x.node();
  return detail::make_result("softmax", x.shape(), std::move(out), {x},
                             [px, width, count](const Node& self) {
                               for (std::size_t r = 0; r < count; ++r) {
                                 const double* y = self.value.data() + r * width;
                                 const double* g = self.grad.data() + r * width;
                                 double dot = 0.0;
                                 for (std::size_t i = 0; i < width; ++i) dot += g[i] * y[i];
                                 for (std::size_t i = 0; i < width; ++i) {
                                   px->grad[r * width + i] += y[i] * (g[i] - dot);
                                 }
                               }
                             });
}

Tensor sum(const Tensor& x) {
  auto xv = x.value();
  const double total = std::accumulate(xv.begin(), xv.end(), 0.0);
  Node* px = x.node();
  return detail::make_result("sum", {1}, {total}, {x}, [px](const Node& self) {
    for (double& g : px->grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor sum(const Tensor& x, std::size_t axis) {
  const Shape& shape = x.shape();
  if (axis >= shape.size()) {
    throw DimensionError("sum: axis " + std::to_string(axis) + " out of range for " +
                         to_string(shape));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
  const std::size_t extent = shape[axis];
  Shape out_shape = shape;
  out_shape[axis] = 1;
  std::vector<double> out(outer * inner, 0.0);
  auto xv = x.value();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < extent; ++k)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += xv[(o * extent + k) * inner + i];
  Node* px = x.node();
  return detail::make_result("sum_axis", out_shape, std::move(out), {x},
                             [px, outer, inner, extent](const Node& self) {
                               for (std::size_t o = 0; o < outer; ++o)
                                 for (std::size_t k = 0; k < extent; ++k)
                                   for (std::size_t i = 0; i < inner; ++i)
                                     px->grad[(o * extent + k) * inner + i] += self.grad[o * inner + i];
                             });
}

Tensor mean(const Tensor& x, std::size_t axis) {
  return scale(sum(x, axis), 1.0 / static_cast<double>(x.dim(axis)));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ for " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  std::vector<double> out(m * n);
  Map(out.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n)).noalias() =
      ConstMap(a.value().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) *
      ConstMap(b.value().data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
  Node* pa = a.node();
  Node* pb = b.node();
  return detail::make_result("matmul", {m, n}, std::move(out), {a, b},
                             [pa, pb, m, k, n](const Node& self) {
                               const auto M = static_cast<Eigen::Index>(m);
                               const auto K = static_cast<Eigen::Index>(k);
                               const auto N = static_cast<Eigen::Index>(n);
                               ConstMap g(self.grad.data(), M, N);
                               if (pa->requires_grad) {
                                 Map(pa->grad.data(), M, K).noalias() +=
                                     g * ConstMap(pb->value.data(), K, N).transpose();
                               }
                               if (pb->requires_grad) {
                                 Map(pb->grad.data(), K, N).noalias() +=
                                     ConstMap(pa->value.data(), M, K).transpose() * g;
                               }
                             });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(r * c);
  auto xv = x.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  Node* px = x.node();
  return detail::make_result("transpose", {c, r}, std::move(out), {x}, [px, r, c](const Node& self) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) px->grad[i * c + j] += self.grad[j * r + i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  Node* px = x.node();
  return detail::make_result("reshape", std::move(shape),
                             std::vector<double>(x.value().begin(), x.value().end()), {x},
                             [px](const Node& self) {
                               for (std::size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i];
                             });
}

Tensor rows(const Tensor& x, std::span<const std::size_t> index) {
  require_rank(x, 2, "rows");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<double> out(index.size() * c);
  auto xv = x.value();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= r) throw DimensionError("rows: index " + std::to_string(index[i]) + " >= " + std::to_string(r));
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(index[i] * c), c, out.begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  Node* px = x.node();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return detail::make_result("rows", {index.size(), c}, std::move(out), {x},
                             [px, idx = std::move(idx), c](const Node& self) {
                               for (std::size_t i = 0; i < idx.size(); ++i)
                                 for (std::size_t j = 0; j < c; ++j) px->grad[idx[i] * c + j] += self.grad[i * c + j];
                             });
}

Tensor take(const Tensor& x, std::vector<std::size_t> index, Shape shape) {
  if (numel(shape) != index.size()) {
    throw DimensionError("take: " + std::to_string(index.size()) + " indices for shape " + to_string(shape));
  }
  std::vector<double> out(index.size());
  auto xv = x.value();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= xv.size()) throw DimensionError("take: index out of range");
    out[i] = xv[index[i]];
  }
  Node* px = x.node();
  return detail::make_result("take", std::move(shape), std::move(out), {x},
                             [px, index = std::move(index)](const Node& self) {
                               for (std::size_t i = 0; i < index.size(); ++i) px->grad[index[i]] += self.grad[i];
                             });
}

std::vector<double> cholesky(std::span<const double> spd, std::size_t n) {
  std::vector<double> l(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = spd[j * n + j];
    for (std::size_t k = 0; k < j; ++k) diag -= l[j * n + k] * l[j * n + k];
    if (!(diag > 0.0)) throw DefinitenessError(j, diag);
    const double ljj = std::sqrt(diag);
    l[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = spd[i * n + j];
      for (std::size_t k = 0; k < j; ++k) v -= l[i * n + k] * l[j * n + k];
      l[i * n + j] = v / ljj;
    }
  }
  return l;
}

Tensor logdet_psd(const Tensor& m) {
  require_rank(m, 2, "logdet_psd");
  const std::size_t n = m.dim(0);
  if (m.dim(1) != n) throw DimensionError("logdet_psd: matrix " + to_string(m.shape()) + " is not square");
  auto mv = m.value();
  std::vector<double> sym(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) sym[i * n + j] = 0.5 * (mv[i * n + j] + mv[j * n + i]);
  std::vector<double> l = cholesky(sym, n);
  double logdet = 0.0;
  for (std::size_t i = 0; i < n; ++i) logdet += 2.0 * std::log(l[i * n + i]);
  Node* pm = m.node();
  return detail::make_result("logdet_psd", {1}, {logdet}, {m},
                             [pm, n, l = std::move(l)](const Node& self) {
                               // d logdet / dM = S^{-1} with S = L L^T.
                               const auto N = static_cast<Eigen::Index>(n);
                               ConstMap lower(l.data(), N, N);
                               RowMajor linv = lower.triangularView<Eigen::Lower>().solve(RowMajor::Identity(N, N));
                               RowMajor inv = linv.transpose() * linv;
                               Map(pm->grad.data(), N, N) += self.grad[0] * inv;
                             });
}

namespace {

struct ConvDims {
  std::size_t n, cin, h, w, cout, k, oh, ow;
};

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, std::size_t stride, std::size_t padding) {
  require_rank(input, 4, "conv2d");
  require_rank(weight, 4, "conv2d");
  if (weight.dim(1) != input.dim(1) || weight.dim(2) != weight.dim(3)) {
    throw DimensionError("conv2d: weight " + to_string(weight.shape()) + " incompatible with input " +
                         to_string(input.shape()));
  }
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  ConvDims d{input.dim(0), input.dim(1), input.dim(2), input.dim(3), weight.dim(0), weight.dim(2), 0, 0};
  if (d.h + 2 * padding < d.k || d.w + 2 * padding < d.k) {
    throw DimensionError("conv2d: kernel larger than padded input " + to_string(input.shape()));
  }
  d.oh = (d.h + 2 * padding - d.k) / stride + 1;
  d.ow = (d.w + 2 * padding - d.k) / stride + 1;
  std::vector<double> out(d.n * d.cout * d.oh * d.ow, 0.0);
  auto x = input.value();
  auto wv = weight.value();
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  // Visits every (output, input, weight) index triple that contributes.
  auto visit = [d, stride, pad](auto&& fn) {
    for (std::size_t n = 0; n < d.n; ++n)
      for (std::size_t o = 0; o < d.cout; ++o)
        for (std::size_t oy = 0; oy < d.oh; ++oy)
          for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const std::size_t oi = ((n * d.cout + o) * d.oh + oy) * d.ow + ox;
            for (std::size_t c = 0; c < d.cin; ++c)
              for (std::size_t ky = 0; ky < d.k; ++ky) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - pad;
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
                for (std::size_t kx = 0; kx < d.k; ++kx) {
                  const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - pad;
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) continue;
                  const std::size_t ii = ((n * d.cin + c) * d.h + static_cast<std::size_t>(iy)) * d.w +
                                         static_cast<std::size_t>(ix);
                  const std::size_t wi = ((o * d.cin + c) * d.k + ky) * d.k + kx;
                  fn(oi, ii, wi);
                }
              }
          }
  };
  visit([&](std::size_t oi, std::size_t ii, std::size_t wi) { out[oi] += x[ii] * wv[wi]; });
  Node* px = input.node();
  Node* pw = weight.node();
  return detail::make_result("conv2d", {d.n, d.cout, d.oh, d.ow}, std::move(out), {input, weight},
                             [px, pw, visit](const Node& self) {
                               visit([&](std::size_t oi, std::size_t ii, std::size_t wi) {
                                 const double g = self.grad[oi];
                                 if (px->requires_grad) px->grad[ii] += g * pw->value[wi];
                                 if (pw->requires_grad) pw->grad[wi] += g * px->value[ii];
                               });
                             });
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, std::size_t stride,
                        std::size_t padding) {
  require_rank(input, 4, "conv_transpose2d");
  require_rank(weight, 4, "conv_transpose2d");
  if (weight.dim(0) != input.dim(1) || weight.dim(2) != weight.dim(3)) {
    throw DimensionError("conv_transpose2d: weight " + to_string(weight.shape()) +
                         " incompatible with input " + to_string(input.shape()));
  }
  if (stride == 0) throw DimensionError("conv_transpose2d: stride must be positive");
  ConvDims d{input.dim(0), input.dim(1), input.dim(2), input.dim(3), weight.dim(1), weight.dim(2), 0, 0};
  const std::size_t full_h = (d.h - 1) * stride + d.k;
  const std::size_t full_w = (d.w - 1) * stride + d.k;
  if (full_h <= 2 * padding || full_w <= 2 * padding) {
    throw DimensionError("conv_transpose2d: padding removes the whole output");
  }
  d.oh = full_h - 2 * padding;
  d.ow = full_w - 2 * padding;
  std::vector<double> out(d.n * d.cout * d.oh * d.ow, 0.0);
  auto x = input.value();
  auto wv = weight.value();
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  auto visit = [d, stride, pad](auto&& fn) {
    for (std::size_t n = 0; n < d.n; ++n)
      for (std::size_t c = 0; c < d.cin; ++c)
        for (std::size_t iy = 0; iy < d.h; ++iy)
          for (std::size_t ix = 0; ix < d.w; ++ix) {
            const std::size_t ii = ((n * d.cin + c) * d.h + iy) * d.w + ix;
            for (std::size_t o = 0; o < d.cout; ++o)
              for (std::size_t ky = 0; ky < d.k; ++ky) {
                const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(iy * stride + ky) - pad;
                if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(d.oh)) continue;
                for (std::size_t kx = 0; kx < d.k; ++kx) {
                  const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(ix * stride + kx) - pad;
                  if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(d.ow)) continue;
                  const std::size_t oi = ((n * d.cout + o) * d.oh + static_cast<std::size_t>(oy)) * d.ow +
                                         static_cast<std::size_t>(ox);
                  const std::size_t wi = ((c * d.cout + o) * d.k + ky) * d.k + kx;
                  fn(oi, ii, wi);
                }
              }
          }
  };
  visit([&](std::size_t oi, std::size_t ii, std::size_t wi) { out[oi] += x[ii] * wv[wi]; });
  Node* px = input.node();
  Node* pw = weight.node();
  return detail::make_result("conv_transpose2d", {d.n, d.cout, d.oh, d.ow}, std::move(out),
                             {input, weight}, [px, pw, visit](const Node& self) {
                               visit([&](std::size_t oi, std::size_t ii, std::size_t wi) {
                                 const double g = self.grad[oi];
                                 if (px->requires_grad) px->grad[ii] += g * pw->value[wi];
                                 if (pw->requires_grad) pw->grad[wi] += g * px->value[ii];
                               });
                             });
}

Tensor standardize(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                   const FeatureStats* frozen, FeatureStats* batch_stats) {
  std::size_t features = 0, spatial = 1, batch = 0;
  if (x.rank() == 2) {
    batch = x.dim(0);
    features = x.dim(1);
  } else if (x.rank() == 4) {
    batch = x.dim(0);
    features = x.dim(1);
    spatial = x.dim(2) * x.dim(3);
  } else {
    throw DimensionError("standardize: expected rank 2 or 4, got " + to_string(x.shape()));
  }
  if (gamma.size() != features || beta.size() != features) {
    throw DimensionError("standardize: scale/shift must have " + std::to_string(features) + " entries");
  }
  // Element (b, f, s) lives at ((b * features + f) * spatial + s).
  const std::size_t group = batch * spatial;
  auto xv = x.value();
  std::vector<double> mu(features, 0.0), var(features, 0.0);
  if (frozen) {
    if (frozen->mean.size() != features || frozen->var.size() != features) {
      throw DimensionError("standardize: frozen statistics have wrong length");
    }
    mu = frozen->mean;
    var = frozen->var;
  } else {
    if (group < 2) throw DimensionError("standardize: batch statistics need at least two samples");
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t f = 0; f < features; ++f)
        for (std::size_t s = 0; s < spatial; ++s) mu[f] += xv[(b * features + f) * spatial + s];
    for (auto& m : mu) m /= static_cast<double>(group);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t f = 0; f < features; ++f)
        for (std::size_t s = 0; s < spatial; ++s) {
          const double dv = xv[(b * features + f) * spatial + s] - mu[f];
          var[f] += dv * dv;
        }
    for (auto& v : var) v /= static_cast<double>(group);
    if (batch_stats) *batch_stats = FeatureStats{mu, var};
  }
  std::vector<double> inv_std(features);
  for (std::size_t f = 0; f < features; ++f) inv_std[f] = 1.0 / std::sqrt(var[f] + eps);
  std::vector<double> xhat(x.size()), out(x.size());
  auto gv = gamma.value();
  auto bv = beta.value();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t f = 0; f < features; ++f)
      for (std::size_t s = 0; s < spatial; ++s) {
        const std::size_t i = (b * features + f) * spatial + s;
        xhat[i] = (xv[i] - mu[f]) * inv_std[f];
        out[i] = gv[f] * xhat[i] + bv[f];
      }
  Node* px = x.node();
  Node* pg = gamma.node();
  Node* pb = beta.node();
  const bool use_batch = frozen == nullptr;
  return detail::make_result(
      "standardize", x.shape(), std::move(out), {x, gamma, beta},
      [px, pg, pb, xhat = std::move(xhat), inv_std = std::move(inv_std), batch, features, spatial,
       group, use_batch](const Node& self) {
        std::vector<double> sum_g(features, 0.0), sum_gx(features, 0.0);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t f = 0; f < features; ++f)
            for (std::size_t s = 0; s < spatial; ++s) {
              const std::size_t i = (b * features + f) * spatial + s;
              sum_g[f] += self.grad[i];
              sum_gx[f] += self.grad[i] * xhat[i];
            }
        if (pg->requires_grad)
          for (std::size_t f = 0; f < features; ++f) pg->grad[f] += sum_gx[f];
        if (pb->requires_grad)
          for (std::size_t f = 0; f < features; ++f) pb->grad[f] += sum_g[f];
        if (!px->requires_grad) return;
        const double m = static_cast<double>(group);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t f = 0; f < features; ++f) {
            const double g = pg->value[f];
            for (std::size_t s = 0; s < spatial; ++s) {
              const std::size_t i = (b * features + f) * spatial + s;
              if (use_batch) {
                // Batch statistics depend on x: standard normalization adjoint.
                px->grad[i] += g * inv_std[f] *
                               (self.grad[i] - sum_g[f] / m - xhat[i] * sum_gx[f] / m);
              } else {
                px->grad[i] += g * inv_std[f] * self.grad[i];
              }
            }
          }
      });
}

}  // namespace jscc::ad
