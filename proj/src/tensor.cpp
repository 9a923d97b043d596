#include "pt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "pt/errors.hpp"
#include "pt/simd/kernels.hpp"

namespace pt {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  double* grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad.data();
  }
};

}  // namespace detail

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

struct TensorAccess {
  static const NodePtr& node(const Tensor& t) {
    if (!t.node_) throw ContractError("operation on an undefined tensor");
    return t.node_;
  }
  static Tensor wrap(NodePtr n) { return Tensor(std::move(n)); }
};

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

thread_local bool g_grad_enabled = true;

const simd::KernelTable& K() { return simd::kernels(); }

const NodePtr& N(const Tensor& t) { return TensorAccess::node(t); }

Tensor make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  return TensorAccess::wrap(std::move(n));
}

// Result of a recorded operation. History is kept only when some input
// carries gradients.
Tensor make_op(Shape shape, std::vector<double> data, std::vector<NodePtr> parents,
               std::function<void(Node&)> rule) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  const bool needs = g_grad_enabled &&
                     std::any_of(parents.begin(), parents.end(),
                                 [](const NodePtr& p) { return p->requires_grad; });
  if (needs) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward = std::move(rule);
  }
  return TensorAccess::wrap(std::move(n));
}

void accumulate(Node& target, const double* g) {
  K().axpy(1.0, g, target.grad_buffer(), target.data.size());
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// Elementwise unary map with derivative expressed through (x, y).
template <class F, class D>
Tensor unary(const Tensor& a, F f, D dfdx) {
  const NodePtr& an = N(a);
  std::vector<double> out(an->data.size());
  std::transform(an->data.begin(), an->data.end(), out.begin(), f);
  return make_op(an->shape, std::move(out), {an}, [dfdx](Node& o) {
    Node& p = *o.parents[0];
    double* gp = p.grad_buffer();
    for (std::size_t i = 0; i < o.data.size(); ++i) gp[i] += o.grad[i] * dfdx(p.data[i], o.data[i]);
  });
}

std::vector<std::size_t> reduced_axis_layout(const Shape& shape, std::size_t axis,
                                             std::size_t& outer, std::size_t& len,
                                             std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  Shape reduced;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != axis) reduced.push_back(shape[i]);
  }
  return reduced;
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return make_leaf(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Tensor::matrix: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return make_leaf({r, c}, std::move(values), requires_grad);
}

Tensor Tensor::vector(std::initializer_list<double> values, bool requires_grad) {
  return make_leaf({values.size()}, std::vector<double>(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return make_leaf({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return N(*this)->shape; }
std::size_t Tensor::size() const { return N(*this)->data.size(); }

std::size_t Tensor::rows() const {
  require_rank(*this, 2, "rows");
  return shape()[0];
}

std::size_t Tensor::cols() const {
  require_rank(*this, 2, "cols");
  return shape()[1];
}

std::span<const double> Tensor::data() const { return N(*this)->data; }
std::span<double> Tensor::mutable_data() { return N(*this)->data; }

bool Tensor::has_grad() const { return !N(*this)->grad.empty(); }
std::span<const double> Tensor::grad() const { return N(*this)->grad; }

void Tensor::zero_grad() {
  auto& g = N(*this)->grad;
  std::fill(g.begin(), g.end(), 0.0);
}

bool Tensor::requires_grad() const { return N(*this)->requires_grad; }
void Tensor::set_requires_grad(bool value) { N(*this)->requires_grad = value; }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return N(*this)->data[0];
}

double Tensor::at(std::size_t i) const { return N(*this)->data.at(i); }

double Tensor::at(std::size_t r, std::size_t c) const {
  require_rank(*this, 2, "at");
  if (r >= shape()[0] || c >= shape()[1]) throw std::out_of_range("Tensor::at");
  return N(*this)->data[r * shape()[1] + c];
}

Tensor Tensor::detach() const { return make_leaf(shape(), N(*this)->data, false); }

Tensor Tensor::clone() const { return make_leaf(shape(), N(*this)->data, requires_grad()); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---- tape -----------------------------------------------------------------

namespace {

std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  if (!root->requires_grad) return order;
  std::unordered_set<Node*> visited;
  // Iterative post-order DFS: (node, next parent index).
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

Tape record_tape(const Tensor& loss) {
  Tape tape;
  for (Node* n : topo_order(N(loss).get())) tape.nodes.push_back(n);
  return tape;
}

void backward(const Tensor& loss) {
  const NodePtr& root = N(loss);
  if (root->data.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_str(root->shape));
  }
  const std::vector<Node*> order = topo_order(root.get());
  if (order.empty()) return;
  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  K().gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_op({m, n}, std::move(out), {N(a), N(b)}, [m, k, n](Node& o) {
    Node& pa = *o.parents[0];
    Node& pb = *o.parents[1];
    if (pa.requires_grad) K().gemm_nt(o.grad.data(), pb.data.data(), pa.grad_buffer(), m, n, k);
    if (pb.requires_grad) K().gemm_tn(pa.data.data(), o.grad.data(), pb.grad_buffer(), k, m, n);
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  const auto src = a.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = src[i * n + j];
  return make_op({n, m}, std::move(out), {N(a)}, [m, n](Node& o) {
    double* gp = o.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gp[i * n + j] += o.grad[j * m + i];
  });
}

// ---- elementwise binary ---------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  K().add(a.data().data(), b.data().data(), out.data(), out.size());
  return make_op(a.shape(), std::move(out), {N(a), N(b)}, [](Node& o) {
    for (auto& p : o.parents)
      if (p->requires_grad) accumulate(*p, o.grad.data());
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  K().sub(a.data().data(), b.data().data(), out.data(), out.size());
  return make_op(a.shape(), std::move(out), {N(a), N(b)}, [](Node& o) {
    Node& pa = *o.parents[0];
    Node& pb = *o.parents[1];
    if (pa.requires_grad) accumulate(pa, o.grad.data());
    if (pb.requires_grad) K().axpy(-1.0, o.grad.data(), pb.grad_buffer(), o.grad.size());
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  K().mul(a.data().data(), b.data().data(), out.data(), out.size());
  return make_op(a.shape(), std::move(out), {N(a), N(b)}, [](Node& o) {
    Node& pa = *o.parents[0];
    Node& pb = *o.parents[1];
    const std::size_t n = o.grad.size();
    std::vector<double> tmp(n);
    if (pa.requires_grad) {
      K().mul(o.grad.data(), pb.data.data(), tmp.data(), n);
      accumulate(pa, tmp.data());
    }
    if (pb.requires_grad) {
      K().mul(o.grad.data(), pa.data.data(), tmp.data(), n);
      accumulate(pb, tmp.data());
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  const auto x = a.data();
  const auto y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / y[i];
  return make_op(a.shape(), std::move(out), {N(a), N(b)}, [](Node& o) {
    Node& pa = *o.parents[0];
    Node& pb = *o.parents[1];
    if (pa.requires_grad) {
      double* g = pa.grad_buffer();
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] += o.grad[i] / pb.data[i];
    }
    if (pb.requires_grad) {
      double* g = pb.grad_buffer();
      for (std::size_t i = 0; i < o.grad.size(); ++i) g[i] -= o.grad[i] * o.data[i] / pb.data[i];
    }
  });
}

Tensor add_row(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.shape().empty() ? 1 : a.shape().back();
  if (a.rank() < 1 || b.size() != n || b.rank() > 2 || (b.rank() == 2 && b.shape()[0] != 1)) {
    throw DimensionError("add_row: cannot broadcast " + shape_str(b.shape()) + " over rows of " +
                         shape_str(a.shape()));
  }
  const std::size_t m = a.size() / n;
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < m; ++i) K().add(out.data() + i * n, b.data().data(), out.data() + i * n, n);
  return make_op(a.shape(), std::move(out), {N(a), N(b)}, [m, n](Node& o) {
    Node& pa = *o.parents[0];
    Node& pb = *o.parents[1];
    if (pa.requires_grad) accumulate(pa, o.grad.data());
    if (pb.requires_grad) {
      double* g = pb.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) K().add(g, o.grad.data() + i * n, g, n);
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

// ---- elementwise unary ----------------------------------------------------

Tensor sqrt(const Tensor& a) {
  return unary(
      a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Tensor clamp_min(const Tensor& a, double floor) {
  return unary(
      a, [floor](double x) { return x > floor ? x : floor; },
      [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor sin(const Tensor& a) {
  return unary(
      a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor elu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
      [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor sign_const(const Tensor& a) {
  std::vector<double> out(a.size());
  std::transform(a.data().begin(), a.data().end(), out.begin(),
                 [](double x) { return x >= 0.0 ? 1.0 : -1.0; });
  return make_leaf(a.shape(), std::move(out), false);
}

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& a) {
  const double s = K().sum(a.data().data(), a.size());
  return make_op({}, {s}, {N(a)}, [](Node& o) {
    Node& p = *o.parents[0];
    double* g = p.grad_buffer();
    for (std::size_t i = 0; i < p.data.size(); ++i) g[i] += o.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ContractError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor sum(const Tensor& a, std::size_t axis) {
  if (a.rank() < 1 || a.rank() > 2 || axis >= a.rank()) {
    throw DimensionError("sum: axis " + std::to_string(axis) + " invalid for shape " +
                         shape_str(a.shape()));
  }
  std::size_t outer, len, inner;
  Shape reduced = reduced_axis_layout(a.shape(), axis, outer, len, inner);
  const auto x = a.data();
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += x[(o * len + l) * inner + i];
  return make_op(std::move(reduced), std::move(out), {N(a)}, [outer, len, inner](Node& o) {
    double* g = o.parents[0]->grad_buffer();
    for (std::size_t a0 = 0; a0 < outer; ++a0)
      for (std::size_t l = 0; l < len; ++l)
        for (std::size_t i = 0; i < inner; ++i)
          g[(a0 * len + l) * inner + i] += o.grad[a0 * inner + i];
  });
}

Tensor mean(const Tensor& a, std::size_t axis) {
  const Tensor s = sum(a, axis);
  return scale(s, 1.0 / static_cast<double>(a.shape()[axis]));
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                         shape_str(a.shape()));
  }
  std::size_t outer, len, inner;
  reduced_axis_layout(a.shape(), axis, outer, len, inner);
  const auto x = a.data();
  std::vector<double> y(x.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      double mx = x[base];
      for (std::size_t l = 1; l < len; ++l) mx = std::max(mx, x[base + l * inner]);
      double total = 0.0;
      for (std::size_t l = 0; l < len; ++l) {
        const double e = std::exp(x[base + l * inner] - mx);
        y[base + l * inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < len; ++l) y[base + l * inner] /= total;
    }
  }
  return make_op(a.shape(), std::move(y), {N(a)}, [outer, len, inner](Node& o) {
    double* g = o.parents[0]->grad_buffer();
    for (std::size_t a0 = 0; a0 < outer; ++a0) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = a0 * len * inner + i;
        double dotgy = 0.0;
        for (std::size_t l = 0; l < len; ++l)
          dotgy += o.grad[base + l * inner] * o.data[base + l * inner];
        for (std::size_t l = 0; l < len; ++l) {
          const std::size_t idx = base + l * inner;
          g[idx] += o.data[idx] * (o.grad[idx] - dotgy);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() < 1) throw DimensionError("layer_norm: rank-0 input");
  const std::size_t d = x.shape().back();
  if (gain.size() != d || bias.size() != d) {
    throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                         shape_str(bias.shape()) + " do not match last axis of " +
                         shape_str(x.shape()));
  }
  const std::size_t rows = x.size() / d;
  const auto xs = x.data();
  const auto gs = gain.data();
  const auto bs = bias.data();
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xs.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * inv;
      xhat[r * d + j] = h;
      out[r * d + j] = h * gs[j] + bs[j];
    }
  }
  return make_op(x.shape(), std::move(out), {N(x), N(gain), N(bias)},
                 [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& o) {
                   Node& px = *o.parents[0];
                   Node& pg = *o.parents[1];
                   Node& pb = *o.parents[2];
                   if (pg.requires_grad) {
                     double* g = pg.grad_buffer();
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t j = 0; j < d; ++j)
                         g[j] += o.grad[r * d + j] * xhat[r * d + j];
                   }
                   if (pb.requires_grad) {
                     double* g = pb.grad_buffer();
                     for (std::size_t r = 0; r < rows; ++r) K().add(g, o.grad.data() + r * d, g, d);
                   }
                   if (px.requires_grad) {
                     double* g = px.grad_buffer();
                     std::vector<double> dh(d);
                     for (std::size_t r = 0; r < rows; ++r) {
                       double mean_dh = 0.0, mean_dh_h = 0.0;
                       for (std::size_t j = 0; j < d; ++j) {
                         dh[j] = o.grad[r * d + j] * pg.data[j];
                         mean_dh += dh[j];
                         mean_dh_h += dh[j] * xhat[r * d + j];
                       }
                       mean_dh /= static_cast<double>(d);
                       mean_dh_h /= static_cast<double>(d);
                       for (std::size_t j = 0; j < d; ++j) {
                         g[r * d + j] +=
                             inv_std[r] * (dh[j] - mean_dh - xhat[r * d + j] * mean_dh_h);
                       }
                     }
                   }
                 });
}

// ---- structural -----------------------------------------------------------

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " invalid for shape " +
                         shape_str(first));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> chunk;  // contiguous elements per outer index, per part
  std::vector<NodePtr> parents;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) {
      throw DimensionError("concat: shape " + shape_str(s) + " incompatible with " +
                           shape_str(first) + " along axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
    chunk.push_back(s[axis] * inner);
    parents.push_back(N(p));
  }
  const std::size_t row = out_shape[axis] * inner;
  std::vector<double> out(outer * row);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(src.data() + o * chunk[k], chunk[k], out.data() + o * row + offset);
    offset += chunk[k];
  }
  return make_op(std::move(out_shape), std::move(out), std::move(parents),
                 [outer, row, chunk = std::move(chunk)](Node& o) {
                   std::size_t off = 0;
                   for (std::size_t k = 0; k < o.parents.size(); ++k) {
                     Node& p = *o.parents[k];
                     if (p.requires_grad) {
                       double* g = p.grad_buffer();
                       for (std::size_t a0 = 0; a0 < outer; ++a0)
                         K().add(g + a0 * chunk[k], o.grad.data() + a0 * row + off,
                                 g + a0 * chunk[k], chunk[k]);
                     }
                     off += chunk[k];
                   }
                 });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  if (a.rank() < 1 || begin > end || end > a.shape()[0]) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for shape " + shape_str(a.shape()));
  }
  const std::size_t width = a.size() / a.shape()[0];
  Shape s = a.shape();
  s[0] = end - begin;
  std::vector<double> out(a.data().begin() + begin * width, a.data().begin() + end * width);
  return make_op(std::move(s), std::move(out), {N(a)}, [begin, width](Node& o) {
    double* g = o.parents[0]->grad_buffer() + begin * width;
    K().add(g, o.grad.data(), g, o.grad.size());
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank(a, 2, "slice_cols");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (begin > end || end > n) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for shape " + shape_str(a.shape()));
  }
  const std::size_t w = end - begin;
  const auto x = a.data();
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i) std::copy_n(x.data() + i * n + begin, w, out.data() + i * w);
  return make_op({m, w}, std::move(out), {N(a)}, [m, n, w, begin](Node& o) {
    double* g = o.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      K().add(g + i * n + begin, o.grad.data() + i * w, g + i * n + begin, w);
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_op(std::move(shape), std::move(out), {N(a)},
                 [](Node& o) { accumulate(*o.parents[0], o.grad.data()); });
}

Tensor dropout(const Tensor& a, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return a;
  if (rate >= 1.0) throw ContractError("dropout: rate must be below 1");
  std::bernoulli_distribution keep(1.0 - rate);
  const double factor = 1.0 / (1.0 - rate);
  std::vector<double> mask(a.size());
  for (double& m : mask) m = keep(rng) ? factor : 0.0;
  return mul(a, Tensor::from(a.shape(), std::move(mask)));
}

}  // namespace pt
