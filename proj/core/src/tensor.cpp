#include "semkit/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace semkit {

namespace {

bool g_corrupt_matmul = false;

using NodePtr = std::shared_ptr<TensorNode>;

NodePtr make_node(Shape shape, std::vector<double> value) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  return n;
}

Tensor make_op(Shape shape, std::vector<double> value,
               std::vector<NodePtr> parents,
               std::function<void(TensorNode&)> bw) {
  auto n = make_node(std::move(shape), std::move(value));
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  if (rg) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(bw);
  }
  return Tensor(n);
}

using EMat = Eigen::Map<
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using CEMat = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic,
                                             Eigen::Dynamic, Eigen::RowMajor>>;

[[noreturn]] void shape_error(const std::string& op, const Shape& a,
                              const Shape& b) {
  throw std::invalid_argument(op + ": incompatible shapes " + shape_str(a) +
                              " and " + shape_str(b));
}

// b broadcasts against a when shapes match or b's shape is a suffix of a's
bool suffix_broadcast(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return false;
  for (size_t i = 0; i < b.size(); ++i)
    if (b[b.size() - 1 - i] != a[a.size() - 1 - i]) return false;
  return true;
}

struct AxisIter {
  int64_t outer, n, inner;
};

AxisIter axis_iter(const Shape& s, int axis) {
  if (axis < 0) axis += static_cast<int>(s.size());
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw std::invalid_argument("axis " + std::to_string(axis) +
                                " out of range for " + shape_str(s));
  AxisIter it{1, s[axis], 1};
  for (int i = 0; i < axis; ++i) it.outer *= s[i];
  for (size_t i = axis + 1; i < s.size(); ++i) it.inner *= s[i];
  return it;
}

}  // namespace

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

void set_corrupt_matmul_backward(bool on) { g_corrupt_matmul = on; }

Tensor Tensor::zeros(const Shape& s) {
  return Tensor(make_node(s, std::vector<double>(shape_numel(s), 0.0)));
}

Tensor Tensor::full(const Shape& s, double v) {
  return Tensor(make_node(s, std::vector<double>(shape_numel(s), v)));
}

Tensor Tensor::from(const Shape& s, std::vector<double> data) {
  if (static_cast<int64_t>(data.size()) != shape_numel(s))
    throw std::invalid_argument("Tensor::from: data size " +
                                std::to_string(data.size()) +
                                " does not match shape " + shape_str(s));
  return Tensor(make_node(s, std::move(data)));
}

Tensor Tensor::leaf(const Shape& s, std::vector<double> data) {
  Tensor t = from(s, std::move(data));
  t.node()->requires_grad = true;
  return t;
}

int64_t Tensor::dim(int i) const {
  if (i < 0) i += rank();
  return node_->shape[i];
}

double Tensor::item() const {
  if (numel() != 1)
    throw std::invalid_argument("item(): tensor has " +
                                std::to_string(numel()) + " elements");
  return node_->value[0];
}

Tensor Tensor::detach() const {
  return Tensor(make_node(node_->shape, node_->value));
}

void Tensor::backward() const {
  if (numel() != 1)
    throw std::invalid_argument("backward() requires a scalar loss");
  // topological order by iterative DFS
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  struct Frame {
    TensorNode* n;
    size_t next;
  };
  std::vector<Frame> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      TensorNode* p = f.n->parents[f.next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }
  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------- arithmetic

namespace {

template <class FwdOp, class BwdA, class BwdB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, FwdOp f,
                 BwdA ga, BwdB gb) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (!suffix_broadcast(sa, sb)) shape_error(name, sa, sb);
  const int64_t n = a.numel();
  const int64_t nb = b.numel() == 0 ? 1 : b.numel();
  std::vector<double> out(n);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int64_t i = 0; i < n; ++i) out[i] = f(av[i], bv[i % nb]);
  auto an = a.node();
  auto bn = b.node();
  return make_op(sa, std::move(out), {an, bn},
                 [an, bn, n, nb, ga, gb](TensorNode& self) {
                   const auto& g = self.grad;
                   if (an->requires_grad) {
                     an->ensure_grad();
                     for (int64_t i = 0; i < n; ++i)
                       an->grad[i] +=
                           g[i] * ga(an->value[i], bn->value[i % nb]);
                   }
                   if (bn->requires_grad) {
                     bn->ensure_grad();
                     for (int64_t i = 0; i < n; ++i)
                       bn->grad[i % nb] +=
                           g[i] * gb(an->value[i], bn->value[i % nb]);
                   }
                 });
}

template <class FwdOp, class Deriv>
Tensor unary_op(const Tensor& a, FwdOp f, Deriv d) {
  const int64_t n = a.numel();
  std::vector<double> out(n);
  const auto& av = a.values();
  for (int64_t i = 0; i < n; ++i) out[i] = f(av[i]);
  auto an = a.node();
  return make_op(a.shape(), std::move(out), {an}, [an, n, d](TensorNode& self) {
    an->ensure_grad();
    for (int64_t i = 0; i < n; ++i)
      an->grad[i] += self.grad[i] * d(an->value[i], self.value[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor add_scalar(const Tensor& a, double c) {
  return unary_op(
      a, [c](double x) { return x + c; },
      [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double c) {
  return unary_op(
      a, [c](double x) { return x * c; },
      [c](double, double) { return c; });
}

Tensor sin_t(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::sin(x); },
      [](double x, double) { return std::cos(x); });
}

Tensor cos_t(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::cos(x); },
      [](double x, double) { return -std::sin(x); });
}

Tensor exp_t(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log_t(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor sqrt_t(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor abs_t(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor tanh_t(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  return unary_op(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
        return cdf + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor copysign_by(const Tensor& a, const Tensor& ref) {
  if (ref.numel() != 1 && ref.numel() != a.numel())
    shape_error("copysign_by", a.shape(), ref.shape());
  const int64_t n = a.numel();
  const int64_t nr = ref.numel();
  std::vector<double> out(n);
  std::vector<double> sgn(n);
  for (int64_t i = 0; i < n; ++i) {
    sgn[i] = ref.values()[i % nr] < 0 ? -1.0 : 1.0;
    out[i] = a.values()[i] * sgn[i];
  }
  auto an = a.node();
  return make_op(a.shape(), std::move(out), {an},
                 [an, n, sgn = std::move(sgn)](TensorNode& self) {
                   an->ensure_grad();
                   for (int64_t i = 0; i < n; ++i)
                     an->grad[i] += self.grad[i] * sgn[i];
                 });
}

// ----------------------------------------------------------------- structure

Tensor reshape(const Tensor& a, const Shape& s) {
  if (shape_numel(s) != a.numel()) shape_error("reshape", a.shape(), s);
  auto an = a.node();
  return make_op(s, a.values(), {an}, [an](TensorNode& self) {
    an->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      an->grad[i] += self.grad[i];
  });
}

Tensor transpose2d(const Tensor& a) {
  if (a.rank() < 2) throw std::invalid_argument("transpose2d: rank < 2");
  Shape s = a.shape();
  const int64_t m = s[s.size() - 2], n = s[s.size() - 1];
  std::swap(s[s.size() - 2], s[s.size() - 1]);
  const int64_t batch = a.numel() / (m * n);
  std::vector<double> out(a.numel());
  const auto& av = a.values();
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j)
        out[b * m * n + j * m + i] = av[b * m * n + i * n + j];
  auto an = a.node();
  return make_op(s, std::move(out), {an}, [an, batch, m, n](TensorNode& self) {
    an->ensure_grad();
    for (int64_t b = 0; b < batch; ++b)
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j)
          an->grad[b * m * n + i * n + j] += self.grad[b * m * n + j * m + i];
  });
}

Tensor slice(const Tensor& a, int axis, int64_t start, int64_t len) {
  const Shape& s = a.shape();
  AxisIter it = axis_iter(s, axis);
  if (axis < 0) axis += a.rank();
  if (start < 0 || start + len > s[axis])
    throw std::invalid_argument("slice: range out of bounds");
  Shape os = s;
  os[axis] = len;
  std::vector<double> out(shape_numel(os));
  const auto& av = a.values();
  for (int64_t o = 0; o < it.outer; ++o)
    for (int64_t k = 0; k < len; ++k)
      std::copy_n(&av[(o * it.n + start + k) * it.inner], it.inner,
                  &out[(o * len + k) * it.inner]);
  auto an = a.node();
  return make_op(os, std::move(out), {an},
                 [an, it, start, len](TensorNode& self) {
                   an->ensure_grad();
                   for (int64_t o = 0; o < it.outer; ++o)
                     for (int64_t k = 0; k < len; ++k)
                       for (int64_t i = 0; i < it.inner; ++i)
                         an->grad[(o * it.n + start + k) * it.inner + i] +=
                             self.grad[(o * len + k) * it.inner + i];
                 });
}

Tensor stride_slice(const Tensor& a, int axis, int64_t start, int64_t stride) {
  const Shape& s = a.shape();
  AxisIter it = axis_iter(s, axis);
  if (axis < 0) axis += a.rank();
  const int64_t len = (s[axis] - start + stride - 1) / stride;
  Shape os = s;
  os[axis] = len;
  std::vector<double> out(shape_numel(os));
  const auto& av = a.values();
  for (int64_t o = 0; o < it.outer; ++o)
    for (int64_t k = 0; k < len; ++k)
      std::copy_n(&av[(o * it.n + start + k * stride) * it.inner], it.inner,
                  &out[(o * len + k) * it.inner]);
  auto an = a.node();
  return make_op(os, std::move(out), {an},
                 [an, it, start, stride, len](TensorNode& self) {
                   an->ensure_grad();
                   for (int64_t o = 0; o < it.outer; ++o)
                     for (int64_t k = 0; k < len; ++k)
                       for (int64_t i = 0; i < it.inner; ++i)
                         an->grad[(o * it.n + start + k * stride) * it.inner +
                                  i] += self.grad[(o * len + k) * it.inner + i];
                 });
}

Tensor concat(int axis, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Shape s = parts[0].shape();
  if (axis < 0) axis += static_cast<int>(s.size());
  int64_t total = 0;
  for (const auto& p : parts) {
    const Shape& ps = p.shape();
    if (ps.size() != s.size()) shape_error("concat", s, ps);
    for (size_t i = 0; i < s.size(); ++i)
      if (static_cast<int>(i) != axis && ps[i] != s[i])
        shape_error("concat", s, ps);
    total += ps[axis];
  }
  Shape os = s;
  os[axis] = total;
  AxisIter it = axis_iter(os, axis);
  std::vector<double> out(shape_numel(os));
  std::vector<NodePtr> nodes;
  std::vector<int64_t> offsets;
  int64_t off = 0;
  for (const auto& p : parts) {
    const int64_t pn = p.shape()[axis];
    const auto& pv = p.values();
    for (int64_t o = 0; o < it.outer; ++o)
      std::copy_n(&pv[o * pn * it.inner], pn * it.inner,
                  &out[(o * total + off) * it.inner]);
    nodes.push_back(p.node());
    offsets.push_back(off);
    off += pn;
  }
  auto parent_nodes = nodes;
  return make_op(
      os, std::move(out), std::move(parent_nodes),
      [nodes, offsets, it, total](TensorNode& self) {
        for (size_t pi = 0; pi < nodes.size(); ++pi) {
          auto& p = nodes[pi];
          if (!p->requires_grad) continue;
          p->ensure_grad();
          const int64_t pext =
              (pi + 1 < offsets.size() ? offsets[pi + 1] : total) -
              offsets[pi];
          for (int64_t o = 0; o < it.outer; ++o)
            for (int64_t i = 0; i < pext * it.inner; ++i)
              p->grad[o * pext * it.inner + i] +=
                  self.grad[(o * total + offsets[pi]) * it.inner + i];
        }
      });
}

// ---------------------------------------------------------------- reductions

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  auto an = a.node();
  return make_op({}, {s}, {an}, [an](TensorNode& self) {
    an->ensure_grad();
    const double g = self.grad[0];
    for (auto& v : an->grad) v += g;
  });
}

Tensor mean(const Tensor& a) {
  return mul_scalar(sum(a), 1.0 / static_cast<double>(a.numel()));
}

// ------------------------------------------------------------ linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) shape_error("matmul", sa, sb);
  const int64_t k = sa[sa.size() - 1];
  if (sb[sb.size() - 2] != k) shape_error("matmul", sa, sb);
  const int64_t n = sb[sb.size() - 1];
  const int64_t mk = sa[sa.size() - 2];

  int64_t batch = 1;
  bool batched_b = false;
  if (sb.size() == 2) {
    // collapse a's leading axes into rows
    batch = 1;
  } else {
    // identical leading batch axes required
    if (sa.size() != sb.size()) shape_error("matmul", sa, sb);
    for (size_t i = 0; i + 2 < sa.size(); ++i) {
      if (sa[i] != sb[i]) shape_error("matmul", sa, sb);
      batch *= sa[i];
    }
    batched_b = true;
  }
  const int64_t m = batched_b ? mk : a.numel() / k;
  Shape os;
  if (batched_b) {
    os = sa;
    os[os.size() - 1] = n;
  } else {
    os = sa;
    os[os.size() - 1] = n;
  }
  std::vector<double> out(shape_numel(os));
  {
    const double* ap = a.values().data();
    const double* bp = b.values().data();
    double* op = out.data();
    if (!batched_b) {
      CEMat A(ap, m, k);
      CEMat B(bp, k, n);
      EMat O(op, m, n);
      O.noalias() = A * B;
    } else {
      for (int64_t bi = 0; bi < batch; ++bi) {
        CEMat A(ap + bi * mk * k, mk, k);
        CEMat B(bp + bi * k * n, k, n);
        EMat O(op + bi * mk * n, mk, n);
        O.noalias() = A * B;
      }
    }
  }
  auto an = a.node();
  auto bn = b.node();
  return make_op(
      os, std::move(out), {an, bn},
      [an, bn, m, k, n, mk, batch, batched_b](TensorNode& self) {
        const double corrupt = g_corrupt_matmul ? 1.25 : 1.0;
        if (!batched_b) {
          CEMat G(self.grad.data(), m, n);
          if (an->requires_grad) {
            an->ensure_grad();
            CEMat B(bn->value.data(), k, n);
            EMat GA(an->grad.data(), m, k);
            GA.noalias() += corrupt * (G * B.transpose());
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            CEMat A(an->value.data(), m, k);
            EMat GB(bn->grad.data(), k, n);
            GB.noalias() += A.transpose() * G;
          }
        } else {
          for (int64_t bi = 0; bi < batch; ++bi) {
            CEMat G(self.grad.data() + bi * mk * n, mk, n);
            if (an->requires_grad) {
              an->ensure_grad();
              CEMat B(bn->value.data() + bi * k * n, k, n);
              EMat GA(an->grad.data() + bi * mk * k, mk, k);
              GA.noalias() += corrupt * (G * B.transpose());
            }
            if (bn->requires_grad) {
              bn->ensure_grad();
              CEMat A(an->value.data() + bi * mk * k, mk, k);
              EMat GB(bn->grad.data() + bi * k * n, k, n);
              GB.noalias() += A.transpose() * G;
            }
          }
        }
      });
}

Tensor softmax(const Tensor& a, int axis) {
  AxisIter it = axis_iter(a.shape(), axis);
  std::vector<double> out(a.numel());
  const auto& av = a.values();
  for (int64_t o = 0; o < it.outer; ++o)
    for (int64_t i = 0; i < it.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t j = 0; j < it.n; ++j)
        mx = std::max(mx, av[(o * it.n + j) * it.inner + i]);
      double z = 0.0;
      for (int64_t j = 0; j < it.n; ++j) {
        const double e = std::exp(av[(o * it.n + j) * it.inner + i] - mx);
        out[(o * it.n + j) * it.inner + i] = e;
        z += e;
      }
      for (int64_t j = 0; j < it.n; ++j)
        out[(o * it.n + j) * it.inner + i] /= z;
    }
  auto an = a.node();
  return make_op(a.shape(), std::move(out), {an}, [an, it](TensorNode& self) {
    an->ensure_grad();
    for (int64_t o = 0; o < it.outer; ++o)
      for (int64_t i = 0; i < it.inner; ++i) {
        double dot = 0.0;
        for (int64_t j = 0; j < it.n; ++j) {
          const int64_t idx = (o * it.n + j) * it.inner + i;
          dot += self.grad[idx] * self.value[idx];
        }
        for (int64_t j = 0; j < it.n; ++j) {
          const int64_t idx = (o * it.n + j) * it.inner + i;
          an->grad[idx] += self.value[idx] * (self.grad[idx] - dot);
        }
      }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const Shape& s = x.shape();
  const int64_t d = s.back();
  if (gain.numel() != d || bias.numel() != d)
    shape_error("layer_norm", s, gain.shape());
  const int64_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  for (int64_t r = 0; r < rows; ++r) {
    const double* xp = &xv[r * d];
    double mu = 0.0;
    for (int64_t i = 0; i < d; ++i) mu += xp[i];
    mu /= d;
    double var = 0.0;
    for (int64_t i = 0; i < d; ++i) var += (xp[i] - mu) * (xp[i] - mu);
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (int64_t i = 0; i < d; ++i) {
      const double h = (xp[i] - mu) * is;
      xhat[r * d + i] = h;
      out[r * d + i] = h * gv[i] + bv[i];
    }
  }
  auto xn = x.node();
  auto gn = gain.node();
  auto bn = bias.node();
  return make_op(
      s, std::move(out), {xn, gn, bn},
      [xn, gn, bn, rows, d, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](TensorNode& self) {
        for (int64_t r = 0; r < rows; ++r) {
          const double* g = &self.grad[r * d];
          const double* h = &xhat[r * d];
          if (gn->requires_grad) {
            gn->ensure_grad();
            for (int64_t i = 0; i < d; ++i) gn->grad[i] += g[i] * h[i];
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t i = 0; i < d; ++i) bn->grad[i] += g[i];
          }
          if (xn->requires_grad) {
            xn->ensure_grad();
            double sum_gg = 0.0, sum_ggh = 0.0;
            std::vector<double> gg(d);
            for (int64_t i = 0; i < d; ++i) {
              gg[i] = g[i] * gn->value[i];
              sum_gg += gg[i];
              sum_ggh += gg[i] * h[i];
            }
            for (int64_t i = 0; i < d; ++i)
              xn->grad[r * d + i] +=
                  inv_std[r] * (gg[i] - sum_gg / d - h[i] * sum_ggh / d);
          }
        }
      });
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, Pad pad) {
  if (x.rank() != 3 || w.rank() != 3) shape_error("conv1d", x.shape(), w.shape());
  const int64_t B = x.dim(0), Cin = x.dim(1), T = x.dim(2);
  const int64_t Cout = w.dim(0), kw = w.dim(2);
  if (w.dim(1) != Cin) shape_error("conv1d", x.shape(), w.shape());
  int64_t pad_l = 0, pad_r = 0;
  switch (pad) {
    case Pad::valid:
      break;
    case Pad::same:
      pad_l = (kw - 1) / 2;
      pad_r = kw - 1 - pad_l;
      break;
    case Pad::causal:
      pad_l = kw - 1;
      break;
  }
  const int64_t To = T + pad_l + pad_r - kw + 1;
  if (To <= 0)
    throw std::invalid_argument("conv1d: kernel " + std::to_string(kw) +
                                " too large for input length " +
                                std::to_string(T));
  std::vector<double> out(B * Cout * To, 0.0);
  const auto& xv = x.values();
  const auto& wv = w.values();
  for (int64_t bi = 0; bi < B; ++bi)
    for (int64_t co = 0; co < Cout; ++co)
      for (int64_t t = 0; t < To; ++t) {
        double acc = b.defined() ? b.values()[co] : 0.0;
        for (int64_t ci = 0; ci < Cin; ++ci)
          for (int64_t u = 0; u < kw; ++u) {
            const int64_t ti = t - pad_l + u;
            if (ti < 0 || ti >= T) continue;
            acc += xv[(bi * Cin + ci) * T + ti] * wv[(co * Cin + ci) * kw + u];
          }
        out[(bi * Cout + co) * To + t] = acc;
      }
  auto xn = x.node();
  auto wn = w.node();
  std::vector<NodePtr> parents{xn, wn};
  NodePtr bnode = b.defined() ? b.node() : nullptr;
  if (bnode) parents.push_back(bnode);
  return make_op(
      {B, Cout, To}, std::move(out), std::move(parents),
      [xn, wn, bnode, B, Cin, Cout, T, To, kw, pad_l](TensorNode& self) {
        if (xn->requires_grad) xn->ensure_grad();
        if (wn->requires_grad) wn->ensure_grad();
        if (bnode && bnode->requires_grad) bnode->ensure_grad();
        for (int64_t bi = 0; bi < B; ++bi)
          for (int64_t co = 0; co < Cout; ++co)
            for (int64_t t = 0; t < To; ++t) {
              const double g = self.grad[(bi * Cout + co) * To + t];
              if (g == 0.0) continue;
              if (bnode && bnode->requires_grad) bnode->grad[co] += g;
              for (int64_t ci = 0; ci < Cin; ++ci)
                for (int64_t u = 0; u < kw; ++u) {
                  const int64_t ti = t - pad_l + u;
                  if (ti < 0 || ti >= T) continue;
                  if (xn->requires_grad)
                    xn->grad[(bi * Cin + ci) * T + ti] +=
                        g * wn->value[(co * Cin + ci) * kw + u];
                  if (wn->requires_grad)
                    wn->grad[(co * Cin + ci) * kw + u] +=
                        g * xn->value[(bi * Cin + ci) * T + ti];
                }
            }
      });
}

Tensor upsample1d(const Tensor& x, int factor) {
  if (factor < 1) throw std::invalid_argument("upsample1d: factor < 1");
  const Shape& s = x.shape();
  const int64_t T = s.back();
  const int64_t rows = x.numel() / T;
  Shape os = s;
  os.back() = T * factor;
  std::vector<double> out(x.numel() * factor);
  const auto& xv = x.values();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t t = 0; t < T; ++t)
      for (int f = 0; f < factor; ++f)
        out[r * T * factor + t * factor + f] = xv[r * T + t];
  auto xn = x.node();
  return make_op(os, std::move(out), {xn},
                 [xn, rows, T, factor](TensorNode& self) {
                   xn->ensure_grad();
                   for (int64_t r = 0; r < rows; ++r)
                     for (int64_t t = 0; t < T; ++t)
                       for (int f = 0; f < factor; ++f)
                         xn->grad[r * T + t] +=
                             self.grad[r * T * factor + t * factor + f];
                 });
}

Tensor einsum_attention_bilinear(const Tensor& q, const Tensor& p,
                                 const Tensor& k) {
  if (q.rank() != 2 || k.rank() != 2 || p.rank() != 3)
    throw std::invalid_argument("einsum_attention_bilinear: expected q[N,d], p[N,N,d], k[N,d]");
  const int64_t N = q.dim(0), d = q.dim(1);
  if (k.dim(0) != N || k.dim(1) != d || p.dim(0) != N || p.dim(1) != N ||
      p.dim(2) != d)
    shape_error("einsum_attention_bilinear", q.shape(), p.shape());
  std::vector<double> out(N * N, 0.0);
  const auto& qv = q.values();
  const auto& pv = p.values();
  const auto& kv = k.values();
  for (int64_t i = 0; i < N; ++i)
    for (int64_t j = 0; j < N; ++j) {
      double acc = 0.0;
      for (int64_t c = 0; c < d; ++c)
        acc += qv[i * d + c] * pv[(i * N + j) * d + c] * kv[j * d + c];
      out[i * N + j] = acc;
    }
  auto qn = q.node();
  auto pn = p.node();
  auto kn = k.node();
  return make_op(
      {N, N}, std::move(out), {qn, pn, kn}, [qn, pn, kn, N, d](TensorNode& self) {
        if (qn->requires_grad) qn->ensure_grad();
        if (pn->requires_grad) pn->ensure_grad();
        if (kn->requires_grad) kn->ensure_grad();
        for (int64_t i = 0; i < N; ++i)
          for (int64_t j = 0; j < N; ++j) {
            const double g = self.grad[i * N + j];
            if (g == 0.0) continue;
            for (int64_t c = 0; c < d; ++c) {
              const double qv_ = qn->value[i * d + c];
              const double pv_ = pn->value[(i * N + j) * d + c];
              const double kv_ = kn->value[j * d + c];
              if (qn->requires_grad) qn->grad[i * d + c] += g * pv_ * kv_;
              if (pn->requires_grad)
                pn->grad[(i * N + j) * d + c] += g * qv_ * kv_;
              if (kn->requires_grad) kn->grad[j * d + c] += g * pv_ * qv_;
            }
          }
      });
}

Tensor cross_entropy_logits(const Tensor& logits,
                            const std::vector<int64_t>& targets,
                            const std::vector<uint8_t>& mask) {
  if (logits.rank() != 2)
    throw std::invalid_argument("cross_entropy_logits: expected [N,K]");
  const int64_t N = logits.dim(0), K = logits.dim(1);
  if (static_cast<int64_t>(targets.size()) != N ||
      static_cast<int64_t>(mask.size()) != N)
    throw std::invalid_argument("cross_entropy_logits: target/mask size mismatch");
  int64_t active = 0;
  for (auto m : mask) active += m ? 1 : 0;
  std::vector<double> probs(N * K);
  double loss = 0.0;
  const auto& lv = logits.values();
  for (int64_t r = 0; r < N; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t c = 0; c < K; ++c) mx = std::max(mx, lv[r * K + c]);
    double z = 0.0;
    for (int64_t c = 0; c < K; ++c) {
      probs[r * K + c] = std::exp(lv[r * K + c] - mx);
      z += probs[r * K + c];
    }
    for (int64_t c = 0; c < K; ++c) probs[r * K + c] /= z;
    if (mask[r]) {
      if (targets[r] < 0 || targets[r] >= K)
        throw std::invalid_argument("cross_entropy_logits: target out of range");
      loss -= std::log(std::max(probs[r * K + targets[r]], 1e-300));
    }
  }
  loss = active ? loss / active : 0.0;
  auto ln = logits.node();
  return make_op({}, {loss}, {ln},
                 [ln, N, K, targets, mask, active,
                  probs = std::move(probs)](TensorNode& self) {
                   if (!active) return;
                   ln->ensure_grad();
                   const double g = self.grad[0] / active;
                   for (int64_t r = 0; r < N; ++r) {
                     if (!mask[r]) continue;
                     for (int64_t c = 0; c < K; ++c)
                       ln->grad[r * K + c] +=
                           g * (probs[r * K + c] -
                                (c == targets[r] ? 1.0 : 0.0));
                   }
                 });
}

Tensor l1_loss(const Tensor& a, const Tensor& b) {
  return mean(abs_t(sub(a, b)));
}

}  // namespace semkit
