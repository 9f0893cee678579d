#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace semkit {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// One node of the reverse-mode tape. Tensors are thin handles onto nodes;
// the graph is held alive by parent pointers captured in backward closures.
struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // lazily allocated
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

  static Tensor zeros(const Shape& s);
  static Tensor full(const Shape& s, double v);
  static Tensor from(const Shape& s, std::vector<double> data);
  static Tensor scalar(double v) { return from({}, {v}); }
  // leaf with requires_grad set (a trainable parameter or gradcheck input)
  static Tensor leaf(const Shape& s, std::vector<double> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return node_->numel(); }
  int64_t dim(int i) const;
  int rank() const { return static_cast<int>(node_->shape.size()); }
  bool requires_grad() const { return node_->requires_grad; }

  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }
  std::vector<double>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  double item() const;

  std::shared_ptr<TensorNode> node() const { return node_; }

  // Runs reverse-mode accumulation from this scalar.
  void backward() const;
  void zero_grad() const { node_->grad.clear(); }

  Tensor detach() const;

 private:
  std::shared_ptr<TensorNode> node_;
};

// ---- elementwise / arithmetic ----
// add/sub/mul/div accept equal shapes, or b's shape a suffix of a's shape
// (broadcast over a's leading axes), or scalar b.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

Tensor sin_t(const Tensor& a);
Tensor cos_t(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor sqrt_t(const Tensor& a);
Tensor abs_t(const Tensor& a);
Tensor tanh_t(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
// multiplies by sign(ref value), sign treated as locally constant
Tensor copysign_by(const Tensor& a, const Tensor& ref);

// ---- structure ----
Tensor reshape(const Tensor& a, const Shape& s);
Tensor transpose2d(const Tensor& a);  // swaps the last two axes
Tensor slice(const Tensor& a, int axis, int64_t start, int64_t len);
Tensor stride_slice(const Tensor& a, int axis, int64_t start, int64_t stride);
Tensor concat(int axis, const std::vector<Tensor>& parts);

// ---- reductions ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// ---- linear algebra / nn primitives ----
// a: [..., m, k] with b: [k, n] (leading axes collapsed), or both share
// identical leading batch axes.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax(const Tensor& a, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

enum class Pad { valid, same, causal };
// x: [B, C_in, T], w: [C_out, C_in, k], b: [C_out] or undefined
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, Pad pad);
Tensor upsample1d(const Tensor& x, int factor);  // nearest, along last axis

// A[i,j] = sum_k Q[i,k] P[i,j,k] K[j,k]
Tensor einsum_attention_bilinear(const Tensor& q, const Tensor& p,
                                 const Tensor& k);

// logits: [N, K]; target class per row; mask: rows excluded when 0.
// Mean cross entropy over unmasked rows; 0 when everything is masked.
Tensor cross_entropy_logits(const Tensor& logits,
                            const std::vector<int64_t>& targets,
                            const std::vector<uint8_t>& mask);

Tensor l1_loss(const Tensor& a, const Tensor& b);  // mean |a-b|

// test hook: when true, matmul backward deliberately mis-scales dA
// (negative control for the gradcheck runner)
void set_corrupt_matmul_backward(bool on);

}  // namespace semkit
