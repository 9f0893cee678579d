#include "semkit/nn.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace semkit {

Tensor ParamStore::create(const std::string& name, const Shape& shape,
                          std::vector<double> init) {
  if (params_.count(name))
    throw std::invalid_argument("duplicate parameter name: " + name);
  Tensor t = Tensor::leaf(shape, std::move(init));
  params_.emplace(name, t);
  return t;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::invalid_argument("unknown parameter: " + name);
  return it->second;
}

int64_t ParamStore::total_size() const {
  int64_t n = 0;
  for (const auto& [k, v] : params_) n += v.numel();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [k, v] : params_) v.zero_grad();
}

std::vector<double> uniform_fan_init(int64_t fan_in, int64_t fan_out,
                                     int64_t count, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(count);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return v;
}

Linear::Linear(ParamStore& ps, const std::string& name, int64_t in, int64_t out,
               Rng& rng, bool bias, bool zero_init)
    : in_dim(in), out_dim(out) {
  std::vector<double> wi = zero_init
                               ? std::vector<double>(in * out, 0.0)
                               : uniform_fan_init(in, out, in * out, rng);
  w = ps.create(name + ".w", {in, out}, std::move(wi));
  if (bias) b = ps.create(name + ".b", {out}, std::vector<double>(out, 0.0));
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, w);
  if (b.defined()) y = add(y, b);
  return y;
}

Mlp::Mlp(ParamStore& ps, const std::string& name,
         const std::vector<int64_t>& widths, Rng& rng, bool zero_init_last) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp: need >= 2 widths");
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = i + 2 == widths.size();
    layers.emplace_back(ps, name + ".l" + std::to_string(i), widths[i],
                        widths[i + 1], rng, true, zero_init_last && last);
  }
}

Tensor Mlp::operator()(const Tensor& x) const {
  Tensor h = x;
  for (size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size()) h = gelu(h);
  }
  return h;
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& name, int64_t d) {
  gain = ps.create(name + ".gain", {d}, std::vector<double>(d, 1.0));
  bias = ps.create(name + ".bias", {d}, std::vector<double>(d, 0.0));
}

Tensor LayerNorm::operator()(const Tensor& x) const {
  return layer_norm(x, gain, bias);
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                 const Tensor& score_mask) {
  const int64_t d = q.dim(1);
  if (d % heads != 0)
    throw std::invalid_argument("attention: d=" + std::to_string(d) +
                                " not divisible by heads=" +
                                std::to_string(heads));
  const int64_t dh = d / heads;
  std::vector<Tensor> outs;
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice(q, 1, h * dh, dh);
    Tensor kh = slice(k, 1, h * dh, dh);
    Tensor vh = slice(v, 1, h * dh, dh);
    Tensor scores = mul_scalar(matmul(qh, transpose2d(kh)),
                               1.0 / std::sqrt(static_cast<double>(dh)));
    if (score_mask.defined()) scores = add(scores, score_mask);
    outs.push_back(matmul(softmax(scores, 1), vh));
  }
  return heads == 1 ? outs[0] : concat(1, outs);
}

AttentionBlock::AttentionBlock(ParamStore& ps, const std::string& name,
                               int64_t d, int heads, Rng& rng)
    : heads_(heads) {
  wq = Linear(ps, name + ".q", d, d, rng);
  wk = Linear(ps, name + ".k", d, d, rng);
  wv = Linear(ps, name + ".v", d, d, rng);
  wo = Linear(ps, name + ".o", d, d, rng);
}

Tensor AttentionBlock::operator()(const Tensor& x, const Tensor& memory,
                                  const Tensor& score_mask) const {
  return wo(attention(wq(x), wk(memory), wv(memory), heads_, score_mask));
}

Tensor causal_mask(int64_t t) {
  std::vector<double> m(t * t, 0.0);
  const double ninf = -std::numeric_limits<double>::infinity();
  for (int64_t i = 0; i < t; ++i)
    for (int64_t j = i + 1; j < t; ++j) m[i * t + j] = ninf;
  return Tensor::from({t, t}, std::move(m));
}

std::vector<double> sinusoid_features(double pos, int64_t dim) {
  std::vector<double> f(dim);
  const int64_t half = dim / 2;
  for (int64_t i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
    f[i] = std::sin(pos * freq);
    f[half + i] = std::cos(pos * freq);
  }
  if (dim % 2) f[dim - 1] = 0.0;
  return f;
}

}  // namespace semkit
