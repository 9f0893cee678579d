#include "semkit/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace semkit {

Tensor sincos_encode(const std::vector<int>& jdist, int nj, int n_freq) {
  if (n_freq < 1) throw std::invalid_argument("sincos_encode: n_freq >= 1");
  if (static_cast<int>(jdist.size()) != nj * nj)
    throw std::invalid_argument("sincos_encode: distance matrix size");
  std::vector<double> out;
  out.reserve(jdist.size() * 2 * n_freq);
  for (int d : jdist)
    for (int m = 0; m < n_freq; ++m) {
      const double w = std::ldexp(1.0, -m);  // 2^-m
      out.push_back(std::sin(d * w));
      out.push_back(std::cos(d * w));
    }
  return Tensor::from({static_cast<int64_t>(nj) * nj, 2 * n_freq},
                      std::move(out));
}

Tensor joint_graph_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                             const Tensor& p, int heads) {
  const int64_t n = q.dim(0), d = q.dim(1);
  if (heads < 1 || d % heads)
    throw std::invalid_argument("joint_graph_attention: d % heads != 0");
  if (p.defined() &&
      (p.rank() != 3 || p.dim(0) != n || p.dim(1) != n || p.dim(2) != d))
    throw std::invalid_argument("joint_graph_attention: P must be [N,N,d]");
  const int64_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice(q, 1, h * dh, dh);
    Tensor kh = slice(k, 1, h * dh, dh);
    Tensor vh = slice(v, 1, h * dh, dh);
    Tensor a = p.defined()
                   ? einsum_attention_bilinear(qh, slice(p, 2, h * dh, dh), kh)
                   : matmul(qh, transpose2d(kh));
    outs.push_back(matmul(softmax(mul_scalar(a, scale), 1), vh));
  }
  return heads == 1 ? outs[0] : concat(1, outs);
}

JgaBlock::JgaBlock(ParamStore& ps, const std::string& name, int64_t d,
                   int heads, Rng& rng)
    : heads_(heads) {
  wq = Linear(ps, name + ".wq", d, d, rng);
  wk = Linear(ps, name + ".wk", d, d, rng);
  wv = Linear(ps, name + ".wv", d, d, rng);
  wo = Linear(ps, name + ".wo", d, d, rng);
}

Tensor JgaBlock::operator()(const Tensor& x, const Tensor& p) const {
  return wo(joint_graph_attention(wq(x), wk(x), wv(x), p, heads_));
}

StateEncoder::StateEncoder(const EncoderConfig& cfg, ParamStore& ps, Rng& rng)
    : cfg_(cfg) {
  if (cfg.d_model < 1 || cfg.layers < 1 || cfg.d_model % cfg.heads)
    throw std::invalid_argument("StateEncoder: bad config");
  const int64_t d = cfg.d_model;
  input_mlp = Mlp(ps, "encoder.input", {8, d, d}, rng);
  p_mlp = Mlp(ps, "encoder.p", {2 * cfg.n_freq, d, d}, rng);
  blocks.resize(cfg.layers);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string base = "encoder.b" + std::to_string(l);
    blocks[l].ln1 = LayerNorm(ps, base + ".ln1", d);
    blocks[l].ln2 = LayerNorm(ps, base + ".ln2", d);
    blocks[l].attn = JgaBlock(ps, base + ".attn", d, cfg.heads, rng);
    blocks[l].ff = Mlp(ps, base + ".ff", {d, 2 * d, d}, rng);
  }
  final_ln = LayerNorm(ps, "encoder.final_ln", d);
}

Tensor StateEncoder::bias(const std::vector<int>& jdist, int nj) const {
  if (!cfg_.use_jga)
    return Tensor::full({nj, nj, cfg_.d_model}, 1.0);
  Tensor feats = sincos_encode(jdist, nj, cfg_.n_freq);
  return reshape(p_mlp(feats), {nj, nj, cfg_.d_model});
}

Tensor StateEncoder::operator()(const Tensor& s, const Tensor& p) const {
  if (s.rank() != 2 || s.dim(1) != 8)
    throw std::invalid_argument("StateEncoder: state must be [N_j, 8]");
  if (p.dim(0) != s.dim(0))
    throw std::invalid_argument("StateEncoder: state/bias joint mismatch");
  Tensor x = input_mlp(s);
  for (const Block& b : blocks) {
    x = add(x, b.attn(b.ln1(x), p));
    x = add(x, b.ff(b.ln2(x)));
  }
  return final_ln(x);
}

}  // namespace semkit
