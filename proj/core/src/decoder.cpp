#include "semkit/decoder.hpp"

#include <stdexcept>
#include <string>

namespace semkit {

ActionDecoder::ActionDecoder(const DecoderConfig& cfg, ParamStore& ps,
                             Rng& rng)
    : cfg_(cfg) {
  if (cfg.d_model < 1 || cfg.blocks < 1 || cfg.d_model % cfg.heads)
    throw std::invalid_argument("ActionDecoder: bad config");
  if (cfg.t_lat < 1 || cfg.t_out % cfg.t_lat)
    throw std::invalid_argument("ActionDecoder: t_out % t_lat != 0");
  const int64_t d = cfg.d_model;
  input_mlp = Mlp(ps, "decoder.input", {8, d, d}, rng);
  time_mlp = Mlp(ps, "decoder.time", {d, d, d}, rng);
  state_in = Linear(ps, "decoder.state_in", d, d, rng);
  in_gate = Linear(ps, "decoder.in_gate", d, 1, rng);
  null_text = ps.create("decoder.null_text", {1, d},
                        uniform_fan_init(d, d, d, rng));
  blocks_.resize(cfg.blocks);
  for (int l = 0; l < cfg.blocks; ++l) {
    const std::string base = "decoder.b" + std::to_string(l);
    Block& b = blocks_[l];
    b.ln_jga = LayerNorm(ps, base + ".ln_jga", d);
    b.ln_time = LayerNorm(ps, base + ".ln_time", d);
    b.ln_state = LayerNorm(ps, base + ".ln_state", d);
    b.ln_image = LayerNorm(ps, base + ".ln_image", d);
    b.ln_text = LayerNorm(ps, base + ".ln_text", d);
    b.ln_ff = LayerNorm(ps, base + ".ln_ff", d);
    b.jga = JgaBlock(ps, base + ".jga", d, cfg.heads, rng);
    b.time_attn = AttentionBlock(ps, base + ".time", d, cfg.heads, rng);
    b.state_xattn = AttentionBlock(ps, base + ".xstate", d, cfg.heads, rng);
    b.image_xattn = AttentionBlock(ps, base + ".ximage", d, cfg.heads, rng);
    b.text_xattn = AttentionBlock(ps, base + ".xtext", d, cfg.heads, rng);
    b.ff = Mlp(ps, base + ".ff", {d, 2 * d, d}, rng);
  }
  conv1_w = ps.create("decoder.conv1.w", {d, d, 3},
                      uniform_fan_init(d * 3, d, d * d * 3, rng));
  conv1_b = ps.create("decoder.conv1.b", {d}, std::vector<double>(d, 0.0));
  conv2_w = ps.create("decoder.conv2.w", {8, d, 3},
                      std::vector<double>(8 * d * 3, 0.0));
  conv2_b = ps.create("decoder.conv2.b", {8}, std::vector<double>(8, 0.0));
}

Tensor ActionDecoder::operator()(const Tensor& noisy, const Tensor& p,
                                 const ConditionBundle& cond, int step) const {
  if (noisy.rank() != 3 || noisy.dim(1) != cfg_.t_lat || noisy.dim(2) != 8)
    throw std::invalid_argument("decode: noisy must be [N_j, t_lat, 8]");
  const int64_t n = noisy.dim(0), t = cfg_.t_lat, d = cfg_.d_model;
  if (cond.state.defined() && cond.state.dim(0) != n)
    throw std::invalid_argument("decode: trajectory/state joint mismatch");

  Tensor temb = time_mlp(
      Tensor::from({1, d}, sinusoid_features(static_cast<double>(step), d)));
  // noise-level gate: a scalar path for attenuating the noisy input stream
  Tensor gate =
      sigmoid(reshape(upsample1d(in_gate(temb), static_cast<int>(d)), {d}));
  Tensor x = mul(input_mlp(noisy), gate);  // [n, t, d]
  x = add(x, reshape(temb, {d}));
  if (cond.state.defined()) {
    // joint-aligned conditioning: state feature i on every token of joint i
    Tensor se = reshape(state_in(cond.state), {n, d, 1});  // [n, d, 1]
    x = add(x, transpose2d(upsample1d(se, static_cast<int>(t))));
  }

  const Tensor cmask = causal_mask(t);
  const Tensor text = cond.text.defined() ? cond.text : null_text;
  for (const Block& b : blocks_) {
    {  // joint graph attention, independently per time index
      Tensor h = b.ln_jga(x);
      std::vector<Tensor> cols;
      cols.reserve(t);
      for (int64_t tau = 0; tau < t; ++tau) {
        Tensor xt = reshape(slice(h, 1, tau, 1), {n, d});
        cols.push_back(reshape(b.jga(xt, p), {n, 1, d}));
      }
      x = add(x, concat(1, cols));
    }
    {  // causal temporal attention, independently per joint
      Tensor h = b.ln_time(x);
      std::vector<Tensor> rows;
      rows.reserve(n);
      for (int64_t i = 0; i < n; ++i) {
        Tensor xi = reshape(slice(h, 0, i, 1), {t, d});
        rows.push_back(reshape(b.time_attn(xi, xi, cmask), {1, t, d}));
      }
      x = add(x, concat(0, rows));
    }
    auto cross = [&](const LayerNorm& ln, const AttentionBlock& attn,
                     const Tensor& memory) {
      Tensor h = reshape(ln(x), {n * t, d});
      x = add(x, reshape(attn(h, memory), {n, t, d}));
    };
    if (cfg_.use_state_xattn) cross(b.ln_state, b.state_xattn, cond.state);
    if (cfg_.use_image_xattn) cross(b.ln_image, b.image_xattn, cond.image);
    if (cfg_.use_text_xattn) cross(b.ln_text, b.text_xattn, text);
    x = add(x, b.ff(b.ln_ff(x)));
  }

  // head: upsample the latent horizon, causal convs down to 8 channels
  Tensor y = transpose2d(x);  // [n, d, t]
  y = upsample1d(y, cfg_.t_out / cfg_.t_lat);
  y = gelu(conv1d(y, conv1_w, conv1_b, Pad::causal));
  y = conv1d(y, conv2_w, conv2_b, Pad::causal);
  return transpose2d(y);  // [n, t_out, 8]
}

}  // namespace semkit
