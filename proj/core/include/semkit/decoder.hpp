#pragma once

#include <vector>

#include "semkit/encoder.hpp"
#include "semkit/nn.hpp"

namespace semkit {

// Conditioning set for the decoder. All widths must equal the decoder's
// d_model (callers project beforehand). text may be undefined; a learned
// null token stands in for it.
struct ConditionBundle {
  Tensor state;  // [N_j, d] per-joint state features
  Tensor image;  // [M, d] lifted image tokens
  Tensor text;   // [T_txt, d] instruction embedding, optional
};

struct DecoderConfig {
  int d_model = 32;
  int heads = 4;
  int blocks = 2;
  int t_out = 16;  // output horizon
  int t_lat = 8;   // latent temporal resolution; t_out % t_lat == 0
  // each cross-attention stream can be ablated to identity
  bool use_state_xattn = true;
  bool use_image_xattn = true;
  bool use_text_xattn = true;
};

// Denoising transformer over noisy joint trajectories. Per block: joint
// graph attention across joints (time-parallel), causal self-attention
// across time (joint-parallel), cross-attention to state, image, and text
// features in that order, then a feed-forward — all pre-norm residual.
// The timestep enters as a sinusoidal embedding added to every token and
// as a learned scalar gate on the input stream (so the network has a cheap
// handle for attenuating the input at high noise levels), and the state
// feature of joint i is added to every token of joint i (the trajectory
// tokens and state features share the joint axis). The head
// upsamples t_lat -> t_out and finishes with causal 1D convolutions; the
// final convolution is zero-initialized.
class ActionDecoder {
 public:
  ActionDecoder() = default;
  ActionDecoder(const DecoderConfig& cfg, ParamStore& ps, Rng& rng);

  // noisy: [N_j, t_lat, 8] enhanced states of the noised trajectory;
  // p: joint graph bias [N_j, N_j, d]. Returns S'_pred, [N_j, t_out, 8].
  Tensor operator()(const Tensor& noisy, const Tensor& p,
                    const ConditionBundle& cond, int step) const;

  const DecoderConfig& config() const { return cfg_; }

  Mlp input_mlp, time_mlp;
  Linear state_in, in_gate;
  Tensor null_text;  // [1, d]
  struct Block {
    LayerNorm ln_jga, ln_time, ln_state, ln_image, ln_text, ln_ff;
    JgaBlock jga;
    AttentionBlock time_attn, state_xattn, image_xattn, text_xattn;
    Mlp ff;
  };
  std::vector<Block> blocks_;
  Tensor conv1_w, conv1_b, conv2_w, conv2_b;

 private:
  DecoderConfig cfg_;
};

}  // namespace semkit
