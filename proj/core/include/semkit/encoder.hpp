#pragma once

#include <vector>

#include "semkit/kinematics.hpp"
#include "semkit/nn.hpp"

namespace semkit {

// [N_j*N_j, 2*n_freq] features of the joint distance matrix: per entry j,
// pairs [sin(j*w_m), cos(j*w_m)] with geometric frequencies w_m = 2^-m.
Tensor sincos_encode(const std::vector<int>& jdist, int nj, int n_freq);

// Attention biased by the joint-graph embedding P: scores
// A[i,j] = sum_k Q[i,k] P[i,j,k] K[j,k], softmaxed at 1/sqrt(d_head).
// q/k/v: [N, d]; p: [N, N, d] or undefined for plain dot-product scores.
// Multi-head splits d (and P's last axis) into per-head slices.
Tensor joint_graph_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                             const Tensor& p, int heads);

// Projections + joint graph attention + output projection.
class JgaBlock {
 public:
  JgaBlock() = default;
  JgaBlock(ParamStore& ps, const std::string& name, int64_t d, int heads,
           Rng& rng);
  Tensor operator()(const Tensor& x, const Tensor& p) const;

  Linear wq, wk, wv, wo;
  int heads_ = 1;
};

struct EncoderConfig {
  int d_model = 32;
  int heads = 4;
  int layers = 2;
  int n_freq = 8;
  bool use_jga = true;  // false forces P == 1 (vanilla attention)
};

// Transformer over joints: per-joint embedding of the enhanced state, then
// pre-norm blocks of {joint graph attention, feed-forward}. The graph bias
// P is shared by all layers and computed once per embodiment.
class StateEncoder {
 public:
  StateEncoder() = default;
  StateEncoder(const EncoderConfig& cfg, ParamStore& ps, Rng& rng);

  // P tensor [N_j, N_j, d_model] from the embodiment's distance matrix;
  // all-ones when use_jga is off (the exact vanilla-attention collapse).
  Tensor bias(const std::vector<int>& jdist, int nj) const;

  // s: [N_j, 8] enhanced current state; p from bias(). Returns [N_j, d].
  Tensor operator()(const Tensor& s, const Tensor& p) const;

  const EncoderConfig& config() const { return cfg_; }

  Mlp input_mlp, p_mlp;
  struct Block {
    LayerNorm ln1, ln2;
    JgaBlock attn;
    Mlp ff;
  };
  std::vector<Block> blocks;
  LayerNorm final_ln;

 private:
  EncoderConfig cfg_;
};

}  // namespace semkit
