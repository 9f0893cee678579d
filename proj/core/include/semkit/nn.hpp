#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "semkit/rng.hpp"
#include "semkit/tensor.hpp"

namespace semkit {

// Named trainable leaves. std::map keeps iteration order stable so
// checkpoints, optimizer sweeps, and gradient reductions are deterministic.
class ParamStore {
 public:
  Tensor create(const std::string& name, const Shape& shape,
                std::vector<double> init);
  Tensor& get(const std::string& name);
  bool has(const std::string& name) const { return params_.count(name) > 0; }
  const std::map<std::string, Tensor>& all() const { return params_; }
  int64_t total_size() const;
  void zero_grads();

 private:
  std::map<std::string, Tensor> params_;
};

std::vector<double> uniform_fan_init(int64_t fan_in, int64_t fan_out,
                                     int64_t count, Rng& rng);

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int64_t in, int64_t out,
         Rng& rng, bool bias = true, bool zero_init = false);
  Tensor operator()(const Tensor& x) const;  // x: [..., in]

  Tensor w, b;
  int64_t in_dim = 0, out_dim = 0;
};

// gelu between layers, linear output
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamStore& ps, const std::string& name,
      const std::vector<int64_t>& widths, Rng& rng, bool zero_init_last = false);
  Tensor operator()(const Tensor& x) const;

  std::vector<Linear> layers;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& ps, const std::string& name, int64_t d);
  Tensor operator()(const Tensor& x) const;

  Tensor gain, bias;
};

// Scaled dot-product attention, optional additive score mask ([Tq,Tk],
// -inf blocks a pair). q: [Tq,d], k/v: [Tk,d]. Multi-head over d.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                 const Tensor& score_mask = Tensor());

// Standard cross/self attention block body: projections + attention + output.
class AttentionBlock {
 public:
  AttentionBlock() = default;
  AttentionBlock(ParamStore& ps, const std::string& name, int64_t d, int heads,
                 Rng& rng);
  Tensor operator()(const Tensor& x, const Tensor& memory,
                    const Tensor& score_mask = Tensor()) const;

  Linear wq, wk, wv, wo;
  int heads_ = 1;
};

Tensor causal_mask(int64_t t);  // [t,t], 0 on/below diagonal, -inf above

// [count, dim] sinusoidal features of a scalar position (diffusion timestep)
std::vector<double> sinusoid_features(double pos, int64_t dim);

}  // namespace semkit
