#pragma once

#include <map>
#include <string>
#include <vector>

#include "semkit/decoder.hpp"
#include "semkit/diffusion.hpp"
#include "semkit/encoder.hpp"
#include "semkit/enhancer.hpp"
#include "semkit/world.hpp"

namespace semkit {

struct PolicyConfig {
  int d_model = 32;
  int heads = 4;
  int enc_layers = 2;
  int dec_blocks = 2;
  int t_out = 16, t_lat = 8;
  int k_bins = 32;
  double bin_lo = 0.1, bin_hi = 2.0;
  int c_img = 8, c_depth = 8;
  // ablation flags (ids 1-4: no depth & no SE, no depth, camera frame,
  // no joint graph attention)
  bool use_depth = true;
  bool use_spatial_enhancer = true;
  FrameMode frame_mode = FrameMode::base;
  bool use_jga = true;
  LossWeights loss_w;
};

// One observation as the policy sees it.
struct Observation {
  std::vector<double> state;  // [N_j, 8] enhanced current state
  FeatureGrid grid;
  int instruction_id = 0;
};

// The full model: spatial enhancer -> state encoder -> diffusion action
// decoder, plus the instruction embedding table. Parameters are shared
// across embodiments; only the joint-distance bias depends on the arm.
class SemPolicy {
 public:
  SemPolicy(const PolicyConfig& cfg, uint64_t seed);

  const PolicyConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // cached per-view frustum points for a rig (geometry only, no params)
  std::vector<Tensor> rig_points(const CameraRig& rig, int grid_h,
                                 int grid_w) const;

  Tensor joint_bias(const Embodiment& e) const;  // [N_j, N_j, d]

  struct Conditioning {
    ConditionBundle cond;
    Tensor p;                           // joint graph bias [N_j, N_j, d]
    Tensor depth_logits;                // [V*H*W, K] or undefined
    std::vector<int64_t> depth_targets;
    std::vector<uint8_t> depth_mask;
  };
  Conditioning condition(const Embodiment& e, const Observation& obs,
                         const std::vector<Tensor>& points) const;

  // E^P shared across a batch: recompute after every parameter update,
  // reuse for every sample (and its gradient accumulates once per step)
  std::vector<Tensor> point_embeddings(
      const std::vector<Tensor>& points) const;
  Conditioning condition_embedded(const Embodiment& e, const Observation& obs,
                                  const std::vector<Tensor>& ep) const;
  LossBreakdown loss_embedded(const Embodiment& e, const Observation& obs,
                              const std::vector<double>& actions,
                              const std::vector<Tensor>& ep,
                              const DiffusionSchedule& sched, Rng& rng) const;

  // Denoiser forward: latent noisy joint angles (absolute units) are FK'd
  // into enhanced states and decoded to S'_pred over t_out.
  Tensor denoise(const Embodiment& e, const Tensor& angles_lat,
                 const Conditioning& c, int step) const;

  // Four-term training loss for one sample (angles-only noising, poses
  // recomputed by FK). actions: [N_j, t_out] absolute joint positions.
  LossBreakdown loss(const Embodiment& e, const Observation& obs,
                     const std::vector<double>& actions,
                     const std::vector<Tensor>& points,
                     const DiffusionSchedule& sched, Rng& rng) const;

  // Closed-form DPM-Solver rollout from noise; returns [N_j, t_out]
  // absolute joint positions clamped to limits.
  std::vector<double> predict_action(const Embodiment& e,
                                     const Observation& obs,
                                     const std::vector<Tensor>& points,
                                     const DiffusionSchedule& sched,
                                     int n_steps, Rng& rng) const;

  // normalized <-> absolute joint positions
  std::vector<double> normalize(const Embodiment& e,
                                const std::vector<double>& q) const;
  std::vector<double> denormalize(const Embodiment& e,
                                  const std::vector<double>& u) const;

  SpatialEnhancer enhancer;
  StateEncoder encoder;
  ActionDecoder decoder;
  Tensor text_embed;  // [kNumInstructions, d]

 private:
  PolicyConfig cfg_;
  ParamStore params_;
  mutable std::map<std::string, std::vector<int>> jdist_cache_;
};

}  // namespace semkit
