#include "semkit/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace semkit {

SemPolicy::SemPolicy(const PolicyConfig& cfg, uint64_t seed) : cfg_(cfg) {
  Rng rng = Rng(seed).fork("init");
  EnhancerConfig ec;
  ec.c_img = cfg.c_img;
  ec.c_depth = cfg.c_depth;
  ec.d_model = cfg.d_model;
  ec.use_depth = cfg.use_depth;
  ec.enabled = cfg.use_spatial_enhancer;
  ec.frame_mode = cfg.frame_mode;
  ec.bins = linear_depth_bins(cfg.k_bins, cfg.bin_lo, cfg.bin_hi);
  enhancer = SpatialEnhancer(ec, params_, rng);

  EncoderConfig sc;
  sc.d_model = cfg.d_model;
  sc.heads = cfg.heads;
  sc.layers = cfg.enc_layers;
  sc.use_jga = cfg.use_jga;
  encoder = StateEncoder(sc, params_, rng);

  DecoderConfig dc;
  dc.d_model = cfg.d_model;
  dc.heads = cfg.heads;
  dc.blocks = cfg.dec_blocks;
  dc.t_out = cfg.t_out;
  dc.t_lat = cfg.t_lat;
  decoder = ActionDecoder(dc, params_, rng);

  text_embed = params_.create(
      "text.embed", {kNumInstructions, cfg.d_model},
      uniform_fan_init(cfg.d_model, cfg.d_model,
                       kNumInstructions * cfg.d_model, rng));
}

std::vector<Tensor> SemPolicy::rig_points(const CameraRig& rig, int grid_h,
                                          int grid_w) const {
  if (!cfg_.use_spatial_enhancer)
    return std::vector<Tensor>(rig.num_views());
  return SpatialEnhancer::frustum_grid(rig, grid_h, grid_w,
                                       enhancer.config().bins,
                                       cfg_.frame_mode == FrameMode::camera);
}

Tensor SemPolicy::joint_bias(const Embodiment& e) const {
  auto it = jdist_cache_.find(e.name());
  if (it == jdist_cache_.end())
    it = jdist_cache_.emplace(e.name(), joint_distance_matrix(e)).first;
  return encoder.bias(it->second, e.num_joints());
}

std::vector<Tensor> SemPolicy::point_embeddings(
    const std::vector<Tensor>& points) const {
  if (!cfg_.use_spatial_enhancer) return std::vector<Tensor>(points.size());
  return enhancer.point_embeddings(points);
}

SemPolicy::Conditioning SemPolicy::condition(
    const Embodiment& e, const Observation& obs,
    const std::vector<Tensor>& points) const {
  return condition_embedded(e, obs, point_embeddings(points));
}

SemPolicy::Conditioning SemPolicy::condition_embedded(
    const Embodiment& e, const Observation& obs,
    const std::vector<Tensor>& ep) const {
  const int nj = e.num_joints();
  if (static_cast<int>(obs.state.size()) != nj * 8)
    throw std::invalid_argument("condition: state size mismatch");
  if (obs.instruction_id < 0 || obs.instruction_id >= kNumInstructions)
    throw std::invalid_argument("condition: bad instruction id");
  Conditioning c;
  c.p = joint_bias(e);

  Tensor s = Tensor::from({nj, 8}, obs.state);
  c.cond.state = encoder(s, c.p);

  EnhanceResult er = enhancer.enhance_embedded(obs.grid, ep);
  c.cond.image = er.tokens.size() == 1 ? er.tokens[0] : concat(0, er.tokens);
  if (!er.depth_logits.empty()) {
    c.depth_logits = er.depth_logits.size() == 1 ? er.depth_logits[0]
                                                 : concat(0, er.depth_logits);
    const auto& bins = enhancer.config().bins;
    for (const ViewGrid& vg : obs.grid.views) {
      DepthTargets dt = depth_loss_targets(vg.depth, vg.depth_valid, bins);
      c.depth_targets.insert(c.depth_targets.end(), dt.cls.begin(),
                             dt.cls.end());
      c.depth_mask.insert(c.depth_mask.end(), dt.mask.begin(), dt.mask.end());
    }
  }
  c.cond.text = slice(text_embed, 0, obs.instruction_id, 1);
  return c;
}

Tensor SemPolicy::denoise(const Embodiment& e, const Tensor& angles_lat,
                          const Conditioning& c, int step) const {
  return decoder(fk_batch(e, angles_lat), c.p, c.cond, step);
}

std::vector<double> SemPolicy::normalize(const Embodiment& e,
                                         const std::vector<double>& q) const {
  const int nj = e.num_joints();
  const size_t t = q.size() / nj;
  std::vector<double> out(q.size());
  for (int i = 0; i < nj; ++i) {
    const JointSpec& j = e.joints()[i];
    const double mid = 0.5 * (j.lo + j.hi), half = 0.5 * (j.hi - j.lo);
    for (size_t k = 0; k < t; ++k) out[i * t + k] = (q[i * t + k] - mid) / half;
  }
  return out;
}

std::vector<double> SemPolicy::denormalize(
    const Embodiment& e, const std::vector<double>& u) const {
  const int nj = e.num_joints();
  const size_t t = u.size() / nj;
  std::vector<double> out(u.size());
  for (int i = 0; i < nj; ++i) {
    const JointSpec& j = e.joints()[i];
    const double mid = 0.5 * (j.lo + j.hi), half = 0.5 * (j.hi - j.lo);
    for (size_t k = 0; k < t; ++k) out[i * t + k] = mid + half * u[i * t + k];
  }
  return out;
}

LossBreakdown SemPolicy::loss(const Embodiment& e, const Observation& obs,
                              const std::vector<double>& actions,
                              const std::vector<Tensor>& points,
                              const DiffusionSchedule& sched, Rng& rng) const {
  return loss_embedded(e, obs, actions, point_embeddings(points), sched, rng);
}

LossBreakdown SemPolicy::loss_embedded(const Embodiment& e,
                                       const Observation& obs,
                                       const std::vector<double>& actions,
                                       const std::vector<Tensor>& ep,
                                       const DiffusionSchedule& sched,
                                       Rng& rng) const {
  const int nj = e.num_joints();
  const int up = cfg_.t_out / cfg_.t_lat;
  if (static_cast<int>(actions.size()) != nj * cfg_.t_out)
    throw std::invalid_argument("loss: actions size mismatch");

  // latent chunk: every up-th step, normalized; noised angles only
  std::vector<double> lat(static_cast<size_t>(nj) * cfg_.t_lat);
  for (int i = 0; i < nj; ++i)
    for (int k = 0; k < cfg_.t_lat; ++k)
      lat[i * cfg_.t_lat + k] = actions[i * cfg_.t_out + k * up];
  std::vector<double> u0 = normalize(e, lat);
  const int t = 1 + static_cast<int>(rng.randint(sched.steps() - 1));
  std::vector<double> noise(u0.size());
  for (auto& v : noise) v = rng.normal();
  std::vector<double> ut = sched.add_noise(u0, t, noise);
  std::vector<double> noisy_angles = denormalize(e, ut);

  Conditioning c = condition_embedded(e, obs, ep);
  Tensor pred =
      denoise(e, Tensor::from({nj, cfg_.t_lat}, noisy_angles), c, t);

  Tensor target =
      fk_batch(e, Tensor::from({nj, cfg_.t_out}, actions)).detach();
  Tensor pred_angles = reshape(slice(pred, 2, 0, 1), {nj, cfg_.t_out});
  Tensor pred_fk = fk_batch(e, pred_angles);
  return total_loss(pred, target, pred_fk, c.depth_logits, c.depth_targets,
                    c.depth_mask, cfg_.loss_w);
}

std::vector<double> SemPolicy::predict_action(
    const Embodiment& e, const Observation& obs,
    const std::vector<Tensor>& points, const DiffusionSchedule& sched,
    int n_steps, Rng& rng) const {
  const int nj = e.num_joints();
  const int up = cfg_.t_out / cfg_.t_lat;
  Conditioning c = condition(e, obs, points);

  std::vector<double> last_full(static_cast<size_t>(nj) * cfg_.t_out, 0.0);
  SamplePredictor model = [&](const std::vector<double>& x, int t) {
    Tensor pred = denoise(
        e, Tensor::from({nj, cfg_.t_lat}, denormalize(e, x)), c, t);
    std::vector<double> full(static_cast<size_t>(nj) * cfg_.t_out);
    for (int i = 0; i < nj; ++i) {
      const JointSpec& j = e.joints()[i];
      for (int k = 0; k < cfg_.t_out; ++k)
        full[i * cfg_.t_out + k] = std::clamp(
            pred.values()[(static_cast<int64_t>(i) * cfg_.t_out + k) * 8],
            j.lo, j.hi);
    }
    last_full = full;
    std::vector<double> lat(static_cast<size_t>(nj) * cfg_.t_lat);
    for (int i = 0; i < nj; ++i)
      for (int k = 0; k < cfg_.t_lat; ++k)
        lat[i * cfg_.t_lat + k] = full[i * cfg_.t_out + k * up];
    return normalize(e, lat);
  };
  dpm_solver_sample(sched, model, static_cast<int64_t>(nj) * cfg_.t_lat,
                    n_steps, rng);
  return last_full;
}

}  // namespace semkit
