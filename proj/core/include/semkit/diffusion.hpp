#pragma once

#include <functional>
#include <vector>

#include "semkit/rng.hpp"
#include "semkit/tensor.hpp"

namespace semkit {

// DDPM forward process over 1000 timesteps plus the coefficients both
// samplers need. Betas are linear 1e-4 -> 2e-2 unless overridden.
class DiffusionSchedule {
 public:
  explicit DiffusionSchedule(int t_steps = 1000, double beta_lo = 1e-4,
                             double beta_hi = 2e-2);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const { return betas_.at(t); }
  double alpha_bar(int t) const { return alpha_bars_.at(t); }
  double sqrt_ab(int t) const { return std::sqrt(alpha_bars_.at(t)); }
  double sqrt_one_minus_ab(int t) const {
    return std::sqrt(1.0 - alpha_bars_.at(t));
  }

  // x_t = sqrt(ab_t) x0 + sqrt(1-ab_t) noise
  std::vector<double> add_noise(const std::vector<double>& x0, int t,
                                const std::vector<double>& noise) const;

  // noise implied by (x_t, x0): eps = (x_t - sqrt(ab) x0) / sqrt(1-ab)
  std::vector<double> implied_noise(const std::vector<double>& xt,
                                    const std::vector<double>& x0, int t) const;

  // One ancestral step given the model's sample prediction. t >= 1;
  // the t == 1 step is deterministic. rng == nullptr disables posterior noise.
  std::vector<double> ddpm_step(const std::vector<double>& xt,
                                const std::vector<double>& predicted_x0, int t,
                                Rng* rng) const;

 private:
  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
};

// model(x_t, t) -> predicted x0
using SamplePredictor =
    std::function<std::vector<double>(const std::vector<double>&, int)>;

// Full 999..1 ancestral chain from pure noise.
std::vector<double> ddpm_sample(const DiffusionSchedule& sched,
                                const SamplePredictor& model, int64_t n,
                                Rng& rng);

// Deterministic multistep solver (order 2, order-1 fallback on the first
// update) over log-SNR time; the initial draw is the only randomness.
std::vector<double> dpm_solver_sample(const DiffusionSchedule& sched,
                                      const SamplePredictor& model, int64_t n,
                                      int n_steps, Rng& rng);
std::vector<double> dpm_solver_from(const DiffusionSchedule& sched,
                                    const SamplePredictor& model,
                                    std::vector<double> x_init, int n_steps);

struct LossWeights {
  double joint = 1.0;
  double pose = 0.5;
  double pose_fk = 0.5;
  double depth = 0.1;
};

struct LossBreakdown {
  Tensor total;
  double joint = 0, pose = 0, pose_fk = 0, depth = 0;
  bool depth_all_masked = false;
};

// Eq-style four-term objective. pred/target: [N_j, t, 8] enhanced states
// (channel 0 angle, 1..7 pose); pred_fk: FK recomputed from predicted
// angles. depth_logits: [cells, K]; empty targets skip the depth term.
LossBreakdown total_loss(const Tensor& pred, const Tensor& target,
                         const Tensor& pred_fk, const Tensor& depth_logits,
                         const std::vector<int64_t>& depth_targets,
                         const std::vector<uint8_t>& depth_mask,
                         const LossWeights& w);

}  // namespace semkit
