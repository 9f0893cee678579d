#include "semkit/diffusion.hpp"

#include <cmath>
#include <stdexcept>

namespace semkit {

DiffusionSchedule::DiffusionSchedule(int t_steps, double beta_lo,
                                     double beta_hi) {
  if (t_steps < 2) throw std::invalid_argument("schedule needs >= 2 steps");
  betas_.resize(t_steps);
  alphas_.resize(t_steps);
  alpha_bars_.resize(t_steps);
  double ab = 1.0;
  for (int t = 0; t < t_steps; ++t) {
    betas_[t] = beta_lo + (beta_hi - beta_lo) * t / (t_steps - 1);
    if (betas_[t] <= 0 || betas_[t] >= 1)
      throw std::invalid_argument("beta out of (0,1)");
    alphas_[t] = 1.0 - betas_[t];
    ab *= alphas_[t];
    alpha_bars_[t] = ab;
  }
}

std::vector<double> DiffusionSchedule::add_noise(
    const std::vector<double>& x0, int t,
    const std::vector<double>& noise) const {
  if (t < 0 || t >= steps())
    throw std::out_of_range("add_noise: step " + std::to_string(t) +
                            " outside [0," + std::to_string(steps() - 1) + "]");
  if (noise.size() != x0.size())
    throw std::invalid_argument("add_noise: noise shape mismatch");
  const double a = sqrt_ab(t), s = sqrt_one_minus_ab(t);
  std::vector<double> out(x0.size());
  for (size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + s * noise[i];
  return out;
}

std::vector<double> DiffusionSchedule::implied_noise(
    const std::vector<double>& xt, const std::vector<double>& x0,
    int t) const {
  const double a = sqrt_ab(t), s = sqrt_one_minus_ab(t);
  std::vector<double> out(xt.size());
  for (size_t i = 0; i < xt.size(); ++i) out[i] = (xt[i] - a * x0[i]) / s;
  return out;
}

std::vector<double> DiffusionSchedule::ddpm_step(
    const std::vector<double>& xt, const std::vector<double>& predicted_x0,
    int t, Rng* rng) const {
  if (t < 1) throw std::out_of_range("ddpm_step requires t >= 1");
  const double ab_t = alpha_bar(t);
  const double ab_prev = alpha_bar(t - 1);
  const double beta_t = beta(t);
  const double alpha_t = alphas_[t];
  // q(x_{t-1} | x_t, x0) posterior mean coefficients
  const double c0 = std::sqrt(ab_prev) * beta_t / (1.0 - ab_t);
  const double ct = std::sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t);
  const double var = (1.0 - ab_prev) / (1.0 - ab_t) * beta_t;
  const double sigma = t == 1 ? 0.0 : std::sqrt(var);
  std::vector<double> out(xt.size());
  for (size_t i = 0; i < xt.size(); ++i) {
    out[i] = c0 * predicted_x0[i] + ct * xt[i];
    if (sigma > 0 && rng) out[i] += sigma * rng->normal();
  }
  return out;
}

std::vector<double> ddpm_sample(const DiffusionSchedule& sched,
                                const SamplePredictor& model, int64_t n,
                                Rng& rng) {
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  for (int t = sched.steps() - 1; t >= 1; --t)
    x = sched.ddpm_step(x, model(x, t), t, &rng);
  // final map to the data estimate at t = 0
  return model(x, 0);
}

std::vector<double> dpm_solver_from(const DiffusionSchedule& sched,
                                    const SamplePredictor& model,
                                    std::vector<double> x, int n_steps) {
  if (n_steps < 1) throw std::invalid_argument("dpm_solver: n_steps >= 1");
  const int T = sched.steps();
  // timestep nodes from T-1 down to 0, inclusive
  std::vector<int> ts(n_steps + 1);
  for (int i = 0; i <= n_steps; ++i) {
    const double f = static_cast<double>(i) / n_steps;
    ts[i] = static_cast<int>(std::lround((T - 1) * (1.0 - f)));
  }
  auto lambda_of = [&](int t) {
    return std::log(sched.sqrt_ab(t) / sched.sqrt_one_minus_ab(t));
  };
  std::vector<double> prev_x0;   // model output at the previous node
  double prev_h = 0.0;
  for (int i = 0; i < n_steps; ++i) {
    const int t_cur = ts[i], t_next = ts[i + 1];
    std::vector<double> x0 = model(x, t_cur);
    const double l_cur = lambda_of(t_cur), l_next = lambda_of(t_next);
    const double h = l_next - l_cur;
    const double a_next = sched.sqrt_ab(t_next);
    const double s_next = sched.sqrt_one_minus_ab(t_next);
    const double s_cur = sched.sqrt_one_minus_ab(t_cur);
    const double phi = std::expm1(-h);
    std::vector<double> d = x0;
    if (!prev_x0.empty() && prev_h != 0.0) {
      // second-order multistep correction
      const double r = prev_h / h;
      for (size_t k = 0; k < d.size(); ++k)
        d[k] = (1.0 + 0.5 / r) * x0[k] - (0.5 / r) * prev_x0[k];
    }
    for (size_t k = 0; k < x.size(); ++k)
      x[k] = (s_next / s_cur) * x[k] - a_next * phi * d[k];
    prev_x0 = std::move(x0);
    prev_h = h;
  }
  // last node sits at t = 0; return the model's data estimate there
  return model(x, 0);
}

std::vector<double> dpm_solver_sample(const DiffusionSchedule& sched,
                                      const SamplePredictor& model, int64_t n,
                                      int n_steps, Rng& rng) {
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  return dpm_solver_from(sched, model, std::move(x), n_steps);
}

LossBreakdown total_loss(const Tensor& pred, const Tensor& target,
                         const Tensor& pred_fk, const Tensor& depth_logits,
                         const std::vector<int64_t>& depth_targets,
                         const std::vector<uint8_t>& depth_mask,
                         const LossWeights& w) {
  if (pred.shape() != target.shape())
    throw std::invalid_argument("total_loss: pred/target shape mismatch");
  if (w.joint < 0 || w.pose < 0 || w.pose_fk < 0 || w.depth < 0)
    throw std::invalid_argument("total_loss: negative loss weight");
  if (w.joint == 0 && w.pose == 0 && w.pose_fk == 0 && w.depth == 0)
    throw std::invalid_argument("total_loss: all loss weights are zero");
  LossBreakdown out;
  Tensor l_joint = l1_loss(slice(pred, 2, 0, 1), slice(target, 2, 0, 1));
  Tensor l_pose = l1_loss(slice(pred, 2, 1, 7), slice(target, 2, 1, 7));
  Tensor total = add(mul_scalar(l_joint, w.joint), mul_scalar(l_pose, w.pose));
  out.joint = l_joint.item();
  out.pose = l_pose.item();
  if (pred_fk.defined()) {
    Tensor l_fk = l1_loss(slice(pred_fk, 2, 1, 7), slice(target, 2, 1, 7));
    out.pose_fk = l_fk.item();
    total = add(total, mul_scalar(l_fk, w.pose_fk));
  }
  if (depth_logits.defined() && !depth_targets.empty()) {
    bool any = false;
    for (auto m : depth_mask) any = any || (m != 0);
    out.depth_all_masked = !any;
    Tensor l_depth = cross_entropy_logits(depth_logits, depth_targets,
                                          depth_mask);
    out.depth = l_depth.item();
    total = add(total, mul_scalar(l_depth, w.depth));
  }
  out.total = total;
  return out;
}

}  // namespace semkit
