#include <doctest.h>

#include <cmath>

#include "semkit/policy.hpp"

using namespace semkit;

namespace {

PolicyConfig tiny_cfg() {
  PolicyConfig cfg;
  cfg.d_model = 16;
  cfg.heads = 2;
  cfg.enc_layers = 1;
  cfg.dec_blocks = 1;
  cfg.t_out = 8;
  cfg.t_lat = 4;
  cfg.k_bins = 8;
  return cfg;
}

Observation make_obs(const Embodiment& e, const SceneSpec& scene,
                     const WorldConfig& wc, const CameraRig& rig) {
  ToyWorld sim(e, scene, wc);
  Observation obs;
  obs.state = e.enhanced_state(sim.q());
  obs.grid = sim.observe(rig);
  obs.instruction_id = scene.instruction_id;
  return obs;
}

// the output head is zero-initialized; give it signal so gradients and
// sampler draws reach the rest of the network
void randomize_head(SemPolicy& pol, uint64_t seed) {
  Rng rng(seed);
  for (auto& v : pol.params().get("decoder.conv2.w").values())
    v = 0.1 * rng.uniform(-1, 1);
}

std::vector<double> expert_chunk(const ExpertEpisode& ep, int nj, int t_out) {
  std::vector<double> a(static_cast<size_t>(nj) * t_out);
  for (int i = 0; i < nj; ++i)
    for (int t = 0; t < t_out; ++t)
      a[i * t_out + t] = ep.q[std::min<size_t>(t + 1, ep.q.size() - 1)][i];
  return a;
}

}  // namespace

TEST_CASE("normalize/denormalize round trip") {
  auto e = make_arm("arm6");
  SemPolicy pol(tiny_cfg(), 1);
  Rng rng(2);
  std::vector<double> q(e.num_joints() * 3);
  for (int i = 0; i < e.num_joints(); ++i)
    for (int k = 0; k < 3; ++k)
      q[i * 3 + k] = rng.uniform(e.joints()[i].lo, e.joints()[i].hi);
  auto u = pol.normalize(e, q);
  for (double v : u) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  auto back = pol.denormalize(e, u);
  for (size_t i = 0; i < q.size(); ++i)
    CHECK(back[i] == doctest::Approx(q[i]).epsilon(1e-12));
}

TEST_CASE("loss is finite and reaches every parameter family") {
  WorldConfig wc;
  wc.t_out = 8;
  auto e = make_arm("arm6");
  auto rig = make_rig();
  SceneSpec scene = sample_scene(e, Task::pick_place, 0, 11, wc);
  ExpertEpisode ep = expert_policy(e, scene, wc);

  SemPolicy pol(tiny_cfg(), 3);
  randomize_head(pol, 101);
  auto points = pol.rig_points(rig, wc.grid_h, wc.grid_w);
  Observation obs = make_obs(e, scene, wc, rig);
  auto actions = expert_chunk(ep, e.num_joints(), 8);

  DiffusionSchedule sched;
  Rng rng(5);
  auto b = pol.loss(e, obs, actions, points, sched, rng);
  CHECK(std::isfinite(b.total.item()));
  CHECK(b.joint >= 0);
  CHECK(b.depth > 0);  // renderer depth supervises the distribution
  pol.params().zero_grads();
  b.total.backward();

  // every top-level module contributes gradients somewhere
  for (const std::string prefix :
       {"enhancer.", "encoder.", "decoder.", "text."}) {
    double gsum = 0;
    for (const auto& [name, p] : pol.params().all())
      if (name.rfind(prefix, 0) == 0)
        for (double g : p.node()->grad) gsum += std::abs(g);
    CHECK(gsum > 0.0);
  }
}

TEST_CASE("predict_action: in-limits, deterministic, shaped") {
  WorldConfig wc;
  wc.t_out = 8;
  auto e = make_arm("arm8");
  auto rig = make_rig();
  SceneSpec scene = sample_scene(e, Task::reach, 0, 21, wc);
  SemPolicy pol(tiny_cfg(), 7);
  randomize_head(pol, 102);
  auto points = pol.rig_points(rig, wc.grid_h, wc.grid_w);
  Observation obs = make_obs(e, scene, wc, rig);
  DiffusionSchedule sched;

  Rng r1(9), r2(9), r3(10);
  auto a = pol.predict_action(e, obs, points, sched, 4, r1);
  auto b = pol.predict_action(e, obs, points, sched, 4, r2);
  auto c = pol.predict_action(e, obs, points, sched, 4, r3);
  REQUIRE(a.size() == static_cast<size_t>(e.num_joints()) * 8);
  CHECK(a == b);   // bit-for-bit determinism
  CHECK(a != c);   // different seed, different draw
  for (int i = 0; i < e.num_joints(); ++i)
    for (int t = 0; t < 8; ++t) {
      CHECK(a[i * 8 + t] >= e.joints()[i].lo);
      CHECK(a[i * 8 + t] <= e.joints()[i].hi);
    }
}

TEST_CASE("one shared policy serves both embodiments") {
  WorldConfig wc;
  wc.t_out = 8;
  SemPolicy pol(tiny_cfg(), 13);
  auto rig = make_rig();
  auto points = pol.rig_points(rig, wc.grid_h, wc.grid_w);
  DiffusionSchedule sched;
  const int64_t n_params = pol.params().total_size();
  for (const std::string arm : {"arm6", "arm8"}) {
    auto e = make_arm(arm);
    SceneSpec scene = sample_scene(e, Task::push, 0, 31, wc);
    ExpertEpisode ep = expert_policy(e, scene, wc);
    Observation obs = make_obs(e, scene, wc, rig);
    Rng rng(3);
    auto b = pol.loss(e, obs, expert_chunk(ep, e.num_joints(), 8), points,
                      sched, rng);
    CHECK(std::isfinite(b.total.item()));
    CHECK(pol.params().total_size() == n_params);
  }
}

TEST_CASE("all four ablation configurations run end to end") {
  WorldConfig wc;
  wc.t_out = 8;
  auto e = make_arm("arm6");
  auto rig = make_rig();
  SceneSpec scene = sample_scene(e, Task::reach, 1, 41, wc);
  ExpertEpisode ep = expert_policy(e, scene, wc);
  DiffusionSchedule sched;

  for (int id = 1; id <= 4; ++id) {
    PolicyConfig cfg = tiny_cfg();
    if (id == 1) {
      cfg.use_depth = false;
      cfg.use_spatial_enhancer = false;
    } else if (id == 2) {
      cfg.use_depth = false;
    } else if (id == 3) {
      cfg.frame_mode = FrameMode::camera;
    } else {
      cfg.use_jga = false;
    }
    SemPolicy pol(cfg, 17);
    auto points = pol.rig_points(rig, wc.grid_h, wc.grid_w);
    Observation obs = make_obs(e, scene, wc, rig);
    Rng rng(7);
    auto b = pol.loss(e, obs, expert_chunk(ep, e.num_joints(), 8), points,
                      sched, rng);
    CHECK(std::isfinite(b.total.item()));
    if (id == 1) CHECK(b.depth == 0.0);  // no enhancer -> no depth head
    Rng rs(11);
    auto act = pol.predict_action(e, obs, points, sched, 2, rs);
    CHECK(act.size() == static_cast<size_t>(e.num_joints()) * 8);
  }
}
