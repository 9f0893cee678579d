#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "semkit/world.hpp"

using namespace semkit;

namespace {

double dist3(const Vec3& a, const Vec3& b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) +
                   (a.z - b.z) * (a.z - b.z));
}

// the renderer's sphere set, rebuilt independently for the ray-march oracle
struct OracleScene {
  struct Sphere {
    Vec3 c;
    double r;
  };
  std::vector<Sphere> spheres;
  double table_extent = 0.8;

  static OracleScene from(const ToyWorld& sim, const WorldConfig& cfg) {
    OracleScene o;
    for (const Vec3& p : sim.objects())
      o.spheres.push_back({p, cfg.object_radius});
    auto poses = sim.embodiment().fk(sim.q());
    o.spheres.push_back({{0, 0, 0.05}, 0.045});
    for (size_t i = 0; i < poses.size(); ++i) {
      o.spheres.push_back({poses[i].p, 0.04});
      const int par = sim.embodiment().joints()[i].parent;
      const Vec3 pp = par < 0 ? Vec3{0, 0, 0} : poses[par].p;
      o.spheres.push_back({{0.5 * (pp.x + poses[i].p.x),
                            0.5 * (pp.y + poses[i].p.y),
                            0.5 * (pp.z + poses[i].p.z)},
                           0.04});
    }
    return o;
  }

  // first-hit distance along the ray by fine marching; -1 when nothing hit
  double march(const Vec3& org, const Vec3& dir, double max_s) const {
    const double step = 1e-4;
    for (double s = step; s < max_s; s += step) {
      const Vec3 p{org.x + s * dir.x, org.y + s * dir.y, org.z + s * dir.z};
      for (const auto& sp : spheres)
        if (dist3(p, sp.c) <= sp.r) return s;
      if (p.z <= 0 && std::abs(p.x) < table_extent &&
          std::abs(p.y) < table_extent)
        return s;
    }
    return -1;
  }
};

}  // namespace

TEST_CASE("renderer: rays that miss everything are background") {
  WorldConfig cfg;
  auto e = make_arm("arm6");
  SceneSpec scene;  // no objects at all
  scene.task = Task::reach;
  scene.goal = {0.3, 0, 0.2};
  ToyWorld sim(e, scene, cfg);

  // a camera looking straight up sees neither arm, table, nor objects
  CameraView up;
  up.name = "up";
  up.intrinsic = {5, 0, 3, 0, 5, 3, 0, 0, 1};
  // camera at (0, 0, 1.5) looking +z away from the scene: R maps world z
  // to camera z via identity, translation lifts it above everything
  up.extrinsic = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, -1.5, 0, 0, 0, 1};
  CameraRig rig({up});
  auto grid = sim.observe(rig);
  const auto& vg = grid.views[0];
  for (int64_t c = 0; c < 36; ++c) {
    for (int ch = 0; ch < cfg.c_img; ++ch) {
      if (ch == 4 || ch == 5) continue;  // offsets are zero w/o objects too
      CHECK(vg.fimg.values()[c * cfg.c_img + ch] == 0.0);
    }
    CHECK(vg.depth[c] == cfg.bg_depth);
    CHECK(vg.depth_valid[c] == 0);
  }
}

TEST_CASE("renderer: sphere on the optical axis reports its exact depth") {
  WorldConfig cfg;
  auto e = make_arm("arm6");
  SceneSpec scene;
  scene.task = Task::reach;
  scene.objects = {{2.0, 0, 0.2}};  // far from the arm, on the camera axis
  scene.object_class = {0};
  scene.goal = scene.objects[0];
  ToyWorld sim(e, scene, cfg);

  // camera at (1,0,0.2) looking along +x; principal point at the center of
  // cell (1,1) of a 2x2 grid so the center ray is the optical axis
  CameraView v;
  v.name = "axis";
  v.intrinsic = {5, 0, 1.5, 0, 5, 1.5, 0, 0, 1};
  // camera axes: x_cam = -y_w, y_cam = -z_w, z_cam = +x_w
  v.extrinsic = {0, -1, 0, 0, 0, 0, -1, 0.2, 1, 0, 0, -1.0, 0, 0, 0, 1};
  CameraRig rig({v});
  WorldConfig small = cfg;
  small.grid_h = small.grid_w = 3;
  ToyWorld sim2(e, scene, small);
  auto grid = sim2.observe(rig);
  const int64_t center = 1 * 3 + 1;
  const double want = 2.0 - 1.0 - cfg.object_radius;
  CHECK(grid.views[0].depth_valid[center] == 1);
  CHECK(grid.views[0].depth[center] == doctest::Approx(want).epsilon(1e-9));
  CHECK(grid.views[0].fimg.values()[center * cfg.c_img + 0] == 1.0);
}

TEST_CASE("renderer depth matches a fine ray-march oracle") {
  WorldConfig cfg;
  auto e = make_arm("arm6");
  SceneSpec scene = sample_scene(e, Task::push, 1, 77, cfg);
  ToyWorld sim(e, scene, cfg);
  auto rig = make_rig();
  auto grid = sim.observe(rig);
  auto oracle = OracleScene::from(sim, cfg);

  int checked = 0;
  Rng rng(123);
  while (checked < 100) {
    const int v = static_cast<int>(rng.randint(2));
    const int i = static_cast<int>(rng.randint(cfg.grid_h));
    const int j = static_cast<int>(rng.randint(cfg.grid_w));
    const Vec3 cam = rig.unproject(v, 0, 0, 0.0);
    const Vec3 p1 = rig.unproject(v, j + 0.5, i + 0.5, 1.0);
    Vec3 dir{p1.x - cam.x, p1.y - cam.y, p1.z - cam.z};
    const double n = std::sqrt(dir.x * dir.x + dir.y * dir.y + dir.z * dir.z);
    dir = {dir.x / n, dir.y / n, dir.z / n};
    const double s = oracle.march(cam, dir, 3.0);
    const auto& vg = grid.views[v];
    const int64_t cell = static_cast<int64_t>(i) * cfg.grid_w + j;
    if (s < 0) {
      CHECK(vg.depth_valid[cell] == 0);
    } else {
      // convert the renderer's camera-z depth back to ray length
      const double dz = rig.project(v, {cam.x + dir.x, cam.y + dir.y,
                                        cam.z + dir.z}).z;
      CHECK(std::abs(vg.depth[cell] / dz - s) < 1e-3);
    }
    ++checked;
  }
}

TEST_CASE("renderer is deterministic") {
  WorldConfig cfg;
  auto e = make_arm("arm6");
  SceneSpec scene = sample_scene(e, Task::reach, 0, 5, cfg);
  ToyWorld sim(e, scene, cfg);
  auto rig = make_rig();
  auto a = sim.observe(rig);
  auto b = sim.observe(rig);
  for (size_t v = 0; v < a.views.size(); ++v) {
    CHECK(a.views[v].fimg.values() == b.views[v].fimg.values());
    CHECK(a.views[v].fdepth.values() == b.views[v].fdepth.values());
    CHECK(a.views[v].depth == b.views[v].depth);
  }
}

TEST_CASE("min-jerk boundary conditions") {
  CHECK(min_jerk(2.0, 5.0, 0, 10) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(min_jerk(2.0, 5.0, 10, 10) == doctest::Approx(5.0).epsilon(1e-12));
  // zero endpoint velocity: symmetric difference at the ends is ~0
  const double h = 1e-6;
  auto qa = [&](double u) {
    const double w = u * u * u * (10 + u * (-15 + 6 * u));
    return 2.0 + 3.0 * w;
  };
  CHECK(std::abs((qa(h) - qa(0)) / h) < 1e-8);
  CHECK(std::abs((qa(1) - qa(1 - h)) / h) < 1e-8);
  // monotone interpolation never leaves [a, b]
  for (int s = 0; s <= 20; ++s) {
    const double v = min_jerk(-1.0, 1.0, s, 20);
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
    if (s) CHECK(v >= min_jerk(-1.0, 1.0, s - 1, 20));
  }
}

TEST_CASE("expert succeeds on all tasks and respects limits") {
  WorldConfig cfg;
  for (const std::string arm : {"arm6", "arm8"}) {
    auto e = make_arm(arm);
    for (Task task : {Task::reach, Task::push, Task::pick_place}) {
      for (int diff : {0, 1}) {
        const uint64_t seed = 1000 + 7 * static_cast<int>(task) + diff;
        SceneSpec scene = sample_scene(e, task, diff, seed, cfg);
        ExpertEpisode ep = expert_policy(e, scene, cfg);
        CHECK(ep.success);
        REQUIRE(static_cast<int>(ep.q.size()) == cfg.episode_len + 1);
        for (const auto& q : ep.q)
          for (int i = 0; i < e.num_joints(); ++i) {
            CHECK(q[i] >= e.joints()[i].lo - 1e-12);
            CHECK(q[i] <= e.joints()[i].hi + 1e-12);
          }
        if (task == Task::reach) {
          const Vec3 fin = e.fk(ep.q.back()).back().p;
          CHECK(dist3(fin, scene.goal) < 5e-3);
        }
      }
    }
  }
}

TEST_CASE("episodes are bit-reproducible from seed and config") {
  WorldConfig cfg;
  auto e = make_arm("arm6");
  SceneSpec s1 = sample_scene(e, Task::pick_place, 1, 42, cfg);
  SceneSpec s2 = sample_scene(e, Task::pick_place, 1, 42, cfg);
  CHECK(scene_to_json(s1) == scene_to_json(s2));
  ExpertEpisode a = expert_policy(e, s1, cfg);
  ExpertEpisode b = expert_policy(e, s2, cfg);
  for (size_t i = 0; i < a.q.size(); ++i) CHECK(a.q[i] == b.q[i]);
}

TEST_CASE("camera-height suite: translation-only z offsets") {
  auto offs = camera_height_offsets();
  REQUIRE(offs.size() == 5);
  CHECK(offs[2] == 0.0);
  auto base = make_rig(0.0);
  for (double dz : offs) {
    auto rig = make_rig(dz);
    for (int v = 0; v < rig.num_views(); ++v) {
      const auto& a = base.view(v).extrinsic;
      const auto& b = rig.view(v).extrinsic;
      // rotations identical
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) CHECK(a[r * 4 + c] == b[r * 4 + c]);
      if (dz == 0.0) CHECK(a == b);
      // camera centers differ by exactly (0, 0, dz)
      const Vec3 ca = base.unproject(v, 0, 0, 0.0);
      const Vec3 cb = rig.unproject(v, 0, 0, 0.0);
      CHECK(cb.x == doctest::Approx(ca.x).epsilon(1e-12));
      CHECK(cb.y == doctest::Approx(ca.y).epsilon(1e-12));
      CHECK(cb.z - ca.z == doctest::Approx(dz).epsilon(1e-9));
    }
  }
}

TEST_CASE("episode samples: anchors and action alignment") {
  WorldConfig cfg;
  auto e = make_arm("arm6");
  SceneSpec scene = sample_scene(e, Task::reach, 0, 9, cfg);
  ExpertEpisode ep = expert_policy(e, scene, cfg);
  auto rig = make_rig();
  auto samples = episode_samples(e, ep, rig, cfg);
  REQUIRE(static_cast<int>(samples.size()) ==
          cfg.episode_len / cfg.anchor_stride);
  const int nj = e.num_joints();
  for (size_t k = 0; k < samples.size(); ++k) {
    const int s = static_cast<int>(k) * cfg.anchor_stride;
    // state row i starts with the current joint angle
    for (int i = 0; i < nj; ++i)
      CHECK(samples[k].state[i * 8] == doctest::Approx(ep.q[s][i]));
    // first action of the chunk is the next expert step
    for (int i = 0; i < nj; ++i)
      CHECK(samples[k].actions[i * cfg.t_out] == ep.q[s + 1][i]);
    CHECK(samples[k].instruction_id == scene.instruction_id);
  }
}

TEST_CASE("episode file and manifest round trips") {
  WorldConfig cfg;
  auto e = make_arm("arm8");
  SceneSpec scene = sample_scene(e, Task::push, 0, 31, cfg);
  ExpertEpisode ep = expert_policy(e, scene, cfg);
  const std::string path = "test_episode.bin";
  save_episode(path, ep);
  ExpertEpisode back = load_episode(path);
  CHECK(scene_to_json(back.scene) == scene_to_json(ep.scene));
  CHECK(back.success == ep.success);
  REQUIRE(back.q.size() == ep.q.size());
  for (size_t i = 0; i < ep.q.size(); ++i) CHECK(back.q[i] == ep.q[i]);
  std::remove(path.c_str());

  Manifest m;
  m.seeds = {1, 2, 3};
  m.paths = {"a.bin", "b.bin", "c.bin"};
  save_manifest("test_manifest.txt", m);
  Manifest mb = load_manifest("test_manifest.txt");
  CHECK(mb.seeds == m.seeds);
  CHECK(mb.paths == m.paths);

  // corrupting a line must break the hash check
  {
    std::ifstream in("test_manifest.txt");
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    in.close();
    text.replace(text.rfind("c.bin"), 5, "x.bin");
    std::ofstream out("test_manifest.txt");
    out << text;
  }
  CHECK_THROWS_AS(load_manifest("test_manifest.txt"), std::runtime_error);
  std::remove("test_manifest.txt");
}

TEST_CASE("scene json round trip") {
  WorldConfig cfg;
  auto e = make_arm("arm6");
  SceneSpec s = sample_scene(e, Task::pick_place, 1, 13, cfg);
  SceneSpec back = scene_from_json(scene_to_json(s));
  CHECK(scene_to_json(back) == scene_to_json(s));
  CHECK(back.task == s.task);
  CHECK(back.objects.size() == s.objects.size());
}

TEST_CASE("pick-place simulator: attach requires a closed gripper") {
  WorldConfig cfg;
  auto e = make_arm("arm6");
  SceneSpec scene = sample_scene(e, Task::pick_place, 0, 3, cfg);
  ExpertEpisode ep = expert_policy(e, scene, cfg);

  // replaying with the gripper forced open must never attach
  ToyWorld sim(e, scene, cfg);
  for (size_t s = 1; s < ep.q.size(); ++s) {
    auto q = ep.q[s];
    q.back() = e.joints().back().hi;
    sim.step(q);
    CHECK(!sim.attached());
  }
  CHECK(!sim.success());
}
