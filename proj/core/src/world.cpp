#include "semkit/world.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace semkit {

namespace {

double dist3(const Vec3& a, const Vec3& b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) +
                   (a.z - b.z) * (a.z - b.z));
}

double dist_xy(const Vec3& a, const Vec3& b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y));
}

Vec3 vsub(const Vec3& a, const Vec3& b) {
  return {a.x - b.x, a.y - b.y, a.z - b.z};
}

Vec3 vcross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z,
          a.x * b.y - a.y * b.x};
}

double vdot(const Vec3& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

Vec3 vnorm(const Vec3& a) {
  const double n = std::sqrt(vdot(a, a));
  return {a.x / n, a.y / n, a.z / n};
}

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

JointSpec rev(const std::string& name, int parent, double link_z,
              const std::array<double, 3>& axis, double lo, double hi) {
  JointSpec j;
  j.name = name;
  j.parent = parent;
  j.xyz = {0, 0, link_z};
  j.axis = axis;
  j.kind = JointKind::revolute;
  j.lo = lo;
  j.hi = hi;
  return j;
}

}  // namespace

std::string task_name(Task t) {
  switch (t) {
    case Task::reach: return "reach";
    case Task::push: return "push";
    case Task::pick_place: return "pick_place";
  }
  throw std::invalid_argument("bad task");
}

Task task_from_name(const std::string& s) {
  if (s == "reach") return Task::reach;
  if (s == "push") return Task::push;
  if (s == "pick_place") return Task::pick_place;
  throw std::invalid_argument("unknown task: " + s);
}

Embodiment make_arm(const std::string& name) {
  const std::array<double, 3> az{0, 0, 1}, ay{0, 1, 0};
  if (name == "arm6") {
    std::vector<JointSpec> js;
    js.push_back(rev("base_yaw", -1, 0.10, az, -2.6, 2.6));
    js.push_back(rev("shoulder", 0, 0.05, ay, -0.3, 2.0));
    js.push_back(rev("elbow", 1, 0.22, ay, -0.3, 2.0));
    js.push_back(rev("wrist_pitch", 2, 0.20, ay, -1.5, 1.5));
    js.push_back(rev("wrist_roll", 3, 0.12, az, -2.6, 2.6));
    JointSpec g = rev("gripper", 4, 0.06, az, 0.0, 0.04);
    g.kind = JointKind::prismatic;
    js.push_back(g);
    return Embodiment("arm6", js);
  }
  if (name == "arm8") {
    std::vector<JointSpec> js;
    js.push_back(rev("base_yaw", -1, 0.08, az, -2.6, 2.6));
    js.push_back(rev("shoulder", 0, 0.06, ay, -0.3, 2.0));
    js.push_back(rev("upper", 1, 0.18, ay, -0.3, 2.0));
    js.push_back(rev("arm_roll", 2, 0.05, az, -2.6, 2.6));
    js.push_back(rev("elbow", 3, 0.18, ay, -1.5, 1.5));
    js.push_back(rev("wrist_pitch", 4, 0.14, ay, -1.5, 1.5));
    js.push_back(rev("wrist_roll", 5, 0.05, az, -2.6, 2.6));
    JointSpec g = rev("gripper", 6, 0.05, az, 0.0, 0.04);
    g.kind = JointKind::prismatic;
    js.push_back(g);
    return Embodiment("arm8", js);
  }
  throw std::invalid_argument("unknown embodiment: " + name);
}

namespace {

CameraView look_at(const std::string& name, const Vec3& pos, const Vec3& tgt,
                   double f, double c) {
  Vec3 ez = vnorm(vsub(tgt, pos));
  Vec3 ex = vnorm(vcross({0, 0, 1}, ez));
  Vec3 ey = vcross(ez, ex);
  CameraView v;
  v.name = name;
  v.intrinsic = {f, 0, c, 0, f, c, 0, 0, 1};
  auto row = [&](const Vec3& e) { return -vdot(e, pos); };
  v.extrinsic = {ex.x, ex.y, ex.z, row(ex), ey.x, ey.y, ey.z, row(ey),
                 ez.x, ez.y, ez.z, row(ez), 0,    0,    0,    1};
  return v;
}

}  // namespace

CameraRig make_rig(double z_offset) {
  const double f = 5.0, c = 3.0;
  std::vector<CameraView> vs;
  vs.push_back(look_at("front", {0.85, 0.0, 0.55}, {0.28, 0.0, 0.12}, f, c));
  vs.push_back(look_at("side", {0.35, -0.80, 0.50}, {0.28, 0.05, 0.12}, f, c));
  // raise the camera centers without re-aiming: rotation stays fixed, the
  // translation absorbs -R * (0, 0, dz)
  for (CameraView& v : vs)
    for (int r = 0; r < 3; ++r)
      v.extrinsic[r * 4 + 3] -= z_offset * v.extrinsic[r * 4 + 2];
  return CameraRig(vs);
}

std::vector<double> camera_height_offsets() {
  return {-0.10, -0.05, 0.0, 0.05, 0.10};
}

// ---- simulator ----

ToyWorld::ToyWorld(const Embodiment& e, const SceneSpec& scene,
                   const WorldConfig& cfg)
    : e_(e), scene_(scene), cfg_(cfg), q_(e.home()), objects_(scene.objects) {
  if (scene.objects.size() != scene.object_class.size())
    throw std::invalid_argument("scene: object/class size mismatch");
  q_.back() = e.joints().back().hi;  // episodes start with the gripper open
}

Vec3 ToyWorld::ee() const { return e_.fk(q_).back().p; }

bool ToyWorld::gripper_closed() const {
  const JointSpec& g = e_.joints().back();
  return q_.back() < 0.5 * (g.lo + g.hi) - 1e-9;
}

void ToyWorld::step(const std::vector<double>& q_target) {
  q_ = e_.clamp_to_limits(q_target);
  if (scene_.task == Task::reach || objects_.empty() ||
      scene_.object_class[0] != 1)
    return;
  const Vec3 tip = ee();
  if (attached_ < 0) {
    const bool grip_ok =
        scene_.task == Task::push ? true : gripper_closed();
    if (grip_ok && dist3(tip, objects_[0]) < cfg_.attach_dist) {
      attached_ = 0;
      was_attached_ = true;
    }
  } else if (scene_.task == Task::pick_place && !gripper_closed()) {
    // release: the object drops straight down onto the table
    objects_[0].z = cfg_.object_radius;
    attached_ = -1;
  }
  if (attached_ == 0) objects_[0] = tip;
}

bool ToyWorld::success() const {
  switch (scene_.task) {
    case Task::reach:
      return dist3(ee(), scene_.goal) < cfg_.success_dist;
    case Task::push:
      return !objects_.empty() &&
             dist3(objects_[0], scene_.goal) < cfg_.success_dist;
    case Task::pick_place:
      return !objects_.empty() && attached_ < 0 && was_attached_ &&
             dist_xy(objects_[0], scene_.goal) < cfg_.success_dist;
  }
  return false;
}

FeatureGrid ToyWorld::observe(const CameraRig& rig) const {
  struct Sphere {
    Vec3 c;
    double r;
    int cls;  // 0 marker, 1 block, 2 arm
    int obj_index;
  };
  std::vector<Sphere> spheres;
  for (size_t i = 0; i < objects_.size(); ++i)
    spheres.push_back({objects_[i], cfg_.object_radius,
                       scene_.object_class[i], static_cast<int>(i)});
  auto poses = e_.fk(q_);
  spheres.push_back({{0, 0, 0.05}, 0.045, 2, -1});
  for (size_t i = 0; i < poses.size(); ++i) {
    spheres.push_back({poses[i].p, 0.04, 2, -1});
    const Vec3 par = e_.joints()[i].parent < 0
                         ? Vec3{0, 0, 0}
                         : poses[e_.joints()[i].parent].p;
    spheres.push_back({{0.5 * (par.x + poses[i].p.x),
                        0.5 * (par.y + poses[i].p.y),
                        0.5 * (par.z + poses[i].p.z)},
                       0.04, 2, -1});
  }

  FeatureGrid grid;
  grid.h = cfg_.grid_h;
  grid.w = cfg_.grid_w;
  const int64_t cells = static_cast<int64_t>(grid.h) * grid.w;
  // coarse soft-binned depth encoding for F^D
  std::vector<double> dbins(cfg_.c_depth);
  const double dlo = 0.15, dhi = 1.6;
  for (int b = 0; b < cfg_.c_depth; ++b)
    dbins[b] = dlo + (dhi - dlo) * b / (cfg_.c_depth - 1);
  const double dsig = (dhi - dlo) / (cfg_.c_depth - 1);

  for (int v = 0; v < rig.num_views(); ++v) {
    ViewGrid vg;
    std::vector<double> fi(cells * cfg_.c_img, 0.0);
    std::vector<double> fd(cells * cfg_.c_depth, 0.0);
    vg.depth.assign(cells, cfg_.bg_depth);
    vg.depth_valid.assign(cells, 0);
    const Vec3 cam = rig.unproject(v, 0, 0, 0.0);
    for (int i = 0; i < grid.h; ++i)
      for (int j = 0; j < grid.w; ++j) {
        const int64_t cell = static_cast<int64_t>(i) * grid.w + j;
        const double u = j + 0.5, vv = i + 0.5;
        const Vec3 dir = vnorm(vsub(rig.unproject(v, u, vv, 1.0), cam));
        const double dz_cam = rig.project(v, {cam.x + dir.x, cam.y + dir.y,
                                              cam.z + dir.z}).z;
        // nearest hit along the ray
        double best_s = 1e30;
        int best_cls = -1, best_obj = -1;
        for (const Sphere& sp : spheres) {
          const Vec3 oc = vsub(sp.c, cam);
          const double b = vdot(oc, dir);
          const double disc = b * b - vdot(oc, oc) + sp.r * sp.r;
          if (disc < 0) continue;
          const double s = b - std::sqrt(disc);
          if (s > 1e-6 && s < best_s) {
            best_s = s;
            best_cls = sp.cls;
            best_obj = sp.obj_index;
          }
        }
        if (dir.z < -1e-9) {  // table plane z = 0, bounded square
          const double s = -cam.z / dir.z;
          const double px = cam.x + s * dir.x, py = cam.y + s * dir.y;
          if (s > 1e-6 && s < best_s && std::abs(px) < 0.8 &&
              std::abs(py) < 0.8) {
            best_s = s;
            best_cls = 3;
            best_obj = -1;
          }
        }
        double* f = &fi[cell * cfg_.c_img];
        if (best_cls >= 0) {
          if (best_cls <= 1) f[best_cls] = 1.0;          // marker / block
          if (best_cls == 2) f[2] = 1.0;                 // arm
          if (best_cls == 3) f[3] = 1.0;                 // table
          if (best_obj == 0) f[6] = 1.0;                 // the manipuland
          f[7] = 1.0;                                    // valid
          const double depth = best_s * dz_cam;
          vg.depth[cell] = depth;
          vg.depth_valid[cell] = 1;
          for (int b = 0; b < cfg_.c_depth; ++b) {
            const double z = (depth - dbins[b]) / dsig;
            fd[cell * cfg_.c_depth + b] = std::exp(-0.5 * z * z);
          }
        }
        // image-plane offset toward the nearest scene object's projection
        double best_perp = 1e30;
        int near_obj = -1;
        for (size_t o = 0; o < objects_.size(); ++o) {
          const Vec3 oc = vsub(objects_[o], cam);
          const double along = vdot(oc, dir);
          if (along <= 0) continue;
          const double perp2 = vdot(oc, oc) - along * along;
          if (perp2 < best_perp) {
            best_perp = perp2;
            near_obj = static_cast<int>(o);
          }
        }
        if (near_obj >= 0) {
          const Vec3 pr = rig.project(v, objects_[near_obj]);
          if (pr.z > 1e-6) {
            const double span = grid.w;
            f[4] = std::clamp((pr.x - u) / span, -1.0, 1.0);
            f[5] = std::clamp((pr.y - vv) / span, -1.0, 1.0);
          }
        }
      }
    vg.fimg = Tensor::from({cells, cfg_.c_img}, std::move(fi));
    vg.fdepth = Tensor::from({cells, cfg_.c_depth}, std::move(fd));
    grid.views.push_back(std::move(vg));
  }
  return grid;
}

// ---- scene sampling / expert ----

namespace {

struct SceneDraw {
  SceneSpec scene;
  std::vector<double> q_obj, q_goal;
};

// samples a joint configuration inside shrunken limits; the gripper is set
// explicitly by callers
std::vector<double> sample_config(const Embodiment& e, double frac, Rng& rng) {
  std::vector<double> q(e.num_joints());
  for (int i = 0; i < e.num_joints(); ++i) {
    const JointSpec& j = e.joints()[i];
    const double mid = 0.5 * (j.lo + j.hi), half = 0.5 * (j.hi - j.lo);
    q[i] = mid + frac * half * rng.uniform(-1, 1);
  }
  return q;
}

// Target configurations live on a 3-DOF submanifold: only the proximal
// yaw/shoulder/elbow triple is drawn, distal joints stay at mid-range.
// With the elbow's positive range this makes position -> configuration
// single-valued, so imitation targets are a function of the scene; drawing
// all joints would pair equal goals with different expert configurations
// and the loss-optimal predictor would average them.
std::vector<double> sample_target_config(const Embodiment& e, double frac,
                                         Rng& rng) {
  std::vector<double> q = e.home();
  for (int i = 0; i < 3 && i < e.num_joints(); ++i) {
    const JointSpec& j = e.joints()[i];
    const double mid = 0.5 * (j.lo + j.hi), half = 0.5 * (j.hi - j.lo);
    q[i] = mid + frac * half * rng.uniform(-1, 1);
  }
  return q;
}

bool ee_ok(const Vec3& p) {
  return p.z > 0.05 && p.z < 0.45 && p.x > 0.05 && p.x < 0.62 &&
         std::abs(p.y) < 0.45;
}

SceneDraw scene_draw(const Embodiment& e, Task task, int difficulty,
                     uint64_t seed, const WorldConfig& cfg) {
  const double frac = difficulty == 0 ? 0.55 : 0.8;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Rng rng(Rng(seed).fork("scene/" + std::to_string(attempt)).u64());
    SceneDraw d;
    d.scene.embodiment = e.name();
    d.scene.task = task;
    d.scene.difficulty = difficulty;
    d.scene.seed = seed;

    d.q_goal = sample_target_config(e, frac, rng);
    d.q_goal.back() = task == Task::pick_place ? e.joints().back().lo
                                               : e.joints().back().hi;
    const Vec3 goal = e.fk(d.q_goal).back().p;
    if (!ee_ok(goal)) continue;
    d.scene.goal = goal;

    if (task == Task::reach) {
      d.scene.objects = {goal};
      d.scene.object_class = {0};
    } else {
      d.q_obj = sample_target_config(e, frac, rng);
      d.q_obj.back() = e.joints().back().hi;  // approach with gripper open
      // the grasp point is where the tip ends once the gripper closes, so
      // for pick-place the object sits at the closed-gripper tip
      std::vector<double> q_at_obj = d.q_obj;
      if (task == Task::pick_place) q_at_obj.back() = e.joints().back().lo;
      const Vec3 obj = e.fk(q_at_obj).back().p;
      if (!ee_ok(obj) || dist3(obj, goal) < 0.10) continue;
      d.scene.objects = {obj, goal};
      d.scene.object_class = {1, 0};
    }
    if (difficulty == 1) {  // visual distractor, never attachable
      Rng dr = rng.fork("distractor");
      const Vec3 p = e.fk(sample_config(e, 0.8, dr)).back().p;
      if (!ee_ok(p) || dist3(p, d.scene.objects[0]) < 0.12) continue;
      d.scene.objects.push_back(p);
      d.scene.object_class.push_back(0);
    }
    const int base_id = static_cast<int>(task) * 2 + difficulty;
    d.scene.instruction_id =
        (task == Task::reach && rng.uniform(0, 1) < 0.5) ? 6 + difficulty
                                                         : base_id;
    return d;
  }
  throw std::runtime_error("scene_draw: no reachable scene after 1000 tries");
}

}  // namespace

double min_jerk(double a, double b, int s, int n) {
  const double u = std::min(1.0, std::max(0.0, double(s) / n));
  const double w = u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
  return a + (b - a) * w;
}

ExpertEpisode expert_policy(const Embodiment& e, const SceneSpec& scene,
                            const WorldConfig& cfg) {
  SceneDraw d = scene_draw(e, scene.task, scene.difficulty, scene.seed, cfg);
  const int nj = e.num_joints();
  const double open = e.joints().back().hi, closed = e.joints().back().lo;

  // waypoint rows: {config, duration}
  std::vector<std::pair<std::vector<double>, int>> segs;
  std::vector<double> home = e.home();
  home.back() = open;
  const int T = cfg.episode_len;
  if (scene.task == Task::reach) {
    segs = {{d.q_goal, (2 * T) / 3}};
  } else if (scene.task == Task::push) {
    segs = {{d.q_obj, (2 * T) / 5}, {d.q_goal, (2 * T) / 5}};
  } else {
    std::vector<double> grasp = d.q_obj;
    grasp.back() = closed;
    std::vector<double> drop = d.q_goal;
    drop.back() = open;
    segs = {{d.q_obj, T / 3}, {grasp, T / 12}, {d.q_goal, (2 * T) / 5},
            {drop, T / 12}};
  }

  ExpertEpisode ep;
  ep.scene = d.scene;
  ep.q.push_back(home);
  std::vector<double> cur = home;
  for (const auto& [tgt, dur] : segs) {
    for (int s = 1; s <= dur; ++s) {
      std::vector<double> q(nj);
      for (int i = 0; i < nj; ++i) q[i] = min_jerk(cur[i], tgt[i], s, dur);
      ep.q.push_back(q);
    }
    cur = tgt;
  }
  while (static_cast<int>(ep.q.size()) < T + 1) ep.q.push_back(cur);
  ep.q.resize(T + 1);

  ToyWorld sim(e, ep.scene, cfg);
  for (int s = 1; s <= T; ++s) sim.step(ep.q[s]);
  ep.success = sim.success();
  return ep;
}

SceneSpec sample_scene(const Embodiment& e, Task task, int difficulty,
                       uint64_t seed, const WorldConfig& cfg) {
  // walk derived seeds until the scripted expert actually succeeds, so
  // every emitted scene is achievable
  for (uint64_t k = 0; k < 64; ++k) {
    const uint64_t s = Rng(seed).fork("ep/" + std::to_string(k)).u64();
    SceneSpec scene =
        scene_draw(e, task, difficulty, s, cfg).scene;
    ExpertEpisode ep = expert_policy(e, scene, cfg);
    if (ep.success) return scene;
  }
  throw std::runtime_error("sample_scene: expert kept failing");
}

std::vector<Sample> episode_samples(const Embodiment& e,
                                    const ExpertEpisode& ep,
                                    const CameraRig& rig,
                                    const WorldConfig& cfg) {
  const int T = static_cast<int>(ep.q.size()) - 1;
  const int nj = e.num_joints();
  std::vector<Sample> out;
  ToyWorld sim(e, ep.scene, cfg);
  for (int s = 0; s <= T; ++s) {
    if (s > 0) sim.step(ep.q[s]);
    if (s % cfg.anchor_stride || s + 1 > T) continue;
    Sample smp;
    smp.state = e.enhanced_state(sim.q());
    smp.grid = sim.observe(rig);
    smp.instruction_id = ep.scene.instruction_id;
    smp.actions.resize(static_cast<size_t>(nj) * cfg.t_out);
    for (int t = 0; t < cfg.t_out; ++t) {
      const int idx = std::min(s + 1 + t, T);
      for (int i = 0; i < nj; ++i)
        smp.actions[static_cast<size_t>(i) * cfg.t_out + t] = ep.q[idx][i];
    }
    out.push_back(std::move(smp));
  }
  return out;
}

// ---- serialization ----

std::string scene_to_json(const SceneSpec& s) {
  nlohmann::json j;
  j["embodiment"] = s.embodiment;
  j["task"] = task_name(s.task);
  j["difficulty"] = s.difficulty;
  j["goal"] = {s.goal.x, s.goal.y, s.goal.z};
  j["instruction_id"] = s.instruction_id;
  j["rig"] = s.rig;
  j["seed"] = s.seed;
  nlohmann::json objs = nlohmann::json::array();
  for (size_t i = 0; i < s.objects.size(); ++i)
    objs.push_back({{"pos", {s.objects[i].x, s.objects[i].y, s.objects[i].z}},
                    {"class", s.object_class[i]}});
  j["objects"] = objs;
  return j.dump();
}

SceneSpec scene_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  SceneSpec s;
  s.embodiment = j.at("embodiment").get<std::string>();
  s.task = task_from_name(j.at("task").get<std::string>());
  s.difficulty = j.at("difficulty").get<int>();
  auto g = j.at("goal");
  s.goal = {g[0].get<double>(), g[1].get<double>(), g[2].get<double>()};
  s.instruction_id = j.at("instruction_id").get<int>();
  s.rig = j.at("rig").get<std::string>();
  s.seed = j.at("seed").get<uint64_t>();
  for (const auto& o : j.at("objects")) {
    auto p = o.at("pos");
    s.objects.push_back(
        {p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
    s.object_class.push_back(o.at("class").get<int>());
  }
  return s;
}

void save_episode(const std::string& path, const ExpertEpisode& ep) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_episode: cannot open " + path);
  nlohmann::json hdr;
  hdr["version"] = 1;
  hdr["scene"] = nlohmann::json::parse(scene_to_json(ep.scene));
  hdr["steps"] = ep.q.size() - 1;
  hdr["nj"] = ep.q.empty() ? 0 : ep.q[0].size();
  hdr["success"] = ep.success;
  f << hdr.dump() << "\n";
  for (const auto& row : ep.q)
    f.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(double)));
  if (!f) throw std::runtime_error("save_episode: write failed: " + path);
}

ExpertEpisode load_episode(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_episode: cannot open " + path);
  std::string line;
  std::getline(f, line);
  nlohmann::json hdr = nlohmann::json::parse(line);
  if (hdr.at("version").get<int>() != 1)
    throw std::runtime_error("load_episode: unsupported version");
  ExpertEpisode ep;
  ep.scene = scene_from_json(hdr.at("scene").dump());
  ep.success = hdr.at("success").get<bool>();
  const int steps = hdr.at("steps").get<int>();
  const int nj = hdr.at("nj").get<int>();
  ep.q.assign(steps + 1, std::vector<double>(nj));
  for (auto& row : ep.q) {
    f.read(reinterpret_cast<char*>(row.data()),
           static_cast<std::streamsize>(nj * sizeof(double)));
    if (!f) throw std::runtime_error("load_episode: truncated: " + path);
  }
  return ep;
}

std::string manifest_hash(const Manifest& m) {
  if (m.seeds.size() != m.paths.size())
    throw std::invalid_argument("manifest: seeds/paths size mismatch");
  std::ostringstream body;
  for (size_t i = 0; i < m.seeds.size(); ++i)
    body << m.seeds[i] << " " << m.paths[i] << "\n";
  std::ostringstream hx;
  hx << std::hex << fnv1a(body.str());
  return hx.str();
}

void save_manifest(const std::string& path, const Manifest& m) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_manifest: cannot open " + path);
  f << "semkit-manifest v1\n";
  f << "hash " << manifest_hash(m) << "\n";
  for (size_t i = 0; i < m.seeds.size(); ++i)
    f << m.seeds[i] << " " << m.paths[i] << "\n";
}

Manifest load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_manifest: cannot open " + path);
  std::string line;
  std::getline(f, line);
  if (line != "semkit-manifest v1")
    throw std::runtime_error("load_manifest: bad magic");
  Manifest m;
  std::getline(f, line);
  if (line.rfind("hash ", 0) != 0)
    throw std::runtime_error("load_manifest: missing hash");
  m.hash = line.substr(5);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    uint64_t seed;
    std::string p;
    is >> seed >> p;
    m.seeds.push_back(seed);
    m.paths.push_back(p);
  }
  if (manifest_hash(m) != m.hash)
    throw std::runtime_error("load_manifest: hash mismatch");
  return m;
}

}  // namespace semkit
