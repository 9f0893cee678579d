#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semkit/camera.hpp"
#include "semkit/enhancer.hpp"
#include "semkit/kinematics.hpp"
#include "semkit/rng.hpp"

namespace semkit {

enum class Task { reach, push, pick_place };

std::string task_name(Task t);
Task task_from_name(const std::string& s);

// Everything needed to reconstruct an episode deterministically.
struct SceneSpec {
  std::string embodiment = "arm6";
  Task task = Task::reach;
  int difficulty = 0;             // 0 or 1
  std::vector<Vec3> objects;      // object centers at episode start
  std::vector<int> object_class;  // 0 = marker, 1 = block
  Vec3 goal;
  int instruction_id = 0;         // index into the phrasing table
  std::string rig = "toy2";
  uint64_t seed = 0;
};

struct WorldConfig {
  int grid_h = 6, grid_w = 6;
  int episode_len = 48;           // control steps at 10 Hz
  int t_out = 16;                 // action-chunk horizon
  int anchor_stride = 8;          // training-sample spacing within an episode
  int c_img = 8, c_depth = 8;
  double object_radius = 0.03;
  double attach_dist = 0.035;     // kinematic grasp/contact threshold
  double success_dist = 0.025;
  double bg_depth = 2.0;          // reported depth when a ray escapes
};

// The two toy arms: arm6 = 5 revolute + prismatic gripper, arm8 adds two
// revolute joints with different link lengths.
Embodiment make_arm(const std::string& name);

// Two-view environment rig looking down at the workspace; z_offset raises
// both camera centers (extrinsic translation only).
CameraRig make_rig(double z_offset = 0.0);

// Number of distinct instruction phrasings in the toy instruction table.
constexpr int kNumInstructions = 8;

// Kinematic simulator for one episode: joint position control, boolean
// attachment for contact/grasping, pure success predicates.
class ToyWorld {
 public:
  ToyWorld(const Embodiment& e, const SceneSpec& scene, const WorldConfig& cfg);

  void step(const std::vector<double>& q_target);  // clamped to limits
  const std::vector<double>& q() const { return q_; }
  const std::vector<Vec3>& objects() const { return objects_; }
  Vec3 ee() const;
  bool attached() const { return attached_ >= 0; }
  bool success() const;

  // Renders per-view feature grids + exact depth for the current state.
  FeatureGrid observe(const CameraRig& rig) const;

  const Embodiment& embodiment() const { return e_; }
  const SceneSpec& scene() const { return scene_; }

 private:
  bool gripper_closed() const;
  const Embodiment& e_;
  SceneSpec scene_;
  WorldConfig cfg_;
  std::vector<double> q_;
  std::vector<Vec3> objects_;
  int attached_ = -1;  // object index carried by the arm
  bool was_attached_ = false;
};

// Rejection-samples a reachable scene; targets/objects are generated from
// random joint configurations so no inverse kinematics is needed.
SceneSpec sample_scene(const Embodiment& e, Task task, int difficulty,
                       uint64_t seed, const WorldConfig& cfg);

struct ExpertEpisode {
  SceneSpec scene;
  std::vector<std::vector<double>> q;  // [T+1][N_j], q[0] = home
  bool success = false;
};

// Scripted minimum-jerk expert through analytic joint-space waypoints.
// The returned trajectory has been verified in simulation.
ExpertEpisode expert_policy(const Embodiment& e, const SceneSpec& scene,
                            const WorldConfig& cfg);

// Quintic minimum-jerk interpolation from a to b over n steps; s = 0 -> a,
// s = n -> b; zero velocity and acceleration at both ends.
double min_jerk(double a, double b, int s, int n);

// One training sample: the observation at an anchor step plus the expert's
// next t_out joint positions.
struct Sample {
  std::vector<double> state;    // [N_j, 8] enhanced current state
  FeatureGrid grid;             // rendered observation
  int instruction_id = 0;
  std::vector<double> actions;  // [N_j, t_out] absolute joint positions
};

// Episode -> anchored training samples (renders observations via the sim).
std::vector<Sample> episode_samples(const Embodiment& e,
                                    const ExpertEpisode& ep,
                                    const CameraRig& rig,
                                    const WorldConfig& cfg);

// ---- dataset files ----
// One file per episode: JSON header line (version, scene) + little-endian
// f64 trajectory block. Samples are re-rendered on load (deterministic).
void save_episode(const std::string& path, const ExpertEpisode& ep);
ExpertEpisode load_episode(const std::string& path);

// Manifest: one "seed path" line per episode plus a content hash.
struct Manifest {
  std::vector<uint64_t> seeds;
  std::vector<std::string> paths;
  std::string hash;
};
std::string manifest_hash(const Manifest& m);  // hex FNV-1a of the body
void save_manifest(const std::string& path, const Manifest& m);
Manifest load_manifest(const std::string& path);

// camera_height mode: environment-camera z offsets in cm.
std::vector<double> camera_height_offsets();  // {-0.10,-0.05,0,0.05,0.10}

std::string scene_to_json(const SceneSpec& s);
SceneSpec scene_from_json(const std::string& text);

}  // namespace semkit
