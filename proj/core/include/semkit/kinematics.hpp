#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "semkit/tensor.hpp"

namespace semkit {

enum class JointKind { revolute, prismatic };

struct Quat {  // w, x, y, z
  double w = 1, x = 0, y = 0, z = 0;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

Quat quat_mul(const Quat& a, const Quat& b);
Vec3 quat_rotate(const Quat& q, const Vec3& v);
Quat quat_from_rpy(double roll, double pitch, double yaw);
Quat quat_canonical(const Quat& q);  // q_w >= 0
double quat_geodesic(const Quat& a, const Quat& b);

struct JointSpec {
  std::string name;
  int parent = -1;                    // -1: attached to the base frame
  Vec3 xyz;                           // link translation from parent frame
  Quat link_rot;                      // link rotation from parent frame
  std::array<double, 3> axis{0, 0, 1};
  JointKind kind = JointKind::revolute;
  double lo = -3.14, hi = 3.14;
};

// Immutable joint tree rooted at the base frame.
class Embodiment {
 public:
  Embodiment(std::string name, std::vector<JointSpec> joints);

  const std::string& name() const { return name_; }
  int num_joints() const { return static_cast<int>(joints_.size()); }
  const std::vector<JointSpec>& joints() const { return joints_; }

  // position + canonical quaternion of each joint's child frame, base frame
  struct Pose {
    Vec3 p;
    Quat q;
  };
  std::vector<Pose> fk(const std::vector<double>& angles) const;

  // rows [a, x, y, z, qw, qx, qy, qz]; shape [N_j, 8]
  std::vector<double> enhanced_state(const std::vector<double>& angles) const;

  // midpoint of per-joint limits (the arm's home configuration)
  std::vector<double> home() const;
  std::vector<double> clamp_to_limits(std::vector<double> angles) const;

  static Embodiment load_json(const std::string& path);
  static Embodiment from_json_text(const std::string& text);

 private:
  std::string name_;
  std::vector<JointSpec> joints_;
};

// entry (i,j): number of tree edges between joints i and j; joints whose
// parent is the base connect through a shared virtual base node
std::vector<int> joint_distance_matrix(const Embodiment& e);

// Differentiable FK over a batch of timesteps.
// angles: [N_j, t] tensor; returns [N_j, t, 8] enhanced states.
Tensor fk_batch(const Embodiment& e, const Tensor& angles);

}  // namespace semkit
