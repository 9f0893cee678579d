#pragma once

#include <array>
#include <string>
#include <vector>

#include "semkit/kinematics.hpp"

namespace semkit {

struct CameraView {
  std::string name;
  std::array<double, 9> intrinsic;    // row-major 3x3, upper triangular
  std::array<double, 16> extrinsic;   // row-major 4x4, base frame -> camera
};

class CameraRig {
 public:
  CameraRig() = default;
  explicit CameraRig(std::vector<CameraView> views);

  int num_views() const { return static_cast<int>(views_.size()); }
  const CameraView& view(int i) const { return views_.at(i); }
  std::vector<CameraView>& views() { return views_; }
  const std::vector<CameraView>& views() const { return views_; }

  // Unprojects image point (u, v) at depth d into the base frame:
  // T_e^-1 T_i^-1 [u d, v d, d]^T. camera_frame stops before T_e^-1.
  Vec3 unproject(int view, double u, double v, double depth,
                 bool camera_frame = false) const;
  // Projects a base-frame point; returns (u, v, depth in camera frame).
  Vec3 project(int view, const Vec3& p) const;

  static CameraRig load_json(const std::string& path);
  static CameraRig from_json_text(const std::string& text);
  std::string to_json_text() const;

 private:
  std::vector<CameraView> views_;
  // cached inverses
  std::vector<std::array<double, 9>> ki_;
  std::vector<std::array<double, 16>> ei_;
};

// All K candidate depths for one feature cell, base frame (or camera frame).
std::vector<Vec3> frustum_points(const CameraRig& rig, int view, double u,
                                 double v, const std::vector<double>& bins,
                                 bool camera_frame = false);

// strictly increasing candidate depths, d_1 > 0
std::vector<double> linear_depth_bins(int k, double lo, double hi);
// nearest bin index; ties broken toward the lower index
int nearest_depth_bin(double depth, const std::vector<double>& bins);

}  // namespace semkit
