#include "semkit/camera.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace semkit {

CameraRig::CameraRig(std::vector<CameraView> views) : views_(std::move(views)) {
  for (const auto& v : views_) {
    Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>> K(
        v.intrinsic.data());
    if (std::abs(K(1, 0)) > 1e-12 || std::abs(K(2, 0)) > 1e-12 ||
        std::abs(K(2, 1)) > 1e-12)
      throw std::invalid_argument("camera '" + v.name +
                                  "': intrinsic not upper triangular");
    if (K(0, 0) <= 0 || K(1, 1) <= 0)
      throw std::invalid_argument("camera '" + v.name +
                                  "': non-positive focal length");
    Eigen::Map<const Eigen::Matrix<double, 4, 4, Eigen::RowMajor>> E(
        v.extrinsic.data());
    Eigen::Matrix3d R = E.topLeftCorner<3, 3>();
    if ((R.transpose() * R - Eigen::Matrix3d::Identity()).norm() > 1e-9 ||
        std::abs(R.determinant() - 1.0) > 1e-9)
      throw std::invalid_argument("camera '" + v.name +
                                  "': extrinsic is not a rigid transform");
    std::array<double, 9> ki;
    Eigen::Map<Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(ki.data()) =
        K.inverse();
    ki_.push_back(ki);
    std::array<double, 16> ei;
    Eigen::Map<Eigen::Matrix<double, 4, 4, Eigen::RowMajor>>(ei.data()) =
        E.inverse();
    ei_.push_back(ei);
  }
}

Vec3 CameraRig::unproject(int view, double u, double v, double depth,
                          bool camera_frame) const {
  const auto& ki = ki_.at(view);
  const double hx = u * depth, hy = v * depth, hz = depth;
  Vec3 pc{ki[0] * hx + ki[1] * hy + ki[2] * hz,
          ki[3] * hx + ki[4] * hy + ki[5] * hz,
          ki[6] * hx + ki[7] * hy + ki[8] * hz};
  if (camera_frame) return pc;
  const auto& ei = ei_.at(view);
  return {ei[0] * pc.x + ei[1] * pc.y + ei[2] * pc.z + ei[3],
          ei[4] * pc.x + ei[5] * pc.y + ei[6] * pc.z + ei[7],
          ei[8] * pc.x + ei[9] * pc.y + ei[10] * pc.z + ei[11]};
}

Vec3 CameraRig::project(int view, const Vec3& p) const {
  const auto& e = views_.at(view).extrinsic;
  Vec3 pc{e[0] * p.x + e[1] * p.y + e[2] * p.z + e[3],
          e[4] * p.x + e[5] * p.y + e[6] * p.z + e[7],
          e[8] * p.x + e[9] * p.y + e[10] * p.z + e[11]};
  const auto& k = views_.at(view).intrinsic;
  const double hx = k[0] * pc.x + k[1] * pc.y + k[2] * pc.z;
  const double hy = k[3] * pc.x + k[4] * pc.y + k[5] * pc.z;
  const double hz = k[6] * pc.x + k[7] * pc.y + k[8] * pc.z;
  return {hx / hz, hy / hz, pc.z};
}

std::vector<Vec3> frustum_points(const CameraRig& rig, int view, double u,
                                 double v, const std::vector<double>& bins,
                                 bool camera_frame) {
  std::vector<Vec3> pts;
  pts.reserve(bins.size());
  for (double d : bins) pts.push_back(rig.unproject(view, u, v, d, camera_frame));
  return pts;
}

std::vector<double> linear_depth_bins(int k, double lo, double hi) {
  if (k < 2 || lo <= 0 || hi <= lo)
    throw std::invalid_argument("linear_depth_bins: need k >= 2, 0 < lo < hi");
  std::vector<double> bins(k);
  for (int i = 0; i < k; ++i) bins[i] = lo + (hi - lo) * i / (k - 1);
  return bins;
}

int nearest_depth_bin(double depth, const std::vector<double>& bins) {
  int best = 0;
  for (size_t i = 1; i < bins.size(); ++i) {
    // bins[i] strictly nearer than bins[best] iff 2*depth > bins[best]+bins[i];
    // exact tie keeps the lower index
    if (bins[i] <= depth || 2.0 * depth > bins[best] + bins[i])
      best = static_cast<int>(i);
  }
  return best;
}

CameraRig CameraRig::from_json_text(const std::string& text) {
  nlohmann::json doc = nlohmann::json::parse(text);
  std::vector<CameraView> views;
  for (const auto& jv : doc.at("views")) {
    CameraView v;
    v.name = jv.at("name").get<std::string>();
    auto ji = jv.at("intrinsic");
    auto je = jv.at("extrinsic");
    if (ji.size() != 9 || je.size() != 16)
      throw std::invalid_argument("camera rig: intrinsic must have 9 entries, extrinsic 16");
    for (int i = 0; i < 9; ++i) v.intrinsic[i] = ji[i].get<double>();
    for (int i = 0; i < 16; ++i) v.extrinsic[i] = je[i].get<double>();
    views.push_back(v);
  }
  return CameraRig(std::move(views));
}

CameraRig CameraRig::load_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open camera rig file: " + path);
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

std::string CameraRig::to_json_text() const {
  nlohmann::json doc;
  doc["views"] = nlohmann::json::array();
  for (const auto& v : views_) {
    nlohmann::json jv;
    jv["name"] = v.name;
    jv["intrinsic"] = v.intrinsic;
    jv["extrinsic"] = v.extrinsic;
    doc["views"].push_back(jv);
  }
  return doc.dump(2);
}

}  // namespace semkit
