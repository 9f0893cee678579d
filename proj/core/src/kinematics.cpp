#include "semkit/kinematics.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <deque>
#include <fstream>
#include <stdexcept>

namespace semkit {

Quat quat_mul(const Quat& a, const Quat& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

Vec3 quat_rotate(const Quat& q, const Vec3& v) {
  // v' = v + 2 qv x (qv x v + w v)
  const double tx = q.y * v.z - q.z * v.y + q.w * v.x;
  const double ty = q.z * v.x - q.x * v.z + q.w * v.y;
  const double tz = q.x * v.y - q.y * v.x + q.w * v.z;
  return {v.x + 2.0 * (q.y * tz - q.z * ty),
          v.y + 2.0 * (q.z * tx - q.x * tz),
          v.z + 2.0 * (q.x * ty - q.y * tx)};
}

Quat quat_from_rpy(double roll, double pitch, double yaw) {
  const Quat qx{std::cos(roll / 2), std::sin(roll / 2), 0, 0};
  const Quat qy{std::cos(pitch / 2), 0, std::sin(pitch / 2), 0};
  const Quat qz{std::cos(yaw / 2), 0, 0, std::sin(yaw / 2)};
  return quat_mul(qz, quat_mul(qy, qx));
}

Quat quat_canonical(const Quat& q) {
  if (q.w < 0) return {-q.w, -q.x, -q.y, -q.z};
  return q;
}

double quat_geodesic(const Quat& a, const Quat& b) {
  // relative rotation a * conj(b); atan2 keeps precision near identity
  const Quat r = quat_mul(a, {b.w, -b.x, -b.y, -b.z});
  const double s = std::sqrt(r.x * r.x + r.y * r.y + r.z * r.z);
  return 2.0 * std::atan2(s, std::abs(r.w));
}

Embodiment::Embodiment(std::string name, std::vector<JointSpec> joints)
    : name_(std::move(name)), joints_(std::move(joints)) {
  for (size_t i = 0; i < joints_.size(); ++i) {
    const JointSpec& j = joints_[i];
    if (j.parent >= static_cast<int>(i))
      throw std::invalid_argument(
          "embodiment '" + name_ + "': joint '" + j.name +
          "' must appear after its parent (parent-first ordering)");
    if (j.parent < -1)
      throw std::invalid_argument("invalid parent index for joint " + j.name);
    const double n2 = j.axis[0] * j.axis[0] + j.axis[1] * j.axis[1] +
                      j.axis[2] * j.axis[2];
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-9)
      throw std::invalid_argument("joint '" + j.name +
                                  "' axis is not unit length");
    if (!(j.lo < j.hi))
      throw std::invalid_argument("joint '" + j.name + "' has lo >= hi");
  }
}

std::vector<Embodiment::Pose> Embodiment::fk(
    const std::vector<double>& angles) const {
  const int nj = num_joints();
  if (static_cast<int>(angles.size()) != nj)
    throw std::invalid_argument("fk: expected " + std::to_string(nj) +
                                " angles, got " +
                                std::to_string(angles.size()));
  for (double a : angles)
    if (!std::isfinite(a))
      throw std::invalid_argument("fk: non-finite joint value");
  std::vector<Pose> poses(nj);
  for (int i = 0; i < nj; ++i) {
    const JointSpec& j = joints_[i];
    Pose parent = j.parent < 0 ? Pose{} : poses[j.parent];
    // parent frame -> link frame
    Pose cur;
    cur.p = {parent.p.x + quat_rotate(parent.q, j.xyz).x,
             parent.p.y + quat_rotate(parent.q, j.xyz).y,
             parent.p.z + quat_rotate(parent.q, j.xyz).z};
    cur.q = quat_mul(parent.q, j.link_rot);
    // joint motion
    if (j.kind == JointKind::revolute) {
      const double h = angles[i] / 2;
      const Quat qj{std::cos(h), j.axis[0] * std::sin(h),
                    j.axis[1] * std::sin(h), j.axis[2] * std::sin(h)};
      cur.q = quat_mul(cur.q, qj);
    } else {
      const Vec3 d = quat_rotate(
          cur.q,
          {j.axis[0] * angles[i], j.axis[1] * angles[i], j.axis[2] * angles[i]});
      cur.p = {cur.p.x + d.x, cur.p.y + d.y, cur.p.z + d.z};
    }
    cur.q = quat_canonical(cur.q);
    poses[i] = cur;
  }
  return poses;
}

std::vector<double> Embodiment::enhanced_state(
    const std::vector<double>& angles) const {
  auto poses = fk(angles);
  std::vector<double> out;
  out.reserve(poses.size() * 8);
  for (size_t i = 0; i < poses.size(); ++i) {
    const Pose& p = poses[i];
    out.insert(out.end(), {angles[i], p.p.x, p.p.y, p.p.z, p.q.w, p.q.x,
                           p.q.y, p.q.z});
  }
  return out;
}

std::vector<double> Embodiment::home() const {
  std::vector<double> h(num_joints());
  for (int i = 0; i < num_joints(); ++i)
    h[i] = 0.5 * (joints_[i].lo + joints_[i].hi);
  return h;
}

std::vector<double> Embodiment::clamp_to_limits(
    std::vector<double> angles) const {
  for (int i = 0; i < num_joints(); ++i)
    angles[i] = std::clamp(angles[i], joints_[i].lo, joints_[i].hi);
  return angles;
}

Embodiment Embodiment::from_json_text(const std::string& text) {
  nlohmann::json doc = nlohmann::json::parse(text);
  std::vector<JointSpec> joints;
  for (const auto& jj : doc.at("joints")) {
    JointSpec s;
    s.name = jj.at("name").get<std::string>();
    s.parent = jj.at("parent").is_null() ? -1 : jj.at("parent").get<int>();
    auto xyz = jj.at("xyz");
    s.xyz = {xyz[0].get<double>(), xyz[1].get<double>(), xyz[2].get<double>()};
    auto rpy = jj.at("rpy");
    s.link_rot = quat_from_rpy(rpy[0].get<double>(), rpy[1].get<double>(),
                               rpy[2].get<double>());
    auto ax = jj.at("axis");
    s.axis = {ax[0].get<double>(), ax[1].get<double>(), ax[2].get<double>()};
    const std::string kind = jj.at("kind").get<std::string>();
    if (kind == "revolute")
      s.kind = JointKind::revolute;
    else if (kind == "prismatic")
      s.kind = JointKind::prismatic;
    else
      throw std::invalid_argument("unknown joint kind: " + kind);
    auto lim = jj.at("limits");
    s.lo = lim[0].get<double>();
    s.hi = lim[1].get<double>();
    joints.push_back(std::move(s));
  }
  return Embodiment(doc.at("name").get<std::string>(), std::move(joints));
}

Embodiment Embodiment::load_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open embodiment file: " + path);
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

std::vector<int> joint_distance_matrix(const Embodiment& e) {
  const int nj = e.num_joints();
  // nodes 0..nj-1 are joints, node nj is the shared virtual base
  std::vector<std::vector<int>> adj(nj + 1);
  for (int i = 0; i < nj; ++i) {
    const int p = e.joints()[i].parent < 0 ? nj : e.joints()[i].parent;
    adj[i].push_back(p);
    adj[p].push_back(i);
  }
  std::vector<int> out(nj * nj, 0);
  for (int src = 0; src < nj; ++src) {
    std::vector<int> dist(nj + 1, -1);
    std::deque<int> q{src};
    dist[src] = 0;
    while (!q.empty()) {
      const int u = q.front();
      q.pop_front();
      for (int v : adj[u])
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          q.push_back(v);
        }
    }
    for (int j = 0; j < nj; ++j) out[src * nj + j] = dist[j];
  }
  return out;
}

namespace {

struct TQuat {
  Tensor w, x, y, z;
};
struct TVec {
  Tensor x, y, z;
};

TQuat tquat_mul(const TQuat& a, const TQuat& b) {
  return {sub(sub(sub(mul(a.w, b.w), mul(a.x, b.x)), mul(a.y, b.y)),
              mul(a.z, b.z)),
          sub(add(add(mul(a.w, b.x), mul(a.x, b.w)), mul(a.y, b.z)),
              mul(a.z, b.y)),
          add(sub(add(mul(a.w, b.y), mul(a.y, b.w)), mul(a.x, b.z)),
              mul(a.z, b.x)),
          add(add(sub(mul(a.w, b.z), mul(a.y, b.x)), mul(a.x, b.y)),
              mul(a.z, b.w))};
}

TVec tquat_rotate(const TQuat& q, const TVec& v) {
  Tensor tx = add(sub(mul(q.y, v.z), mul(q.z, v.y)), mul(q.w, v.x));
  Tensor ty = add(sub(mul(q.z, v.x), mul(q.x, v.z)), mul(q.w, v.y));
  Tensor tz = add(sub(mul(q.x, v.y), mul(q.y, v.x)), mul(q.w, v.z));
  return {add(v.x, mul_scalar(sub(mul(q.y, tz), mul(q.z, ty)), 2.0)),
          add(v.y, mul_scalar(sub(mul(q.z, tx), mul(q.x, tz)), 2.0)),
          add(v.z, mul_scalar(sub(mul(q.x, ty), mul(q.y, tx)), 2.0))};
}

}  // namespace

Tensor fk_batch(const Embodiment& e, const Tensor& angles) {
  if (angles.rank() != 2 || angles.dim(0) != e.num_joints())
    throw std::invalid_argument("fk_batch: expected angles [N_j, t]");
  for (double v : angles.values())
    if (!std::isfinite(v))
      throw std::invalid_argument("fk_batch: non-finite joint value");
  const int nj = e.num_joints();
  const int64_t t = angles.dim(1);
  auto const_t = [&](double v) { return Tensor::full({t}, v); };

  std::vector<TVec> pos(nj);
  std::vector<TQuat> rot(nj);
  std::vector<Tensor> rows;
  for (int i = 0; i < nj; ++i) {
    const JointSpec& j = e.joints()[i];
    Tensor a = reshape(slice(angles, 0, i, 1), {t});
    TVec pp;
    TQuat pq;
    if (j.parent < 0) {
      pp = {const_t(0), const_t(0), const_t(0)};
      pq = {const_t(1), const_t(0), const_t(0), const_t(0)};
    } else {
      pp = pos[j.parent];
      pq = rot[j.parent];
    }
    // link transform (constant)
    TVec link{const_t(j.xyz.x), const_t(j.xyz.y), const_t(j.xyz.z)};
    TVec moved = tquat_rotate(pq, link);
    TVec p{add(pp.x, moved.x), add(pp.y, moved.y), add(pp.z, moved.z)};
    TQuat lq{const_t(j.link_rot.w), const_t(j.link_rot.x),
             const_t(j.link_rot.y), const_t(j.link_rot.z)};
    TQuat q = tquat_mul(pq, lq);
    // joint motion
    if (j.kind == JointKind::revolute) {
      Tensor half = mul_scalar(a, 0.5);
      Tensor s = sin_t(half);
      TQuat qj{cos_t(half), mul_scalar(s, j.axis[0]), mul_scalar(s, j.axis[1]),
               mul_scalar(s, j.axis[2])};
      q = tquat_mul(q, qj);
    } else {
      TVec d{mul_scalar(a, j.axis[0]), mul_scalar(a, j.axis[1]),
             mul_scalar(a, j.axis[2])};
      TVec dr = tquat_rotate(q, d);
      p = {add(p.x, dr.x), add(p.y, dr.y), add(p.z, dr.z)};
    }
    pos[i] = p;
    rot[i] = q;
    // canonical sign (q_w >= 0), sign treated as locally constant
    Tensor qw_ref = q.w.detach();
    TQuat qc{copysign_by(q.w, qw_ref), copysign_by(q.x, qw_ref),
             copysign_by(q.y, qw_ref), copysign_by(q.z, qw_ref)};
    std::vector<Tensor> cols{a,    p.x,  p.y,  p.z,
                             qc.w, qc.x, qc.y, qc.z};
    std::vector<Tensor> cols2;
    for (auto& c : cols) cols2.push_back(reshape(c, {t, 1}));
    rows.push_back(reshape(concat(1, cols2), {1, t, 8}));
  }
  return concat(0, rows);
}

}  // namespace semkit
