#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>

#include "fd_check.hpp"
#include "semkit/kinematics.hpp"
#include "semkit/rng.hpp"

using namespace semkit;

namespace {

JointSpec revolute(const std::string& name, int parent, Vec3 xyz,
                   std::array<double, 3> axis, double lo = -3.14,
                   double hi = 3.14) {
  JointSpec j;
  j.name = name;
  j.parent = parent;
  j.xyz = xyz;
  j.axis = axis;
  j.kind = JointKind::revolute;
  j.lo = lo;
  j.hi = hi;
  return j;
}

Embodiment two_link_planar() {
  return Embodiment("planar2",
                    {revolute("j0", -1, {1, 0, 0}, {0, 0, 1}),
                     revolute("j1", 0, {1, 0, 0}, {0, 0, 1})});
}

// independent oracle: naive homogeneous 4x4 matrix composition
struct OraclePose {
  Eigen::Matrix4d m;
};

Eigen::Matrix4d rot_axis(const std::array<double, 3>& u, double a) {
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  t.topLeftCorner<3, 3>() =
      Eigen::AngleAxisd(a, Eigen::Vector3d(u[0], u[1], u[2])).toRotationMatrix();
  return t;
}

std::vector<Eigen::Matrix4d> oracle_fk(const Embodiment& e,
                                       const std::vector<double>& angles) {
  std::vector<Eigen::Matrix4d> out(e.num_joints());
  for (int i = 0; i < e.num_joints(); ++i) {
    const JointSpec& j = e.joints()[i];
    Eigen::Matrix4d parent =
        j.parent < 0 ? Eigen::Matrix4d::Identity() : out[j.parent];
    Eigen::Matrix4d link = Eigen::Matrix4d::Identity();
    const Quat& q = j.link_rot;
    link.topLeftCorner<3, 3>() =
        Eigen::Quaterniond(q.w, q.x, q.y, q.z).toRotationMatrix();
    link.topRightCorner<3, 1>() = Eigen::Vector3d(j.xyz.x, j.xyz.y, j.xyz.z);
    Eigen::Matrix4d motion = Eigen::Matrix4d::Identity();
    if (j.kind == JointKind::revolute)
      motion = rot_axis(j.axis, angles[i]);
    else
      motion.topRightCorner<3, 1>() =
          angles[i] * Eigen::Vector3d(j.axis[0], j.axis[1], j.axis[2]);
    out[i] = parent * link * motion;
  }
  return out;
}

Quat quat_from_matrix(const Eigen::Matrix3d& r) {
  Eigen::Quaterniond q(r);
  Quat out{q.w(), q.x(), q.y(), q.z()};
  return quat_canonical(out);
}

Embodiment random_embodiment(Rng& rng, int max_joints = 9, bool chain = false) {
  const int nj = 1 + static_cast<int>(rng.randint(max_joints));
  std::vector<JointSpec> joints;
  for (int i = 0; i < nj; ++i) {
    JointSpec j;
    j.name = "j" + std::to_string(i);
    j.parent = i == 0 ? -1
               : chain ? i - 1
                       : static_cast<int>(rng.randint(i));
    j.xyz = {rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
             rng.uniform(-0.3, 0.3)};
    j.link_rot = quat_from_rpy(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5),
                               rng.uniform(-1.5, 1.5));
    Eigen::Vector3d ax(rng.normal(), rng.normal(), rng.normal());
    ax.normalize();
    j.axis = {ax[0], ax[1], ax[2]};
    j.kind = rng.uniform() < 0.7 ? JointKind::revolute : JointKind::prismatic;
    j.lo = -1.5;
    j.hi = 1.5;
    joints.push_back(j);
  }
  return Embodiment("rand", std::move(joints));
}

}  // namespace

TEST_CASE("two-link planar arm zero angles") {
  auto e = two_link_planar();
  auto poses = e.fk({0, 0});
  CHECK(poses[1].p.x == doctest::Approx(2).epsilon(1e-12));
  CHECK(poses[1].p.y == doctest::Approx(0).epsilon(1e-12));
  CHECK(poses[1].p.z == doctest::Approx(0).epsilon(1e-12));
  CHECK(poses[1].q.w == doctest::Approx(1).epsilon(1e-12));
}

TEST_CASE("two-link planar arm quarter turn") {
  auto e = two_link_planar();
  auto poses = e.fk({M_PI / 2, 0});
  CHECK(std::abs(poses[1].p.x - 1.0) < 1e-9);
  CHECK(std::abs(poses[1].p.y - 1.0) < 1e-9);
}

TEST_CASE("fk rejects non-finite input") {
  auto e = two_link_planar();
  CHECK_THROWS_AS(e.fk({0.0, std::nan("")}), std::invalid_argument);
  CHECK_THROWS_AS(fk_batch(e, Tensor::from({2, 1}, {0.0, INFINITY})),
                  std::invalid_argument);
}

TEST_CASE("fk allows out-of-limit (noisy) angles") {
  auto e = two_link_planar();
  CHECK_NOTHROW(e.fk({20.0, -15.0}));
}

TEST_CASE("random chains match matrix-composition oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    auto e = random_embodiment(rng, 6, true);
    std::vector<double> angles(e.num_joints());
    for (auto& a : angles) a = rng.uniform(-1.5, 1.5);
    auto poses = e.fk(angles);
    auto ref = oracle_fk(e, angles);
    for (int i = 0; i < e.num_joints(); ++i) {
      Eigen::Vector3d p = ref[i].topRightCorner<3, 1>();
      CHECK(std::abs(p[0] - poses[i].p.x) < 1e-9);
      CHECK(std::abs(p[1] - poses[i].p.y) < 1e-9);
      CHECK(std::abs(p[2] - poses[i].p.z) < 1e-9);
      Quat qr = quat_from_matrix(ref[i].topLeftCorner<3, 3>());
      CHECK(quat_geodesic(qr, poses[i].q) < 1e-9);
      CHECK(poses[i].q.w >= 0.0);
      const double qn = poses[i].q.w * poses[i].q.w + poses[i].q.x * poses[i].q.x +
                        poses[i].q.y * poses[i].q.y + poses[i].q.z * poses[i].q.z;
      CHECK(std::abs(qn - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("fk equivariance under base-frame change") {
  Rng rng(23);
  auto e = random_embodiment(rng, 7, false);
  std::vector<double> angles(e.num_joints());
  for (auto& a : angles) a = rng.uniform(-1, 1);
  // premultiply every root link by rigid G
  const Quat gq = quat_from_rpy(0.3, -0.5, 0.9);
  const Vec3 gt{0.2, -0.4, 0.7};
  std::vector<JointSpec> moved = e.joints();
  for (auto& j : moved)
    if (j.parent < 0) {
      Vec3 r = quat_rotate(gq, j.xyz);
      j.xyz = {gt.x + r.x, gt.y + r.y, gt.z + r.z};
      j.link_rot = quat_mul(gq, j.link_rot);
    }
  Embodiment e2("moved", moved);
  auto a0 = e.fk(angles);
  auto a1 = e2.fk(angles);
  for (int i = 0; i < e.num_joints(); ++i) {
    Vec3 r = quat_rotate(gq, a0[i].p);
    CHECK(std::abs(a1[i].p.x - (gt.x + r.x)) < 1e-9);
    CHECK(std::abs(a1[i].p.y - (gt.y + r.y)) < 1e-9);
    CHECK(std::abs(a1[i].p.z - (gt.z + r.z)) < 1e-9);
    CHECK(quat_geodesic(a1[i].q, quat_canonical(quat_mul(gq, a0[i].q))) < 1e-9);
  }
}

TEST_CASE("joint distance matrix on chains and trees") {
  // serial chain: |i - j|
  Rng rng(31);
  auto chain = random_embodiment(rng, 4, true);
  while (chain.num_joints() < 2) chain = random_embodiment(rng, 4, true);
  auto d = joint_distance_matrix(chain);
  const int n = chain.num_joints();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) CHECK(d[i * n + j] == std::abs(i - j));

  // single joint
  Embodiment single("s", {revolute("j0", -1, {0, 0, 0}, {0, 0, 1})});
  CHECK(joint_distance_matrix(single) == std::vector<int>{0});

  // random tree vs BFS oracle with symmetry / diagonal / triangle checks
  for (int trial = 0; trial < 20; ++trial) {
    auto e = random_embodiment(rng, 9, false);
    auto m = joint_distance_matrix(e);
    const int nj = e.num_joints();
    for (int i = 0; i < nj; ++i) {
      CHECK(m[i * nj + i] == 0);
      for (int j = 0; j < nj; ++j) {
        CHECK(m[i * nj + j] == m[j * nj + i]);
        for (int k = 0; k < nj; ++k)
          CHECK(m[i * nj + j] <= m[i * nj + k] + m[k * nj + j]);
      }
    }
  }
}

TEST_CASE("two arms connect through the shared base") {
  // two 2-joint arms, both roots attached to the base
  std::vector<JointSpec> joints{
      revolute("l0", -1, {0, 0.2, 0}, {0, 0, 1}),
      revolute("l1", 0, {0.3, 0, 0}, {0, 0, 1}),
      revolute("r0", -1, {0, -0.2, 0}, {0, 0, 1}),
      revolute("r1", 2, {0.3, 0, 0}, {0, 0, 1})};
  Embodiment bimanual("dual", joints);
  auto d = joint_distance_matrix(bimanual);
  CHECK(d[0 * 4 + 2] == 2);  // l0 - base - r0
  CHECK(d[1 * 4 + 3] == 4);  // l1 - l0 - base - r0 - r1
}

TEST_CASE("fk_batch consistency with single-step fk") {
  Rng rng(41);
  auto e = random_embodiment(rng, 6, true);
  const int nj = e.num_joints();
  std::vector<double> angles(nj);
  for (auto& a : angles) a = rng.uniform(-1, 1);
  Tensor at = Tensor::from({nj, 1}, angles);
  auto batch = fk_batch(e, at).values();
  auto single = e.enhanced_state(angles);
  REQUIRE(batch.size() == single.size());
  for (size_t i = 0; i < batch.size(); ++i)
    CHECK(batch[i] == doctest::Approx(single[i]).epsilon(1e-12));

  // constant angle sequence -> identical rows per timestep
  const int t = 3;
  std::vector<double> rep(nj * t);
  for (int j = 0; j < nj; ++j)
    for (int s = 0; s < t; ++s) rep[j * t + s] = angles[j];
  auto bt = fk_batch(e, Tensor::from({nj, t}, rep)).values();
  for (int j = 0; j < nj; ++j)
    for (int s = 0; s < t; ++s)
      for (int c = 0; c < 8; ++c)
        CHECK(bt[(j * t + s) * 8 + c] ==
              doctest::Approx(bt[j * t * 8 + c]).epsilon(1e-12));
}

TEST_CASE("fk_batch gradient vs finite differences") {
  Rng rng(43);
  for (int trial = 0; trial < 10; ++trial) {
    auto e = random_embodiment(rng, 6, false);
    const int nj = e.num_joints();
    const int t = 2;
    std::vector<double> angles(nj * t);
    for (auto& a : angles) a = rng.uniform(-1, 1);
    auto f = [&](const std::vector<std::vector<double>>& v,
                 std::vector<std::vector<double>>* g) {
      Tensor a = Tensor::leaf({nj, t}, v[0]);
      Tensor s = fk_batch(e, a);
      // weight the outputs so the check covers position and quaternion paths
      Tensor w = Tensor::from(s.shape(),
                              semkit::testing::random_vec(rng, s.numel(), 0.1, 1));
      Tensor loss = sum(mul(s, w));
      if (g) {
        loss.backward();
        g->push_back(a.grad());
      }
      return loss.item();
    };
    // fix weights across evaluations by seeding a fresh rng per trial
    Rng wrng(100 + trial);
    std::vector<double> wv = semkit::testing::random_vec(wrng, nj * t * 8, 0.1, 1);
    auto f2 = [&](const std::vector<std::vector<double>>& v,
                  std::vector<std::vector<double>>* g) {
      Tensor a = Tensor::leaf({nj, t}, v[0]);
      Tensor s = fk_batch(e, a);
      Tensor loss = sum(mul(s, Tensor::from(s.shape(), wv)));
      if (g) {
        loss.backward();
        g->push_back(a.grad());
      }
      return loss.item();
    };
    (void)f;
    CHECK(semkit::testing::fd_max_rel_error(f2, {angles}) < 1e-5);
  }
}

TEST_CASE("embodiment json round trip and validation") {
  const char* text = R"({
    "name": "mini",
    "joints": [
      {"name": "a", "parent": null, "xyz": [0,0,0.1], "rpy": [0,0,0],
       "axis": [0,0,1], "kind": "revolute", "limits": [-1.0, 1.0]},
      {"name": "b", "parent": 0, "xyz": [0.2,0,0], "rpy": [0,0.2,0],
       "axis": [0,1,0], "kind": "prismatic", "limits": [0.0, 0.04]}
    ]})";
  auto e = Embodiment::from_json_text(text);
  CHECK(e.num_joints() == 2);
  CHECK(e.joints()[1].kind == JointKind::prismatic);

  CHECK_THROWS(Embodiment::from_json_text(R"({"name":"bad","joints":[
    {"name":"a","parent":0,"xyz":[0,0,0],"rpy":[0,0,0],
     "axis":[0,0,1],"kind":"revolute","limits":[-1,1]}]})"));
  CHECK_THROWS(Embodiment::from_json_text(R"({"name":"bad","joints":[
    {"name":"a","parent":null,"xyz":[0,0,0],"rpy":[0,0,0],
     "axis":[0,0,2],"kind":"revolute","limits":[-1,1]}]})"));
  CHECK_THROWS(Embodiment::from_json_text(R"({"name":"bad","joints":[
    {"name":"a","parent":null,"xyz":[0,0,0],"rpy":[0,0,0],
     "axis":[0,0,1],"kind":"revolute","limits":[1,-1]}]})"));
}
