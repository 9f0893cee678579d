#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "semkit/checkpoint.hpp"
#include "semkit/harness.hpp"

using namespace semkit;
namespace fs = std::filesystem;

namespace {

RunConfig micro_cfg() {
  RunConfig cfg;
  cfg.policy.d_model = 16;
  cfg.policy.heads = 2;
  cfg.policy.enc_layers = 1;
  cfg.policy.dec_blocks = 1;
  cfg.policy.t_out = 8;
  cfg.policy.t_lat = 4;
  cfg.policy.k_bins = 4;
  cfg.world.t_out = 8;
  cfg.world.grid_h = 4;
  cfg.world.grid_w = 4;
  cfg.data.embodiments = {"arm6"};
  cfg.data.difficulties = {0};
  cfg.data.episodes_per_cell = 1;
  cfg.optim.batch_size = 2;
  cfg.optim.total_steps = 4;
  cfg.optim.eval_interval = 2;
  cfg.optim.eval_episodes = 1;
  cfg.dpm_steps = 2;
  cfg.seed = 5;
  return cfg;
}

std::string tmp_dir(const std::string& name) {
  std::string d = (fs::temp_directory_path() / ("semkit_" + name)).string();
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("run config JSON round trip and env seed override") {
  RunConfig cfg = micro_cfg();
  cfg.policy.frame_mode = FrameMode::camera;
  cfg.policy.use_jga = false;
  cfg.optim.lr = 0.123;
  RunConfig back = run_config_from_json(run_config_to_json(cfg));
  CHECK(run_config_to_json(back) == run_config_to_json(cfg));
  CHECK(back.policy.frame_mode == FrameMode::camera);
  CHECK(back.policy.use_jga == false);
  CHECK(back.optim.lr == 0.123);

  const std::string dir = tmp_dir("cfg");
  std::ofstream(dir + "/c.json") << run_config_to_json(cfg);
  setenv("SEMKIT_SEED", "999", 1);
  RunConfig loaded = load_run_config(dir + "/c.json");
  unsetenv("SEMKIT_SEED");
  CHECK(loaded.seed == 999);
  CHECK(load_run_config(dir + "/c.json").seed == cfg.seed);
}

TEST_CASE("validation rejects broken configs") {
  RunConfig cfg = micro_cfg();
  CHECK_NOTHROW(validate(cfg));
  RunConfig bad = cfg;
  bad.policy.t_lat = 3;  // t_out not a multiple
  CHECK_THROWS(validate(bad));
  bad = cfg;
  bad.world.t_out = 16;  // decoupled horizons
  CHECK_THROWS(validate(bad));
  bad = cfg;
  bad.data.embodiments = {"arm7"};
  CHECK_THROWS(validate(bad));
  bad = cfg;
  bad.optim.momentum = 1.0;
  CHECK_THROWS(validate(bad));
  bad = cfg;
  bad.replan_every = 9;  // > t_out
  CHECK_THROWS(validate(bad));
  CHECK_THROWS(apply_ablation(bad.policy, 5));
}

TEST_CASE("ablation flags map to the documented ids") {
  for (int id = 1; id <= 4; ++id) {
    PolicyConfig pc;
    apply_ablation(pc, id);
    CHECK(pc.use_spatial_enhancer == (id != 1));
    CHECK(pc.use_depth == (id != 1 && id != 2));
    CHECK((pc.frame_mode == FrameMode::camera) == (id == 3));
    CHECK(pc.use_jga == (id != 4));
  }
}

TEST_CASE("zero-head baseline loss matches the closed form") {
  RunConfig cfg = micro_cfg();
  Dataset ds = build_dataset(cfg);
  REQUIRE(!ds.items.empty());
  const DataItem& it = ds.items[0];
  const Embodiment& e = ds.embodiments[it.embodiment];
  const int nj = e.num_joints();

  SemPolicy pol(cfg.policy, cfg.seed);  // output head still zero-initialized
  CameraRig rig = make_rig();
  auto points = pol.rig_points(rig, cfg.world.grid_h, cfg.world.grid_w);
  Observation obs{it.sample.state, it.sample.grid, it.sample.instruction_id};
  DiffusionSchedule sched;
  Rng rng(5);
  LossBreakdown b = pol.loss(e, obs, it.sample.actions, points, sched, rng);

  // the all-zero predictor: every term computable from the dataset alone
  Tensor target =
      fk_batch(e, Tensor::from({nj, cfg.policy.t_out}, it.sample.actions));
  Tensor zeros3 = Tensor::zeros(target.shape());
  const double joint =
      l1_loss(slice(zeros3, 2, 0, 1), slice(target, 2, 0, 1)).item();
  const double pose =
      l1_loss(slice(zeros3, 2, 1, 7), slice(target, 2, 1, 7)).item();
  Tensor zfk = fk_batch(e, Tensor::zeros({nj, cfg.policy.t_out}));
  const double pose_fk =
      l1_loss(slice(zfk, 2, 1, 7), slice(target, 2, 1, 7)).item();
  auto c = pol.condition(e, obs, points);
  const double depth =
      cross_entropy_logits(c.depth_logits, c.depth_targets, c.depth_mask)
          .item();

  CHECK(b.joint == doctest::Approx(joint).epsilon(1e-12));
  CHECK(b.pose == doctest::Approx(pose).epsilon(1e-12));
  CHECK(b.pose_fk == doctest::Approx(pose_fk).epsilon(1e-12));
  CHECK(b.depth == doctest::Approx(depth).epsilon(1e-12));
  const LossWeights& w = cfg.policy.loss_w;
  CHECK(b.total.item() ==
        doctest::Approx(w.joint * joint + w.pose * pose + w.pose_fk * pose_fk +
                        w.depth * depth)
            .epsilon(1e-12));
}

TEST_CASE("single-episode overfit drives the loss well below baseline") {
  RunConfig cfg = micro_cfg();
  cfg.optim.batch_size = 6;  // every anchor of one episode in each batch
  cfg.optim.total_steps = 2000;
  cfg.optim.eval_interval = 2000;
  cfg.optim.eval_episodes = 1;
  cfg.optim.lr = 0.07;
  cfg.optim.clip_norm = 0.7;
  Dataset ds = build_dataset(cfg);
  ds.items.resize(6);  // the first episode's samples
  const std::string dir = tmp_dir("overfit");
  TrainResult tr = train(cfg, ds, dir);
  CHECK(tr.steps_done == 2000);
  CHECK(tr.final_loss < 5e-2);  // baseline sits near 0.5
}

TEST_CASE("resume reproduces an uninterrupted run bit-for-bit") {
  RunConfig cfg = micro_cfg();
  cfg.optim.total_steps = 10;
  cfg.optim.eval_interval = 5;
  Dataset ds = build_dataset(cfg);

  const std::string full_dir = tmp_dir("resume_full");
  const std::string part_dir = tmp_dir("resume_part");
  train(cfg, ds, full_dir);
  train(cfg, ds, part_dir, false, nullptr, 5);  // interrupt at step 5
  train(cfg, ds, part_dir, true);               // continue 5 -> 10

  CHECK(read_file(part_dir + "/metrics.csv") ==
        read_file(full_dir + "/metrics.csv"));

  SemPolicy a(cfg.policy, cfg.seed), b(cfg.policy, cfg.seed);
  CHECK(load_policy_checkpoint(full_dir + "/last.ckpt", a) == 10);
  CHECK(load_policy_checkpoint(part_dir + "/last.ckpt", b) == 10);
  for (const auto& [name, p] : a.params().all())
    CHECK(p.values() == b.params().get(name).values());
}

TEST_CASE("evaluation is deterministic and the expert is a reach oracle") {
  RunConfig cfg = micro_cfg();
  WorldConfig wc = cfg.world;
  Embodiment e = make_arm("arm6");
  Actor oracle = expert_actor(wc);

  EvalCell r1 = evaluate_cell(oracle, e, Task::reach, 0, wc, 0.0, 10,
                              cfg.replan(), 77);
  EvalCell r2 = evaluate_cell(oracle, e, Task::reach, 0, wc, 0.0, 10,
                              cfg.replan(), 77);
  CHECK(r1.successes == r2.successes);
  CHECK(r1.rate() == 1.0);  // the scripted expert is an upper bound

  // the oracle also clears the harder tasks on its own verified scenes
  for (Task t : {Task::push, Task::pick_place}) {
    EvalCell c = evaluate_cell(oracle, e, t, 1, wc, 0.0, 5, cfg.replan(), 78);
    CHECK(c.rate() == 1.0);
  }

  EvalReport rep = evaluate_suite(cfg, oracle, "tasks", 3, 91);
  EvalReport rep2 = evaluate_suite(cfg, oracle, "tasks", 3, 91);
  CHECK(eval_report_csv(rep) == eval_report_csv(rep2));
  CHECK(rep.mean_rate == 1.0);
}

TEST_CASE("embodiment suite refuses arms outside the training config") {
  RunConfig cfg = micro_cfg();  // trained on arm6 only
  Actor oracle = expert_actor(cfg.world);
  bool threw = false;
  try {
    evaluate_suite(cfg, oracle, "embodiment", 1, 3);
  } catch (const std::runtime_error& err) {
    threw = true;
    CHECK(std::string(err.what()).find("arm8") != std::string::npos);
  }
  CHECK(threw);
  CHECK_THROWS(evaluate_suite(cfg, oracle, "nonsense", 1, 3));
}

TEST_CASE("gradcheck passes, lists unique ops, and catches corruption") {
  auto report = gradcheck(2024);
  CHECK(gradcheck_passes(report));
  std::set<std::string> names;
  for (const auto& e : report) {
    CHECK(e.max_rel_err < 1e-4);
    CHECK(names.insert(e.name).second);  // every op exactly once
  }
  // the three end-to-end paths are part of the registry
  CHECK(names.count("path.enhancer_to_loss") == 1);
  CHECK(names.count("path.encoder_to_loss") == 1);
  CHECK(names.count("path.decoder_fk_to_loss") == 1);

  set_corrupt_matmul_backward(true);
  auto bad = gradcheck(2024);
  set_corrupt_matmul_backward(false);
  CHECK(!gradcheck_passes(bad));
}

TEST_CASE("ablate with an empty id set trains the full model only") {
  RunConfig cfg = micro_cfg();
  cfg.optim.total_steps = 2;
  cfg.optim.eval_interval = 2;
  const std::string dir = tmp_dir("ablate");
  auto rows = ablate(cfg, {}, dir);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].id == 0);
  CHECK(rows[0].label == "full");
  CHECK(rows[0].manifest_hash ==
        load_manifest(dir + "/data/manifest.txt").hash);
  CHECK(fs::exists(dir + "/full/metrics.csv"));
  CHECK(fs::exists(dir + "/ablation_table.csv"));
}

TEST_CASE("NaN loss aborts naming the offending batch") {
  RunConfig cfg = micro_cfg();
  cfg.optim.total_steps = 1;
  Dataset ds = build_dataset(cfg);
  for (auto& it : ds.items) it.sample.state[0] = std::nan("");
  const std::string dir = tmp_dir("nan");
  bool threw = false;
  try {
    train(cfg, ds, dir);
  } catch (const std::runtime_error& err) {
    threw = true;
    const std::string msg = err.what();
    CHECK(msg.find("aborted at step 0") != std::string::npos);
    CHECK(msg.find("batch items") != std::string::npos);
  }
  CHECK(threw);
}
