#include "semkit/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "semkit/checkpoint.hpp"

#ifndef SEMKIT_CODE_VERSION
#define SEMKIT_CODE_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace semkit {

std::string code_version() { return SEMKIT_CODE_VERSION; }

// ---- config ----

namespace {

std::string frame_name(FrameMode m) {
  return m == FrameMode::base ? "base" : "camera";
}

FrameMode frame_from_name(const std::string& s) {
  if (s == "base") return FrameMode::base;
  if (s == "camera") return FrameMode::camera;
  throw std::invalid_argument("config: unknown frame_mode '" + s + "'");
}

constexpr Task kAllTasks[] = {Task::reach, Task::push, Task::pick_place};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

void validate(const RunConfig& cfg) {
  const PolicyConfig& p = cfg.policy;
  if (p.d_model < 1 || p.heads < 1 || p.d_model % p.heads)
    throw std::invalid_argument("config: d_model must be divisible by heads");
  if (p.t_out < 1 || p.t_lat < 1 || p.t_out % p.t_lat)
    throw std::invalid_argument("config: t_out must be a multiple of t_lat");
  if (p.t_out != cfg.world.t_out)
    throw std::invalid_argument("config: policy.t_out != world.t_out");
  if (p.c_img != cfg.world.c_img || p.c_depth != cfg.world.c_depth)
    throw std::invalid_argument("config: channel counts disagree with world");
  if (p.k_bins < 2 || !(p.bin_lo > 0) || !(p.bin_hi > p.bin_lo))
    throw std::invalid_argument("config: bad depth bins");
  if (cfg.data.embodiments.empty())
    throw std::invalid_argument("config: no embodiments");
  for (const auto& n : cfg.data.embodiments) make_arm(n);  // throws on unknown
  for (int d : cfg.data.difficulties)
    if (d != 0 && d != 1)
      throw std::invalid_argument("config: difficulty must be 0 or 1");
  if (cfg.data.episodes_per_cell < 1)
    throw std::invalid_argument("config: episodes_per_cell < 1");
  const OptimConfig& o = cfg.optim;
  if (o.batch_size < 1 || o.total_steps < 1 || o.eval_interval < 1 ||
      o.eval_episodes < 1 || !(o.lr > 0) || o.momentum < 0 ||
      o.momentum >= 1 || o.clip_norm < 0)
    throw std::invalid_argument("config: bad optimizer settings");
  if (cfg.dpm_steps < 1) throw std::invalid_argument("config: dpm_steps < 1");
  if (cfg.replan() < 1 || cfg.replan() > p.t_out)
    throw std::invalid_argument("config: replan interval outside [1, t_out]");
  if (cfg.world.episode_len < cfg.world.t_out)
    throw std::invalid_argument("config: episode shorter than one chunk");
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["dpm_steps"] = cfg.dpm_steps;
  j["replan_every"] = cfg.replan_every;
  const PolicyConfig& p = cfg.policy;
  j["policy"] = {{"d_model", p.d_model},
                 {"heads", p.heads},
                 {"enc_layers", p.enc_layers},
                 {"dec_blocks", p.dec_blocks},
                 {"t_out", p.t_out},
                 {"t_lat", p.t_lat},
                 {"k_bins", p.k_bins},
                 {"bin_lo", p.bin_lo},
                 {"bin_hi", p.bin_hi},
                 {"c_img", p.c_img},
                 {"c_depth", p.c_depth},
                 {"use_depth", p.use_depth},
                 {"use_spatial_enhancer", p.use_spatial_enhancer},
                 {"frame_mode", frame_name(p.frame_mode)},
                 {"use_jga", p.use_jga},
                 {"loss_weights",
                  {{"joint", p.loss_w.joint},
                   {"pose", p.loss_w.pose},
                   {"pose_fk", p.loss_w.pose_fk},
                   {"depth", p.loss_w.depth}}}};
  const WorldConfig& w = cfg.world;
  j["world"] = {{"grid_h", w.grid_h},       {"grid_w", w.grid_w},
                {"episode_len", w.episode_len},
                {"t_out", w.t_out},         {"anchor_stride", w.anchor_stride},
                {"c_img", w.c_img},         {"c_depth", w.c_depth},
                {"object_radius", w.object_radius},
                {"attach_dist", w.attach_dist},
                {"success_dist", w.success_dist},
                {"bg_depth", w.bg_depth}};
  j["data"] = {{"embodiments", cfg.data.embodiments},
               {"difficulties", cfg.data.difficulties},
               {"episodes_per_cell", cfg.data.episodes_per_cell}};
  const OptimConfig& o = cfg.optim;
  j["optim"] = {{"lr", o.lr},
                {"momentum", o.momentum},
                {"clip_norm", o.clip_norm},
                {"batch_size", o.batch_size},
                {"total_steps", o.total_steps},
                {"eval_interval", o.eval_interval},
                {"eval_episodes", o.eval_episodes}};
  return j.dump(2) + "\n";
}

RunConfig run_config_from_json(const std::string& text) {
  json j = json::parse(text);
  RunConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  cfg.dpm_steps = j.value("dpm_steps", cfg.dpm_steps);
  cfg.replan_every = j.value("replan_every", cfg.replan_every);
  if (j.contains("policy")) {
    const json& p = j["policy"];
    PolicyConfig& c = cfg.policy;
    c.d_model = p.value("d_model", c.d_model);
    c.heads = p.value("heads", c.heads);
    c.enc_layers = p.value("enc_layers", c.enc_layers);
    c.dec_blocks = p.value("dec_blocks", c.dec_blocks);
    c.t_out = p.value("t_out", c.t_out);
    c.t_lat = p.value("t_lat", c.t_lat);
    c.k_bins = p.value("k_bins", c.k_bins);
    c.bin_lo = p.value("bin_lo", c.bin_lo);
    c.bin_hi = p.value("bin_hi", c.bin_hi);
    c.c_img = p.value("c_img", c.c_img);
    c.c_depth = p.value("c_depth", c.c_depth);
    c.use_depth = p.value("use_depth", c.use_depth);
    c.use_spatial_enhancer =
        p.value("use_spatial_enhancer", c.use_spatial_enhancer);
    if (p.contains("frame_mode"))
      c.frame_mode = frame_from_name(p["frame_mode"].get<std::string>());
    c.use_jga = p.value("use_jga", c.use_jga);
    if (p.contains("loss_weights")) {
      const json& lw = p["loss_weights"];
      c.loss_w.joint = lw.value("joint", c.loss_w.joint);
      c.loss_w.pose = lw.value("pose", c.loss_w.pose);
      c.loss_w.pose_fk = lw.value("pose_fk", c.loss_w.pose_fk);
      c.loss_w.depth = lw.value("depth", c.loss_w.depth);
    }
  }
  if (j.contains("world")) {
    const json& w = j["world"];
    WorldConfig& c = cfg.world;
    c.grid_h = w.value("grid_h", c.grid_h);
    c.grid_w = w.value("grid_w", c.grid_w);
    c.episode_len = w.value("episode_len", c.episode_len);
    c.t_out = w.value("t_out", c.t_out);
    c.anchor_stride = w.value("anchor_stride", c.anchor_stride);
    c.c_img = w.value("c_img", c.c_img);
    c.c_depth = w.value("c_depth", c.c_depth);
    c.object_radius = w.value("object_radius", c.object_radius);
    c.attach_dist = w.value("attach_dist", c.attach_dist);
    c.success_dist = w.value("success_dist", c.success_dist);
    c.bg_depth = w.value("bg_depth", c.bg_depth);
  } else {
    cfg.world.t_out = cfg.policy.t_out;  // keep the horizons coupled
  }
  if (j.contains("data")) {
    const json& d = j["data"];
    DatasetConfig& c = cfg.data;
    if (d.contains("embodiments"))
      c.embodiments = d["embodiments"].get<std::vector<std::string>>();
    if (d.contains("difficulties"))
      c.difficulties = d["difficulties"].get<std::vector<int>>();
    c.episodes_per_cell = d.value("episodes_per_cell", c.episodes_per_cell);
  }
  if (j.contains("optim")) {
    const json& o = j["optim"];
    OptimConfig& c = cfg.optim;
    c.lr = o.value("lr", c.lr);
    c.momentum = o.value("momentum", c.momentum);
    c.clip_norm = o.value("clip_norm", c.clip_norm);
    c.batch_size = o.value("batch_size", c.batch_size);
    c.total_steps = o.value("total_steps", c.total_steps);
    c.eval_interval = o.value("eval_interval", c.eval_interval);
    c.eval_episodes = o.value("eval_episodes", c.eval_episodes);
  }
  validate(cfg);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  RunConfig cfg = run_config_from_json(ss.str());
  if (const char* env = std::getenv("SEMKIT_SEED")) {
    cfg.seed = std::stoull(env);
    validate(cfg);
  }
  return cfg;
}

void apply_ablation(PolicyConfig& pc, int id) {
  switch (id) {
    case 0: break;
    case 1:
      pc.use_depth = false;
      pc.use_spatial_enhancer = false;
      break;
    case 2: pc.use_depth = false; break;
    case 3: pc.frame_mode = FrameMode::camera; break;
    case 4: pc.use_jga = false; break;
    default:
      throw std::invalid_argument("ablation id must be in {1,2,3,4}");
  }
}

std::string ablation_label(int id) {
  switch (id) {
    case 0: return "full";
    case 1: return "no_depth_no_se";
    case 2: return "no_depth";
    case 3: return "camera_frame";
    case 4: return "no_jga";
    default: throw std::invalid_argument("ablation id must be in {1,2,3,4}");
  }
}

// ---- dataset ----

Dataset build_dataset(const RunConfig& cfg, const std::string& dir) {
  validate(cfg);
  Dataset ds;
  for (const auto& name : cfg.data.embodiments)
    ds.embodiments.push_back(make_arm(name));
  const CameraRig rig = make_rig();
  if (!dir.empty()) fs::create_directories(dir);
  const Rng root(cfg.seed);
  for (size_t ei = 0; ei < ds.embodiments.size(); ++ei) {
    const Embodiment& e = ds.embodiments[ei];
    for (Task task : kAllTasks)
      for (int diff : cfg.data.difficulties)
        for (int k = 0; k < cfg.data.episodes_per_cell; ++k) {
          std::ostringstream label;
          label << "data/" << e.name() << "/" << task_name(task) << "/" << diff
                << "/" << k;
          const uint64_t seed = root.fork(label.str()).u64();
          SceneSpec scene = sample_scene(e, task, diff, seed, cfg.world);
          ExpertEpisode ep = expert_policy(e, scene, cfg.world);
          for (Sample& s : episode_samples(e, ep, rig, cfg.world))
            ds.items.push_back({static_cast<int>(ei), std::move(s)});
          std::ostringstream fname;
          fname << e.name() << "_" << task_name(task) << "_" << diff << "_"
                << k << ".ep";
          ds.manifest.seeds.push_back(scene.seed);
          ds.manifest.paths.push_back(fname.str());
          if (!dir.empty()) save_episode(dir + "/" + fname.str(), ep);
        }
  }
  ds.manifest.hash = manifest_hash(ds.manifest);
  if (!dir.empty()) save_manifest(dir + "/manifest.txt", ds.manifest);
  return ds;
}

// ---- evaluation ----

Actor policy_actor(const SemPolicy& pol, const DiffusionSchedule& sched,
                   int dpm_steps, int grid_h, int grid_w) {
  // frustum geometry per rig; rigs differ only by camera-height offset
  auto cache = std::make_shared<std::map<std::string, std::vector<Tensor>>>();
  return [&pol, sched, dpm_steps, grid_h, grid_w, cache](
             const Embodiment& e, const ToyWorld& sim, int, const CameraRig& rig,
             Rng& rng) {
    std::ostringstream key;
    key << std::setprecision(17);
    for (int v = 0; v < rig.num_views(); ++v)
      for (double x : rig.view(v).extrinsic) key << x << ",";
    auto it = cache->find(key.str());
    if (it == cache->end())
      it = cache->emplace(key.str(), pol.rig_points(rig, grid_h, grid_w)).first;
    Observation obs;
    obs.state = e.enhanced_state(sim.q());
    obs.grid = sim.observe(rig);
    obs.instruction_id = sim.scene().instruction_id;
    return pol.predict_action(e, obs, it->second, sched, dpm_steps, rng);
  };
}

Actor expert_actor(const WorldConfig& wc) {
  auto cache = std::make_shared<std::map<uint64_t, ExpertEpisode>>();
  return [wc, cache](const Embodiment& e, const ToyWorld& sim, int t,
                     const CameraRig&, Rng&) {
    auto it = cache->find(sim.scene().seed);
    if (it == cache->end())
      it = cache->emplace(sim.scene().seed, expert_policy(e, sim.scene(), wc))
               .first;
    const auto& q = it->second.q;
    const int nj = e.num_joints();
    std::vector<double> chunk(static_cast<size_t>(nj) * wc.t_out);
    for (int i = 0; i < nj; ++i)
      for (int k = 0; k < wc.t_out; ++k)
        chunk[i * wc.t_out + k] =
            q[std::min<size_t>(t + 1 + k, q.size() - 1)][i];
    return chunk;
  };
}

EvalCell evaluate_cell(const Actor& actor, const Embodiment& e, Task task,
                       int difficulty, const WorldConfig& wc,
                       double camera_offset, int episodes, int replan,
                       uint64_t seed) {
  if (replan < 1 || replan > wc.t_out)
    throw std::invalid_argument("evaluate: replan interval outside [1, t_out]");
  const CameraRig rig = make_rig(camera_offset);
  EvalCell cell;
  cell.embodiment = e.name();
  cell.task = task;
  cell.difficulty = difficulty;
  cell.camera_offset = camera_offset;
  cell.episodes = episodes;
  const int nj = e.num_joints();
  for (int k = 0; k < episodes; ++k) {
    std::ostringstream label;
    label << "eval/" << e.name() << "/" << task_name(task) << "/" << difficulty
          << "/" << k;
    Rng er = Rng(seed).fork(label.str());
    SceneSpec scene = sample_scene(e, task, difficulty, er.u64(), wc);
    ToyWorld sim(e, scene, wc);
    std::vector<double> chunk;
    std::vector<double> qt(nj);
    bool ok = false;
    for (int t = 0; t < wc.episode_len; ++t) {
      if (t % replan == 0) chunk = actor(e, sim, t, rig, er);
      const int off = std::min(t % replan, wc.t_out - 1);
      for (int i = 0; i < nj; ++i) qt[i] = chunk[i * wc.t_out + off];
      sim.step(qt);
      if (sim.success()) ok = true;  // latched
    }
    if (ok) ++cell.successes;
  }
  return cell;
}

EvalReport evaluate_suite(const RunConfig& cfg, const Actor& actor,
                          const std::string& suite, int episodes,
                          uint64_t seed) {
  validate(cfg);
  EvalReport r;
  auto add_cells = [&](const std::string& emb, int difficulty, double offset) {
    const Embodiment e = make_arm(emb);
    for (Task task : kAllTasks)
      r.cells.push_back(evaluate_cell(actor, e, task, difficulty, cfg.world,
                                      offset, episodes, cfg.replan(), seed));
  };
  if (suite == "tasks") {
    for (const auto& emb : cfg.data.embodiments)
      for (int diff : cfg.data.difficulties) add_cells(emb, diff, 0.0);
  } else if (suite == "camera") {
    for (double off : camera_height_offsets())
      for (const auto& emb : cfg.data.embodiments) add_cells(emb, 0, off);
  } else if (suite == "embodiment") {
    for (const auto& emb : {std::string("arm6"), std::string("arm8")}) {
      if (std::find(cfg.data.embodiments.begin(), cfg.data.embodiments.end(),
                    emb) == cfg.data.embodiments.end())
        throw std::runtime_error(
            "evaluate: suite requests embodiment '" + emb +
            "' absent from the checkpoint's training config");
      add_cells(emb, 0, 0.0);
    }
  } else {
    throw std::invalid_argument("evaluate: unknown suite '" + suite + "'");
  }
  double sum = 0;
  for (const EvalCell& c : r.cells) sum += c.rate();
  r.mean_rate = r.cells.empty() ? 0.0 : sum / r.cells.size();
  return r;
}

std::string eval_report_csv(const EvalReport& r) {
  // normalized rate per the camera suite: rate(offset) / rate(offset 0)
  // within each (embodiment, task, difficulty) group
  std::map<std::string, double> base;
  for (const EvalCell& c : r.cells)
    if (c.camera_offset == 0.0)
      base[c.embodiment + "/" + task_name(c.task) + "/" +
           std::to_string(c.difficulty)] = c.rate();
  std::ostringstream os;
  os << "embodiment,task,difficulty,camera_offset,episodes,successes,rate,"
        "normalized_rate\n";
  for (const EvalCell& c : r.cells) {
    auto it = base.find(c.embodiment + "/" + task_name(c.task) + "/" +
                        std::to_string(c.difficulty));
    const double norm = (it != base.end() && it->second > 0)
                            ? c.rate() / it->second
                            : (c.camera_offset == 0.0 ? 1.0 : 0.0);
    os << c.embodiment << "," << task_name(c.task) << "," << c.difficulty
       << "," << fmt(c.camera_offset) << "," << c.episodes << ","
       << c.successes << "," << fmt(c.rate()) << "," << fmt(norm) << "\n";
  }
  os << "mean,,,,,," << fmt(r.mean_rate) << ",\n";
  return os.str();
}

// ---- training ----

namespace {

std::vector<double> str_to_doubles(const std::string& s) {
  std::vector<double> v(s.size());
  for (size_t i = 0; i < s.size(); ++i)
    v[i] = static_cast<double>(static_cast<unsigned char>(s[i]));
  return v;
}

std::string doubles_to_str(const std::vector<double>& v) {
  std::string s(v.size(), '\0');
  for (size_t i = 0; i < v.size(); ++i)
    s[i] = static_cast<char>(static_cast<unsigned char>(v[i]));
  return s;
}

struct TrainEval {
  double mean = 0;
  std::map<Task, double> per_task;
};

// quick mid-training eval: every embodiment x task at difficulty 0
TrainEval quick_eval(const RunConfig& cfg, const SemPolicy& pol,
                     const DiffusionSchedule& sched, int step) {
  const uint64_t seed =
      Rng(cfg.seed).fork("treval/" + std::to_string(step)).u64();
  Actor actor = policy_actor(pol, sched, cfg.dpm_steps, cfg.world.grid_h,
                             cfg.world.grid_w);
  TrainEval out;
  std::map<Task, double> sums;
  std::map<Task, int> counts;
  for (const auto& emb : cfg.data.embodiments) {
    const Embodiment e = make_arm(emb);
    for (Task task : kAllTasks) {
      EvalCell c = evaluate_cell(actor, e, task, 0, cfg.world, 0.0,
                                 cfg.optim.eval_episodes, cfg.replan(), seed);
      sums[task] += c.rate();
      counts[task] += 1;
      out.mean += c.rate();
    }
  }
  out.mean /= 3.0 * cfg.data.embodiments.size();
  for (Task task : kAllTasks) out.per_task[task] = sums[task] / counts[task];
  return out;
}

}  // namespace

int load_policy_checkpoint(const std::string& path, SemPolicy& pol) {
  auto aux = load_checkpoint(path, pol.params());
  auto it = aux.find("step");
  return it == aux.end() ? 0 : static_cast<int>(it->second.at(0));
}

TrainResult train(const RunConfig& cfg, const Dataset& ds,
                  const std::string& out_dir, bool resume, std::ostream* log,
                  int stop_after) {
  validate(cfg);
  if (ds.items.empty()) throw std::invalid_argument("train: empty dataset");
  fs::create_directories(out_dir);

  SemPolicy pol(cfg.policy, cfg.seed);
  const DiffusionSchedule sched;
  const CameraRig rig = make_rig();
  const auto points = pol.rig_points(rig, cfg.world.grid_h, cfg.world.grid_w);

  Rng batch_rng = Rng(cfg.seed).fork("batch");
  Rng noise_rng = Rng(cfg.seed).fork("noise");
  std::map<std::string, std::vector<double>> vel;
  for (const auto& [name, p] : pol.params().all())
    vel[name].assign(p.numel(), 0.0);

  const std::string last_path = out_dir + "/last.ckpt";
  const std::string best_path = out_dir + "/best.ckpt";
  const std::string metrics_path = out_dir + "/metrics.csv";
  int step0 = 0;
  double best = -1.0;
  if (resume) {
    auto aux = load_checkpoint(last_path, pol.params());
    step0 = static_cast<int>(aux.at("step").at(0));
    best = aux.at("best").at(0);
    batch_rng.load_state(doubles_to_str(aux.at("rng.batch")));
    noise_rng.load_state(doubles_to_str(aux.at("rng.noise")));
    for (auto& [name, v] : vel) {
      auto it = aux.find("vel." + name);
      if (it == aux.end())
        throw std::runtime_error("resume: missing velocity for " + name);
      v = it->second;
    }
  } else {
    std::ofstream cfg_out(out_dir + "/config.json");
    cfg_out << run_config_to_json(cfg);
    std::ofstream ver(out_dir + "/version.txt");
    ver << "code " << code_version() << "\nmanifest " << ds.manifest.hash
        << "\n";
    std::ofstream m(metrics_path);
    m << "step,lr,loss_total,loss_joint,loss_pose,loss_pose_fk,loss_depth,"
         "eval_mean,eval_reach,eval_push,eval_pick_place\n";
    std::ofstream t(out_dir + "/timing.csv");
    t << "step,wall_seconds\n";
  }

  auto save = [&](const std::string& path, int next_step) {
    std::map<std::string, std::vector<double>> aux;
    aux["step"] = {static_cast<double>(next_step)};
    aux["best"] = {best};
    aux["rng.batch"] = str_to_doubles(batch_rng.save_state());
    aux["rng.noise"] = str_to_doubles(noise_rng.save_state());
    for (const auto& [name, v] : vel) aux["vel." + name] = v;
    save_checkpoint(path, pol.params(), aux);
  };

  const auto t_start = std::chrono::steady_clock::now();
  TrainResult res;
  res.best_success = std::max(best, 0.0);
  double acc_total = 0, acc_joint = 0, acc_pose = 0, acc_fk = 0, acc_depth = 0;
  int acc_n = 0;

  for (int step = step0; step < cfg.optim.total_steps; ++step) {
    const double lr_t =
        cfg.optim.lr * 0.5 *
        (1.0 + std::cos(M_PI * step / cfg.optim.total_steps));

    std::vector<int> ids(cfg.optim.batch_size);
    for (int& id : ids)
      id = static_cast<int>(batch_rng.randint(ds.items.size()));

    // one E^P evaluation shared by the whole batch
    Tensor total;
    double joint = 0, pose = 0, fk = 0, depth = 0;
    try {
      const auto ep = pol.point_embeddings(points);
      for (int id : ids) {
        const DataItem& it = ds.items[id];
        Observation obs;
        obs.state = it.sample.state;
        obs.grid = it.sample.grid;
        obs.instruction_id = it.sample.instruction_id;
        LossBreakdown b =
            pol.loss_embedded(ds.embodiments[it.embodiment], obs,
                              it.sample.actions, ep, sched, noise_rng);
        total = total.defined() ? add(total, b.total) : b.total;
        joint += b.joint;
        pose += b.pose;
        fk += b.pose_fk;
        depth += b.depth;
      }
      total = mul_scalar(total, 1.0 / cfg.optim.batch_size);
      if (!std::isfinite(total.item()))
        throw std::runtime_error("non-finite loss");
    } catch (const std::exception& ex) {
      std::ostringstream os;
      os << "train: aborted at step " << step << ", batch items [";
      for (size_t i = 0; i < ids.size(); ++i)
        os << (i ? "," : "") << ids[i];
      os << "]: " << ex.what();
      throw std::runtime_error(os.str());
    }
    const double lv = total.item();
    pol.params().zero_grads();
    total.backward();
    double gsq = 0;
    for (const auto& [name, p] : pol.params().all())
      for (double g : p.node()->grad) gsq += g * g;
    const double gnorm = std::sqrt(gsq);
    const double scale = (cfg.optim.clip_norm > 0 && gnorm > cfg.optim.clip_norm)
                             ? cfg.optim.clip_norm / gnorm
                             : 1.0;
    for (const auto& [name, p] : pol.params().all()) {
      auto& node = *p.node();
      auto& v = vel[name];
      if (node.grad.empty()) continue;
      for (size_t i = 0; i < v.size(); ++i) {
        v[i] = cfg.optim.momentum * v[i] - lr_t * scale * node.grad[i];
        node.value[i] += v[i];
      }
    }
    acc_total += lv;
    acc_joint += joint / cfg.optim.batch_size;
    acc_pose += pose / cfg.optim.batch_size;
    acc_fk += fk / cfg.optim.batch_size;
    acc_depth += depth / cfg.optim.batch_size;
    ++acc_n;
    res.final_loss = lv;
    res.steps_done = step + 1;

    const bool at_interval = (step + 1) % cfg.optim.eval_interval == 0 ||
                             step + 1 == cfg.optim.total_steps;
    if (!at_interval) continue;

    TrainEval ev = quick_eval(cfg, pol, sched, step + 1);
    if (ev.mean > best) {
      best = ev.mean;
      res.best_success = best;
      save(best_path, step + 1);
    }
    save(last_path, step + 1);
    {
      std::ofstream m(metrics_path, std::ios::app);
      m << (step + 1) << "," << fmt(lr_t) << "," << fmt(acc_total / acc_n)
        << "," << fmt(acc_joint / acc_n) << "," << fmt(acc_pose / acc_n) << ","
        << fmt(acc_fk / acc_n) << "," << fmt(acc_depth / acc_n) << ","
        << fmt(ev.mean) << "," << fmt(ev.per_task[Task::reach]) << ","
        << fmt(ev.per_task[Task::push]) << ","
        << fmt(ev.per_task[Task::pick_place]) << "\n";
      std::ofstream t(out_dir + "/timing.csv", std::ios::app);
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                        t_start)
              .count();
      t << (step + 1) << "," << wall << "\n";
    }
    if (log)
      *log << "step " << (step + 1) << " loss " << acc_total / acc_n
           << " eval " << ev.mean << "\n";
    acc_total = acc_joint = acc_pose = acc_fk = acc_depth = 0;
    acc_n = 0;
    if (stop_after > 0 && step + 1 >= stop_after) break;
  }
  res.best_ckpt = best_path;
  res.last_ckpt = last_path;
  if (!fs::exists(best_path)) res.best_ckpt = last_path;
  return res;
}

// ---- gradient checks ----

namespace {

using BuildFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Analytic tape gradients vs central differences over every leaf coordinate.
double case_max_rel(const BuildFn& f, std::vector<std::vector<double>> data,
                    const std::vector<Shape>& shapes, double step = 1e-5) {
  auto eval = [&](const std::vector<std::vector<double>>& vals,
                  std::vector<std::vector<double>>* grads) {
    std::vector<Tensor> leaves;
    for (size_t i = 0; i < shapes.size(); ++i)
      leaves.push_back(Tensor::leaf(shapes[i], vals[i]));
    Tensor out = f(leaves);
    if (grads) {
      out.backward();
      grads->clear();
      for (const Tensor& l : leaves) grads->push_back(l.node()->grad);
    }
    return out.item();
  };
  std::vector<std::vector<double>> analytic;
  eval(data, &analytic);
  double max_rel = 0;
  for (size_t v = 0; v < data.size(); ++v)
    for (size_t i = 0; i < data[v].size(); ++i) {
      const double keep = data[v][i];
      data[v][i] = keep + step;
      const double up = eval(data, nullptr);
      data[v][i] = keep - step;
      const double dn = eval(data, nullptr);
      data[v][i] = keep;
      const double fd = (up - dn) / (2 * step);
      const double an =
          analytic[v].empty() ? 0.0 : analytic[v][i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      max_rel = std::max(max_rel, std::abs(fd - an) / denom);
    }
  return max_rel;
}

std::vector<double> rand_vec(Rng& rng, int64_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Projection onto fixed pseudo-random weights (reproduced from the seed on
// every call) so each op's scalar has a non-uniform, stable gradient.
Tensor project(const Tensor& t, uint64_t seed) {
  Rng r(seed);
  return sum(mul(t, Tensor::from(t.shape(),
                                 rand_vec(r, t.numel(), -1.0, 1.0))));
}

struct PathFixture {
  RunConfig cfg;
  SemPolicy pol;
  Embodiment e;
  Observation obs;
  std::vector<double> actions;
  std::vector<Tensor> points;
};

PathFixture make_path_fixture(uint64_t seed) {
  RunConfig cfg;
  cfg.policy.d_model = 8;
  cfg.policy.heads = 2;
  cfg.policy.enc_layers = 1;
  cfg.policy.dec_blocks = 1;
  cfg.policy.t_out = 4;
  cfg.policy.t_lat = 2;
  cfg.policy.k_bins = 4;
  cfg.world.t_out = 4;
  cfg.world.grid_h = 4;
  cfg.world.grid_w = 4;
  validate(cfg);

  Embodiment e = make_arm("arm6");
  SceneSpec scene = sample_scene(e, Task::pick_place, 0, seed, cfg.world);
  ExpertEpisode ep = expert_policy(e, scene, cfg.world);
  ToyWorld sim(e, scene, cfg.world);
  CameraRig rig = make_rig();

  SemPolicy pol(cfg.policy, seed);
  // the output head is zero-initialized; give it signal so gradients flow
  Rng hr(seed ^ 0x9e3779b9ull);
  for (auto& v : pol.params().get("decoder.conv2.w").values())
    v = 0.1 * hr.uniform(-1, 1);

  Observation obs;
  obs.state = e.enhanced_state(sim.q());
  obs.grid = sim.observe(rig);
  obs.instruction_id = scene.instruction_id;

  const int nj = e.num_joints();
  std::vector<double> actions(static_cast<size_t>(nj) * cfg.world.t_out);
  for (int i = 0; i < nj; ++i)
    for (int t = 0; t < cfg.world.t_out; ++t)
      actions[i * cfg.world.t_out + t] =
          ep.q[std::min<size_t>(t + 1, ep.q.size() - 1)][i];

  std::vector<Tensor> points =
      pol.rig_points(rig, cfg.world.grid_h, cfg.world.grid_w);
  return PathFixture{cfg, std::move(pol), std::move(e), std::move(obs),
                     std::move(actions), std::move(points)};
}

// FD over a subset of parameters in one family vs the tape, through the
// full training loss (fixed diffusion timestep/noise via a reseeded rng)
double path_max_rel(PathFixture& fx, const std::string& prefix,
                    uint64_t loss_seed, double step = 1e-5) {
  const DiffusionSchedule sched;
  auto eval = [&]() {
    Rng rng(loss_seed);
    return fx.pol.loss(fx.e, fx.obs, fx.actions, fx.points, sched, rng);
  };
  fx.pol.params().zero_grads();
  LossBreakdown b = eval();
  b.total.backward();

  double max_rel = 0;
  for (const auto& [name, p] : fx.pol.params().all()) {
    if (name.rfind(prefix, 0) != 0) continue;
    auto& node = *p.node();
    const std::vector<double> analytic =
        node.grad.empty() ? std::vector<double>(node.value.size(), 0.0)
                          : node.grad;
    const size_t n_probe = std::min<size_t>(4, node.value.size());
    for (size_t i = 0; i < n_probe; ++i) {
      const double keep = node.value[i];
      node.value[i] = keep + step;
      const double up = eval().total.item();
      node.value[i] = keep - step;
      const double dn = eval().total.item();
      node.value[i] = keep;
      const double fd = (up - dn) / (2 * step);
      const double an = analytic[i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      max_rel = std::max(max_rel, std::abs(fd - an) / denom);
    }
  }
  return max_rel;
}

}  // namespace

std::vector<GradCheckEntry> gradcheck(uint64_t seed) {
  Rng rng(seed);
  std::vector<GradCheckEntry> report;
  auto run = [&](const std::string& name, const std::vector<Shape>& shapes,
                 const BuildFn& f, double lo = -2.0, double hi = 2.0) {
    std::vector<std::vector<double>> data;
    for (const Shape& s : shapes)
      data.push_back(rand_vec(rng, shape_numel(s), lo, hi));
    const uint64_t pseed = rng.fork("proj/" + name).u64();
    BuildFn g = [&f, pseed](const std::vector<Tensor>& l) {
      return project(f(l), pseed);
    };
    const double err = case_max_rel(g, std::move(data), shapes);
    report.push_back({name, err, err < 1e-4});
  };
  auto pj = [](const Tensor& t) { return t; };  // projection applied by run

  run("add", {{3, 4}, {3, 4}},
      [&](const std::vector<Tensor>& l) { return pj(add(l[0], l[1])); });
  run("add_broadcast", {{2, 3, 4}, {4}},
      [&](const std::vector<Tensor>& l) { return pj(add(l[0], l[1])); });
  run("sub", {{3, 4}, {3, 4}},
      [&](const std::vector<Tensor>& l) { return pj(sub(l[0], l[1])); });
  run("mul", {{3, 4}, {3, 4}},
      [&](const std::vector<Tensor>& l) { return pj(mul(l[0], l[1])); });
  run("div", {{3, 4}, {3, 4}},
      [&](const std::vector<Tensor>& l) { return pj(div(l[0], l[1])); }, 0.5,
      2.0);
  run("neg", {{5}},
      [&](const std::vector<Tensor>& l) { return pj(neg(l[0])); });
  run("add_scalar", {{5}},
      [&](const std::vector<Tensor>& l) { return pj(add_scalar(l[0], 1.7)); });
  run("mul_scalar", {{5}},
      [&](const std::vector<Tensor>& l) { return pj(mul_scalar(l[0], -2.3)); });
  run("sin", {{3, 3}},
      [&](const std::vector<Tensor>& l) { return pj(sin_t(l[0])); });
  run("cos", {{3, 3}},
      [&](const std::vector<Tensor>& l) { return pj(cos_t(l[0])); });
  run("exp", {{3, 3}},
      [&](const std::vector<Tensor>& l) { return pj(exp_t(l[0])); }, -1, 1);
  run("log", {{3, 3}},
      [&](const std::vector<Tensor>& l) { return pj(log_t(l[0])); }, 0.5, 3.0);
  run("sqrt", {{3, 3}},
      [&](const std::vector<Tensor>& l) { return pj(sqrt_t(l[0])); }, 0.5, 3.0);
  run("abs", {{3, 3}},
      [&](const std::vector<Tensor>& l) { return pj(abs_t(l[0])); }, 0.3, 2.0);
  run("tanh", {{3, 3}},
      [&](const std::vector<Tensor>& l) { return pj(tanh_t(l[0])); });
  run("relu", {{3, 3}},
      [&](const std::vector<Tensor>& l) { return pj(relu(l[0])); }, 0.3, 2.0);
  run("gelu", {{3, 3}},
      [&](const std::vector<Tensor>& l) { return pj(gelu(l[0])); });
  run("sigmoid", {{3, 3}},
      [&](const std::vector<Tensor>& l) { return pj(sigmoid(l[0])); });
  run("copysign_by", {{3, 3}, {3, 3}},
      [&](const std::vector<Tensor>& l) {
        return pj(copysign_by(l[0], l[1]));
      },
      0.3, 2.0);
  run("reshape", {{2, 6}},
      [&](const std::vector<Tensor>& l) {
        return pj(reshape(l[0], {3, 4}));
      });
  run("transpose2d", {{2, 3, 4}},
      [&](const std::vector<Tensor>& l) { return pj(transpose2d(l[0])); });
  run("slice", {{4, 5}},
      [&](const std::vector<Tensor>& l) { return pj(slice(l[0], 1, 1, 3)); });
  run("stride_slice", {{4, 6}},
      [&](const std::vector<Tensor>& l) {
        return pj(stride_slice(l[0], 1, 1, 2));
      });
  run("concat", {{2, 3}, {2, 2}},
      [&](const std::vector<Tensor>& l) {
        return pj(concat(1, {l[0], l[1]}));
      });
  run("sum", {{3, 4}},
      [&](const std::vector<Tensor>& l) { return sum(l[0]); });
  run("mean", {{3, 4}},
      [&](const std::vector<Tensor>& l) { return mean(l[0]); });
  run("matmul", {{3, 4}, {4, 5}},
      [&](const std::vector<Tensor>& l) { return pj(matmul(l[0], l[1])); });
  run("matmul_batched", {{2, 3, 4}, {2, 4, 5}},
      [&](const std::vector<Tensor>& l) { return pj(matmul(l[0], l[1])); });
  run("softmax", {{3, 5}},
      [&](const std::vector<Tensor>& l) { return pj(softmax(l[0], 1)); });
  run("layer_norm", {{3, 6}, {6}, {6}},
      [&](const std::vector<Tensor>& l) {
        return pj(layer_norm(l[0], l[1], l[2]));
      });
  run("conv1d_causal", {{2, 3, 6}, {4, 3, 3}, {4}},
      [&](const std::vector<Tensor>& l) {
        return pj(conv1d(l[0], l[1], l[2], Pad::causal));
      });
  run("conv1d_same", {{2, 3, 6}, {4, 3, 3}, {4}},
      [&](const std::vector<Tensor>& l) {
        return pj(conv1d(l[0], l[1], l[2], Pad::same));
      });
  run("conv1d_valid", {{2, 3, 6}, {4, 3, 3}, {4}},
      [&](const std::vector<Tensor>& l) {
        return pj(conv1d(l[0], l[1], l[2], Pad::valid));
      });
  run("upsample1d", {{2, 3, 4}},
      [&](const std::vector<Tensor>& l) { return pj(upsample1d(l[0], 2)); });
  run("einsum_attention_bilinear", {{3, 4}, {3, 3, 4}, {3, 4}},
      [&](const std::vector<Tensor>& l) {
        return pj(einsum_attention_bilinear(l[0], l[1], l[2]));
      });
  run("cross_entropy_logits", {{4, 5}},
      [&](const std::vector<Tensor>& l) {
        return cross_entropy_logits(l[0], {0, 2, 4, 1}, {1, 1, 0, 1});
      });
  run("l1_loss", {{3, 4}, {3, 4}},
      [&](const std::vector<Tensor>& l) { return l1_loss(l[0], l[1]); }, 0.3,
      2.0);

  // end-to-end paths through the full training objective
  PathFixture fx = make_path_fixture(seed + 17);
  const uint64_t loss_seed = seed + 101;
  for (const auto& [name, prefix] :
       std::vector<std::pair<std::string, std::string>>{
           {"path.enhancer_to_loss", "enhancer."},
           {"path.encoder_to_loss", "encoder."},
           {"path.decoder_fk_to_loss", "decoder."}}) {
    const double err = path_max_rel(fx, prefix, loss_seed);
    report.push_back({name, err, err < 1e-4});
  }
  return report;
}

bool gradcheck_passes(const std::vector<GradCheckEntry>& report) {
  if (report.empty()) return false;
  for (const auto& e : report)
    if (!e.pass) return false;
  return true;
}

// ---- ablations ----

std::vector<AblationRow> ablate(const RunConfig& cfg,
                                const std::vector<int>& ids,
                                const std::string& out_dir,
                                std::ostream* log) {
  validate(cfg);
  std::vector<int> order = {0};
  for (int id : ids) {
    if (id < 1 || id > 4)
      throw std::invalid_argument("ablate: ids must be in {1,2,3,4}");
    if (std::find(order.begin(), order.end(), id) == order.end())
      order.push_back(id);
  }
  fs::create_directories(out_dir);
  const Dataset ds = build_dataset(cfg, out_dir + "/data");
  const uint64_t eval_seed = Rng(cfg.seed).fork("ablate-eval").u64();
  const DiffusionSchedule sched;

  std::vector<AblationRow> rows;
  for (int id : order) {
    RunConfig c2 = cfg;
    apply_ablation(c2.policy, id);
    const std::string dir = out_dir + "/" + ablation_label(id);
    if (log) *log << "ablate: training " << ablation_label(id) << "\n";
    TrainResult tr = train(c2, ds, dir, false, log);

    SemPolicy pol(c2.policy, c2.seed);
    load_policy_checkpoint(tr.best_ckpt, pol);
    Actor actor = policy_actor(pol, sched, c2.dpm_steps, c2.world.grid_h,
                               c2.world.grid_w);
    EvalReport rep = evaluate_suite(c2, actor, "tasks",
                                    c2.optim.eval_episodes, eval_seed);
    rows.push_back({id, ablation_label(id), rep.mean_rate, ds.manifest.hash});
    if (log)
      *log << "ablate: " << ablation_label(id) << " mean success "
           << rep.mean_rate << "\n";
  }
  std::ofstream tbl(out_dir + "/ablation_table.csv");
  tbl << ablation_table_csv(rows);
  return rows;
}

std::string ablation_table_csv(const std::vector<AblationRow>& rows) {
  double full = 0;
  for (const auto& r : rows)
    if (r.id == 0) full = r.mean_success;
  std::ostringstream os;
  os << "id,label,mean_success,delta_vs_full,manifest_hash\n";
  for (const auto& r : rows)
    os << r.id << "," << r.label << "," << fmt(r.mean_success) << ","
       << fmt(r.mean_success - full) << "," << r.manifest_hash << "\n";
  return os.str();
}

}  // namespace semkit
