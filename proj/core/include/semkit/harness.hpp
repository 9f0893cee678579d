#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "semkit/policy.hpp"

namespace semkit {

struct OptimConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double clip_norm = 1.0;  // global gradient norm cap; 0 disables
  int batch_size = 16;
  int total_steps = 3000;
  int eval_interval = 500;     // metrics row + checkpoint cadence
  int eval_episodes = 8;       // per task during training eval
};

struct DatasetConfig {
  std::vector<std::string> embodiments = {"arm6", "arm8"};
  std::vector<int> difficulties = {0, 1};
  int episodes_per_cell = 15;  // per embodiment x task x difficulty
};

struct RunConfig {
  PolicyConfig policy;
  WorldConfig world;
  DatasetConfig data;
  OptimConfig optim;
  uint64_t seed = 1;
  int dpm_steps = 10;          // sampler calls per action chunk
  int replan_every = 0;        // 0 -> t_out / 2
  std::string out_dir = "runs/default";

  int replan() const { return replan_every > 0 ? replan_every : world.t_out / 2; }
};

void validate(const RunConfig& cfg);
std::string run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const std::string& text);
// Reads a JSON file; SEMKIT_SEED in the environment overrides the root seed.
RunConfig load_run_config(const std::string& path);

// Ablation ids from the comparison suite:
//   1 = no depth features and no spatial enhancer, 2 = no depth features,
//   3 = camera-frame (non-unified) lifting, 4 = vanilla attention (P == 1).
void apply_ablation(PolicyConfig& pc, int id);
std::string ablation_label(int id);  // id 0 = "full"

// ---- dataset ----
struct DataItem {
  int embodiment = 0;  // index into Dataset::embodiments
  Sample sample;
};

struct Dataset {
  std::vector<Embodiment> embodiments;
  std::vector<DataItem> items;
  Manifest manifest;
};

// Generates expert episodes for every cell of the config's data grid.
// When dir is non-empty the episodes and manifest are written there.
Dataset build_dataset(const RunConfig& cfg, const std::string& dir = "");

// ---- evaluation ----
// An actor maps the live sim state at control step t to the next
// [N_j * t_out] action chunk (absolute joint positions).
using Actor = std::function<std::vector<double>(
    const Embodiment& e, const ToyWorld& sim, int t, const CameraRig& rig,
    Rng& rng)>;

Actor policy_actor(const SemPolicy& pol, const DiffusionSchedule& sched,
                   int dpm_steps, int grid_h, int grid_w);
Actor expert_actor(const WorldConfig& wc);  // scripted oracle upper bound

struct EvalCell {
  std::string embodiment;
  Task task = Task::reach;
  int difficulty = 0;
  double camera_offset = 0.0;
  int successes = 0;
  int episodes = 0;
  double rate() const { return episodes ? double(successes) / episodes : 0.0; }
};

// Closed-loop rollouts: replan every `replan` steps, success latched at any
// control step. Episodes are seeded from `seed` independently of the actor.
EvalCell evaluate_cell(const Actor& actor, const Embodiment& e, Task task,
                       int difficulty, const WorldConfig& wc,
                       double camera_offset, int episodes, int replan,
                       uint64_t seed);

struct EvalReport {
  std::vector<EvalCell> cells;
  double mean_rate = 0.0;  // unweighted mean over cells
};

// suite: "tasks" (task x difficulty x embodiment at offset 0),
// "camera" (tasks at every camera height offset), "embodiment" (per arm).
// Refuses embodiments outside cfg.data.embodiments.
EvalReport evaluate_suite(const RunConfig& cfg, const Actor& actor,
                          const std::string& suite, int episodes,
                          uint64_t seed);
std::string eval_report_csv(const EvalReport& r);

// ---- training ----
struct TrainResult {
  int steps_done = 0;
  double best_success = 0.0;
  double final_loss = 0.0;
  std::string best_ckpt, last_ckpt;
};

// Momentum gradient descent with cosine step-size decay. Writes resolved
// config, metrics.csv (deterministic), timing.csv (wall clock), and
// best/last checkpoints into out_dir. resume=true continues from
// out_dir/last.ckpt bit-for-bit. NaN loss aborts naming the batch.
// stop_after > 0 interrupts the run after that step (an eval-interval
// multiple, so last.ckpt exists); the cosine schedule still spans
// total_steps.
TrainResult train(const RunConfig& cfg, const Dataset& ds,
                  const std::string& out_dir, bool resume = false,
                  std::ostream* log = nullptr, int stop_after = 0);

// Loads parameters (and returns the stored step) from a checkpoint.
int load_policy_checkpoint(const std::string& path, SemPolicy& pol);

// ---- gradient checks ----
struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Central finite differences (step 1e-5) against the tape for every
// registered op plus three end-to-end paths. Threshold 1e-4.
std::vector<GradCheckEntry> gradcheck(uint64_t seed);
bool gradcheck_passes(const std::vector<GradCheckEntry>& report);

// ---- ablations ----
struct AblationRow {
  int id = 0;
  std::string label;
  double mean_success = 0.0;
  std::string manifest_hash;
};

// Trains the full model plus each requested ablation on identical data and
// eval seeds; returns one row per trained model (full model first).
std::vector<AblationRow> ablate(const RunConfig& cfg,
                                const std::vector<int>& ids,
                                const std::string& out_dir,
                                std::ostream* log = nullptr);
std::string ablation_table_csv(const std::vector<AblationRow>& rows);

// Build-time source identity written into every run directory.
std::string code_version();

}  // namespace semkit
