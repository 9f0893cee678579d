#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "semkit/harness.hpp"

namespace fs = std::filesystem;
using namespace semkit;

namespace {

std::string sibling_config(const std::string& ckpt) {
  return (fs::path(ckpt).parent_path() / "config.json").string();
}

int cmd_train(const std::string& config, const std::string& out, bool resume) {
  RunConfig cfg = load_run_config(config);
  if (!out.empty()) cfg.out_dir = out;
  fs::create_directories(cfg.out_dir);
  Dataset ds = build_dataset(cfg, cfg.out_dir + "/data");
  TrainResult r = train(cfg, ds, cfg.out_dir, resume, &std::cout);
  std::cout << "done: steps " << r.steps_done << " best_success "
            << r.best_success << " final_loss " << r.final_loss << "\n"
            << "checkpoints: " << r.best_ckpt << " " << r.last_ckpt << "\n";
  return 0;
}

int cmd_gen_data(const std::string& config, const std::string& out) {
  RunConfig cfg = load_run_config(config);
  const std::string dir = out.empty() ? cfg.out_dir + "/data" : out;
  Dataset ds = build_dataset(cfg, dir);
  std::cout << "wrote " << ds.manifest.paths.size() << " episodes ("
            << ds.items.size() << " samples) to " << dir << "\n"
            << "manifest hash " << ds.manifest.hash << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, std::string config,
             const std::string& suite, int episodes, uint64_t seed,
             bool expert) {
  if (config.empty() && !ckpt.empty()) config = sibling_config(ckpt);
  RunConfig cfg = load_run_config(config);
  SemPolicy pol(cfg.policy, cfg.seed);
  Actor actor;
  if (expert) {
    actor = expert_actor(cfg.world);
  } else {
    const int step = load_policy_checkpoint(ckpt, pol);
    std::cout << "loaded " << ckpt << " (step " << step << ")\n";
    DiffusionSchedule sched;
    actor = policy_actor(pol, sched, cfg.dpm_steps, cfg.world.grid_h,
                         cfg.world.grid_w);
  }
  EvalReport rep = evaluate_suite(cfg, actor, suite, episodes, seed);
  std::cout << eval_report_csv(rep);
  std::cout << "mean_rate," << rep.mean_rate << "\n";
  return 0;
}

int cmd_gradcheck(uint64_t seed) {
  auto report = gradcheck(seed);
  for (const auto& e : report)
    std::cout << (e.pass ? "PASS " : "FAIL ") << e.name << " max_rel_err "
              << e.max_rel_err << "\n";
  const bool ok = gradcheck_passes(report);
  std::cout << (ok ? "gradcheck: all passed\n" : "gradcheck: FAILURES\n");
  return ok ? 0 : 1;
}

int cmd_ablate(const std::string& config, const std::string& ids_csv,
               const std::string& out) {
  RunConfig cfg = load_run_config(config);
  std::vector<int> ids;
  std::stringstream ss(ids_csv);
  for (std::string tok; std::getline(ss, tok, ',');)
    if (!tok.empty()) ids.push_back(std::stoi(tok));
  const std::string dir = out.empty() ? cfg.out_dir + "/ablations" : out;
  auto rows = ablate(cfg, ids, dir, &std::cout);
  std::cout << ablation_table_csv(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semkit: training, evaluation, and diagnostics"};
  app.require_subcommand(1);

  std::string config, out, ckpt, suite = "tasks", ids = "1,2,3,4";
  uint64_t seed = 7;
  int episodes = 100;
  bool resume = false, expert = false;

  auto* tr = app.add_subcommand("train", "train a policy from a config");
  tr->add_option("--config", config, "run config JSON")->required();
  tr->add_option("--out", out, "output directory (overrides config)");
  tr->add_flag("--resume", resume, "continue from <out>/last.ckpt");

  auto* gd = app.add_subcommand("gen-data", "generate the expert dataset");
  gd->add_option("--config", config, "run config JSON")->required();
  gd->add_option("--out", out, "dataset directory");

  auto* ev = app.add_subcommand("eval", "closed-loop evaluation suites");
  ev->add_option("--ckpt", ckpt, "checkpoint to evaluate");
  ev->add_option("--config", config, "run config JSON (default: next to ckpt)");
  ev->add_option("--suite", suite, "tasks | camera | embodiment");
  ev->add_option("--episodes", episodes, "episodes per cell");
  ev->add_option("--seed", seed, "evaluation seed");
  ev->add_flag("--expert", expert, "evaluate the scripted expert instead");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gc->add_option("--seed", seed, "check seed");

  auto* ab = app.add_subcommand("ablate", "train and compare ablations");
  ab->add_option("--config", config, "run config JSON")->required();
  ab->add_option("--ids", ids, "comma-separated ablation ids (1-4)");
  ab->add_option("--out", out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (tr->parsed()) return cmd_train(config, out, resume);
    if (gd->parsed()) return cmd_gen_data(config, out);
    if (ev->parsed()) return cmd_eval(ckpt, config, suite, episodes, seed, expert);
    if (gc->parsed()) return cmd_gradcheck(seed);
    if (ab->parsed()) return cmd_ablate(config, ids, out);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
