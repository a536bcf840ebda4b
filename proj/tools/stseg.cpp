// Command-line front end: gen-data, pretrain-texture, train, eval, ablate, report.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>

#include "stseg/config.hpp"
#include "stseg/dataset.hpp"
#include "stseg/error.hpp"
#include "stseg/evaluator.hpp"
#include "stseg/texture_encoder.hpp"
#include "stseg/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
};

void add_common(CLI::App* cmd, CommonFlags& f, const std::string& out_help) {
  cmd->add_option("--config", f.config, "JSON configuration file");
  cmd->add_option("--seed", f.seed, "master seed (overrides the config key 'seed')");
  cmd->add_option("--out", f.out, out_help);
  cmd->add_flag("--force", f.force, "overwrite existing outputs");
}

stseg::Config resolve(const CommonFlags& f) {
  stseg::Config cfg = f.config.empty() ? stseg::Config{} : stseg::load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  return cfg;
}

int run_gen_data(const CommonFlags& f) {
  stseg::Config cfg = resolve(f);
  if (!f.out.empty()) cfg.data.root = f.out;
  stseg::generate_dataset(cfg.data, cfg.seed, f.force);
  std::cout << "dataset written to " << cfg.data.root << '\n';
  return 0;
}

int run_pretrain(const CommonFlags& f) {
  stseg::Config cfg = resolve(f);
  if (!f.out.empty()) cfg.texture.checkpoint = f.out;
  if (fs::exists(cfg.texture.checkpoint) && !f.force) {
    throw stseg::ValidationError("texture checkpoint " + cfg.texture.checkpoint + " exists (pass --force)");
  }
  stseg::PretrainLog log;
  const auto enc = stseg::pretrain_texture_encoder(cfg.texture, cfg.model, cfg.seed, &log);
  enc.save(cfg.texture.checkpoint);
  for (std::size_t e = 0; e < log.epoch_loss.size(); ++e) {
    std::cout << "epoch " << e + 1 << " loss " << log.epoch_loss[e] << " held-out accuracy "
              << log.epoch_val_accuracy[e] << '\n';
  }
  std::cout << "texture encoder accuracy " << enc.meta().accuracy << " saved to " << cfg.texture.checkpoint << '\n';
  return 0;
}

int run_train(const CommonFlags& f, bool resume, long stop_after) {
  stseg::Config cfg = resolve(f);
  stseg::TrainOptions opts;
  opts.run_dir = f.out.empty() ? "runs/train" : f.out;
  opts.force = f.force;
  opts.resume = resume;
  opts.stop_after = stop_after;
  opts.label = fs::path(opts.run_dir).filename().string();
  const auto result = stseg::train(cfg, opts);
  if (result.final_checkpoint.empty()) {
    std::cout << "stopped after " << result.log.size() << " steps; resume with --resume\n";
  } else {
    std::cout << "final checkpoint " << result.final_checkpoint << '\n';
  }
  return 0;
}

int run_eval(const CommonFlags& f, const std::string& checkpoint, const std::string& run_dir) {
  stseg::Config cfg;
  std::string ckpt = checkpoint;
  std::string out = f.out;
  if (!run_dir.empty()) {
    // a run directory is self-describing: config.json plus checkpoints/final.ckpt
    cfg = stseg::load_config((fs::path(run_dir) / "config.json").string());
    if (ckpt.empty()) ckpt = (fs::path(run_dir) / "checkpoints" / "final.ckpt").string();
    if (out.empty()) out = (fs::path(run_dir) / "reports").string();
  }
  if (!f.config.empty()) cfg = stseg::load_config(f.config);
  if (ckpt.empty()) throw stseg::ValidationError("eval: pass --checkpoint or --run");
  if (out.empty()) out = "reports";
  stseg::EvalOptions eo;
  eo.data_root = cfg.data.root;
  eo.splits = cfg.eval.splits;
  eo.grouping = cfg.eval.grouping;
  eo.batch = cfg.eval.batch;
  const auto r = stseg::evaluate_checkpoint(ckpt, eo, out, fs::path(ckpt).stem().string());
  for (const auto& s : r.splits) std::cout << s.split << ": mIoU " << s.miou << " mAcc " << s.macc << '\n';
  if (auto v = r.corrupted_miou()) std::cout << "corrupted average: mIoU " << *v << " mAcc " << *r.corrupted_macc() << '\n';
  std::cout << "reports written to " << out << '\n';
  return 0;
}

int run_ablate(const CommonFlags& f) {
  stseg::Config cfg = resolve(f);
  if (f.seed) cfg.ablation.seeds = {*f.seed};
  stseg::AblationOptions opts;
  if (!f.out.empty()) opts.out_dir = f.out;
  opts.force = f.force;
  stseg::run_ablation(cfg, opts);
  std::cout << "ablation written to " << opts.out_dir << '\n';
  return 0;
}

int run_report(const CommonFlags& f) {
  const std::string dir = f.out.empty() ? "runs/ablation" : f.out;
  const auto summary = stseg::aggregate_ablation(dir);
  if (summary.rows.empty()) throw stseg::ValidationError("no evaluated runs found under " + dir);
  std::cout << summary.table_markdown;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Style expansion and texture regularization for terrain segmentation"};
  app.require_subcommand(1);
  CommonFlags gen, pre, tr, ev, ab, rep;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate the synthetic dataset and its corrupted copy");
  add_common(gen_cmd, gen, "dataset root (data.root)");
  auto* pre_cmd = app.add_subcommand("pretrain-texture", "pre-train and freeze the texture encoder");
  add_common(pre_cmd, pre, "checkpoint path (texture.checkpoint)");
  auto* tr_cmd = app.add_subcommand("train", "train one model");
  add_common(tr_cmd, tr, "run directory");
  bool resume = false;
  long stop_after = -1;
  tr_cmd->add_flag("--resume", resume, "continue from the newest checkpoint in the run directory");
  tr_cmd->add_option("--stop-after", stop_after, "stop after this many steps (resumable)");
  auto* ev_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(ev_cmd, ev, "report directory");
  std::string checkpoint, run_dir;
  ev_cmd->add_option("--checkpoint", checkpoint, "model checkpoint");
  ev_cmd->add_option("--run", run_dir, "run directory (uses its config.json and final checkpoint)");
  auto* ab_cmd = app.add_subcommand("ablate", "train and evaluate the six ablation configurations");
  add_common(ab_cmd, ab, "ablation directory");
  auto* rep_cmd = app.add_subcommand("report", "aggregate an ablation directory into tables");
  add_common(rep_cmd, rep, "ablation directory to aggregate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*pre_cmd) return run_pretrain(pre);
    if (*tr_cmd) return run_train(tr, resume, stop_after);
    if (*ev_cmd) return run_eval(ev, checkpoint, run_dir);
    if (*ab_cmd) return run_ablate(ab);
    if (*rep_cmd) return run_report(rep);
  } catch (const stseg::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
