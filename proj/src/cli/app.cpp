#include <CLI11.hpp>
#include <iostream>

#include "openrel/cli/commands.hpp"
#include "openrel/core/errors.hpp"

namespace openrel::cli {

namespace {

std::optional<bool> set_mode(bool open_set, bool closed_set) {
  if (open_set && closed_set) throw ValidationError("--open-set and --closed-set are mutually exclusive");
  if (open_set) return true;
  if (closed_set) return false;
  return std::nullopt;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Open-set scene graph relation pipeline"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SynthArgs synth;
  std::optional<std::uint64_t> synth_seed;
  auto* s = app.add_subcommand("synth", "generate a synthetic dataset");
  s->add_option("--config", synth.config, "JSON config with a synth section");
  s->add_option("--seed", synth_seed, "generator seed");
  s->add_option("--out", synth.out, "output directory")->required();

  TrainArgs train;
  std::optional<std::uint64_t> train_seed;
  std::optional<std::string> train_mode;
  bool open_set = false;
  bool closed_set = false;
  auto* t = app.add_subcommand("train", "train a model and write a checkpoint");
  t->add_option("--config", train.config, "JSON config");
  t->add_option("--data", train.data, "training dataset file or directory");
  t->add_option("--seed", train_seed, "training seed");
  t->add_option("--mode", train_mode, "training objective")->check(CLI::IsMember({"judge", "generate", "both"}));
  t->add_flag("--open-set", open_set, "supervise base relations only");
  t->add_flag("--closed-set", closed_set, "supervise every relation");
  t->add_option("--out", train.out, "checkpoint path")->required();
  t->add_flag("--quiet", [&](std::int64_t) { train.verbose = false; }, "no per-epoch log");

  EvalArgs ev;
  std::optional<std::uint64_t> eval_seed;
  std::optional<double> eval_theta;
  std::optional<std::string> eval_sweep;
  std::optional<std::string> eval_mode;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint");
  e->add_option("--checkpoint", ev.checkpoint, "checkpoint path")->required();
  e->add_option("--data", ev.data, "test dataset file or directory");
  e->add_option("--config", ev.config, "JSON config with an eval section");
  e->add_option("--seed", eval_seed, "seed for the corrupted segmenter");
  e->add_option("--theta", eval_theta, "selector threshold");
  e->add_option("--theta-sweep", eval_sweep, "sweep a:b:step");
  e->add_option("--mode", eval_mode, "decoding mode")->check(CLI::IsMember({"judge", "generate"}));
  e->add_option("--out", ev.out, "output directory")->required();

  PredictArgs pr;
  std::optional<double> pred_theta;
  std::optional<std::string> pred_mode;
  bool no_overlay = false;
  auto* p = app.add_subcommand("predict", "predict scene graphs for the scenes of a dataset file");
  p->add_option("--checkpoint", pr.checkpoint, "checkpoint path")->required();
  p->add_option("--scene", pr.scene, "dataset file or directory with the scenes")->required();
  p->add_option("--theta", pred_theta, "selector threshold");
  p->add_option("--mode", pred_mode, "decoding mode")->check(CLI::IsMember({"judge", "generate"}));
  p->add_flag("--no-overlay", no_overlay, "skip overlay images");
  p->add_option("--out", pr.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (s->parsed()) {
      synth.seed = synth_seed;
      for (const auto& path : cmd_synth(synth)) std::cout << path.string() << "\n";
    } else if (t->parsed()) {
      train.seed = train_seed;
      train.mode = train_mode;
      train.open_set = set_mode(open_set, closed_set);
      std::cout << cmd_train(train).string() << "\n";
    } else if (e->parsed()) {
      ev.seed = eval_seed;
      ev.theta = eval_theta;
      ev.theta_sweep = eval_sweep;
      ev.mode = eval_mode;
      cmd_eval(ev);
    } else if (p->parsed()) {
      pr.theta = pred_theta;
      pr.mode = pred_mode;
      pr.overlay = !no_overlay;
      cmd_predict(pr);
      std::cout << (pr.out / "scene_graph.json").string() << "\n";
    }
  } catch (const ValidationError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 3;
  }
  return 0;
}

}  // namespace openrel::cli
