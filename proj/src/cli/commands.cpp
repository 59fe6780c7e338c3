#include "openrel/cli/commands.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>

#include "openrel/core/dataset_io.hpp"
#include "openrel/core/errors.hpp"
#include "openrel/eval/runner.hpp"
#include "openrel/synth/generator.hpp"
#include "openrel/train/checkpoint.hpp"
#include "openrel/train/trainer.hpp"

namespace openrel::cli {

namespace fs = std::filesystem;
using nlohmann::json;

json RunManifest::to_json() const {
  return json{{"command", command}, {"config_hash", config_hash}, {"seed", seed},       {"version", version},
              {"started", started}, {"finished", finished},       {"outputs", outputs}};
}

void RunManifest::write(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json().dump(2) << "\n";
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json read_config(const fs::path& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw ValidationError("config " + path.string() + " must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

fs::path config_relative(const fs::path& config, const std::string& value) {
  fs::path p(value);
  if (p.is_relative() && !config.empty()) p = config.parent_path() / p;
  return p;
}

std::uint64_t config_seed(const json& cfg) { return cfg.contains("seed") ? cfg.at("seed").get<std::uint64_t>() : 0; }

void apply_inference_overrides(PredictOptions& o, const json& cfg, const std::optional<double>& theta,
                               const std::optional<std::string>& mode) {
  if (cfg.contains("selector") && cfg.at("selector").contains("theta")) {
    o.theta = cfg.at("selector").at("theta").get<double>();
  }
  if (cfg.contains("scoring") && cfg.at("scoring").contains("multiply_existence")) {
    o.multiply_existence = cfg.at("scoring").at("multiply_existence").get<bool>();
  }
  if (cfg.contains("decoder") && cfg.at("decoder").contains("mode")) {
    o.mode = parse_decode_mode(cfg.at("decoder").at("mode").get<std::string>());
  }
  if (theta) o.theta = *theta;
  if (mode) o.mode = parse_decode_mode(*mode);
  if (!(o.theta >= 0.0 && o.theta <= 1.0)) throw ValidationError("--theta must lie in [0,1]");
}

}  // namespace

std::vector<fs::path> cmd_synth(const SynthArgs& args) {
  RunManifest manifest;
  manifest.command = "synth";
  manifest.started = utc_now();
  json cfg = read_config(args.config);
  if (args.seed) cfg["seed"] = *args.seed;
  auto sc = synth::synth_config_from_json(cfg);
  int test_scenes = 0;
  if (cfg.contains("synth")) test_scenes = cfg.at("synth").value("test_scenes", 0);
  if (test_scenes < 0) throw ValidationError("synth.test_scenes must be >= 0");
  if (args.out.empty()) throw ValidationError("synth needs --out");

  std::vector<fs::path> outputs;
  outputs.push_back(synth::write_dataset_dir(synth::generate(sc), args.out / "train"));
  if (test_scenes > 0) {
    Dataset test;
    test.relations = sc.vocabulary();
    test.object_classes = synth::class_names(sc);
    for (int i = 0; i < test_scenes; ++i) test.scenes.push_back(synth::generate_scene(sc, sc.scenes + i));
    outputs.push_back(synth::write_dataset_dir(test, args.out / "test"));
  }
  json snapshot = cfg;
  snapshot["synth"] = synth::to_json(sc);
  snapshot["synth"]["test_scenes"] = test_scenes;
  manifest.config_hash = config_hash(snapshot);
  manifest.seed = sc.seed;
  for (const auto& p : outputs) manifest.outputs.push_back(p.string());
  manifest.finished = utc_now();
  manifest.write(args.out / "manifest.json");
  return outputs;
}

fs::path cmd_train(const TrainArgs& args) {
  RunManifest manifest;
  manifest.command = "train";
  manifest.started = utc_now();
  json cfg = read_config(args.config);
  if (args.seed) cfg["seed"] = *args.seed;
  if (args.open_set) cfg["train"]["open_set"] = *args.open_set;
  if (args.mode) cfg["train"]["objective"] = *args.mode;
  const ModelConfig mc = model_config_from_json(cfg);
  const TrainConfig tc = train_config_from_json(cfg);

  fs::path data = args.data;
  if (data.empty() && cfg.contains("data") && cfg.at("data").contains("train")) {
    data = config_relative(args.config, cfg.at("data").at("train").get<std::string>());
  }
  if (data.empty()) throw ValidationError("train needs --data or data.train in the config");
  if (args.out.empty()) throw ValidationError("train needs --out");
  const Dataset dataset = load_dataset(data);
  if (dataset.scenes.empty()) throw ValidationError("training dataset " + data.string() + " has no scenes");

  auto model = Model::create(mc, dataset.relations, dataset.object_classes, tc.seed);
  train::Trainer trainer(*model, tc);
  trainer.fit(dataset, [&](const train::EpochStats& st) {
    if (args.verbose) {
      std::cerr << "epoch " << st.epoch << " lr " << st.lr << " loss " << st.loss << " exist " << st.exist_loss
                << " lm " << st.lm_loss << "\n";
    }
  });
  train::save_checkpoint(args.out, *model, tc, trainer.state());

  manifest.config_hash = config_hash(json{{"model", to_json(mc)}, {"train", to_json(tc)}, {"data", data.string()}});
  manifest.seed = tc.seed;
  manifest.outputs.push_back(args.out.string());
  manifest.finished = utc_now();
  manifest.write(fs::path(args.out.string() + ".manifest.json"));
  return args.out;
}

eval::MetricsReport cmd_eval(const EvalArgs& args) {
  RunManifest manifest;
  manifest.command = "eval";
  manifest.started = utc_now();
  json cfg = read_config(args.config);
  if (args.seed) cfg["seed"] = *args.seed;
  EvalConfig ec = eval_config_from_json(cfg);
  if (ec.segmenter && !(cfg.contains("eval") && cfg.at("eval").at("segmenter").contains("seed"))) {
    ec.segmenter->seed = config_seed(cfg);
  }
  if (args.checkpoint.empty()) throw ValidationError("eval needs --checkpoint");
  if (args.out.empty()) throw ValidationError("eval needs --out");
  fs::path data = args.data;
  if (data.empty() && cfg.contains("data") && cfg.at("data").contains("test")) {
    data = config_relative(args.config, cfg.at("data").at("test").get<std::string>());
  }
  if (data.empty()) throw ValidationError("eval needs --data or data.test in the config");

  auto ck = train::load_checkpoint(args.checkpoint);
  const Dataset dataset = load_dataset(data);
  if (!(dataset.relations == ck.model->relations())) {
    throw ValidationError("dataset relations differ from the checkpoint's relation vocabulary");
  }
  PredictOptions options = default_predict_options(*ck.model);
  apply_inference_overrides(options, cfg, args.theta, args.mode);

  const auto run = eval::run_eval(*ck.model, dataset, ec, options);
  json metrics = run.report.to_json();
  metrics["theta"] = options.theta;
  metrics["mode"] = to_string(options.mode);
  metrics["subtask"] = ec.subtask == Subtask::PredCls ? "predcls" : "sgdet";
  write_text(args.out / "metrics.json", metrics.dump(2) + "\n");
  write_text(args.out / "metrics.txt", run.report.table());
  write_text(args.out / "per_relation.csv", run.report.per_relation_csv());

  json preds = json::array();
  for (const auto& s : run.scenes) {
    json triplets = json::array();
    for (const auto& t : s.ranked) {
      triplets.push_back({{"sub", t.subject_id}, {"obj", t.object_id}, {"rel", t.relation}, {"score", *t.score}});
    }
    preds.push_back({{"scene_id", s.scene_id}, {"triplets", triplets}, {"uncanonical", s.uncanonical}});
  }
  write_text(args.out / "predictions.json", preds.dump() + "\n");
  manifest.outputs = {(args.out / "metrics.json").string(), (args.out / "metrics.txt").string(),
                      (args.out / "per_relation.csv").string(), (args.out / "predictions.json").string()};

  if (args.theta_sweep) {
    const auto thetas = eval::parse_theta_sweep(*args.theta_sweep);
    const auto rows = eval::theta_sweep(*ck.model, dataset, ec, options, thetas);
    write_text(args.out / "theta_sweep.csv", eval::sweep_csv(rows));
    json timing = json::array();
    for (const auto& r : rows) {
      timing.push_back({{"theta", r.theta}, {"ms_per_scene", r.ms_per_scene}, {"pair_keep_ratio", r.pair_keep_ratio}});
    }
    write_text(args.out / "theta_sweep_timing.json", json{{"scenes", dataset.scenes.size()}, {"rows", timing}}.dump(2));
    manifest.outputs.push_back((args.out / "theta_sweep.csv").string());
    manifest.outputs.push_back((args.out / "theta_sweep_timing.json").string());
  }
  if (args.verbose) std::cout << run.report.table();

  manifest.config_hash = config_hash(json{{"eval", to_json(ec)},
                                          {"theta", options.theta},
                                          {"mode", to_string(options.mode)},
                                          {"multiply_existence", options.multiply_existence},
                                          {"checkpoint", args.checkpoint.string()},
                                          {"data", data.string()}});
  manifest.seed = config_seed(cfg);
  manifest.finished = utc_now();
  manifest.write(args.out / "manifest.json");
  return run.report;
}

json scene_graph_json(const SceneRecord& scene, const ScenePrediction& pred, const RelationVocabulary& vocab) {
  json objects = json::array();
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    objects.push_back({{"index", i}, {"id", scene.objects[i].instance_id}, {"category", scene.objects[i].category}});
  }
  std::vector<json> pairs;
  for (const auto& p : pred.pairs) {
    pairs.push_back({{"sub", scene.objects[static_cast<std::size_t>(p.subject_index)].instance_id},
                     {"obj", scene.objects[static_cast<std::size_t>(p.object_index)].instance_id},
                     {"existence", p.existence},
                     {"kept", p.kept},
                     {"truncated", p.truncated},
                     {"relations", json::array()}});
  }
  for (const auto& c : pred.candidates) {
    json item{{"text", c.relation}, {"score", c.score}};
    item["canonical"] = eval::canonicalize_relation(c.relation, vocab).has_value();
    if (c.p_yes > 0.0) item["p_yes"] = c.p_yes;
    pairs[static_cast<std::size_t>(c.pair)]["relations"].push_back(item);
  }
  auto ranked = eval::candidates_to_triplets(pred, scene.objects, vocab, nullptr);
  eval::rank_predictions(ranked);
  json triplets = json::array();
  for (const auto& t : ranked) {
    triplets.push_back({{"sub", t.subject_id}, {"obj", t.object_id}, {"rel", t.relation}, {"score", *t.score}});
  }
  return json{{"scene_id", scene.scene_id}, {"objects", objects}, {"pairs", pairs}, {"triplets", triplets}};
}

json cmd_predict(const PredictArgs& args) {
  RunManifest manifest;
  manifest.command = "predict";
  manifest.started = utc_now();
  if (args.checkpoint.empty() || args.scene.empty() || args.out.empty()) {
    throw ValidationError("predict needs --checkpoint, --scene and --out");
  }
  auto ck = train::load_checkpoint(args.checkpoint);
  const Dataset dataset = load_dataset(args.scene);
  PredictOptions options = default_predict_options(*ck.model);
  apply_inference_overrides(options, json::object(), args.theta, args.mode);

  json scenes = json::array();
  for (const auto& scene : dataset.scenes) {
    const auto pred = predict_scene(*ck.model, scene.image, scene.objects, options);
    auto graph = scene_graph_json(scene, pred, ck.model->relations());
    if (args.overlay) {
      const auto img = args.out / (scene.scene_id + ".ppm");
      write_overlay_ppm(scene, 4, img);
      graph["overlay"] = img.filename().string();
      manifest.outputs.push_back(img.string());
      std::string legend;
      for (const auto& t : graph["triplets"]) {
        if (t["score"].get<double>() <= 0.5 && options.mode == DecodeMode::Judge) continue;
        legend += std::to_string(t["sub"].get<int>()) + " " + t["rel"].get<std::string>() + " " +
                  std::to_string(t["obj"].get<int>()) + "\n";
      }
      write_text(args.out / (scene.scene_id + ".relations.txt"), legend);
      manifest.outputs.push_back((args.out / (scene.scene_id + ".relations.txt")).string());
    }
    scenes.push_back(std::move(graph));
  }
  json result{{"theta", options.theta}, {"mode", to_string(options.mode)}, {"scenes", scenes}};
  write_text(args.out / "scene_graph.json", result.dump(2) + "\n");
  manifest.outputs.insert(manifest.outputs.begin(), (args.out / "scene_graph.json").string());
  manifest.config_hash = config_hash(json{{"theta", options.theta},
                                          {"mode", to_string(options.mode)},
                                          {"checkpoint", args.checkpoint.string()},
                                          {"scene", args.scene.string()}});
  manifest.finished = utc_now();
  manifest.write(args.out / "manifest.json");
  return result;
}

}  // namespace openrel::cli
