#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <sstream>

#include "openrel/core/dataset_io.hpp"
#include "openrel/synth/generator.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kWork = fs::temp_directory_path() / "openrel_cli_test";

int cli(const std::string& args) {
  const std::string cmd = std::string(OPENREL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Tiny config shared by the end-to-end cases; `novel` switches on open-set data.
fs::path make_config(const std::string& name, bool novel) {
  json c = {{"seed", 3},
            {"synth", {{"scenes", 16}, {"test_scenes", 4}, {"height", 32}, {"width", 32}, {"min_size", 6.0},
                       {"max_size", 11.0}, {"touch_prob", 0.4}}},
            {"encoder", {{"dim", 8}, {"stride", 4}}},
            {"patchify", {{"p", 2}}},
            {"relq", {{"layers", 1}, {"heads", 2}, {"E", 2}, {"ffn_mult", 2}}},
            {"decoder", {{"layers", 1}, {"heads", 2}, {"max_len", 8}}},
            {"train", {{"lr", 1e-3}, {"lr_drop_epoch", 0}, {"epochs", 1}, {"batch_size", 4}}}};
  if (novel) c["synth"]["novel"] = {"left of and touching", "above and touching"};
  fs::create_directories(kWork);
  const auto path = kWork / name;
  write_text(path, c.dump(2));
  return path;
}

struct Pipeline {
  fs::path dir;
  fs::path checkpoint;
};

Pipeline build(const std::string& name, bool novel, const std::string& train_flags) {
  Pipeline p;
  p.dir = kWork / name;
  fs::remove_all(p.dir);
  const auto cfg = make_config(name + ".json", novel);
  REQUIRE(cli("synth --config " + q(cfg) + " --out " + q(p.dir / "data")) == 0);
  p.checkpoint = p.dir / "model.bin";
  REQUIRE(cli("train --quiet --config " + q(cfg) + " --data " + q(p.dir / "data/train") + " --out " +
              q(p.checkpoint) + " " + train_flags) == 0);
  return p;
}

}  // namespace

TEST_CASE("cli: exit codes") {
  fs::create_directories(kWork);
  CHECK(cli("") == 2);
  CHECK(cli("frobnicate") == 2);
  CHECK(cli("train") == 2);
  CHECK(cli("eval --checkpoint x") == 2);
  CHECK(cli("train --open-set --closed-set --out x") == 2);
  CHECK(cli("synth --config " + q(kWork / "missing.json") + " --out " + q(kWork / "none")) == 2);
  write_text(kWork / "broken.json", "{\"seed\": ");
  CHECK(cli("synth --config " + q(kWork / "broken.json") + " --out " + q(kWork / "none")) == 2);
  write_text(kWork / "bad_synth.json", R"({"synth": {"touch_prob": 2.0}})");
  CHECK(cli("synth --config " + q(kWork / "bad_synth.json") + " --out " + q(kWork / "none")) == 2);
  write_text(kWork / "a_file", "x");
  CHECK(cli("synth --config " + q(make_config("exit.json", false)) + " --out " + q(kWork / "a_file" / "sub")) == 3);
  CHECK(cli("--version") == 0);
  CHECK(cli("--help") == 0);
}

TEST_CASE("cli: synth, train, eval and predict end to end") {
  const auto p = build("closed", false, "--closed-set");
  CHECK(fs::exists(p.dir / "data/train/dataset.json"));
  CHECK(fs::exists(p.dir / "data/test/dataset.json"));
  CHECK(fs::exists(p.dir / "data/manifest.json"));
  CHECK(fs::exists(fs::path(p.checkpoint.string() + ".manifest.json")));
  const auto train = openrel::load_dataset(p.dir / "data/train");
  const auto test = openrel::load_dataset(p.dir / "data/test");
  CHECK(train.scenes.size() == 16);
  CHECK(test.scenes.size() == 4);

  const auto out = p.dir / "eval";
  REQUIRE(cli("eval --checkpoint " + q(p.checkpoint) + " --data " + q(p.dir / "data/test") + " --out " + q(out) +
              " --theta-sweep 0:1:0.05") == 0);
  for (const char* f : {"metrics.json", "metrics.txt", "per_relation.csv", "predictions.json", "theta_sweep.csv",
                        "theta_sweep_timing.json", "manifest.json"}) {
    CHECK_MESSAGE(fs::exists(out / f), f);
  }
  std::istringstream csv(read_text(out / "theta_sweep.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "theta,R@20,mR@20,ms_per_scene,pair_keep_ratio");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 21);
  const auto metrics = json::parse(read_text(out / "metrics.json"));
  CHECK(metrics.contains("splits"));
  const auto manifest = json::parse(read_text(out / "manifest.json"));
  CHECK(manifest["command"] == "eval");
  CHECK(manifest.contains("config_hash"));
  CHECK(manifest.contains("started"));

  CHECK(cli("eval --checkpoint " + q(p.checkpoint) + " --data " + q(p.dir / "data/test") + " --out " +
            q(p.dir / "bad") + " --theta 1.5") == 2);
  CHECK(cli("eval --checkpoint " + q(p.dir / "missing.bin") + " --data " + q(p.dir / "data/test") + " --out " +
            q(p.dir / "bad")) != 0);
}

TEST_CASE("cli: open-set training reports base and novel rows") {
  const auto p = build("open", true, "--open-set");
  const auto out = p.dir / "eval";
  REQUIRE(cli("eval --checkpoint " + q(p.checkpoint) + " --data " + q(p.dir / "data/test") + " --out " + q(out)) == 0);
  const auto metrics = json::parse(read_text(out / "metrics.json"));
  CHECK(metrics["splits"].contains("base"));
  CHECK(metrics["splits"].contains("novel"));
  CHECK(metrics["splits"].contains("overall"));
  const auto ck_manifest = json::parse(read_text(fs::path(p.checkpoint.string() + ".manifest.json")));
  CHECK(ck_manifest["command"] == "train");
}

TEST_CASE("cli: predict on a three-object scene lists at most six pairs") {
  const auto p = build("predict", false, "");
  auto data = openrel::load_dataset(p.dir / "data/test");
  openrel::synth::SynthConfig c;
  c.min_objects = 3;
  c.max_objects = 3;
  c.height = 32;
  c.width = 32;
  c.min_size = 6.0;
  c.max_size = 11.0;
  c.seed = 3;
  auto scene = openrel::synth::generate_scene(c, 0);
  scene.scene_id = "three";
  data.scenes = {scene};
  fs::create_directories(p.dir / "three");
  openrel::save_dataset(data, p.dir / "three/dataset.json");
  const auto out = p.dir / "pred";
  REQUIRE(cli("predict --checkpoint " + q(p.checkpoint) + " --scene " + q(p.dir / "three") + " --out " + q(out)) == 0);
  const auto graph = json::parse(read_text(out / "scene_graph.json"));
  REQUIRE(graph["scenes"].size() == 1);
  CHECK(graph["scenes"][0]["pairs"].size() <= 6);
  CHECK(graph["scenes"][0]["pairs"].size() == 6);
  CHECK(fs::exists(out / "three.ppm"));
  CHECK(read_text(out / "three.ppm").rfind("P6", 0) == 0);
  CHECK(fs::exists(out / "three.relations.txt"));
  CHECK(fs::exists(out / "manifest.json"));
}

TEST_CASE("cli: commands are idempotent apart from the manifest and timings") {
  const auto a = build("idem_a", false, "");
  const auto b = build("idem_b", false, "");
  CHECK(read_text(a.dir / "data/train/dataset.json") == read_text(b.dir / "data/train/dataset.json"));
  CHECK(read_text(a.dir / "data/test/dataset.json") == read_text(b.dir / "data/test/dataset.json"));
  CHECK(read_text(a.checkpoint) == read_text(b.checkpoint));
  for (const auto* d : {&a, &b}) {
    REQUIRE(cli("eval --checkpoint " + q(a.checkpoint) + " --data " + q(a.dir / "data/test") + " --out " +
                q(d->dir / "eval")) == 0);
    REQUIRE(cli("predict --checkpoint " + q(a.checkpoint) + " --scene " + q(a.dir / "data/test") + " --out " +
                q(d->dir / "pred")) == 0);
  }
  for (const auto& sub : {"eval", "pred"}) {
    for (const auto& entry : fs::directory_iterator(a.dir / sub)) {
      const auto name = entry.path().filename();
      if (name == "manifest.json") continue;
      CHECK_MESSAGE(read_text(entry.path()) == read_text(b.dir / sub / name), name.string());
    }
  }
}
