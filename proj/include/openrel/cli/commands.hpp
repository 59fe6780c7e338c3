#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "openrel/core/types.hpp"
#include "openrel/eval/metrics.hpp"
#include "openrel/model/model.hpp"

namespace openrel::cli {

inline constexpr const char* kVersion = "0.1.0";

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version = kVersion;
  std::string started;
  std::string finished;
  std::vector<std::string> outputs;

  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;
};

// UTC ISO-8601 timestamp.
std::string utc_now();

// Reads a JSON config file; an empty path gives an empty object.
nlohmann::json read_config(const std::filesystem::path& path);

struct SynthArgs {
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
};
// Writes <out>/train/dataset.json, and <out>/test/dataset.json when
// synth.test_scenes > 0, plus <out>/manifest.json.
std::vector<std::filesystem::path> cmd_synth(const SynthArgs& args);

struct TrainArgs {
  std::filesystem::path config;
  std::filesystem::path data;  // overrides data.train from the config
  std::filesystem::path out;   // checkpoint path
  std::optional<std::uint64_t> seed;
  std::optional<bool> open_set;
  std::optional<std::string> mode;  // training objective: judge, generate or both
  bool verbose = true;
};
std::filesystem::path cmd_train(const TrainArgs& args);

struct EvalArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<double> theta;
  std::optional<std::string> theta_sweep;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  bool verbose = true;
};
eval::MetricsReport cmd_eval(const EvalArgs& args);

struct PredictArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path scene;  // openrel-v1 dataset file or directory
  std::filesystem::path out;
  std::optional<double> theta;
  std::optional<std::string> mode;
  bool overlay = true;
};
nlohmann::json cmd_predict(const PredictArgs& args);

// Scene graph JSON for one scene: every ordered pair with its existence score
// and relations, plus the ranked triplet list.
nlohmann::json scene_graph_json(const SceneRecord& scene, const ScenePrediction& pred,
                                const RelationVocabulary& vocab);

// Binary PPM of the image scaled by `scale`, with mask outlines and object
// indices drawn in per-object colors.
void write_overlay_ppm(const SceneRecord& scene, int scale, const std::filesystem::path& path);

// Parses arguments and dispatches; returns the process exit code
// (0 success, 2 validation error, 3 other failure).
int run(int argc, char** argv);

}  // namespace openrel::cli
