#pragma once

#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "openrel/ad/params.hpp"
#include "openrel/core/dataset_io.hpp"
#include "openrel/model/config.hpp"
#include "openrel/model/model.hpp"

namespace openrel::train {

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;        // mean total loss over scenes
  double exist_loss = 0.0;
  double lm_loss = 0.0;
  int steps = 0;
  // Distinct relation names used as positive targets during the epoch.
  std::vector<std::string> positive_relations;
};

struct SceneLoss {
  double total = 0.0;
  double exist = 0.0;
  double lm = 0.0;
  int pairs = 0;
  int probes = 0;
};

// Mutable optimization state; everything a checkpoint needs besides the model.
struct TrainState {
  ad::AdamW optimizer;
  int epoch = 0;  // completed epochs
  std::vector<EpochStats> history;
  std::mt19937_64 rng;
};

std::string rng_to_string(const std::mt19937_64& rng);
std::mt19937_64 rng_from_string(const std::string& text);

// Relations the decoder may see as targets: base only in open-set mode.
std::vector<std::string> supervised_relations(const RelationVocabulary& vocab, bool open_set);
// Ground-truth triplets restricted to `relations`.
std::vector<Triplet> supervised_triplets(const SceneRecord& scene, const std::vector<std::string>& relations);

double learning_rate(const TrainConfig& cfg, int epoch);

class Trainer {
 public:
  Trainer(Model& model, TrainConfig config);
  Trainer(Model& model, TrainConfig config, TrainState state);

  // Forward and backward for one scene; gradients accumulate into the model
  // parameters. `positives` collects the relation names used as positive
  // decoder targets.
  SceneLoss accumulate_scene(const SceneRecord& scene, std::set<std::string>* positives = nullptr);
  // Averages accumulated gradients over `scenes`, clips and applies AdamW.
  void apply_step(int scenes, double lr);

  EpochStats train_epoch(const Dataset& dataset);
  // Runs the remaining epochs; `on_epoch` is called after each.
  void fit(const Dataset& dataset, const std::function<void(const EpochStats&)>& on_epoch = {});

  const TrainConfig& config() const { return config_; }
  TrainState& state() { return state_; }
  const TrainState& state() const { return state_; }

 private:
  Model* model_;
  TrainConfig config_;
  TrainState state_;
  std::vector<std::string> relations_;
};

}  // namespace openrel::train
