#pragma once

#include <string>
#include <vector>

#include "openrel/core/dataset_io.hpp"
#include "openrel/eval/metrics.hpp"
#include "openrel/model/config.hpp"
#include "openrel/model/model.hpp"

namespace openrel::eval {

struct SceneLog {
  std::string scene_id;
  std::vector<Triplet> ranked;  // canonical, scored, capped, in rank order
  std::vector<std::string> uncanonical;  // generated strings outside the vocabulary
  std::size_t pairs = 0;
  std::size_t kept = 0;
  double decode_ms = 0.0;
  double existence_ms = 0.0;
};

struct EvalRun {
  MetricsReport report;
  std::vector<SceneLog> scenes;
};

// Turns raw scene candidates into scored triplets over instance ids of
// `objects`. Generated strings that fail canonicalization are appended to
// `uncanonical`; duplicates of one (pair, relation) keep the best score.
std::vector<Triplet> candidates_to_triplets(const ScenePrediction& pred, const std::vector<ObjectInstance>& objects,
                                            const RelationVocabulary& vocab, std::vector<std::string>* uncanonical);

// Ranks, caps and re-expresses SGDet predictions in ground-truth ids. Predicted
// objects without a match receive ids that cannot collide with ground truth.
std::vector<Triplet> map_sgdet_triplets(const std::vector<Triplet>& triplets,
                                        const std::vector<ObjectInstance>& predicted,
                                        const std::vector<ObjectInstance>& gt, double iou_threshold);

EvalRun run_eval(const Model& model, const Dataset& dataset, const EvalConfig& config, const PredictOptions& options);

struct SweepRow {
  double theta = 0.0;
  double recall20 = 0.0;
  double mean_recall20 = 0.0;
  double ms_per_scene = 0.0;
  double pair_keep_ratio = 0.0;
};

// Thetas a, a+step, ..., b (inclusive up to rounding).
std::vector<double> parse_theta_sweep(const std::string& spec);
std::vector<SweepRow> theta_sweep(const Model& model, const Dataset& dataset, const EvalConfig& config,
                                  const PredictOptions& options, const std::vector<double>& thetas);
std::string sweep_csv(const std::vector<SweepRow>& rows);

// Mann-Whitney AUC; ties count one half. Throws if either side is empty.
double ranking_auc(const std::vector<double>& positives, const std::vector<double>& negatives);

struct NovelAucResult {
  double auc = 0.0;
  std::vector<double> positives;
  std::vector<double> negatives;
};

// Judges every novel relation on every pair. A pair satisfying a novel relation
// is a positive for it; pairs of the same scene that do not satisfy it are the
// negatives.
NovelAucResult novel_relation_auc(const Model& model, const Dataset& dataset);

// Expected R@K of a uniformly random ranking over all N(N-1)|R| candidates of
// each scene, micro-averaged over the ground truth.
double random_ranking_recall(const Dataset& dataset, std::size_t relation_count, int k);

}  // namespace openrel::eval
