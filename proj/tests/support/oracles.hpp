#pragma once

// Independent reference computations used by the unit tests and the
// acceptance runner. They favor obviously-correct loops over speed.

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "openrel/ad/params.hpp"
#include "openrel/core/dataset_io.hpp"
#include "openrel/core/types.hpp"
#include "openrel/model/model.hpp"
#include "openrel/seg/adapter.hpp"
#include "openrel/synth/generator.hpp"

namespace openrel::oracle {

// Nearest source pixel to every target cell center by exhaustive search over
// all source pixels; ties go to the smaller row, then the smaller column.
std::vector<std::uint8_t> downsample_brute_force(const BinaryMask& mask, int target_height, int target_width);

// Pair list and OR rows by plain nested loops.
struct PairOracle {
  std::vector<std::pair<int, int>> pairs;
  std::vector<std::vector<std::uint8_t>> rows;
};
PairOracle pairs_brute_force(const std::vector<std::vector<std::uint8_t>>& mask_rows);

// Maximum number of gt triplets matchable by the first k predictions when each
// prediction may claim at most one identical gt triplet, by exhaustive
// search over assignments. Per-relation counts of the best assignment go to
// `per_relation` (relation -> matched).
int exhaustive_matches(const std::vector<Triplet>& ranked, const std::vector<Triplet>& gt, int k,
                       std::map<std::string, int>* per_relation);
double exhaustive_recall(const std::vector<Triplet>& ranked, const std::vector<Triplet>& gt, int k);
double exhaustive_mean_recall(const std::vector<Triplet>& ranked, const std::vector<Triplet>& gt, int k);

// Best partial injective assignment between predicted and gt objects that
// respects category and the IoU threshold, maximizing the number of matches
// and then the IoU sum.
struct Assignment {
  int matches = 0;
  double iou_sum = 0.0;
  std::vector<int> mapping;
  int optimal_count = 0;  // assignments that tie with the best
};
Assignment exhaustive_assignment(const std::vector<ObjectInstance>& predicted, const std::vector<ObjectInstance>& gt,
                                 double iou_threshold);

// Relation predicates written directly over pixels.
bool predicate(const std::string& relation, const synth::Entity& a, const synth::Entity& b,
               const synth::RuleParams& params);
std::vector<Triplet> label_brute_force(const SceneRecord& scene, const std::vector<std::string>& relations,
                                       const synth::RuleParams& params);

double bce_loop(const std::vector<double>& logits, const std::vector<double>& labels);
double ce_loop(const ad::Mat& logits, const std::vector<int>& targets, int ignore_index);

// Central finite differences of `loss` against every entry of the selected
// parameters, compared with the analytic gradient left in Parameter::grad
// by `backward`. Returns the worst relative error
// |a - n| / max(|a| + |n|, floor).
struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};
GradCheck finite_difference_check(ad::ParamStore& store, const std::vector<std::string>& names,
                                  const std::function<double()>& loss, const std::function<void()>& backward,
                                  double step = 1e-5, std::size_t max_entries_per_param = 0,
                                  std::uint64_t seed = 0, double floor = 1e-6);

// Tiny model for fast checks.
ModelConfig tiny_model_config();
std::unique_ptr<Model> tiny_model(const RelationVocabulary& relations, const std::vector<std::string>& classes,
                                  std::uint64_t seed, const ModelConfig& cfg = tiny_model_config());

// Random scene with n objects of random rectangular masks (may be empty of
// triplets); categories drawn from `classes`.
SceneRecord random_scene(int n, int height, int width, const std::vector<std::string>& classes,
                         std::mt19937_64& rng);

// Synthetic dataset produced by the generator with a small default config.
Dataset small_synth_dataset(int scenes, std::uint64_t seed, const std::vector<std::string>& novel = {});

}  // namespace openrel::oracle
