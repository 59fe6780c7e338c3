#pragma once

#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "openrel/core/types.hpp"

namespace openrel::eval {

// Normalized exact match against base and novel names; nullopt otherwise.
std::optional<std::string> canonicalize_relation(std::string_view text, const RelationVocabulary& vocab);

// Score descending, then (subject_id, object_id, relation) ascending. Throws
// ValidationError if a prediction has no score.
void rank_predictions(std::vector<Triplet>& predictions);

// For each gt triplet, whether it is matched by one of the first k ranked
// predictions; every prediction consumes at most one gt triplet.
std::vector<bool> match_top_k(const std::vector<Triplet>& ranked, const std::vector<Triplet>& gt, int k);

// Single-scene metrics over already-ranked predictions.
double recall_at_k(const std::vector<Triplet>& ranked, const std::vector<Triplet>& gt, int k);
double mean_recall_at_k(const std::vector<Triplet>& ranked, const std::vector<Triplet>& gt, int k);

// Greedy highest-IoU matching between same-category objects with IoU >= threshold.
// Result[i] is the gt index matched to predicted object i, or -1.
std::vector<int> match_objects_sgdet(const std::vector<ObjectInstance>& predicted,
                                     const std::vector<ObjectInstance>& gt, double iou_threshold);
double mask_iou(const BinaryMask& a, const BinaryMask& b);

struct RecallRow {
  int k = 0;
  double recall = 0.0;
  double mean_recall = 0.0;
  std::size_t matched = 0;
  std::size_t total = 0;
};

struct MetricsReport {
  std::vector<int> ks;
  // "overall", "base", "novel"; base/novel only when requested.
  std::map<std::string, std::vector<RecallRow>> splits;
  // relation -> recall at each K (same order as ks)
  std::map<std::string, std::vector<double>> per_relation;
  std::map<std::string, std::size_t> gt_counts;
  std::size_t scenes = 0;
  std::size_t pairs_total = 0;
  std::size_t pairs_kept = 0;
  std::size_t prefix_builds = 0;
  std::size_t probes = 0;
  std::size_t uncanonical_outputs = 0;
  std::size_t emitted_outputs = 0;
  std::size_t truncated_generations = 0;
  double mean_decode_ms = 0.0;
  double mean_existence_ms = 0.0;

  const RecallRow& row(const std::string& split, int k) const;
  nlohmann::json to_json() const;
  std::string table() const;
  std::string per_relation_csv() const;
};

// Accumulates ranked predictions scene by scene. Recall is micro-averaged
// (total matched over total gt); mean recall averages per-relation recalls
// over the relations present in gt.
class RecallAccumulator {
 public:
  RecallAccumulator(std::vector<int> ks, const RelationVocabulary& vocab, bool split_report);
  void add_scene(const std::vector<Triplet>& ranked, const std::vector<Triplet>& gt);
  void finish(MetricsReport& report) const;

 private:
  struct Counts {
    std::vector<std::size_t> matched;
    std::size_t total = 0;
  };
  std::vector<int> ks_;
  const RelationVocabulary* vocab_;
  bool split_report_;
  std::map<std::string, Counts> by_relation_;
};

}  // namespace openrel::eval
