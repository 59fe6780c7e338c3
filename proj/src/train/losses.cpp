#include "openrel/train/losses.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "openrel/core/errors.hpp"

namespace openrel::train {

double existence_loss(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw ValidationError("existence_loss: " + std::to_string(scores.size()) + " scores for " +
                          std::to_string(labels.size()) + " labels");
  }
  if (scores.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double p = std::clamp(scores[i], 1e-12, 1.0 - 1e-12);
    total -= labels[i] ? std::log(p) : std::log1p(-p);
  }
  return total / static_cast<double>(scores.size());
}

double lm_loss(const ad::Mat& logits, const std::vector<int>& targets, int pad_id) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size()) {
    throw ValidationError("lm_loss: logits have " + std::to_string(logits.rows()) + " rows for " +
                          std::to_string(targets.size()) + " targets");
  }
  double total = 0.0;
  int count = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    if (t == pad_id) continue;
    if (t < 0 || t >= logits.cols()) throw ValidationError("lm_loss: target id out of range");
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    total += lse - logits(i, t);
    ++count;
  }
  return count == 0 ? 0.0 : total / count;
}

double total_loss(double l_exist, double l_lm, double lambda) { return lambda * l_exist + l_lm; }

std::vector<int> existence_labels(const SceneRecord& scene, const seg::PairSet& pairs,
                                  const std::vector<Triplet>& triplets) {
  std::set<std::pair<int, int>> related;
  for (const auto& t : triplets) related.emplace(scene.index_of(t.subject_id), scene.index_of(t.object_id));
  std::vector<int> labels;
  labels.reserve(pairs.size());
  for (const auto& p : pairs.pairs) labels.push_back(related.count(p) ? 1 : 0);
  return labels;
}

}  // namespace openrel::train
