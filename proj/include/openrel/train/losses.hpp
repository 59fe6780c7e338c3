#pragma once

#include <vector>

#include "openrel/ad/autograd.hpp"
#include "openrel/core/types.hpp"
#include "openrel/seg/adapter.hpp"

namespace openrel::train {

// Mean binary cross-entropy of probabilities against {0,1} labels.
// Probabilities are clamped to [1e-12, 1 - 1e-12].
double existence_loss(const std::vector<double>& scores, const std::vector<int>& labels);

// Mean token cross-entropy over rows whose target is not `pad_id`.
double lm_loss(const ad::Mat& logits, const std::vector<int>& targets, int pad_id);

double total_loss(double l_exist, double l_lm, double lambda);

// 1 for every ordered pair with at least one triplet in `triplets`.
std::vector<int> existence_labels(const SceneRecord& scene, const seg::PairSet& pairs,
                                  const std::vector<Triplet>& triplets);

}  // namespace openrel::train
