#pragma once

// Stand-in for the frozen open-set segmenter: a small convolutional scene
// encoder producing the whole-image feature grid, the patchify projection that
// turns it into visual tokens, nearest-neighbour mask downsampling, and the
// pairwise module enumerating ordered subject-object pairs.

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "openrel/ad/autograd.hpp"
#include "openrel/ad/params.hpp"
#include "openrel/core/types.hpp"

namespace openrel::seg {

struct FeatureGrid {
  int height = 0;
  int width = 0;
  int dim = 0;
  ad::Mat values;  // (height*width) x dim, row-major spatial
};

struct TokenSequence {
  int grid_height = 0;  // h / p
  int grid_width = 0;   // w / p
  ad::Mat tokens;       // L x D
  int length() const { return grid_height * grid_width; }
};

using MaskRow = std::vector<std::uint8_t>;

struct MaskSequence {
  int grid_height = 0;
  int grid_width = 0;
  std::vector<MaskRow> rows;  // one per object, length L
};

struct PairSet {
  std::vector<std::pair<int, int>> pairs;  // (subject index, object index)
  std::vector<std::pair<std::string, std::string>> categories;
  std::vector<MaskRow> masks;
  std::size_t size() const { return pairs.size(); }
};

struct EncoderConfig {
  int dim = 64;
  int stride = 4;
  int patch = 8;
};

// Convolutional stack: log2(stride) stride-2 3x3 stages (a single stride-1
// stage when stride == 1), GELU after each; then the p x p patchify
// projection. Parameters live under "encoder.".
class SceneEncoder {
 public:
  SceneEncoder(EncoderConfig cfg, ad::ParamStore& store);
  static void init_params(ad::ParamStore& store, const EncoderConfig& cfg, std::mt19937_64& rng);

  // Throws ValidationError naming the padding needed when H or W is not a
  // multiple of the stride.
  void check_image(int height, int width) const;
  // (h*w) x D feature grid.
  ad::Var encode(ad::Graph& g, const Image& image) const;
  // L x D tokens; throws ValidationError when the grid is not divisible by p.
  ad::Var patchify(ad::Graph& g, ad::Var grid, int grid_height, int grid_width) const;

  FeatureGrid encode_scene(const SceneRecord& record) const;
  TokenSequence tokens(const Image& image) const;

  const EncoderConfig& config() const { return cfg_; }
  int stages() const;

 private:
  EncoderConfig cfg_;
  ad::ParamStore* store_;
};

// Kernel = stride = p linear projection of non-overlapping patches.
TokenSequence patchify(const FeatureGrid& grid, int p, const ad::Mat& weight, const ad::Mat& bias);

// Nearest-neighbour sampling of each mask onto a target grid, flattened
// row-major. The sample for a target cell is the source pixel whose centre is
// nearest to the cell centre, ties toward the smaller index. A non-empty mask
// that samples to all zeros gets the single cell with the largest overlap
// fraction set.
MaskSequence downsample_masks(const std::vector<ObjectInstance>& objects, int target_height, int target_width);

// Source row (or column) index sampled for target cell t on an axis of the
// given sizes.
int nearest_source_index(int t, int source_size, int target_size);

// All ordered (i, j), i != j, lexicographic; pair masks are the OR of rows.
PairSet make_pairs(const std::vector<ObjectInstance>& objects, const MaskSequence& masks);

// 2-D sine positional encoding, (gh*gw) x dim: first half encodes rows, second
// half columns.
ad::Mat sine_position_2d(int grid_height, int grid_width, int dim);
// 1-D sine positional encoding for positions [start, start + count).
ad::Mat sine_position_1d(int start, int count, int dim);

// Corrupted-oracle segmenter used for SGDet: each ground-truth object may be
// dilated or eroded by one 8-neighbourhood step and have its category replaced
// by another class with probability category_flip_prob.
std::vector<ObjectInstance> corrupt_objects(const std::vector<ObjectInstance>& objects,
                                            const std::vector<std::string>& classes, double category_flip_prob,
                                            double jitter_prob, std::mt19937_64& rng);

BinaryMask dilate(const BinaryMask& mask);
BinaryMask erode(const BinaryMask& mask);

}  // namespace openrel::seg
