#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace openrel {

enum class DecodeMode { Generate, Judge };

std::string to_string(DecodeMode mode);
DecodeMode parse_decode_mode(const std::string& text);

// Architecture and inference knobs. Defaults follow the published settings
// (E = 32, p = 8, theta = 0.35, two RelQ-Former layers); desk-scale runs
// override them from a config file.
struct ModelConfig {
  int dim = 64;             // encoder.dim, shared by every module
  int encoder_stride = 4;   // encoder.stride, power of two
  int patch = 8;            // patchify.p
  int relq_layers = 2;      // relq.layers
  int relq_heads = 4;       // relq.heads
  int queries = 32;         // relq.E
  bool share_exist_trunk = true;  // relq.share_exist_trunk
  int ffn_mult = 4;
  double theta = 0.35;      // selector.theta
  int decoder_layers = 2;   // decoder.layers
  int decoder_heads = 4;    // decoder.heads
  int max_len = 16;         // decoder.max_len (generated tokens)
  int beam = 1;             // decoder.beam
  DecodeMode mode = DecodeMode::Judge;  // decoder.mode
  bool multiply_existence = false;      // scoring.multiply_existence

  void validate() const;
};

enum class TrainObjective { Judge, Generate, Both };

struct TrainConfig {
  double lambda = 10.0;
  double lr = 1e-4;
  int lr_drop_epoch = 8;  // 1-based epoch at which lr is multiplied by 0.1; 0 disables
  int epochs = 12;
  double weight_decay = 5e-2;
  std::set<std::string> freeze;  // subset of {encoder, decoder}
  double negative_pair_ratio = 3.0;
  std::uint64_t seed = 0;
  int batch_size = 8;
  bool open_set = false;
  double clip_norm = 1.0;
  TrainObjective objective = TrainObjective::Judge;

  void validate() const;
};

enum class Subtask { PredCls, SGDet };

struct SegmenterSource {
  double category_flip_prob = 0.1;  // epsilon
  double jitter_prob = 0.5;         // chance of one dilation or erosion step
  std::uint64_t seed = 0;
};

struct EvalConfig {
  std::vector<int> ks = {20, 50, 100};
  Subtask subtask = Subtask::PredCls;
  double iou_threshold = 0.5;
  bool split_report = true;
  int max_predictions_per_scene = 300;
  std::optional<SegmenterSource> segmenter;  // required for sgdet

  void validate() const;
};

ModelConfig model_config_from_json(const nlohmann::json& root);
TrainConfig train_config_from_json(const nlohmann::json& root);
EvalConfig eval_config_from_json(const nlohmann::json& root);
nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const EvalConfig& c);

// 64-bit FNV-1a over the canonical (sorted-key, compact) JSON dump.
std::string config_hash(const nlohmann::json& config);

}  // namespace openrel
