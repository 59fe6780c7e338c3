#include "openrel/model/config.hpp"

#include <algorithm>
#include <cstdio>

#include "openrel/core/errors.hpp"

namespace openrel {

using nlohmann::json;

std::string to_string(DecodeMode mode) { return mode == DecodeMode::Generate ? "generate" : "judge"; }

DecodeMode parse_decode_mode(const std::string& text) {
  if (text == "generate") return DecodeMode::Generate;
  if (text == "judge") return DecodeMode::Judge;
  throw ValidationError("decoder.mode must be 'generate' or 'judge', got '" + text + "'");
}

namespace {

template <typename T>
void read(const json& root, const char* section, const char* key, T& out) {
  if (!root.is_object() || !root.contains(section)) return;
  const auto& s = root.at(section);
  if (!s.is_object() || !s.contains(key)) return;
  try {
    out = s.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string("config: ") + section + "." + key + " has the wrong type");
  }
}

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

void ModelConfig::validate() const {
  if (dim <= 0) throw ValidationError("encoder.dim must be positive");
  if (!is_power_of_two(encoder_stride)) throw ValidationError("encoder.stride must be a power of two");
  if (patch <= 0) throw ValidationError("patchify.p must be positive");
  if (relq_layers < 1) throw ValidationError("relq.layers must be >= 1");
  if (queries < 1) throw ValidationError("relq.E must be >= 1");
  if (relq_heads <= 0 || dim % relq_heads != 0) throw ValidationError("relq.heads must divide encoder.dim");
  if (decoder_layers < 1) throw ValidationError("decoder.layers must be >= 1");
  if (decoder_heads <= 0 || dim % decoder_heads != 0) throw ValidationError("decoder.heads must divide encoder.dim");
  if (dim % 4 != 0) throw ValidationError("encoder.dim must be a multiple of 4 for positional encodings");
  if (!(theta >= 0.0 && theta <= 1.0)) throw ValidationError("selector.theta must lie in [0,1]");
  if (max_len < 1) throw ValidationError("decoder.max_len must be >= 1");
  if (beam < 1) throw ValidationError("decoder.beam must be >= 1");
  if (ffn_mult < 1) throw ValidationError("ffn multiplier must be >= 1");
}

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw ValidationError("train.lambda must be >= 0");
  if (!(lr > 0.0)) throw ValidationError("train.lr must be > 0");
  if (epochs < 1) throw ValidationError("train.epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("train.batch_size must be >= 1");
  if (negative_pair_ratio < 0.0) throw ValidationError("train.negative_pair_ratio must be >= 0");
  for (const auto& m : freeze) {
    if (m != "encoder" && m != "decoder") {
      throw ValidationError("train.freeze references unknown module '" + m + "' (allowed: encoder, decoder)");
    }
  }
}

void EvalConfig::validate() const {
  if (ks.empty()) throw ValidationError("eval.ks must not be empty");
  if (!std::is_sorted(ks.begin(), ks.end()) || ks.front() <= 0) {
    throw ValidationError("eval.ks must be ascending and positive");
  }
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) throw ValidationError("eval.iou_threshold must lie in [0,1]");
  if (max_predictions_per_scene < 1) throw ValidationError("eval.max_predictions_per_scene must be >= 1");
}

ModelConfig model_config_from_json(const json& root) {
  ModelConfig c;
  read(root, "encoder", "dim", c.dim);
  read(root, "encoder", "stride", c.encoder_stride);
  read(root, "patchify", "p", c.patch);
  read(root, "relq", "layers", c.relq_layers);
  read(root, "relq", "heads", c.relq_heads);
  read(root, "relq", "E", c.queries);
  read(root, "relq", "share_exist_trunk", c.share_exist_trunk);
  read(root, "relq", "ffn_mult", c.ffn_mult);
  read(root, "selector", "theta", c.theta);
  read(root, "decoder", "layers", c.decoder_layers);
  read(root, "decoder", "heads", c.decoder_heads);
  read(root, "decoder", "max_len", c.max_len);
  read(root, "decoder", "beam", c.beam);
  std::string mode = to_string(c.mode);
  read(root, "decoder", "mode", mode);
  c.mode = parse_decode_mode(mode);
  read(root, "scoring", "multiply_existence", c.multiply_existence);
  c.validate();
  return c;
}

TrainConfig train_config_from_json(const json& root) {
  TrainConfig c;
  read(root, "train", "lambda", c.lambda);
  read(root, "train", "lr", c.lr);
  read(root, "train", "lr_drop_epoch", c.lr_drop_epoch);
  read(root, "train", "epochs", c.epochs);
  read(root, "train", "weight_decay", c.weight_decay);
  std::vector<std::string> freeze;
  read(root, "train", "freeze", freeze);
  c.freeze = {freeze.begin(), freeze.end()};
  read(root, "train", "negative_pair_ratio", c.negative_pair_ratio);
  read(root, "train", "batch_size", c.batch_size);
  read(root, "train", "open_set", c.open_set);
  read(root, "train", "clip_norm", c.clip_norm);
  std::string objective = "judge";
  read(root, "train", "objective", objective);
  if (objective == "judge") {
    c.objective = TrainObjective::Judge;
  } else if (objective == "generate") {
    c.objective = TrainObjective::Generate;
  } else if (objective == "both") {
    c.objective = TrainObjective::Both;
  } else {
    throw ValidationError("train.objective must be judge, generate or both");
  }
  if (root.is_object() && root.contains("seed")) c.seed = root.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

EvalConfig eval_config_from_json(const json& root) {
  EvalConfig c;
  read(root, "eval", "ks", c.ks);
  std::string subtask = "predcls";
  read(root, "eval", "subtask", subtask);
  if (subtask == "predcls") {
    c.subtask = Subtask::PredCls;
  } else if (subtask == "sgdet") {
    c.subtask = Subtask::SGDet;
  } else {
    throw ValidationError("eval.subtask must be predcls or sgdet");
  }
  read(root, "eval", "iou_threshold", c.iou_threshold);
  read(root, "eval", "split_report", c.split_report);
  read(root, "eval", "max_predictions_per_scene", c.max_predictions_per_scene);
  if (root.is_object() && root.contains("eval") && root.at("eval").contains("segmenter")) {
    const auto& s = root.at("eval").at("segmenter");
    SegmenterSource src;
    src.category_flip_prob = s.value("category_flip_prob", src.category_flip_prob);
    src.jitter_prob = s.value("jitter_prob", src.jitter_prob);
    src.seed = s.value("seed", src.seed);
    c.segmenter = src;
  }
  c.validate();
  return c;
}

json to_json(const ModelConfig& c) {
  return json{{"encoder", {{"dim", c.dim}, {"stride", c.encoder_stride}}},
              {"patchify", {{"p", c.patch}}},
              {"relq",
               {{"layers", c.relq_layers},
                {"heads", c.relq_heads},
                {"E", c.queries},
                {"share_exist_trunk", c.share_exist_trunk},
                {"ffn_mult", c.ffn_mult}}},
              {"selector", {{"theta", c.theta}}},
              {"decoder",
               {{"layers", c.decoder_layers},
                {"heads", c.decoder_heads},
                {"max_len", c.max_len},
                {"beam", c.beam},
                {"mode", to_string(c.mode)}}},
              {"scoring", {{"multiply_existence", c.multiply_existence}}}};
}

json to_json(const TrainConfig& c) {
  const char* objective = c.objective == TrainObjective::Judge      ? "judge"
                          : c.objective == TrainObjective::Generate ? "generate"
                                                                    : "both";
  return json{{"train",
               {{"lambda", c.lambda},
                {"lr", c.lr},
                {"lr_drop_epoch", c.lr_drop_epoch},
                {"epochs", c.epochs},
                {"weight_decay", c.weight_decay},
                {"freeze", std::vector<std::string>(c.freeze.begin(), c.freeze.end())},
                {"negative_pair_ratio", c.negative_pair_ratio},
                {"batch_size", c.batch_size},
                {"open_set", c.open_set},
                {"clip_norm", c.clip_norm},
                {"objective", objective}}},
              {"seed", c.seed}};
}

json to_json(const EvalConfig& c) {
  json e{{"ks", c.ks},
         {"subtask", c.subtask == Subtask::PredCls ? "predcls" : "sgdet"},
         {"iou_threshold", c.iou_threshold},
         {"split_report", c.split_report},
         {"max_predictions_per_scene", c.max_predictions_per_scene}};
  if (c.segmenter) {
    e["segmenter"] = {{"category_flip_prob", c.segmenter->category_flip_prob},
                      {"jitter_prob", c.segmenter->jitter_prob},
                      {"seed", c.segmenter->seed}};
  }
  return json{{"eval", e}};
}

std::string config_hash(const json& config) {
  const std::string text = config.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace openrel
