#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "openrel/ad/params.hpp"
#include "openrel/core/types.hpp"
#include "openrel/decoder/relation_decoder.hpp"
#include "openrel/model/config.hpp"
#include "openrel/relq/relq_former.hpp"
#include "openrel/seg/adapter.hpp"
#include "openrel/text/tokenizer.hpp"

namespace openrel {

// Everything needed to run the pipeline: configuration, vocabularies and the
// parameters of the scene encoder, RelQ-Former and decoder.
class Model {
 public:
  Model(ModelConfig config, RelationVocabulary relations, std::vector<std::string> object_classes,
        text::TextVocabulary vocab);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  // Fresh parameters drawn from `seed`.
  static std::unique_ptr<Model> create(const ModelConfig& config, const RelationVocabulary& relations,
                                       const std::vector<std::string>& object_classes, std::uint64_t seed);
  // Word vocabulary over the template banks, class names, relation names and
  // the synthetic rule names.
  static text::TextVocabulary build_vocabulary(const RelationVocabulary& relations,
                                               const std::vector<std::string>& object_classes);

  const ModelConfig& config() const { return config_; }
  ModelConfig& mutable_config() { return config_; }
  const RelationVocabulary& relations() const { return relations_; }
  const std::vector<std::string>& object_classes() const { return object_classes_; }
  const text::TextVocabulary& vocab() const { return vocab_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

  const seg::SceneEncoder& encoder() const { return encoder_; }
  const relq::RelQFormer& relq() const { return relq_; }
  const decoder::RelationDecoder& decoder() const { return decoder_; }

  // Visual tokens and per-layer token memory for one image.
  struct Visual {
    ad::Var tokens;
    int grid_height = 0;
    int grid_width = 0;
    relq::TokenMemory memory;
  };
  Visual encode(ad::Graph& g, const Image& image) const;
  seg::PairSet pairs_for(const std::vector<ObjectInstance>& objects, int grid_height, int grid_width) const;

 private:
  ModelConfig config_;
  RelationVocabulary relations_;
  std::vector<std::string> object_classes_;
  text::TextVocabulary vocab_;
  ad::ParamStore params_;
  seg::SceneEncoder encoder_;
  relq::RelQFormer relq_;
  decoder::RelationDecoder decoder_;
};

seg::EncoderConfig encoder_config(const ModelConfig& c);
relq::RelQConfig relq_config(const ModelConfig& c, int vocab_size);
decoder::DecoderConfig decoder_config(const ModelConfig& c);

// Inference over one scene.
struct PredictOptions {
  double theta = 0.35;
  DecodeMode mode = DecodeMode::Judge;
  bool multiply_existence = false;
  // Judgement probes; empty means base followed by novel relations.
  std::vector<std::string> relations;
};

struct Candidate {
  int pair = 0;  // index into ScenePrediction::pairs
  std::string relation;  // judged name or raw generated text
  double score = 0.0;
  double p_yes = 0.0;    // judgement mode only
};

struct PairOutcome {
  int subject_index = 0;
  int object_index = 0;
  double existence = 0.0;
  bool kept = false;
  bool truncated = false;  // generation hit max_len
};

struct ScenePrediction {
  std::vector<PairOutcome> pairs;
  std::vector<Candidate> candidates;
  std::size_t prefix_builds = 0;
  std::size_t probes = 0;
  double existence_ms = 0.0;
  double decode_ms = 0.0;  // pair features plus decoding of the kept pairs
};

ScenePrediction predict_scene(const Model& model, const Image& image, const std::vector<ObjectInstance>& objects,
                              const PredictOptions& options);

PredictOptions default_predict_options(const Model& model);

}  // namespace openrel
