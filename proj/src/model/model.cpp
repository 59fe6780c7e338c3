#include "openrel/model/model.hpp"

#include <chrono>

#include "openrel/core/errors.hpp"
#include "openrel/synth/generator.hpp"
#include "openrel/text/templates.hpp"

namespace openrel {

seg::EncoderConfig encoder_config(const ModelConfig& c) { return {c.dim, c.encoder_stride, c.patch}; }

relq::RelQConfig relq_config(const ModelConfig& c, int vocab_size) {
  relq::RelQConfig r;
  r.dim = c.dim;
  r.heads = c.relq_heads;
  r.layers = c.relq_layers;
  r.queries = c.queries;
  r.share_exist_trunk = c.share_exist_trunk;
  r.ffn_mult = c.ffn_mult;
  r.vocab_size = vocab_size;
  return r;
}

decoder::DecoderConfig decoder_config(const ModelConfig& c) {
  decoder::DecoderConfig d;
  d.dim = c.dim;
  d.heads = c.decoder_heads;
  d.layers = c.decoder_layers;
  d.max_len = c.max_len;
  d.beam = c.beam;
  d.ffn_mult = c.ffn_mult;
  return d;
}

Model::Model(ModelConfig config, RelationVocabulary relations, std::vector<std::string> object_classes,
             text::TextVocabulary vocab)
    : config_(config),
      relations_(std::move(relations)),
      object_classes_(std::move(object_classes)),
      vocab_(std::move(vocab)),
      encoder_(encoder_config(config_), params_),
      relq_(relq_config(config_, vocab_.size()), params_),
      decoder_(decoder_config(config_), params_, vocab_) {
  config_.validate();
}

text::TextVocabulary Model::build_vocabulary(const RelationVocabulary& relations,
                                             const std::vector<std::string>& object_classes) {
  std::vector<std::string> corpus = text::all_template_words();
  corpus.insert(corpus.end(), object_classes.begin(), object_classes.end());
  for (const auto& r : relations.all()) corpus.push_back(r);
  for (const auto& r : synth::registry_names()) corpus.push_back(r);
  return text::TextVocabulary::build(corpus);
}

std::unique_ptr<Model> Model::create(const ModelConfig& config, const RelationVocabulary& relations,
                                     const std::vector<std::string>& object_classes, std::uint64_t seed) {
  auto model = std::make_unique<Model>(config, relations, object_classes, build_vocabulary(relations, object_classes));
  std::mt19937_64 rng(seed);
  seg::SceneEncoder::init_params(model->params_, encoder_config(config), rng);
  relq::RelQFormer::init_params(model->params_, relq_config(config, model->vocab_.size()), rng);
  decoder::RelationDecoder::init_params(model->params_, decoder_config(config), model->vocab_.size(), rng);
  return model;
}

Model::Visual Model::encode(ad::Graph& g, const Image& image) const {
  Visual v;
  const int gh = image.height / config_.encoder_stride;
  const int gw = image.width / config_.encoder_stride;
  v.tokens = encoder_.patchify(g, encoder_.encode(g, image), gh, gw);
  v.grid_height = gh / config_.patch;
  v.grid_width = gw / config_.patch;
  v.memory = relq_.prepare_tokens(g, v.tokens, v.grid_height, v.grid_width);
  return v;
}

seg::PairSet Model::pairs_for(const std::vector<ObjectInstance>& objects, int grid_height, int grid_width) const {
  return seg::make_pairs(objects, seg::downsample_masks(objects, grid_height, grid_width));
}

PredictOptions default_predict_options(const Model& model) {
  PredictOptions o;
  o.theta = model.config().theta;
  o.mode = model.config().mode;
  o.multiply_existence = model.config().multiply_existence;
  return o;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

ScenePrediction predict_scene(const Model& model, const Image& image, const std::vector<ObjectInstance>& objects,
                              const PredictOptions& options) {
  ScenePrediction out;
  if (objects.size() < 2) return out;
  std::mt19937_64 unused(0);
  const auto& vocab = model.vocab();

  const auto t0 = Clock::now();
  ad::Graph g(false);
  const auto visual = model.encode(g, image);
  const auto pairs = model.pairs_for(objects, visual.grid_height, visual.grid_width);
  std::vector<std::vector<int>> exist_inst;
  for (const auto& [s, o] : pairs.categories) {
    exist_inst.push_back(
        relq::instruction_ids(vocab, text::BankKind::RelationExistence, s, o, text::Mode::Infer, unused));
  }
  const ad::Mat logits = model.relq().existence_logits(g, visual.memory, exist_inst, pairs.masks).value();
  std::vector<double> scores;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    scores.push_back(relq::sigmoid(logits(static_cast<Eigen::Index>(p), 0)));
    out.pairs.push_back({pairs.pairs[p].first, pairs.pairs[p].second, scores.back(), false, false});
  }
  const auto keep = relq::selected_indices(scores, options.theta);
  for (auto k : keep) out.pairs[k].kept = true;
  out.existence_ms = ms_since(t0);

  const auto t1 = Clock::now();
  if (!keep.empty()) {
    std::vector<std::vector<int>> feat_inst;
    std::vector<seg::MaskRow> masks;
    for (auto k : keep) {
      const auto& [s, o] = pairs.categories[k];
      feat_inst.push_back(relq::instruction_ids(vocab, text::BankKind::PairFeature, s, o, text::Mode::Infer, unused));
      masks.push_back(pairs.masks[k]);
    }
    const ad::Mat feats = model.relq().extract_pair_features(g, visual.memory, feat_inst, masks).value();
    const int e = model.config().queries;
    const auto& dec = model.decoder();
    auto fuse = [&](double s, std::size_t k) { return options.multiply_existence ? s * scores[k] : s; };

    if (options.mode == DecodeMode::Judge) {
      std::vector<std::string> rels = options.relations.empty() ? model.relations().all() : options.relations;
      std::vector<decoder::PrefixCache> caches;
      caches.reserve(keep.size());
      for (std::size_t i = 0; i < keep.size(); ++i) {
        const auto& [s, o] = pairs.categories[keep[i]];
        caches.push_back(dec.build_prefix(feats.middleRows(static_cast<Eigen::Index>(i) * e, e), s, o));
        caches.back().pair_index = pairs.pairs[keep[i]];
        ++out.prefix_builds;
      }
      std::vector<const decoder::PrefixCache*> ptrs;
      for (const auto& c : caches) ptrs.push_back(&c);
      const auto results = dec.judge_relations(ptrs, rels);
      out.probes += results.size();
      for (std::size_t i = 0; i < keep.size(); ++i) {
        for (std::size_t r = 0; r < rels.size(); ++r) {
          const auto& jr = results[i * rels.size() + r];
          out.candidates.push_back({static_cast<int>(keep[i]), rels[r], fuse(jr.p_yes, keep[i]), jr.p_yes});
        }
      }
    } else {
      for (std::size_t i = 0; i < keep.size(); ++i) {
        const auto& [s, o] = pairs.categories[keep[i]];
        const auto gen = dec.decode_generate(feats.middleRows(static_cast<Eigen::Index>(i) * e, e), s, o);
        out.pairs[keep[i]].truncated = gen.truncated;
        for (const auto& rel : gen.relations) {
          const double score = options.multiply_existence ? std::exp(rel.score) * scores[keep[i]] : rel.score;
          out.candidates.push_back({static_cast<int>(keep[i]), rel.text, score, 0.0});
        }
      }
    }
  }
  out.decode_ms = ms_since(t1);
  return out;
}

}  // namespace openrel
