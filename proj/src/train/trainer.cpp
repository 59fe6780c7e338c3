#include "openrel/train/trainer.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include "openrel/core/errors.hpp"
#include "openrel/text/templates.hpp"
#include "openrel/train/losses.hpp"

namespace openrel::train {

using ad::Graph;
using ad::Var;
using text::TextVocabulary;

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 rng_from_string(const std::string& text) {
  std::mt19937_64 rng;
  std::istringstream is(text);
  is >> rng;
  if (!is) throw ValidationError("checkpoint: corrupt rng state");
  return rng;
}

std::vector<std::string> supervised_relations(const RelationVocabulary& vocab, bool open_set) {
  return open_set ? vocab.base : vocab.all();
}

std::vector<Triplet> supervised_triplets(const SceneRecord& scene, const std::vector<std::string>& relations) {
  std::vector<Triplet> out;
  for (const auto& t : scene.gt_triplets) {
    const auto name = normalize_name(t.relation);
    if (std::find(relations.begin(), relations.end(), name) == relations.end()) continue;
    Triplet c = t;
    c.relation = name;
    out.push_back(std::move(c));
  }
  return out;
}

double learning_rate(const TrainConfig& cfg, int epoch) {
  return cfg.lr_drop_epoch > 0 && epoch >= cfg.lr_drop_epoch ? cfg.lr * 0.1 : cfg.lr;
}

namespace {

ad::AdamW make_optimizer(const TrainConfig& cfg) {
  ad::AdamWConfig a;
  a.weight_decay = cfg.weight_decay;
  return ad::AdamW(a);
}

std::size_t random_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace

Trainer::Trainer(Model& model, TrainConfig config)
    : Trainer(model, config, TrainState{make_optimizer(config), 0, {}, std::mt19937_64(config.seed)}) {}

Trainer::Trainer(Model& model, TrainConfig config, TrainState state)
    : model_(&model), config_(std::move(config)), state_(std::move(state)) {
  config_.validate();
  relations_ = supervised_relations(model.relations(), config_.open_set);
  auto& params = model_->params();
  params.set_frozen("encoder", false);
  params.set_frozen("relq", false);
  params.set_frozen("decoder", false);
  for (const auto& m : config_.freeze) params.set_frozen(m, true);
}

SceneLoss Trainer::accumulate_scene(const SceneRecord& scene, std::set<std::string>* positives) {
  SceneLoss out;
  if (scene.objects.size() < 2) return out;
  auto& rng = state_.rng;
  const Model& model = *model_;
  const auto& vocab = model.vocab();
  const auto& dec = model.decoder();

  Graph g(true);
  const auto visual = model.encode(g, scene.image);
  const auto pairs = model.pairs_for(scene.objects, visual.grid_height, visual.grid_width);
  const auto triplets = supervised_triplets(scene, relations_);
  const auto labels = existence_labels(scene, pairs, triplets);
  out.pairs = static_cast<int>(pairs.size());

  std::vector<std::vector<int>> exist_inst;
  for (const auto& [s, o] : pairs.categories) {
    exist_inst.push_back(relq::instruction_ids(vocab, text::BankKind::RelationExistence, s, o, text::Mode::Train, rng));
  }
  Var exist_logits = model.relq().existence_logits(g, visual.memory, exist_inst, pairs.masks);
  Var l_exist = ad::bce_with_logits(exist_logits, std::vector<double>(labels.begin(), labels.end()));
  out.exist = l_exist.scalar();
  Var total = ad::scale(l_exist, config_.lambda);

  // Relation-bearing pairs and their target relations, in pair order.
  std::map<std::pair<int, int>, std::vector<std::string>> by_pair;
  for (const auto& t : triplets) {
    by_pair[{scene.index_of(t.subject_id), scene.index_of(t.object_id)}].push_back(t.relation);
  }
  std::vector<std::size_t> bearing;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    if (labels[p]) bearing.push_back(p);
  }

  if (!bearing.empty()) {
    std::vector<std::vector<int>> feat_inst;
    std::vector<seg::MaskRow> masks;
    for (auto p : bearing) {
      const auto& [s, o] = pairs.categories[p];
      feat_inst.push_back(relq::instruction_ids(vocab, text::BankKind::PairFeature, s, o, text::Mode::Train, rng));
      masks.push_back(pairs.masks[p]);
    }
    Var feats = model.relq().extract_pair_features(g, visual.memory, feat_inst, masks);
    const int e = model.config().queries;
    Var lm_total;
    bool have_lm = false;
    auto add_lm = [&](Var l) {
      lm_total = have_lm ? ad::add(lm_total, l) : l;
      have_lm = true;
    };

    if (config_.objective != TrainObjective::Generate) {
      std::vector<std::vector<int>> prefixes;
      std::vector<std::vector<int>> tails;
      for (auto p : bearing) {
        const auto& [s, o] = pairs.categories[p];
        std::vector<int> tail;
        prefixes.push_back(dec.judgement_prefix_ids(s, o, text::choose_template(text::Mode::Train, rng), &tail));
        tails.push_back(std::move(tail));
      }
      const auto kv = dec.forward_prefix(g, feats, e, prefixes);
      std::vector<int> prefix_of;
      std::vector<std::vector<int>> suffixes;
      std::vector<int> targets;
      auto add_probe = [&](std::size_t b, const std::string& rel, bool yes) {
        auto ids = vocab.tokenize(rel);
        ids.insert(ids.end(), tails[b].begin(), tails[b].end());
        for (std::size_t i = 0; i + 1 < ids.size(); ++i) targets.push_back(-1);
        targets.push_back(yes ? TextVocabulary::kYesId : TextVocabulary::kNoId);
        prefix_of.push_back(static_cast<int>(b));
        suffixes.push_back(std::move(ids));
      };
      for (std::size_t b = 0; b < bearing.size(); ++b) {
        const auto& pos = by_pair[pairs.pairs[bearing[b]]];
        for (const auto& r : pos) {
          add_probe(b, r, true);
          if (positives) positives->insert(r);
        }
        std::vector<std::string> absent;
        for (const auto& r : relations_) {
          if (std::find(pos.begin(), pos.end(), r) == pos.end()) absent.push_back(r);
        }
        const auto want = static_cast<std::size_t>(std::llround(config_.negative_pair_ratio * static_cast<double>(pos.size())));
        for (std::size_t k = 0; k < want && !absent.empty(); ++k) {
          const std::size_t pick = random_index(rng, absent.size());
          add_probe(b, absent[pick], false);
          absent.erase(absent.begin() + static_cast<std::ptrdiff_t>(pick));
        }
      }
      out.probes = static_cast<int>(suffixes.size());
      add_lm(ad::cross_entropy(dec.forward_suffix(g, kv, prefix_of, suffixes), targets, -1));
    }

    if (config_.objective != TrainObjective::Judge) {
      std::vector<std::vector<int>> prefixes;
      std::vector<std::vector<int>> suffixes;
      std::vector<int> prefix_of;
      std::vector<int> targets;
      for (std::size_t b = 0; b < bearing.size(); ++b) {
        const auto& [s, o] = pairs.categories[bearing[b]];
        auto prompt = dec.generation_prompt_ids(s, o, text::choose_template(text::Mode::Train, rng));
        auto rels = by_pair[pairs.pairs[bearing[b]]];
        std::sort(rels.begin(), rels.end());
        std::vector<int> answer;
        for (std::size_t r = 0; r < rels.size(); ++r) {
          if (r) answer.push_back(TextVocabulary::kSepId);
          const auto ids = vocab.tokenize(rels[r]);
          answer.insert(answer.end(), ids.begin(), ids.end());
          if (positives) positives->insert(rels[r]);
        }
        answer.push_back(TextVocabulary::kEosId);
        std::vector<int> suffix{prompt.back()};
        suffix.insert(suffix.end(), answer.begin(), answer.end() - 1);
        prompt.pop_back();
        prefixes.push_back(std::move(prompt));
        prefix_of.push_back(static_cast<int>(b));
        suffixes.push_back(std::move(suffix));
        targets.insert(targets.end(), answer.begin(), answer.end());
      }
      const auto kv = dec.forward_prefix(g, feats, e, prefixes);
      add_lm(ad::cross_entropy(dec.forward_suffix(g, kv, prefix_of, suffixes), targets, -1));
    }
    out.lm = lm_total.scalar();
    total = ad::add(total, lm_total);
  }
  out.total = total.scalar();
  g.backward(total);
  return out;
}

void Trainer::apply_step(int scenes, double lr) {
  auto& params = model_->params();
  if (scenes > 1) {
    const double inv = 1.0 / scenes;
    for (auto& [name, p] : params.items()) p.grad *= inv;
  }
  if (config_.clip_norm > 0.0) ad::clip_grad_norm(params, config_.clip_norm);
  state_.optimizer.step(params, lr);
  params.zero_grad();
}

EpochStats Trainer::train_epoch(const Dataset& dataset) {
  EpochStats st;
  st.epoch = state_.epoch + 1;
  st.lr = learning_rate(config_, st.epoch);
  std::vector<std::size_t> order(dataset.scenes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), state_.rng);
  std::set<std::string> positives;
  model_->params().zero_grad();
  int in_batch = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto loss = accumulate_scene(dataset.scenes[order[i]], &positives);
    st.loss += loss.total;
    st.exist_loss += loss.exist;
    st.lm_loss += loss.lm;
    if (++in_batch == config_.batch_size || i + 1 == order.size()) {
      apply_step(in_batch, st.lr);
      ++st.steps;
      in_batch = 0;
    }
  }
  const double n = std::max<std::size_t>(order.size(), 1);
  st.loss /= n;
  st.exist_loss /= n;
  st.lm_loss /= n;
  st.positive_relations.assign(positives.begin(), positives.end());
  state_.epoch = st.epoch;
  state_.history.push_back(st);
  return st;
}

void Trainer::fit(const Dataset& dataset, const std::function<void(const EpochStats&)>& on_epoch) {
  while (state_.epoch < config_.epochs) {
    const auto st = train_epoch(dataset);
    if (on_epoch) on_epoch(st);
  }
}

}  // namespace openrel::train
