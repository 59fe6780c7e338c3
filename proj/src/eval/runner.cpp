#include "openrel/eval/runner.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "openrel/core/errors.hpp"
#include "openrel/seg/adapter.hpp"

namespace openrel::eval {

std::vector<Triplet> candidates_to_triplets(const ScenePrediction& pred, const std::vector<ObjectInstance>& objects,
                                            const RelationVocabulary& vocab, std::vector<std::string>* uncanonical) {
  std::map<std::tuple<int, int, std::string>, double> best;
  for (const auto& c : pred.candidates) {
    const auto name = canonicalize_relation(c.relation, vocab);
    if (!name) {
      if (uncanonical) uncanonical->push_back(c.relation);
      continue;
    }
    const auto& pair = pred.pairs.at(static_cast<std::size_t>(c.pair));
    const std::tuple<int, int, std::string> key{objects.at(static_cast<std::size_t>(pair.subject_index)).instance_id,
                                                objects.at(static_cast<std::size_t>(pair.object_index)).instance_id,
                                                *name};
    auto it = best.find(key);
    if (it == best.end() || c.score > it->second) best[key] = c.score;
  }
  std::vector<Triplet> out;
  out.reserve(best.size());
  for (const auto& [key, score] : best) {
    out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), score});
  }
  return out;
}

std::vector<Triplet> map_sgdet_triplets(const std::vector<Triplet>& triplets,
                                        const std::vector<ObjectInstance>& predicted,
                                        const std::vector<ObjectInstance>& gt, double iou_threshold) {
  const auto match = match_objects_sgdet(predicted, gt, iou_threshold);
  std::map<int, int> id_map;
  for (std::size_t p = 0; p < predicted.size(); ++p) {
    id_map[predicted[p].instance_id] =
        match[p] >= 0 ? gt[static_cast<std::size_t>(match[p])].instance_id : -1 - static_cast<int>(p);
  }
  std::vector<Triplet> out = triplets;
  for (auto& t : out) {
    t.subject_id = id_map.at(t.subject_id);
    t.object_id = id_map.at(t.object_id);
  }
  return out;
}

EvalRun run_eval(const Model& model, const Dataset& dataset, const EvalConfig& config, const PredictOptions& options) {
  config.validate();
  if (config.subtask == Subtask::SGDet && !config.segmenter) {
    throw ValidationError("sgdet evaluation needs a segmenter source");
  }
  EvalRun run;
  RecallAccumulator acc(config.ks, model.relations(), config.split_report && !model.relations().novel.empty());
  double decode_total = 0.0;
  double exist_total = 0.0;
  for (std::size_t si = 0; si < dataset.scenes.size(); ++si) {
    const auto& scene = dataset.scenes[si];
    std::vector<ObjectInstance> objects = scene.objects;
    if (config.subtask == Subtask::SGDet) {
      std::mt19937_64 rng(config.segmenter->seed * 1000003ULL + si);
      objects = seg::corrupt_objects(scene.objects, model.object_classes(), config.segmenter->category_flip_prob,
                                     config.segmenter->jitter_prob, rng);
    }
    const auto pred = predict_scene(model, scene.image, objects, options);

    SceneLog log;
    log.scene_id = scene.scene_id;
    log.ranked = candidates_to_triplets(pred, objects, model.relations(), &log.uncanonical);
    if (config.subtask == Subtask::SGDet) {
      log.ranked = map_sgdet_triplets(log.ranked, objects, scene.objects, config.iou_threshold);
    }
    rank_predictions(log.ranked);
    if (log.ranked.size() > static_cast<std::size_t>(config.max_predictions_per_scene)) {
      log.ranked.resize(static_cast<std::size_t>(config.max_predictions_per_scene));
    }
    std::vector<Triplet> gt;
    for (const auto& t : scene.gt_triplets) {
      Triplet c = t;
      c.relation = normalize_name(t.relation);
      gt.push_back(std::move(c));
    }
    acc.add_scene(log.ranked, gt);

    log.pairs = pred.pairs.size();
    log.kept = static_cast<std::size_t>(std::count_if(pred.pairs.begin(), pred.pairs.end(),
                                                      [](const PairOutcome& p) { return p.kept; }));
    log.decode_ms = pred.decode_ms;
    log.existence_ms = pred.existence_ms;
    auto& r = run.report;
    r.pairs_total += log.pairs;
    r.pairs_kept += log.kept;
    r.prefix_builds += pred.prefix_builds;
    r.probes += pred.probes;
    r.uncanonical_outputs += log.uncanonical.size();
    if (options.mode == DecodeMode::Generate) r.emitted_outputs += pred.candidates.size();
    for (const auto& p : pred.pairs) r.truncated_generations += p.truncated ? 1 : 0;
    decode_total += pred.decode_ms;
    exist_total += pred.existence_ms;
    run.scenes.push_back(std::move(log));
  }
  acc.finish(run.report);
  run.report.scenes = dataset.scenes.size();
  const double n = std::max<std::size_t>(dataset.scenes.size(), 1);
  run.report.mean_decode_ms = decode_total / n;
  run.report.mean_existence_ms = exist_total / n;
  return run;
}

std::vector<double> parse_theta_sweep(const std::string& spec) {
  std::vector<double> parts;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ':')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("theta sweep '" + spec + "' must look like a:b:step");
    }
  }
  if (parts.size() != 3) throw ValidationError("theta sweep '" + spec + "' must look like a:b:step");
  const double a = parts[0];
  const double b = parts[1];
  const double step = parts[2];
  if (step <= 0.0 || a > b || a < 0.0 || b > 1.0) {
    throw ValidationError("theta sweep needs 0 <= a <= b <= 1 and step > 0");
  }
  const auto count = static_cast<int>(std::floor((b - a) / step + 1e-9)) + 1;
  std::vector<double> out;
  for (int i = 0; i < count; ++i) out.push_back(std::round((a + step * i) * 1e9) / 1e9);
  return out;
}

std::vector<SweepRow> theta_sweep(const Model& model, const Dataset& dataset, const EvalConfig& config,
                                  const PredictOptions& options, const std::vector<double>& thetas) {
  EvalConfig cfg = config;
  if (std::find(cfg.ks.begin(), cfg.ks.end(), 20) == cfg.ks.end()) {
    cfg.ks.push_back(20);
    std::sort(cfg.ks.begin(), cfg.ks.end());
  }
  std::vector<SweepRow> rows;
  for (double theta : thetas) {
    PredictOptions o = options;
    o.theta = theta;
    const auto run = run_eval(model, dataset, cfg, o);
    const auto& r20 = run.report.row("overall", 20);
    SweepRow row;
    row.theta = theta;
    row.recall20 = r20.recall;
    row.mean_recall20 = r20.mean_recall;
    row.ms_per_scene = run.report.mean_decode_ms;
    row.pair_keep_ratio = run.report.pairs_total == 0 ? 0.0
                                                      : static_cast<double>(run.report.pairs_kept) /
                                                            static_cast<double>(run.report.pairs_total);
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "theta,R@20,mR@20,ms_per_scene,pair_keep_ratio\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.4f,%.6f,%.6f,%.4f,%.6f\n", r.theta, r.recall20, r.mean_recall20,
                  r.ms_per_scene, r.pair_keep_ratio);
    os << buf;
  }
  return os.str();
}

double ranking_auc(const std::vector<double>& positives, const std::vector<double>& negatives) {
  if (positives.empty() || negatives.empty()) throw ValidationError("ranking_auc needs both classes");
  std::vector<double> neg = negatives;
  std::sort(neg.begin(), neg.end());
  double wins = 0.0;
  for (double p : positives) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), p);
    const auto hi = std::upper_bound(neg.begin(), neg.end(), p);
    wins += static_cast<double>(lo - neg.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(positives.size()) * static_cast<double>(neg.size()));
}

NovelAucResult novel_relation_auc(const Model& model, const Dataset& dataset) {
  NovelAucResult out;
  const auto& novel = model.relations().novel;
  if (novel.empty()) throw ValidationError("novel AUC needs novel relations");
  PredictOptions o = default_predict_options(model);
  o.theta = 0.0;
  o.mode = DecodeMode::Judge;
  o.multiply_existence = false;
  o.relations = novel;
  for (const auto& scene : dataset.scenes) {
    const auto pred = predict_scene(model, scene.image, scene.objects, o);
    std::map<std::pair<int, int>, std::vector<std::string>> truth;
    for (const auto& t : scene.gt_triplets) {
      truth[{scene.index_of(t.subject_id), scene.index_of(t.object_id)}].push_back(normalize_name(t.relation));
    }
    std::map<std::string, std::vector<std::pair<double, bool>>> by_rel;
    for (const auto& c : pred.candidates) {
      const auto& pair = pred.pairs.at(static_cast<std::size_t>(c.pair));
      const auto& rels = truth[{pair.subject_index, pair.object_index}];
      const bool pos = std::find(rels.begin(), rels.end(), c.relation) != rels.end();
      by_rel[c.relation].push_back({c.p_yes, pos});
    }
    for (const auto& [rel, items] : by_rel) {
      const bool any_pos = std::any_of(items.begin(), items.end(), [](const auto& x) { return x.second; });
      if (!any_pos) continue;
      for (const auto& [p, pos] : items) (pos ? out.positives : out.negatives).push_back(p);
    }
  }
  if (out.positives.empty() || out.negatives.empty()) {
    throw ValidationError("novel AUC: the dataset has no usable novel triplets");
  }
  out.auc = ranking_auc(out.positives, out.negatives);
  return out;
}

double random_ranking_recall(const Dataset& dataset, std::size_t relation_count, int k) {
  double expected = 0.0;
  double total = 0.0;
  for (const auto& s : dataset.scenes) {
    const double n = static_cast<double>(s.objects.size());
    const double c = n * (n - 1.0) * static_cast<double>(relation_count);
    const double g = static_cast<double>(s.gt_triplets.size());
    total += g;
    if (c > 0.0 && g > 0.0) expected += g * std::min(static_cast<double>(k), c) / c;
  }
  return total == 0.0 ? 0.0 : expected / total;
}

}  // namespace openrel::eval
