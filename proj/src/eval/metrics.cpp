#include "openrel/eval/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <tuple>

#include "openrel/core/errors.hpp"

namespace openrel::eval {

std::optional<std::string> canonicalize_relation(std::string_view text, const RelationVocabulary& vocab) {
  auto name = normalize_name(text);
  if (name.empty() || !vocab.contains(name)) return std::nullopt;
  return name;
}

void rank_predictions(std::vector<Triplet>& predictions) {
  for (const auto& p : predictions) {
    if (!p.score) throw ValidationError("prediction without a score cannot be ranked");
  }
  std::stable_sort(predictions.begin(), predictions.end(), [](const Triplet& a, const Triplet& b) {
    if (*a.score != *b.score) return *a.score > *b.score;
    return std::tie(a.subject_id, a.object_id, a.relation) < std::tie(b.subject_id, b.object_id, b.relation);
  });
}

std::vector<bool> match_top_k(const std::vector<Triplet>& ranked, const std::vector<Triplet>& gt, int k) {
  std::vector<bool> matched(gt.size(), false);
  const std::size_t limit = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(std::max(k, 0)));
  for (std::size_t i = 0; i < limit; ++i) {
    const auto& p = ranked[i];
    if (!p.score) throw ValidationError("prediction without a score cannot be matched");
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (!matched[g] && gt[g].subject_id == p.subject_id && gt[g].object_id == p.object_id &&
          normalize_name(gt[g].relation) == normalize_name(p.relation)) {
        matched[g] = true;
        break;
      }
    }
  }
  return matched;
}

double recall_at_k(const std::vector<Triplet>& ranked, const std::vector<Triplet>& gt, int k) {
  if (gt.empty()) return 0.0;
  const auto m = match_top_k(ranked, gt, k);
  return static_cast<double>(std::count(m.begin(), m.end(), true)) / static_cast<double>(gt.size());
}

double mean_recall_at_k(const std::vector<Triplet>& ranked, const std::vector<Triplet>& gt, int k) {
  if (gt.empty()) return 0.0;
  const auto m = match_top_k(ranked, gt, k);
  std::map<std::string, std::pair<std::size_t, std::size_t>> per;
  for (std::size_t g = 0; g < gt.size(); ++g) {
    auto& c = per[normalize_name(gt[g].relation)];
    c.second += 1;
    c.first += m[g] ? 1 : 0;
  }
  double sum = 0.0;
  for (const auto& [_, c] : per) sum += static_cast<double>(c.first) / static_cast<double>(c.second);
  return sum / static_cast<double>(per.size());
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.height != b.height || a.width != b.width) throw ValidationError("mask_iou: mask dimensions differ");
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    inter += (a.bits[i] && b.bits[i]) ? 1 : 0;
    uni += (a.bits[i] || b.bits[i]) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<int> match_objects_sgdet(const std::vector<ObjectInstance>& predicted,
                                     const std::vector<ObjectInstance>& gt, double iou_threshold) {
  struct Cand {
    double iou;
    int p;
    int g;
  };
  std::vector<Cand> cands;
  for (std::size_t p = 0; p < predicted.size(); ++p) {
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const double iou = mask_iou(predicted[p].mask, gt[g].mask);
      if (predicted[p].category != gt[g].category || iou < iou_threshold) continue;
      cands.push_back({iou, static_cast<int>(p), static_cast<int>(g)});
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    return std::tie(a.p, a.g) < std::tie(b.p, b.g);
  });
  std::vector<int> out(predicted.size(), -1);
  std::vector<bool> used(gt.size(), false);
  for (const auto& c : cands) {
    if (out[static_cast<std::size_t>(c.p)] >= 0 || used[static_cast<std::size_t>(c.g)]) continue;
    out[static_cast<std::size_t>(c.p)] = c.g;
    used[static_cast<std::size_t>(c.g)] = true;
  }
  return out;
}

const RecallRow& MetricsReport::row(const std::string& split, int k) const {
  const auto& rows = splits.at(split);
  for (const auto& r : rows) {
    if (r.k == k) return r;
  }
  throw ValidationError("metrics report has no K=" + std::to_string(k));
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["ks"] = ks;
  for (const auto& [name, rows] : splits) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
      arr.push_back({{"k", r.k}, {"recall", r.recall}, {"mean_recall", r.mean_recall}, {"matched", r.matched},
                     {"total", r.total}});
    }
    j["splits"][name] = arr;
  }
  j["per_relation"] = per_relation;
  j["gt_counts"] = gt_counts;
  j["counts"] = {{"scenes", scenes},
                 {"pairs_total", pairs_total},
                 {"pairs_kept", pairs_kept},
                 {"prefix_builds", prefix_builds},
                 {"probes", probes},
                 {"emitted_outputs", emitted_outputs},
                 {"uncanonical_outputs", uncanonical_outputs},
                 {"truncated_generations", truncated_generations}};
  return j;
}

std::string MetricsReport::table() const {
  std::ostringstream os;
  char buf[128];
  os << "split     K     R@K     mR@K   matched/total\n";
  for (const auto& [name, rows] : splits) {
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof(buf), "%-8s %3d  %6.4f  %6.4f   %zu/%zu\n", name.c_str(), r.k, r.recall, r.mean_recall,
                    r.matched, r.total);
      os << buf;
    }
  }
  std::snprintf(buf, sizeof(buf), "scenes %zu, pairs kept %zu/%zu, prefix builds %zu, probes %zu\n", scenes, pairs_kept,
                pairs_total, prefix_builds, probes);
  os << buf;
  return os.str();
}

std::string MetricsReport::per_relation_csv() const {
  std::ostringstream os;
  os << "relation,gt_count";
  for (int k : ks) os << ",R@" << k;
  os << "\n";
  for (const auto& [name, rec] : per_relation) {
    os << '"' << name << '"' << ',' << (gt_counts.count(name) ? gt_counts.at(name) : 0);
    for (double r : rec) os << ',' << r;
    os << "\n";
  }
  return os.str();
}

RecallAccumulator::RecallAccumulator(std::vector<int> ks, const RelationVocabulary& vocab, bool split_report)
    : ks_(std::move(ks)), vocab_(&vocab), split_report_(split_report) {}

void RecallAccumulator::add_scene(const std::vector<Triplet>& ranked, const std::vector<Triplet>& gt) {
  for (const auto& t : gt) {
    auto& c = by_relation_[normalize_name(t.relation)];
    if (c.matched.empty()) c.matched.assign(ks_.size(), 0);
    c.total += 1;
  }
  for (std::size_t ki = 0; ki < ks_.size(); ++ki) {
    const auto m = match_top_k(ranked, gt, ks_[ki]);
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (m[g]) by_relation_[normalize_name(gt[g].relation)].matched[ki] += 1;
    }
  }
}

void RecallAccumulator::finish(MetricsReport& report) const {
  report.ks = ks_;
  report.splits.clear();
  report.per_relation.clear();
  report.gt_counts.clear();
  auto build = [&](const std::string& split, auto&& include) {
    std::vector<RecallRow> rows;
    for (std::size_t ki = 0; ki < ks_.size(); ++ki) {
      RecallRow r;
      r.k = ks_[ki];
      double mr = 0.0;
      std::size_t cats = 0;
      for (const auto& [name, c] : by_relation_) {
        if (!include(name) || c.total == 0) continue;
        r.matched += c.matched[ki];
        r.total += c.total;
        mr += static_cast<double>(c.matched[ki]) / static_cast<double>(c.total);
        ++cats;
      }
      r.recall = r.total == 0 ? 0.0 : static_cast<double>(r.matched) / static_cast<double>(r.total);
      r.mean_recall = cats == 0 ? 0.0 : mr / static_cast<double>(cats);
      rows.push_back(r);
    }
    report.splits[split] = rows;
  };
  build("overall", [](const std::string&) { return true; });
  if (split_report_) {
    build("base", [&](const std::string& n) { return vocab_->is_base(n); });
    build("novel", [&](const std::string& n) { return !vocab_->is_base(n); });
  }
  for (const auto& [name, c] : by_relation_) {
    std::vector<double> rec;
    for (std::size_t ki = 0; ki < ks_.size(); ++ki) {
      rec.push_back(c.total == 0 ? 0.0 : static_cast<double>(c.matched[ki]) / static_cast<double>(c.total));
    }
    report.per_relation[name] = rec;
    report.gt_counts[name] = c.total;
  }
}

}  // namespace openrel::eval
