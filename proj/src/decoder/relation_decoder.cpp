#include "openrel/decoder/relation_decoder.hpp"

#include <algorithm>
#include <cmath>

#include "openrel/ad/layers.hpp"
#include "openrel/core/errors.hpp"
#include "openrel/seg/adapter.hpp"
#include "openrel/text/templates.hpp"

namespace openrel::decoder {

using ad::Graph;
using ad::Mat;
using ad::Var;
using text::TextVocabulary;

JudgeResult judge_from_logits(double yes_logit, double no_logit) {
  JudgeResult r;
  r.yes_logit = yes_logit;
  r.no_logit = no_logit;
  r.p_yes = 1.0 / (1.0 + std::exp(no_logit - yes_logit));
  r.verdict = r.p_yes > 0.5;
  return r;
}

namespace {

std::vector<double> log_softmax(const ad::RowVec& logits) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  std::vector<double> out(static_cast<std::size_t>(logits.size()));
  for (Eigen::Index i = 0; i < logits.size(); ++i) out[static_cast<std::size_t>(i)] = logits(i) - lse;
  return out;
}

}  // namespace

GenerationResult split_generation(const std::vector<int>& ids, const std::vector<double>& log_probs,
                                  const TextVocabulary& vocab, bool truncated) {
  GenerationResult res;
  res.ids = ids;
  res.truncated = truncated;
  std::vector<int> seg;
  double total = 0.0;
  auto flush = [&]() {
    if (!seg.empty()) {
      res.relations.push_back({vocab.detokenize(seg), total / static_cast<double>(seg.size()), seg});
    }
    seg.clear();
    total = 0.0;
  };
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == TextVocabulary::kSepId) {
      flush();
      continue;
    }
    seg.push_back(ids[i]);
    total += log_probs.at(i);
  }
  flush();
  return res;
}

GenerationResult greedy_decode(const StepFn& step, const TextVocabulary& vocab, int max_len) {
  std::vector<int> ids;
  std::vector<double> lps;
  for (int t = 0; t < max_len; ++t) {
    const auto lp = log_softmax(step(ids));
    const int best = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    if (best == TextVocabulary::kEosId) return split_generation(ids, lps, vocab, false);
    ids.push_back(best);
    lps.push_back(lp[static_cast<std::size_t>(best)]);
  }
  return split_generation(ids, lps, vocab, true);
}

GenerationResult beam_decode(const StepFn& step, const TextVocabulary& vocab, int max_len, int beam) {
  if (beam <= 1) return greedy_decode(step, vocab, max_len);
  struct Hyp {
    std::vector<int> ids;
    std::vector<double> lps;
    double total = 0.0;
  };
  std::vector<Hyp> live{Hyp{}};
  std::vector<Hyp> done;
  for (int t = 0; t < max_len && !live.empty(); ++t) {
    std::vector<std::pair<Hyp, bool>> cand;
    for (const auto& h : live) {
      const auto lp = log_softmax(step(h.ids));
      std::vector<int> order(lp.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      std::partial_sort(order.begin(), order.begin() + std::min<std::size_t>(order.size(), beam), order.end(),
                        [&](int a, int b) { return lp[a] > lp[b] || (lp[a] == lp[b] && a < b); });
      for (int r = 0; r < beam && r < static_cast<int>(order.size()); ++r) {
        const int tok = order[static_cast<std::size_t>(r)];
        Hyp n = h;
        n.total += lp[static_cast<std::size_t>(tok)];
        const bool eos = tok == TextVocabulary::kEosId;
        if (!eos) {
          n.ids.push_back(tok);
          n.lps.push_back(lp[static_cast<std::size_t>(tok)]);
        }
        cand.emplace_back(std::move(n), eos);
      }
    }
    std::stable_sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) { return a.first.total > b.first.total; });
    live.clear();
    for (auto& [h, eos] : cand) {
      if (static_cast<int>(live.size()) >= beam) break;
      if (eos) {
        done.push_back(std::move(h));
      } else {
        live.push_back(std::move(h));
      }
    }
    // Log-probabilities only fall, so a finished hypothesis ahead of every live one is final.
    if (!done.empty()) {
      double best_done = done.front().total;
      for (const auto& h : done) best_done = std::max(best_done, h.total);
      bool ahead = true;
      for (const auto& h : live) ahead = ahead && best_done >= h.total;
      if (ahead) break;
    }
  }
  auto better = [](const Hyp& a, const Hyp& b) { return a.total > b.total; };
  if (!done.empty()) {
    const auto best = *std::min_element(done.begin(), done.end(), better);
    return split_generation(best.ids, best.lps, vocab, false);
  }
  const auto best = *std::min_element(live.begin(), live.end(), better);
  return split_generation(best.ids, best.lps, vocab, true);
}

RelationDecoder::RelationDecoder(DecoderConfig cfg, ad::ParamStore& store, const TextVocabulary& vocab)
    : cfg_(cfg), store_(&store), vocab_(&vocab) {
  if (cfg_.layers < 1) throw ValidationError("decoder.layers must be >= 1");
  if (cfg_.heads <= 0 || cfg_.dim % cfg_.heads != 0) throw ValidationError("decoder.heads must divide the model width");
}

void RelationDecoder::init_params(ad::ParamStore& store, const DecoderConfig& cfg, int vocab_size, std::mt19937_64& rng) {
  const int d = cfg.dim;
  store.add("decoder.embed", ad::normal_init(vocab_size, d, 1.0, rng));
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "decoder.layer" + std::to_string(l);
    ad::init_norm(store, p + ".attn_norm", d);
    for (const char* n : {".attn.q", ".attn.k", ".attn.v", ".attn.o"}) ad::init_linear(store, p + n, d, d, rng);
    ad::init_norm(store, p + ".ffn_norm", d);
    ad::init_ffn(store, p + ".ffn", d, d * cfg.ffn_mult, rng);
  }
  ad::init_norm(store, "decoder.out_norm", d);
  ad::init_linear(store, "decoder.lm_head", d, vocab_size, rng);
}

Var RelationDecoder::embed(Graph& g, const std::vector<int>& ids) const {
  return ad::gather_rows(g.param(store_->get("decoder.embed")), ids);
}

Var RelationDecoder::run_layers(Graph& g, Var x, const std::vector<std::pair<int, int>>& spans, const KVState* past,
                                const std::vector<int>& past_of, KVState* record) const {
  const int past_rows = past != nullptr && !past->k.empty() ? static_cast<int>(past->k.front().rows()) : 0;
  std::vector<ad::AttentionGroup> groups;
  for (std::size_t s = 0; s < spans.size(); ++s) {
    ad::AttentionGroup grp;
    grp.q_begin = spans[s].first;
    grp.q_len = spans[s].second;
    int past_len = 0;
    if (past != nullptr) {
      const auto& ps = past->spans.at(static_cast<std::size_t>(past_of.at(s)));
      grp.key_segments.push_back(ps);
      past_len = ps.second;
    }
    grp.key_segments.emplace_back(past_rows + spans[s].first, spans[s].second);
    grp.causal_offset = past_len;
    groups.push_back(std::move(grp));
  }
  if (record != nullptr) record->spans = spans;
  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "decoder.layer" + std::to_string(l);
    Var h = ad::apply_norm(g, *store_, p + ".attn_norm", x);
    Var q = ad::apply_linear(g, *store_, p + ".attn.q", h);
    Var k = ad::apply_linear(g, *store_, p + ".attn.k", h);
    Var v = ad::apply_linear(g, *store_, p + ".attn.v", h);
    if (record != nullptr) {
      record->k.push_back(k);
      record->v.push_back(v);
    }
    Var keys = k;
    Var values = v;
    if (past_rows > 0) {
      keys = ad::concat_rows({past->k[static_cast<std::size_t>(l)], k});
      values = ad::concat_rows({past->v[static_cast<std::size_t>(l)], v});
    }
    Var a = ad::attention(q, keys, values, groups, cfg_.heads);
    x = ad::add(x, ad::apply_linear(g, *store_, p + ".attn.o", a));
    x = ad::add(x, ad::apply_ffn(g, *store_, p + ".ffn", ad::apply_norm(g, *store_, p + ".ffn_norm", x)));
  }
  return x;
}

Var RelationDecoder::head(Graph& g, Var hidden) const {
  return ad::apply_linear(g, *store_, "decoder.lm_head", ad::apply_norm(g, *store_, "decoder.out_norm", hidden));
}

KVState RelationDecoder::forward_prefix(Graph& g, Var features, int rows_per_pair,
                                        const std::vector<std::vector<int>>& prefix_ids) const {
  const std::size_t n = prefix_ids.size();
  if (features.rows() != static_cast<Eigen::Index>(n) * rows_per_pair) {
    throw ValidationError("decoder: feature rows do not match the pair count");
  }
  std::vector<int> all_ids;
  for (const auto& ids : prefix_ids) all_ids.insert(all_ids.end(), ids.begin(), ids.end());
  Var words = all_ids.empty() ? Var{} : embed(g, all_ids);
  std::vector<Var> parts;
  std::vector<std::pair<int, int>> spans;
  int row = 0;
  int word = 0;
  Mat pos(static_cast<Eigen::Index>(n) * rows_per_pair + static_cast<Eigen::Index>(all_ids.size()), cfg_.dim);
  for (std::size_t p = 0; p < n; ++p) {
    const int len = rows_per_pair + static_cast<int>(prefix_ids[p].size());
    if (rows_per_pair > 0) parts.push_back(ad::slice_rows(features, static_cast<Eigen::Index>(p) * rows_per_pair, rows_per_pair));
    if (!prefix_ids[p].empty()) {
      parts.push_back(ad::slice_rows(words, word, static_cast<Eigen::Index>(prefix_ids[p].size())));
      word += static_cast<int>(prefix_ids[p].size());
    }
    pos.middleRows(row, len) = seg::sine_position_1d(0, len, cfg_.dim);
    spans.emplace_back(row, len);
    row += len;
  }
  KVState state;
  if (parts.empty()) {
    state.spans = spans;
    return state;
  }
  Var x = ad::add(ad::concat_rows(parts), g.constant(std::move(pos)));
  run_layers(g, x, spans, nullptr, {}, &state);
  return state;
}

Var RelationDecoder::forward_suffix(Graph& g, const KVState& prefix, const std::vector<int>& prefix_of,
                                    const std::vector<std::vector<int>>& suffix_ids) const {
  if (prefix_of.size() != suffix_ids.size()) throw ValidationError("decoder: one prefix index per suffix required");
  std::vector<int> all_ids;
  std::vector<std::pair<int, int>> spans;
  for (const auto& ids : suffix_ids) {
    if (ids.empty()) throw ValidationError("decoder: empty suffix");
    spans.emplace_back(static_cast<int>(all_ids.size()), static_cast<int>(ids.size()));
    all_ids.insert(all_ids.end(), ids.begin(), ids.end());
  }
  Mat pos(static_cast<Eigen::Index>(all_ids.size()), cfg_.dim);
  for (std::size_t s = 0; s < spans.size(); ++s) {
    const int start = prefix.spans.at(static_cast<std::size_t>(prefix_of[s])).second;
    pos.middleRows(spans[s].first, spans[s].second) = seg::sine_position_1d(start, spans[s].second, cfg_.dim);
  }
  Var x = ad::add(embed(g, all_ids), g.constant(std::move(pos)));
  return head(g, run_layers(g, x, spans, &prefix, prefix_of, nullptr));
}

Var RelationDecoder::forward_full(Graph& g, Var features, const std::vector<int>& ids) const {
  std::vector<Var> parts;
  if (features.rows() > 0) parts.push_back(features);
  if (!ids.empty()) parts.push_back(embed(g, ids));
  if (parts.empty()) throw ValidationError("decoder: empty sequence");
  const int len = static_cast<int>(features.rows()) + static_cast<int>(ids.size());
  Var x = ad::add(ad::concat_rows(parts), g.constant(seg::sine_position_1d(0, len, cfg_.dim)));
  return head(g, run_layers(g, x, {{0, len}}, nullptr, {}, nullptr));
}

std::vector<int> RelationDecoder::judgement_prefix_ids(const std::string& subject, const std::string& object,
                                                       std::size_t template_index, std::vector<int>* tail_ids) const {
  const auto parts = text::split_judgement(text::bank(text::BankKind::Judgement).at(template_index), subject, object);
  std::vector<int> ids{TextVocabulary::kBosId};
  const auto body = vocab_->tokenize(parts.prefix);
  ids.insert(ids.end(), body.begin(), body.end());
  if (tail_ids != nullptr) *tail_ids = vocab_->tokenize(parts.tail);
  return ids;
}

std::vector<int> RelationDecoder::generation_prompt_ids(const std::string& subject, const std::string& object,
                                                        std::size_t template_index) const {
  std::vector<int> ids{TextVocabulary::kBosId};
  const auto body = vocab_->tokenize(text::fill(text::bank(text::BankKind::Generation).at(template_index), subject, object));
  ids.insert(ids.end(), body.begin(), body.end());
  return ids;
}

std::vector<int> RelationDecoder::relation_ids(const std::string& relation) const {
  auto ids = vocab_->tokenize(relation);
  if (ids.empty()) throw ValidationError("relation name is empty");
  return ids;
}

PrefixCache RelationDecoder::build_prefix(const Mat& features, const std::string& subject,
                                          const std::string& object) const {
  PrefixCache cache;
  const auto ids = judgement_prefix_ids(subject, object, 0, &cache.tail_ids);
  Graph g(false);
  KVState st = forward_prefix(g, g.constant(features), static_cast<int>(features.rows()), {ids});
  for (std::size_t l = 0; l < st.k.size(); ++l) {
    cache.k.push_back(st.k[l].value());
    cache.v.push_back(st.v[l].value());
  }
  cache.length = static_cast<int>(features.rows()) + static_cast<int>(ids.size());
  return cache;
}

JudgeResult RelationDecoder::judge_relation(const PrefixCache& cache, const std::string& relation) const {
  return judge_relations({&cache}, {relation}).front();
}

std::vector<JudgeResult> RelationDecoder::judge_relations(const std::vector<const PrefixCache*>& caches,
                                                          const std::vector<std::string>& relations) const {
  std::vector<JudgeResult> out;
  if (caches.empty() || relations.empty()) return out;
  std::vector<std::vector<int>> rel_ids;
  for (const auto& r : relations) rel_ids.push_back(relation_ids(r));

  Graph g(false);
  KVState past;
  int rows = 0;
  for (const auto* c : caches) {
    past.spans.emplace_back(rows, c->length);
    rows += c->length;
  }
  for (int l = 0; l < cfg_.layers; ++l) {
    Mat k(rows, cfg_.dim);
    Mat v(rows, cfg_.dim);
    for (std::size_t c = 0; c < caches.size(); ++c) {
      k.middleRows(past.spans[c].first, past.spans[c].second) = caches[c]->k.at(static_cast<std::size_t>(l));
      v.middleRows(past.spans[c].first, past.spans[c].second) = caches[c]->v.at(static_cast<std::size_t>(l));
    }
    past.k.push_back(g.constant(std::move(k)));
    past.v.push_back(g.constant(std::move(v)));
  }
  std::vector<int> prefix_of;
  std::vector<std::vector<int>> suffixes;
  for (std::size_t c = 0; c < caches.size(); ++c) {
    for (const auto& r : rel_ids) {
      std::vector<int> s = r;
      s.insert(s.end(), caches[c]->tail_ids.begin(), caches[c]->tail_ids.end());
      prefix_of.push_back(static_cast<int>(c));
      suffixes.push_back(std::move(s));
    }
  }
  const Mat& logits = forward_suffix(g, past, prefix_of, suffixes).value();
  int row = -1;
  for (const auto& s : suffixes) {
    row += static_cast<int>(s.size());
    out.push_back(judge_from_logits(logits(row, TextVocabulary::kYesId), logits(row, TextVocabulary::kNoId)));
  }
  return out;
}

JudgeResult RelationDecoder::judge_uncached(const Mat& features, const std::string& subject, const std::string& object,
                                            const std::string& relation) const {
  std::vector<int> tail;
  auto ids = judgement_prefix_ids(subject, object, 0, &tail);
  const auto rel = relation_ids(relation);
  ids.insert(ids.end(), rel.begin(), rel.end());
  ids.insert(ids.end(), tail.begin(), tail.end());
  Graph g(false);
  const Mat& logits = forward_full(g, g.constant(features), ids).value();
  const Eigen::Index last = logits.rows() - 1;
  return judge_from_logits(logits(last, TextVocabulary::kYesId), logits(last, TextVocabulary::kNoId));
}

GenerationResult RelationDecoder::decode_generate(const Mat& features, const std::string& subject,
                                                  const std::string& object) const {
  auto prompt = generation_prompt_ids(subject, object, 0);
  const int last = prompt.back();
  prompt.pop_back();
  Graph pg(false);
  KVState st = forward_prefix(pg, pg.constant(features), static_cast<int>(features.rows()), {prompt});
  std::vector<Mat> ks;
  std::vector<Mat> vs;
  for (std::size_t l = 0; l < st.k.size(); ++l) {
    ks.push_back(st.k[l].value());
    vs.push_back(st.v[l].value());
  }
  const auto span = st.spans.front();
  StepFn step = [&](const std::vector<int>& generated) {
    Graph g(false);
    KVState past;
    past.spans = {span};
    for (std::size_t l = 0; l < ks.size(); ++l) {
      past.k.push_back(g.constant(ks[l]));
      past.v.push_back(g.constant(vs[l]));
    }
    std::vector<int> suffix{last};
    suffix.insert(suffix.end(), generated.begin(), generated.end());
    const Mat& logits = forward_suffix(g, past, {0}, {suffix}).value();
    return ad::RowVec(logits.row(logits.rows() - 1));
  };
  return beam_decode(step, *vocab_, cfg_.max_len, cfg_.beam);
}

}  // namespace openrel::decoder
