#pragma once

// Small causal decoder over [pair feature rows ; word tokens]. Generation mode
// emits [SEP]-delimited relation names; judgement mode reads a Yes/No answer
// after the relation name, reusing a cached prefix per pair.

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "openrel/ad/autograd.hpp"
#include "openrel/ad/params.hpp"
#include "openrel/text/tokenizer.hpp"

namespace openrel::decoder {

struct DecoderConfig {
  int dim = 64;
  int heads = 4;
  int layers = 2;
  int max_len = 16;
  int beam = 1;
  int ffn_mult = 4;
};

// Per-layer keys/values of a batch of sequences stacked row-wise.
struct KVState {
  std::vector<ad::Var> k, v;
  std::vector<std::pair<int, int>> spans;  // (first row, length) per sequence
};

// Inference-time cache for one pair: keys/values of
// [pair features ; <bos> ; judgement text before {relation}].
struct PrefixCache {
  std::vector<ad::Mat> k, v;  // per layer, length x D
  int length = 0;
  std::vector<int> tail_ids;  // template text after the relation slot
  std::pair<int, int> pair_index{-1, -1};
};

struct JudgeResult {
  bool verdict = false;
  double p_yes = 0.0;
  double yes_logit = 0.0;
  double no_logit = 0.0;
};

// Softmax restricted to {Yes, No}; verdict is p_yes > 0.5.
JudgeResult judge_from_logits(double yes_logit, double no_logit);

struct GeneratedRelation {
  std::string text;
  double score = 0.0;  // mean token log-probability
  std::vector<int> ids;
};

struct GenerationResult {
  std::vector<GeneratedRelation> relations;
  std::vector<int> ids;  // emitted tokens, without the final <eos>
  bool truncated = false;
};

// Next-token logits given the tokens generated so far.
using StepFn = std::function<ad::RowVec(const std::vector<int>& generated)>;

GenerationResult greedy_decode(const StepFn& step, const text::TextVocabulary& vocab, int max_len);
GenerationResult beam_decode(const StepFn& step, const text::TextVocabulary& vocab, int max_len, int beam);
// Splits an emitted sequence on [SEP]; empty segments are dropped.
GenerationResult split_generation(const std::vector<int>& ids, const std::vector<double>& log_probs,
                                  const text::TextVocabulary& vocab, bool truncated);

class RelationDecoder {
 public:
  RelationDecoder(DecoderConfig cfg, ad::ParamStore& store, const text::TextVocabulary& vocab);
  static void init_params(ad::ParamStore& store, const DecoderConfig& cfg, int vocab_size, std::mt19937_64& rng);

  const DecoderConfig& config() const { return cfg_; }
  const text::TextVocabulary& vocab() const { return *vocab_; }

  // Runs [features_p ; ids_p] for every pair p. `features` stacks P blocks of
  // `rows_per_pair` rows. Returns keys/values of every layer.
  KVState forward_prefix(ad::Graph& g, ad::Var features, int rows_per_pair,
                         const std::vector<std::vector<int>>& prefix_ids) const;
  // Continues sequence `prefix_of[s]` of `prefix` with `suffix_ids[s]`.
  // Returns vocabulary logits for every suffix row, stacked in order.
  ad::Var forward_suffix(ad::Graph& g, const KVState& prefix, const std::vector<int>& prefix_of,
                         const std::vector<std::vector<int>>& suffix_ids) const;
  // Uncached forward over [features ; ids]; logits for every row.
  ad::Var forward_full(ad::Graph& g, ad::Var features, const std::vector<int>& ids) const;

  // Token ids that follow the feature rows in a judgement prefix.
  std::vector<int> judgement_prefix_ids(const std::string& subject, const std::string& object,
                                        std::size_t template_index, std::vector<int>* tail_ids) const;
  std::vector<int> generation_prompt_ids(const std::string& subject, const std::string& object,
                                         std::size_t template_index) const;

  PrefixCache build_prefix(const ad::Mat& features, const std::string& subject, const std::string& object) const;
  JudgeResult judge_relation(const PrefixCache& cache, const std::string& relation) const;
  // All (cache, relation) combinations in one batched pass, cache-major.
  std::vector<JudgeResult> judge_relations(const std::vector<const PrefixCache*>& caches,
                                           const std::vector<std::string>& relations) const;
  JudgeResult judge_uncached(const ad::Mat& features, const std::string& subject, const std::string& object,
                             const std::string& relation) const;

  GenerationResult decode_generate(const ad::Mat& features, const std::string& subject, const std::string& object) const;

 private:
  ad::Var embed(ad::Graph& g, const std::vector<int>& ids) const;
  ad::Var run_layers(ad::Graph& g, ad::Var x, const std::vector<std::pair<int, int>>& spans, const KVState* past,
                     const std::vector<int>& past_of, KVState* record) const;
  ad::Var head(ad::Graph& g, ad::Var hidden) const;
  std::vector<int> relation_ids(const std::string& relation) const;

  DecoderConfig cfg_;
  ad::ParamStore* store_;
  const text::TextVocabulary* vocab_;
};

}  // namespace openrel::decoder
