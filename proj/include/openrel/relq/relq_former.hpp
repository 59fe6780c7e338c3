#pragma once

// Relation query transformer: E learned feature queries (and one existence
// query) attend to instruction tokens, then to the visual tokens under the
// pair's mask, for a configurable number of layers.

#include <random>
#include <string>
#include <vector>

#include "openrel/ad/autograd.hpp"
#include "openrel/ad/params.hpp"
#include "openrel/seg/adapter.hpp"
#include "openrel/text/templates.hpp"
#include "openrel/text/tokenizer.hpp"

namespace openrel::relq {

struct RelQConfig {
  int dim = 64;
  int heads = 4;
  int layers = 2;
  int queries = 32;
  bool share_exist_trunk = true;
  int ffn_mult = 4;
  int vocab_size = 0;
};

enum class Stack { Feature, Existence };

struct SelectorConfig {
  double theta = 0.35;
  void validate() const;
};

// Per-layer keys/values of the (position-encoded) visual tokens. Computed once
// per image and shared by every pair.
struct TokenMemory {
  int length = 0;
  std::vector<ad::Var> feat_k, feat_v;
  std::vector<ad::Var> exist_k, exist_v;
};

// Token ids of a filled pair-feature or existence instruction.
std::vector<int> instruction_ids(const text::TextVocabulary& vocab, text::BankKind kind, const std::string& subject,
                                 const std::string& object, text::Mode mode, std::mt19937_64& rng);

class RelQFormer {
 public:
  RelQFormer(RelQConfig cfg, ad::ParamStore& store);
  static void init_params(ad::ParamStore& store, const RelQConfig& cfg, std::mt19937_64& rng);

  const RelQConfig& config() const { return cfg_; }

  // Word embeddings plus 1-D sine positions; X x D.
  ad::Var embed_instruction(ad::Graph& g, const std::vector<int>& ids) const;

  // tokens: L x D on a grid_height x grid_width patch grid.
  TokenMemory prepare_tokens(ad::Graph& g, ad::Var tokens, int grid_height, int grid_width) const;

  // One layer for P pairs at once. `state` stacks P blocks of q_rows rows;
  // `instructions[p]` is pair p's embedded instruction; `masks[p]` its
  // length-L token mask. Returns the new P*q_rows x D state.
  ad::Var pair_block(ad::Graph& g, Stack stack, int layer, ad::Var state, int q_rows,
                     const std::vector<ad::Var>& instructions, const TokenMemory& memory,
                     const std::vector<seg::MaskRow>& masks) const;

  // (P*E) x D features, pair p in rows [p*E, (p+1)*E).
  ad::Var extract_pair_features(ad::Graph& g, const TokenMemory& memory,
                                const std::vector<std::vector<int>>& instructions,
                                const std::vector<seg::MaskRow>& masks) const;
  // P x 1 existence logits (sigmoid gives the score).
  ad::Var existence_logits(ad::Graph& g, const TokenMemory& memory, const std::vector<std::vector<int>>& instructions,
                           const std::vector<seg::MaskRow>& masks) const;

  // Parameter name prefix of a layer of the given stack.
  std::string layer_prefix(Stack stack, int layer) const;

 private:
  ad::Var run_stack(ad::Graph& g, Stack stack, ad::Var init, int q_rows, const TokenMemory& memory,
                    const std::vector<std::vector<int>>& instructions, const std::vector<seg::MaskRow>& masks) const;

  RelQConfig cfg_;
  ad::ParamStore* store_;
};

double sigmoid(double x);

// Keeps the pairs whose score is strictly above theta, in order.
seg::PairSet select_pairs(const seg::PairSet& pairs, const std::vector<double>& scores, const SelectorConfig& cfg);
std::vector<std::size_t> selected_indices(const std::vector<double>& scores, double theta);

}  // namespace openrel::relq
