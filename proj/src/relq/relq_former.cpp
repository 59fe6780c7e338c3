#include "openrel/relq/relq_former.hpp"

#include <cmath>

#include "openrel/ad/layers.hpp"
#include "openrel/core/errors.hpp"

namespace openrel::relq {

using ad::Graph;
using ad::Mat;
using ad::Var;

void SelectorConfig::validate() const {
  if (!(theta >= 0.0 && theta <= 1.0)) throw ValidationError("selector.theta must lie in [0,1]");
}

std::vector<int> instruction_ids(const text::TextVocabulary& vocab, text::BankKind kind, const std::string& subject,
                                 const std::string& object, text::Mode mode, std::mt19937_64& rng) {
  if (subject.empty() || object.empty()) throw ValidationError("instruction fill names must be non-empty");
  const auto& b = text::bank(kind);
  return vocab.tokenize(text::fill(b[text::choose_template(mode, rng)], subject, object));
}

RelQFormer::RelQFormer(RelQConfig cfg, ad::ParamStore& store) : cfg_(cfg), store_(&store) {
  if (cfg_.layers < 1) throw ValidationError("relq.layers must be >= 1");
  if (cfg_.heads <= 0 || cfg_.dim % cfg_.heads != 0) throw ValidationError("relq.heads must divide the model width");
}

std::string RelQFormer::layer_prefix(Stack stack, int layer) const {
  const bool separate = stack == Stack::Existence && !cfg_.share_exist_trunk;
  return std::string(separate ? "relq.exist_layer" : "relq.layer") + std::to_string(layer);
}

namespace {

void init_layer(ad::ParamStore& store, const std::string& p, int d, int hidden, std::mt19937_64& rng) {
  ad::init_norm(store, p + ".sa_norm", d);
  for (const char* n : {".sa.q", ".sa.k", ".sa.v", ".sa.o"}) ad::init_linear(store, p + n, d, d, rng);
  ad::init_norm(store, p + ".ca_norm", d);
  ad::init_norm(store, p + ".kv_norm", d);
  for (const char* n : {".ca.q", ".ca.k", ".ca.v", ".ca.o"}) ad::init_linear(store, p + n, d, d, rng);
  ad::init_norm(store, p + ".ffn_norm", d);
  ad::init_ffn(store, p + ".ffn", d, hidden, rng);
}

}  // namespace

void RelQFormer::init_params(ad::ParamStore& store, const RelQConfig& cfg, std::mt19937_64& rng) {
  if (cfg.vocab_size <= 0) throw ValidationError("relq: vocabulary size must be positive");
  const int d = cfg.dim;
  store.add("relq.embed", ad::normal_init(cfg.vocab_size, d, 1.0, rng));
  store.add("relq.feat_query", ad::normal_init(cfg.queries, d, 1.0, rng));
  store.add("relq.exist_query", ad::normal_init(1, d, 1.0, rng));
  for (int l = 0; l < cfg.layers; ++l) init_layer(store, "relq.layer" + std::to_string(l), d, d * cfg.ffn_mult, rng);
  if (!cfg.share_exist_trunk) {
    for (int l = 0; l < cfg.layers; ++l) {
      init_layer(store, "relq.exist_layer" + std::to_string(l), d, d * cfg.ffn_mult, rng);
    }
  }
  ad::init_norm(store, "relq.out_norm", d);
  ad::init_norm(store, "relq.exist_norm", d);
  ad::init_linear(store, "relq.exist_head.fc1", d, d, rng);
  ad::init_linear(store, "relq.exist_head.fc2", d, 1, rng);
}

Var RelQFormer::embed_instruction(Graph& g, const std::vector<int>& ids) const {
  if (ids.empty()) throw ValidationError("instruction must contain at least one token");
  Var words = ad::gather_rows(g.param(store_->get("relq.embed")), ids);
  return ad::add(words, g.constant(seg::sine_position_1d(0, static_cast<int>(ids.size()), cfg_.dim)));
}

TokenMemory RelQFormer::prepare_tokens(Graph& g, Var tokens, int grid_height, int grid_width) const {
  if (tokens.rows() != static_cast<Eigen::Index>(grid_height) * grid_width || tokens.cols() != cfg_.dim) {
    throw ValidationError("relq: token matrix does not match the patch grid");
  }
  TokenMemory mem;
  mem.length = static_cast<int>(tokens.rows());
  Var x = ad::add(tokens, g.constant(seg::sine_position_2d(grid_height, grid_width, cfg_.dim)));
  auto build = [&](Stack stack, std::vector<Var>& ks, std::vector<Var>& vs) {
    for (int l = 0; l < cfg_.layers; ++l) {
      const std::string p = layer_prefix(stack, l);
      Var n = ad::apply_norm(g, *store_, p + ".kv_norm", x);
      ks.push_back(ad::apply_linear(g, *store_, p + ".ca.k", n));
      vs.push_back(ad::apply_linear(g, *store_, p + ".ca.v", n));
    }
  };
  build(Stack::Feature, mem.feat_k, mem.feat_v);
  if (cfg_.share_exist_trunk) {
    mem.exist_k = mem.feat_k;
    mem.exist_v = mem.feat_v;
  } else {
    build(Stack::Existence, mem.exist_k, mem.exist_v);
  }
  return mem;
}

Var RelQFormer::pair_block(Graph& g, Stack stack, int layer, Var state, int q_rows,
                           const std::vector<Var>& instructions, const TokenMemory& memory,
                           const std::vector<seg::MaskRow>& masks) const {
  const std::size_t n_pairs = instructions.size();
  if (masks.size() != n_pairs || state.rows() != static_cast<Eigen::Index>(n_pairs) * q_rows) {
    throw ValidationError("relq: state, instruction and mask counts disagree");
  }
  for (const auto& m : masks) {
    if (static_cast<int>(m.size()) != memory.length) throw ValidationError("relq: pair mask length differs from token count");
    bool any = false;
    for (auto b : m) any = any || b != 0;
    if (!any) throw ValidationError("relq: empty pair mask");
  }
  const std::string p = layer_prefix(stack, layer);

  // Self-attention over [queries ; instruction], keeping only the query rows.
  std::vector<Var> parts;
  std::vector<int> query_rows;
  std::vector<ad::AttentionGroup> sa_groups;
  int offset = 0;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    parts.push_back(ad::slice_rows(state, static_cast<Eigen::Index>(i) * q_rows, q_rows));
    parts.push_back(instructions[i]);
    for (int r = 0; r < q_rows; ++r) query_rows.push_back(offset + r);
    const int len = q_rows + static_cast<int>(instructions[i].rows());
    ad::AttentionGroup grp;
    grp.q_begin = static_cast<int>(i) * q_rows;
    grp.q_len = q_rows;
    grp.key_segments = {{offset, len}};
    sa_groups.push_back(std::move(grp));
    offset += len;
  }
  Var joint = ad::apply_norm(g, *store_, p + ".sa_norm", ad::concat_rows(parts));
  Var q = ad::apply_linear(g, *store_, p + ".sa.q", ad::gather_rows(joint, query_rows));
  Var k = ad::apply_linear(g, *store_, p + ".sa.k", joint);
  Var v = ad::apply_linear(g, *store_, p + ".sa.v", joint);
  Var sa = ad::attention(q, k, v, sa_groups, cfg_.heads);
  state = ad::add(state, ad::apply_linear(g, *store_, p + ".sa.o", sa));

  // Cross-attention to the visual tokens under the pair mask.
  std::vector<ad::AttentionGroup> ca_groups;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    ad::AttentionGroup grp;
    grp.q_begin = static_cast<int>(i) * q_rows;
    grp.q_len = q_rows;
    grp.key_segments = {{0, memory.length}};
    grp.key_mask = masks[i];
    ca_groups.push_back(std::move(grp));
  }
  const auto& ks = stack == Stack::Feature ? memory.feat_k : memory.exist_k;
  const auto& vs = stack == Stack::Feature ? memory.feat_v : memory.exist_v;
  Var cq = ad::apply_linear(g, *store_, p + ".ca.q", ad::apply_norm(g, *store_, p + ".ca_norm", state));
  Var ca = ad::attention(cq, ks.at(static_cast<std::size_t>(layer)), vs.at(static_cast<std::size_t>(layer)), ca_groups,
                         cfg_.heads);
  state = ad::add(state, ad::apply_linear(g, *store_, p + ".ca.o", ca));

  Var ffn = ad::apply_ffn(g, *store_, p + ".ffn", ad::apply_norm(g, *store_, p + ".ffn_norm", state));
  return ad::add(state, ffn);
}

Var RelQFormer::run_stack(Graph& g, Stack stack, Var init, int q_rows, const TokenMemory& memory,
                          const std::vector<std::vector<int>>& instructions,
                          const std::vector<seg::MaskRow>& masks) const {
  const std::size_t n_pairs = instructions.size();
  std::vector<Var> inst;
  inst.reserve(n_pairs);
  for (const auto& ids : instructions) inst.push_back(embed_instruction(g, ids));
  std::vector<int> tile;
  tile.reserve(n_pairs * static_cast<std::size_t>(q_rows));
  for (std::size_t i = 0; i < n_pairs; ++i) {
    for (int r = 0; r < q_rows; ++r) tile.push_back(r);
  }
  Var state = ad::gather_rows(init, tile);
  for (int l = 0; l < cfg_.layers; ++l) state = pair_block(g, stack, l, state, q_rows, inst, memory, masks);
  return state;
}

Var RelQFormer::extract_pair_features(Graph& g, const TokenMemory& memory,
                                      const std::vector<std::vector<int>>& instructions,
                                      const std::vector<seg::MaskRow>& masks) const {
  if (instructions.empty()) return g.constant(Mat::Zero(0, cfg_.dim));
  Var state = run_stack(g, Stack::Feature, g.param(store_->get("relq.feat_query")), cfg_.queries, memory, instructions,
                        masks);
  return ad::apply_norm(g, *store_, "relq.out_norm", state);
}

Var RelQFormer::existence_logits(Graph& g, const TokenMemory& memory,
                                 const std::vector<std::vector<int>>& instructions,
                                 const std::vector<seg::MaskRow>& masks) const {
  if (instructions.empty()) return g.constant(Mat::Zero(0, 1));
  Var state = run_stack(g, Stack::Existence, g.param(store_->get("relq.exist_query")), 1, memory, instructions, masks);
  Var h = ad::apply_norm(g, *store_, "relq.exist_norm", state);
  h = ad::gelu(ad::apply_linear(g, *store_, "relq.exist_head.fc1", h));
  return ad::apply_linear(g, *store_, "relq.exist_head.fc2", h);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<std::size_t> selected_indices(const std::vector<double>& scores, double theta) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > theta) keep.push_back(i);
  }
  return keep;
}

seg::PairSet select_pairs(const seg::PairSet& pairs, const std::vector<double>& scores, const SelectorConfig& cfg) {
  cfg.validate();
  if (scores.size() != pairs.size()) {
    throw ValidationError("select_pairs: " + std::to_string(scores.size()) + " scores for " +
                          std::to_string(pairs.size()) + " pairs");
  }
  seg::PairSet out;
  for (std::size_t i : selected_indices(scores, cfg.theta)) {
    out.pairs.push_back(pairs.pairs[i]);
    out.categories.push_back(pairs.categories[i]);
    out.masks.push_back(pairs.masks[i]);
  }
  return out;
}

}  // namespace openrel::relq
