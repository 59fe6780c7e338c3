#include <doctest.h>

#include <numeric>
#include <random>

#include "openrel/core/errors.hpp"
#include "openrel/relq/relq_former.hpp"
#include "openrel/text/templates.hpp"
#include "oracles.hpp"

using namespace openrel;
using namespace openrel::relq;
using ad::Graph;
using ad::Mat;
using ad::Var;

namespace {

struct Fixture {
  Dataset data = oracle::small_synth_dataset(6, 21);
  std::unique_ptr<Model> model;
  SceneRecord scene;

  explicit Fixture(ModelConfig cfg = oracle::tiny_model_config(), std::uint64_t seed = 3) {
    model = oracle::tiny_model(data.relations, data.object_classes, seed, cfg);
    for (const auto& s : data.scenes) {
      if (s.objects.size() >= 3) {
        scene = s;
        break;
      }
    }
    REQUIRE(scene.objects.size() >= 3);
  }

  std::vector<std::vector<int>> instructions(const seg::PairSet& ps, text::BankKind kind) const {
    std::mt19937_64 rng(0);
    std::vector<std::vector<int>> out;
    for (const auto& [s, o] : ps.categories) {
      out.push_back(instruction_ids(model->vocab(), kind, s, o, text::Mode::Infer, rng));
    }
    return out;
  }
};

Var total(Graph& g, Var x) {
  return ad::matmul(ad::matmul(g.constant(Mat::Ones(1, x.rows())), x), g.constant(Mat::Ones(x.cols(), 1)));
}

}  // namespace

TEST_CASE("instructions: inference uses template 0 of each bank") {
  Fixture f;
  std::mt19937_64 rng(1);
  const auto ids = instruction_ids(f.model->vocab(), text::BankKind::PairFeature, "red circle", "blue square",
                                   text::Mode::Infer, rng);
  const auto expect = text::fill(text::bank(text::BankKind::PairFeature)[0], "red circle", "blue square");
  CHECK(ids == f.model->vocab().tokenize(expect));
  CHECK(std::string(text::bank(text::BankKind::PairFeature)[0]).rfind("Please extract features for", 0) == 0);
  CHECK(std::string(text::bank(text::BankKind::RelationExistence)[0]).find("estimate whether there is a relation") !=
        std::string::npos);
}

TEST_CASE("instructions: training draws replay with the same seed") {
  Fixture f;
  std::mt19937_64 a(5);
  std::mt19937_64 b(5);
  for (int i = 0; i < 20; ++i) {
    CHECK(instruction_ids(f.model->vocab(), text::BankKind::RelationExistence, "red circle", "blue square",
                          text::Mode::Train, a) ==
          instruction_ids(f.model->vocab(), text::BankKind::RelationExistence, "red circle", "blue square",
                          text::Mode::Train, b));
  }
}

TEST_CASE("instructions: unknown word in a name is an error") {
  Fixture f;
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(instruction_ids(f.model->vocab(), text::BankKind::PairFeature, "zebra", "blue square",
                                  text::Mode::Infer, rng),
                  ValidationError);
}

TEST_CASE("extract_pair_features: E x D per pair, batched equals sequential") {
  ModelConfig cfg = oracle::tiny_model_config();
  Fixture f(cfg);
  Graph g(false);
  const auto vis = f.model->encode(g, f.scene.image);
  const auto ps = f.model->pairs_for(f.scene.objects, vis.grid_height, vis.grid_width);
  const auto inst = f.instructions(ps, text::BankKind::PairFeature);
  const Mat batched = f.model->relq().extract_pair_features(g, vis.memory, inst, ps.masks).value();
  CHECK(batched.rows() == static_cast<Eigen::Index>(ps.size()) * cfg.queries);
  CHECK(batched.cols() == cfg.dim);
  const auto exist_inst = f.instructions(ps, text::BankKind::RelationExistence);
  const Mat exist = f.model->relq().existence_logits(g, vis.memory, exist_inst, ps.masks).value();
  CHECK(exist.rows() == static_cast<Eigen::Index>(ps.size()));
  for (std::size_t p = 0; p < ps.size(); ++p) {
    Graph h(false);
    const auto v1 = f.model->encode(h, f.scene.image);
    const Mat one = f.model->relq().extract_pair_features(h, v1.memory, {inst[p]}, {ps.masks[p]}).value();
    const Mat block = batched.middleRows(static_cast<Eigen::Index>(p) * cfg.queries, cfg.queries);
    CHECK((one - block).cwiseAbs().maxCoeff() <= 1e-12);
    const Mat e1 = f.model->relq().existence_logits(h, v1.memory, {exist_inst[p]}, {ps.masks[p]}).value();
    CHECK(std::abs(e1(0, 0) - exist(static_cast<Eigen::Index>(p), 0)) <= 1e-12);
  }
}

TEST_CASE("extract_pair_features: E=32, D=64 gives 32x64") {
  ModelConfig cfg = oracle::tiny_model_config();
  cfg.queries = 32;
  cfg.dim = 64;
  cfg.relq_heads = 4;
  cfg.decoder_heads = 4;
  Fixture f(cfg);
  Graph g(false);
  const auto vis = f.model->encode(g, f.scene.image);
  const auto ps = f.model->pairs_for(f.scene.objects, vis.grid_height, vis.grid_width);
  const auto inst = f.instructions(ps, text::BankKind::PairFeature);
  const Mat feats = f.model->relq().extract_pair_features(g, vis.memory, {inst[0]}, {ps.masks[0]}).value();
  CHECK(feats.rows() == 32);
  CHECK(feats.cols() == 64);
  CHECK(feats.allFinite());
}

TEST_CASE("extract_pair_features: one layer differs from two") {
  ModelConfig one = oracle::tiny_model_config();
  one.relq_layers = 1;
  ModelConfig two = oracle::tiny_model_config();
  Fixture f1(one, 4);
  Fixture f2(two, 4);
  Graph g(false);
  const auto v1 = f1.model->encode(g, f1.scene.image);
  const auto v2 = f2.model->encode(g, f2.scene.image);
  const auto ps = f1.model->pairs_for(f1.scene.objects, v1.grid_height, v1.grid_width);
  const auto inst = f1.instructions(ps, text::BankKind::PairFeature);
  const Mat a = f1.model->relq().extract_pair_features(g, v1.memory, inst, ps.masks).value();
  const Mat b = f2.model->relq().extract_pair_features(g, v2.memory, inst, ps.masks).value();
  CHECK((a - b).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("pair_block: output keeps exactly the query rows") {
  Fixture f;
  Graph g(false);
  const auto vis = f.model->encode(g, f.scene.image);
  const auto ps = f.model->pairs_for(f.scene.objects, vis.grid_height, vis.grid_width);
  const int e = f.model->config().queries;
  const auto& relq = f.model->relq();
  const std::vector<std::vector<int>> ids{f.model->vocab().tokenize("please"),
                                          f.model->vocab().tokenize("please extract features for the pair")};
  for (const auto& inst_ids : ids) {
    Var inst = relq.embed_instruction(g, inst_ids);
    Var state = g.constant(Mat::Random(e, f.model->config().dim));
    Var out = relq.pair_block(g, Stack::Feature, 0, state, e, {inst}, vis.memory, {ps.masks[0]});
    CHECK(out.rows() == e);
  }
}

TEST_CASE("pair_block: empty mask is rejected") {
  Fixture f;
  Graph g(false);
  const auto vis = f.model->encode(g, f.scene.image);
  const auto& relq = f.model->relq();
  Var inst = relq.embed_instruction(g, f.model->vocab().tokenize("please"));
  Var state = g.constant(Mat::Zero(1, f.model->config().dim));
  seg::MaskRow empty(static_cast<std::size_t>(vis.memory.length), 0);
  CHECK_THROWS_AS(relq.pair_block(g, Stack::Existence, 0, state, 1, {inst}, vis.memory, {empty}), ValidationError);
}

TEST_CASE("mask respect: zero attention on masked tokens in every layer and head") {
  std::mt19937_64 rng(8);
  const std::vector<std::string> classes{"red circle", "blue square", "green triangle"};
  Fixture f;
  for (int t = 0; t < 10; ++t) {
    auto scene = oracle::random_scene(3, 32, 32, classes, rng);
    Graph g(false);
    ad::AttentionRecorder rec;
    g.recorder = &rec;
    const auto vis = f.model->encode(g, scene.image);
    const auto ps = f.model->pairs_for(scene.objects, vis.grid_height, vis.grid_width);
    f.model->relq().extract_pair_features(g, vis.memory, f.instructions(ps, text::BankKind::PairFeature), ps.masks);
    f.model->relq().existence_logits(g, vis.memory, f.instructions(ps, text::BankKind::RelationExistence), ps.masks);
    int masked_calls = 0;
    for (const auto& call : rec.calls) {
      for (std::size_t gi = 0; gi < call.key_masks.size(); ++gi) {
        const auto& mask = call.key_masks[gi];
        if (mask.empty()) continue;
        ++masked_calls;
        for (int h = 0; h < call.heads; ++h) {
          const Mat& w = call.weights[gi * static_cast<std::size_t>(call.heads) + static_cast<std::size_t>(h)];
          for (std::size_t c = 0; c < mask.size(); ++c) {
            if (!mask[c]) CHECK(w.col(static_cast<Eigen::Index>(c)).cwiseAbs().maxCoeff() == 0.0);
          }
        }
      }
    }
    CHECK(masked_calls == static_cast<int>(ps.size()) * f.model->config().relq_layers * 2);
  }
}

TEST_CASE("existence: scores in (0,1); zeroed head gives 0.5; matches sequential") {
  Fixture f;
  Graph g(false);
  const auto vis = f.model->encode(g, f.scene.image);
  const auto ps = f.model->pairs_for(f.scene.objects, vis.grid_height, vis.grid_width);
  const auto inst = f.instructions(ps, text::BankKind::RelationExistence);
  const Mat logits = f.model->relq().existence_logits(g, vis.memory, inst, ps.masks).value();
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double s = sigmoid(logits(i, 0));
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
  for (auto& [name, p] : f.model->params().items()) {
    if (name.rfind("relq.exist_head.fc2", 0) == 0) p.value.setZero();
  }
  Graph h(false);
  const auto v2 = f.model->encode(h, f.scene.image);
  const Mat zero = f.model->relq().existence_logits(h, v2.memory, inst, ps.masks).value();
  for (Eigen::Index i = 0; i < zero.rows(); ++i) CHECK(sigmoid(zero(i, 0)) == 0.5);
}

TEST_CASE("select_pairs: strict threshold and range cases") {
  seg::PairSet ps;
  ps.pairs = {{0, 1}, {1, 0}, {0, 2}};
  ps.categories = {{"a", "b"}, {"b", "a"}, {"a", "c"}};
  ps.masks = {{1}, {1}, {1}};
  const auto kept = select_pairs(ps, {0.1, 0.4, 0.35}, SelectorConfig{0.35});
  REQUIRE(kept.size() == 1);
  CHECK(kept.pairs[0] == std::pair<int, int>{1, 0});
  CHECK(select_pairs(ps, {0.1, 0.4, 0.35}, SelectorConfig{0.0}).size() == 3);
  CHECK(select_pairs(ps, {0.1, 0.4, 0.35}, SelectorConfig{1.0}).size() == 0);
  CHECK_THROWS_AS(select_pairs(ps, {0.1, 0.4}, SelectorConfig{0.35}), ValidationError);
}

TEST_CASE("select_pairs: monotone in theta") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(1e-6, 1.0 - 1e-6);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> scores(30);
    for (auto& s : scores) s = u(rng);
    double a = u(rng);
    double b = u(rng);
    if (a > b) std::swap(a, b);
    const auto lo = selected_indices(scores, a);
    const auto hi = selected_indices(scores, b);
    CHECK(std::includes(lo.begin(), lo.end(), hi.begin(), hi.end()));
  }
}

TEST_CASE("permutation consistency: relabeling objects permutes pair features") {
  Fixture f;
  Graph g(false);
  const auto vis = f.model->encode(g, f.scene.image);
  const auto ps = f.model->pairs_for(f.scene.objects, vis.grid_height, vis.grid_width);
  const Mat a = f.model->relq()
                    .extract_pair_features(g, vis.memory, f.instructions(ps, text::BankKind::PairFeature), ps.masks)
                    .value();
  std::vector<int> perm(f.scene.objects.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::vector<ObjectInstance> shuffled;
  for (int i : perm) shuffled.push_back(f.scene.objects[static_cast<std::size_t>(i)]);
  const auto ps2 = f.model->pairs_for(shuffled, vis.grid_height, vis.grid_width);
  const Mat b = f.model->relq()
                    .extract_pair_features(g, vis.memory, f.instructions(ps2, text::BankKind::PairFeature), ps2.masks)
                    .value();
  const int e = f.model->config().queries;
  for (std::size_t p = 0; p < ps2.size(); ++p) {
    const std::pair<int, int> orig{perm[static_cast<std::size_t>(ps2.pairs[p].first)],
                                   perm[static_cast<std::size_t>(ps2.pairs[p].second)]};
    const auto q = static_cast<Eigen::Index>(std::find(ps.pairs.begin(), ps.pairs.end(), orig) - ps.pairs.begin());
    CHECK((a.middleRows(q * e, e) - b.middleRows(static_cast<Eigen::Index>(p) * e, e)).cwiseAbs().maxCoeff() <=
          1e-12);
  }
}

TEST_CASE("gradient check: every relq-former and encoder parameter") {
  ModelConfig cfg = oracle::tiny_model_config();
  cfg.queries = 2;
  Fixture f(cfg, 9);
  SceneRecord scene = f.scene;
  scene.objects.resize(2);
  std::mt19937_64 rng(2);
  Graph probe(false);
  const auto pv = f.model->encode(probe, scene.image);
  const auto ps = f.model->pairs_for(scene.objects, pv.grid_height, pv.grid_width);
  const auto fi = f.instructions(ps, text::BankKind::PairFeature);
  const auto ei = f.instructions(ps, text::BankKind::RelationExistence);
  const Mat proj = ad::normal_init(static_cast<Eigen::Index>(ps.size()) * cfg.queries, cfg.dim, 1.0, rng);
  auto run = [&](bool grad) {
    Graph g(grad);
    const auto vis = f.model->encode(g, scene.image);
    Var feats = f.model->relq().extract_pair_features(g, vis.memory, fi, ps.masks);
    Var logits = f.model->relq().existence_logits(g, vis.memory, ei, ps.masks);
    Var loss = ad::add(total(g, ad::mul(feats, g.constant(proj))), ad::bce_with_logits(logits, {1.0, 0.0}));
    if (grad) g.backward(loss);
    return loss.scalar();
  };
  std::vector<std::string> names;
  for (const auto& [name, p] : f.model->params().items()) {
    if (name.rfind("relq.", 0) == 0 || name.rfind("encoder.", 0) == 0) names.push_back(name);
  }
  const auto check = oracle::finite_difference_check(f.model->params(), names, [&] { return run(false); },
                                                     [&] { run(true); }, 1e-5, 24, 1, 1e-5);
  INFO(check.worst);
  CHECK(check.checked > 500);
  CHECK(check.max_rel_error < 1e-4);
}
