#include <doctest.h>

#include <cmath>
#include <random>

#include "openrel/core/errors.hpp"
#include "openrel/decoder/relation_decoder.hpp"
#include "oracles.hpp"

using namespace openrel;
using namespace openrel::decoder;
using ad::Graph;
using ad::Mat;
using ad::RowVec;
using text::TextVocabulary;

namespace {

struct Fixture {
  Dataset data = oracle::small_synth_dataset(2, 4);
  std::unique_ptr<Model> model = oracle::tiny_model(data.relations, data.object_classes, 11);
  std::mt19937_64 rng{17};

  Mat features() { return ad::normal_init(model->config().queries, model->config().dim, 1.0, rng); }
  const RelationDecoder& dec() const { return model->decoder(); }
};

// Step function that emits a fixed token sequence and then <eos>.
StepFn scripted(const std::vector<int>& script, int vocab_size) {
  return [script, vocab_size](const std::vector<int>& generated) {
    RowVec logits = RowVec::Zero(vocab_size);
    const int next = generated.size() < script.size() ? script[generated.size()] : TextVocabulary::kEosId;
    logits(next) = 10.0;
    return logits;
  };
}

}  // namespace

TEST_CASE("tokenizer: specials, case folding, punctuation and unknown words") {
  Fixture f;
  const auto& v = f.model->vocab();
  CHECK(v.id("<pad>") == 0);
  CHECK(v.id("<bos>") == 1);
  CHECK(v.id("<eos>") == 2);
  CHECK(v.id("[SEP]") == 3);
  CHECK(v.id("Yes") == 4);
  CHECK(v.id("No") == 5);
  const auto ids = v.tokenize("Left of[SEP]above.");
  REQUIRE(ids.size() == 5);
  CHECK(ids[2] == TextVocabulary::kSepId);
  CHECK(v.detokenize(ids) == "left of [SEP] above .");
  CHECK(TextVocabulary::split_words("pop shove-it") == std::vector<std::string>{"pop", "shove", "-", "it"});
  CHECK_THROWS_AS(v.tokenize("zebra"), ValidationError);
}

TEST_CASE("greedy decoding: stops on <eos> and splits on [SEP]") {
  Fixture f;
  const auto& v = f.model->vocab();
  const int n = v.size();
  const int left = v.id("left");
  const int of = v.id("of");
  const int above = v.id("above");

  auto r1 = greedy_decode(scripted({left, of}, n), v, 8);
  REQUIRE(r1.relations.size() == 1);
  CHECK(r1.relations[0].text == "left of");
  CHECK_FALSE(r1.truncated);

  auto r2 = greedy_decode(scripted({left, of, TextVocabulary::kSepId, above}, n), v, 8);
  REQUIRE(r2.relations.size() == 2);
  CHECK(r2.relations[0].text == "left of");
  CHECK(r2.relations[1].text == "above");

  auto r3 = greedy_decode(scripted({TextVocabulary::kSepId, above, TextVocabulary::kSepId, TextVocabulary::kSepId}, n),
                          v, 8);
  REQUIRE(r3.relations.size() == 1);
  CHECK(r3.relations[0].text == "above");

  auto r4 = greedy_decode(scripted({left, left, left, left, left}, n), v, 3);
  CHECK(r4.truncated);
  CHECK(r4.ids.size() == 3);

  auto r5 = greedy_decode(scripted({}, n), v, 8);
  CHECK(r5.relations.empty());
}

TEST_CASE("generation score is the mean token log-probability") {
  Fixture f;
  const auto& v = f.model->vocab();
  const auto res = split_generation({v.id("left"), v.id("of"), TextVocabulary::kSepId, v.id("above")},
                                    {-0.2, -0.4, -0.1, -1.0}, v, false);
  REQUIRE(res.relations.size() == 2);
  CHECK(res.relations[0].score == doctest::Approx(-0.3));
  CHECK(res.relations[1].score == doctest::Approx(-1.0));
}

TEST_CASE("beam search finds a better sequence than greedy") {
  Fixture f;
  const auto& v = f.model->vocab();
  const int n = v.size();
  const int a = v.id("left");
  const int b = v.id("above");
  // Greedy picks `a` (p 0.6) and then faces a flat distribution; `b` (p 0.4)
  // is followed by a confident <eos>.
  StepFn step = [&](const std::vector<int>& gen) {
    RowVec logits = RowVec::Constant(n, -30.0);
    if (gen.empty()) {
      logits(a) = std::log(0.6);
      logits(b) = std::log(0.4);
    } else if (gen[0] == a) {
      logits.setZero();
    } else {
      logits(TextVocabulary::kEosId) = 0.0;
    }
    return logits;
  };
  const auto greedy = greedy_decode(step, v, 4);
  const auto beam = beam_decode(step, v, 4, 2);
  REQUIRE(beam.relations.size() == 1);
  CHECK(beam.relations[0].text == "above");
  CHECK(greedy.ids.front() == a);
  const auto one = beam_decode(step, v, 4, 1);
  CHECK(one.ids == greedy.ids);
}

TEST_CASE("judge_from_logits: softmax over Yes/No, strict threshold") {
  auto r = judge_from_logits(2.0, 1.0);
  CHECK(r.verdict);
  CHECK(r.p_yes == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
  auto tie = judge_from_logits(0.7, 0.7);
  CHECK(tie.p_yes == 0.5);
  CHECK_FALSE(tie.verdict);
  CHECK_FALSE(judge_from_logits(-3.0, 1.0).verdict);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 5.0);
  for (int i = 0; i < 100; ++i) {
    const double y = nd(rng);
    const double n = nd(rng);
    const auto p = judge_from_logits(y, n);
    const auto q = judge_from_logits(n, y);
    CHECK(p.p_yes + q.p_yes == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.p_yes >= 0.0);
    CHECK(p.p_yes <= 1.0);
  }
}

TEST_CASE("prefix cache: length and reuse") {
  Fixture f;
  const Mat feats = f.features();
  const auto cache = f.dec().build_prefix(feats, "red circle", "blue square");
  std::vector<int> tail;
  const auto ids = f.dec().judgement_prefix_ids("red circle", "blue square", 0, &tail);
  CHECK(cache.length == f.model->config().queries + static_cast<int>(ids.size()));
  CHECK(cache.k.size() == static_cast<std::size_t>(f.model->config().decoder_layers));
  for (const auto& k : cache.k) CHECK(k.rows() == cache.length);
  CHECK(ids.front() == TextVocabulary::kBosId);
  const auto again = f.dec().build_prefix(feats, "red circle", "blue square");
  for (std::size_t l = 0; l < cache.k.size(); ++l) {
    CHECK(cache.k[l] == again.k[l]);
    CHECK(cache.v[l] == again.v[l]);
  }
}

TEST_CASE("prefix cache: cached and uncached judgements agree") {
  Fixture f;
  const auto relations = f.model->relations().all();
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const Mat feats = f.features();
    const auto& cls = f.model->object_classes();
    const auto& s = cls[static_cast<std::size_t>(t) % cls.size()];
    const auto& o = cls[static_cast<std::size_t>(t + 1) % cls.size()];
    const auto& rel = relations[static_cast<std::size_t>(t) % relations.size()];
    const auto cache = f.dec().build_prefix(feats, s, o);
    const auto cached = f.dec().judge_relation(cache, rel);
    const auto full = f.dec().judge_uncached(feats, s, o, rel);
    worst = std::max(worst, std::abs(cached.yes_logit - full.yes_logit));
    worst = std::max(worst, std::abs(cached.no_logit - full.no_logit));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("judge_relations: batched equals one at a time") {
  Fixture f;
  const auto relations = f.model->relations().all();
  const auto c1 = f.dec().build_prefix(f.features(), "red circle", "blue square");
  const auto c2 = f.dec().build_prefix(f.features(), "blue square", "red circle");
  const auto batch = f.dec().judge_relations({&c1, &c2}, relations);
  REQUIRE(batch.size() == 2 * relations.size());
  for (std::size_t r = 0; r < relations.size(); ++r) {
    CHECK(std::abs(batch[r].yes_logit - f.dec().judge_relation(c1, relations[r]).yes_logit) < 1e-12);
    CHECK(std::abs(batch[relations.size() + r].no_logit - f.dec().judge_relation(c2, relations[r]).no_logit) < 1e-12);
  }
}

TEST_CASE("decoder is causal: later tokens do not change earlier logits") {
  Fixture f;
  const Mat feats = f.features();
  auto ids = f.dec().generation_prompt_ids("red circle", "blue square", 0);
  Graph g(false);
  const Mat a = f.dec().forward_full(g, g.constant(feats), ids).value();
  const auto cut = ids.size() / 2;
  for (std::size_t i = cut; i < ids.size(); ++i) ids[i] = f.model->vocab().id("above");
  const Mat b = f.dec().forward_full(g, g.constant(feats), ids).value();
  const auto keep = static_cast<Eigen::Index>(feats.rows()) + static_cast<Eigen::Index>(cut);
  CHECK((a.topRows(keep) - b.topRows(keep)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.bottomRows(a.rows() - keep) - b.bottomRows(b.rows() - keep)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("gradient check: decoder parameters through prefix and suffix passes") {
  Fixture f;
  const Mat feats = f.features();
  const auto prefix = f.dec().judgement_prefix_ids("red circle", "blue square", 0, nullptr);
  const auto rel = f.model->vocab().tokenize("left of");
  std::vector<int> targets(rel.size(), -1);
  targets.back() = TextVocabulary::kYesId;
  auto run = [&](bool grad) {
    Graph g(grad);
    const auto st = f.dec().forward_prefix(g, g.constant(feats), static_cast<int>(feats.rows()), {prefix});
    const auto logits = f.dec().forward_suffix(g, st, {0}, {rel});
    auto loss = ad::cross_entropy(logits, targets, -1);
    const auto full = f.dec().forward_full(g, g.constant(feats), prefix);
    std::vector<int> lm(static_cast<std::size_t>(full.rows()), -1);
    for (std::size_t i = feats.rows(); i + 1 < lm.size(); ++i) lm[i] = prefix[i + 1 - feats.rows()];
    loss = ad::add(loss, ad::cross_entropy(full, lm, -1));
    if (grad) g.backward(loss);
    return loss.scalar();
  };
  std::vector<std::string> names;
  for (const auto& [name, p] : f.model->params().items()) {
    if (name.rfind("decoder.", 0) == 0) names.push_back(name);
  }
  const auto check = oracle::finite_difference_check(f.model->params(), names, [&] { return run(false); },
                                                     [&] { run(true); }, 1e-5, 24, 2, 1e-5);
  INFO(check.worst);
  CHECK(check.checked > 300);
  CHECK(check.max_rel_error < 1e-4);
}

TEST_CASE("decode_generate: bounded by max_len and deterministic") {
  Fixture f;
  const Mat feats = f.features();
  const auto a = f.dec().decode_generate(feats, "red circle", "blue square");
  const auto b = f.dec().decode_generate(feats, "red circle", "blue square");
  CHECK(a.ids == b.ids);
  CHECK(a.ids.size() <= static_cast<std::size_t>(f.model->config().max_len));
}
