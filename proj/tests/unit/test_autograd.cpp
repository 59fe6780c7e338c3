#include <doctest.h>

#include <random>

#include "openrel/ad/autograd.hpp"
#include "openrel/ad/params.hpp"
#include "openrel/core/errors.hpp"
#include "oracles.hpp"

using namespace openrel;
using namespace openrel::ad;

namespace {

Var total(Graph& g, Var x) {
  return matmul(matmul(g.constant(Mat::Ones(1, x.rows())), x), g.constant(Mat::Ones(x.cols(), 1)));
}

}  // namespace

TEST_CASE("elementwise ops match finite differences") {
  std::mt19937_64 rng(1);
  ParamStore store;
  store.add("a", normal_init(3, 4, 1.0, rng));
  store.add("b", normal_init(3, 4, 1.0, rng));
  store.add("w", normal_init(4, 5, 0.5, rng));
  store.add("bias", normal_init(1, 5, 0.5, rng));
  store.add("g", normal_init(1, 5, 1.0, rng));
  store.add("beta", normal_init(1, 5, 1.0, rng));
  const Mat proj = normal_init(5, 5, 1.0, rng);
  auto run = [&](bool grad) {
    Graph g(grad);
    Var a = g.param(store.get("a"));
    Var b = g.param(store.get("b"));
    Var h = add(mul(a, b), scale(sub(a, gelu(b)), 0.7));
    Var y = linear(h, g.param(store.get("w")), g.param(store.get("bias")));
    y = layer_norm(sigmoid(y), g.param(store.get("g")), g.param(store.get("beta")));
    y = concat_rows({slice_rows(y, 1, 2), gather_rows(y, {0, 0, 2})});
    Var loss = total(g, mul(y, g.constant(proj)));
    if (grad) g.backward(loss);
    return loss.scalar();
  };
  const auto check = oracle::finite_difference_check(store, {"a", "b", "w", "bias", "g", "beta"},
                                                     [&] { return run(false); }, [&] { run(true); });
  INFO(check.worst);
  CHECK(check.max_rel_error < 1e-6);
}

TEST_CASE("attention, im2col and losses match finite differences") {
  std::mt19937_64 rng(2);
  ParamStore store;
  store.add("q", normal_init(5, 4, 1.0, rng));
  store.add("k", normal_init(6, 4, 1.0, rng));
  store.add("v", normal_init(6, 4, 1.0, rng));
  store.add("img", normal_init(16, 2, 1.0, rng));
  std::vector<AttentionGroup> groups(2);
  groups[0] = {0, 2, {{0, 3}}, {1, 0, 1}, -1};
  groups[1] = {2, 3, {{3, 3}, {0, 1}}, {}, 0};
  auto run = [&](bool grad) {
    Graph g(grad);
    Var att = attention(g.param(store.get("q")), g.param(store.get("k")), g.param(store.get("v")), groups, 2);
    Var col = matmul(att, g.constant(Mat::Ones(4, 1)));
    Var cols = im2col(g.param(store.get("img")), 4, 4, 2, 3, 2, 1);
    Var l1 = bce_with_logits(col, {1, 0, 1, 1, 0});
    Var l2 = cross_entropy(cols, {0, 1, -1, 3}, -1);
    Var loss = add(l1, scale(l2, 0.5));
    if (grad) g.backward(loss);
    return loss.scalar();
  };
  const auto check = oracle::finite_difference_check(store, {"q", "k", "v", "img"}, [&] { return run(false); },
                                                     [&] { run(true); });
  INFO(check.worst);
  CHECK(check.max_rel_error < 1e-6);
}

TEST_CASE("bce and cross entropy equal elementwise loops") {
  std::mt19937_64 rng(3);
  const Mat logits = normal_init(7, 1, 2.0, rng);
  std::vector<double> labels{1, 0, 0, 1, 1, 0, 1};
  Graph g(false);
  const double bce = bce_with_logits(g.constant(logits), labels).scalar();
  CHECK(bce == doctest::Approx(oracle::bce_loop({logits.data(), logits.data() + 7}, labels)).epsilon(1e-12));

  const Mat lm = normal_init(6, 9, 3.0, rng);
  const std::vector<int> targets{3, -1, 0, 8, -1, 2};
  const double ce = cross_entropy(g.constant(lm), targets, -1).scalar();
  CHECK(ce == doctest::Approx(oracle::ce_loop(lm, targets, -1)).epsilon(1e-12));
}

TEST_CASE("attention: all-ones mask equals unmasked attention") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    Graph g(false);
    Var q = g.constant(normal_init(3, 8, 1.0, rng));
    Var k = g.constant(normal_init(7, 8, 1.0, rng));
    Var v = g.constant(normal_init(7, 8, 1.0, rng));
    AttentionGroup masked{0, 3, {{0, 7}}, std::vector<std::uint8_t>(7, 1), -1};
    AttentionGroup plain{0, 3, {{0, 7}}, {}, -1};
    const Mat a = attention(q, k, v, {masked}, 4).value();
    const Mat b = attention(q, k, v, {plain}, 4).value();
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("attention: a single visible key gets weight 1 and returns its value") {
  std::mt19937_64 rng(5);
  Graph g(false);
  AttentionRecorder rec;
  g.recorder = &rec;
  const Mat vv = normal_init(6, 8, 1.0, rng);
  Var q = g.constant(normal_init(2, 8, 1.0, rng));
  Var k = g.constant(normal_init(6, 8, 1.0, rng));
  std::vector<std::uint8_t> mask(6, 0);
  mask[4] = 1;
  const Mat out = attention(q, k, g.constant(vv), {{0, 2, {{0, 6}}, mask, -1}}, 4).value();
  for (int r = 0; r < 2; ++r) CHECK((out.row(r) - vv.row(4)).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(rec.calls.size() == 1);
  for (const auto& w : rec.calls[0].weights) {
    for (int r = 0; r < w.rows(); ++r) {
      CHECK(w(r, 4) == 1.0);
      CHECK(w.row(r).sum() == 1.0);
    }
  }
}

TEST_CASE("attention: masked and causal positions get exactly zero weight") {
  std::mt19937_64 rng(6);
  std::bernoulli_distribution bit(0.5);
  for (int t = 0; t < 50; ++t) {
    Graph g(false);
    AttentionRecorder rec;
    g.recorder = &rec;
    std::vector<std::uint8_t> mask(9);
    for (auto& m : mask) m = bit(rng) ? 1 : 0;
    mask[static_cast<std::size_t>(t % 9)] = 1;
    attention(g.constant(normal_init(4, 8, 3.0, rng)), g.constant(normal_init(9, 8, 3.0, rng)),
              g.constant(normal_init(9, 8, 1.0, rng)), {{0, 4, {{0, 9}}, mask, -1}}, 2);
    for (const auto& w : rec.calls[0].weights) {
      for (int c = 0; c < 9; ++c) {
        if (!mask[static_cast<std::size_t>(c)]) CHECK(w.col(c).cwiseAbs().maxCoeff() == 0.0);
      }
    }
  }
  Graph g(false);
  AttentionRecorder rec;
  g.recorder = &rec;
  attention(g.constant(normal_init(4, 4, 1.0, rng)), g.constant(normal_init(6, 4, 1.0, rng)),
            g.constant(normal_init(6, 4, 1.0, rng)), {{0, 4, {{0, 6}}, {}, 2}}, 1);
  const auto& w = rec.calls[0].weights[0];
  for (int r = 0; r < 4; ++r) {
    for (int c = r + 3; c < 6; ++c) CHECK(w(r, c) == 0.0);
  }
}

TEST_CASE("attention: a query with no visible key is an error") {
  Graph g(false);
  Var x = g.constant(Mat::Ones(2, 4));
  CHECK_THROWS(attention(x, x, x, {{0, 2, {{0, 2}}, {0, 0}, -1}}, 1));
}

TEST_CASE("frozen parameters receive no gradient") {
  ParamStore store;
  store.add("enc.w", Mat::Ones(2, 2));
  store.add("dec.w", Mat::Ones(2, 2));
  store.set_frozen("enc", true);
  Graph g(true);
  Var loss = total(g, mul(g.param(store.get("enc.w")), g.param(store.get("dec.w"))));
  g.backward(loss);
  CHECK(store.get("enc.w").grad.cwiseAbs().maxCoeff() == 0.0);
  CHECK(store.get("dec.w").grad.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("AdamW skips frozen parameters and clips the global norm") {
  ParamStore store;
  auto& a = store.add("a.w", Mat::Ones(2, 2));
  auto& b = store.add("b.w", Mat::Ones(2, 2));
  a.grad.setConstant(3.0);
  b.grad.setConstant(4.0);
  const double before = clip_grad_norm(store, 1.0);
  CHECK(before == doctest::Approx(10.0));
  CHECK(store.grad_norm() == doctest::Approx(1.0));
  store.set_frozen("b", true);
  AdamW opt(AdamWConfig{});
  opt.step(store, 0.1);
  CHECK((store.get("b.w").value.array() == 1.0).all());
  CHECK((store.get("a.w").value.array() < 1.0).all());
}
