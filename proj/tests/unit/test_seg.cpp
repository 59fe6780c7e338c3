#include <doctest.h>

#include <random>

#include "openrel/core/errors.hpp"
#include "openrel/seg/adapter.hpp"
#include "oracles.hpp"

using namespace openrel;
using namespace openrel::seg;

namespace {

ObjectInstance object_with(BinaryMask m, int id = 0) {
  ObjectInstance o;
  o.instance_id = id;
  o.category = "thing";
  o.mask = std::move(m);
  return o;
}

struct EncoderFixture {
  ad::ParamStore store;
  EncoderConfig cfg{32, 4, 2};
  std::unique_ptr<SceneEncoder> enc;
  EncoderFixture() {
    std::mt19937_64 rng(1);
    SceneEncoder::init_params(store, cfg, rng);
    enc = std::make_unique<SceneEncoder>(cfg, store);
  }
};

}  // namespace

TEST_CASE("encode_scene: 64x64 image, stride 4, D=32 gives a 16x16x32 grid") {
  EncoderFixture f;
  SceneRecord rec;
  rec.image = Image(64, 64);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(0.0F, 1.0F);
  for (auto& v : rec.image.rgb) v = u(rng);
  const auto grid = f.enc->encode_scene(rec);
  CHECK(grid.height == 16);
  CHECK(grid.width == 16);
  CHECK(grid.dim == 32);
  CHECK(grid.values.rows() == 256);
  CHECK(grid.values.cols() == 32);
  const auto again = f.enc->encode_scene(rec);
  CHECK((grid.values.array() == again.values.array()).all());
}

TEST_CASE("encode_scene: all-zero image gives finite output") {
  EncoderFixture f;
  SceneRecord rec;
  rec.image = Image(64, 64);
  const auto grid = f.enc->encode_scene(rec);
  CHECK(grid.values.allFinite());
}

TEST_CASE("encode_scene: non-divisible dims name the padding") {
  EncoderFixture f;
  SceneRecord rec;
  rec.image = Image(62, 64);
  try {
    f.enc->encode_scene(rec);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
}

TEST_CASE("patchify: h=w=16, p=8 gives 4 tokens") {
  FeatureGrid g{16, 16, 4, ad::Mat::Random(256, 4)};
  const auto t = patchify(g, 8, ad::Mat::Random(8 * 8 * 4, 4), ad::Mat::Zero(1, 4));
  CHECK(t.length() == 4);
  CHECK(t.tokens.rows() == 4);
}

TEST_CASE("patchify: p=1 with identity projection returns the grid rows") {
  FeatureGrid g{4, 6, 5, ad::Mat::Random(24, 5)};
  const auto t = patchify(g, 1, ad::Mat::Identity(5, 5), ad::Mat::Zero(1, 5));
  CHECK((t.tokens.array() == g.values.array()).all());
}

TEST_CASE("patchify: h=w=16, p=5 is rejected") {
  FeatureGrid g{16, 16, 4, ad::Mat::Random(256, 4)};
  CHECK_THROWS_AS(patchify(g, 5, ad::Mat::Random(100, 4), ad::Mat::Zero(1, 4)), ValidationError);
}

TEST_CASE("patchify: token count is (h/p)(w/p) for valid shapes") {
  for (int h : {2, 4, 8, 12}) {
    for (int w : {2, 4, 6, 8}) {
      for (int p : {1, 2}) {
        FeatureGrid g{h, w, 3, ad::Mat::Random(h * w, 3)};
        const auto t = patchify(g, p, ad::Mat::Random(p * p * 3, 3), ad::Mat::Zero(1, 3));
        CHECK(t.length() == (h / p) * (w / p));
        CHECK(t.tokens.rows() == (h / p) * (w / p));
      }
    }
  }
}

TEST_CASE("downsample: top-left 2x2 block of a 4x4 mask gives [1,0,0,0]") {
  BinaryMask m(4, 4);
  m.set(0, 0);
  m.set(0, 1);
  m.set(1, 0);
  m.set(1, 1);
  const auto seq = downsample_masks({object_with(m)}, 2, 2);
  CHECK(seq.rows[0] == MaskRow{1, 0, 0, 0});
}

TEST_CASE("downsample: all-ones mask gives an all-ones row") {
  BinaryMask m(10, 14);
  for (auto& b : m.bits) b = 1;
  const auto seq = downsample_masks({object_with(m)}, 3, 5);
  CHECK(seq.rows[0] == MaskRow(15, 1));
}

TEST_CASE("downsample: matches the brute-force nearest-pixel oracle") {
  // Single pixel at (0,0) of 16x16 onto 2x2: no cell samples it, so the
  // nearest-neighbour row is empty and the force-set rule picks cell 0.
  BinaryMask single(16, 16);
  single.set(0, 0);
  CHECK(oracle::downsample_brute_force(single, 2, 2) == MaskRow{0, 0, 0, 0});
  CHECK(downsample_masks({object_with(single)}, 2, 2).rows[0] == MaskRow{1, 0, 0, 0});

  // Every single-pixel position and a range of target grids.
  for (int th : {1, 2, 3, 5, 8}) {
    for (int tw : {2, 3, 4, 7}) {
      for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
          BinaryMask m(16, 16);
          m.set(y, x);
          const auto expect = oracle::downsample_brute_force(m, th, tw);
          const auto got = downsample_masks({object_with(m)}, th, tw).rows[0];
          if (std::count(expect.begin(), expect.end(), 1) > 0) {
            CHECK(got == expect);
          } else {
            CHECK(std::count(got.begin(), got.end(), 1) == 1);
          }
        }
      }
    }
  }
  // Random masks.
  std::mt19937_64 rng(9);
  std::bernoulli_distribution bit(0.4);
  for (int t = 0; t < 50; ++t) {
    BinaryMask m(13, 11);
    for (auto& b : m.bits) b = bit(rng) ? 1 : 0;
    const auto expect = oracle::downsample_brute_force(m, 4, 3);
    if (std::count(expect.begin(), expect.end(), 1) == 0) continue;
    CHECK(downsample_masks({object_with(m)}, 4, 3).rows[0] == expect);
  }
}

TEST_CASE("downsample: nearest index formula agrees with the oracle on every axis size") {
  for (int s = 1; s <= 40; ++s) {
    for (int t = 1; t <= 12; ++t) {
      for (int i = 0; i < t; ++i) {
        const double c = (i + 0.5) * s / t;
        int best = 0;
        double bd = 1e9;
        for (int k = 0; k < s; ++k) {
          const double d = std::abs(k + 0.5 - c);
          if (d < bd - 1e-12) {
            bd = d;
            best = k;
          }
        }
        CHECK(nearest_source_index(i, s, t) == best);
      }
    }
  }
}

TEST_CASE("make_pairs: N=3 gives 6 pairs, N=1 none") {
  std::mt19937_64 rng(4);
  const std::vector<std::string> classes{"a", "b"};
  auto s3 = oracle::random_scene(3, 8, 8, classes, rng);
  CHECK(make_pairs(s3.objects, downsample_masks(s3.objects, 4, 4)).size() == 6);
  auto s1 = oracle::random_scene(1, 8, 8, classes, rng);
  CHECK(make_pairs(s1.objects, downsample_masks(s1.objects, 4, 4)).size() == 0);
}

TEST_CASE("make_pairs: OR oracle and pair-set properties on random scenes") {
  std::mt19937_64 rng(5);
  const std::vector<std::string> classes{"red circle", "blue square", "green triangle"};
  for (int trial = 0; trial < 200; ++trial) {
    const int n = static_cast<int>(rng() % 11);
    const auto s = oracle::random_scene(n, 12, 12, classes, rng);
    const auto seq = downsample_masks(s.objects, 3, 3);
    const auto ps = make_pairs(s.objects, seq);
    const auto expect = oracle::pairs_brute_force(seq.rows);
    REQUIRE(ps.size() == static_cast<std::size_t>(n * (n - 1)));
    CHECK(ps.pairs == expect.pairs);
    CHECK(ps.masks == expect.rows);
    for (std::size_t p = 0; p < ps.size(); ++p) {
      const auto [i, j] = ps.pairs[p];
      CHECK(i != j);
      CHECK(ps.categories[p].first == s.objects[static_cast<std::size_t>(i)].category);
      CHECK(ps.categories[p].second == s.objects[static_cast<std::size_t>(j)].category);
      for (std::size_t l = 0; l < ps.masks[p].size(); ++l) {
        CHECK(ps.masks[p][l] >= seq.rows[static_cast<std::size_t>(i)][l]);
        CHECK(ps.masks[p][l] >= seq.rows[static_cast<std::size_t>(j)][l]);
      }
      const auto rev = std::find(ps.pairs.begin(), ps.pairs.end(), std::pair<int, int>{j, i}) - ps.pairs.begin();
      CHECK(ps.masks[static_cast<std::size_t>(rev)] == ps.masks[p]);
    }
  }
}

TEST_CASE("corrupted segmenter keeps ids and mask dimensions") {
  std::mt19937_64 rng(6);
  const std::vector<std::string> classes{"a", "b", "c"};
  const auto s = oracle::random_scene(5, 16, 16, classes, rng);
  std::mt19937_64 r1(1);
  const auto c1 = corrupt_objects(s.objects, classes, 1.0, 1.0, r1);
  REQUIRE(c1.size() == 5);
  for (std::size_t i = 0; i < c1.size(); ++i) {
    CHECK(c1[i].instance_id == s.objects[i].instance_id);
    CHECK(c1[i].category != s.objects[i].category);
    CHECK(c1[i].mask.area() > 0);
  }
  std::mt19937_64 r2(1);
  CHECK(corrupt_objects(s.objects, classes, 1.0, 1.0, r2) == c1);
  std::mt19937_64 r3(1);
  CHECK(corrupt_objects(s.objects, classes, 0.0, 0.0, r3) == s.objects);
}
