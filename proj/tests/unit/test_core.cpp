#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>

#include "openrel/core/dataset_io.hpp"
#include "openrel/core/errors.hpp"
#include "oracles.hpp"

using namespace openrel;

namespace {

std::string two_object_json(int triplet_object_id) {
  Image img(2, 2);
  BinaryMask a(2, 2);
  a.set(0, 0);
  BinaryMask b(2, 2);
  b.set(1, 1);
  nlohmann::json j;
  j["format"] = "openrel-v1";
  j["relations"] = {{"base", {"on"}}, {"novel", nlohmann::json::array()}};
  j["objects"] = {"cup", "table"};
  j["scenes"] = {{{"scene_id", "s0"},
                  {"height", 2},
                  {"width", 2},
                  {"image", "base64:" + base64_encode(image_to_bytes(img))},
                  {"objects",
                   {{{"id", 0}, {"category", "cup"}, {"mask_rle", rle_encode(a)}},
                    {{"id", 1}, {"category", "table"}, {"mask_rle", rle_encode(b)}}}},
                  {"triplets", {{{"sub", 0}, {"obj", triplet_object_id}, {"rel", "on"}}}}}};
  return j.dump();
}

}  // namespace

TEST_CASE("load_dataset: empty scene list gives no records") {
  const auto d = parse_dataset(R"({"format": "openrel-v1", "relations": {"base": [], "novel": []}, "scenes": []})");
  CHECK(d.scenes.empty());
}

TEST_CASE("load_dataset: minimal valid scene") {
  const auto d = parse_dataset(two_object_json(1));
  REQUIRE(d.scenes.size() == 1);
  CHECK(d.scenes[0].objects.size() == 2);
  CHECK(d.scenes[0].gt_triplets.size() == 1);
}

TEST_CASE("load_dataset: dangling triplet id names the scene") {
  try {
    parse_dataset(two_object_json(5));
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("s0") != std::string::npos);
  }
}

TEST_CASE("load_dataset: malformed JSON reports line context") {
  try {
    parse_dataset("{\n  \"format\": \"openrel-v1\",\n  \"scenes\": [ oops ]\n}");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("load_dataset: format field is required") {
  CHECK_THROWS_AS(parse_dataset(R"({"scenes": []})"), ValidationError);
  CHECK_THROWS_AS(parse_dataset(R"({"format": "other", "scenes": []})"), ValidationError);
}

TEST_CASE("mask RLE round trip") {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution bit(0.3);
  for (int t = 0; t < 20; ++t) {
    BinaryMask m(7, 9);
    for (auto& b : m.bits) b = bit(rng) ? 1 : 0;
    CHECK(rle_decode(rle_encode(m), 7, 9) == m);
  }
}

TEST_CASE("serialization round trip through a file") {
  const auto d = oracle::small_synth_dataset(5, 11);
  const auto dir = std::filesystem::temp_directory_path() / "openrel_core_roundtrip";
  std::filesystem::create_directories(dir);
  save_dataset(d, dir / "dataset.json");
  CHECK(load_dataset(dir / "dataset.json") == d);
  CHECK(load_dataset(dir) == d);
  std::filesystem::remove_all(dir);
}

TEST_CASE("normalize_name") {
  CHECK(normalize_name("  Walking   On ") == "walking on");
  CHECK(normalize_name("on") == "on");
  CHECK(normalize_name("") == "");
}

TEST_CASE("split_vocabulary: 10 relations at 0.7 gives 7 + 3, disjoint") {
  std::vector<std::string> all;
  for (int i = 0; i < 10; ++i) all.push_back("rel" + std::to_string(i));
  const auto v = split_vocabulary(all, 0.7, 1);
  CHECK(v.base.size() == 7);
  CHECK(v.novel.size() == 3);
  for (const auto& b : v.base) CHECK(std::find(v.novel.begin(), v.novel.end(), b) == v.novel.end());
  CHECK(split_vocabulary(all, 0.7, 1) == v);
}

TEST_CASE("split_vocabulary: partition for 100 seeds") {
  std::vector<std::string> all;
  for (int i = 0; i < 13; ++i) all.push_back("rel " + std::to_string(i));
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto v = split_vocabulary(all, 0.7, seed);
    std::set<std::string> u(v.base.begin(), v.base.end());
    for (const auto& n : v.novel) CHECK(u.insert(n).second);
    CHECK(u == std::set<std::string>(all.begin(), all.end()));
    CHECK(v.base.size() == 9);
  }
}

TEST_CASE("split_vocabulary: duplicates after normalization are reported") {
  try {
    split_vocabulary({"on", "On ", "under", "in  front", "in front"}, 0.5, 0);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("on") != std::string::npos);
    CHECK(msg.find("in front") != std::string::npos);
  }
}

TEST_CASE("published PSG lists load with collisions reported") {
  const auto report = load_fixed_split(psg_base_relations_raw(), psg_novel_relations_raw());
  CHECK(report.raw_base_count == 41);
  CHECK(report.raw_novel_count == 17);
  CHECK(std::find(report.collisions.begin(), report.collisions.end(), "walking on") != report.collisions.end());
  CHECK(report.vocabulary.base.size() + report.vocabulary.novel.size() == 57);
  CHECK(report.vocabulary.base.size() == 40);
  CHECK(report.vocabulary.novel.size() == 17);
  CHECK(report.vocabulary.is_base("over"));
}

TEST_CASE("every gt pair appears in the pair enumeration") {
  const auto d = oracle::small_synth_dataset(30, 5);
  for (const auto& s : d.scenes) {
    const auto seq = seg::downsample_masks(s.objects, 8, 8);
    const auto ps = seg::make_pairs(s.objects, seq);
    for (const auto& t : s.gt_triplets) {
      const std::pair<int, int> key{s.index_of(t.subject_id), s.index_of(t.object_id)};
      CHECK(std::find(ps.pairs.begin(), ps.pairs.end(), key) != ps.pairs.end());
    }
  }
}
