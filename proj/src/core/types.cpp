#include "openrel/core/types.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "openrel/core/errors.hpp"

namespace openrel {

std::size_t BinaryMask::area() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

int SceneRecord::index_of(int instance_id) const {
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (objects[i].instance_id == instance_id) return static_cast<int>(i);
  }
  return -1;
}

std::string normalize_name(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  bool pending_space = false;
  for (char ch : name) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::vector<std::string> RelationVocabulary::all() const {
  std::vector<std::string> out = base;
  out.insert(out.end(), novel.begin(), novel.end());
  return out;
}

bool RelationVocabulary::is_base(std::string_view name) const {
  return std::find(base.begin(), base.end(), name) != base.end();
}

bool RelationVocabulary::is_novel(std::string_view name) const {
  return std::find(novel.begin(), novel.end(), name) != novel.end();
}

namespace {

std::string join(const std::vector<std::string>& items) {
  std::ostringstream os;
  for (std::size_t i = 0; i < items.size(); ++i) os << (i ? ", " : "") << '"' << items[i] << '"';
  return os.str();
}

// Normalized-name -> raw spellings, for collision reports.
std::vector<std::string> find_collisions(const std::vector<std::string>& names) {
  std::map<std::string, int> counts;
  for (const auto& n : names) ++counts[normalize_name(n)];
  std::vector<std::string> out;
  for (const auto& [k, v] : counts) {
    if (v > 1) out.push_back(k);
  }
  return out;
}

}  // namespace

RelationVocabulary make_relation_vocabulary(const std::vector<std::string>& base,
                                            const std::vector<std::string>& novel) {
  std::vector<std::string> all = base;
  all.insert(all.end(), novel.begin(), novel.end());
  const auto collisions = find_collisions(all);
  if (!collisions.empty()) {
    throw ValidationError("relation names collide after normalization: " + join(collisions));
  }
  RelationVocabulary v;
  for (const auto& n : base) {
    auto norm = normalize_name(n);
    if (norm.empty()) throw ValidationError("empty relation name in base list");
    v.base.push_back(std::move(norm));
  }
  for (const auto& n : novel) {
    auto norm = normalize_name(n);
    if (norm.empty()) throw ValidationError("empty relation name in novel list");
    v.novel.push_back(std::move(norm));
  }
  return v;
}

RelationVocabulary split_vocabulary(const std::vector<std::string>& all_relations, double ratio,
                                    std::uint64_t seed) {
  if (all_relations.empty()) throw ValidationError("split_vocabulary: empty relation list");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("split_vocabulary: ratio must be in (0,1)");
  const auto collisions = find_collisions(all_relations);
  if (!collisions.empty()) {
    throw ValidationError("relation names collide after normalization: " + join(collisions));
  }
  const std::size_t n = all_relations.size();
  const auto n_base = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> in_base(n, false);
  for (std::size_t i = 0; i < n_base; ++i) in_base[order[i]] = true;

  RelationVocabulary v;
  for (std::size_t i = 0; i < n; ++i) {
    (in_base[i] ? v.base : v.novel).push_back(normalize_name(all_relations[i]));
  }
  return v;
}

FixedSplitReport load_fixed_split(const std::vector<std::string>& base_raw,
                                  const std::vector<std::string>& novel_raw) {
  FixedSplitReport report;
  report.raw_base_count = base_raw.size();
  report.raw_novel_count = novel_raw.size();

  std::vector<std::string> all = base_raw;
  all.insert(all.end(), novel_raw.begin(), novel_raw.end());
  report.collisions = find_collisions(all);

  std::set<std::string> novel_seen;
  for (const auto& n : novel_raw) {
    auto norm = normalize_name(n);
    if (norm.empty() || !novel_seen.insert(norm).second) continue;
    report.vocabulary.novel.push_back(std::move(norm));
  }
  std::set<std::string> base_seen;
  for (const auto& n : base_raw) {
    auto norm = normalize_name(n);
    if (norm.empty() || novel_seen.count(norm) || !base_seen.insert(norm).second) continue;
    report.vocabulary.base.push_back(std::move(norm));
  }
  return report;
}

const std::vector<std::string>& psg_base_relations_raw() {
  static const std::vector<std::string> k = {
      "over",         "in front of", "beside",       "on",           "in",
      "hanging from", "on back of",  "going down",   "painted on",   "walking on",
      "running on",   "crossing",    "lying on",     "sitting on",   "jumping over",
      "jumping from", "holding",     "carrying",     "guiding",      "kissing",
      "drinking",     "feeding",     "catching",     "picking",      "chasing",
      "climbing",     "playing",     "touching",     "pulling",      "opening",
      "talking to",   "throwing",    "driving",      "riding",       "driving on",
      "about to hit", "swinging",    "entering",     "exiting",      "enclosing",
      "leaning on"};
  return k;
}

const std::vector<std::string>& psg_novel_relations_raw() {
  static const std::vector<std::string> k = {
      "attached to", "falling off",  "walking on ", "standing on", "flying over", "wearing",
      "looking at",  "eating",       "biting",      "playing with", "cleaning",   "pushing",
      "cooking",     "slicing",      "parked on",   "kicking",      "existing"};
  return k;
}

void validate_scene(const SceneRecord& scene) {
  const auto fail = [&](const std::string& what) {
    throw ValidationError("scene '" + scene.scene_id + "': " + what);
  };
  if (scene.image.height <= 0 || scene.image.width <= 0) fail("image dimensions must be positive");
  if (scene.image.rgb.size() != static_cast<std::size_t>(scene.image.height) * scene.image.width * 3) {
    fail("image buffer size does not match H x W x 3");
  }
  std::set<int> ids;
  for (const auto& o : scene.objects) {
    if (!ids.insert(o.instance_id).second) fail("duplicate instance id " + std::to_string(o.instance_id));
    if (o.mask.height != scene.image.height || o.mask.width != scene.image.width) {
      fail("mask of object " + std::to_string(o.instance_id) + " does not match image size");
    }
    if (o.mask.area() == 0) fail("mask of object " + std::to_string(o.instance_id) + " is empty");
    if (normalize_name(o.category).empty()) fail("object " + std::to_string(o.instance_id) + " has no category");
  }
  for (const auto& t : scene.gt_triplets) {
    if (!ids.count(t.subject_id) || !ids.count(t.object_id)) {
      fail("triplet references unknown object id (" + std::to_string(t.subject_id) + ", " +
           std::to_string(t.object_id) + ")");
    }
    if (t.subject_id == t.object_id) fail("triplet subject equals object");
    if (normalize_name(t.relation).empty()) fail("triplet has an empty relation");
  }
}

}  // namespace openrel
