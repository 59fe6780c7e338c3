#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace openrel {

// Dense binary grid, row-major.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int h, int w) : height(h), width(w), bits(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t at(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  void set(int y, int x, std::uint8_t v = 1) { bits[static_cast<std::size_t>(y) * width + x] = v; }
  std::size_t area() const;
  bool operator==(const BinaryMask&) const = default;
};

// RGB image in [0,1], stored interleaved row-major (H x W x 3).
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> rgb;

  Image() = default;
  Image(int h, int w) : height(h), width(w), rgb(static_cast<std::size_t>(h) * w * 3, 0.0F) {}
  float at(int y, int x, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float& at(int y, int x, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  bool operator==(const Image&) const = default;
};

struct ObjectInstance {
  int instance_id = 0;
  std::string category;
  BinaryMask mask;
  bool operator==(const ObjectInstance&) const = default;
};

struct Triplet {
  int subject_id = 0;
  int object_id = 0;
  std::string relation;
  // Absent for ground truth, mandatory for predictions.
  std::optional<double> score;
  bool operator==(const Triplet&) const = default;
};

struct SceneRecord {
  std::string scene_id;
  Image image;
  std::vector<ObjectInstance> objects;
  std::vector<Triplet> gt_triplets;

  int height() const { return image.height; }
  int width() const { return image.width; }
  // Index of the object with this instance id, or -1.
  int index_of(int instance_id) const;
  bool operator==(const SceneRecord&) const = default;
};

// Lowercase, trim, collapse internal whitespace runs to one space.
std::string normalize_name(std::string_view name);

struct RelationVocabulary {
  std::vector<std::string> base;
  std::vector<std::string> novel;

  std::vector<std::string> all() const;
  bool is_base(std::string_view name) const;
  bool is_novel(std::string_view name) const;
  bool contains(std::string_view name) const { return is_base(name) || is_novel(name); }
  bool operator==(const RelationVocabulary&) const = default;
};

// Throws ValidationError if names collide after normalization within or across
// the two lists. Stores normalized names.
RelationVocabulary make_relation_vocabulary(const std::vector<std::string>& base,
                                            const std::vector<std::string>& novel);

// Deterministic base/novel partition: |base| = round(ratio * |all|), each list
// keeps the input order.
RelationVocabulary split_vocabulary(const std::vector<std::string>& all_relations, double ratio,
                                    std::uint64_t seed);

struct FixedSplitReport {
  RelationVocabulary vocabulary;
  // Normalized names that appeared more than once; cross-list collisions are
  // kept on the novel side.
  std::vector<std::string> collisions;
  std::size_t raw_base_count = 0;
  std::size_t raw_novel_count = 0;
};

// Loads hand-written base/novel lists verbatim and reports normalization
// collisions instead of failing.
FixedSplitReport load_fixed_split(const std::vector<std::string>& base_raw,
                                  const std::vector<std::string>& novel_raw);

// Published PSG base/novel lists, verbatim (including the trailing-space
// "walking on " entry).
const std::vector<std::string>& psg_base_relations_raw();
const std::vector<std::string>& psg_novel_relations_raw();

// Validates every type invariant of a record; throws ValidationError naming
// the scene id.
void validate_scene(const SceneRecord& scene);

}  // namespace openrel
