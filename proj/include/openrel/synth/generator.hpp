#pragma once

// Synthetic shape scenes with rule-defined relations. Every relation is a
// deterministic predicate over the rasterized objects, so ground truth is the
// exhaustive set of predicate-true ordered pairs.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <random>
#include <string>
#include <vector>

#include "openrel/core/dataset_io.hpp"
#include "openrel/core/types.hpp"

namespace openrel::synth {

enum class Shape { Circle, Square, Triangle };

std::string to_string(Shape s);
Shape parse_shape(const std::string& name);

struct Color {
  std::string name;
  float r = 0, g = 0, b = 0;
};

const std::vector<Color>& palette();

// A placed object before rasterization.
struct ShapeSpec {
  Shape shape = Shape::Square;
  int color = 0;  // palette index
  double cx = 0, cy = 0;
  double size = 0;  // square side; circle radius and triangle scaled to equal area
};

BinaryMask rasterize(const ShapeSpec& spec, int height, int width);

// Geometry the predicates look at.
struct Entity {
  BinaryMask mask;
  Shape shape = Shape::Square;
  int color = 0;
};

struct RuleParams {
  int near_gap = 4;           // max pixel gap for left of / above
  double larger_ratio = 1.5;  // area ratio for larger than
};

// A named relation rule. Composite rules are conjunctions of atomic ones
// ("left of and touching").
struct Rule {
  std::string name;
  std::vector<std::string> parts;  // atomic rule names; one entry for atomic rules
};

const std::vector<std::string>& atomic_rule_names();
// All atomic names plus every conjunction the generator can be configured
// with; used to size the text vocabulary.
std::vector<std::string> registry_names();

// Parses "a and b" into its atomic parts; throws for unknown atoms.
Rule make_rule(const std::string& name);
bool evaluate_atomic(const std::string& name, const Entity& a, const Entity& b, const RuleParams& params);
bool evaluate(const Rule& rule, const Entity& a, const Entity& b, const RuleParams& params);

struct SynthConfig {
  int scenes = 100;
  int height = 64;
  int width = 64;
  int min_objects = 3;
  int max_objects = 5;
  std::vector<Shape> shapes{Shape::Circle, Shape::Square, Shape::Triangle};
  std::vector<std::string> colors{"red", "green", "blue", "yellow", "purple", "cyan"};
  std::vector<std::string> base{"left of", "right of", "above", "below", "touching", "inside", "contains",
                                "overlapping"};
  std::vector<std::string> novel;
  // When non-empty, replaces base/novel with a seeded split of these rules
  // (base_ratio of them to base).
  std::vector<std::string> rules;
  double base_ratio = 0.7;
  bool distinct_colors = true;
  double min_size = 8.0;
  double max_size = 18.0;
  // Placement mix: probability of a touching placement and of an inside
  // placement; the rest are free (non-overlapping) placements.
  double touch_prob = 0.2;
  double inside_prob = 0.1;
  double overlap_prob = 0.08;
  RuleParams rule_params;
  int max_retries = 200;
  std::uint64_t seed = 0;

  void validate() const;
  RelationVocabulary vocabulary() const;
};

SynthConfig synth_config_from_json(const nlohmann::json& root);
nlohmann::json to_json(const SynthConfig& c);

// Scene `index` drawn from its own stream derived from (seed, index).
SceneRecord generate_scene(const SynthConfig& config, int index);
Dataset generate(const SynthConfig& config);

// Object class name, "<color> <shape>".
std::string class_name(const std::string& color, Shape shape);
std::vector<std::string> class_names(const SynthConfig& config);

// Reconstructs predicate inputs from a record (category gives color/shape).
std::vector<Entity> entities_of(const SceneRecord& scene);
std::vector<Triplet> label_scene(const std::vector<Entity>& entities, const std::vector<int>& ids,
                                 const std::vector<Rule>& rules, const RuleParams& params);

// Writes `dir`/dataset.json.
std::filesystem::path write_dataset_dir(const Dataset& dataset, const std::filesystem::path& dir);

}  // namespace openrel::synth
