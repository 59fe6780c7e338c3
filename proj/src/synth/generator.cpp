#include "openrel/synth/generator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "openrel/core/errors.hpp"

namespace openrel::synth {

namespace {

struct Box {
  int y0 = 0, y1 = -1, x0 = 0, x1 = -1;
  bool empty() const { return y1 < y0; }
};

Box bbox(const BinaryMask& m) {
  Box b{m.height, -1, m.width, -1};
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      b.y0 = std::min(b.y0, y);
      b.y1 = std::max(b.y1, y);
      b.x0 = std::min(b.x0, x);
      b.x1 = std::max(b.x1, x);
    }
  }
  return b;
}

std::size_t intersection(const BinaryMask& a, const BinaryMask& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) n += (a.bits[i] && b.bits[i]) ? 1 : 0;
  return n;
}

bool adjacent8(const BinaryMask& a, const BinaryMask& b) {
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      if (!a.at(y, x)) continue;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy;
          const int xx = x + dx;
          if (yy >= 0 && yy < b.height && xx >= 0 && xx < b.width && b.at(yy, xx)) return true;
        }
      }
    }
  }
  return false;
}

bool contained(const BinaryMask& inner, const BinaryMask& outer) {
  for (std::size_t i = 0; i < inner.bits.size(); ++i) {
    if (inner.bits[i] && !outer.bits[i]) return false;
  }
  return true;
}

double half_extent(const ShapeSpec& s) {
  switch (s.shape) {
    case Shape::Square:
      return s.size / 2.0;
    case Shape::Circle:
      return s.size / std::sqrt(std::numbers::pi);
    case Shape::Triangle:
      return s.size / std::sqrt(2.0);
  }
  return s.size;
}

const std::vector<std::string> kAtomic = {"left of", "right of", "above",       "below",       "touching",
                                          "inside",  "contains", "overlapping", "larger than", "smaller than",
                                          "same color as", "same shape as"};

}  // namespace

std::string to_string(Shape s) {
  switch (s) {
    case Shape::Circle:
      return "circle";
    case Shape::Square:
      return "square";
    case Shape::Triangle:
      return "triangle";
  }
  return "square";
}

Shape parse_shape(const std::string& name) {
  if (name == "circle") return Shape::Circle;
  if (name == "square") return Shape::Square;
  if (name == "triangle") return Shape::Triangle;
  throw ValidationError("unknown shape '" + name + "'");
}

const std::vector<Color>& palette() {
  static const std::vector<Color> colors = {
      {"red", 0.9F, 0.1F, 0.1F},    {"green", 0.1F, 0.8F, 0.2F},  {"blue", 0.15F, 0.3F, 0.95F},
      {"yellow", 0.95F, 0.9F, 0.1F}, {"purple", 0.6F, 0.2F, 0.8F}, {"cyan", 0.1F, 0.85F, 0.9F},
      {"orange", 1.0F, 0.55F, 0.0F}, {"white", 0.95F, 0.95F, 0.95F}, {"pink", 1.0F, 0.6F, 0.75F},
      {"gray", 0.5F, 0.5F, 0.5F}};
  return colors;
}

namespace {

int color_index(const std::string& name) {
  const auto& p = palette();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].name == name) return static_cast<int>(i);
  }
  throw ValidationError("unknown color '" + name + "'");
}

}  // namespace

BinaryMask rasterize(const ShapeSpec& spec, int height, int width) {
  BinaryMask m(height, width);
  const double half = half_extent(spec);
  for (int y = 0; y < height; ++y) {
    const double py = y + 0.5 - spec.cy;
    for (int x = 0; x < width; ++x) {
      const double px = x + 0.5 - spec.cx;
      bool in = false;
      switch (spec.shape) {
        case Shape::Square:
          in = std::abs(px) <= half && std::abs(py) <= half;
          break;
        case Shape::Circle:
          in = px * px + py * py <= half * half;
          break;
        case Shape::Triangle: {
          // Apex up; base width equals height.
          const double t = (py + half) / (2.0 * half);
          in = t >= 0.0 && t <= 1.0 && std::abs(px) <= t * half;
          break;
        }
      }
      if (in) m.set(y, x);
    }
  }
  return m;
}

const std::vector<std::string>& atomic_rule_names() { return kAtomic; }

std::vector<std::string> registry_names() {
  std::vector<std::string> names = kAtomic;
  names.push_back("and");
  return names;
}

Rule make_rule(const std::string& name) {
  Rule r;
  r.name = normalize_name(name);
  std::string rest = r.name;
  const std::string sep = " and ";
  for (std::size_t pos = rest.find(sep); pos != std::string::npos; pos = rest.find(sep)) {
    r.parts.push_back(rest.substr(0, pos));
    rest = rest.substr(pos + sep.size());
  }
  r.parts.push_back(rest);
  for (const auto& p : r.parts) {
    if (std::find(kAtomic.begin(), kAtomic.end(), p) == kAtomic.end()) {
      throw ValidationError("unknown relation rule '" + p + "' in '" + name + "'");
    }
  }
  return r;
}

bool evaluate_atomic(const std::string& name, const Entity& a, const Entity& b, const RuleParams& params) {
  if (name == "right of") return evaluate_atomic("left of", b, a, params);
  if (name == "below") return evaluate_atomic("above", b, a, params);
  if (name == "contains") return evaluate_atomic("inside", b, a, params);
  if (name == "smaller than") return evaluate_atomic("larger than", b, a, params);
  if (name == "same color as") return a.color == b.color;
  if (name == "same shape as") return a.shape == b.shape;
  if (name == "larger than") {
    return static_cast<double>(a.mask.area()) >= params.larger_ratio * static_cast<double>(b.mask.area());
  }
  const std::size_t inter = intersection(a.mask, b.mask);
  if (name == "touching") return inter == 0 && adjacent8(a.mask, b.mask);
  if (name == "inside") return a.mask.area() < b.mask.area() && contained(a.mask, b.mask);
  if (name == "overlapping") return inter > 0 && !contained(a.mask, b.mask) && !contained(b.mask, a.mask);
  const Box ba = bbox(a.mask);
  const Box bb = bbox(b.mask);
  if (ba.empty() || bb.empty()) return false;
  if (name == "left of") {
    const bool rows = ba.y0 <= bb.y1 && bb.y0 <= ba.y1;
    return ba.x1 < bb.x0 && rows && bb.x0 - ba.x1 - 1 <= params.near_gap;
  }
  if (name == "above") {
    const bool cols = ba.x0 <= bb.x1 && bb.x0 <= ba.x1;
    return ba.y1 < bb.y0 && cols && bb.y0 - ba.y1 - 1 <= params.near_gap;
  }
  throw ValidationError("unknown relation rule '" + name + "'");
}

bool evaluate(const Rule& rule, const Entity& a, const Entity& b, const RuleParams& params) {
  for (const auto& p : rule.parts) {
    if (!evaluate_atomic(p, a, b, params)) return false;
  }
  return true;
}

void SynthConfig::validate() const {
  if (scenes < 0) throw ValidationError("synth.scenes must be >= 0");
  if (height <= 0 || width <= 0) throw ValidationError("synth grid must be positive");
  if (min_objects < 0 || max_objects < min_objects) throw ValidationError("synth object count range is invalid");
  if (shapes.empty()) throw ValidationError("synth.shapes must not be empty");
  if (colors.empty()) throw ValidationError("synth.colors must not be empty");
  for (const auto& c : colors) color_index(c);
  if (distinct_colors && static_cast<int>(colors.size()) < max_objects) {
    throw ValidationError("synth: distinct colors need at least max_objects colors");
  }
  if (!(min_size > 0.0 && max_size >= min_size)) throw ValidationError("synth size range is invalid");
  if (touch_prob < 0 || inside_prob < 0 || overlap_prob < 0 || touch_prob + inside_prob + overlap_prob > 1.0) {
    throw ValidationError("synth placement probabilities must be non-negative and sum to at most 1");
  }
  const auto v = vocabulary();
  for (const auto& r : v.all()) make_rule(r);
}

RelationVocabulary SynthConfig::vocabulary() const {
  if (!rules.empty()) return split_vocabulary(rules, base_ratio, seed);
  return make_relation_vocabulary(base, novel);
}

SynthConfig synth_config_from_json(const nlohmann::json& root) {
  SynthConfig c;
  if (root.contains("seed")) c.seed = root.at("seed").get<std::uint64_t>();
  if (!root.contains("synth")) {
    c.validate();
    return c;
  }
  const auto& s = root.at("synth");
  try {
    c.scenes = s.value("scenes", c.scenes);
    c.height = s.value("height", c.height);
    c.width = s.value("width", c.width);
    c.min_objects = s.value("min_objects", c.min_objects);
    c.max_objects = s.value("max_objects", c.max_objects);
    if (s.contains("shapes")) {
      c.shapes.clear();
      for (const auto& n : s.at("shapes")) c.shapes.push_back(parse_shape(n.get<std::string>()));
    }
    c.colors = s.value("colors", c.colors);
    c.base = s.value("base", c.base);
    c.novel = s.value("novel", c.novel);
    c.rules = s.value("rules", c.rules);
    c.base_ratio = s.value("base_ratio", c.base_ratio);
    c.distinct_colors = s.value("distinct_colors", c.distinct_colors);
    c.min_size = s.value("min_size", c.min_size);
    c.max_size = s.value("max_size", c.max_size);
    c.touch_prob = s.value("touch_prob", c.touch_prob);
    c.inside_prob = s.value("inside_prob", c.inside_prob);
    c.overlap_prob = s.value("overlap_prob", c.overlap_prob);
    c.rule_params.near_gap = s.value("near_gap", c.rule_params.near_gap);
    c.rule_params.larger_ratio = s.value("larger_ratio", c.rule_params.larger_ratio);
    c.max_retries = s.value("max_retries", c.max_retries);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("synth config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const SynthConfig& c) {
  std::vector<std::string> shapes;
  for (auto s : c.shapes) shapes.push_back(to_string(s));
  return nlohmann::json{{"synth",
                         {{"scenes", c.scenes},
                          {"height", c.height},
                          {"width", c.width},
                          {"min_objects", c.min_objects},
                          {"max_objects", c.max_objects},
                          {"shapes", shapes},
                          {"colors", c.colors},
                          {"base", c.base},
                          {"novel", c.novel},
                          {"rules", c.rules},
                          {"base_ratio", c.base_ratio},
                          {"distinct_colors", c.distinct_colors},
                          {"min_size", c.min_size},
                          {"max_size", c.max_size},
                          {"touch_prob", c.touch_prob},
                          {"inside_prob", c.inside_prob},
                          {"overlap_prob", c.overlap_prob},
                          {"near_gap", c.rule_params.near_gap},
                          {"larger_ratio", c.rule_params.larger_ratio},
                          {"max_retries", c.max_retries}}},
                        {"seed", c.seed}};
}

std::string class_name(const std::string& color, Shape shape) { return color + " " + to_string(shape); }

std::vector<std::string> class_names(const SynthConfig& config) {
  std::vector<std::string> out;
  for (const auto& c : config.colors) {
    for (auto s : config.shapes) out.push_back(class_name(c, s));
  }
  return out;
}

std::vector<Entity> entities_of(const SceneRecord& scene) {
  std::vector<Entity> out;
  for (const auto& o : scene.objects) {
    const auto space = o.category.find(' ');
    if (space == std::string::npos) throw ValidationError("category '" + o.category + "' is not '<color> <shape>'");
    out.push_back({o.mask, parse_shape(o.category.substr(space + 1)), color_index(o.category.substr(0, space))});
  }
  return out;
}

std::vector<Triplet> label_scene(const std::vector<Entity>& entities, const std::vector<int>& ids,
                                 const std::vector<Rule>& rules, const RuleParams& params) {
  std::vector<Triplet> out;
  for (std::size_t i = 0; i < entities.size(); ++i) {
    for (std::size_t j = 0; j < entities.size(); ++j) {
      if (i == j) continue;
      for (const auto& r : rules) {
        if (evaluate(r, entities[i], entities[j], params)) out.push_back({ids[i], ids[j], r.name, std::nullopt});
      }
    }
  }
  return out;
}

namespace {

struct Placed {
  ShapeSpec spec;
  BinaryMask mask;
};

class Placer {
 public:
  Placer(const SynthConfig& cfg, std::mt19937_64& rng) : cfg_(cfg), rng_(rng) {}

  bool in_image(const ShapeSpec& s) const {
    const double e = half_extent(s);
    return s.cx - e >= 0.0 && s.cx + e <= cfg_.width && s.cy - e >= 0.0 && s.cy + e <= cfg_.height;
  }

  // Overlap with every placed object except `skip`.
  bool clear_of(const BinaryMask& m, const std::vector<Placed>& placed, int skip) const {
    for (std::size_t i = 0; i < placed.size(); ++i) {
      if (static_cast<int>(i) != skip && intersection(m, placed[i].mask) > 0) return false;
    }
    return true;
  }

  double uni(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }

  bool try_free(ShapeSpec& s, const std::vector<Placed>& placed, BinaryMask& m) {
    const double e = half_extent(s);
    if (2 * e > cfg_.width || 2 * e > cfg_.height) return false;
    s.cx = uni(e, cfg_.width - e);
    s.cy = uni(e, cfg_.height - e);
    m = rasterize(s, cfg_.height, cfg_.width);
    return m.area() > 0 && clear_of(m, placed, -1);
  }

  bool try_touch(ShapeSpec& s, const std::vector<Placed>& placed, int anchor, BinaryMask& m) {
    const auto& a = placed[static_cast<std::size_t>(anchor)];
    const int dir = std::uniform_int_distribution<int>(0, 3)(rng_);
    const double dx[] = {-1, 1, 0, 0};
    const double dy[] = {0, 0, -1, 1};
    const double reach = half_extent(a.spec) + half_extent(s);
    const double side = uni(-0.5, 0.5) * reach;
    double dist = reach + 2.0;
    BinaryMask last;
    bool have = false;
    for (; dist > 0.0; dist -= 0.5) {
      ShapeSpec t = s;
      t.cx = a.spec.cx + dx[dir] * dist + (dx[dir] == 0 ? side : 0.0);
      t.cy = a.spec.cy + dy[dir] * dist + (dy[dir] == 0 ? side : 0.0);
      BinaryMask tm = rasterize(t, cfg_.height, cfg_.width);
      if (intersection(tm, a.mask) > 0) break;
      s.cx = t.cx;
      s.cy = t.cy;
      last = std::move(tm);
      have = true;
    }
    if (!have || !in_image(s)) return false;
    m = std::move(last);
    Entity ea{a.mask, a.spec.shape, 0};
    Entity eb{m, s.shape, 0};
    return m.area() > 0 && clear_of(m, placed, -1) && evaluate_atomic("touching", eb, ea, cfg_.rule_params);
  }

  bool try_inside(ShapeSpec& s, const std::vector<Placed>& placed, int anchor, BinaryMask& m) {
    const auto& a = placed[static_cast<std::size_t>(anchor)];
    s.size = std::max(3.0, a.spec.size * uni(0.3, 0.45));
    s.cx = a.spec.cx + uni(-0.1, 0.1) * a.spec.size;
    s.cy = a.spec.cy + uni(-0.1, 0.1) * a.spec.size + (a.spec.shape == Shape::Triangle ? 0.2 * a.spec.size : 0.0);
    m = rasterize(s, cfg_.height, cfg_.width);
    return m.area() > 0 && m.area() < a.mask.area() && contained(m, a.mask) && clear_of(m, placed, anchor);
  }

  bool try_overlap(ShapeSpec& s, const std::vector<Placed>& placed, int anchor, BinaryMask& m) {
    const auto& a = placed[static_cast<std::size_t>(anchor)];
    const double angle = uni(0.0, 2.0 * std::numbers::pi);
    const double dist = (half_extent(a.spec) + half_extent(s)) * uni(0.5, 0.8);
    s.cx = a.spec.cx + std::cos(angle) * dist;
    s.cy = a.spec.cy + std::sin(angle) * dist;
    if (!in_image(s)) return false;
    m = rasterize(s, cfg_.height, cfg_.width);
    const std::size_t inter = intersection(m, a.mask);
    return m.area() > 0 && inter > 0 && !contained(m, a.mask) && !contained(a.mask, m) && clear_of(m, placed, anchor);
  }

 private:
  const SynthConfig& cfg_;
  std::mt19937_64& rng_;
};

std::mt19937_64 scene_stream(std::uint64_t seed, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), 0x5eedU};
  return std::mt19937_64(seq);
}

}  // namespace

SceneRecord generate_scene(const SynthConfig& config, int index) {
  auto rng = scene_stream(config.seed, index);
  Placer placer(config, rng);
  const int n = std::uniform_int_distribution<int>(config.min_objects, config.max_objects)(rng);

  std::vector<int> colors;
  if (config.distinct_colors) {
    std::vector<int> pool(config.colors.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
    std::shuffle(pool.begin(), pool.end(), rng);
    colors.assign(pool.begin(), pool.begin() + n);
  } else {
    std::uniform_int_distribution<int> pick(0, static_cast<int>(config.colors.size()) - 1);
    for (int i = 0; i < n; ++i) colors.push_back(pick(rng));
  }

  std::vector<Placed> placed;
  for (int i = 0; i < n; ++i) {
    bool ok = false;
    for (int attempt = 0; attempt < config.max_retries && !ok; ++attempt) {
      ShapeSpec s;
      s.shape = config.shapes[std::uniform_int_distribution<std::size_t>(0, config.shapes.size() - 1)(rng)];
      s.color = color_index(config.colors[static_cast<std::size_t>(colors[static_cast<std::size_t>(i)])]);
      s.size = placer.uni(config.min_size, config.max_size);
      BinaryMask m;
      const double u = placer.uni(0.0, 1.0);
      const int anchor = placed.empty() ? -1 : std::uniform_int_distribution<int>(0, static_cast<int>(placed.size()) - 1)(rng);
      if (anchor < 0 || u >= config.touch_prob + config.inside_prob + config.overlap_prob) {
        ok = placer.try_free(s, placed, m);
      } else if (u < config.touch_prob) {
        ok = placer.try_touch(s, placed, anchor, m);
      } else if (u < config.touch_prob + config.inside_prob) {
        ok = placer.try_inside(s, placed, anchor, m);
      } else {
        ok = placer.try_overlap(s, placed, anchor, m);
      }
      if (ok) placed.push_back({s, std::move(m)});
    }
    if (!ok) {
      throw ValidationError("synth: could not place object " + std::to_string(i) + " of scene " +
                            std::to_string(index) + " after " + std::to_string(config.max_retries) + " retries");
    }
  }

  char id[32];
  std::snprintf(id, sizeof(id), "scene_%05d", index);
  SceneRecord rec;
  rec.scene_id = id;
  rec.image = Image(config.height, config.width);
  std::vector<std::size_t> order(placed.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return placed[a].mask.area() > placed[b].mask.area(); });
  for (auto i : order) {
    const auto& col = palette()[static_cast<std::size_t>(placed[i].spec.color)];
    for (int y = 0; y < config.height; ++y) {
      for (int x = 0; x < config.width; ++x) {
        if (!placed[i].mask.at(y, x)) continue;
        rec.image.at(y, x, 0) = col.r;
        rec.image.at(y, x, 1) = col.g;
        rec.image.at(y, x, 2) = col.b;
      }
    }
  }
  // Match the 8-bit storage precision so records survive a save/load round trip.
  for (auto& v : rec.image.rgb) v = std::round(v * 255.0F) / 255.0F;

  std::vector<Entity> entities;
  std::vector<int> ids;
  for (std::size_t i = 0; i < placed.size(); ++i) {
    const auto& p = placed[i];
    rec.objects.push_back(
        {static_cast<int>(i), class_name(palette()[static_cast<std::size_t>(p.spec.color)].name, p.spec.shape), p.mask});
    entities.push_back({p.mask, p.spec.shape, p.spec.color});
    ids.push_back(static_cast<int>(i));
  }
  std::vector<Rule> rules;
  for (const auto& r : config.vocabulary().all()) rules.push_back(make_rule(r));
  rec.gt_triplets = label_scene(entities, ids, rules, config.rule_params);
  return rec;
}

Dataset generate(const SynthConfig& config) {
  config.validate();
  Dataset d;
  d.relations = config.vocabulary();
  d.object_classes = class_names(config);
  d.scenes.reserve(static_cast<std::size_t>(config.scenes));
  for (int i = 0; i < config.scenes; ++i) d.scenes.push_back(generate_scene(config, i));
  return d;
}

std::filesystem::path write_dataset_dir(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / "dataset.json";
  save_dataset(dataset, path);
  return path;
}

}  // namespace openrel::synth
