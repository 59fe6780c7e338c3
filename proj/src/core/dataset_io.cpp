#include "openrel/core/dataset_io.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "openrel/core/errors.hpp"

namespace openrel {

using nlohmann::json;

std::vector<std::uint32_t> rle_encode(const BinaryMask& mask) {
  std::vector<std::uint32_t> counts;
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (std::uint8_t b : mask.bits) {
    const std::uint8_t v = b ? 1 : 0;
    if (v != current) {
      counts.push_back(run);
      run = 0;
      current = v;
    }
    ++run;
  }
  counts.push_back(run);
  return counts;
}

BinaryMask rle_decode(const std::vector<std::uint32_t>& counts, int height, int width) {
  BinaryMask mask(height, width);
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (std::uint32_t c : counts) {
    if (pos + c > mask.bits.size()) throw ValidationError("mask_rle overruns the mask size");
    std::fill_n(mask.bits.begin() + static_cast<std::ptrdiff_t>(pos), c, value);
    pos += c;
    value ^= 1;
  }
  if (pos != mask.bits.size()) throw ValidationError("mask_rle does not cover the full mask");
  return mask;
}

namespace {

constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

// Byte offset -> "line L, column C: <line text>".
std::string line_context(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  std::size_t line = 1;
  std::size_t line_start = 0;
  for (std::size_t i = 0; i < byte; ++i) {
    if (text[i] == '\n') {
      ++line;
      line_start = i + 1;
    }
  }
  std::size_t line_end = text.find('\n', line_start);
  if (line_end == std::string_view::npos) line_end = text.size();
  std::string snippet(text.substr(line_start, std::min<std::size_t>(line_end - line_start, 120)));
  std::ostringstream os;
  os << "line " << line << ", column " << (byte - line_start + 1) << ": " << snippet;
  return os.str();
}

template <typename T>
T require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(where + ": field '" + key + "' has the wrong type");
  }
}

Image read_image(const std::string& spec, int h, int w, const std::filesystem::path& base_dir,
                 const std::string& where) {
  std::vector<std::uint8_t> bytes;
  constexpr std::string_view kInline = "base64:";
  if (spec.rfind(kInline, 0) == 0) {
    bytes = base64_decode(std::string_view(spec).substr(kInline.size()));
  } else {
    const auto path = base_dir / spec;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(where + ": cannot open image file " + path.string());
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  if (bytes.size() != static_cast<std::size_t>(h) * w * 3) {
    throw ValidationError(where + ": image holds " + std::to_string(bytes.size()) + " bytes, expected H*W*3 = " +
                          std::to_string(static_cast<std::size_t>(h) * w * 3));
  }
  return image_from_bytes(bytes, h, w);
}

}  // namespace

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
  }
  if (i + 1 == bytes.size()) {
    const std::uint32_t v = bytes[i] << 16;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    const int v = b64_value(c);
    if (v < 0) throw ValidationError("invalid base64 character in image data");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
    }
  }
  return out;
}

std::vector<std::uint8_t> image_to_bytes(const Image& image) {
  std::vector<std::uint8_t> out(image.rgb.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float v = std::clamp(image.rgb[i], 0.0F, 1.0F);
    out[i] = static_cast<std::uint8_t>(std::lround(v * 255.0F));
  }
  return out;
}

Image image_from_bytes(const std::vector<std::uint8_t>& bytes, int height, int width) {
  Image image(height, width);
  for (std::size_t i = 0; i < bytes.size(); ++i) image.rgb[i] = static_cast<float>(bytes[i]) / 255.0F;
  return image;
}

Dataset parse_dataset(std::string_view json_text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text.begin(), json_text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed dataset JSON at ") + line_context(json_text, e.byte > 0 ? e.byte - 1 : 0) +
                     " (" + e.what() + ")");
  }
  if (!root.is_object()) throw ValidationError("dataset: top level must be a JSON object");
  const auto format = require<std::string>(root, "format", "dataset");
  if (format != kDatasetFormat) {
    throw ValidationError("dataset: unsupported format '" + format + "', expected " + std::string(kDatasetFormat));
  }

  Dataset ds;
  if (root.contains("relations")) {
    const auto& rel = root.at("relations");
    ds.relations = make_relation_vocabulary(require<std::vector<std::string>>(rel, "base", "relations"),
                                            require<std::vector<std::string>>(rel, "novel", "relations"));
  }
  if (root.contains("objects")) ds.object_classes = root.at("objects").get<std::vector<std::string>>();

  const auto& scenes = root.contains("scenes") ? root.at("scenes") : json::array();
  if (!scenes.is_array()) throw ValidationError("dataset: 'scenes' must be an array");
  ds.scenes.reserve(scenes.size());
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto& js = scenes[s];
    SceneRecord rec;
    rec.scene_id = js.is_object() && js.contains("scene_id") ? js.at("scene_id").get<std::string>()
                                                             : "#" + std::to_string(s);
    const std::string where = "scene '" + rec.scene_id + "'";
    const int h = require<int>(js, "height", where);
    const int w = require<int>(js, "width", where);
    if (h <= 0 || w <= 0) throw ValidationError(where + ": height and width must be positive");
    rec.image = read_image(require<std::string>(js, "image", where), h, w, base_dir, where);
    for (const auto& jo : js.value("objects", json::array())) {
      ObjectInstance obj;
      obj.instance_id = require<int>(jo, "id", where);
      obj.category = normalize_name(require<std::string>(jo, "category", where));
      obj.mask = rle_decode(require<std::vector<std::uint32_t>>(jo, "mask_rle", where), h, w);
      rec.objects.push_back(std::move(obj));
    }
    for (const auto& jt : js.value("triplets", json::array())) {
      Triplet t;
      t.subject_id = require<int>(jt, "sub", where);
      t.object_id = require<int>(jt, "obj", where);
      t.relation = normalize_name(require<std::string>(jt, "rel", where));
      rec.gt_triplets.push_back(std::move(t));
    }
    validate_scene(rec);
    ds.scenes.push_back(std::move(rec));
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& input) {
  const auto path = std::filesystem::is_directory(input) ? input / "dataset.json" : input;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open dataset file " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), {});
  return parse_dataset(text, path.parent_path());
}

std::string serialize_dataset(const Dataset& dataset) {
  json root;
  root["format"] = kDatasetFormat;
  root["relations"] = {{"base", dataset.relations.base}, {"novel", dataset.relations.novel}};
  root["objects"] = dataset.object_classes;
  json scenes = json::array();
  for (const auto& rec : dataset.scenes) {
    json js;
    js["scene_id"] = rec.scene_id;
    js["height"] = rec.height();
    js["width"] = rec.width();
    js["image"] = "base64:" + base64_encode(image_to_bytes(rec.image));
    json objs = json::array();
    for (const auto& o : rec.objects) {
      objs.push_back({{"id", o.instance_id}, {"category", o.category}, {"mask_rle", rle_encode(o.mask)}});
    }
    js["objects"] = std::move(objs);
    json trips = json::array();
    for (const auto& t : rec.gt_triplets) trips.push_back({{"sub", t.subject_id}, {"obj", t.object_id}, {"rel", t.relation}});
    js["triplets"] = std::move(trips);
    scenes.push_back(std::move(js));
  }
  root["scenes"] = std::move(scenes);
  return root.dump();
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset file " + path.string());
  out << serialize_dataset(dataset) << '\n';
}

}  // namespace openrel
