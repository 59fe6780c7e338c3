#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "openrel/core/types.hpp"

namespace openrel {

inline constexpr std::string_view kDatasetFormat = "openrel-v1";

struct Dataset {
  RelationVocabulary relations;
  std::vector<std::string> object_classes;
  std::vector<SceneRecord> scenes;
  bool operator==(const Dataset&) const = default;
};

// Row-major run lengths, alternating zeros/ones, starting with a (possibly
// zero-length) run of zeros.
std::vector<std::uint32_t> rle_encode(const BinaryMask& mask);
BinaryMask rle_decode(const std::vector<std::uint32_t>& counts, int height, int width);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// Image <-> 8-bit interleaved RGB.
std::vector<std::uint8_t> image_to_bytes(const Image& image);
Image image_from_bytes(const std::vector<std::uint8_t>& bytes, int height, int width);

Dataset parse_dataset(std::string_view json_text, const std::filesystem::path& base_dir = {});
// A directory path reads <dir>/dataset.json.
Dataset load_dataset(const std::filesystem::path& path);
std::string serialize_dataset(const Dataset& dataset);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

}  // namespace openrel
