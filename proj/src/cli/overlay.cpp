#include <array>
#include <fstream>

#include "openrel/cli/commands.hpp"

namespace openrel::cli {

namespace {

// 3x5 digit glyphs, one row per entry, bit 2 is the leftmost column.
constexpr std::array<std::array<std::uint8_t, 5>, 10> kDigits{{
    {7, 5, 5, 5, 7},
    {2, 6, 2, 2, 7},
    {7, 1, 7, 4, 7},
    {7, 1, 7, 1, 7},
    {5, 5, 7, 1, 1},
    {7, 4, 7, 1, 7},
    {7, 4, 7, 5, 7},
    {7, 1, 1, 1, 1},
    {7, 5, 7, 5, 7},
    {7, 5, 7, 1, 7},
}};

constexpr std::array<std::array<std::uint8_t, 3>, 8> kColors{{
    {230, 25, 75},
    {60, 180, 75},
    {255, 225, 25},
    {0, 130, 200},
    {245, 130, 48},
    {145, 30, 180},
    {70, 240, 240},
    {240, 50, 230},
}};

struct Canvas {
  int height;
  int width;
  std::vector<std::uint8_t> rgb;

  void put(int y, int x, const std::array<std::uint8_t, 3>& c) {
    if (y < 0 || x < 0 || y >= height || x >= width) return;
    const auto i = (static_cast<std::size_t>(y) * width + x) * 3;
    rgb[i] = c[0];
    rgb[i + 1] = c[1];
    rgb[i + 2] = c[2];
  }
};

void draw_number(Canvas& c, int number, int y, int x, const std::array<std::uint8_t, 3>& color) {
  const std::string text = std::to_string(number);
  constexpr std::array<std::uint8_t, 3> kBlack{0, 0, 0};
  for (int yy = -1; yy <= 5; ++yy) {
    for (int xx = -1; xx <= static_cast<int>(text.size()) * 4 - 1; ++xx) c.put(y + yy, x + xx, kBlack);
  }
  for (std::size_t d = 0; d < text.size(); ++d) {
    const auto& glyph = kDigits[static_cast<std::size_t>(text[d] - '0')];
    for (int r = 0; r < 5; ++r) {
      for (int col = 0; col < 3; ++col) {
        if (glyph[static_cast<std::size_t>(r)] & (4 >> col)) c.put(y + r, x + static_cast<int>(d) * 4 + col, color);
      }
    }
  }
}

}  // namespace

void write_overlay_ppm(const SceneRecord& scene, int scale, const std::filesystem::path& path) {
  Canvas c{scene.height() * scale, scene.width() * scale, {}};
  c.rgb.assign(static_cast<std::size_t>(c.height) * c.width * 3, 0);
  for (int y = 0; y < c.height; ++y) {
    for (int x = 0; x < c.width; ++x) {
      std::array<std::uint8_t, 3> px{};
      for (int ch = 0; ch < 3; ++ch) {
        px[static_cast<std::size_t>(ch)] =
            static_cast<std::uint8_t>(std::lround(scene.image.at(y / scale, x / scale, ch) * 255.0F));
      }
      c.put(y, x, px);
    }
  }
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& m = scene.objects[i].mask;
    const auto& color = kColors[i % kColors.size()];
    auto inside = [&](int y, int x) { return y >= 0 && x >= 0 && y < m.height && x < m.width && m.at(y, x); };
    long sy = 0;
    long sx = 0;
    long n = 0;
    for (int y = 0; y < m.height; ++y) {
      for (int x = 0; x < m.width; ++x) {
        if (!m.at(y, x)) continue;
        sy += y;
        sx += x;
        ++n;
        const bool edge = !inside(y - 1, x) || !inside(y + 1, x) || !inside(y, x - 1) || !inside(y, x + 1);
        if (!edge) continue;
        for (int yy = 0; yy < scale; ++yy) {
          for (int xx = 0; xx < scale; ++xx) c.put(y * scale + yy, x * scale + xx, color);
        }
      }
    }
    if (n > 0) {
      draw_number(c, scene.objects[i].instance_id, static_cast<int>(sy * scale / n) - 2,
                  static_cast<int>(sx * scale / n) - 1, color);
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P6\n" << c.width << " " << c.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(c.rgb.data()), static_cast<std::streamsize>(c.rgb.size()));
}

}  // namespace openrel::cli
