#include "openrel/seg/adapter.hpp"

#include <algorithm>
#include <cmath>

#include "openrel/core/errors.hpp"

namespace openrel::seg {

namespace {

int stage_count(int stride) {
  int n = 0;
  while ((1 << n) < stride) ++n;
  return std::max(n, 1);
}

int stage_channels(int stage, int stages, int dim) { return std::max(dim >> (stages - 1 - stage), 4); }

std::string conv_name(int i, const char* field) { return "encoder.conv" + std::to_string(i) + "." + field; }

ad::Mat image_matrix(const Image& image) {
  ad::Mat m(static_cast<Eigen::Index>(image.height) * image.width, 3);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (int c = 0; c < 3; ++c) m(i, c) = image.rgb[static_cast<std::size_t>(i) * 3 + c];
  }
  return m;
}

}  // namespace

SceneEncoder::SceneEncoder(EncoderConfig cfg, ad::ParamStore& store) : cfg_(cfg), store_(&store) {}

int SceneEncoder::stages() const { return stage_count(cfg_.stride); }

void SceneEncoder::init_params(ad::ParamStore& store, const EncoderConfig& cfg, std::mt19937_64& rng) {
  const int n = stage_count(cfg.stride);
  int cin = 3;
  for (int i = 0; i < n; ++i) {
    const int cout = stage_channels(i, n, cfg.dim);
    store.add(conv_name(i, "w"), ad::xavier_uniform(9 * cin, cout, rng));
    store.add(conv_name(i, "b"), ad::Mat::Zero(1, cout));
    cin = cout;
  }
  store.add("encoder.patchify.w", ad::xavier_uniform(static_cast<Eigen::Index>(cfg.patch) * cfg.patch * cfg.dim, cfg.dim, rng));
  store.add("encoder.patchify.b", ad::Mat::Zero(1, cfg.dim));
}

void SceneEncoder::check_image(int height, int width) const {
  const int s = cfg_.stride;
  if (height % s != 0 || width % s != 0) {
    const int ph = (s - height % s) % s;
    const int pw = (s - width % s) % s;
    throw ValidationError("image " + std::to_string(height) + "x" + std::to_string(width) +
                          " is not divisible by encoder stride " + std::to_string(s) + "; pad height by " +
                          std::to_string(ph) + " and width by " + std::to_string(pw));
  }
}

ad::Var SceneEncoder::encode(ad::Graph& g, const Image& image) const {
  check_image(image.height, image.width);
  const int n = stages();
  const int stride = cfg_.stride == 1 ? 1 : 2;
  ad::Var x = g.constant(image_matrix(image));
  int h = image.height;
  int w = image.width;
  int cin = 3;
  for (int i = 0; i < n; ++i) {
    const int cout = stage_channels(i, n, cfg_.dim);
    ad::Var cols = ad::im2col(x, h, w, cin, 3, stride, 1);
    x = ad::gelu(ad::linear(cols, g.param(store_->get(conv_name(i, "w"))), g.param(store_->get(conv_name(i, "b")))));
    h = (h + 2 - 3) / stride + 1;
    w = (w + 2 - 3) / stride + 1;
    cin = cout;
  }
  return x;
}

ad::Var SceneEncoder::patchify(ad::Graph& g, ad::Var grid, int grid_height, int grid_width) const {
  const int p = cfg_.patch;
  if (grid_height % p != 0 || grid_width % p != 0) {
    throw ValidationError("feature grid " + std::to_string(grid_height) + "x" + std::to_string(grid_width) +
                          " is not divisible by patch size " + std::to_string(p));
  }
  ad::Var cols = ad::im2col(grid, grid_height, grid_width, cfg_.dim, p, p, 0);
  return ad::linear(cols, g.param(store_->get("encoder.patchify.w")), g.param(store_->get("encoder.patchify.b")));
}

FeatureGrid SceneEncoder::encode_scene(const SceneRecord& record) const {
  ad::Graph g(false);
  FeatureGrid grid;
  grid.values = encode(g, record.image).value();
  grid.height = record.height() / cfg_.stride;
  grid.width = record.width() / cfg_.stride;
  grid.dim = cfg_.dim;
  return grid;
}

TokenSequence SceneEncoder::tokens(const Image& image) const {
  ad::Graph g(false);
  const int gh = image.height / cfg_.stride;
  const int gw = image.width / cfg_.stride;
  TokenSequence t;
  t.tokens = patchify(g, encode(g, image), gh, gw).value();
  t.grid_height = gh / cfg_.patch;
  t.grid_width = gw / cfg_.patch;
  return t;
}

TokenSequence patchify(const FeatureGrid& grid, int p, const ad::Mat& weight, const ad::Mat& bias) {
  if (p <= 0 || grid.height % p != 0 || grid.width % p != 0) {
    throw ValidationError("feature grid " + std::to_string(grid.height) + "x" + std::to_string(grid.width) +
                          " is not divisible by patch size " + std::to_string(p));
  }
  if (weight.rows() != static_cast<Eigen::Index>(p) * p * grid.dim) {
    throw ValidationError("patchify weight must have p*p*D rows");
  }
  ad::Graph g(false);
  ad::Var cols = ad::im2col(g.constant(grid.values), grid.height, grid.width, grid.dim, p, p, 0);
  TokenSequence t;
  t.tokens = ad::linear(cols, g.constant(weight), g.constant(bias)).value();
  t.grid_height = grid.height / p;
  t.grid_width = grid.width / p;
  return t;
}

int nearest_source_index(int t, int source_size, int target_size) {
  // Cell centre in source pixel coordinates is ((2t+1)S - T) / 2T; the nearest
  // pixel centre with ties toward the smaller index is ceil(centre - 1/2).
  const long long num = static_cast<long long>(2 * t + 1) * source_size - 2LL * target_size;
  const long long den = 2LL * target_size;
  long long k = num >= 0 ? (num + den - 1) / den : -((-num) / den);
  return static_cast<int>(std::clamp<long long>(k, 0, source_size - 1));
}

MaskSequence downsample_masks(const std::vector<ObjectInstance>& objects, int target_height, int target_width) {
  if (target_height < 1 || target_width < 1) throw ValidationError("downsample target must be at least 1x1");
  MaskSequence seq;
  seq.grid_height = target_height;
  seq.grid_width = target_width;
  for (const auto& obj : objects) {
    const BinaryMask& m = obj.mask;
    MaskRow row(static_cast<std::size_t>(target_height) * target_width, 0);
    bool any = false;
    for (int ty = 0; ty < target_height; ++ty) {
      const int sy = nearest_source_index(ty, m.height, target_height);
      for (int tx = 0; tx < target_width; ++tx) {
        const int sx = nearest_source_index(tx, m.width, target_width);
        const std::uint8_t v = m.at(sy, sx) ? 1 : 0;
        row[static_cast<std::size_t>(ty) * target_width + tx] = v;
        any = any || v;
      }
    }
    if (!any && m.area() > 0) {
      // Largest overlap fraction between the source block of each cell and the mask.
      double best = -1.0;
      std::size_t best_cell = 0;
      for (int ty = 0; ty < target_height; ++ty) {
        const int y0 = static_cast<int>(static_cast<long long>(ty) * m.height / target_height);
        const int y1 = std::max(y0 + 1, static_cast<int>(static_cast<long long>(ty + 1) * m.height / target_height));
        for (int tx = 0; tx < target_width; ++tx) {
          const int x0 = static_cast<int>(static_cast<long long>(tx) * m.width / target_width);
          const int x1 = std::max(x0 + 1, static_cast<int>(static_cast<long long>(tx + 1) * m.width / target_width));
          int count = 0;
          for (int y = y0; y < std::min(y1, m.height); ++y) {
            for (int x = x0; x < std::min(x1, m.width); ++x) count += m.at(y, x) ? 1 : 0;
          }
          const double frac = static_cast<double>(count) / ((y1 - y0) * (x1 - x0));
          if (frac > best) {
            best = frac;
            best_cell = static_cast<std::size_t>(ty) * target_width + tx;
          }
        }
      }
      row[best_cell] = 1;
    }
    seq.rows.push_back(std::move(row));
  }
  return seq;
}

PairSet make_pairs(const std::vector<ObjectInstance>& objects, const MaskSequence& masks) {
  if (masks.rows.size() != objects.size()) throw ValidationError("make_pairs: one mask row per object required");
  PairSet ps;
  const int n = static_cast<int>(objects.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      ps.pairs.emplace_back(i, j);
      ps.categories.emplace_back(objects[static_cast<std::size_t>(i)].category, objects[static_cast<std::size_t>(j)].category);
      const auto& a = masks.rows[static_cast<std::size_t>(i)];
      const auto& b = masks.rows[static_cast<std::size_t>(j)];
      MaskRow row(a.size());
      std::transform(a.begin(), a.end(), b.begin(), row.begin(), [](auto x, auto y) { return static_cast<std::uint8_t>(x | y); });
      ps.masks.push_back(std::move(row));
    }
  }
  return ps;
}

ad::Mat sine_position_2d(int grid_height, int grid_width, int dim) {
  const int half = dim / 2;
  ad::Mat pos = ad::Mat::Zero(static_cast<Eigen::Index>(grid_height) * grid_width, dim);
  constexpr double kTwoPi = 6.283185307179586;
  for (int y = 0; y < grid_height; ++y) {
    for (int x = 0; x < grid_width; ++x) {
      const double ey = (y + 1.0) / grid_height * kTwoPi;
      const double ex = (x + 1.0) / grid_width * kTwoPi;
      const Eigen::Index r = static_cast<Eigen::Index>(y) * grid_width + x;
      for (int i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -2.0 * (i / 2) / half);
        pos(r, i) = (i % 2 == 0) ? std::sin(ey * freq) : std::cos(ey * freq);
        pos(r, half + i) = (i % 2 == 0) ? std::sin(ex * freq) : std::cos(ex * freq);
      }
    }
  }
  return pos;
}

ad::Mat sine_position_1d(int start, int count, int dim) {
  ad::Mat pos(count, dim);
  for (int r = 0; r < count; ++r) {
    const double p = start + r;
    for (int i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -2.0 * (i / 2) / dim);
      pos(r, i) = (i % 2 == 0) ? std::sin(p * freq) : std::cos(p * freq);
    }
  }
  return pos;
}

BinaryMask dilate(const BinaryMask& mask) {
  BinaryMask out(mask.height, mask.width);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      bool on = false;
      for (int dy = -1; dy <= 1 && !on; ++dy) {
        for (int dx = -1; dx <= 1 && !on; ++dx) {
          const int yy = y + dy;
          const int xx = x + dx;
          on = yy >= 0 && yy < mask.height && xx >= 0 && xx < mask.width && mask.at(yy, xx);
        }
      }
      out.set(y, x, on ? 1 : 0);
    }
  }
  return out;
}

BinaryMask erode(const BinaryMask& mask) {
  BinaryMask out(mask.height, mask.width);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      bool on = mask.at(y, x) != 0;
      for (int dy = -1; dy <= 1 && on; ++dy) {
        for (int dx = -1; dx <= 1 && on; ++dx) {
          const int yy = y + dy;
          const int xx = x + dx;
          on = yy >= 0 && yy < mask.height && xx >= 0 && xx < mask.width && mask.at(yy, xx);
        }
      }
      out.set(y, x, on ? 1 : 0);
    }
  }
  return out;
}

std::vector<ObjectInstance> corrupt_objects(const std::vector<ObjectInstance>& objects,
                                            const std::vector<std::string>& classes, double category_flip_prob,
                                            double jitter_prob, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ObjectInstance> out;
  out.reserve(objects.size());
  for (const auto& obj : objects) {
    ObjectInstance o = obj;
    if (u(rng) < jitter_prob) {
      BinaryMask m = u(rng) < 0.5 ? dilate(o.mask) : erode(o.mask);
      // Erosion can wipe thin shapes; keep the original mask then.
      if (m.area() > 0) o.mask = std::move(m);
    }
    if (classes.size() > 1 && u(rng) < category_flip_prob) {
      std::vector<std::string> others;
      for (const auto& c : classes) {
        if (c != o.category) others.push_back(c);
      }
      std::uniform_int_distribution<std::size_t> pick(0, others.size() - 1);
      o.category = others[pick(rng)];
    }
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace openrel::seg
