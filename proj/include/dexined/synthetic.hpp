#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dexined/dataset.hpp"
#include "dexined/eval.hpp"

namespace dexined {

struct ToyConfig {
  std::size_t count = 8;
  std::size_t height = 96, width = 96;
  std::size_t min_shapes = 2, max_shapes = 4;
  double noise = 6.0;  // std of additive pixel noise, 8-bit units
  double min_contrast = 150;  // L1 colour distance of every shape from the background
  std::uint64_t seed = 7;
};

// Filled rectangles, ellipses and triangles over a smooth background. The
// annotation marks every pixel whose region label differs from its right or
// lower neighbour, thinned to a skeleton so that it is a fixed point of the
// evaluation's thinning step.
inline std::vector<Sample> make_toy_shapes(const ToyConfig& cfg = {}) {
  std::mt19937_64 rng(cfg.seed);
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  const std::size_t H = cfg.height, W = cfg.width;
  std::vector<Sample> out;
  for (std::size_t n = 0; n < cfg.count; ++n) {
    std::vector<int> label(H * W, 0);
    std::vector<std::array<double, 3>> colour = {{uni(40, 215), uni(40, 215), uni(40, 215)}};
    const std::array<double, 2> tilt = {uni(-0.4, 0.4), uni(-0.4, 0.4)};
    const std::size_t shapes =
        cfg.min_shapes + std::size_t(rng() % (cfg.max_shapes - cfg.min_shapes + 1));
    for (std::size_t s = 1; s <= shapes; ++s) {
      // keep neighbouring regions visibly distinct
      std::array<double, 3> c;
      do c = {uni(0, 255), uni(0, 255), uni(0, 255)};
      while (std::abs(c[0] - colour[0][0]) + std::abs(c[1] - colour[0][1]) +
                 std::abs(c[2] - colour[0][2]) < cfg.min_contrast);
      colour.push_back(c);
      const int kind = int(rng() % 3);
      const double cy = uni(0.2, 0.8) * H, cx = uni(0.2, 0.8) * W;
      const double ry = uni(0.1, 0.25) * H, rx = uni(0.1, 0.25) * W, rot = uni(0, 3.14159);
      const double cr = std::cos(rot), sr = std::sin(rot);
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
          const double u = (dx * cr + dy * sr) / rx, v = (-dx * sr + dy * cr) / ry;
          bool in = false;
          if (kind == 0) in = std::abs(u) <= 1 && std::abs(v) <= 1;
          else if (kind == 1) in = u * u + v * v <= 1;
          else in = v <= 0.5 && v >= 2 * std::abs(u) - 1;
          if (in) label[y * W + x] = int(s);
        }
    }
    Sample smp;
    smp.id = "toy" + std::to_string(n);
    smp.image = Raster(H, W, 3);
    smp.gt = Raster(H, W, 1);
    std::normal_distribution<double> noise(0, cfg.noise);
    eval::BinaryMap boundary(H, W);
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        const int l = label[y * W + x];
        const double shade = l == 0 ? 30 * (tilt[0] * (double(y) / H - 0.5) +
                                            tilt[1] * (double(x) / W - 0.5))
                                    : 0;
        for (std::size_t c = 0; c < 3; ++c)
          smp.image.at(y, x, c) = std::uint8_t(
              std::clamp(std::lround(colour[std::size_t(l)][c] + shade + noise(rng)), 0L, 255L));
        const bool edge = (x + 1 < W && label[y * W + x + 1] != l) ||
                          (y + 1 < H && label[(y + 1) * W + x] != l);
        boundary(y, x) = edge;
      }
    boundary = eval::thin(std::move(boundary));
    for (std::size_t i = 0; i < H * W; ++i) smp.gt.pixels[i] = boundary.bits[i] ? 255 : 0;
    smp.provenance.push_back("synthetic:toy-shapes");
    out.push_back(std::move(smp));
  }
  return out;
}

}  // namespace dexined
