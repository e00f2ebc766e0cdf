#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "dexined/dataset.hpp"
#include "dexined/error.hpp"

namespace dexined {

// Left and right halves of widths floor(W/2) and ceil(W/2).
inline std::pair<Sample, Sample> split_halves(const Sample& s) {
  check_pair(s);
  if (s.image.width < 2) throw DataError(s.id + ": too narrow to split");
  auto cut = [](const Raster& r, std::size_t x0, std::size_t w) {
    Raster out(r.height, w, r.channels);
    for (std::size_t y = 0; y < r.height; ++y)
      std::copy_n(&r.pixels[(y * r.width + x0) * r.channels], w * r.channels,
                  &out.pixels[y * w * r.channels]);
    return out;
  };
  const std::size_t lw = s.image.width / 2, rw = s.image.width - lw;
  Sample l{cut(s.image, 0, lw), cut(s.gt, 0, lw), s.id, s.provenance};
  Sample r{cut(s.image, lw, rw), cut(s.gt, lw, rw), s.id, s.provenance};
  l.provenance.push_back("half:left");
  r.provenance.push_back("half:right");
  return {std::move(l), std::move(r)};
}

inline Raster hflip(const Raster& r) {
  Raster out(r.height, r.width, r.channels);
  for (std::size_t y = 0; y < r.height; ++y)
    for (std::size_t x = 0; x < r.width; ++x)
      for (std::size_t c = 0; c < r.channels; ++c) out.at(y, r.width - 1 - x, c) = r.at(y, x, c);
  return out;
}

inline Sample hflip(const Sample& s) {
  Sample out{hflip(s.image), hflip(s.gt), s.id, s.provenance};
  out.provenance.push_back("hflip");
  return out;
}

// Image values v in [0,1] become v^g; the annotation is untouched.
inline Sample gamma_correct(const Sample& s, double g) {
  if (!(g > 0) || !std::isfinite(g)) throw ConfigError("gamma must be positive and finite");
  std::uint8_t lut[256];
  for (int v = 0; v < 256; ++v)
    lut[v] = static_cast<std::uint8_t>(std::lround(255.0 * std::pow(v / 255.0, g)));
  Sample out = s;
  for (auto& p : out.image.pixels) p = lut[p];
  char buf[48];
  std::snprintf(buf, sizeof buf, "gamma:%.4f", g);
  out.provenance.push_back(buf);
  return out;
}

// Largest axis-aligned rectangle centred inside a w x h frame rotated by
// angle (radians).
inline std::pair<double, double> inner_rectangle(double w, double h, double angle) {
  if (w <= 0 || h <= 0) return {0, 0};
  const bool wide = w >= h;
  const double long_side = wide ? w : h, short_side = wide ? h : w;
  const double sa = std::abs(std::sin(angle)), ca = std::abs(std::cos(angle));
  if (short_side <= 2 * sa * ca * long_side || std::abs(sa - ca) < 1e-10) {
    // half-constrained: two corners touch the longer side
    const double x = 0.5 * short_side;
    return wide ? std::pair{x / sa, x / ca} : std::pair{x / ca, x / sa};
  }
  const double cos2a = ca * ca - sa * sa;
  return {(w * ca - h * sa) / cos2a, (h * ca - w * sa) / cos2a};
}

namespace detail {

inline std::string format_angle(double deg) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", deg);
  std::string s = buf;
  s.erase(s.find_last_not_of('0') + 1);
  if (s.back() == '.') s.pop_back();
  if (s == "-0") s = "0";
  return s;
}

// Exact quarter turns; positive is counterclockwise as displayed.
inline Raster quarter_turn(const Raster& r, int quarters) {
  quarters = ((quarters % 4) + 4) % 4;
  if (quarters == 0) return r;
  const bool swap = quarters % 2 == 1;
  Raster out(swap ? r.width : r.height, swap ? r.height : r.width, r.channels);
  for (std::size_t y = 0; y < r.height; ++y)
    for (std::size_t x = 0; x < r.width; ++x) {
      std::size_t oy, ox;
      if (quarters == 1) oy = r.width - 1 - x, ox = y;
      else if (quarters == 2) oy = r.height - 1 - y, ox = r.width - 1 - x;
      else oy = x, ox = r.height - 1 - y;
      for (std::size_t c = 0; c < r.channels; ++c) out.at(oy, ox, c) = r.at(y, x, c);
    }
  return out;
}

}  // namespace detail

// Rotates image and annotation about the centre by angle_deg (positive is
// counterclockwise as displayed) and crops the largest axis-aligned
// rectangle inside the rotated footprint. The image is resampled bilinearly.
// Annotation pixels are taken nearest-neighbour and, in addition, each
// source edge pixel is splatted to the output pixel containing its rotated
// centre, so the annotation stays binary and no edge pixel is lost.
inline Sample rotate_inner_crop(const Sample& s, double angle_deg) {
  check_pair(s);
  if (!(angle_deg > -180 && angle_deg <= 180))
    throw ConfigError("rotation angle must lie in (-180, 180], got " + std::to_string(angle_deg));
  Sample out = s;
  out.provenance.push_back("rotate:" + detail::format_angle(angle_deg));
  const double quarters = angle_deg / 90.0;
  if (quarters == std::round(quarters)) {
    out.image = detail::quarter_turn(s.image, int(quarters));
    out.gt = detail::quarter_turn(s.gt, int(quarters));
    return out;
  }
  const double a = angle_deg * std::numbers::pi / 180.0;
  const double W = double(s.image.width), H = double(s.image.height);
  const auto [wr, hr] = inner_rectangle(W, H, a);
  const std::size_t cw = std::size_t(std::floor(wr + 1e-6)), ch = std::size_t(std::floor(hr + 1e-6));
  if (cw < 1 || ch < 1)
    throw DataError(s.id + ": rotation by " + detail::format_angle(angle_deg) + " degrees of a " +
                    s.image.extent() + " frame leaves no inner rectangle");
  const double ca = std::cos(a), sa = std::sin(a);
  // rotated = R * source, with (x right, y down): x' = x c + y s, y' = -x s + y c
  Raster img(ch, cw, 3), gt(ch, cw, 1);
  for (std::size_t oy = 0; oy < ch; ++oy)
    for (std::size_t ox = 0; ox < cw; ++ox) {
      const double u = ox + 0.5 - cw / 2.0, v = oy + 0.5 - ch / 2.0;
      const double sx = u * ca - v * sa + W / 2.0 - 0.5;
      const double sy = u * sa + v * ca + H / 2.0 - 0.5;
      const double fx = std::clamp(sx, 0.0, W - 1), fy = std::clamp(sy, 0.0, H - 1);
      const std::size_t x0 = std::size_t(fx), y0 = std::size_t(fy);
      const std::size_t x1 = std::min(x0 + 1, s.image.width - 1),
                        y1 = std::min(y0 + 1, s.image.height - 1);
      const double tx = fx - double(x0), ty = fy - double(y0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = s.image.at(y0, x0, c) * (1 - tx) + s.image.at(y0, x1, c) * tx;
        const double bot = s.image.at(y1, x0, c) * (1 - tx) + s.image.at(y1, x1, c) * tx;
        img.at(oy, ox, c) = static_cast<std::uint8_t>(std::lround(top * (1 - ty) + bot * ty));
      }
      const std::size_t nx = std::size_t(std::lround(fx)), ny = std::size_t(std::lround(fy));
      gt.at(oy, ox) = s.gt.at(ny, nx) >= 128 ? 255 : 0;
    }
  for (std::size_t y = 0; y < s.gt.height; ++y)
    for (std::size_t x = 0; x < s.gt.width; ++x) {
      if (s.gt.at(y, x) < 128) continue;
      const double px = x + 0.5 - W / 2.0, py = y + 0.5 - H / 2.0;
      const double rx = px * ca + py * sa + cw / 2.0, ry = -px * sa + py * ca + ch / 2.0;
      if (rx < 0 || ry < 0 || rx >= double(cw) || ry >= double(ch)) continue;
      gt.at(std::size_t(ry), std::size_t(rx)) = 255;
    }
  out.image = std::move(img);
  out.gt = std::move(gt);
  return out;
}

struct AugmentConfig {
  bool split_halves = true;
  std::vector<double> rotation_angles;  // degrees, excluding the identity
  bool include_identity_rotation = true;
  bool flip_horizontal = true;
  std::vector<double> gammas = {0.3030, 0.6060};
  bool include_identity_gamma = true;

  std::size_t halves() const { return split_halves ? 2 : 1; }
  std::size_t rotations() const { return rotation_angles.size() + include_identity_rotation; }
  std::size_t flips() const { return flip_horizontal ? 2 : 1; }
  std::size_t gamma_variants() const { return gammas.size() + include_identity_gamma; }
  std::size_t count() const { return halves() * rotations() * flips() * gamma_variants(); }

  void validate() const {
    for (double a : rotation_angles)
      if (!(a > -180 && a <= 180) || a == 0)
        throw ConfigError("rotation angles must be non-zero and lie in (-180, 180]");
    for (double g : gammas)
      if (!(g > 0) || !std::isfinite(g)) throw ConfigError("gammas must be positive");
    if (count() == 0) throw ConfigError("augmentation lattice is empty");
  }

  // `steps` angles at multiples of 360/steps, mapped into (-180, 180].
  static std::vector<double> even_angles(std::size_t steps) {
    std::vector<double> out;
    for (std::size_t k = 1; k < steps; ++k) {
      double a = 360.0 * double(k) / double(steps);
      if (a > 180) a -= 360;
      out.push_back(a);
    }
    return out;
  }

  // 2 halves x (identity + 15 rotations at 22.5 degree steps) x 2 flips x
  // (identity + 2 gammas) = 192.
  static AugmentConfig biped_literal() {
    AugmentConfig c;
    c.rotation_angles = even_angles(16);
    return c;
  }

  // Same lattice with 24 rotation variants (15 degree steps) = 288.
  static AugmentConfig biped_288() {
    AugmentConfig c;
    c.rotation_angles = even_angles(24);
    return c;
  }

  static AugmentConfig identity() {
    AugmentConfig c;
    c.split_halves = false;
    c.flip_horizontal = false;
    c.gammas.clear();
    return c;
  }
};

inline std::string variant_name(const std::string& id, std::size_t half, double angle,
                                bool flip, std::size_t gamma_index) {
  return id + "_h" + std::to_string(half) + "_r" + detail::format_angle(angle) + "_f" +
         (flip ? "1" : "0") + "_g" + std::to_string(gamma_index);
}

// Visits the full lattice in canonical order: half, rotation, flip, gamma.
// Each emitted sample carries its variant name as id. Returns the count.
inline std::size_t augment_visit(const Sample& s, const AugmentConfig& cfg,
                                 const std::function<void(Sample&&)>& emit) {
  cfg.validate();
  check_pair(s);
  std::vector<Sample> halves;
  if (cfg.split_halves) {
    auto [l, r] = split_halves(s);
    halves.push_back(std::move(l));
    halves.push_back(std::move(r));
  } else {
    halves.push_back(s);
  }
  std::vector<double> angles;
  if (cfg.include_identity_rotation) angles.push_back(0.0);
  angles.insert(angles.end(), cfg.rotation_angles.begin(), cfg.rotation_angles.end());

  std::size_t emitted = 0;
  for (std::size_t h = 0; h < halves.size(); ++h)
    for (double angle : angles) {
      Sample rotated;
      try {
        rotated = angle == 0 ? halves[h] : rotate_inner_crop(halves[h], angle);
      } catch (const DataError& e) {
        throw DataError("augment " + s.id + " (half " + std::to_string(h) + ", rotation " +
                        detail::format_angle(angle) + "): " + e.what());
      }
      for (int f = 0; f < int(cfg.flips()); ++f) {
        const Sample flipped = f ? hflip(rotated) : rotated;
        for (std::size_t g = cfg.include_identity_gamma ? 0 : 1; g <= cfg.gammas.size(); ++g) {
          Sample v = g ? gamma_correct(flipped, cfg.gammas[g - 1]) : flipped;
          v.id = variant_name(s.id, h, angle, f == 1, g);
          emit(std::move(v));
          ++emitted;
        }
      }
    }
  if (emitted != cfg.count())
    throw Error("augment: emitted " + std::to_string(emitted) + " samples, expected " +
                std::to_string(cfg.count()));
  return emitted;
}

inline std::vector<Sample> augment(const Sample& s, const AugmentConfig& cfg) {
  std::vector<Sample> out;
  augment_visit(s, cfg, [&](Sample&& v) { out.push_back(std::move(v)); });
  return out;
}

}  // namespace dexined
