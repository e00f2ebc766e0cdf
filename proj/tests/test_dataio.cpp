#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <set>

#include "dexined/augment.hpp"
#include "dexined/dataset.hpp"
#include "dexined/hash.hpp"
#include "dexined/image.hpp"

using namespace dexined;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dexined_dataio_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Raster noise_raster(std::size_t h, std::size_t w, std::size_t c, unsigned seed) {
  std::mt19937 rng(seed);
  Raster r(h, w, c);
  for (auto& p : r.pixels) p = std::uint8_t(rng() & 255);
  return r;
}

Raster sparse_gt(std::size_t h, std::size_t w, unsigned seed, double density = 0.05) {
  std::mt19937 rng(seed);
  std::bernoulli_distribution edge(density);
  Raster r(h, w, 1);
  for (auto& p : r.pixels) p = edge(rng) ? 255 : 0;
  return r;
}

Sample make_sample(std::size_t h, std::size_t w, unsigned seed) {
  return {noise_raster(h, w, 3, seed), sparse_gt(h, w, seed + 1), "s" + std::to_string(seed), {}};
}

bool is_binary(const Raster& r) {
  for (auto p : r.pixels)
    if (p != 0 && p != 255) return false;
  return true;
}

std::size_t edge_count(const Raster& r) {
  std::size_t n = 0;
  for (auto p : r.pixels) n += p == 255;
  return n;
}

}  // namespace

TEST(Png, RoundTripRgbAndGray) {
  const auto dir = scratch_dir("png");
  for (std::size_t c : {1u, 3u}) {
    const Raster r = noise_raster(17, 23, c, 5 + unsigned(c));
    const auto path = dir / ("r" + std::to_string(c) + ".png");
    write_png(path, r);
    EXPECT_EQ(read_png(path), r);
  }
}

TEST(Png, EncodingIsDeterministic) {
  const Raster r = noise_raster(9, 11, 3, 2);
  EXPECT_EQ(encode_png(r), encode_png(r));
}

TEST(Png, RejectsSixteenBit) {
  // hand-build a 16-bit grayscale PNG through libpng
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> bytes;
  png_set_write_fn(
      png, &bytes,
      [](png_structp p, png_bytep data, png_size_t n) {
        auto* v = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
        v->insert(v->end(), data, data + n);
      },
      nullptr);
  png_set_IHDR(png, info, 2, 2, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::uint8_t row[4] = {0, 1, 2, 3};
  png_write_row(png, row);
  png_write_row(png, row);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  try {
    decode_png(bytes, "deep.png");
    FAIL() << "16-bit PNG accepted";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("8-bit"), std::string::npos);
  }
}

TEST(Png, RejectsGarbageAndTruncation) {
  EXPECT_THROW(decode_png({1, 2, 3}, "x"), DataError);
  auto bytes = encode_png(noise_raster(8, 8, 3, 1));
  bytes.resize(bytes.size() / 2);
  EXPECT_THROW(decode_png(bytes, "half"), DataError);
  EXPECT_THROW(read_png("/nonexistent/file.png"), DataError);
}

TEST(Hash, KnownVectors) {
  EXPECT_EQ(sha1_hex(""), "da39a3ee5e6b4b0d3255bfef95601890afd80709");
  EXPECT_EQ(sha1_hex("abc"), "a9993e364706816aba3e25717850c26c9cd0d89d");
  // `printf 'hello\n' | git hash-object --stdin`
  EXPECT_EQ(git_blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST(LoadPair, MatchingExtents) {
  const auto dir = scratch_dir("pair");
  const Sample s = make_sample(72, 128, 3);
  write_png(dir / "a.png", s.image);
  write_png(dir / "a_gt.png", s.gt);
  const Sample t = load_pair(dir / "a.png", dir / "a_gt.png");
  EXPECT_EQ(t.id, "a");
  EXPECT_EQ(t.image, s.image);
  EXPECT_EQ(t.gt, s.gt);
  EXPECT_TRUE(t.provenance.empty());
}

TEST(LoadPair, SizeMismatchNamesBothExtents) {
  const auto dir = scratch_dir("mismatch");
  write_png(dir / "a.png", noise_raster(72, 128, 3, 1));
  write_png(dir / "a_gt.png", sparse_gt(70, 128, 1));
  try {
    load_pair(dir / "a.png", dir / "a_gt.png");
    FAIL() << "mismatch accepted";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("128x72"), std::string::npos);
    EXPECT_NE(msg.find("128x70"), std::string::npos);
  }
}

TEST(LoadPair, GrayscaleImageIsReplicatedWithWarning) {
  const auto dir = scratch_dir("gray");
  const Raster g = noise_raster(10, 12, 1, 4);
  write_png(dir / "g.png", g);
  write_png(dir / "g_gt.png", sparse_gt(10, 12, 4));
  const Sample s = load_pair(dir / "g.png", dir / "g_gt.png");
  ASSERT_EQ(s.image.channels, 3u);
  for (std::size_t y = 0; y < 10; ++y)
    for (std::size_t x = 0; x < 12; ++x)
      for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(s.image.at(y, x, c), g.at(y, x));
  ASSERT_EQ(s.provenance.size(), 1u);
  EXPECT_NE(s.provenance[0].find("warning"), std::string::npos);
}

TEST(LoadPair, ColouredGroundTruthIsRejected) {
  const auto dir = scratch_dir("colgt");
  write_png(dir / "a.png", noise_raster(6, 6, 3, 1));
  write_png(dir / "a_gt.png", noise_raster(6, 6, 3, 2));
  EXPECT_THROW(load_pair(dir / "a.png", dir / "a_gt.png"), DataError);
}

TEST(DatasetList, ParsesCommentsAndResolvesRelativePaths) {
  const auto entries = parse_dataset_list(
      "# header\n\nimgs/a.png\tgt/a.png\r\n/abs/b.png\t/abs/b_gt.png\n", "/data");
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[0].image, fs::path("/data/imgs/a.png"));
  EXPECT_EQ(entries[0].gt, fs::path("/data/gt/a.png"));
  EXPECT_EQ(entries[1].image, fs::path("/abs/b.png"));
  EXPECT_THROW(parse_dataset_list("no-tab-here\n", "/"), DataError);
  const auto dir = scratch_dir("list");
  write_text_atomic(dir / "empty.lst", "# nothing\n");
  EXPECT_THROW(read_dataset_list(dir / "empty.lst"), DataError);
}

TEST(NormStats, MatchesDirectComputation) {
  std::vector<Sample> ss = {make_sample(5, 7, 1), make_sample(3, 4, 2)};
  const NormStats st = compute_norm_stats(ss);
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0, n = 0;
    for (const auto& s : ss)
      for (std::size_t i = 0; i < s.image.height * s.image.width; ++i, ++n)
        sum += s.image.pixels[i * 3 + c] / 255.0;
    const double mean = sum / n;
    double var = 0;
    for (const auto& s : ss)
      for (std::size_t i = 0; i < s.image.height * s.image.width; ++i)
        var += std::pow(s.image.pixels[i * 3 + c] / 255.0 - mean, 2);
    EXPECT_NEAR(st.mean[c], mean, 1e-12);
    EXPECT_NEAR(st.std[c], std::sqrt(var / n), 1e-9);
  }
  const auto t = image_tensor<double>(ss[0].image, st);
  EXPECT_NEAR(t.at(0, 1, 2, 3), (ss[0].image.at(2, 3, 1) / 255.0 - st.mean[1]) / st.std[1], 1e-12);
}

TEST(Halves, EvenAndOddWidthsRecombine) {
  for (std::size_t w : {1280u, 641u}) {
    const Sample s = make_sample(4, w, unsigned(w));
    const auto [l, r] = split_halves(s);
    EXPECT_EQ(l.image.width, w / 2);
    EXPECT_EQ(r.image.width, w - w / 2);
    EXPECT_EQ(l.gt.width, l.image.width);
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const bool left = x < w / 2;
        const std::size_t xx = left ? x : x - w / 2;
        for (std::size_t c = 0; c < 3; ++c)
          ASSERT_EQ((left ? l : r).image.at(y, xx, c), s.image.at(y, x, c));
        ASSERT_EQ((left ? l : r).gt.at(y, xx), s.gt.at(y, x));
      }
  }
}

TEST(Flip, InvolutionAndCoordinateMirror) {
  const Sample s = make_sample(9, 13, 7);
  const Sample f = hflip(s);
  const Sample ff = hflip(f);
  EXPECT_EQ(ff.image, s.image);
  EXPECT_EQ(ff.gt, s.gt);
  for (std::size_t y = 0; y < 9; ++y)
    for (std::size_t x = 0; x < 13; ++x) EXPECT_EQ(f.gt.at(y, 12 - x), s.gt.at(y, x));
  Raster sym(3, 4, 3);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 4; ++x)
      for (std::size_t c = 0; c < 3; ++c) sym.at(y, x, c) = std::uint8_t(10 * y + (x < 2 ? x : 3 - x));
  EXPECT_EQ(hflip(sym), sym);
}

TEST(Gamma, EndpointsIdentityAndMidGray) {
  Sample s = make_sample(2, 3, 1);
  s.image.pixels = {0, 255, 128, 0, 255, 128, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  for (double g : {0.3030, 0.6060, 2.0}) {
    const Sample t = gamma_correct(s, g);
    EXPECT_EQ(t.image.pixels[0], 0);
    EXPECT_EQ(t.image.pixels[1], 255);
    EXPECT_EQ(t.gt, s.gt);
  }
  EXPECT_EQ(gamma_correct(s, 1.0).image, s.image);
  EXPECT_NEAR(std::pow(0.5, 0.3030), 0.8106, 5e-5);
  // 128/255 is the closest 8-bit mid-gray
  EXPECT_EQ(gamma_correct(s, 0.3030).image.pixels[2],
            std::lround(255 * std::pow(128 / 255.0, 0.3030)));
  EXPECT_NEAR(gamma_correct(s, 0.3030).image.pixels[2] / 255.0, 0.8106, 3.0 / 255);
  EXPECT_THROW(gamma_correct(s, 0.0), ConfigError);
}

TEST(Rotate, ZeroIsIdentity) {
  const Sample s = make_sample(30, 40, 2);
  const Sample t = rotate_inner_crop(s, 0);
  EXPECT_EQ(t.image, s.image);
  EXPECT_EQ(t.gt, s.gt);
  EXPECT_EQ(t.provenance.back(), "rotate:0");
}

TEST(Rotate, QuarterTurnOnSquareKeepsFullFrame) {
  const Sample s = make_sample(16, 16, 3);
  const Sample t = rotate_inner_crop(s, 90);
  ASSERT_EQ(t.image.width, 16u);
  ASSERT_EQ(t.image.height, 16u);
  // counterclockwise: the right column becomes the top row
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x) {
      EXPECT_EQ(t.gt.at(15 - x, y), s.gt.at(y, x));
      EXPECT_EQ(t.image.at(15 - x, y, 1), s.image.at(y, x, 1));
    }
  const Sample back = rotate_inner_crop(rotate_inner_crop(t, 180), 90);
  EXPECT_EQ(back.image, s.image);
  EXPECT_EQ(rotate_inner_crop(s, -90).gt, rotate_inner_crop(rotate_inner_crop(s, 180), 90).gt);
}

TEST(Rotate, InnerRectangleFormulaAgreesWithFootprintSearch) {
  // brute force: for each aspect ratio, the largest centred rectangle whose
  // corners lie in the rotated frame, found by bisection on scale
  const double W = 640, H = 720, a = 30 * std::numbers::pi / 180;
  const double c = std::cos(a), s = std::sin(a);
  auto inside = [&](double w, double h) {
    for (double sx : {-1.0, 1.0})
      for (double sy : {-1.0, 1.0}) {
        const double u = sx * w / 2, v = sy * h / 2;
        const double x = u * c - v * s, y = u * s + v * c;
        if (std::abs(x) > W / 2 + 1e-9 || std::abs(y) > H / 2 + 1e-9) return false;
      }
    return true;
  };
  double best = 0, bw = 0, bh = 0;
  for (int i = 1; i < 4000; ++i) {
    const double ang = i * (std::numbers::pi / 2) / 4000;
    double lo = 0, hi = 2000;
    for (int it = 0; it < 60; ++it) {
      const double m = 0.5 * (lo + hi);
      (inside(m * std::cos(ang), m * std::sin(ang)) ? lo : hi) = m;
    }
    const double w = lo * std::cos(ang), h = lo * std::sin(ang);
    if (w * h > best) best = w * h, bw = w, bh = h;
  }
  const auto [wr, hr] = inner_rectangle(W, H, a);
  EXPECT_TRUE(inside(wr, hr));
  EXPECT_GE(wr * hr, best * (1 - 1e-9));
  EXPECT_NEAR(wr * hr, best, best * 1e-4);
  EXPECT_NEAR(wr, bw, 1.0);
  EXPECT_NEAR(hr, bh, 1.0);

  Sample smp{Raster(720, 640, 3, 100), Raster(720, 640, 1), "f", {}};
  const Sample t = rotate_inner_crop(smp, 30);
  EXPECT_EQ(t.image.width, std::size_t(std::floor(wr)));
  EXPECT_EQ(t.image.height, std::size_t(std::floor(hr)));
  // rasterized footprint: every output pixel samples inside the source frame,
  // so a constant image stays constant
  for (auto p : t.image.pixels) ASSERT_EQ(p, 100);
}

TEST(Rotate, InnerRectangleIsInsideForManyShapes) {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> side(10, 2000), angle(-179, 180);
  for (int i = 0; i < 500; ++i) {
    const double W = side(rng), H = side(rng), deg = angle(rng);
    const double a = deg * std::numbers::pi / 180;
    const auto [w, h] = inner_rectangle(W, H, a);
    const double c = std::cos(a), s = std::sin(a);
    for (double sx : {-1.0, 1.0})
      for (double sy : {-1.0, 1.0}) {
        const double x = sx * w / 2 * c - sy * h / 2 * s, y = sx * w / 2 * s + sy * h / 2 * c;
        ASSERT_LE(std::abs(x), W / 2 + 1e-6 * W);
        ASSERT_LE(std::abs(y), H / 2 + 1e-6 * H);
      }
  }
}

TEST(Rotate, DegenerateCropIsAnError) {
  Sample s{Raster(1, 400, 3), Raster(1, 400, 1), "thin", {}};
  EXPECT_THROW(rotate_inner_crop(s, 45), DataError);
  EXPECT_THROW(rotate_inner_crop(s, 181), ConfigError);
  EXPECT_THROW(rotate_inner_crop(s, -180), ConfigError);
}

TEST(Rotate, GroundTruthStaysBinaryAndAligned) {
  for (double deg : {22.5, -67.5, 135.0, 15.0, -165.0}) {
    for (int k = 0; k < 20; ++k) {
      // single interior edge pixel; a matching bright image pixel
      const std::size_t H = 48, W = 64, y = 18 + k % 12, x = 24 + (k * 7) % 16;
      Sample s{Raster(H, W, 3), Raster(H, W, 1), "p", {}};
      s.gt.at(y, x) = 255;
      for (std::size_t c = 0; c < 3; ++c) s.image.at(y, x, c) = 255;
      const Sample t = rotate_inner_crop(s, deg);
      ASSERT_TRUE(is_binary(t.gt));
      const double a = deg * std::numbers::pi / 180, ca = std::cos(a), sa = std::sin(a);
      const double px = x + 0.5 - W / 2.0, py = y + 0.5 - H / 2.0;
      const double rx = px * ca + py * sa + t.gt.width / 2.0;
      const double ry = -px * sa + py * ca + t.gt.height / 2.0;
      if (rx < 0 || ry < 0 || rx >= double(t.gt.width) || ry >= double(t.gt.height)) continue;
      const std::size_t oy = std::size_t(ry), ox = std::size_t(rx);
      EXPECT_EQ(t.gt.at(oy, ox), 255) << deg << " " << y << "," << x;
      EXPECT_GT(t.image.at(oy, ox, 0), 0) << deg;
      EXPECT_LE(edge_count(t.gt), 2u);
    }
  }
}

TEST(Augment, CountEqualsProductForArbitraryConfigs) {
  std::mt19937 rng(11);
  const Sample s = make_sample(20, 24, 1);
  for (int i = 0; i < 40; ++i) {
    AugmentConfig cfg;
    cfg.split_halves = rng() & 1;
    cfg.flip_horizontal = rng() & 1;
    cfg.include_identity_rotation = rng() & 1;
    cfg.include_identity_gamma = rng() & 1;
    cfg.rotation_angles.clear();
    for (unsigned k = rng() % 4; k > 0; --k) cfg.rotation_angles.push_back(10.0 * (1 + rng() % 17));
    cfg.gammas.clear();
    for (unsigned k = rng() % 3; k > 0; --k) cfg.gammas.push_back(0.25 * (1 + rng() % 8));
    const std::size_t expected =
        (cfg.split_halves ? 2 : 1) *
        (cfg.rotation_angles.size() + (cfg.include_identity_rotation ? 1 : 0)) *
        (cfg.flip_horizontal ? 2 : 1) * (cfg.gammas.size() + (cfg.include_identity_gamma ? 1 : 0));
    if (expected == 0) {
      EXPECT_THROW(cfg.validate(), ConfigError);
      continue;
    }
    std::size_t seen = 0;
    EXPECT_EQ(augment_visit(s, cfg, [&](Sample&&) { ++seen; }), expected);
    EXPECT_EQ(seen, expected);
    EXPECT_EQ(cfg.count(), expected);
  }
}

TEST(Augment, PresetsYield192And288) {
  EXPECT_EQ(AugmentConfig::biped_literal().count(), 192u);
  EXPECT_EQ(AugmentConfig::biped_literal().rotation_angles.size(), 15u);
  EXPECT_EQ(AugmentConfig::biped_288().count(), 288u);
  const Sample s = make_sample(40, 64, 5);
  const auto out = augment(s, AugmentConfig::biped_literal());
  ASSERT_EQ(out.size(), 192u);
  std::set<std::string> names;
  for (const auto& v : out) {
    names.insert(v.id);
    EXPECT_TRUE(is_binary(v.gt));
    EXPECT_EQ(v.image.width, v.gt.width);
    EXPECT_EQ(v.image.height, v.gt.height);
  }
  EXPECT_EQ(names.size(), 192u);
  EXPECT_EQ(out.front().id, "s5_h0_r0_f0_g0");
  EXPECT_EQ(out[1].id, "s5_h0_r0_f0_g1");
  EXPECT_EQ(out[6].id, "s5_h0_r22.5_f0_g0");
  EXPECT_EQ(out.back().id, "s5_h1_r-22.5_f1_g2");
}

TEST(Augment, IdentityConfigReturnsInput) {
  const Sample s = make_sample(12, 14, 8);
  const auto out = augment(s, AugmentConfig::identity());
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].image, s.image);
  EXPECT_EQ(out[0].gt, s.gt);
}

TEST(Augment, IsPure) {
  const Sample s = make_sample(30, 50, 9);
  const auto a = augment(s, AugmentConfig::biped_288());
  const auto b = augment(s, AugmentConfig::biped_288());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_EQ(encode_png(a[i].image), encode_png(b[i].image));
    EXPECT_EQ(a[i].gt, b[i].gt);
  }
}

TEST(Augment, MemberErrorNamesCoordinates) {
  Sample s{Raster(1, 400, 3), Raster(1, 400, 1), "strip", {}};
  AugmentConfig cfg = AugmentConfig::identity();
  cfg.rotation_angles = {45};
  try {
    augment(s, cfg);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("rotation 45"), std::string::npos) << e.what();
  }
}
