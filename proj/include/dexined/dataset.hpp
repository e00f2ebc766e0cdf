#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dexined/error.hpp"
#include "dexined/image.hpp"
#include "dexined/tensor.hpp"

namespace dexined {

// An RGB image with its single-channel edge annotation (255 = edge).
struct Sample {
  Raster image;
  Raster gt;
  std::string id;
  std::vector<std::string> provenance;
};

inline void check_pair(const Sample& s) {
  if (s.image.channels != 3) throw DataError(s.id + ": image must have 3 channels");
  if (s.gt.channels != 1) throw DataError(s.id + ": ground truth must have 1 channel");
  if (s.image.width != s.gt.width || s.image.height != s.gt.height)
    throw DataError(s.id + ": image is " + s.image.extent() + " but ground truth is " +
                    s.gt.extent());
}

inline Raster replicate_gray(const Raster& g) {
  Raster out(g.height, g.width, 3);
  for (std::size_t i = 0; i < g.height * g.width; ++i)
    for (std::size_t c = 0; c < 3; ++c) out.pixels[i * 3 + c] = g.pixels[i];
  return out;
}

// Decodes an image/annotation pair. A grayscale image is replicated to three
// channels and the replication is recorded in the provenance. An RGB
// annotation is accepted only when its three channels agree.
inline Sample load_pair(const std::filesystem::path& image_path,
                        const std::filesystem::path& gt_path, std::string id = {}) {
  Sample s;
  s.id = id.empty() ? image_path.stem().string() : std::move(id);
  s.image = read_png(image_path);
  if (s.image.channels == 1) {
    s.image = replicate_gray(s.image);
    s.provenance.push_back("warning: grayscale image replicated to 3 channels");
  }
  Raster g = read_png(gt_path);
  if (g.channels == 3) {
    Raster one(g.height, g.width, 1);
    for (std::size_t i = 0; i < g.height * g.width; ++i) {
      const auto* p = &g.pixels[i * 3];
      if (p[0] != p[1] || p[1] != p[2])
        throw DataError(gt_path.string() + ": ground truth must be single-channel");
      one.pixels[i] = p[0];
    }
    g = std::move(one);
  }
  s.gt = std::move(g);
  if (s.image.width != s.gt.width || s.image.height != s.gt.height)
    throw DataError("size mismatch: image '" + image_path.string() + "' is " + s.image.extent() +
                    ", ground truth '" + gt_path.string() + "' is " + s.gt.extent());
  return s;
}

struct DatasetEntry {
  std::filesystem::path image, gt;
};

// One `image<TAB>gt` pair per line; blank lines and '#' comments are skipped.
// Relative paths resolve against the list file's directory.
inline std::vector<DatasetEntry> parse_dataset_list(const std::string& text,
                                                    const std::filesystem::path& base) {
  std::vector<DatasetEntry> out;
  std::istringstream in(text);
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw DataError("dataset list line " + std::to_string(lineno) +
                      ": expected 'image<TAB>gt'");
    std::filesystem::path img = line.substr(0, tab), gt = line.substr(tab + 1);
    if (img.is_relative()) img = base / img;
    if (gt.is_relative()) gt = base / gt;
    out.push_back({img, gt});
  }
  return out;
}

inline std::vector<DatasetEntry> read_dataset_list(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  auto entries = parse_dataset_list(std::string(bytes.begin(), bytes.end()), path.parent_path());
  if (entries.empty()) throw DataError("dataset list '" + path.string() + "' is empty");
  return entries;
}

// Per-channel mean and standard deviation of images scaled to [0, 1].
struct NormStats {
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> std{0.25, 0.25, 0.25};
};

inline NormStats compute_norm_stats(const std::vector<Sample>& samples) {
  std::array<double, 3> sum{}, sq{};
  double n = 0;
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < s.image.height * s.image.width; ++i)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = s.image.pixels[i * 3 + c] / 255.0;
        sum[c] += v;
        sq[c] += v * v;
      }
    n += double(s.image.height * s.image.width);
  }
  if (n == 0) throw DataError("normalization statistics need at least one pixel");
  NormStats st;
  for (std::size_t c = 0; c < 3; ++c) {
    st.mean[c] = sum[c] / n;
    st.std[c] = std::sqrt(std::max(sq[c] / n - st.mean[c] * st.mean[c], 0.0));
    if (st.std[c] < 1e-3) st.std[c] = 1e-3;  // flat channel
  }
  return st;
}

// [1 x 3 x H x W] standardized image of a window of the sample.
template <class T>
Tensor<T> image_tensor(const Raster& img, const NormStats& ns, std::size_t top = 0,
                       std::size_t left = 0, std::size_t h = 0, std::size_t w = 0) {
  if (!h) h = img.height - top;
  if (!w) w = img.width - left;
  Tensor<T> t({1, 3, h, w});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        t.at(0, c, y, x) =
            static_cast<T>((img.at(top + y, left + x, c) / 255.0 - ns.mean[c]) / ns.std[c]);
  return t;
}

// [1 x 1 x H x W] binary annotation: 1 where value/255 >= 0.5.
template <class T>
Tensor<T> gt_tensor(const Raster& gt, std::size_t top = 0, std::size_t left = 0,
                    std::size_t h = 0, std::size_t w = 0) {
  if (!h) h = gt.height - top;
  if (!w) w = gt.width - left;
  Tensor<T> t({1, 1, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) t.at(0, 0, y, x) = gt.at(top + y, left + x) >= 128 ? T(1) : T(0);
  return t;
}

}  // namespace dexined
