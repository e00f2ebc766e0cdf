#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dexined/error.hpp"
#include "dexined/layers.hpp"
#include "dexined/ops.hpp"
#include "dexined/tape.hpp"
#include "dexined/tensor.hpp"

namespace dexined {

// Which skip-connection families are wired (ablation switch).
//   none  - plain stacked blocks (0C)
//   first - first skip-connections only: pooled output + projected previous block (1C)
//   both  - first and second skip-connections (2C, the full model)
enum class SkipMode { none, first, both };

inline const char* to_string(SkipMode m) {
  switch (m) {
    case SkipMode::none: return "0C";
    case SkipMode::first: return "1C";
    case SkipMode::both: return "2C";
  }
  return "?";
}

inline SkipMode parse_skip_mode(const std::string& s) {
  if (s == "0C") return SkipMode::none;
  if (s == "1C") return SkipMode::first;
  if (s == "2C") return SkipMode::both;
  throw ConfigError("unknown skip mode '" + s + "' (expected 0C, 1C or 2C)");
}

struct BlockSpec {
  std::size_t sub_blocks = 1;
  std::size_t channels = 64;
  std::size_t first_conv_stride = 1;
  bool final_relu = true;
};

struct DexiNedConfig {
  std::array<BlockSpec, 6> blocks = {{{1, 64, 2, true},
                                      {1, 128, 1, true},
                                      {2, 256, 1, false},
                                      {3, 512, 1, false},
                                      {3, 512, 1, false},
                                      {3, 256, 1, false}}};
  std::size_t n_outputs = 7;
  double width_multiplier = 1.0;
  double fusion_init = 1.0 / 6.0;
  std::size_t usnet_features = 16;
  double usnet_init_std = 0.01;
  SkipMode skips = SkipMode::both;
  bool pad_input = true;

  static constexpr std::size_t input_multiple = 32;

  std::size_t width(std::size_t block) const {
    return static_cast<std::size_t>(
        std::floor(double(blocks[block].channels) * width_multiplier + 1e-9));
  }

  void validate() const {
    if (!(width_multiplier > 0 && width_multiplier <= 1))
      throw ConfigError("width_multiplier must lie in (0, 1], got " +
                        std::to_string(width_multiplier));
    if (n_outputs != blocks.size() + 1)
      throw ConfigError("n_outputs must be 7 (six side outputs plus the fused map), got " +
                        std::to_string(n_outputs));
    if (std::abs(fusion_init - 1.0 / double(n_outputs - 1)) > 1e-12)
      throw ConfigError("fusion_init must equal 1/(n_outputs - 1)");
    if (usnet_features == 0) throw ConfigError("usnet_features must be positive");
    if (!(usnet_init_std > 0)) throw ConfigError("usnet_init_std must be positive");
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const BlockSpec& s = blocks[b];
      if (s.sub_blocks == 0)
        throw ConfigError("block " + std::to_string(b + 1) + " needs at least one sub-block");
      if (width(b) == 0)
        throw ConfigError("block " + std::to_string(b + 1) + " has zero channels at width " +
                          std::to_string(width_multiplier));
      if (s.first_conv_stride != (b == 0 ? 2u : 1u))
        throw ConfigError("only block 1 carries a stride-2 first convolution");
      if (b >= 2 && s.final_relu)
        throw ConfigError("blocks 3-6 end without a ReLU");
    }
  }
};

// Upsampling schedule from a feature extent to the ground-truth extent:
// `doubling_passes` stride-2 stages followed by one final stage of scale 1 or 2.
struct UpsamplePlan {
  std::size_t doubling_passes = 0;
  std::size_t final_scale = 1;

  std::size_t factor() const { return (std::size_t{1} << doubling_passes) * final_scale; }
};

inline UpsamplePlan plan_upsampling(std::size_t feature_extent, std::size_t gt_extent) {
  std::size_t factor = 0;
  if (feature_extent > 0 && gt_extent % feature_extent == 0) {
    factor = gt_extent / feature_extent;
    if ((factor & (factor - 1)) != 0) factor = 0;
  }
  if (factor == 0) {
    std::string chain = std::to_string(feature_extent);
    for (std::size_t e = feature_extent; e > 0 && e < gt_extent;) {
      e *= 2;
      chain += " -> " + std::to_string(e);
    }
    throw ShapeError("extent " + std::to_string(gt_extent) + " is not reachable by doubling: " +
                     chain);
  }
  UpsamplePlan p;
  while (factor > 2) {
    factor /= 2;
    ++p.doubling_passes;
  }
  p.final_scale = factor;
  return p;
}

// Conditional upsampler for one side output: doubling stages of
// (1x1 conv -> relu -> 4x4 stride-2 transposed conv) while the map is more
// than 2x smaller than the target, then (1x1 conv to one channel -> relu ->
// s x s stride-s transposed conv). The result is a logit map with no
// activation.
template <class T>
class UpsamplerNet {
 public:
  UpsamplerNet() = default;

  UpsamplerNet(ParameterStore<T>& store, const std::string& prefix, std::size_t in_channels,
               UpsamplePlan plan, std::size_t features, double final_std)
      : plan_(plan) {
    std::size_t in = in_channels;
    for (std::size_t i = 0; i < plan.doubling_passes; ++i) {
      const std::string p = prefix + ".up" + std::to_string(i + 1);
      Stage s;
      s.conv = ConvUnit<T>::make(store, p + ".conv", in, features, 1, 1, false, true);
      s.deconv = DeconvUnit<T>::make(store, p + ".deconv", features, features, 4, 2,
                                     InitScheme::xavier);
      stages_.push_back(s);
      in = features;
    }
    final_.conv = ConvUnit<T>::make(store, prefix + ".final.conv", in, features, 1, 1, false, true,
                                    InitScheme::normal, final_std);
    final_.deconv = DeconvUnit<T>::make(store, prefix + ".final.deconv", features, 1, plan.final_scale,
                                        plan.final_scale, InitScheme::normal, final_std);
  }

  const UpsamplePlan& plan() const { return plan_; }

  Tensor<T> operator()(Tape<T>* tape, ParameterStore<T>& store, const Tensor<T>& feature,
                       std::size_t gt_h, std::size_t gt_w) const {
    const UpsamplePlan ph = plan_upsampling(feature.shape().h, gt_h);
    const UpsamplePlan pw = plan_upsampling(feature.shape().w, gt_w);
    if (ph.factor() != plan_.factor() || pw.factor() != plan_.factor())
      throw ShapeError("upsampler built for factor " + std::to_string(plan_.factor()) +
                       " cannot map " + feature.shape().str() + " to " + std::to_string(gt_h) +
                       "x" + std::to_string(gt_w));
    Tensor<T> x = feature;
    for (const Stage& s : stages_) x = s.deconv(tape, store, s.conv(tape, store, x, ops::Mode::eval));
    return final_.deconv(tape, store, final_.conv(tape, store, x, ops::Mode::eval));
  }

 private:
  struct Stage {
    ConvUnit<T> conv;
    DeconvUnit<T> deconv;
  };
  UpsamplePlan plan_;
  std::vector<Stage> stages_;
  Stage final_;
};

// N logit maps at input resolution: six side outputs then the fused map.
template <class T>
struct SideOutputs {
  std::vector<Tensor<T>> maps;
  const Tensor<T>& fused() const { return maps.back(); }
};

enum class PredictMode { fused, average };

template <class T>
class DexiNed {
 public:
  static constexpr std::size_t kBlocks = 6;
  // spatial reduction of each block feature relative to the input
  static constexpr std::array<std::size_t, kBlocks> kScale = {2, 4, 8, 16, 32, 32};

  DexiNed(const DexiNedConfig& config, std::uint64_t seed) : config_(config), seed_(seed), store_(seed) {
    config_.validate();
    build();
  }

  const DexiNedConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  ParameterStore<T>& store() { return store_; }
  const ParameterStore<T>& store() const { return store_; }
  std::vector<Parameter<T>>& parameters() { return store_.params(); }
  std::size_t parameter_count() const { return store_.scalar_count(); }

  // Encoder features at 1/2, 1/4, 1/8, 1/16, 1/32 and 1/32 of the input.
  std::array<Tensor<T>, kBlocks> dexi_forward(Tape<T>* tape, const Tensor<T>& image,
                                              ops::Mode mode) {
    const Shape s = image.shape();
    if (s.c != 3) throw ShapeError("expected a 3-channel image, got " + s.str());
    if (s.h % DexiNedConfig::input_multiple || s.w % DexiNedConfig::input_multiple || s.h == 0 ||
        s.w == 0)
      throw ShapeError("image extents must be positive multiples of " +
                       std::to_string(DexiNedConfig::input_multiple) + ", got " + s.str());
    const bool fsc = config_.skips != SkipMode::none;
    const bool ssc = config_.skips == SkipMode::both;
    auto& st = store_;

    auto run_block = [&](std::size_t b, Tensor<T> x, const Tensor<T>* second) {
      for (const SubBlock& sb : blocks_[b]) {
        Tensor<T> y = x;
        for (const ConvUnit<T>& u : sb) y = u(tape, st, y, mode);
        x = (second && ssc) ? ops::scalar_mul(tape, ops::add(tape, y, *second), T(0.5)) : y;
      }
      return x;
    };
    auto pool = [&](const Tensor<T>& x) { return ops::maxpool2d(tape, x, 3, 2, 1); };

    std::array<Tensor<T>, kBlocks> out;
    const Tensor<T> b1 = run_block(0, image, nullptr);
    const Tensor<T> b2 = run_block(1, b1, nullptr);
    const Tensor<T> p2 = pool(b2);
    const Tensor<T> f2 = fsc ? ops::add(tape, p2, fsc_[0](tape, st, b1, mode)) : p2;

    Tensor<T> s3;
    if (ssc) s3 = ssc_[0](tape, st, p2, mode);
    const Tensor<T> b3 = run_block(2, f2, &s3);
    const Tensor<T> p3 = pool(b3);
    const Tensor<T> f3 = fsc ? ops::add(tape, p3, fsc_[1](tape, st, f2, mode)) : p3;

    Tensor<T> s4;
    if (ssc) s4 = ssc_[1](tape, st, ops::add(tape, p3, ssc_down_(tape, st, p2, mode)), mode);
    const Tensor<T> b4 = run_block(3, f3, &s4);
    const Tensor<T> p4 = pool(b4);
    const Tensor<T> f4 = fsc ? ops::add(tape, p4, fsc_[2](tape, st, f3, mode)) : p4;

    Tensor<T> s5;
    if (ssc) s5 = ssc_[2](tape, st, p4, mode);
    const Tensor<T> b5 = run_block(4, f4, &s5);
    const Tensor<T> p5 = pool(b5);
    const Tensor<T> f5 = fsc ? ops::add(tape, p5, fsc_[3](tape, st, f4, mode)) : p5;

    Tensor<T> s6;
    if (ssc) s6 = ssc_[3](tape, st, p5, mode);
    const Tensor<T> b6 = run_block(5, f5, &s6);

    out = {b1, f2, f3, f4, f5, b6};
    return out;
  }

  Tensor<T> usnet(Tape<T>* tape, std::size_t side, const Tensor<T>& feature, std::size_t gt_h,
                  std::size_t gt_w) {
    return usnets_.at(side)(tape, store_, feature, gt_h, gt_w);
  }

  // Six side logits plus the fused logit, all at the input's extent. Inputs
  // whose extents are not multiples of 32 are reflect-padded (when enabled)
  // and the outputs cropped back.
  SideOutputs<T> forward(Tape<T>* tape, const Tensor<T>& image, ops::Mode mode) {
    const Shape s = image.shape();
    const std::size_t m = DexiNedConfig::input_multiple;
    const std::size_t ph = (s.h + m - 1) / m * m, pw = (s.w + m - 1) / m * m;
    Tensor<T> input = image;
    if (ph != s.h || pw != s.w) {
      if (!config_.pad_input)
        throw ShapeError("image extents must be multiples of " + std::to_string(m) + ", got " +
                         s.str() + " (enable input padding to accept arbitrary sizes)");
      input = ops::reflect_pad(image, ph, pw);
    }
    auto features = dexi_forward(tape, input, mode);
    SideOutputs<T> result;
    for (std::size_t k = 0; k < kBlocks; ++k) {
      Tensor<T> logit = usnet(tape, k, features[k], ph, pw);
      if (ph != s.h || pw != s.w) logit = ops::crop(tape, logit, 0, 0, s.h, s.w);
      result.maps.push_back(logit);
    }
    const Tensor<T> cat = ops::concat_channels<T>(tape, result.maps);
    result.maps.push_back(fuse_(tape, store_, cat, mode));
    return result;
  }

  // Edge probabilities in [0,1]: the fused map, or the mean of all N maps.
  Tensor<T> predict(const Tensor<T>& image, PredictMode mode) {
    SideOutputs<T> out = forward(nullptr, image, ops::Mode::eval);
    if (mode == PredictMode::fused) return ops::sigmoid<T>(nullptr, out.fused());
    std::vector<Tensor<T>> probs;
    for (const auto& m : out.maps) probs.push_back(ops::sigmoid<T>(nullptr, m));
    return ops::average<T>(nullptr, probs);
  }

 private:
  using SubBlock = std::vector<ConvUnit<T>>;

  void build() {
    std::array<std::size_t, kBlocks> width{};
    for (std::size_t b = 0; b < kBlocks; ++b) width[b] = config_.width(b);
    const bool fsc = config_.skips != SkipMode::none;
    const bool ssc = config_.skips == SkipMode::both;

    std::size_t in = 3;
    for (std::size_t b = 0; b < kBlocks; ++b) {
      const BlockSpec& spec = config_.blocks[b];
      for (std::size_t j = 0; j < spec.sub_blocks; ++j) {
        const std::string p = "block" + std::to_string(b + 1) + ".sub" + std::to_string(j + 1);
        const bool last_sub = j + 1 == spec.sub_blocks;
        SubBlock sb;
        sb.push_back(ConvUnit<T>::make(store_, p + ".conv1", in, width[b], 3,
                                       j == 0 ? spec.first_conv_stride : 1, true, true));
        sb.push_back(ConvUnit<T>::make(store_, p + ".conv2", width[b], width[b], 3, 1, true,
                                       !last_sub || spec.final_relu));
        blocks_[b].push_back(std::move(sb));
        in = width[b];
      }
      if (b >= 1 && b <= 4 && fsc) {
        // previous block feature -> this block's pooled scale and width
        fsc_[b - 1] = ConvUnit<T>::make(store_, "fsc" + std::to_string(b + 1), width[b - 1],
                                        width[b], 1, 2, true, false);
      }
    }
    if (ssc) {
      ssc_[0] = ConvUnit<T>::make(store_, "ssc3", width[1], width[2], 1, 1, true, false);
      ssc_down_ = ConvUnit<T>::make_linear(store_, "ssc4.down", width[1], width[2], 2);
      ssc_[1] = ConvUnit<T>::make(store_, "ssc4", width[2], width[3], 1, 1, true, false);
      ssc_[2] = ConvUnit<T>::make(store_, "ssc5", width[3], width[4], 1, 1, true, false);
      ssc_[3] = ConvUnit<T>::make(store_, "ssc6", width[4], width[5], 1, 1, true, false);
    }
    for (std::size_t k = 0; k < kBlocks; ++k) {
      UpsamplePlan plan;
      std::size_t f = kScale[k];
      while (f > 2) {
        f /= 2;
        ++plan.doubling_passes;
      }
      plan.final_scale = f;
      usnets_[k] = UpsamplerNet<T>(store_, "usnet" + std::to_string(k + 1), width[k], plan,
                                   config_.usnet_features, config_.usnet_init_std);
    }
    fuse_ = ConvUnit<T>::make(store_, "fuse", kBlocks, 1, 1, 1, false, false, InitScheme::constant,
                              config_.fusion_init);
  }

  DexiNedConfig config_;
  std::uint64_t seed_;
  ParameterStore<T> store_;
  std::array<std::vector<SubBlock>, kBlocks> blocks_;
  std::array<ConvUnit<T>, 4> fsc_{};
  std::array<ConvUnit<T>, 4> ssc_{};
  ConvUnit<T> ssc_down_{};
  std::array<UpsamplerNet<T>, kBlocks> usnets_;
  ConvUnit<T> fuse_{};
};

}  // namespace dexined
