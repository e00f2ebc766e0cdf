#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "dexined/error.hpp"
#include "dexined/ops.hpp"
#include "dexined/tensor.hpp"

namespace dexined {

enum class InitScheme { xavier, normal, constant };

inline const char* to_string(InitScheme s) {
  switch (s) {
    case InitScheme::xavier: return "xavier";
    case InitScheme::normal: return "normal";
    case InitScheme::constant: return "constant";
  }
  return "?";
}

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
  InitScheme init = InitScheme::constant;
  double init_value = 0;  // std for normal, value for constant
};

// Flat registry of named parameters and batch-norm statistics. Layers refer
// to their entries by index so the registry can be serialized in order.
// Each parameter draws its initial values from a stream keyed by (seed, name),
// so models that differ only by some layers share the init of the rest.
template <class T>
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed) : seed_(seed) {}

  // fan_in / fan_out only matter for xavier.
  std::size_t add(const std::string& name, Shape shape, InitScheme scheme, double value,
                  std::size_t fan_in = 0, std::size_t fan_out = 0) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    Tensor<T> t(shape);
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a of the name
    for (unsigned char ch : name) h = (h ^ ch) * 1099511628211ull;
    std::seed_seq seq{std::uint32_t(seed_), std::uint32_t(seed_ >> 32), std::uint32_t(h),
                      std::uint32_t(h >> 32)};
    std::mt19937_64 rng(seq);
    switch (scheme) {
      case InitScheme::xavier: {
        std::normal_distribution<double> d(0.0, std::sqrt(2.0 / double(fan_in + fan_out)));
        for (auto& v : t.data()) v = static_cast<T>(d(rng));
        break;
      }
      case InitScheme::normal: {
        std::normal_distribution<double> d(0.0, value);
        for (auto& v : t.data()) v = static_cast<T>(d(rng));
        break;
      }
      case InitScheme::constant:
        for (auto& v : t.data()) v = static_cast<T>(value);
        break;
    }
    t.set_requires_grad(true);
    index_[name] = params_.size();
    params_.push_back({name, t, scheme, value});
    return params_.size() - 1;
  }

  std::size_t add_bn_stats(const std::string& name, std::size_t channels) {
    bn_names_.push_back(name);
    bn_stats_.emplace_back(channels);
    return bn_stats_.size() - 1;
  }

  std::vector<Parameter<T>>& params() { return params_; }
  const std::vector<Parameter<T>>& params() const { return params_; }
  const Tensor<T>& tensor(std::size_t i) const { return params_[i].tensor; }

  std::vector<ops::BatchNormStats<T>>& bn_stats() { return bn_stats_; }
  const std::vector<ops::BatchNormStats<T>>& bn_stats() const { return bn_stats_; }
  const std::vector<std::string>& bn_names() const { return bn_names_; }
  ops::BatchNormStats<T>& stats(std::size_t i) { return bn_stats_[i]; }

  const Parameter<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &params_[it->second];
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

 private:
  std::uint64_t seed_;
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::string> bn_names_;
  std::vector<ops::BatchNormStats<T>> bn_stats_;
};

// conv -> [batch norm] -> [relu]
// The conv bias is omitted under batch norm, where beta subsumes it.
template <class T>
struct ConvUnit {
  std::size_t weight = 0, bias = 0;
  std::size_t gamma = 0, beta = 0, stats = 0;
  std::size_t stride = 1, padding = 0;
  bool batch_norm = true;
  bool relu = true;
  bool has_bias = true;

  static ConvUnit make(ParameterStore<T>& store, const std::string& prefix, std::size_t in,
                       std::size_t out, std::size_t kernel, std::size_t stride, bool batch_norm,
                       bool relu, InitScheme init = InitScheme::xavier, double init_value = 0) {
    ConvUnit u;
    u.stride = stride;
    u.padding = kernel / 2;
    u.batch_norm = batch_norm;
    u.relu = relu;
    u.weight = store.add(prefix + ".weight", {out, in, kernel, kernel}, init, init_value,
                         in * kernel * kernel, out * kernel * kernel);
    if (!batch_norm) u.bias = store.add(prefix + ".bias", {1, out, 1, 1}, InitScheme::constant, 0.0);
    if (batch_norm) {
      u.gamma = store.add(prefix + ".bn.gamma", {1, out, 1, 1}, InitScheme::constant, 1.0);
      u.beta = store.add(prefix + ".bn.beta", {1, out, 1, 1}, InitScheme::constant, 0.0);
      u.stats = store.add_bn_stats(prefix + ".bn", out);
    }
    u.has_bias = !batch_norm;
    return u;
  }

  // Bare conv without bias, for paths that feed straight into another
  // normalized projection.
  static ConvUnit make_linear(ParameterStore<T>& store, const std::string& prefix, std::size_t in,
                              std::size_t out, std::size_t stride) {
    ConvUnit u;
    u.stride = stride;
    u.batch_norm = false;
    u.relu = false;
    u.has_bias = false;
    u.weight = store.add(prefix + ".weight", {out, in, 1, 1}, InitScheme::xavier, 0.0, in, out);
    return u;
  }

  Tensor<T> operator()(Tape<T>* tape, ParameterStore<T>& store, const Tensor<T>& x,
                       ops::Mode mode) const {
    const Tensor<T> b = has_bias ? store.tensor(bias) : Tensor<T>();
    Tensor<T> y = ops::conv2d(tape, x, store.tensor(weight), b, stride, padding);
    if (batch_norm)
      y = ops::batchnorm2d(tape, y, store.tensor(gamma), store.tensor(beta), store.stats(stats),
                           mode);
    if (relu) y = ops::relu(tape, y);
    return y;
  }
};

// transposed conv with exact-multiple output
template <class T>
struct DeconvUnit {
  std::size_t weight = 0, bias = 0;
  std::size_t stride = 2;

  static DeconvUnit make(ParameterStore<T>& store, const std::string& prefix, std::size_t in,
                         std::size_t out, std::size_t kernel, std::size_t stride, InitScheme init,
                         double init_value = 0) {
    DeconvUnit u;
    u.stride = stride;
    u.weight = store.add(prefix + ".weight", {in, out, kernel, kernel}, init, init_value,
                         out * kernel * kernel, in * kernel * kernel);
    u.bias = store.add(prefix + ".bias", {1, out, 1, 1}, InitScheme::constant, 0.0);
    return u;
  }

  Tensor<T> operator()(Tape<T>* tape, ParameterStore<T>& store, const Tensor<T>& x) const {
    return ops::conv_transpose2d(tape, x, store.tensor(weight), store.tensor(bias), stride);
  }
};

}  // namespace dexined
