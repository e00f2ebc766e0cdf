#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "dexined/error.hpp"
#include "dexined/model.hpp"
#include "dexined/tape.hpp"
#include "dexined/tensor.hpp"

namespace dexined {

enum class LossVariant { bdcn2, hed_wce };

inline const char* to_string(LossVariant v) { return v == LossVariant::bdcn2 ? "bdcn2" : "hed_wce"; }

inline LossVariant parse_loss_variant(const std::string& s) {
  if (s == "bdcn2") return LossVariant::bdcn2;
  if (s == "hed_wce") return LossVariant::hed_wce;
  throw ConfigError("unknown loss variant '" + s + "' (expected bdcn2 or hed_wce)");
}

struct LossConfig {
  // side outputs 1..6, then the fused map
  std::vector<double> lambdas = {0.7, 0.7, 1.1, 1.1, 0.3, 0.3, 1.3};
  double neg_coeff = 1.1;
  LossVariant variant = LossVariant::bdcn2;

  void validate(std::size_t n_outputs) const {
    if (lambdas.size() != n_outputs)
      throw ConfigError("loss needs " + std::to_string(n_outputs) + " lambdas, got " +
                        std::to_string(lambdas.size()));
    for (double l : lambdas)
      if (!(l >= 0) || !std::isfinite(l)) throw ConfigError("lambdas must be finite and >= 0");
    if (!(neg_coeff > 0) || !std::isfinite(neg_coeff))
      throw ConfigError("neg_coeff must be finite and positive");
  }
};

// Class-balance weights of one ground-truth image.
struct BalanceWeights {
  double positive = 0;  // weight on edge pixels
  double negative = 0;  // weight on non-edge pixels
  std::size_t n_pos = 0, n_neg = 0;
  bool degenerate = false;  // single-class image
};

template <class T>
void require_binary(const Tensor<T>& gt) {
  if (gt.shape().c != 1) throw ShapeError("ground truth must have one channel, got " + gt.shape().str());
  for (std::size_t i = 0; i < gt.numel(); ++i)
    if (gt[i] != T(0) && gt[i] != T(1))
      throw DataError("ground truth must be binary, found value " + std::to_string(double(gt[i])) +
                      " at index " + std::to_string(i));
}

// Per batch item: positive weight = negatives/total, negative weight =
// neg_coeff * positives/total.
template <class T>
std::vector<BalanceWeights> balance_weights(const Tensor<T>& gt, double neg_coeff = 1.1) {
  require_binary(gt);
  const Shape s = gt.shape();
  std::vector<BalanceWeights> out(s.n);
  for (std::size_t n = 0; n < s.n; ++n) {
    BalanceWeights& b = out[n];
    const T* g = gt.ptr() + n * s.plane();
    for (std::size_t i = 0; i < s.plane(); ++i) (g[i] > T(0.5) ? b.n_pos : b.n_neg)++;
    const double total = double(b.n_pos + b.n_neg);
    b.positive = double(b.n_neg) / total;
    b.negative = neg_coeff * double(b.n_pos) / total;
    b.degenerate = b.n_pos == 0 || b.n_neg == 0;
  }
  return out;
}

// Dense per-pixel weight map matching gt.
template <class T>
Tensor<T> weight_map(const Tensor<T>& gt, const std::vector<BalanceWeights>& weights) {
  const Shape s = gt.shape();
  Tensor<T> w(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < s.plane(); ++i) {
      const std::size_t k = n * s.plane() + i;
      w[k] = static_cast<T>(gt[k] > T(0.5) ? weights[n].positive : weights[n].negative);
    }
  return w;
}

namespace detail {

// scale * sum_i w_i * bce(z_i, y_i) using
// bce(z, y) = max(z, 0) - z*y + log(1 + exp(-|z|)).
template <class T>
Tensor<T> weighted_bce(Tape<T>* tape, const Tensor<T>& logits, const Tensor<T>& gt,
                       const Tensor<T>& weights, double scale, const char* op) {
  if (!(logits.shape() == gt.shape()))
    throw ShapeError(std::string(op) + ": logits " + logits.shape().str() +
                     " and ground truth " + gt.shape().str() + " differ");
  double acc = 0;
  for (std::size_t i = 0; i < logits.numel(); ++i) {
    const double z = logits[i];
    if (!std::isfinite(z))
      throw NumericError(std::string(op) + ": non-finite logit at index " + std::to_string(i));
    const double y = gt[i];
    acc += double(weights[i]) * (std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z))));
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(scale * acc));
  dexined::detail::finish(tape, op, out, {&logits}, [logits, gt, weights, out, scale]() mutable {
    const double dy = double(out.grad()[0]) * scale;
    auto dz = logits.grad();
    for (std::size_t i = 0; i < dz.size(); ++i)
      dz[i] += static_cast<T>(dy * double(weights[i]) *
                              (ops::sigmoid_scalar<double>(logits[i]) - double(gt[i])));
  });
  return out;
}

}  // namespace detail

// Pixel mean of the class-balanced cross-entropy of one output map.
template <class T>
Tensor<T> per_output_loss(Tape<T>* tape, const Tensor<T>& logits, const Tensor<T>& gt,
                          double neg_coeff = 1.1) {
  const Tensor<T> w = weight_map(gt, balance_weights(gt, neg_coeff));
  return detail::weighted_bce(tape, logits, gt, w, 1.0 / double(gt.numel()), "per_output_loss");
}

template <class T>
struct LossReport {
  Tensor<T> total;
  std::vector<double> per_output;  // unweighted per-output terms
  std::size_t degenerate_items = 0;
};

// sum_n lambda_n * l_n over all N maps.
template <class T>
LossReport<T> total_loss(Tape<T>* tape, const std::vector<Tensor<T>>& maps, const Tensor<T>& gt,
                         const LossConfig& cfg) {
  cfg.validate(maps.size());
  const auto bw = balance_weights(gt, cfg.neg_coeff);
  const Tensor<T> w = weight_map(gt, bw);
  LossReport<T> r;
  for (const auto& b : bw) r.degenerate_items += b.degenerate;
  std::vector<Tensor<T>> terms;
  std::vector<T> lambdas;
  for (std::size_t k = 0; k < maps.size(); ++k) {
    Tensor<T> l = detail::weighted_bce(tape, maps[k], gt, w, 1.0 / double(gt.numel()),
                                       "per_output_loss");
    r.per_output.push_back(double(l.item()));
    terms.push_back(l);
    lambdas.push_back(static_cast<T>(cfg.lambdas[k]));
  }
  const Tensor<T> stacked = ops::concat_channels<T>(tape, terms);
  r.total = ops::weighted_sum(tape, stacked, Tensor<T>(stacked.shape(), std::move(lambdas)));
  return r;
}

// HED-style weighted cross-entropy: beta = negatives/total on edge pixels,
// 1 - beta on the rest, summed over pixels and over every output.
template <class T>
LossReport<T> hed_wce_loss(Tape<T>* tape, const std::vector<Tensor<T>>& maps, const Tensor<T>& gt) {
  if (maps.empty()) throw ConfigError("hed_wce_loss: no outputs");
  const auto bw = balance_weights(gt, 1.0);
  const Tensor<T> w = weight_map(gt, bw);
  LossReport<T> r;
  for (const auto& b : bw) r.degenerate_items += b.degenerate;
  std::vector<Tensor<T>> terms;
  for (const auto& m : maps) {
    Tensor<T> l = detail::weighted_bce(tape, m, gt, w, 1.0, "hed_wce_loss");
    r.per_output.push_back(double(l.item()));
    terms.push_back(l);
  }
  r.total = ops::sum(tape, ops::concat_channels<T>(tape, terms));
  return r;
}

template <class T>
LossReport<T> compute_loss(Tape<T>* tape, const SideOutputs<T>& outputs, const Tensor<T>& gt,
                           const LossConfig& cfg) {
  return cfg.variant == LossVariant::bdcn2 ? total_loss(tape, outputs.maps, gt, cfg)
                                           : hed_wce_loss(tape, outputs.maps, gt);
}

}  // namespace dexined
