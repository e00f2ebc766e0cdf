#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dexined/error.hpp"
#include "dexined/ops.hpp"
#include "dexined/tape.hpp"
#include "dexined/tensor.hpp"

namespace dexined {

struct GradCheckOptions {
  // widest probe; an entry whose probe crosses a kink retries at a tenth of
  // the width, down to kMinStep
  double step = 1e-6;
  // 0 checks every entry; otherwise a seeded sample of this many per input.
  std::size_t max_entries_per_input = 0;
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  double max_relative_error = 0;
  std::string worst_input;
  std::size_t entries_checked = 0;
  std::size_t entries_wanted = 0;
  // inputs with fewer smooth entries than wanted
  std::vector<std::string> short_inputs;
  // probes that crossed a relu or max-pool kink and were narrowed or set aside
  std::size_t probes_at_kinks = 0;
};

struct NamedInput {
  std::string name;
  Tensor<double> tensor;
};

// Central finite differences of a scalar-reduced graph output against tape
// gradients, in 64-bit precision.
//
// The graph closure must build its output from the given input handles. A
// non-scalar output is reduced with fixed pseudo-random weights so every
// output element contributes. The relative error of one input is
//   max_i |analytic_i - numeric_i| / max(max_i |analytic_i|, max_i |numeric_i|)
// over the checked entries; the result is the worst input. Differences
// within the rounding resolution of the probe, a few ulps of the probed
// output divided by the probe width, count as agreement; an input whose
// true gradient is structurally zero would otherwise score 1.
//
// A central difference only estimates the derivative when both probes stay
// on the linear piece of the unperturbed point. Relu and max-pool report
// their branches while probing. An entry whose probes switch a branch is
// retried with a narrower probe; if even the narrowest one switches, the
// entry is set aside and, when sampling, replaced by another of the same
// input. Wide probes are preferred because the rounding noise of a deep
// graph shrinks with the probe width.
inline GradCheckResult grad_check(const std::function<Tensor<double>(Tape<double>*)>& graph,
                                  std::vector<NamedInput> inputs,
                                  const GradCheckOptions& opts = {}) {
  constexpr double kMinStep = 1e-8;
  if (!(opts.step >= kMinStep && opts.step <= 1e-4))
    throw ConfigError("grad_check: step must lie in [1e-6, 1e-4]");

  Tensor<double> reduce_weights;
  auto evaluate = [&](Tape<double>* tape) {
    Tensor<double> out = graph(tape);
    if (out.numel() == 1) return out;
    if (!reduce_weights.defined()) {
      reduce_weights = Tensor<double>(out.shape());
      std::mt19937_64 rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      for (auto& v : reduce_weights.data()) v = u(rng);
    }
    return ops::weighted_sum(tape, out, reduce_weights);
  };

  for (auto& in : inputs) {
    in.tensor.set_requires_grad(true);
    in.tensor.drop_grad();
  }
  Tape<double> tape(Tape<double>::Options{true, true});
  Tensor<double> root = evaluate(&tape);
  tape.backward(root);
  tape.clear();

  Tape<double> probe(Tape<double>::Options{false, true});
  // value of the graph and the digest of the branches it took
  auto probe_eval = [&](std::uint64_t& branches) {
    branches = 0xcbf29ce484222325ULL;
    ops::detail::branch_digest = &branches;
    struct Unwatch {
      ~Unwatch() { ops::detail::branch_digest = nullptr; }
    } unwatch;
    return evaluate(&probe).item();
  };
  std::uint64_t base_branches = 0;
  probe_eval(base_branches);

  std::mt19937_64 rng(opts.seed);
  GradCheckResult result;
  for (auto& in : inputs) {
    std::vector<double> analytic(in.tensor.grad().begin(), in.tensor.grad().end());
    std::vector<std::size_t> idx(in.tensor.numel());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::size_t wanted = idx.size();
    if (opts.max_entries_per_input && idx.size() > opts.max_entries_per_input) {
      std::shuffle(idx.begin(), idx.end(), rng);
      wanted = opts.max_entries_per_input;
    }
    double worst_diff = 0, scale = 0;
    std::size_t checked = 0;
    for (std::size_t k = 0; k < idx.size() && checked < wanted; ++k) {
      const std::size_t i = idx[k];
      double& v = in.tensor[i];
      const double orig = v;
      bool smooth = false;
      double fp = 0, fm = 0, h = opts.step;
      for (; h >= kMinStep * (1 - 1e-9); h /= 10) {
        std::uint64_t up = 0, down = 0;
        v = orig + h;
        fp = probe_eval(up);
        v = orig - h;
        fm = probe_eval(down);
        v = orig;
        if (up == base_branches && down == base_branches) {
          smooth = true;
          break;
        }
        ++result.probes_at_kinks;
      }
      if (!smooth) continue;
      ++checked;
      const double numeric = (fp - fm) / (2 * h);
      const double resolution =
          4 * std::numeric_limits<double>::epsilon() * std::max(std::abs(fp), std::abs(fm)) / (2 * h);
      worst_diff = std::max(worst_diff, std::abs(numeric - analytic[i]) - resolution);
      scale = std::max({scale, std::abs(numeric), std::abs(analytic[i])});
    }
    result.entries_checked += checked;
    result.entries_wanted += wanted;
    if (checked < wanted) result.short_inputs.push_back(in.name);
    const double rel = scale > 0 ? worst_diff / scale : 0.0;
    if (rel >= result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_input = in.name;
    }
  }
  return result;
}

}  // namespace dexined
