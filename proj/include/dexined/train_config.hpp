#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dexined/error.hpp"
#include "dexined/optim.hpp"

namespace dexined {

struct TrainConfig {
  double lr = 1e-4;
  std::vector<std::size_t> lr_drop_epochs = {10, 15};
  double lr_factor = 0.1;
  double weight_decay = 1e-8;
  double adam_eps = 1e-8;
  std::size_t batch_size = 8;
  std::size_t max_epochs = 25;
  std::size_t max_steps = 0;  // 0 = no cap
  std::uint64_t seed = 0;
  std::size_t crop_size = 352;
  std::size_t eval_every = 1;  // epochs between validation/checkpoint; 0 = final epoch only

  // Learning rate for a 0-based epoch index.
  double lr_for_epoch(std::size_t epoch) const {
    return lr_at(epoch, lr, lr_drop_epochs, lr_factor);
  }

  void validate() const {
    auto positive = [](double v) { return v > 0 && std::isfinite(v); };
    if (!positive(lr)) throw ConfigError("train.lr must be positive");
    if (!positive(lr_factor)) throw ConfigError("train.lr_factor must be positive");
    if (!positive(weight_decay)) throw ConfigError("train.weight_decay must be positive");
    if (!positive(adam_eps)) throw ConfigError("train.adam_eps must be positive");
    for (std::size_t i = 1; i < lr_drop_epochs.size(); ++i)
      if (lr_drop_epochs[i] <= lr_drop_epochs[i - 1])
        throw ConfigError("train.lr_drop_epochs must be strictly increasing");
    if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
    if (max_epochs == 0) throw ConfigError("train.max_epochs must be positive");
    if (crop_size == 0) throw ConfigError("train.crop_size must be positive");
  }
};

}  // namespace dexined
