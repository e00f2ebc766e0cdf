#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

#include "dexined/augment.hpp"
#include "dexined/dataset.hpp"
#include "dexined/error.hpp"
#include "dexined/eval.hpp"
#include "dexined/loss.hpp"
#include "dexined/model.hpp"
#include "dexined/synthetic.hpp"
#include "dexined/train_config.hpp"

namespace dexined {

using json = nlohmann::json;

inline json to_json(const DexiNedConfig& c) {
  json blocks = json::array();
  for (const auto& b : c.blocks)
    blocks.push_back({{"sub_blocks", b.sub_blocks},
                      {"channels", b.channels},
                      {"first_conv_stride", b.first_conv_stride},
                      {"final_relu", b.final_relu}});
  return {{"blocks", blocks},
          {"n_outputs", c.n_outputs},
          {"width_multiplier", c.width_multiplier},
          {"fusion_init", c.fusion_init},
          {"usnet_features", c.usnet_features},
          {"usnet_init_std", c.usnet_init_std},
          {"skips", to_string(c.skips)},
          {"pad_input", c.pad_input}};
}

inline json to_json(const LossConfig& c) {
  return {{"lambdas", c.lambdas}, {"neg_coeff", c.neg_coeff}, {"variant", to_string(c.variant)}};
}

inline json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"lr_drop_epochs", c.lr_drop_epochs},
          {"lr_factor", c.lr_factor},
          {"weight_decay", c.weight_decay},
          {"adam_eps", c.adam_eps},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"max_steps", c.max_steps},
          {"seed", c.seed},
          {"crop_size", c.crop_size},
          {"eval_every", c.eval_every}};
}

inline json to_json(const AugmentConfig& c) {
  return {{"split_halves", c.split_halves},
          {"rotation_angles", c.rotation_angles},
          {"include_identity_rotation", c.include_identity_rotation},
          {"flip_horizontal", c.flip_horizontal},
          {"gammas", c.gammas},
          {"include_identity_gamma", c.include_identity_gamma}};
}

inline json to_json(const eval::EvalConfig& c) {
  return {{"thresholds", c.thresholds},
          {"max_dist", c.max_dist},
          {"thinning", c.thinning},
          {"matcher", eval::to_string(c.matcher)}};
}

inline json to_json(const ToyConfig& c) {
  return {{"count", c.count},         {"height", c.height},
          {"width", c.width},         {"min_shapes", c.min_shapes},
          {"max_shapes", c.max_shapes}, {"noise", c.noise},
          {"min_contrast", c.min_contrast}, {"seed", c.seed}};
}

inline json to_json(const NormStats& n) { return {{"mean", n.mean}, {"std", n.std}}; }

namespace detail {

// Reads j[key] into out with a ConfigError naming the dotted path on a type
// mismatch.
template <class V>
void read_field(const json& j, const std::string& path, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + path + key + "' has the wrong type: " + j.at(key).dump());
  }
}

inline void reject_unknown(const json& j, const json& known, const std::string& path) {
  if (!j.is_object()) throw ConfigError("config section '" + path + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key())) throw ConfigError("unknown config key '" + path + it.key() + "'");
}

}  // namespace detail

inline void from_json_strict(const json& j, DexiNedConfig& c, const std::string& path = "model.") {
  detail::reject_unknown(j, to_json(DexiNedConfig{}), path);
  if (j.contains("blocks")) {
    const json& bs = j.at("blocks");
    if (!bs.is_array() || bs.size() != c.blocks.size())
      throw ConfigError("config key '" + path + "blocks' must list 6 blocks");
    for (std::size_t i = 0; i < bs.size(); ++i) {
      const std::string bp = path + "blocks[" + std::to_string(i) + "].";
      detail::reject_unknown(bs[i], to_json(DexiNedConfig{})["blocks"][0], bp);
      detail::read_field(bs[i], bp, "sub_blocks", c.blocks[i].sub_blocks);
      detail::read_field(bs[i], bp, "channels", c.blocks[i].channels);
      detail::read_field(bs[i], bp, "first_conv_stride", c.blocks[i].first_conv_stride);
      detail::read_field(bs[i], bp, "final_relu", c.blocks[i].final_relu);
    }
  }
  detail::read_field(j, path, "n_outputs", c.n_outputs);
  detail::read_field(j, path, "width_multiplier", c.width_multiplier);
  detail::read_field(j, path, "fusion_init", c.fusion_init);
  detail::read_field(j, path, "usnet_features", c.usnet_features);
  detail::read_field(j, path, "usnet_init_std", c.usnet_init_std);
  std::string skips = to_string(c.skips);
  detail::read_field(j, path, "skips", skips);
  c.skips = parse_skip_mode(skips);
  detail::read_field(j, path, "pad_input", c.pad_input);
}

inline void from_json_strict(const json& j, LossConfig& c, const std::string& path = "loss.") {
  detail::reject_unknown(j, to_json(LossConfig{}), path);
  detail::read_field(j, path, "lambdas", c.lambdas);
  detail::read_field(j, path, "neg_coeff", c.neg_coeff);
  std::string v = to_string(c.variant);
  detail::read_field(j, path, "variant", v);
  c.variant = parse_loss_variant(v);
}

inline void from_json_strict(const json& j, TrainConfig& c, const std::string& path = "train.") {
  detail::reject_unknown(j, to_json(TrainConfig{}), path);
  detail::read_field(j, path, "lr", c.lr);
  detail::read_field(j, path, "lr_drop_epochs", c.lr_drop_epochs);
  detail::read_field(j, path, "lr_factor", c.lr_factor);
  detail::read_field(j, path, "weight_decay", c.weight_decay);
  detail::read_field(j, path, "adam_eps", c.adam_eps);
  detail::read_field(j, path, "batch_size", c.batch_size);
  detail::read_field(j, path, "max_epochs", c.max_epochs);
  detail::read_field(j, path, "max_steps", c.max_steps);
  detail::read_field(j, path, "seed", c.seed);
  detail::read_field(j, path, "crop_size", c.crop_size);
  detail::read_field(j, path, "eval_every", c.eval_every);
}

inline void from_json_strict(const json& j, AugmentConfig& c, const std::string& path = "augment.") {
  detail::reject_unknown(j, to_json(AugmentConfig{}), path);
  detail::read_field(j, path, "split_halves", c.split_halves);
  detail::read_field(j, path, "rotation_angles", c.rotation_angles);
  detail::read_field(j, path, "include_identity_rotation", c.include_identity_rotation);
  detail::read_field(j, path, "flip_horizontal", c.flip_horizontal);
  detail::read_field(j, path, "gammas", c.gammas);
  detail::read_field(j, path, "include_identity_gamma", c.include_identity_gamma);
}

inline void from_json_strict(const json& j, eval::EvalConfig& c, const std::string& path = "eval.") {
  detail::reject_unknown(j, to_json(eval::EvalConfig{}), path);
  detail::read_field(j, path, "thresholds", c.thresholds);
  detail::read_field(j, path, "max_dist", c.max_dist);
  detail::read_field(j, path, "thinning", c.thinning);
  std::string m = eval::to_string(c.matcher);
  detail::read_field(j, path, "matcher", m);
  c.matcher = eval::parse_matcher(m);
}

inline void from_json_strict(const json& j, ToyConfig& c, const std::string& path = "toy.") {
  detail::reject_unknown(j, to_json(ToyConfig{}), path);
  detail::read_field(j, path, "count", c.count);
  detail::read_field(j, path, "height", c.height);
  detail::read_field(j, path, "width", c.width);
  detail::read_field(j, path, "min_shapes", c.min_shapes);
  detail::read_field(j, path, "max_shapes", c.max_shapes);
  detail::read_field(j, path, "noise", c.noise);
  detail::read_field(j, path, "min_contrast", c.min_contrast);
  detail::read_field(j, path, "seed", c.seed);
}

inline NormStats norm_stats_from_json(const json& j) {
  NormStats n;
  detail::read_field(j, "norm.", "mean", n.mean);
  detail::read_field(j, "norm.", "std", n.std);
  return n;
}

// Everything a CLI run can be configured with. Dataset list paths resolve
// against the working directory.
struct RunConfig {
  DexiNedConfig model;
  LossConfig loss;
  TrainConfig train;
  std::string augment_preset = "literal";
  AugmentConfig augment = AugmentConfig::biped_literal();
  eval::EvalConfig eval;
  ToyConfig toy;
  std::string train_list, val_list;
  std::size_t ablation_repeats = 1;

  void validate() const {
    model.validate();
    loss.validate(model.n_outputs);
    train.validate();
    augment.validate();
    eval.validate();
    if (ablation_repeats == 0) throw ConfigError("ablation.repeats must be positive");
  }
};

inline AugmentConfig augment_preset(const std::string& name) {
  if (name == "literal") return AugmentConfig::biped_literal();
  if (name == "biped-288") return AugmentConfig::biped_288();
  if (name == "identity") return AugmentConfig::identity();
  throw ConfigError("unknown augmentation preset '" + name +
                    "' (expected literal, biped-288 or identity)");
}

// Resolved configuration, as echoed into manifests and checkpoints.
inline json to_json(const RunConfig& c) {
  json augment = to_json(c.augment);
  augment["preset"] = c.augment_preset;
  return {{"model", to_json(c.model)},
          {"loss", to_json(c.loss)},
          {"train", to_json(c.train)},
          {"augment", augment},
          {"eval", to_json(c.eval)},
          {"toy", to_json(c.toy)},
          {"data", {{"train_list", c.train_list}, {"val_list", c.val_list}}},
          {"ablation", {{"repeats", c.ablation_repeats}}}};
}

// The tree that files and overrides are merged into. Lattice keys are null,
// meaning "as in the preset".
inline json config_schema() {
  json tree = to_json(RunConfig{});
  for (auto& [key, value] : tree["augment"].items())
    if (key != "preset") value = nullptr;
  return tree;
}

inline RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  const json schema = config_schema();
  detail::reject_unknown(j, schema, "");
  if (j.contains("model")) from_json_strict(j["model"], c.model);
  if (j.contains("loss")) from_json_strict(j["loss"], c.loss);
  if (j.contains("train")) from_json_strict(j["train"], c.train);
  if (j.contains("eval")) from_json_strict(j["eval"], c.eval);
  if (j.contains("toy")) from_json_strict(j["toy"], c.toy);
  if (j.contains("augment")) {
    json a = j["augment"];
    detail::reject_unknown(a, schema["augment"], "augment.");
    detail::read_field(a, "augment.", "preset", c.augment_preset);
    c.augment = augment_preset(c.augment_preset);
    a.erase("preset");
    for (auto it = a.begin(); it != a.end();)
      it = it.value().is_null() ? a.erase(it) : std::next(it);
    from_json_strict(a, c.augment, "augment.");
  }
  if (j.contains("data")) {
    detail::reject_unknown(j["data"], schema["data"], "data.");
    detail::read_field(j["data"], "data.", "train_list", c.train_list);
    detail::read_field(j["data"], "data.", "val_list", c.val_list);
  }
  if (j.contains("ablation")) {
    detail::reject_unknown(j["ablation"], schema["ablation"], "ablation.");
    detail::read_field(j["ablation"], "ablation.", "repeats", c.ablation_repeats);
  }
  return c;
}

// Applies `a.b.c=value` to a config tree. The value is parsed as JSON when
// possible and taken as a string otherwise. Only existing keys can be set.
inline void apply_override(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &tree;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part =
        key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part))
      throw ConfigError("unknown config key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = value;
}

// Recursively overlays `patch` onto `base`; keys absent from base are errors.
inline void merge_config(json& base, const json& patch, const std::string& path = "") {
  if (!patch.is_object()) throw ConfigError("config section '" + path + "' must be an object");
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + path + it.key() + "'");
    json& dst = base[it.key()];
    if (dst.is_object() && it.value().is_object())
      merge_config(dst, it.value(), path + it.key() + ".");
    else
      dst = it.value();
  }
}

// Defaults, then the file, then the `key=value` overrides, then validation.
inline RunConfig resolve_config(const std::filesystem::path& file,
                                const std::vector<std::string>& overrides) {
  json tree = config_schema();
  if (!file.empty()) {
    const auto bytes = read_bytes(file);
    json user;
    try {
      user = json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
      throw ConfigError("config file '" + file.string() + "' is not valid JSON: " + e.what());
    }
    merge_config(tree, user);
  }
  for (const auto& o : overrides) apply_override(tree, o);
  RunConfig c = run_config_from_json(tree);
  c.validate();
  return c;
}

}  // namespace dexined
