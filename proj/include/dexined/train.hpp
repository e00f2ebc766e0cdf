#pragma once

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dexined/checkpoint.hpp"
#include "dexined/config.hpp"
#include "dexined/dataset.hpp"
#include "dexined/eval.hpp"
#include "dexined/loss.hpp"
#include "dexined/model.hpp"
#include "dexined/optim.hpp"
#include "dexined/parallel.hpp"
#include "dexined/train_config.hpp"

namespace dexined {

// Random-access training or validation data.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual Sample load(std::size_t i) const = 0;
};

class MemorySource : public SampleSource {
 public:
  explicit MemorySource(std::vector<Sample> samples) : samples_(std::move(samples)) {}
  std::size_t size() const override { return samples_.size(); }
  Sample load(std::size_t i) const override { return samples_.at(i); }

 private:
  std::vector<Sample> samples_;
};

// Decodes pairs from disk on demand.
class ListSource : public SampleSource {
 public:
  explicit ListSource(std::vector<DatasetEntry> entries) : entries_(std::move(entries)) {}
  std::size_t size() const override { return entries_.size(); }
  Sample load(std::size_t i) const override {
    const auto& e = entries_.at(i);
    Sample s = load_pair(e.image, e.gt, e.gt.stem().string());
    check_pair(s);
    return s;
  }

 private:
  std::vector<DatasetEntry> entries_;
};

inline NormStats compute_norm_stats(const SampleSource& src, std::size_t workers = 1) {
  std::vector<std::array<double, 6>> parts(src.size());
  std::vector<double> counts(src.size());
  parallel_for(src.size(), workers, [&](std::size_t i) {
    const Sample s = src.load(i);
    std::array<double, 6> acc{};
    for (std::size_t p = 0; p < s.image.height * s.image.width; ++p)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = s.image.pixels[p * 3 + c] / 255.0;
        acc[c] += v;
        acc[3 + c] += v * v;
      }
    parts[i] = acc;
    counts[i] = double(s.image.height * s.image.width);
  });
  std::array<double, 6> total{};
  double n = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    for (std::size_t k = 0; k < 6; ++k) total[k] += parts[i][k];
    n += counts[i];
  }
  if (n == 0) throw DataError("normalization statistics need at least one pixel");
  NormStats st;
  for (std::size_t c = 0; c < 3; ++c) {
    st.mean[c] = total[c] / n;
    st.std[c] = std::max(std::sqrt(std::max(total[3 + c] / n - st.mean[c] * st.mean[c], 0.0)), 1e-3);
  }
  return st;
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;  // cumulative optimizer steps after this epoch
  double train_loss = 0;  // mean over the epoch's steps
  double lr = 0;
  std::optional<double> val_ods, val_ois, val_ap;
  double wall_seconds = 0;
  std::size_t degenerate_items = 0;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct RunHistory {
  std::vector<EpochRecord> epochs;
  std::vector<double> step_losses;
  std::size_t best_epoch = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  std::string best_checkpoint, final_checkpoint;
};

inline nlohmann::json to_json(const EpochRecord& r) {
  nlohmann::json j = {{"epoch", r.epoch},       {"steps", r.steps},
                      {"train_loss", r.train_loss}, {"lr", r.lr},
                      {"wall_seconds", r.wall_seconds}, {"degenerate_items", r.degenerate_items}};
  j["val_ods"] = r.val_ods ? nlohmann::json(*r.val_ods) : nlohmann::json(nullptr);
  j["val_ois"] = r.val_ois ? nlohmann::json(*r.val_ois) : nlohmann::json(nullptr);
  j["val_ap"] = r.val_ap ? nlohmann::json(*r.val_ap) : nlohmann::json(nullptr);
  return j;
}

inline EpochRecord epoch_record_from_json(const nlohmann::json& j) {
  EpochRecord r;
  r.epoch = j.at("epoch");
  r.steps = j.at("steps");
  r.train_loss = j.at("train_loss");
  r.lr = j.at("lr");
  r.wall_seconds = j.at("wall_seconds");
  r.degenerate_items = j.at("degenerate_items");
  if (!j.at("val_ods").is_null()) r.val_ods = j.at("val_ods").get<double>();
  if (!j.at("val_ois").is_null()) r.val_ois = j.at("val_ois").get<double>();
  if (!j.at("val_ap").is_null()) r.val_ap = j.at("val_ap").get<double>();
  return r;
}

inline nlohmann::json to_json(const RunHistory& h) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& r : h.epochs) epochs.push_back(to_json(r));
  return {{"epochs", epochs},
          {"step_losses", h.step_losses},
          {"best_epoch", h.best_epoch},
          {"best_score", std::isfinite(h.best_score) ? nlohmann::json(h.best_score) : nlohmann::json(nullptr)},
          {"best_checkpoint", h.best_checkpoint},
          {"final_checkpoint", h.final_checkpoint}};
}

inline RunHistory run_history_from_json(const nlohmann::json& j) {
  RunHistory h;
  for (const auto& e : j.at("epochs")) h.epochs.push_back(epoch_record_from_json(e));
  h.step_losses = j.at("step_losses").get<std::vector<double>>();
  h.best_epoch = j.at("best_epoch");
  if (!j.at("best_score").is_null()) h.best_score = j.at("best_score");
  h.best_checkpoint = j.at("best_checkpoint");
  h.final_checkpoint = j.at("final_checkpoint");
  return h;
}

// CSV with one row per epoch; validation columns are empty when not run.
inline std::string history_csv(const RunHistory& h) {
  std::ostringstream os;
  os.precision(10);
  os << "epoch,steps,loss,lr,ods,ois,ap,wall_seconds\n";
  auto opt = [&](const std::optional<double>& v) {
    if (v) os << *v;
  };
  for (const auto& r : h.epochs) {
    os << r.epoch << ',' << r.steps << ',' << r.train_loss << ',' << r.lr << ',';
    opt(r.val_ods);
    os << ',';
    opt(r.val_ois);
    os << ',';
    opt(r.val_ap);
    os << ',' << r.wall_seconds << '\n';
  }
  return os.str();
}

struct FitOptions {
  std::filesystem::path out_dir;  // empty: keep everything in memory
  std::size_t workers = 1;
  bool resume = false;            // continue from out_dir/checkpoints/last.ckpt
  nlohmann::json run_echo;        // stored in checkpoint metadata
  std::function<void(const EpochRecord&)> on_epoch;
};

namespace detail {

inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(a),
                    std::uint32_t(a >> 32), std::uint32_t(b), std::uint32_t(b >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace detail

// One batch: sample order and crop windows are a pure function of
// (seed, epoch, position), so runs and resumes are reproducible regardless
// of how many workers decode the data.
struct BatchPlan {
  std::vector<std::size_t> indices;
  std::size_t epoch = 0, first_position = 0;
};

// Epoch order: a permutation drawn from the (seed, epoch) stream.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  auto rng = detail::stream(seed, epoch, 0x5eed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

template <class T>
struct Batch {
  Tensor<T> images, gts;
};

// Loads a batch and cuts every sample to a common window: the crop size,
// clipped to the smallest extent in the batch. Offsets are uniform.
template <class T>
Batch<T> make_batch(const SampleSource& src, const BatchPlan& plan, const NormStats& norm,
                    std::size_t crop, std::uint64_t seed, std::size_t workers) {
  std::vector<Sample> samples(plan.indices.size());
  parallel_for(samples.size(), workers, [&](std::size_t i) { samples[i] = src.load(plan.indices[i]); });
  std::size_t h = crop, w = crop;
  for (const auto& s : samples) {
    check_pair(s);
    h = std::min(h, s.image.height);
    w = std::min(w, s.image.width);
  }
  std::vector<Tensor<T>> xs(samples.size()), ys(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto rng = detail::stream(seed, plan.epoch, 0xc209 + plan.first_position + i);
    const auto top = std::uniform_int_distribution<std::size_t>(0, samples[i].image.height - h)(rng);
    const auto left = std::uniform_int_distribution<std::size_t>(0, samples[i].image.width - w)(rng);
    xs[i] = image_tensor<T>(samples[i].image, norm, top, left, h, w);
    ys[i] = gt_tensor<T>(samples[i].gt, top, left, h, w);
  }
  return {stack_batch<T>(xs), stack_batch<T>(ys)};
}

// Fused (or averaged) edge probabilities for every sample, at full extent.
template <class T>
std::vector<eval::EdgeMap> predict_maps(DexiNed<T>& model, const SampleSource& src,
                                        const NormStats& norm, PredictMode mode,
                                        std::size_t workers,
                                        std::vector<std::vector<eval::BinaryMap>>* gts = nullptr) {
  std::vector<eval::EdgeMap> maps(src.size());
  if (gts) gts->assign(src.size(), {});
  parallel_for(src.size(), workers, [&](std::size_t i) {
    const Sample s = src.load(i);
    const Tensor<T> p = model.predict(image_tensor<T>(s.image, norm), mode);
    maps[i] = {s.image.height, s.image.width, std::vector<float>(p.data().begin(), p.data().end())};
    if (gts) {
      eval::BinaryMap b(s.gt.height, s.gt.width);
      for (std::size_t k = 0; k < b.bits.size(); ++k) b.bits[k] = s.gt.pixels[k] >= 128;
      (*gts)[i] = {std::move(b)};
    }
  });
  return maps;
}

template <class T>
class Trainer {
 public:
  Trainer(DexiNedConfig model_cfg, LossConfig loss_cfg, TrainConfig train_cfg,
          eval::EvalConfig eval_cfg = {})
      : model_cfg_(model_cfg),
        loss_cfg_(std::move(loss_cfg)),
        train_cfg_(std::move(train_cfg)),
        eval_cfg_(std::move(eval_cfg)),
        model_(std::make_unique<DexiNed<T>>(model_cfg, train_cfg_.seed)) {
    model_cfg_.validate();
    loss_cfg_.validate(model_cfg_.n_outputs);
    train_cfg_.validate();
    eval_cfg_.validate();
  }

  DexiNed<T>& model() { return *model_; }
  AdamState<T>& adam() { return adam_; }
  const RunHistory& history() const { return history_; }
  const NormStats& norm() const { return norm_; }
  void set_norm(const NormStats& n) { norm_ = n; norm_ready_ = true; }
  std::size_t epochs_done() const { return epoch_; }
  std::size_t steps_done() const { return step_; }

  // forward, loss, backward and one Adam update. Returns the loss report.
  LossReport<T> step(const Tensor<T>& images, const Tensor<T>& gts, double lr) {
    Tape<T> tape;
    model_->store().zero_grad();
    SideOutputs<T> out = model_->forward(&tape, images, ops::Mode::train);
    LossReport<T> rep = compute_loss(&tape, out, gts, loss_cfg_);
    const double loss = double(rep.total.item());
    if (!std::isfinite(loss))
      throw NumericError("loss diverged (" + std::to_string(loss) + ") at step " +
                         std::to_string(step_ + 1));
    tape.backward(rep.total);
    AdamConfig adam_cfg;
    adam_cfg.eps = train_cfg_.adam_eps;
    adam_step(model_->parameters(), adam_, lr, train_cfg_.weight_decay, adam_cfg);
    ++step_;
    return rep;
  }

  eval::EvalSummary validate(const SampleSource& val, std::size_t workers = 1) {
    std::vector<std::vector<eval::BinaryMap>> gts;
    const auto maps = predict_maps(*model_, val, norm_, PredictMode::fused, workers, &gts);
    return eval::evaluate(maps, gts, eval_cfg_, workers);
  }

  nlohmann::json metadata() const {
    return {{"format", "dexined-checkpoint"},
            {"model", to_json(model_cfg_)},
            {"loss", to_json(loss_cfg_)},
            {"train", to_json(train_cfg_)},
            {"eval", to_json(eval_cfg_)},
            {"seed", train_cfg_.seed},
            {"epoch", epoch_},
            {"step", step_},
            {"norm", to_json(norm_)},
            {"history", to_json(history_)},
            {"run", run_echo_}};
  }

  void save(const std::filesystem::path& path) const {
    save_checkpoint(path, *model_, &adam_, metadata());
  }

  // Restores the full training state written by save().
  void restore(const std::filesystem::path& path) {
    const auto meta = load_checkpoint(path, *model_, &adam_);
    epoch_ = meta.at("epoch");
    step_ = meta.at("step");
    norm_ = norm_stats_from_json(meta.at("norm"));
    norm_ready_ = true;
    history_ = run_history_from_json(meta.at("history"));
  }

  // Trains until max_epochs (or max_steps) is reached. With an output
  // directory, checkpoints/last.ckpt is rewritten every eval_every epochs
  // and at the end, checkpoints/best.ckpt tracks the best validation ODS
  // (lowest training loss without a validation set), and history.csv is
  // kept current. A diverging loss aborts with NumericError; the checkpoint
  // files on disk are left as they were after the last good epoch.
  RunHistory fit(const SampleSource& train, const SampleSource* val, const FitOptions& opts = {}) {
    if (train.size() == 0) throw DataError("training set is empty");
    if (val && val->size() == 0) throw DataError("validation set is empty");
    run_echo_ = opts.run_echo;
    namespace fs = std::filesystem;
    const fs::path ckpt_dir = opts.out_dir.empty() ? fs::path() : opts.out_dir / "checkpoints";
    const fs::path last = ckpt_dir / "last.ckpt", best = ckpt_dir / "best.ckpt";
    if (opts.resume) {
      if (opts.out_dir.empty()) throw ConfigError("resume needs an output directory");
      if (!fs::exists(last)) throw DataError("nothing to resume: '" + last.string() + "' is missing");
      check_resumable(read_checkpoint_meta(last));
      restore(last);
    }
    if (!norm_ready_) set_norm(compute_norm_stats(train, opts.workers));

    const std::size_t n = train.size(), bs = train_cfg_.batch_size;
    const auto t0 = std::chrono::steady_clock::now();
    const double wall_before = history_.epochs.empty() ? 0.0 : history_.epochs.back().wall_seconds;
    try {
      while (epoch_ < train_cfg_.max_epochs && !step_cap_reached()) {
        const std::size_t e = epoch_;
        const double lr = train_cfg_.lr_for_epoch(e);
        const auto order = epoch_order(n, train_cfg_.seed, e);
        EpochRecord rec;
        rec.epoch = e + 1;
        rec.lr = lr;
        double loss_sum = 0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < n && !step_cap_reached(); start += bs) {
          BatchPlan plan;
          plan.epoch = e;
          plan.first_position = start;
          plan.indices.assign(order.begin() + std::ptrdiff_t(start),
                              order.begin() + std::ptrdiff_t(std::min(n, start + bs)));
          const Batch<T> b = make_batch<T>(train, plan, norm_, train_cfg_.crop_size,
                                           train_cfg_.seed, opts.workers);
          const LossReport<T> rep = step(b.images, b.gts, lr);
          const double loss = double(rep.total.item());
          history_.step_losses.push_back(loss);
          loss_sum += loss;
          rec.degenerate_items += rep.degenerate_items;
          ++steps;
        }
        ++epoch_;
        rec.steps = step_;
        rec.train_loss = steps ? loss_sum / double(steps) : 0.0;
        const bool final_epoch = epoch_ == train_cfg_.max_epochs || step_cap_reached();
        const bool checkpoint_now =
            final_epoch || (train_cfg_.eval_every && epoch_ % train_cfg_.eval_every == 0);
        if (checkpoint_now && val) {
          const auto summary = validate(*val, opts.workers);
          rec.val_ods = summary.ods;
          rec.val_ois = summary.ois;
          rec.val_ap = summary.ap;
        }
        rec.wall_seconds =
            wall_before + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        history_.epochs.push_back(rec);
        if (checkpoint_now) {
          const double score = rec.val_ods ? *rec.val_ods : -rec.train_loss;
          const bool improved = score > history_.best_score;
          if (improved) {
            history_.best_score = score;
            history_.best_epoch = rec.epoch;
          }
          if (!ckpt_dir.empty()) {
            history_.final_checkpoint = last.string();
            if (improved) history_.best_checkpoint = best.string();
            save(last);
            if (improved) save(best);
          }
        }
        if (!opts.out_dir.empty()) write_text_atomic(opts.out_dir / "history.csv", history_csv(history_));
        if (opts.on_epoch) opts.on_epoch(rec);
      }
    } catch (const NumericError& err) {
      if (!opts.out_dir.empty()) write_text_atomic(opts.out_dir / "history.csv", history_csv(history_));
      const std::string kept = !ckpt_dir.empty() && fs::exists(last)
                                   ? "last good checkpoint retained at '" + last.string() + "'"
                                   : "no checkpoint had been written yet";
      throw NumericError(std::string(err.what()) + " during epoch " + std::to_string(epoch_ + 1) +
                         "; " + kept);
    }
    return history_;
  }

 private:
  bool step_cap_reached() const { return train_cfg_.max_steps && step_ >= train_cfg_.max_steps; }

  // A resumed run must agree with the checkpoint on everything except the
  // stopping point.
  void check_resumable(const nlohmann::json& meta) const {
    auto train = meta.at("train");
    auto mine = to_json(train_cfg_);
    for (const char* k : {"max_epochs", "max_steps", "eval_every"}) {
      train.erase(k);
      mine.erase(k);
    }
    if (meta.at("model") != to_json(model_cfg_) || meta.at("loss") != to_json(loss_cfg_) ||
        train != mine)
      throw ConfigError("cannot resume: the checkpoint was written with a different configuration");
  }

  DexiNedConfig model_cfg_;
  LossConfig loss_cfg_;
  TrainConfig train_cfg_;
  eval::EvalConfig eval_cfg_;
  std::unique_ptr<DexiNed<T>> model_;
  AdamState<T> adam_;
  NormStats norm_;
  bool norm_ready_ = false;
  std::size_t epoch_ = 0, step_ = 0;
  RunHistory history_;
  nlohmann::json run_echo_;
};

struct AblationVariant {
  SkipMode skips = SkipMode::both;
  LossVariant loss = LossVariant::bdcn2;
};

inline std::string variant_label(const AblationVariant& v) {
  return std::string("DexiNed") + to_string(v.skips) + "/" + to_string(v.loss);
}

struct AblationRow {
  AblationVariant variant;
  std::uint64_t seed = 0;
  std::size_t parameters = 0;
  double ods = 0, ois = 0, ap = 0;
  double final_loss = 0;
};

inline std::vector<AblationVariant> default_ablation_grid() {
  std::vector<AblationVariant> grid;
  for (SkipMode s : {SkipMode::none, SkipMode::first, SkipMode::both})
    for (LossVariant l : {LossVariant::bdcn2, LossVariant::hed_wce}) grid.push_back({s, l});
  return grid;
}

// Trains every variant with the same seeds, data order and crops, and scores
// each on `val` (the training set itself when val is null). Parameters
// shared between variants start from identical values, because
// initialization is keyed by parameter name.
template <class T = float>
std::vector<AblationRow> run_ablation(const DexiNedConfig& model_cfg, const LossConfig& loss_cfg,
                                      const TrainConfig& train_cfg,
                                      const eval::EvalConfig& eval_cfg,
                                      const std::vector<AblationVariant>& variants,
                                      const std::vector<std::uint64_t>& seeds,
                                      const SampleSource& train, const SampleSource* val = nullptr,
                                      std::size_t workers = 1,
                                      const std::function<void(const AblationRow&)>& on_row = {}) {
  if (variants.empty() || seeds.empty()) throw ConfigError("ablation needs variants and seeds");
  const NormStats norm = compute_norm_stats(train, workers);
  std::vector<AblationRow> rows;
  for (std::uint64_t seed : seeds)
    for (const auto& v : variants) {
      DexiNedConfig mc = model_cfg;
      mc.skips = v.skips;
      LossConfig lc = loss_cfg;
      lc.variant = v.loss;
      TrainConfig tc = train_cfg;
      tc.seed = seed;
      Trainer<T> trainer(mc, lc, tc, eval_cfg);
      trainer.set_norm(norm);
      FitOptions opts;
      opts.workers = workers;
      const RunHistory h = trainer.fit(train, nullptr, opts);
      const auto summary = trainer.validate(val ? *val : train, workers);
      AblationRow row{v, seed, trainer.model().parameter_count(), summary.ods, summary.ois,
                      summary.ap, h.epochs.back().train_loss};
      rows.push_back(row);
      if (on_row) on_row(row);
    }
  return rows;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os.precision(6);
  os << "variant,skips,loss,seed,parameters,ods,ois,ap,final_loss\n";
  for (const auto& r : rows)
    os << variant_label(r.variant) << ',' << to_string(r.variant.skips) << ','
       << to_string(r.variant.loss) << ',' << r.seed << ',' << r.parameters << ',' << r.ods << ','
       << r.ois << ',' << r.ap << ',' << r.final_loss << '\n';
  return os.str();
}

}  // namespace dexined
