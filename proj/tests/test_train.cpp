#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "dexined/checkpoint.hpp"
#include "dexined/optim.hpp"
#include "dexined/synthetic.hpp"
#include "dexined/train.hpp"

using namespace dexined;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dexined_train_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<Parameter<double>> scalar_params(std::vector<double> values) {
  std::vector<Parameter<double>> ps;
  for (std::size_t i = 0; i < values.size(); ++i) {
    Tensor<double> t = Tensor<double>::scalar(values[i]);
    t.set_requires_grad(true);
    ps.push_back({"p" + std::to_string(i), t});
  }
  return ps;
}

DexiNedConfig tiny_model() {
  DexiNedConfig c;
  c.width_multiplier = 0.125;
  return c;
}

MemorySource tiny_toy(std::size_t count = 4, std::size_t extent = 64) {
  ToyConfig tc;
  tc.count = count;
  tc.height = tc.width = extent;
  return MemorySource(make_toy_shapes(tc));
}

TrainConfig tiny_train(std::size_t epochs, std::size_t batch = 2) {
  TrainConfig t;
  t.max_epochs = epochs;
  t.batch_size = batch;
  t.seed = 3;
  t.lr_drop_epochs = {};
  return t;
}

}  // namespace

FitOptions in_dir(const fs::path& dir, bool resume = false) {
  FitOptions o;
  o.out_dir = dir;
  o.resume = resume;
  return o;
}

TEST(Adam, ZeroGradientZeroDecayIsFixedPoint) {
  auto ps = scalar_params({0.5, -2.0});
  AdamState<double> st;
  for (int i = 0; i < 10; ++i) {
    for (auto& p : ps) p.tensor.zero_grad();
    adam_step(ps, st, 1e-2, 0.0);
  }
  EXPECT_EQ(ps[0].tensor[0], 0.5);
  EXPECT_EQ(ps[1].tensor[0], -2.0);
}

TEST(Adam, ConstantGradientStepApproachesLrTimesSign) {
  // scalar-sequence oracle: with constant g the bias-corrected moments are
  // exactly g and g^2, so every step is lr * g / (|g| + eps)
  for (double g : {3.0, -0.25}) {
    auto ps = scalar_params({1.0});
    AdamState<double> st;
    const double lr = 1e-3;
    double prev = 1.0;
    for (int k = 1; k <= 200; ++k) {
      ps[0].tensor.zero_grad();
      ps[0].tensor.grad()[0] = g;
      adam_step(ps, st, lr, 0.0);
      const double delta = ps[0].tensor[0] - prev;
      prev = ps[0].tensor[0];
      EXPECT_NEAR(delta, -lr * g / (std::abs(g) + 1e-8), 1e-12) << "step " << k;
    }
    EXPECT_NEAR(std::abs(prev - 1.0) / (200 * lr), 1.0, 1e-6);
  }
}

TEST(Adam, OneStepDecreasesQuadraticBowl) {
  auto ps = scalar_params({2.0, -1.5, 0.3});
  const std::vector<double> scale = {1.0, 4.0, 0.5};
  auto f = [&] {
    double s = 0;
    for (std::size_t i = 0; i < ps.size(); ++i) s += scale[i] * ps[i].tensor[0] * ps[i].tensor[0];
    return s;
  };
  const double before = f();
  for (std::size_t i = 0; i < ps.size(); ++i) {
    ps[i].tensor.zero_grad();
    ps[i].tensor.grad()[0] = 2 * scale[i] * ps[i].tensor[0];
  }
  AdamState<double> st;
  adam_step(ps, st, 1e-2, 0.0);
  EXPECT_LT(f(), before);
}

TEST(Adam, DecoupledDecayShrinksParameters) {
  auto ps = scalar_params({2.0});
  AdamState<double> st;
  ps[0].tensor.zero_grad();
  adam_step(ps, st, 0.1, 0.5);
  EXPECT_DOUBLE_EQ(ps[0].tensor[0], 2.0 - 0.1 * 0.5 * 2.0);
}

TEST(Adam, NonFiniteGradientAbortsAndNamesParameter) {
  auto ps = scalar_params({1.0, 2.0});
  AdamState<double> st;
  ps[0].tensor.zero_grad();
  ps[0].tensor.grad()[0] = 1.0;
  ps[1].tensor.zero_grad();
  ps[1].tensor.grad()[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    adam_step(ps, st, 0.1, 0.0);
    FAIL() << "NaN gradient accepted";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("'p1'"), std::string::npos);
  }
  EXPECT_EQ(ps[0].tensor[0], 1.0);
  EXPECT_EQ(st.step, 0u);
}

TEST(Schedule, DropsAtTenAndFifteen) {
  const TrainConfig t;
  EXPECT_EQ(t.lr_for_epoch(0), 1e-4);
  EXPECT_EQ(t.lr_for_epoch(9), 1e-4);
  EXPECT_DOUBLE_EQ(t.lr_for_epoch(10), 1e-5);
  EXPECT_DOUBLE_EQ(t.lr_for_epoch(14), 1e-5);
  EXPECT_DOUBLE_EQ(t.lr_for_epoch(15), 1e-6);
  EXPECT_DOUBLE_EQ(t.lr_for_epoch(24), 1e-6);
}

TEST(Schedule, PiecewiseConstantWithOneJumpPerDrop) {
  for (const std::vector<std::size_t>& drops :
       {std::vector<std::size_t>{}, std::vector<std::size_t>{10, 15}, std::vector<std::size_t>{1, 2, 7}}) {
    std::size_t jumps = 0;
    for (std::size_t e = 1; e < 100; ++e)
      jumps += lr_at(e, 1e-4, drops, 0.1) != lr_at(e - 1, 1e-4, drops, 0.1);
    EXPECT_EQ(jumps, drops.size());
  }
}

TEST(TrainConfigCheck, RejectsInvalidValues) {
  TrainConfig t;
  t.lr_drop_epochs = {15, 10};
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.lr_drop_epochs = {10, 10};
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.lr = 0;
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.weight_decay = -1;
  EXPECT_THROW(t.validate(), ConfigError);
  t = {};
  t.lr_factor = 0;
  EXPECT_THROW(t.validate(), ConfigError);
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

TEST(Batching, EpochOrderIsSeededPermutation) {
  const auto a = epoch_order(10, 1, 0), b = epoch_order(10, 1, 0), c = epoch_order(10, 1, 1);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Batching, CropsToCommonWindow) {
  std::vector<Sample> ss;
  ToyConfig tc;
  tc.count = 1;
  tc.height = 70;
  tc.width = 90;
  ss.push_back(make_toy_shapes(tc)[0]);
  tc.height = 64;
  tc.width = 100;
  ss.push_back(make_toy_shapes(tc)[0]);
  MemorySource src(ss);
  BatchPlan plan{{0, 1}, 0, 0};
  const auto b = make_batch<float>(src, plan, NormStats{}, 48, 1, 1);
  EXPECT_EQ(b.images.shape(), (Shape{2, 3, 48, 48}));
  EXPECT_EQ(b.gts.shape(), (Shape{2, 1, 48, 48}));
  const auto whole = make_batch<float>(src, plan, NormStats{}, 352, 1, 1);
  EXPECT_EQ(whole.images.shape(), (Shape{2, 3, 64, 90}));
  const auto again = make_batch<float>(src, plan, NormStats{}, 48, 1, 2);
  EXPECT_TRUE(std::equal(b.images.data().begin(), b.images.data().end(), again.images.data().begin()));
}

TEST(Fit, SameSeedGivesIdenticalHistory) {
  const auto data = tiny_toy();
  auto run = [&] {
    Trainer<float> t(tiny_model(), {}, tiny_train(2));
    return t.fit(data, &data);
  };
  const RunHistory a = run(), b = run();
  ASSERT_EQ(a.step_losses.size(), 4u);
  EXPECT_EQ(a.step_losses, b.step_losses);  // bitwise
  ASSERT_EQ(a.epochs.size(), b.epochs.size());
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    auto x = a.epochs[i], y = b.epochs[i];
    x.wall_seconds = y.wall_seconds = 0;
    EXPECT_EQ(x, y);
  }
  Trainer<float> other(tiny_model(), {}, [] {
    auto t = tiny_train(1);
    t.seed = 4;
    return t;
  }());
  EXPECT_NE(other.fit(data, nullptr).step_losses.front(), a.step_losses.front());
}

TEST(Fit, RecordsLrActuallyUsed) {
  const auto data = tiny_toy(2, 32);
  TrainConfig tc = tiny_train(4, 2);
  tc.lr_drop_epochs = {1, 3};
  Trainer<float> t(tiny_model(), {}, tc);
  const auto h = t.fit(data, nullptr);
  ASSERT_EQ(h.epochs.size(), 4u);
  const double expected[] = {1e-4, 1e-5, 1e-5, 1e-6};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(h.epochs[i].epoch, i + 1);
    EXPECT_DOUBLE_EQ(h.epochs[i].lr, expected[i]);
  }
}

TEST(Fit, ToyLossDecreasesOverFiftySteps) {
  ToyConfig tc;  // 8 images at 96x96
  MemorySource data(make_toy_shapes(tc));
  DexiNedConfig mc;
  mc.width_multiplier = 0.25;
  TrainConfig t = tiny_train(50, 8);
  Trainer<float> trainer(mc, {}, t);
  const auto h = trainer.fit(data, nullptr);
  ASSERT_EQ(h.step_losses.size(), 50u);
  for (std::size_t i = 1; i < 50; ++i) EXPECT_LT(h.step_losses[i], h.step_losses[i - 1]) << i;
}

TEST(Fit, MaxStepsStopsMidEpoch) {
  const auto data = tiny_toy(6, 32);
  TrainConfig tc = tiny_train(10, 2);
  tc.max_steps = 4;
  Trainer<float> t(tiny_model(), {}, tc);
  const auto h = t.fit(data, nullptr);
  EXPECT_EQ(h.step_losses.size(), 4u);
  EXPECT_EQ(h.epochs.size(), 2u);
  EXPECT_EQ(h.epochs.back().steps, 4u);
}

TEST(Checkpoint, RoundTripsParametersStatsAndAdam) {
  const auto dir = scratch_dir("roundtrip");
  const auto data = tiny_toy(2, 32);
  Trainer<float> t(tiny_model(), {}, tiny_train(2));
  t.fit(data, nullptr);
  t.save(dir / "a.ckpt");
  Trainer<float> u(tiny_model(), {}, tiny_train(2));
  u.restore(dir / "a.ckpt");
  const auto& pa = t.model().parameters();
  const auto& pb = u.model().parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    ASSERT_TRUE(std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(),
                           pb[i].tensor.data().begin()))
        << pa[i].name;
    EXPECT_EQ(t.adam().m[i], u.adam().m[i]);
    EXPECT_EQ(t.adam().v[i], u.adam().v[i]);
  }
  EXPECT_EQ(t.adam().step, u.adam().step);
  const auto& sa = t.model().store().bn_stats();
  const auto& sb = u.model().store().bn_stats();
  for (std::size_t i = 0; i < sa.size(); ++i) {
    EXPECT_EQ(sa[i].batches_tracked, sb[i].batches_tracked);
    EXPECT_TRUE(std::equal(sa[i].running_var.data().begin(), sa[i].running_var.data().end(),
                           sb[i].running_var.data().begin()));
  }
  EXPECT_EQ(u.epochs_done(), 2u);
  EXPECT_EQ(u.history().step_losses, t.history().step_losses);
  EXPECT_EQ(u.norm().mean, t.norm().mean);
}

TEST(Checkpoint, RejectsCorruptionAndMismatchedModels) {
  const auto dir = scratch_dir("corrupt");
  DexiNed<float> m(tiny_model(), 1);
  save_checkpoint<float>(dir / "m.ckpt", m, nullptr, {{"k", 1}});
  EXPECT_EQ(read_checkpoint_meta(dir / "m.ckpt")["k"], 1);
  auto bytes = read_bytes(dir / "m.ckpt");
  bytes[bytes.size() / 2] ^= 0x40;
  write_bytes_atomic(dir / "bad.ckpt", bytes.data(), bytes.size());
  DexiNed<float> same(tiny_model(), 2);
  EXPECT_THROW(load_checkpoint(dir / "bad.ckpt", same), DataError);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt", same), DataError);
  DexiNedConfig other = tiny_model();
  other.skips = SkipMode::none;
  DexiNed<float> different(other, 1);
  EXPECT_THROW(load_checkpoint(dir / "m.ckpt", different), DataError);
  // a model of the other precision loads by conversion
  DexiNed<double> wide(tiny_model(), 9);
  load_checkpoint(dir / "m.ckpt", wide);
  EXPECT_EQ(float(wide.parameters()[0].tensor[0]), m.parameters()[0].tensor[0]);
}

TEST(Fit, ResumeEqualsUninterruptedRun) {
  const auto data = tiny_toy(4, 32);
  const auto dir = scratch_dir("resume");
  // 2 steps per epoch: 3 epochs, then 3 more after resuming (6 steps)
  Trainer<float> first(tiny_model(), {}, tiny_train(3));
  first.fit(data, nullptr, in_dir(dir));
  Trainer<float> resumed(tiny_model(), {}, tiny_train(6));
  const auto hr = resumed.fit(data, nullptr, in_dir(dir, true));
  Trainer<float> straight(tiny_model(), {}, tiny_train(6));
  const auto hs = straight.fit(data, nullptr);
  ASSERT_EQ(hs.step_losses.size(), 12u);
  EXPECT_EQ(hr.step_losses, hs.step_losses);
  const auto& a = resumed.model().parameters();
  const auto& b = straight.model().parameters();
  for (std::size_t i = 0; i < a.size(); ++i)
    ASSERT_TRUE(std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(),
                           b[i].tensor.data().begin()))
        << a[i].name;
  TrainConfig changed = tiny_train(8);
  changed.lr = 5e-4;
  Trainer<float> mismatch(tiny_model(), {}, changed);
  EXPECT_THROW(mismatch.fit(data, nullptr, in_dir(dir, true)), ConfigError);
}

TEST(Fit, WritesCheckpointsAndHistory) {
  const auto data = tiny_toy(2, 32);
  const auto dir = scratch_dir("artifacts");
  TrainConfig tc = tiny_train(3);
  tc.eval_every = 2;
  Trainer<float> t(tiny_model(), {}, tc);
  const auto h = t.fit(data, &data, in_dir(dir));
  EXPECT_TRUE(fs::exists(dir / "checkpoints" / "last.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "checkpoints" / "best.ckpt"));
  EXPECT_EQ(h.final_checkpoint, (dir / "checkpoints" / "last.ckpt").string());
  EXPECT_GE(h.best_epoch, 1u);
  // validation at epochs 2 and 3 (final) only
  EXPECT_FALSE(h.epochs[0].val_ods.has_value());
  EXPECT_TRUE(h.epochs[1].val_ods.has_value());
  EXPECT_TRUE(h.epochs[2].val_ods.has_value());
  const auto csv = read_bytes(dir / "history.csv");
  const std::string text(csv.begin(), csv.end());
  EXPECT_EQ(text.rfind("epoch,steps,loss,lr,ods,ois,ap,wall_seconds\n", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
  EXPECT_EQ(read_checkpoint_meta(dir / "checkpoints" / "last.ckpt")["epoch"], 3);
}

TEST(Fit, DivergenceAbortsAndKeepsLastGoodCheckpoint) {
  const auto data = tiny_toy(2, 32);
  const auto dir = scratch_dir("nan");
  Trainer<float> t(tiny_model(), {}, tiny_train(5));
  FitOptions opts = in_dir(dir);
  opts.on_epoch = [&](const EpochRecord& r) {
    if (r.epoch == 2) t.model().parameters()[0].tensor[0] = std::numeric_limits<float>::quiet_NaN();
  };
  try {
    t.fit(data, nullptr, opts);
    FAIL() << "divergence not detected";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("last good checkpoint"), std::string::npos) << e.what();
  }
  const auto meta = read_checkpoint_meta(dir / "checkpoints" / "last.ckpt");
  EXPECT_EQ(meta["epoch"], 2);
  DexiNed<float> m(tiny_model(), 0);
  load_checkpoint(dir / "checkpoints" / "last.ckpt", m);
  for (const auto& p : m.parameters())
    for (float v : p.tensor.data()) ASSERT_TRUE(std::isfinite(v)) << p.name;
}

TEST(Ablation, GridSharesInitAndSeeds) {
  const auto data = tiny_toy(2, 32);
  const auto rows = run_ablation<float>(tiny_model(), {}, tiny_train(1), {},
                                        default_ablation_grid(), {11}, data);
  ASSERT_EQ(rows.size(), 6u);
  for (const auto& r : rows) EXPECT_EQ(r.seed, 11u);
  EXPECT_LT(rows[0].parameters, rows[2].parameters);
  EXPECT_LT(rows[2].parameters, rows[4].parameters);
  EXPECT_EQ(rows[0].parameters, rows[1].parameters);
  EXPECT_EQ(rows[4].parameters, rows[5].parameters);
  const std::string csv = ablation_csv(rows);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
  EXPECT_NE(csv.find("DexiNed0C/bdcn2"), std::string::npos);
  EXPECT_NE(csv.find("ods,ois,ap"), std::string::npos);

  // shared layers start identical across skip variants
  DexiNedConfig none = tiny_model(), both = tiny_model();
  none.skips = SkipMode::none;
  DexiNed<float> a(none, 11), b(both, 11);
  std::size_t shared = 0;
  for (const auto& p : a.parameters()) {
    const auto* q = b.store().find(p.name);
    ASSERT_NE(q, nullptr) << p.name;
    ASSERT_TRUE(std::equal(p.tensor.data().begin(), p.tensor.data().end(), q->tensor.data().begin()));
    ++shared;
  }
  EXPECT_LT(shared, b.parameters().size());
}
