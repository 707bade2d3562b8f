#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>
#include <unistd.h>

#include "dce/config.hpp"
#include "dce/report.hpp"
#include "dce/synth.hpp"
#include "dce/trainer.hpp"

using namespace dce;
namespace fs = std::filesystem;

namespace {

// Small synthetic digit set shared by the trainer tests (12x12, 150/50).
// Per-process directory: ctest runs tests in parallel processes.
const std::string& synth_dir() {
  static const std::string dir = [] {
    const fs::path d = fs::temp_directory_path() /
                       ("dce_trainer_data_" + std::to_string(::getpid()));
    fs::remove_all(d);
    SynthOptions o;
    o.side = 12;
    o.noise_sigma = 10.0;
    generate_synth_dataset(d.string(), 150, 50, 42, o);
    return d.string();
  }();
  return dir;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.dataset = "mnist";
  cfg.data_dir = synth_dir();
  cfg.arch = "tiny";
  cfg.p = 0.5;
  cfg.batch_size = 25;
  cfg.epochs = 2;
  cfg.lr0 = 0.05;
  cfg.seed = 7;
  cfg.precision = "float64";
  return cfg;
}

std::string record_fingerprint(const RunRecord& rec) {
  std::ostringstream os;
  for (const auto& s : rec.steps)
    os << s.stage << "|" << s.epoch << "|" << s.t << "|" << strf("%.17g", s.loss) << "|"
       << strf("%.17g", s.lr) << "|" << s.active << "|" << s.repairs << "\n";
  for (const auto& e : rec.epochs)
    os << e.stage << "|" << e.epoch << "|" << strf("%.17g", e.train_acc) << "|"
       << strf("%.17g", e.test_acc) << "\n";
  os << strf("%.17g", rec.final_test_acc);
  for (int c : rec.final_channels) os << "," << c;
  return os.str();
}

}  // namespace

TEST(Schedule, TwoDropsAtHalfAndThreeQuarters) {
  for (int e = 0; e < 10; ++e) EXPECT_DOUBLE_EQ(lr_at_epoch(0.1, e, 20), 0.1);
  for (int e = 10; e < 15; ++e) EXPECT_DOUBLE_EQ(lr_at_epoch(0.1, e, 20), 0.01);
  for (int e = 15; e < 20; ++e) EXPECT_DOUBLE_EQ(lr_at_epoch(0.1, e, 20), 0.001);
  EXPECT_DOUBLE_EQ(lr_at_epoch(0.1, 1, 4), 0.1);
  EXPECT_DOUBLE_EQ(lr_at_epoch(0.1, 2, 4), 0.01);
  EXPECT_DOUBLE_EQ(lr_at_epoch(0.1, 3, 4), 0.001);
}

TEST(Optimizer, NesterovMatchesClosedFormRecursion) {
  const ArchDescriptor d = tiny_descriptor();
  Model<double> m(d, 3);
  SgdNesterov<double> opt(m, 0.1, 0.9, 0.0);
  Tensor<double> bias = m.head().bias;
  const int n = int(bias.numel());

  std::vector<double> w_ref(bias.values());
  std::vector<double> v_ref(size_t(n), 0.0);
  Rng rng(5);
  for (int it = 0; it < 6; ++it) {
    std::vector<double> g(static_cast<size_t>(n));
    for (auto& x : g) x = rng.uniform_real(-1, 1);
    std::copy(g.begin(), g.end(), bias.grad().begin());
    opt.step(m.registry(), nullptr);
    m.zero_grads();
    // v <- mu v + g; w <- w - lr (g + mu v)
    for (int i = 0; i < n; ++i) {
      v_ref[size_t(i)] = 0.9 * v_ref[size_t(i)] + g[size_t(i)];
      w_ref[size_t(i)] -= 0.1 * (g[size_t(i)] + 0.9 * v_ref[size_t(i)]);
    }
    for (int i = 0; i < n; ++i) EXPECT_NEAR(bias.values()[size_t(i)], w_ref[size_t(i)], 1e-12);
  }
}

TEST(Optimizer, WeightDecayFoldsIntoGradient) {
  const ArchDescriptor d = tiny_descriptor();
  Model<double> m(d, 4);
  SgdNesterov<double> opt(m, 0.1, 0.0, 0.5);  // no momentum isolates wd
  Tensor<double> bias = m.head().bias;
  bias.values()[0] = 2.0;
  bias.grad()[0] = 0.0;
  opt.step(m.registry(), nullptr);
  // g = 0 + 0.5*2 = 1; w = 2 - 0.1*1 = 1.9
  EXPECT_NEAR(bias.values()[0], 1.9, 1e-15);
}

TEST(TrainStep, ZeroLearningRateIsANoOp) {
  const ArchDescriptor d = tiny_descriptor(1, 12, 12, 10);
  Model<double> m(d, 9);
  SgdNesterov<double> opt(m, 0.0, 0.9, 1e-4);
  Rng rng(2);
  Tensor<double> batch = Tensor<double>::zeros({8, 1, 12, 12});
  for (auto& v : batch.values()) v = rng.uniform_real(-1, 1);
  std::vector<int> labels{0, 1, 2, 3, 4, 5, 6, 7};
  const ChannelMask all = ChannelMask::all_active(m.registry());

  const auto w_before = m.conv_unit(0).weight.values();
  auto r1 = train_step(m, opt, batch, labels, &all, 1);
  auto r2 = train_step(m, opt, batch, labels, &all, 2);
  EXPECT_EQ(m.conv_unit(0).weight.values(), w_before);
  // Running BN stats still move between the calls, so compare losses by
  // recomputing with frozen stats instead: second call sees updated stats.
  EXPECT_TRUE(std::isfinite(r1.loss) && std::isfinite(r2.loss));
}

TEST(TrainStep, AllActiveMaskEqualsUnmaskedTraining) {
  const ArchDescriptor d = tiny_descriptor(1, 12, 12, 10);
  Model<double> a(d, 11), b(d, 11);
  SgdNesterov<double> oa(a, 0.05, 0.9, 1e-4), ob(b, 0.05, 0.9, 1e-4);
  Rng rng(3);
  Tensor<double> batch = Tensor<double>::zeros({8, 1, 12, 12});
  for (auto& v : batch.values()) v = rng.uniform_real(-1, 1);
  std::vector<int> labels{1, 2, 3, 4, 5, 6, 7, 8};
  const ChannelMask all = ChannelMask::all_active(a.registry());

  const auto ra = train_step(a, oa, batch, labels, &all, 1);
  const auto rb = train_step(b, ob, batch, labels, nullptr, 1, /*compute_saliency=*/false);
  EXPECT_EQ(ra.loss, rb.loss);
  EXPECT_EQ(a.conv_unit(0).weight.values(), b.conv_unit(0).weight.values());
  EXPECT_EQ(a.conv_unit(1).gamma.values(), b.conv_unit(1).gamma.values());
  EXPECT_EQ(a.head().weight.values(), b.head().weight.values());
}

TEST(TrainStep, InactiveChannelParamsBitIdentical) {
  const ArchDescriptor d = tiny_descriptor(1, 12, 12, 10);
  Model<double> m(d, 13);
  SgdNesterov<double> opt(m, 0.1, 0.9, 1e-4);
  Rng rng(4);
  Tensor<double> batch = Tensor<double>::zeros({8, 1, 12, 12});
  for (auto& v : batch.values()) v = rng.uniform_real(-1, 1);
  std::vector<int> labels{0, 1, 2, 3, 4, 5, 6, 7};

  for (int step = 0; step < 5; ++step) {
    const ChannelMask mask = random_mask(m.registry(), 0.5, rng);
    std::vector<std::vector<double>> w_before, g_before, b_before;
    std::vector<std::vector<double>> rm_before, rv_before;
    for (int u = 0; u < 2; ++u) {
      w_before.push_back(m.conv_unit(u).weight.values());
      g_before.push_back(m.conv_unit(u).gamma.values());
      b_before.push_back(m.conv_unit(u).beta.values());
      rm_before.push_back(m.conv_unit(u).run_mean);
      rv_before.push_back(m.conv_unit(u).run_var);
    }
    train_step(m, opt, batch, labels, &mask, step + 1);
    for (int u = 0; u < 2; ++u) {
      const auto& cu = m.conv_unit(u);
      const int stride = cu.c_in * cu.kernel * cu.kernel;
      for (int ch = 0; ch < cu.c_out; ++ch) {
        if (mask.test(m.registry().offset(u) + ch)) continue;
        for (int i = 0; i < stride; ++i)
          ASSERT_EQ(cu.weight.values()[size_t(ch * stride + i)], w_before[size_t(u)][size_t(ch * stride + i)]);
        ASSERT_EQ(cu.gamma.values()[size_t(ch)], g_before[size_t(u)][size_t(ch)]);
        ASSERT_EQ(cu.beta.values()[size_t(ch)], b_before[size_t(u)][size_t(ch)]);
        ASSERT_EQ(cu.run_mean[size_t(ch)], rm_before[size_t(u)][size_t(ch)]);
        ASSERT_EQ(cu.run_var[size_t(ch)], rv_before[size_t(u)][size_t(ch)]);
      }
    }
  }
}

TEST(Evaluate, NoLeakage) {
  const ArchDescriptor d = tiny_descriptor(1, 12, 12, 10);
  Model<double> m(d, 17);
  Dataset test = load_dataset("mnist", synth_dir(), "test");
  normalize_train(test);  // stats irrelevant for the leakage check

  const auto rm = m.conv_unit(0).run_mean;
  const auto w = m.conv_unit(0).weight.values();
  const double acc1 = evaluate(m, test, nullptr);
  const double acc2 = evaluate(m, test, nullptr);
  EXPECT_EQ(acc1, acc2);
  EXPECT_EQ(m.conv_unit(0).run_mean, rm);
  EXPECT_EQ(m.conv_unit(0).weight.values(), w);
}

TEST(Pipeline, StepAccountingMatchesAlgorithm) {
  TrainConfig cfg = small_config();
  const RunRecord rec = run_training<double>(cfg);
  // tiny: 24 channels; 150 images / batch 25 = 6 steps per epoch.
  EXPECT_EQ(rec.bandit_t_after_explore, 24 + 2 * 6);
  // Init used ceil(1/p)=2 cover steps; explore logged 12 rows; finetune 12.
  int init_rows = 0, explore_rows = 0, finetune_rows = 0;
  for (const auto& s : rec.steps) {
    init_rows += s.stage == "init";
    explore_rows += s.stage == "explore";
    finetune_rows += s.stage == "finetune";
  }
  EXPECT_EQ(init_rows, 2);
  EXPECT_EQ(explore_rows, 12);
  EXPECT_EQ(finetune_rows, 12);
  EXPECT_EQ(int(rec.final_channels.size()), 12);
  EXPECT_GT(rec.final_test_acc, 0.0);
}

TEST(Pipeline, DeterministicRecord) {
  TrainConfig cfg = small_config();
  const RunRecord a = run_training<double>(cfg);
  const RunRecord b = run_training<double>(cfg);
  EXPECT_EQ(record_fingerprint(a), record_fingerprint(b));
  TrainConfig other = cfg;
  other.seed = 8;
  const RunRecord c = run_training<double>(other);
  EXPECT_NE(record_fingerprint(a), record_fingerprint(c));
}

TEST(Pipeline, FullFractionDegeneratesToBaseline) {
  TrainConfig cfg = small_config();
  cfg.p = 1.0;
  const RunRecord rec = run_training<double>(cfg);
  EXPECT_EQ(int(rec.final_channels.size()), 24);
  EXPECT_EQ(rec.final_cost.total_params, rec.baseline_cost.total_params);
  for (const auto& s : rec.steps) EXPECT_EQ(s.active, 24);
}

TEST(Pipeline, RandomSelectionSameSchema) {
  TrainConfig cfg = small_config();
  cfg.selection = "random";
  const RunRecord rec = run_training<double>(cfg);
  EXPECT_EQ(int(rec.final_channels.size()), 12);
  EXPECT_LT(rec.final_cost.total_params, rec.baseline_cost.total_params);
  for (const auto& s : rec.steps)
    if (s.stage == "explore") { EXPECT_EQ(s.active, 12); }
}

TEST(Pipeline, SingleStageKeepsTopologyAndSchedule) {
  TrainConfig cfg = small_config();
  cfg.pipeline = "single-stage";
  cfg.epochs = 4;
  cfg.freeze_epoch = 2;
  const RunRecord rec = run_training<double>(cfg);
  int explore_rows = 0, frozen_rows = 0, finetune_rows = 0;
  for (const auto& s : rec.steps) {
    explore_rows += s.stage == "explore";
    frozen_rows += s.stage == "frozen";
    finetune_rows += s.stage == "finetune";
  }
  EXPECT_EQ(explore_rows, 12);
  EXPECT_EQ(frozen_rows, 12);
  EXPECT_EQ(finetune_rows, 0);
  // Frozen epochs continue the same schedule: with J=4, epoch 2 drops to
  // lr0/10 and epoch 3 to lr0/100.
  for (const auto& s : rec.steps) {
    if (s.stage == "frozen" && s.epoch == 2) { EXPECT_DOUBLE_EQ(s.lr, cfg.lr0 / 10.0); }
    if (s.stage == "frozen" && s.epoch == 3) { EXPECT_DOUBLE_EQ(s.lr, cfg.lr0 / 100.0); }
  }
}

TEST(Pipeline, SingleStageFreezeAtZeroUsesInitEstimatesOnly) {
  TrainConfig cfg = small_config();
  cfg.pipeline = "single-stage";
  cfg.freeze_epoch = 0;
  const RunRecord rec = run_training<double>(cfg);
  for (const auto& s : rec.steps) EXPECT_NE(s.stage, "explore");
  EXPECT_EQ(rec.bandit_t_after_explore, 24);
}

TEST(Config, ManifestRoundTripAndRunId) {
  TrainConfig cfg = small_config();
  const std::string text = manifest_text(cfg);
  const fs::path p = fs::temp_directory_path() / "dce_manifest_test.conf";
  std::ofstream(p) << text;
  const TrainConfig back = config_from_manifest(p.string());
  EXPECT_EQ(manifest_text(back), text);
  EXPECT_EQ(run_id(back), run_id(cfg));
  TrainConfig other = cfg;
  other.seed += 1;
  EXPECT_NE(run_id(other), run_id(cfg));
  fs::remove(p);

  TrainConfig o = cfg;
  apply_override(o, "p=0.4");
  EXPECT_DOUBLE_EQ(o.p, 0.4);
  EXPECT_THROW(apply_override(o, "nonsense"), Error);
  EXPECT_THROW(apply_override(o, "unknown_key=3"), Error);
}
