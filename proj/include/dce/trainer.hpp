#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "dce/bandit.hpp"
#include "dce/data.hpp"
#include "dce/model.hpp"
#include "dce/optim.hpp"
#include "dce/saliency.hpp"
#include "dce/surgeon.hpp"

namespace dce {

struct TrainConfig {
  std::string dataset = "mnist";  // mnist | cifar10
  std::string data_dir;
  std::string arch = "desk";  // tiny | desk | vgg19
  double p = 1.0;             // active channel fraction
  int batch_size = 64;
  int epochs = 20;
  double lr0 = 0.1;
  double momentum = 0.9;  // Nesterov, no dampening
  double weight_decay = 1e-4;
  uint64_t seed = 1;
  std::string selection = "cucb";      // cucb | random
  std::string pipeline = "two-stage";  // two-stage | single-stage
  int freeze_epoch = 40;               // single-stage only
  std::string init_strategy = "cover";  // cover | per-channel
  std::string precision = "float32";    // float32 | float64
  std::string augment = "auto";         // auto | on | off
  int subset_per_class = 0;       // 0 = full train split
  int test_subset_per_class = 0;  // 0 = full test split
  int min_per_layer = 1;
  int finetune_epochs = 0;  // 0 = same as epochs (fine-tune repeats the procedure)
  std::string out_dir = "runs";

  bool augment_enabled() const {
    if (augment == "on") return true;
    if (augment == "off") return false;
    return dataset == "cifar10";  // the 32x32 crop/flip recipe
  }

  void validate() const {
    check(p > 0.0 && p <= 1.0, strf("config: p=%g outside (0,1]", p));
    check(batch_size > 0 && epochs > 0, "config: batch_size and epochs must be positive");
    check(selection == "cucb" || selection == "random", "config: selection must be cucb or random");
    check(pipeline == "two-stage" || pipeline == "single-stage",
          "config: pipeline must be two-stage or single-stage");
    check(precision == "float32" || precision == "float64",
          "config: precision must be float32 or float64");
    check(augment == "auto" || augment == "on" || augment == "off",
          "config: augment must be auto, on or off");
    if (pipeline == "single-stage")
      check(freeze_epoch >= 0 && freeze_epoch < epochs,
            strf("config: freeze_epoch=%d must lie in [0, epochs=%d)", freeze_epoch, epochs));
  }
};

struct StepRow {
  std::string stage;  // init | explore | frozen | finetune
  int epoch;          // -1 for init
  int64_t t;          // bandit step counter at the time of the step
  double loss;
  double lr;
  int active;
  int repairs;
};

struct EpochRow {
  std::string stage;
  int epoch;
  double train_acc;
  double test_acc;
};

// Per-channel bandit snapshot for the selection report.
struct SelectionSnapshot {
  std::vector<int64_t> pulls;
  std::vector<double> mu_hat;
  std::vector<double> mu_bar;  // at the final t
  std::vector<uint8_t> selected;
  int64_t t = 0;
};

struct RunRecord {
  std::vector<StepRow> steps;
  std::vector<EpochRow> epochs;
  double final_test_acc = 0.0;
  double wall_seconds = 0.0;
  std::vector<int> final_channels;
  SelectionSnapshot selection;
  CostReport baseline_cost, final_cost;
  int64_t bandit_t_after_explore = 0;
  int total_repairs = 0;
  std::string data_source;  // resolved data directory
};

// Models the CLI persists as checkpoints at phase boundaries.
template <typename T>
struct RunArtifacts {
  Model<T> explore_model;           // after phase A (or at freeze)
  Model<T> final_model;             // compact fine-tuned / frozen model
  ChannelMask final_mask;           // over the explore model's registry
  ArchDescriptor final_descriptor;  // compact (two-stage) or original (single-stage)
};

template <typename T>
struct TrainStepResult {
  double loss = 0.0;
  double batch_acc = 0.0;
  SaliencyReport report;
};

// One optimizer step on one batch: forward/backward through the thin
// network, saliency report from the taps (before the weight update), then
// SGD+Nesterov on active-channel and non-gated parameters.
template <typename T>
TrainStepResult<T> train_step(Model<T>& model, SgdNesterov<T>& opt, const Tensor<T>& batch,
                              const std::vector<int>& labels, const ChannelMask* mask,
                              int64_t step_t, bool compute_saliency = true) {
  Tape<T> tape;
  ForwardOptions<T> fopt;
  fopt.mask = mask;
  fopt.training = true;
  fopt.tape = &tape;
  ForwardResult<T> fwd = model.forward(batch, fopt);
  Tensor<T> loss = softmax_cross_entropy(&tape, fwd.logits, labels);
  const double loss_v = double(loss.item());
  if (!std::isfinite(loss_v))
    throw NumericError(strf("train_step: non-finite loss %g at t=%lld (diverged; lower lr0 or check data)",
                            loss_v, static_cast<long long>(step_t)));
  tape.backward(loss);

  TrainStepResult<T> out;
  out.loss = loss_v;
  if (compute_saliency && mask)
    out.report = saliency_report(model.registry(), fwd, *mask, step_t);

  // batch accuracy from the already-computed logits
  const int n = fwd.logits.dim(0), c = fwd.logits.dim(1);
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    const T* row = fwd.logits.data() + size_t(i) * c;
    int best = 0;
    for (int j = 1; j < c; ++j)
      if (row[j] > row[best]) best = j;
    if (best == labels[size_t(i)]) ++correct;
  }
  out.batch_acc = double(correct) / double(n);

  opt.step(model.registry(), mask);
  model.zero_grads();
  return out;
}

template <typename T>
double evaluate(Model<T>& model, const Dataset& ds, const ChannelMask* mask, int eval_batch = 256) {
  size_t correct = 0;
  std::vector<int> labels;
  std::vector<int> idx;
  for (size_t start = 0; start < ds.size(); start += size_t(eval_batch)) {
    const size_t end = std::min(ds.size(), start + size_t(eval_batch));
    idx.resize(end - start);
    for (size_t i = start; i < end; ++i) idx[i - start] = int(i);
    Tensor<T> batch = make_batch<T>(ds, idx, false, nullptr, labels);
    Tensor<T> logits = model.logits(batch, mask);
    const int c = logits.dim(1);
    for (size_t i = 0; i < idx.size(); ++i) {
      const T* row = logits.data() + i * size_t(c);
      int best = 0;
      for (int j = 1; j < c; ++j)
        if (row[j] > row[best]) best = j;
      if (best == labels[i]) ++correct;
    }
  }
  return double(correct) / double(ds.size());
}

namespace trainer_detail {

struct LoadedData {
  Dataset train, test;
};

inline LoadedData load_and_prepare(const TrainConfig& cfg) {
  LoadedData d;
  d.train = load_dataset(cfg.dataset, cfg.data_dir, "train");
  d.test = load_dataset(cfg.dataset, cfg.data_dir, "test");
  check(d.train.size() > 0 && d.test.size() > 0, "trainer: empty dataset");
  if (cfg.subset_per_class > 0) d.train = subset_per_class(d.train, cfg.subset_per_class);
  if (cfg.test_subset_per_class > 0) d.test = subset_per_class(d.test, cfg.test_subset_per_class);
  normalize_train(d.train);
  normalize_with(d.test, d.train.mean, d.train.stddev);
  return d;
}

}  // namespace trainer_detail

// Runs the configured pipeline end to end. `artifacts` (optional) receives
// the phase-boundary models for checkpointing.
template <typename T>
RunRecord run_training(const TrainConfig& cfg, RunArtifacts<T>* artifacts = nullptr) {
  cfg.validate();
  const auto t_begin = std::chrono::steady_clock::now();

  trainer_detail::LoadedData data = trainer_detail::load_and_prepare(cfg);
  const ArchDescriptor desc =
      builtin_descriptor(cfg.arch, data.train.channels, data.train.height, data.train.width,
                         data.train.num_classes);
  const ChannelRegistry reg = make_registry(desc);

  Rng master(cfg.seed);
  Model<T> model(desc, master.fork(1).next_u64());
  SgdNesterov<T> opt(model, cfg.lr0, cfg.momentum, cfg.weight_decay);
  BanditState state(reg.size());

  Rng rng_init_masks = master.fork(2);
  Rng rng_batches = master.fork(3);
  Rng rng_augment = master.fork(4);
  Rng rng_random_sel = master.fork(5);
  Rng rng_eval_mask = master.fork(6);

  const bool use_random = cfg.selection == "random";
  const bool augment = cfg.augment_enabled();
  const bool single_stage = cfg.pipeline == "single-stage";

  RunRecord rec;
  rec.baseline_cost = count_cost(desc);
  rec.data_source = cfg.data_dir;

  BatchPlan plan(data.train.size(), cfg.batch_size, true, rng_batches);
  std::vector<int> batch_idx;
  std::vector<int> labels;

  auto next_batch = [&](Tensor<T>& out) {
    if (!plan.next(batch_idx)) {
      plan.start_epoch();
      check(plan.next(batch_idx), "trainer: empty batch plan");
    }
    out = make_batch<T>(data.train, batch_idx, augment, &rng_augment, labels);
  };

  // --- initialization round (Algorithm step 2): every channel activated at
  // least once through real thin-network passes; t then jumps to the total
  // channel count no matter how many steps the strategy used.
  plan.start_epoch();
  {
    const std::vector<ChannelMask> init_plan = plan_init_masks(
        reg, cfg.p, init_strategy_from_string(cfg.init_strategy), rng_init_masks, cfg.min_per_layer);
    Tensor<T> batch;
    for (const ChannelMask& mask : init_plan) {
      next_batch(batch);
      opt.set_lr(lr_at_epoch(cfg.lr0, 0, cfg.epochs));
      TrainStepResult<T> res = train_step(model, opt, batch, labels, &mask, state.step);
      bandit_update(state, mask, res.report);
      rec.steps.push_back({"init", -1, state.step, res.loss, opt.lr(), mask.count(), 0});
    }
    finish_init(state, reg);
  }

  // --- dynamic-selection epochs (phase A / pre-freeze)
  const int dynamic_epochs = single_stage ? cfg.freeze_epoch : cfg.epochs;
  auto eval_mask_for_epoch = [&]() -> ChannelMask {
    if (use_random) return random_mask(reg, cfg.p, rng_eval_mask, cfg.min_per_layer);
    return mask_from_selection(reg, final_selection(state, reg, cfg.p, cfg.min_per_layer), cfg.p,
                               cfg.min_per_layer);
  };

  for (int epoch = 0; epoch < dynamic_epochs; ++epoch) {
    opt.set_lr(lr_at_epoch(cfg.lr0, epoch, cfg.epochs));
    plan.start_epoch();
    size_t seen = 0;
    double acc_weighted = 0;
    while (plan.next(batch_idx)) {
      Tensor<T> batch = make_batch<T>(data.train, batch_idx, augment, &rng_augment, labels);
      state.step += 1;
      int repairs = 0;
      ChannelMask mask =
          use_random ? random_mask(reg, cfg.p, rng_random_sel, cfg.min_per_layer)
                     : mask_from_selection(
                           reg, select_superarm(state, reg, cfg.p, cfg.min_per_layer, &repairs),
                           cfg.p, cfg.min_per_layer);
      TrainStepResult<T> res = train_step(model, opt, batch, labels, &mask, state.step);
      bandit_update(state, mask, res.report);
      rec.steps.push_back({"explore", epoch, state.step, res.loss, opt.lr(), mask.count(), repairs});
      rec.total_repairs += repairs;
      acc_weighted += res.batch_acc * double(batch_idx.size());
      seen += batch_idx.size();
    }
    ChannelMask emask = eval_mask_for_epoch();
    const double test_acc = evaluate(model, data.test, &emask);
    rec.epochs.push_back({"explore", epoch, seen ? acc_weighted / double(seen) : 0.0, test_acc});
  }
  rec.bandit_t_after_explore = state.step;

  // --- topology freeze: exploitation-mode selection by plain mean saliency
  int final_repairs = 0;
  std::vector<int> chosen =
      use_random ? random_mask(reg, cfg.p, rng_random_sel, cfg.min_per_layer).active_indices()
                 : final_selection(state, reg, cfg.p, cfg.min_per_layer, &final_repairs);
  rec.total_repairs += final_repairs;
  ChannelMask final_mask = mask_from_selection(reg, chosen, cfg.p, cfg.min_per_layer);
  rec.final_channels = chosen;

  rec.selection.t = state.step;
  rec.selection.pulls = state.pulls;
  rec.selection.mu_hat = state.mean_sal;
  rec.selection.mu_bar.resize(size_t(reg.size()));
  for (int i = 0; i < reg.size(); ++i)
    rec.selection.mu_bar[size_t(i)] =
        adjusted_saliency(state.mean_sal[size_t(i)], state.pulls[size_t(i)], state.step);
  rec.selection.selected.assign(size_t(reg.size()), 0);
  for (int f : chosen) rec.selection.selected[size_t(f)] = 1;

  if (artifacts) {
    artifacts->explore_model = model.clone();
    artifacts->final_mask = final_mask;
  }

  if (single_stage) {
    // Same model, same optimizer state, same schedule; only the mask is now
    // frozen. No weight copying, no re-initialization.
    for (int epoch = dynamic_epochs; epoch < cfg.epochs; ++epoch) {
      opt.set_lr(lr_at_epoch(cfg.lr0, epoch, cfg.epochs));
      plan.start_epoch();
      size_t seen = 0;
      double acc_weighted = 0;
      while (plan.next(batch_idx)) {
        Tensor<T> batch = make_batch<T>(data.train, batch_idx, augment, &rng_augment, labels);
        state.step += 1;
        TrainStepResult<T> res =
            train_step(model, opt, batch, labels, &final_mask, state.step, /*compute_saliency=*/false);
        rec.steps.push_back({"frozen", epoch, state.step, res.loss, opt.lr(), final_mask.count(), 0});
        acc_weighted += res.batch_acc * double(batch_idx.size());
        seen += batch_idx.size();
      }
      const double test_acc = evaluate(model, data.test, &final_mask);
      rec.epochs.push_back({"frozen", epoch, seen ? acc_weighted / double(seen) : 0.0, test_acc});
    }
    rec.final_test_acc = rec.epochs.empty() ? evaluate(model, data.test, &final_mask)
                                            : rec.epochs.back().test_acc;
    rec.final_cost = count_cost(make_compact_plan(desc, final_mask).compact_desc);
    if (artifacts) {
      artifacts->final_model = model.clone();
      artifacts->final_descriptor = desc;
    }
  } else {
    // Two-stage: instantiate the compact model, copy surviving weights, and
    // fine-tune it by repeating the training procedure (fresh optimizer and
    // schedule, learned weights retained).
    Model<T> compact = extract_compact(model, final_mask);
    rec.final_cost = count_cost(compact.descriptor());
    const int ft_epochs = cfg.finetune_epochs > 0 ? cfg.finetune_epochs : cfg.epochs;
    SgdNesterov<T> ft_opt(compact, cfg.lr0, cfg.momentum, cfg.weight_decay);
    for (int epoch = 0; epoch < ft_epochs; ++epoch) {
      ft_opt.set_lr(lr_at_epoch(cfg.lr0, epoch, ft_epochs));
      plan.start_epoch();
      size_t seen = 0;
      double acc_weighted = 0;
      while (plan.next(batch_idx)) {
        Tensor<T> batch = make_batch<T>(data.train, batch_idx, augment, &rng_augment, labels);
        TrainStepResult<T> res = train_step(compact, ft_opt, batch, labels, nullptr, -1,
                                            /*compute_saliency=*/false);
        rec.steps.push_back(
            {"finetune", epoch, -1, res.loss, ft_opt.lr(), final_mask.count(), 0});
        acc_weighted += res.batch_acc * double(batch_idx.size());
        seen += batch_idx.size();
      }
      const double test_acc = evaluate(compact, data.test, nullptr);
      rec.epochs.push_back({"finetune", epoch, seen ? acc_weighted / double(seen) : 0.0, test_acc});
    }
    rec.final_test_acc = rec.epochs.empty() ? evaluate(compact, data.test, nullptr)
                                            : rec.epochs.back().test_acc;
    if (artifacts) {
      artifacts->final_model = compact.clone();
      artifacts->final_descriptor = compact.descriptor();
    }
  }

  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
  return rec;
}

template <typename T>
RunRecord run_two_stage(const TrainConfig& cfg, RunArtifacts<T>* artifacts = nullptr) {
  TrainConfig c = cfg;
  c.pipeline = "two-stage";
  return run_training<T>(c, artifacts);
}

template <typename T>
RunRecord run_single_stage(const TrainConfig& cfg, RunArtifacts<T>* artifacts = nullptr) {
  TrainConfig c = cfg;
  c.pipeline = "single-stage";
  return run_training<T>(c, artifacts);
}

template <typename T>
RunRecord run_random_baseline(const TrainConfig& cfg, RunArtifacts<T>* artifacts = nullptr) {
  TrainConfig c = cfg;
  c.selection = "random";
  c.pipeline = "two-stage";
  return run_training<T>(c, artifacts);
}

}  // namespace dce
