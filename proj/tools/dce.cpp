// Command-line front end: training pipelines, cost counters, the bandit
// simulator, the saliency audit and the synthetic-data generator. Exit codes:
// 0 ok, 2 config/usage error, 3 numeric failure.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "dce/checkpoint.hpp"
#include "dce/config.hpp"
#include "dce/report.hpp"
#include "dce/synth.hpp"
#include "dce/trainer.hpp"

namespace fs = std::filesystem;
using namespace dce;

namespace {

std::string fresh_run_dir(const std::string& base, const std::string& id) {
  fs::create_directories(base);
  std::string dir = base + "/" + id;
  for (int i = 1; fs::exists(dir); ++i) dir = base + "/" + id + "-" + std::to_string(i);
  fs::create_directories(dir);
  return dir;
}

void resolve_data_dir(TrainConfig& cfg) {
  if (cfg.data_dir.empty()) {
    if (const char* env = std::getenv("DCE_DATA_DIR")) cfg.data_dir = env;
  }
}

template <typename T>
int run_train(const TrainConfig& cfg) {
  const std::string dir = fresh_run_dir(cfg.out_dir, run_id(cfg));
  {
    std::ofstream mf(dir + "/manifest.conf");
    mf << manifest_text(cfg);
  }
  RunArtifacts<T> artifacts;
  const RunRecord rec = run_training<T>(cfg, &artifacts);

  write_step_csv(dir + "/step_log.csv", rec);
  write_epoch_csv(dir + "/epoch_log.csv", rec);
  write_selection_csv(dir + "/selection_report.csv", artifacts.explore_model.registry(), rec);
  save_checkpoint(dir + "/checkpoint_explore.dckp", artifacts.explore_model, &artifacts.final_mask);
  save_checkpoint(dir + "/checkpoint_final.dckp", artifacts.final_model, nullptr);

  const std::string summary = run_summary(rec);
  {
    std::ofstream sf(dir + "/summary.txt");
    sf << summary;
  }
  std::cout << "run dir: " << dir << "\n" << summary;
  return 0;
}

int cmd_train(TrainConfig cfg) {
  resolve_data_dir(cfg);
  cfg.validate();
  if (cfg.precision == "float64") return run_train<double>(cfg);
  return run_train<float>(cfg);
}

int cmd_count(const std::string& arch, const std::string& desc_file, const std::string& input,
              int classes, const std::string& csv_out, bool aux_ops) {
  ArchDescriptor d;
  if (!desc_file.empty()) {
    std::ifstream in(desc_file);
    if (!in) fail("cannot open descriptor file: " + desc_file);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    d = descriptor_from_text(text);
  } else {
    int c = 3, h = 32, w = 32;
    if (!input.empty() && std::sscanf(input.c_str(), "%dx%dx%d", &c, &h, &w) != 3)
      fail("--input must be CxHxW, got '" + input + "'");
    d = builtin_descriptor(arch, c, h, w, classes);
  }
  const CostReport report = count_cost(d, {.count_aux_ops = aux_ops});
  std::cout << cost_table(report);
  std::cout << strf("params=%lld macs=%lld\n", static_cast<long long>(report.total_params),
                    static_cast<long long>(report.total_macs));
  if (!csv_out.empty()) write_cost_csv(csv_out, report);
  return 0;
}

int cmd_bandit_sim(int arms, int cardinality, int64_t steps, double sigma, int seeds,
                   const std::string& csv_out) {
  check(cardinality >= 1 && cardinality < arms, "bandit-sim: need 1 <= cardinality < arms");
  ArmEnvironment env;
  env.sigma = sigma;
  for (int i = 1; i <= arms; ++i) env.true_means.push_back(double(i) / double(arms));
  const std::vector<int> truth = env.true_top(cardinality);

  std::ofstream csv;
  if (!csv_out.empty()) {
    csv.open(csv_out);
    if (!csv) fail("cannot create " + csv_out);
    csv << "seed,recovered";
    for (int a = 0; a < arms; ++a) csv << ",freq_arm" << a;
    csv << "\n";
  }

  int recovered = 0;
  for (int seed = 1; seed <= seeds; ++seed) {
    const SimResult res = simulate_cucb(env, cardinality, steps, uint64_t(seed));
    const bool ok = res.final_top == truth;
    recovered += ok;
    if (csv.is_open()) {
      csv << seed << "," << (ok ? 1 : 0);
      for (int a = 0; a < arms; ++a)
        csv << "," << fmt_g(steps > 0 ? double(res.times_selected[size_t(a)]) / double(steps) : 0.0);
      csv << "\n";
    }
  }
  std::cout << strf("recovered true top-%d in %d/%d seeds (arms=%d steps=%lld sigma=%g)\n",
                    cardinality, recovered, seeds, arms, static_cast<long long>(steps), sigma);
  return 0;
}

int cmd_saliency_audit(const std::string& checkpoint, const std::string& dataset,
                       const std::string& data_dir, int n_batches, int batch_size,
                       const std::string& csv_out) {
  const CheckpointData data = load_checkpoint(checkpoint);
  Model<double> model = model_from_checkpoint<double>(data);
  const ChannelRegistry& reg = model.registry();
  ChannelMask mask = ChannelMask::all_active(reg);
  if (data.has_mask) {
    check(int(data.mask_bits.size()) == reg.size(), "checkpoint mask does not match architecture");
    for (int f = 0; f < reg.size(); ++f)
      if (!data.mask_bits[size_t(f)]) mask.set(f, false);
  }

  std::string dir = data_dir;
  if (dir.empty())
    if (const char* env = std::getenv("DCE_DATA_DIR")) dir = env;
  Dataset train = load_dataset(dataset, dir, "train");
  normalize_train(train);
  check(train.channels == data.desc.in_channels && train.height == data.desc.in_h,
        "saliency-audit: dataset does not match checkpoint input shape");

  std::ofstream csv;
  if (!csv_out.empty()) {
    csv.open(csv_out);
    if (!csv) fail("cannot create " + csv_out);
    csv << "batch,layer,channel,oracle,taylor\n";
  }

  std::vector<double> correlations;
  std::vector<int> idx, labels;
  for (int b = 0; b < n_batches; ++b) {
    idx.clear();
    for (int i = 0; i < batch_size; ++i) {
      const size_t j = (size_t(b) * batch_size + i) % train.size();
      idx.push_back(int(j));
    }
    const Tensor<double> batch = make_batch<double>(train, idx, false, nullptr, labels);

    // Taylor side: one eval-mode forward/backward; raw per-channel values.
    Tape<double> tape;
    ForwardOptions<double> opt;
    opt.mask = &mask;
    opt.training = false;
    opt.tape = &tape;
    ForwardResult<double> fwd = model.forward(batch, opt);
    tape.backward(softmax_cross_entropy(&tape, fwd.logits, labels));
    std::vector<double> taylor, oracle;
    std::vector<int> flats;
    for (int l = 0; l < reg.layers(); ++l) {
      const std::vector<double> per = taylor_saliency_per_channel(fwd.taps[size_t(l)]);
      for (int k = 0; k < reg.width(l); ++k) {
        const int flat = reg.offset(l) + k;
        if (!mask.test(flat)) continue;
        flats.push_back(flat);
        taylor.push_back(per[size_t(k)]);
      }
    }
    model.zero_grads();

    // Oracle side: exact loss delta per channel, two eval passes each.
    for (int flat : flats) oracle.push_back(oracle_saliency(model, batch, labels, mask, flat));

    correlations.push_back(spearman(taylor, oracle));
    if (csv.is_open())
      for (size_t i = 0; i < flats.size(); ++i) {
        const ChannelId id = reg.id(flats[i]);
        csv << b << "," << id.layer << "," << id.index << "," << fmt_g(oracle[i]) << ","
            << fmt_g(taylor[i]) << "\n";
      }
    std::cout << strf("batch %d: spearman=%.4f over %zu channels\n", b, correlations.back(),
                      flats.size());
  }
  double mean = 0;
  for (double c : correlations) mean += c;
  mean /= double(correlations.size());
  std::cout << strf("mean spearman over %d batches: %.4f\n", n_batches, mean);
  return 0;
}

int cmd_synth_data(const std::string& out, int train_n, int test_n, uint64_t seed, int side,
                   double noise) {
  SynthOptions o;
  o.side = side;
  o.noise_sigma = noise;
  generate_synth_dataset(out, train_n, test_n, seed, o);
  std::cout << "wrote " << train_n << " train / " << test_n << " test images to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dce: dynamic channel execution -- bandit-driven thin-network training"};
  app.require_subcommand(1);

  // train
  TrainConfig cfg;
  std::string config_path;
  std::vector<std::string> overrides;
  CLI::App* train = app.add_subcommand("train", "run a training pipeline");
  train->add_option("--config", config_path, "key=value config file (manifests load too)");
  train->add_option("--set", overrides, "override, e.g. --set p=0.4 (repeatable)");
  train->add_option("--dataset", cfg.dataset, "mnist | cifar10");
  train->add_option("--data-dir", cfg.data_dir, "dataset root (default: $DCE_DATA_DIR)");
  train->add_option("--arch", cfg.arch, "tiny | desk | vgg19");
  train->add_option("--p", cfg.p, "active channel fraction in (0,1]");
  train->add_option("--batch-size", cfg.batch_size);
  train->add_option("--epochs", cfg.epochs);
  train->add_option("--lr0", cfg.lr0);
  train->add_option("--seed", cfg.seed);
  train->add_option("--selection", cfg.selection, "cucb | random");
  train->add_option("--pipeline", cfg.pipeline, "two-stage | single-stage");
  train->add_option("--freeze-epoch", cfg.freeze_epoch, "single-stage freeze point");
  train->add_option("--init-strategy", cfg.init_strategy, "cover | per-channel");
  train->add_option("--precision", cfg.precision, "float32 | float64");
  train->add_option("--augment", cfg.augment, "auto | on | off");
  train->add_option("--subset-per-class", cfg.subset_per_class, "train subset size per class");
  train->add_option("--test-subset-per-class", cfg.test_subset_per_class);
  train->add_option("--finetune-epochs", cfg.finetune_epochs, "0 = repeat the full budget");
  train->add_option("--out-dir", cfg.out_dir, "parent directory for run outputs");

  // count
  std::string count_arch = "vgg19", count_desc, count_input = "3x32x32", count_csv;
  int count_classes = 10;
  bool count_aux = false;
  CLI::App* count = app.add_subcommand("count", "parameter/MAC accounting for an architecture");
  count->add_option("--arch", count_arch, "tiny | desk | vgg19");
  count->add_option("--desc", count_desc, "descriptor file (overrides --arch)");
  count->add_option("--input", count_input, "input shape CxHxW");
  count->add_option("--classes", count_classes);
  count->add_option("--csv", count_csv, "also write machine-readable CSV here");
  count->add_flag("--aux-ops", count_aux, "count BN/ReLU/pool ops too (default: conv+linear MACs only)");

  // bandit-sim
  int sim_arms = 20, sim_card = 5, sim_seeds = 20;
  int64_t sim_steps = 5000;
  double sim_sigma = 0.1;
  std::string sim_csv;
  CLI::App* sim = app.add_subcommand("bandit-sim", "CUCB recovery on a synthetic environment");
  sim->add_option("--arms", sim_arms);
  sim->add_option("--cardinality", sim_card);
  sim->add_option("--steps", sim_steps);
  sim->add_option("--sigma", sim_sigma);
  sim->add_option("--seeds", sim_seeds, "number of seeds to run");
  sim->add_option("--csv", sim_csv, "per-seed recovery/frequency CSV");

  // saliency-audit
  std::string audit_ckpt, audit_dataset = "mnist", audit_dir, audit_csv;
  int audit_batches = 5, audit_batch_size = 32;
  CLI::App* audit = app.add_subcommand("saliency-audit",
                                       "compare Taylor saliencies against the exact loss-delta oracle");
  audit->add_option("--checkpoint", audit_ckpt)->required();
  audit->add_option("--dataset", audit_dataset, "mnist | cifar10");
  audit->add_option("--data-dir", audit_dir, "dataset root (default: $DCE_DATA_DIR)");
  audit->add_option("--batches", audit_batches);
  audit->add_option("--batch-size", audit_batch_size);
  audit->add_option("--csv", audit_csv, "per-channel oracle/taylor CSV");

  // synth-data
  std::string synth_out = "data/synth";
  int synth_train = 5000, synth_test = 1000, synth_side = 28;
  uint64_t synth_seed = 1;
  double synth_noise = 14.0;
  CLI::App* synth = app.add_subcommand("synth-data", "generate a synthetic digit dataset (IDX files)");
  synth->add_option("--out", synth_out);
  synth->add_option("--train", synth_train);
  synth->add_option("--test", synth_test);
  synth->add_option("--seed", synth_seed);
  synth->add_option("--side", synth_side);
  synth->add_option("--noise", synth_noise, "pixel noise sigma (0..255 scale)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) {
      if (!config_path.empty()) {
        // Start from the file; explicitly passed flags win.
        TrainConfig merged = config_from_manifest(config_path);
        auto keep = [&](const char* flag, auto member_ptr) {
          if (train->count(flag)) merged.*member_ptr = cfg.*member_ptr;
        };
        keep("--dataset", &TrainConfig::dataset);
        keep("--data-dir", &TrainConfig::data_dir);
        keep("--arch", &TrainConfig::arch);
        keep("--p", &TrainConfig::p);
        keep("--batch-size", &TrainConfig::batch_size);
        keep("--epochs", &TrainConfig::epochs);
        keep("--lr0", &TrainConfig::lr0);
        keep("--seed", &TrainConfig::seed);
        keep("--selection", &TrainConfig::selection);
        keep("--pipeline", &TrainConfig::pipeline);
        keep("--freeze-epoch", &TrainConfig::freeze_epoch);
        keep("--init-strategy", &TrainConfig::init_strategy);
        keep("--precision", &TrainConfig::precision);
        keep("--augment", &TrainConfig::augment);
        keep("--subset-per-class", &TrainConfig::subset_per_class);
        keep("--test-subset-per-class", &TrainConfig::test_subset_per_class);
        keep("--finetune-epochs", &TrainConfig::finetune_epochs);
        keep("--out-dir", &TrainConfig::out_dir);
        cfg = merged;
      }
      for (const std::string& kv : overrides) apply_override(cfg, kv);
      return cmd_train(cfg);
    }
    if (count->parsed())
      return cmd_count(count_arch, count_desc, count_input, count_classes, count_csv, count_aux);
    if (sim->parsed()) return cmd_bandit_sim(sim_arms, sim_card, sim_steps, sim_sigma, sim_seeds, sim_csv);
    if (audit->parsed())
      return cmd_saliency_audit(audit_ckpt, audit_dataset, audit_dir, audit_batches, audit_batch_size,
                                audit_csv);
    if (synth->parsed())
      return cmd_synth_data(synth_out, synth_train, synth_test, synth_seed, synth_side, synth_noise);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
