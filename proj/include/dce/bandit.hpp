#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "dce/channels.hpp"
#include "dce/saliency.hpp"

namespace dce {

// Per-channel activation counts and running mean of observed normalized
// saliencies, plus the global step counter t. After init every T >= 1 and
// t equals the total channel count.
struct BanditState {
  std::vector<int64_t> pulls;     // T_l^k per flat channel
  std::vector<double> mean_sal;   // mu_hat per flat channel
  int64_t step = 0;               // t
  bool initialized = false;

  explicit BanditState(int n_channels = 0)
      : pulls(size_t(n_channels), 0), mean_sal(size_t(n_channels), 0.0) {}

  int size() const { return int(pulls.size()); }
};

// mu_bar = mu_hat + sqrt(3 ln t / (2 T)).
inline double adjusted_saliency(double mu_hat, int64_t pulls, int64_t t) {
  check(pulls >= 1, "adjusted_saliency: channel has never been activated (T = 0)");
  check(t >= 1, "adjusted_saliency: step counter must be >= 1");
  return mu_hat + std::sqrt(3.0 * std::log(double(t)) / (2.0 * double(pulls)));
}

namespace detail {

// Descending by score; ties broken toward lower pull count, then lower
// (layer, channel) order -- i.e. lower flat index.
inline std::vector<int> rank_channels(const std::vector<double>& score,
                                      const std::vector<int64_t>& pulls) {
  std::vector<int> order(score.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (score[size_t(a)] != score[size_t(b)]) return score[size_t(a)] > score[size_t(b)];
    if (pulls[size_t(a)] != pulls[size_t(b)]) return pulls[size_t(a)] < pulls[size_t(b)];
    return a < b;
  });
  return order;
}

}  // namespace detail

// Exploration-phase super-arm: top round(p*K) by adjusted saliency, floor-
// repaired. Returns flat channel indices (ascending).
inline std::vector<int> select_superarm(const BanditState& state, const ChannelRegistry& reg, double p,
                                        int min_per_layer = 1, int* repairs = nullptr) {
  check(state.initialized, "select_superarm: bandit not initialized");
  check(state.size() == reg.size(), "select_superarm: state/registry size mismatch");
  std::vector<double> score(size_t(reg.size()));
  for (int i = 0; i < reg.size(); ++i)
    score[size_t(i)] = adjusted_saliency(state.mean_sal[size_t(i)], state.pulls[size_t(i)], state.step);
  const std::vector<int> ranking = detail::rank_channels(score, state.pulls);
  const int target = target_cardinality(reg, p);
  std::vector<int> selected(ranking.begin(), ranking.begin() + target);
  selected = repair_selection(reg, std::move(selected), ranking, target, min_per_layer, repairs);
  return selected;
}

// Exploitation-phase selection: top round(p*K) by plain mean saliency (no
// exploration bonus), same tie rule, floor-repaired.
inline std::vector<int> final_selection(const BanditState& state, const ChannelRegistry& reg, double p,
                                        int min_per_layer = 1, int* repairs = nullptr) {
  check(state.initialized, "final_selection: bandit not initialized");
  check(state.size() == reg.size(), "final_selection: state/registry size mismatch");
  const std::vector<int> ranking = detail::rank_channels(state.mean_sal, state.pulls);
  const int target = target_cardinality(reg, p);
  std::vector<int> selected(ranking.begin(), ranking.begin() + target);
  selected = repair_selection(reg, std::move(selected), ranking, target, min_per_layer, repairs);
  return selected;
}

// Folds one step's observations into T and mu_hat. The step counter is NOT
// advanced here; the training loop increments t before selection.
inline void bandit_update(BanditState& state, const ChannelMask& mask, const SaliencyReport& report) {
  check(state.size() == mask.size(), "bandit_update: state/mask size mismatch");
  for (size_t i = 0; i < report.channels.size(); ++i) {
    const int flat = report.channels[i];
    check(mask.test(flat), strf("bandit_update: report contains inactive channel %d", flat));
    int64_t& t_ch = state.pulls[size_t(flat)];
    double& mu = state.mean_sal[size_t(flat)];
    t_ch += 1;
    mu += (report.values[i] - mu) / double(t_ch);
  }
}

enum class InitStrategy { PerChannel, Cover };

inline InitStrategy init_strategy_from_string(const std::string& s) {
  if (s == "per-channel") return InitStrategy::PerChannel;
  if (s == "cover") return InitStrategy::Cover;
  fail("unknown init strategy '" + s + "' (expected per-channel or cover)");
}

// Masks for the initialization round. PerChannel plays one super-arm per
// channel (each containing its designated channel); Cover partitions a random
// permutation into ceil(K/|S|) groups so every channel appears once.
inline std::vector<ChannelMask> plan_init_masks(const ChannelRegistry& reg, double p,
                                                InitStrategy strategy, Rng& rng, int min_per_layer = 1) {
  const int total = reg.size();
  const int m = target_cardinality(reg, p);
  check(m >= min_per_layer * reg.layers(),
        strf("plan_init_masks: cardinality %d cannot cover %d layers", m, reg.layers()));
  std::vector<ChannelMask> plan;

  auto fill_mask = [&](const std::vector<int>& must_have) {
    std::vector<uint8_t> in(size_t(total), 0);
    std::vector<int> selected = must_have;
    for (int f : must_have) in[size_t(f)] = 1;
    while (int(selected.size()) < m) {
      const int f = int(rng.uniform_index(uint64_t(total)));
      if (!in[size_t(f)]) {
        in[size_t(f)] = 1;
        selected.push_back(f);
      }
    }
    // Floor repair with a random ranking, keeping the designated channels
    // pinned by putting them first.
    std::vector<int> ranking;
    ranking.reserve(size_t(total));
    for (int f : selected) ranking.push_back(f);
    std::vector<int> rest;
    for (int f = 0; f < total; ++f)
      if (!in[size_t(f)]) rest.push_back(f);
    rng.shuffle(rest);
    ranking.insert(ranking.end(), rest.begin(), rest.end());
    selected = repair_selection(reg, std::move(selected), ranking, m, min_per_layer, nullptr);
    return mask_from_selection(reg, selected, p, min_per_layer);
  };

  if (strategy == InitStrategy::PerChannel) {
    for (int f = 0; f < total; ++f) plan.push_back(fill_mask({f}));
  } else {
    std::vector<int> perm(static_cast<size_t>(total));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    for (int start = 0; start < total; start += m) {
      const int end = std::min(start + m, total);
      plan.push_back(fill_mask(std::vector<int>(perm.begin() + start, perm.begin() + end)));
    }
  }
  return plan;
}

// Marks initialization complete: t is set to the total channel count
// regardless of how many real steps the strategy used.
inline void finish_init(BanditState& state, const ChannelRegistry& reg) {
  for (int i = 0; i < reg.size(); ++i)
    check(state.pulls[size_t(i)] >= 1,
          strf("finish_init: channel %d was never activated during init", i));
  state.step = reg.size();
  state.initialized = true;
}

// ---------------------------------------------------------------------------
// Synthetic environment for validating the selection/update path.
// ---------------------------------------------------------------------------

// Arms with fixed true means; rewards are i.i.d. Gaussian draws clipped to
// [0, 1].
struct ArmEnvironment {
  std::vector<double> true_means;
  double sigma = 0.1;

  double draw(int arm, Rng& rng) const {
    const double v = true_means[size_t(arm)] + (sigma > 0 ? rng.normal(0.0, sigma) : 0.0);
    return std::clamp(v, 0.0, 1.0);
  }

  std::vector<int> true_top(int k) const {
    std::vector<int> order(true_means.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (true_means[size_t(a)] != true_means[size_t(b)]) return true_means[size_t(a)] > true_means[size_t(b)];
      return a < b;
    });
    order.resize(size_t(k));
    std::sort(order.begin(), order.end());
    return order;
  }
};

struct SimResult {
  BanditState state;
  std::vector<int64_t> times_selected;    // per arm, exploitation phase only
  std::vector<int> final_top;             // by mu_hat, ascending
  std::vector<std::vector<int>> choices;  // per-step selections (optional, may be empty)
};

// Runs the exact selection/update path against synthetic rewards.
inline SimResult simulate_cucb(const ArmEnvironment& env, int cardinality, int64_t steps, uint64_t seed,
                               bool keep_choices = false) {
  const int n = int(env.true_means.size());
  check(cardinality >= 1 && cardinality < n, "simulate_cucb: need 1 <= cardinality < arms");
  ChannelRegistry reg({n});
  const double p = double(cardinality) / double(n);
  check(target_cardinality(reg, p) == cardinality, "simulate_cucb: fraction does not round to cardinality");

  Rng rng(mix_u64(seed ^ 0xbadcafeULL));
  BanditState state(n);
  SimResult res;
  res.times_selected.assign(size_t(n), 0);

  // Init round: one super-arm per arm, each containing its designated arm.
  std::vector<ChannelMask> plan = plan_init_masks(reg, p, InitStrategy::PerChannel, rng);
  for (const ChannelMask& mask : plan) {
    SaliencyReport rep;
    rep.channels = mask.active_indices();
    for (int arm : rep.channels) rep.values.push_back(env.draw(arm, rng));
    bandit_update(state, mask, rep);
  }
  finish_init(state, reg);

  for (int64_t s = 0; s < steps; ++s) {
    state.step += 1;
    const std::vector<int> chosen = select_superarm(state, reg, p);
    ChannelMask mask = mask_from_selection(reg, chosen, p);
    SaliencyReport rep;
    rep.channels = chosen;
    for (int arm : chosen) {
      rep.values.push_back(env.draw(arm, rng));
      res.times_selected[size_t(arm)] += 1;
    }
    bandit_update(state, mask, rep);
    if (keep_choices) res.choices.push_back(chosen);
  }

  res.final_top = final_selection(state, reg, p);
  res.state = std::move(state);
  return res;
}

}  // namespace dce
