#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "dce/channels.hpp"
#include "dce/model.hpp"

namespace dce {

// Normalized per-channel saliencies observed in one training step. Only the
// step's active channels appear; values are >= 0 and each conv layer's block
// has unit l2 norm (unless its raw block was all zero).
struct SaliencyReport {
  int64_t step = 0;
  std::vector<int> channels;   // flat registry indices, ascending
  std::vector<double> values;  // normalized saliency per entry

  size_t size() const { return channels.size(); }

  double value_of(int flat) const {
    const auto it = std::lower_bound(channels.begin(), channels.end(), flat);
    check(it != channels.end() && *it == flat, strf("SaliencyReport: channel %d not present", flat));
    return values[size_t(it - channels.begin())];
  }

  bool contains(int flat) const {
    const auto it = std::lower_bound(channels.begin(), channels.end(), flat);
    return it != channels.end() && *it == flat;
  }
};

// |(1/M) sum_m dL/dh[m] * h[m]| over the whole tap (matching shapes; M spans
// batch, height and width). Absolute value taken once, outside the sum.
template <typename T>
double taylor_saliency(const Tensor<T>& h, const Tensor<T>& grad_h) {
  check(h.shape() == grad_h.shape(), "taylor_saliency: feature map and gradient shapes differ: " +
                                         shape_str(h.shape()) + " vs " + shape_str(grad_h.shape()));
  double acc = 0;
  const size_t n = h.numel();
  for (size_t i = 0; i < n; ++i) acc += double(grad_h.values()[i]) * double(h.values()[i]);
  return std::abs(acc / double(n));
}

// Raw Eq.-style saliency for every channel of one post-gate tap tensor.
// The tap's grad must already be populated by a backward pass.
template <typename T>
std::vector<double> taylor_saliency_per_channel(const Tensor<T>& tap) {
  check(tap.ndim() == 4, "taylor_saliency_per_channel: tap must be NxCxHxW");
  check(tap.has_grad(), "taylor_saliency_per_channel: tap has no gradient; run backward first");
  const int n = tap.dim(0), c = tap.dim(1);
  const size_t hw = size_t(tap.dim(2)) * tap.dim(3);
  const size_t m = size_t(n) * hw;
  const std::vector<T>& g = tap.grad();
  std::vector<double> out(size_t(c), 0.0);
  for (int img = 0; img < n; ++img)
    for (int ch = 0; ch < c; ++ch) {
      const T* hp = tap.data() + (size_t(img) * c + ch) * hw;
      const T* gp = g.data() + (size_t(img) * c + ch) * hw;
      double acc = 0;
      for (size_t i = 0; i < hw; ++i) acc += double(gp[i]) * double(hp[i]);
      out[size_t(ch)] += acc;
    }
  for (auto& v : out) v = std::abs(v / double(m));
  return out;
}

// l2-normalizes raw saliencies within each conv layer (only active channels
// take part). All-zero layers pass through as zeros.
inline SaliencyReport normalize_saliencies(const ChannelRegistry& reg, const std::vector<int>& channels,
                                           const std::vector<double>& raw, int64_t step = 0) {
  check(channels.size() == raw.size(), "normalize_saliencies: channel/value count mismatch");
  SaliencyReport rep;
  rep.step = step;
  rep.channels = channels;
  rep.values.assign(raw.size(), 0.0);

  std::vector<size_t> order(channels.size());
  std::iota(order.begin(), order.end(), size_t(0));
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return channels[a] < channels[b]; });
  std::vector<int> sorted_ch(channels.size());
  std::vector<double> sorted_raw(channels.size());
  for (size_t i = 0; i < order.size(); ++i) {
    sorted_ch[i] = channels[order[i]];
    sorted_raw[i] = raw[order[i]];
    check(sorted_raw[i] >= 0.0, "normalize_saliencies: raw saliency must be >= 0");
    if (i > 0) check(sorted_ch[i] != sorted_ch[i - 1], "normalize_saliencies: duplicate channel");
  }
  rep.channels = sorted_ch;

  size_t i = 0;
  while (i < sorted_ch.size()) {
    const int layer = reg.id(sorted_ch[i]).layer;
    size_t j = i;
    double sq = 0;
    while (j < sorted_ch.size() && reg.id(sorted_ch[j]).layer == layer) {
      sq += sorted_raw[j] * sorted_raw[j];
      ++j;
    }
    const double norm = std::sqrt(sq);
    for (size_t k = i; k < j; ++k) rep.values[k] = norm > 0.0 ? sorted_raw[k] / norm : 0.0;
    i = j;
  }
  return rep;
}

// Full per-step report from a completed forward/backward pass.
template <typename T>
SaliencyReport saliency_report(const ChannelRegistry& reg, const ForwardResult<T>& fwd,
                               const ChannelMask& mask, int64_t step) {
  std::vector<int> channels;
  std::vector<double> raw;
  for (int l = 0; l < reg.layers(); ++l) {
    const Tensor<T>& tap = fwd.taps[size_t(l)];
    check(tap.numel() > 0, strf("saliency_report: missing tap for conv layer %d", l));
    const std::vector<double> per_channel = taylor_saliency_per_channel(tap);
    for (int kchan = 0; kchan < reg.width(l); ++kchan) {
      const int flat = reg.offset(l) + kchan;
      if (mask.test(flat)) {
        channels.push_back(flat);
        raw.push_back(per_channel[size_t(kchan)]);
      }
    }
  }
  return normalize_saliencies(reg, channels, raw, step);
}

// Exact loss-delta oracle: |L(batch, h=0) - L(batch, h)| via two eval-mode
// forward passes (running BN statistics, so both passes see identical
// normalization). Test/audit path only; training uses the Taylor estimate.
template <typename T>
double oracle_saliency(Model<T>& model, const Tensor<T>& batch, const std::vector<int>& labels,
                       const ChannelMask& mask, int flat_channel) {
  check(mask.test(flat_channel), strf("oracle_saliency: channel %d is inactive in the mask", flat_channel));
  ForwardOptions<T> opt;
  opt.mask = &mask;
  opt.training = false;
  const double base = softmax_cross_entropy<T>(nullptr, model.forward(batch, opt).logits, labels).item();

  ChannelMask without = mask;
  without.set(flat_channel, false);
  ForwardOptions<T> opt2;
  opt2.mask = &without;
  opt2.training = false;
  const double dropped = softmax_cross_entropy<T>(nullptr, model.forward(batch, opt2).logits, labels).item();
  return std::abs(dropped - base);
}

// Average-rank Spearman correlation.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  check(a.size() == b.size() && a.size() >= 2, "spearman: need two samples of equal size >= 2");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<size_t> order(v.size());
    std::iota(order.begin(), order.end(), size_t(0));
    std::sort(order.begin(), order.end(), [&](size_t x, size_t y) { return v[x] < v[y]; });
    std::vector<double> r(v.size());
    size_t i = 0;
    while (i < order.size()) {
      size_t j = i;
      while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = (double(i) + double(j)) / 2.0 + 1.0;
      for (size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  double ma = 0, mb = 0;
  for (size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= double(ra.size());
  mb /= double(rb.size());
  double cov = 0, va = 0, vb = 0;
  for (size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  check(va > 0 && vb > 0, "spearman: zero rank variance");
  return cov / std::sqrt(va * vb);
}

}  // namespace dce
