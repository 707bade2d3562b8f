#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dce/common.hpp"

namespace dce {

// Identity of one gateable conv channel: (conv-layer ordinal, channel index),
// both 0-based. Stable for the lifetime of a registry.
struct ChannelId {
  int layer = 0;
  int index = 0;

  bool operator==(const ChannelId&) const = default;
  bool operator<(const ChannelId& o) const {
    return layer != o.layer ? layer < o.layer : index < o.index;
  }
};

// All gateable channels of a model, in (layer, index) order, with per-layer
// offsets for flat addressing.
class ChannelRegistry {
 public:
  ChannelRegistry() = default;
  explicit ChannelRegistry(std::vector<int> layer_widths) : widths_(std::move(layer_widths)) {
    offsets_.reserve(widths_.size() + 1);
    int off = 0;
    for (int w : widths_) {
      check(w > 0, "ChannelRegistry: layer width must be positive");
      offsets_.push_back(off);
      off += w;
    }
    offsets_.push_back(off);
  }

  int size() const { return offsets_.empty() ? 0 : offsets_.back(); }
  int layers() const { return int(widths_.size()); }
  int width(int layer) const { return widths_[size_t(layer)]; }
  int offset(int layer) const { return offsets_[size_t(layer)]; }
  const std::vector<int>& widths() const { return widths_; }

  int flat(ChannelId id) const {
    check(id.layer >= 0 && id.layer < layers(), strf("ChannelRegistry: layer %d out of range", id.layer));
    check(id.index >= 0 && id.index < width(id.layer),
          strf("ChannelRegistry: channel %d out of range for layer %d", id.index, id.layer));
    return offsets_[size_t(id.layer)] + id.index;
  }

  ChannelId id(int flat_index) const {
    check(flat_index >= 0 && flat_index < size(), strf("ChannelRegistry: flat index %d out of range", flat_index));
    int layer = 0;
    while (flat_index >= offsets_[size_t(layer) + 1]) ++layer;
    return ChannelId{layer, flat_index - offsets_[size_t(layer)]};
  }

 private:
  std::vector<int> widths_;
  std::vector<int> offsets_;
};

// Target super-arm cardinality |S| = round(p * total), half away from zero.
inline int target_cardinality(const ChannelRegistry& reg, double p) {
  check(p > 0.0 && p <= 1.0, strf("active fraction p=%g outside (0,1]", p));
  int m = int(std::floor(p * double(reg.size()) + 0.5));
  if (m < 1) m = 1;
  if (m > reg.size()) m = reg.size();
  return m;
}

// Activation bitvector over a registry for one training step.
class ChannelMask {
 public:
  ChannelMask() = default;
  ChannelMask(const ChannelRegistry& reg, double fraction)
      : bits_(size_t(reg.size()), 0), fraction_(fraction) {}

  static ChannelMask all_active(const ChannelRegistry& reg) {
    ChannelMask m(reg, 1.0);
    std::fill(m.bits_.begin(), m.bits_.end(), uint8_t(1));
    return m;
  }

  int size() const { return int(bits_.size()); }
  bool test(int flat) const { return bits_[size_t(flat)] != 0; }
  void set(int flat, bool on = true) { bits_[size_t(flat)] = on ? 1 : 0; }
  double fraction() const { return fraction_; }

  int count() const {
    int c = 0;
    for (uint8_t b : bits_) c += b;
    return c;
  }

  std::vector<int> active_indices() const {
    std::vector<int> out;
    for (size_t i = 0; i < bits_.size(); ++i)
      if (bits_[i]) out.push_back(int(i));
    return out;
  }

  // Per-conv-layer slice as op-level channel bits.
  std::vector<uint8_t> layer_bits(const ChannelRegistry& reg, int layer) const {
    const int off = reg.offset(layer), w = reg.width(layer);
    return std::vector<uint8_t>(bits_.begin() + off, bits_.begin() + off + w);
  }

  std::vector<int> per_layer_counts(const ChannelRegistry& reg) const {
    std::vector<int> counts(size_t(reg.layers()), 0);
    for (int l = 0; l < reg.layers(); ++l)
      for (int kchan = 0; kchan < reg.width(l); ++kchan)
        if (test(reg.offset(l) + kchan)) ++counts[size_t(l)];
    return counts;
  }

  const std::vector<uint8_t>& bits() const { return bits_; }

  bool operator==(const ChannelMask& o) const { return bits_ == o.bits_; }

 private:
  std::vector<uint8_t> bits_;
  double fraction_ = 1.0;
};

// Run-length encoding used when a mask is embedded in checkpoints/reports.
// First element is the leading bit value, the rest are run lengths.
inline std::vector<uint32_t> rle_encode(const std::vector<uint8_t>& bits) {
  std::vector<uint32_t> out;
  if (bits.empty()) return out;
  out.push_back(bits[0] ? 1u : 0u);
  uint32_t run = 1;
  for (size_t i = 1; i < bits.size(); ++i) {
    if (bits[i] == bits[i - 1]) {
      ++run;
    } else {
      out.push_back(run);
      run = 1;
    }
  }
  out.push_back(run);
  return out;
}

inline std::vector<uint8_t> rle_decode(const std::vector<uint32_t>& rle) {
  std::vector<uint8_t> bits;
  if (rle.empty()) return bits;
  check(rle.size() >= 2, "rle_decode: truncated encoding");
  uint8_t cur = rle[0] ? 1 : 0;
  for (size_t i = 1; i < rle.size(); ++i) {
    bits.insert(bits.end(), rle[i], cur);
    cur = 1 - cur;
  }
  return bits;
}

inline std::string rle_to_string(const std::vector<uint32_t>& rle) {
  std::string s;
  for (size_t i = 0; i < rle.size(); ++i) {
    if (i) s += i == 1 ? ":" : ",";
    s += std::to_string(rle[i]);
  }
  return s;
}

// Builds the mask for an explicit selection. Throws if any conv layer ends up
// below min_per_layer; use repair_selection first when that is a possibility.
inline ChannelMask mask_from_selection(const ChannelRegistry& reg, const std::vector<int>& selected,
                                       double fraction, int min_per_layer = 1) {
  ChannelMask mask(reg, fraction);
  for (int flat : selected) {
    check(flat >= 0 && flat < reg.size(), strf("mask_from_selection: index %d outside registry", flat));
    mask.set(flat);
  }
  const std::vector<int> counts = mask.per_layer_counts(reg);
  for (int l = 0; l < reg.layers(); ++l)
    if (counts[size_t(l)] < min_per_layer)
      fail(strf("mask_from_selection: conv layer %d has %d active channels (minimum %d)", l,
                counts[size_t(l)], min_per_layer));
  return mask;
}

// Constraint repair for a ranked selection. `ranking` lists every channel in
// descending preference order. Two fixes, in order:
//   1. under-cardinality: add best-ranked unselected channels up to target;
//   2. emptied layers: insert the starved layer's best-ranked channel and
//      evict the globally worst-ranked selected channel whose own layer stays
//      at or above the floor.
// Returns the number of floor repairs performed via *repairs.
inline std::vector<int> repair_selection(const ChannelRegistry& reg, std::vector<int> selected,
                                         const std::vector<int>& ranking, int target, int min_per_layer,
                                         int* repairs) {
  check(int(ranking.size()) == reg.size(), "repair_selection: ranking must cover the registry");
  check(target >= min_per_layer * reg.layers(),
        strf("repair_selection: target %d cannot satisfy floor %d over %d layers", target,
             min_per_layer, reg.layers()));
  if (repairs) *repairs = 0;

  std::vector<uint8_t> in(size_t(reg.size()), 0);
  for (int f : selected) in[size_t(f)] = 1;

  // Fill to target cardinality by ranking order.
  for (int f : ranking) {
    if (int(selected.size()) >= target) break;
    if (!in[size_t(f)]) {
      in[size_t(f)] = 1;
      selected.push_back(f);
    }
  }
  check(int(selected.size()) == target, "repair_selection: registry too small for target");

  std::vector<int> counts(size_t(reg.layers()), 0);
  for (int f : selected) ++counts[size_t(reg.id(f).layer)];

  for (int l = 0; l < reg.layers(); ++l) {
    while (counts[size_t(l)] < min_per_layer) {
      // Best-ranked unselected channel of the starved layer.
      int insert = -1;
      for (int f : ranking) {
        if (!in[size_t(f)] && reg.id(f).layer == l) {
          insert = f;
          break;
        }
      }
      check(insert >= 0, strf("repair_selection: layer %d has no channel left to insert", l));
      // Worst-ranked selected channel whose layer can spare one.
      int evict = -1;
      for (auto it = ranking.rbegin(); it != ranking.rend(); ++it) {
        if (in[size_t(*it)] && counts[size_t(reg.id(*it).layer)] > min_per_layer) {
          evict = *it;
          break;
        }
      }
      check(evict >= 0, "repair_selection: no evictable channel found");
      in[size_t(evict)] = 0;
      in[size_t(insert)] = 1;
      --counts[size_t(reg.id(evict).layer)];
      ++counts[size_t(l)];
      if (repairs) ++*repairs;
    }
  }

  std::vector<int> out;
  out.reserve(size_t(target));
  for (int f = 0; f < reg.size(); ++f)
    if (in[size_t(f)]) out.push_back(f);
  return out;
}

// Uniformly random super-arm of cardinality round(p*total) satisfying the
// per-layer floor (rejection sampling keeps the distribution uniform over
// feasible masks).
inline ChannelMask random_mask(const ChannelRegistry& reg, double p, Rng& rng, int min_per_layer = 1) {
  const int m = target_cardinality(reg, p);
  check(m >= min_per_layer * reg.layers(),
        strf("random_mask: cardinality %d cannot cover %d layers at floor %d", m, reg.layers(),
             min_per_layer));
  std::vector<int> idx(size_t(reg.size()));
  for (int i = 0; i < reg.size(); ++i) idx[size_t(i)] = i;

  for (int attempt = 0; attempt < 10000; ++attempt) {
    // Partial Fisher-Yates: first m entries are a uniform m-subset.
    for (int i = 0; i < m; ++i) {
      const int j = i + int(rng.uniform_index(uint64_t(reg.size() - i)));
      std::swap(idx[size_t(i)], idx[size_t(j)]);
    }
    std::vector<int> counts(size_t(reg.layers()), 0);
    for (int i = 0; i < m; ++i) ++counts[size_t(reg.id(idx[size_t(i)]).layer)];
    bool ok = true;
    for (int c : counts)
      if (c < min_per_layer) ok = false;
    if (!ok) continue;
    ChannelMask mask(reg, p);
    for (int i = 0; i < m; ++i) mask.set(idx[size_t(i)]);
    return mask;
  }
  fail(strf("random_mask: could not satisfy per-layer floor %d at p=%g", min_per_layer, p));
}

}  // namespace dce
