#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dce/arch.hpp"
#include "dce/channels.hpp"
#include "dce/model.hpp"

namespace dce {

struct LayerCost {
  std::string name;
  std::string type;
  int64_t params = 0;
  int64_t macs = 0;
};

// Parameter and multiply-accumulate accounting, one row per block plus
// totals. FLOPs are reported as MACs.
struct CostReport {
  std::vector<LayerCost> rows;
  int64_t total_params = 0;
  int64_t total_macs = 0;
};

struct CostOptions {
  // Default convention counts conv and linear MACs only. Switching this on
  // additionally counts BN (2 ops/element), ReLU (1 op/element) and pooling
  // (k^2 ops per output element) as generic ops in the MAC column.
  bool count_aux_ops = false;
};

inline CostReport count_cost(const ArchDescriptor& d, const CostOptions& opt = {}) {
  const std::vector<Shape3> shapes = block_output_shapes(d);
  CostReport report;
  Shape3 cur{d.in_channels, d.in_h, d.in_w};
  int conv_i = 0;
  for (size_t i = 0; i < d.blocks.size(); ++i) {
    const BlockSpec& b = d.blocks[i];
    const Shape3 out = shapes[i];
    LayerCost row;
    switch (b.kind) {
      case BlockKind::ConvUnit: {
        row.name = "conv" + std::to_string(conv_i);
        row.type = "conv";
        const int64_t kk = int64_t(b.kernel) * b.kernel;
        row.params = kk * cur[0] * b.channels + (b.bias ? b.channels : 0);
        row.macs = kk * cur[0] * int64_t(b.channels) * out[1] * out[2];
        // BN gamma/beta as a separate row; running stats excluded from the
        // count. ReLU contributes only under the aux-ops convention.
        LayerCost bn;
        bn.name = "conv" + std::to_string(conv_i) + ".bn";
        bn.type = "batchnorm";
        bn.params = 2 * int64_t(b.channels);
        if (opt.count_aux_ops) {
          bn.macs = 2 * int64_t(b.channels) * out[1] * out[2];
          row.macs += int64_t(b.channels) * out[1] * out[2];  // ReLU 1 op/elem
        }
        report.rows.push_back(row);
        report.total_params += row.params;
        report.total_macs += row.macs;
        row = bn;
        ++conv_i;
        break;
      }
      case BlockKind::MaxPool:
      case BlockKind::AvgPool:
        row.name = "pool" + std::to_string(i);
        row.type = b.kind == BlockKind::MaxPool ? "maxpool" : "avgpool";
        if (opt.count_aux_ops)
          row.macs = int64_t(b.kernel) * b.kernel * out[0] * out[1] * out[2];
        break;
      case BlockKind::Flatten:
        row.name = "flatten";
        row.type = "flatten";
        break;
      case BlockKind::Linear:
        row.name = "fc";
        row.type = "linear";
        row.params = int64_t(cur[0]) * d.num_classes + d.num_classes;
        row.macs = int64_t(cur[0]) * d.num_classes;
        break;
    }
    report.rows.push_back(row);
    report.total_params += row.params;
    report.total_macs += row.macs;
    cur = out;
  }
  return report;
}

inline CostReport count_params(const ArchDescriptor& d) { return count_cost(d); }
inline CostReport count_flops(const ArchDescriptor& d, const CostOptions& opt = {}) {
  return count_cost(d, opt);
}

// ---------------------------------------------------------------------------
// Compact extraction
// ---------------------------------------------------------------------------

// Index bookkeeping for slicing a model down to its surviving channels.
struct CompactPlan {
  std::vector<std::vector<int>> kept_out;  // per conv unit, ascending channel indices
  std::vector<std::vector<int>> kept_in;   // per conv unit (empty = dense input)
  std::vector<int> head_inputs;            // surviving flattened feature positions
  ArchDescriptor compact_desc;
};

inline CompactPlan make_compact_plan(const ArchDescriptor& desc, const ChannelMask& mask) {
  const ChannelRegistry reg = make_registry(desc);
  check(mask.size() == reg.size(),
        strf("make_compact_plan: mask covers %d channels, registry has %d", mask.size(), reg.size()));
  const std::vector<Shape3> shapes = block_output_shapes(desc);

  CompactPlan plan;
  plan.compact_desc = desc;
  plan.compact_desc.name = desc.name + "-compact";

  std::vector<int> prev_kept;  // kept channels of the previous conv unit
  bool saw_conv = false;
  int conv_i = 0;
  int last_conv_block = -1;
  for (size_t i = 0; i < desc.blocks.size(); ++i) {
    if (desc.blocks[i].kind != BlockKind::ConvUnit) continue;
    std::vector<int> kept;
    for (int kchan = 0; kchan < reg.width(conv_i); ++kchan)
      if (mask.test(reg.offset(conv_i) + kchan)) kept.push_back(kchan);
    check(!kept.empty(), strf("make_compact_plan: conv layer %d keeps no channels", conv_i));
    plan.kept_out.push_back(kept);
    plan.kept_in.push_back(saw_conv ? prev_kept : std::vector<int>());
    plan.compact_desc.blocks[i].channels = int(kept.size());
    prev_kept = kept;
    saw_conv = true;
    last_conv_block = int(i);
    ++conv_i;
  }
  check(last_conv_block >= 0, "make_compact_plan: descriptor has no conv layers");

  // Flattened feature positions that survive: the spatial extent of the last
  // conv output times each kept channel. Pools after the last conv keep
  // per-channel structure, so the spatial extent is taken at the flatten.
  Shape3 pre_flatten{0, 0, 0};
  for (size_t i = 0; i < desc.blocks.size(); ++i) {
    if (desc.blocks[i].kind == BlockKind::Flatten) {
      pre_flatten = i == 0 ? Shape3{desc.in_channels, desc.in_h, desc.in_w} : shapes[i - 1];
      break;
    }
  }
  const int hw = pre_flatten[1] * pre_flatten[2];
  for (int c : prev_kept)
    for (int s = 0; s < hw; ++s) plan.head_inputs.push_back(c * hw + s);

  block_output_shapes(plan.compact_desc);  // validate
  return plan;
}

// Instantiates the thin network and copies surviving weights. Eval-mode
// logits of the result match the masked full model exactly: conv sums run
// over the same values in the same (ascending-channel) order.
template <typename T>
Model<T> extract_compact(const Model<T>& model, const ChannelMask& mask) {
  const CompactPlan plan = make_compact_plan(model.descriptor(), mask);
  Model<T> compact(plan.compact_desc, /*seed=*/0);

  for (int u = 0; u < model.conv_unit_count(); ++u) {
    const ConvUnitLayer<T>& src = model.conv_unit(u);
    ConvUnitLayer<T>& dst = compact.conv_unit(u);
    const std::vector<int>& kout = plan.kept_out[size_t(u)];
    std::vector<int> kin = plan.kept_in[size_t(u)];
    if (kin.empty()) {  // dense input: keep all input channels
      kin.resize(size_t(src.c_in));
      for (int i = 0; i < src.c_in; ++i) kin[size_t(i)] = i;
    }
    const int kk = src.kernel * src.kernel;
    for (size_t co = 0; co < kout.size(); ++co) {
      for (size_t ci = 0; ci < kin.size(); ++ci) {
        const T* from = src.weight.data() + (size_t(kout[co]) * src.c_in + kin[ci]) * kk;
        T* to = dst.weight.data() + (co * kin.size() + ci) * kk;
        std::copy(from, from + kk, to);
      }
      if (src.has_bias) dst.bias.values()[co] = src.bias.values()[size_t(kout[co])];
      dst.gamma.values()[co] = src.gamma.values()[size_t(kout[co])];
      dst.beta.values()[co] = src.beta.values()[size_t(kout[co])];
      dst.run_mean[co] = src.run_mean[size_t(kout[co])];
      dst.run_var[co] = src.run_var[size_t(kout[co])];
    }
  }

  const LinearHead<T>& src_head = model.head();
  LinearHead<T>& dst_head = compact.head();
  check(int(plan.head_inputs.size()) == dst_head.in_features,
        "extract_compact: head input map does not match compact head width");
  for (int o = 0; o < src_head.out_features; ++o) {
    const T* from = src_head.weight.data() + size_t(o) * src_head.in_features;
    T* to = dst_head.weight.data() + size_t(o) * dst_head.in_features;
    for (size_t f = 0; f < plan.head_inputs.size(); ++f) to[f] = from[plan.head_inputs[f]];
  }
  dst_head.bias.values() = src_head.bias.values();
  return compact;
}

}  // namespace dce
