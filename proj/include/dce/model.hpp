#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dce/arch.hpp"
#include "dce/channels.hpp"
#include "dce/ops.hpp"

namespace dce {

template <typename T>
struct ConvUnitLayer {
  int conv_ordinal = 0;  // index into the channel registry
  int c_in = 0, c_out = 0, kernel = 0, stride = 1, pad = 0;
  bool has_bias = false;
  Tensor<T> weight;  // c_out x c_in x k x k
  Tensor<T> bias;    // c_out (when has_bias)
  Tensor<T> gamma, beta;
  std::vector<T> run_mean, run_var;
};

template <typename T>
struct LinearHead {
  int in_features = 0, out_features = 0;
  Tensor<T> weight;  // out x in
  Tensor<T> bias;
};

template <typename T>
struct ModelLayer {
  BlockKind kind;
  ConvUnitLayer<T> conv;  // ConvUnit
  int pool_kernel = 0, pool_stride = 0;
  LinearHead<T> lin;  // Linear
};

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
  int conv_ordinal;        // -1 for non-gated parameters
  int per_channel_stride;  // values per out-channel slice when gated
};

template <typename T>
struct ForwardResult {
  Tensor<T> logits;
  // Post-gate output of each conv unit, by conv ordinal. These are the
  // saliency taps: after backward their grad holds dL/dh per feature map.
  std::vector<Tensor<T>> taps;
};

template <typename T>
struct ForwardOptions {
  const ChannelMask* mask = nullptr;  // null = all channels active
  bool training = false;
  Tape<T>* tape = nullptr;
  bool update_running_stats = true;  // honored only in training mode
  // Per-conv-unit gate factors replacing the 0/1 mask at the gate multiply
  // (channels stay computed); used by the first-order saliency checks.
  const std::vector<std::vector<T>>* gate_override = nullptr;
};

// Sequential CNN instantiated from a descriptor. Forward runs thin: inactive
// channels are skipped in conv, frozen in BN, and their unit outputs are
// exactly zero downstream of the gate.
template <typename T>
class Model {
 public:
  Model() = default;

  Model(const ArchDescriptor& desc, uint64_t seed) : desc_(desc), registry_(make_registry(desc)) {
    const std::vector<Shape3> shapes = block_output_shapes(desc);
    Rng rng(mix_u64(seed ^ 0x5eedULL));
    Shape3 cur{desc.in_channels, desc.in_h, desc.in_w};
    int conv_ordinal = 0;
    for (size_t i = 0; i < desc.blocks.size(); ++i) {
      const BlockSpec& b = desc.blocks[i];
      ModelLayer<T> layer;
      layer.kind = b.kind;
      switch (b.kind) {
        case BlockKind::ConvUnit: {
          ConvUnitLayer<T>& cu = layer.conv;
          cu.conv_ordinal = conv_ordinal++;
          cu.c_in = cur[0];
          cu.c_out = b.channels;
          cu.kernel = b.kernel;
          cu.stride = b.stride;
          cu.pad = b.pad;
          cu.has_bias = b.bias;
          const int fan_in = cu.c_in * b.kernel * b.kernel;
          cu.weight = he_normal(rng, {cu.c_out, cu.c_in, b.kernel, b.kernel}, fan_in);
          if (cu.has_bias) {
            cu.bias = Tensor<T>::zeros({cu.c_out});
            cu.bias.set_requires_grad(true);
          }
          cu.gamma = Tensor<T>::full({cu.c_out}, T(1));
          cu.beta = Tensor<T>::zeros({cu.c_out});
          cu.gamma.set_requires_grad(true);
          cu.beta.set_requires_grad(true);
          cu.run_mean.assign(size_t(cu.c_out), T(0));
          cu.run_var.assign(size_t(cu.c_out), T(1));
          break;
        }
        case BlockKind::MaxPool:
        case BlockKind::AvgPool:
          layer.pool_kernel = b.kernel;
          layer.pool_stride = b.stride;
          break;
        case BlockKind::Flatten:
          break;
        case BlockKind::Linear: {
          LinearHead<T>& lh = layer.lin;
          lh.in_features = cur[0] * cur[1] * cur[2];
          lh.out_features = desc.num_classes;
          lh.weight = he_normal(rng, {lh.out_features, lh.in_features}, lh.in_features);
          lh.bias = Tensor<T>::zeros({lh.out_features});
          lh.bias.set_requires_grad(true);
          break;
        }
      }
      layers_.push_back(std::move(layer));
      cur = shapes[i];
    }
  }

  const ArchDescriptor& descriptor() const { return desc_; }
  const ChannelRegistry& registry() const { return registry_; }
  std::vector<ModelLayer<T>>& layers() { return layers_; }
  const std::vector<ModelLayer<T>>& layers() const { return layers_; }

  int conv_unit_count() const { return registry_.layers(); }

  ConvUnitLayer<T>& conv_unit(int ordinal) {
    for (auto& l : layers_)
      if (l.kind == BlockKind::ConvUnit && l.conv.conv_ordinal == ordinal) return l.conv;
    fail(strf("Model: no conv unit with ordinal %d", ordinal));
  }
  const ConvUnitLayer<T>& conv_unit(int ordinal) const {
    return const_cast<Model*>(this)->conv_unit(ordinal);
  }

  LinearHead<T>& head() {
    check(!layers_.empty() && layers_.back().kind == BlockKind::Linear, "Model: missing linear head");
    return layers_.back().lin;
  }
  const LinearHead<T>& head() const { return const_cast<Model*>(this)->head(); }

  std::vector<NamedParam<T>> named_params() {
    std::vector<NamedParam<T>> out;
    for (auto& l : layers_) {
      if (l.kind == BlockKind::ConvUnit) {
        ConvUnitLayer<T>& cu = l.conv;
        const std::string base = "conv" + std::to_string(cu.conv_ordinal);
        const int kk = cu.kernel * cu.kernel;
        out.push_back({base + ".weight", cu.weight, cu.conv_ordinal, cu.c_in * kk});
        if (cu.has_bias) out.push_back({base + ".bias", cu.bias, cu.conv_ordinal, 1});
        out.push_back({base + ".bn.gamma", cu.gamma, cu.conv_ordinal, 1});
        out.push_back({base + ".bn.beta", cu.beta, cu.conv_ordinal, 1});
      } else if (l.kind == BlockKind::Linear) {
        out.push_back({"fc.weight", l.lin.weight, -1, 0});
        out.push_back({"fc.bias", l.lin.bias, -1, 0});
      }
    }
    return out;
  }

  void zero_grads() {
    for (auto& p : named_params()) p.tensor.zero_grad();
  }

  ForwardResult<T> forward(const Tensor<T>& batch, const ForwardOptions<T>& opt) {
    check(batch.ndim() == 4, "Model::forward: batch must be NxCxHxW, got " + shape_str(batch.shape()));
    check(batch.dim(1) == desc_.in_channels && batch.dim(2) == desc_.in_h && batch.dim(3) == desc_.in_w,
          strf("Model::forward: batch %s does not match descriptor input %dx%dx%d",
               shape_str(batch.shape()).c_str(), desc_.in_channels, desc_.in_h, desc_.in_w));
    if (opt.mask)
      check(opt.mask->size() == registry_.size(),
            strf("Model::forward: mask covers %d channels, registry has %d", opt.mask->size(),
                 registry_.size()));

    ForwardResult<T> res;
    res.taps.resize(size_t(conv_unit_count()));
    Tensor<T> x = batch;
    ChannelBits prev_bits;  // empty = dense input
    for (auto& l : layers_) {
      switch (l.kind) {
        case BlockKind::ConvUnit: {
          ConvUnitLayer<T>& cu = l.conv;
          ChannelBits bits =
              opt.mask ? opt.mask->layer_bits(registry_, cu.conv_ordinal) : ChannelBits();
          Conv2dAttrs cattrs{cu.stride, cu.pad, bits, prev_bits};
          Tensor<T> y = conv2d(opt.tape, x, cu.weight, cu.has_bias ? &cu.bias : nullptr, cattrs);
          BatchNormAttrs<T> battrs;
          battrs.training = opt.training;
          battrs.active = bits;
          battrs.update_running = opt.training && opt.update_running_stats;
          y = batchnorm2d(opt.tape, y, cu.gamma, cu.beta, cu.run_mean, cu.run_var, battrs);
          y = relu(opt.tape, y);
          std::vector<T> factors;
          if (opt.gate_override) {
            factors = (*opt.gate_override)[size_t(cu.conv_ordinal)];
            check(int(factors.size()) == cu.c_out, "Model::forward: gate override width mismatch");
          } else if (!bits.empty()) {
            factors.resize(size_t(cu.c_out));
            for (int c = 0; c < cu.c_out; ++c) factors[size_t(c)] = bits[size_t(c)] ? T(1) : T(0);
          } else {
            factors.assign(size_t(cu.c_out), T(1));
          }
          y = channel_mask_mul(opt.tape, y, factors);
          res.taps[size_t(cu.conv_ordinal)] = y;
          x = y;
          prev_bits = bits;
          break;
        }
        case BlockKind::MaxPool:
          x = maxpool2d(opt.tape, x, l.pool_kernel, l.pool_stride);
          break;
        case BlockKind::AvgPool:
          x = avgpool2d(opt.tape, x, l.pool_kernel, l.pool_stride);
          break;
        case BlockKind::Flatten:
          x = flatten(opt.tape, x);
          break;
        case BlockKind::Linear:
          x = linear(opt.tape, x, l.lin.weight, &l.lin.bias);
          break;
      }
    }
    res.logits = x;
    return res;
  }

  // Convenience: eval-mode logits.
  Tensor<T> logits(const Tensor<T>& batch, const ChannelMask* mask = nullptr) {
    ForwardOptions<T> opt;
    opt.mask = mask;
    opt.training = false;
    return forward(batch, opt).logits;
  }

  Model clone() const {
    Model m;
    m.desc_ = desc_;
    m.registry_ = registry_;
    for (const auto& l : layers_) {
      ModelLayer<T> c = l;
      if (l.kind == BlockKind::ConvUnit) {
        c.conv.weight = l.conv.weight.clone();
        if (l.conv.has_bias) c.conv.bias = l.conv.bias.clone();
        c.conv.gamma = l.conv.gamma.clone();
        c.conv.beta = l.conv.beta.clone();
      } else if (l.kind == BlockKind::Linear) {
        c.lin.weight = l.lin.weight.clone();
        c.lin.bias = l.lin.bias.clone();
      }
      m.layers_.push_back(std::move(c));
    }
    return m;
  }

  template <typename U>
  Model<U> cast() const {
    Model<U> m;
    m.assign_cast(*this);
    return m;
  }

  // Internal: rebuild this model from another precision.
  template <typename U>
  void assign_cast(const Model<U>& src) {
    desc_ = src.descriptor();
    registry_ = src.registry();
    layers_.clear();
    for (const auto& l : src.layers()) {
      ModelLayer<T> c;
      c.kind = l.kind;
      c.pool_kernel = l.pool_kernel;
      c.pool_stride = l.pool_stride;
      if (l.kind == BlockKind::ConvUnit) {
        c.conv.conv_ordinal = l.conv.conv_ordinal;
        c.conv.c_in = l.conv.c_in;
        c.conv.c_out = l.conv.c_out;
        c.conv.kernel = l.conv.kernel;
        c.conv.stride = l.conv.stride;
        c.conv.pad = l.conv.pad;
        c.conv.has_bias = l.conv.has_bias;
        c.conv.weight = l.conv.weight.template cast<T>();
        c.conv.weight.set_requires_grad(true);
        if (l.conv.has_bias) {
          c.conv.bias = l.conv.bias.template cast<T>();
          c.conv.bias.set_requires_grad(true);
        }
        c.conv.gamma = l.conv.gamma.template cast<T>();
        c.conv.gamma.set_requires_grad(true);
        c.conv.beta = l.conv.beta.template cast<T>();
        c.conv.beta.set_requires_grad(true);
        c.conv.run_mean.assign(l.conv.run_mean.begin(), l.conv.run_mean.end());
        c.conv.run_var.assign(l.conv.run_var.begin(), l.conv.run_var.end());
      } else if (l.kind == BlockKind::Linear) {
        c.lin.in_features = l.lin.in_features;
        c.lin.out_features = l.lin.out_features;
        c.lin.weight = l.lin.weight.template cast<T>();
        c.lin.weight.set_requires_grad(true);
        c.lin.bias = l.lin.bias.template cast<T>();
        c.lin.bias.set_requires_grad(true);
      }
      layers_.push_back(std::move(c));
    }
  }

 private:
  Tensor<T> he_normal(Rng& rng, std::vector<int> shape, int fan_in) {
    Tensor<T> t = Tensor<T>::zeros(std::move(shape));
    const double std = std::sqrt(2.0 / double(fan_in));
    for (auto& v : t.values()) v = T(rng.normal(0.0, std));
    t.set_requires_grad(true);
    return t;
  }

  ArchDescriptor desc_;
  ChannelRegistry registry_;
  std::vector<ModelLayer<T>> layers_;
};

template <typename T>
Model<T> build_model(const ArchDescriptor& desc, uint64_t seed) {
  return Model<T>(desc, seed);
}

}  // namespace dce
