#pragma once

#include <cmath>
#include <vector>

#include "dce/channels.hpp"
#include "dce/model.hpp"

namespace dce {

// lr(epoch) = lr0 / 10^(#drops passed); drops at 50% and 75% of the epoch
// budget.
inline double lr_at_epoch(double lr0, int epoch, int total_epochs) {
  int drops = 0;
  if (double(epoch) >= 0.5 * double(total_epochs)) ++drops;
  if (double(epoch) >= 0.75 * double(total_epochs)) ++drops;
  return lr0 / std::pow(10.0, double(drops));
}

// SGD with Nesterov momentum (no dampening):
//   g <- grad + wd * w;  v <- mu * v + g;  w <- w - lr * (g + mu * v)
// Gated parameters are updated only on their active out-channel slices, so
// an inactive channel's kernel, BN gamma/beta, momentum buffer and weight
// decay are all untouched that step.
template <typename T>
class SgdNesterov {
 public:
  SgdNesterov(Model<T>& model, double lr, double momentum, double weight_decay)
      : lr_(lr), mu_(momentum), wd_(weight_decay) {
    for (auto& p : model.named_params()) {
      Entry e;
      e.param = p.tensor;
      e.conv_ordinal = p.conv_ordinal;
      e.stride = p.per_channel_stride;
      e.velocity.assign(p.tensor.numel(), T(0));
      entries_.push_back(std::move(e));
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  // mask == nullptr updates every parameter.
  void step(const ChannelRegistry& reg, const ChannelMask* mask) {
    for (Entry& e : entries_) {
      if (e.conv_ordinal < 0 || mask == nullptr) {
        update_range(e, 0, e.param.numel());
      } else {
        const int off = reg.offset(e.conv_ordinal);
        const int width = reg.width(e.conv_ordinal);
        for (int ch = 0; ch < width; ++ch) {
          if (!mask->test(off + ch)) continue;
          update_range(e, size_t(ch) * size_t(e.stride), size_t(ch + 1) * size_t(e.stride));
        }
      }
    }
  }

 private:
  struct Entry {
    Tensor<T> param;
    int conv_ordinal;
    int stride;
    std::vector<T> velocity;
  };

  void update_range(Entry& e, size_t lo, size_t hi) {
    std::vector<T>& w = e.param.values();
    const std::vector<T>& g = e.param.grad();
    const T lr = T(lr_), mu = T(mu_), wd = T(wd_);
    for (size_t i = lo; i < hi; ++i) {
      const T gi = g[i] + wd * w[i];
      e.velocity[i] = mu * e.velocity[i] + gi;
      w[i] -= lr * (gi + mu * e.velocity[i]);
    }
  }

  std::vector<Entry> entries_;
  double lr_, mu_, wd_;
};

}  // namespace dce
