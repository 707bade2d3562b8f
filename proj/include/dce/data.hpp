#pragma once

#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "dce/common.hpp"
#include "dce/tensor.hpp"

namespace dce {

struct Dataset {
  std::string split;
  int channels = 0, height = 0, width = 0;
  int num_classes = 0;
  std::vector<float> images;  // N*C*H*W; byte values 0..255 until normalized
  std::vector<int> labels;
  bool normalized = false;
  std::vector<double> mean, stddev;  // per channel, set by normalization

  size_t size() const { return labels.size(); }
  size_t image_elems() const { return size_t(channels) * height * width; }
};

namespace detail {

inline uint32_t read_be32(std::istream& in, const std::string& path, size_t offset) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in)
    fail(strf("%s: truncated at byte offset %zu (expected 4 more bytes)", path.c_str(), offset));
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

inline std::ifstream open_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open file: " + path);
  return in;
}

inline size_t file_size(std::ifstream& in) {
  in.seekg(0, std::ios::end);
  const auto n = in.tellg();
  in.seekg(0, std::ios::beg);
  return size_t(n);
}

}  // namespace detail

// MNIST-style IDX pair: big-endian headers, magic 0x803 for images and 0x801
// for labels.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                        const std::string& split = "train") {
  Dataset ds;
  ds.split = split;

  std::ifstream img = detail::open_binary(images_path);
  const size_t img_bytes = detail::file_size(img);
  const uint32_t magic = detail::read_be32(img, images_path, 0);
  if (magic != 0x00000803u)
    fail(strf("%s: bad IDX image magic 0x%08x at offset 0 (expected 0x00000803)", images_path.c_str(),
              magic));
  const uint32_t n = detail::read_be32(img, images_path, 4);
  const uint32_t rows = detail::read_be32(img, images_path, 8);
  const uint32_t cols = detail::read_be32(img, images_path, 12);
  const size_t expect = 16 + size_t(n) * rows * cols;
  if (img_bytes != expect)
    fail(strf("%s: expected %zu bytes (16 + %u*%u*%u), file has %zu", images_path.c_str(), expect, n,
              rows, cols, img_bytes));
  std::vector<unsigned char> raw(size_t(n) * rows * cols);
  img.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (!img) fail(strf("%s: truncated pixel data", images_path.c_str()));

  std::ifstream lab = detail::open_binary(labels_path);
  const size_t lab_bytes = detail::file_size(lab);
  const uint32_t lmagic = detail::read_be32(lab, labels_path, 0);
  if (lmagic != 0x00000801u)
    fail(strf("%s: bad IDX label magic 0x%08x at offset 0 (expected 0x00000801)", labels_path.c_str(),
              lmagic));
  const uint32_t ln = detail::read_be32(lab, labels_path, 4);
  if (ln != n)
    fail(strf("%s: %u labels for %u images in %s", labels_path.c_str(), ln, n, images_path.c_str()));
  if (lab_bytes != 8 + size_t(ln))
    fail(strf("%s: expected %zu bytes, file has %zu", labels_path.c_str(), 8 + size_t(ln), lab_bytes));
  std::vector<unsigned char> lraw(static_cast<size_t>(ln));
  lab.read(reinterpret_cast<char*>(lraw.data()), std::streamsize(lraw.size()));
  if (!lab) fail(strf("%s: truncated label data", labels_path.c_str()));

  ds.channels = 1;
  ds.height = int(rows);
  ds.width = int(cols);
  ds.images.resize(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) ds.images[i] = float(raw[i]);
  ds.labels.resize(lraw.size());
  int max_label = 0;
  for (size_t i = 0; i < lraw.size(); ++i) {
    ds.labels[i] = int(lraw[i]);
    if (ds.labels[i] > max_label) max_label = ds.labels[i];
    if (ds.labels[i] > 9)
      fail(strf("%s: label %d out of range at record %zu (byte offset %zu)", labels_path.c_str(),
                ds.labels[i], i, 8 + i));
  }
  ds.num_classes = std::max(10, max_label + 1);
  return ds;
}

// One CIFAR-10 binary batch file: 3073-byte records, 1 label byte followed by
// 3072 channel-planar pixels.
inline void load_cifar_batch_into(const std::string& path, Dataset& ds) {
  constexpr size_t kRecord = 3073;
  std::ifstream in = detail::open_binary(path);
  const size_t bytes = detail::file_size(in);
  if (bytes == 0 || bytes % kRecord != 0)
    fail(strf("%s: size %zu is not a multiple of the 3073-byte record (offset of first partial record: %zu)",
              path.c_str(), bytes, bytes - bytes % kRecord));
  const size_t n = bytes / kRecord;
  std::vector<unsigned char> rec(kRecord);
  for (size_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(rec.data()), kRecord);
    if (!in) fail(strf("%s: truncated record %zu at byte offset %zu", path.c_str(), i, i * kRecord));
    const int label = int(rec[0]);
    if (label > 9)
      fail(strf("%s: label %d out of range [0,10) at record %zu (byte offset %zu)", path.c_str(), label,
                i, i * kRecord));
    ds.labels.push_back(label);
    for (size_t j = 1; j < kRecord; ++j) ds.images.push_back(float(rec[j]));
  }
}

inline Dataset load_cifar_binary(const std::vector<std::string>& paths, const std::string& split) {
  Dataset ds;
  ds.split = split;
  ds.channels = 3;
  ds.height = 32;
  ds.width = 32;
  ds.num_classes = 10;
  for (const auto& p : paths) load_cifar_batch_into(p, ds);
  check(!ds.labels.empty(), "load_cifar_binary: no records loaded");
  return ds;
}

inline Dataset load_cifar_binary(const std::string& path, const std::string& split = "train") {
  return load_cifar_binary(std::vector<std::string>{path}, split);
}

// Conventional filenames under a data root.
inline Dataset load_dataset(const std::string& id, const std::string& dir, const std::string& split) {
  const std::string root = dir.empty() ? std::string(".") : dir;
  if (id == "mnist") {
    if (split == "train")
      return load_idx(root + "/train-images-idx3-ubyte", root + "/train-labels-idx1-ubyte", split);
    return load_idx(root + "/t10k-images-idx3-ubyte", root + "/t10k-labels-idx1-ubyte", split);
  }
  if (id == "cifar10") {
    if (split == "train") {
      std::vector<std::string> paths;
      for (int i = 1; i <= 5; ++i) paths.push_back(root + strf("/data_batch_%d.bin", i));
      return load_cifar_binary(paths, split);
    }
    return load_cifar_binary(std::vector<std::string>{root + "/test_batch.bin"}, split);
  }
  fail("unknown dataset id '" + id + "' (expected mnist or cifar10)");
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

// Computes per-channel mean/std over this (training) split and applies
// (x - mean) / std in place.
inline void normalize_train(Dataset& ds) {
  check(!ds.normalized, "normalize_train: dataset already normalized");
  const size_t hw = size_t(ds.height) * ds.width;
  const size_t n = ds.size();
  ds.mean.assign(size_t(ds.channels), 0.0);
  ds.stddev.assign(size_t(ds.channels), 0.0);
  for (int c = 0; c < ds.channels; ++c) {
    double s = 0;
    for (size_t i = 0; i < n; ++i) {
      const float* plane = ds.images.data() + (i * ds.channels + c) * hw;
      for (size_t j = 0; j < hw; ++j) s += plane[j];
    }
    const double mean = s / double(n * hw);
    double sq = 0;
    for (size_t i = 0; i < n; ++i) {
      const float* plane = ds.images.data() + (i * ds.channels + c) * hw;
      for (size_t j = 0; j < hw; ++j) sq += (plane[j] - mean) * (plane[j] - mean);
    }
    const double std = std::sqrt(sq / double(n * hw));
    check(std > 0.0, strf("normalize_train: channel %d has zero standard deviation", c));
    ds.mean[size_t(c)] = mean;
    ds.stddev[size_t(c)] = std;
  }
  for (size_t i = 0; i < n; ++i)
    for (int c = 0; c < ds.channels; ++c) {
      float* plane = ds.images.data() + (i * ds.channels + c) * hw;
      for (size_t j = 0; j < hw; ++j)
        plane[j] = float((plane[j] - ds.mean[size_t(c)]) / ds.stddev[size_t(c)]);
    }
  ds.normalized = true;
}

// Applies the TRAIN split's statistics to another split.
inline void normalize_with(Dataset& ds, const std::vector<double>& mean,
                           const std::vector<double>& stddev) {
  check(!ds.normalized, "normalize_with: dataset already normalized");
  check(int(mean.size()) == ds.channels && int(stddev.size()) == ds.channels,
        "normalize_with: statistics do not match channel count");
  const size_t hw = size_t(ds.height) * ds.width;
  for (size_t i = 0; i < ds.size(); ++i)
    for (int c = 0; c < ds.channels; ++c) {
      check(stddev[size_t(c)] > 0.0, "normalize_with: zero std channel");
      float* plane = ds.images.data() + (i * ds.channels + c) * hw;
      for (size_t j = 0; j < hw; ++j)
        plane[j] = float((plane[j] - mean[size_t(c)]) / stddev[size_t(c)]);
    }
  ds.mean = mean;
  ds.stddev = stddev;
  ds.normalized = true;
}

// First n examples per class, original order preserved.
inline Dataset subset_per_class(const Dataset& ds, int per_class) {
  check(per_class > 0, "subset_per_class: need n > 0");
  Dataset out;
  out.split = ds.split;
  out.channels = ds.channels;
  out.height = ds.height;
  out.width = ds.width;
  out.num_classes = ds.num_classes;
  out.normalized = ds.normalized;
  out.mean = ds.mean;
  out.stddev = ds.stddev;
  std::vector<int> taken(size_t(ds.num_classes), 0);
  const size_t elems = ds.image_elems();
  for (size_t i = 0; i < ds.size(); ++i) {
    const int y = ds.labels[i];
    if (taken[size_t(y)] >= per_class) continue;
    ++taken[size_t(y)];
    out.labels.push_back(y);
    out.images.insert(out.images.end(), ds.images.begin() + i * elems,
                      ds.images.begin() + (i + 1) * elems);
  }
  for (int c = 0; c < ds.num_classes; ++c)
    check(taken[size_t(c)] == per_class,
          strf("subset_per_class: class %d has only %d examples (need %d)", c, taken[size_t(c)],
               per_class));
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation and batching
// ---------------------------------------------------------------------------

// Pad 4 zeros per border, random crop back to HxW, horizontal flip with
// probability 1/2. Draw order is fixed: dy, dx, flip.
struct AugmentParams {
  int pad = 4;
};

// Crop-then-flip with explicit parameters; dy/dx in [-pad, pad] relative to
// the original image (equivalently, crop offsets [0, 2*pad] in the padded
// one). Out-of-frame pixels read as zero.
template <typename T>
void augment_apply(const float* src, int c, int h, int w, int dy, int dx, bool flip, T* dst) {
  for (int ch = 0; ch < c; ++ch) {
    const float* plane = src + size_t(ch) * h * w;
    T* dplane = dst + size_t(ch) * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int sy = y + dy;
        const int sx = (flip ? w - 1 - x : x) + dx;
        dplane[size_t(y) * w + x] =
            (sy >= 0 && sy < h && sx >= 0 && sx < w) ? T(plane[size_t(sy) * w + sx]) : T(0);
      }
  }
}

template <typename T>
void augment_into(const float* src, int c, int h, int w, Rng& rng, const AugmentParams& ap, T* dst) {
  const int dy = int(rng.uniform_index(uint64_t(2 * ap.pad + 1))) - ap.pad;
  const int dx = int(rng.uniform_index(uint64_t(2 * ap.pad + 1))) - ap.pad;
  const bool flip = rng.bernoulli(0.5);
  augment_apply(src, c, h, w, dy, dx, flip, dst);
}

template <typename T>
Tensor<T> make_batch(const Dataset& ds, const std::vector<int>& indices, bool augment, Rng* rng,
                     std::vector<int>& labels_out, const AugmentParams& ap = {}) {
  const int b = int(indices.size());
  Tensor<T> batch = Tensor<T>::zeros({b, ds.channels, ds.height, ds.width});
  labels_out.resize(size_t(b));
  const size_t elems = ds.image_elems();
  for (int i = 0; i < b; ++i) {
    const size_t idx = size_t(indices[size_t(i)]);
    check(idx < ds.size(), "make_batch: index out of range");
    labels_out[size_t(i)] = ds.labels[idx];
    const float* src = ds.images.data() + idx * elems;
    T* dst = batch.data() + size_t(i) * elems;
    if (augment) {
      check(rng != nullptr, "make_batch: augmentation needs an rng");
      augment_into(src, ds.channels, ds.height, ds.width, *rng, ap, dst);
    } else {
      for (size_t j = 0; j < elems; ++j) dst[j] = T(src[j]);
    }
  }
  return batch;
}

// Epoch-wise permutation batching: every index appears exactly once per
// epoch; the final short batch is kept.
class BatchPlan {
 public:
  BatchPlan(size_t n, int batch_size, bool shuffle, Rng rng)
      : order_(n), batch_(batch_size), shuffle_(shuffle), rng_(rng) {
    check(batch_size > 0, "BatchPlan: batch size must be positive");
    std::iota(order_.begin(), order_.end(), 0);
  }

  void start_epoch() {
    if (shuffle_) rng_.shuffle(order_);
    cursor_ = 0;
  }

  bool next(std::vector<int>& out) {
    if (cursor_ >= order_.size()) return false;
    const size_t end = std::min(cursor_ + size_t(batch_), order_.size());
    out.assign(order_.begin() + std::ptrdiff_t(cursor_), order_.begin() + std::ptrdiff_t(end));
    cursor_ = end;
    return true;
  }

  size_t batches_per_epoch() const { return (order_.size() + size_t(batch_) - 1) / size_t(batch_); }

 private:
  std::vector<int> order_;
  int batch_;
  bool shuffle_;
  Rng rng_;
  size_t cursor_ = 0;
};

}  // namespace dce
