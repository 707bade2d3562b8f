#pragma once

// Deterministic synthetic handwritten-digit generator. Renders stroke-based
// glyphs with random affine jitter, thickness and pixel noise, and writes
// standard IDX files so the output is consumed through the regular MNIST
// loading path. Intended for demos and self-contained test runs on machines
// without the real dataset.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dce/common.hpp"

namespace dce {

namespace synth_detail {

struct Seg {
  double x0, y0, x1, y1;
};

// Closed loop approximating an ellipse.
inline void add_loop(std::vector<Seg>& segs, double cx, double cy, double rx, double ry, int n = 10) {
  for (int i = 0; i < n; ++i) {
    const double a0 = 2.0 * M_PI * i / n, a1 = 2.0 * M_PI * (i + 1) / n;
    segs.push_back({cx + rx * std::cos(a0), cy + ry * std::sin(a0), cx + rx * std::cos(a1),
                    cy + ry * std::sin(a1)});
  }
}

inline void add_path(std::vector<Seg>& segs, std::initializer_list<std::array<double, 2>> pts) {
  const auto* p = pts.begin();
  for (size_t i = 1; i < pts.size(); ++i)
    segs.push_back({p[i - 1][0], p[i - 1][1], p[i][0], p[i][1]});
}

// Glyphs in [0,1]^2, y pointing down.
inline std::vector<Seg> glyph(int digit) {
  std::vector<Seg> s;
  switch (digit) {
    case 0:
      add_loop(s, 0.5, 0.5, 0.26, 0.38, 12);
      break;
    case 1:
      add_path(s, {{0.32, 0.28}, {0.54, 0.10}, {0.54, 0.90}});
      add_path(s, {{0.34, 0.90}, {0.72, 0.90}});
      break;
    case 2:
      add_path(s, {{0.26, 0.30}, {0.34, 0.14}, {0.60, 0.10}, {0.74, 0.26}, {0.70, 0.44},
                   {0.28, 0.88}, {0.78, 0.88}});
      break;
    case 3:
      add_path(s, {{0.26, 0.14}, {0.66, 0.10}, {0.76, 0.28}, {0.54, 0.46}, {0.78, 0.64},
                   {0.68, 0.88}, {0.26, 0.86}});
      break;
    case 4:
      add_path(s, {{0.60, 0.10}, {0.24, 0.62}, {0.82, 0.62}});
      add_path(s, {{0.64, 0.38}, {0.64, 0.92}});
      break;
    case 5:
      add_path(s, {{0.74, 0.12}, {0.32, 0.12}, {0.29, 0.48}, {0.58, 0.42}, {0.76, 0.58},
                   {0.68, 0.86}, {0.26, 0.86}});
      break;
    case 6:
      add_path(s, {{0.64, 0.10}, {0.38, 0.38}, {0.29, 0.66}});
      add_loop(s, 0.5, 0.68, 0.21, 0.20, 10);
      break;
    case 7:
      add_path(s, {{0.24, 0.14}, {0.78, 0.12}, {0.46, 0.90}});
      add_path(s, {{0.34, 0.50}, {0.64, 0.50}});
      break;
    case 8:
      add_loop(s, 0.5, 0.30, 0.19, 0.18, 10);
      add_loop(s, 0.5, 0.68, 0.23, 0.21, 10);
      break;
    case 9:
      add_loop(s, 0.48, 0.32, 0.21, 0.20, 10);
      add_path(s, {{0.69, 0.36}, {0.60, 0.90}});
      break;
    default:
      fail(strf("glyph: digit %d out of range", digit));
  }
  return s;
}

inline double dist_to_seg(double px, double py, const Seg& s) {
  const double vx = s.x1 - s.x0, vy = s.y1 - s.y0;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - s.x0) * vx + (py - s.y0) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (s.x0 + t * vx), dy = py - (s.y0 + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

inline void write_be32(std::ofstream& out, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace synth_detail

struct SynthOptions {
  int side = 28;
  double rotation = 0.28;        // radians, +-
  double scale_lo = 0.78, scale_hi = 1.12;
  double shift = 2.4;            // pixels, +-
  double thickness_lo = 1.1, thickness_hi = 2.1;
  double noise_sigma = 14.0;     // grayscale units
  double intensity_lo = 0.72, intensity_hi = 1.0;
};

// One rendered digit as bytes (side*side, row-major).
inline std::vector<unsigned char> render_synth_digit(int digit, Rng& rng, const SynthOptions& o = {}) {
  using namespace synth_detail;
  const std::vector<Seg> base = glyph(digit);

  const double theta = rng.uniform_real(-o.rotation, o.rotation);
  const double scale = rng.uniform_real(o.scale_lo, o.scale_hi) * (o.side * 0.78);
  const double tx = o.side * 0.5 + rng.uniform_real(-o.shift, o.shift);
  const double ty = o.side * 0.5 + rng.uniform_real(-o.shift, o.shift);
  const double thick = rng.uniform_real(o.thickness_lo, o.thickness_hi);
  const double peak = 255.0 * rng.uniform_real(o.intensity_lo, o.intensity_hi);
  const double ct = std::cos(theta), st = std::sin(theta);

  auto map = [&](double gx, double gy, double& px, double& py) {
    const double x = (gx - 0.5) * scale, y = (gy - 0.5) * scale;
    px = ct * x - st * y + tx;
    py = st * x + ct * y + ty;
  };
  std::vector<Seg> segs;
  segs.reserve(base.size());
  for (const Seg& s : base) {
    Seg t{};
    map(s.x0, s.y0, t.x0, t.y0);
    map(s.x1, s.y1, t.x1, t.y1);
    segs.push_back(t);
  }

  std::vector<unsigned char> img(size_t(o.side) * o.side, 0);
  const double aa = 0.9;  // soft edge width in pixels
  for (int y = 0; y < o.side; ++y)
    for (int x = 0; x < o.side; ++x) {
      double d = 1e9;
      for (const Seg& s : segs) d = std::min(d, dist_to_seg(x + 0.5, y + 0.5, s));
      double v = peak * std::clamp((thick - d) / aa + 0.5, 0.0, 1.0);
      v += rng.normal(0.0, o.noise_sigma);
      img[size_t(y) * o.side + x] = static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
    }
  return img;
}

// Writes an IDX image/label pair; classes are balanced round-robin.
inline void write_synth_idx(const std::string& dir, const std::string& images_name,
                            const std::string& labels_name, int count, uint64_t seed,
                            const SynthOptions& o = {}) {
  using namespace synth_detail;
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  Rng rng(mix_u64(seed ^ 0x5d161e5ULL));

  std::ofstream img(dir + "/" + images_name, std::ios::binary);
  std::ofstream lab(dir + "/" + labels_name, std::ios::binary);
  check(bool(img) && bool(lab), "write_synth_idx: cannot create output files in " + dir);
  write_be32(img, 0x00000803u);
  write_be32(img, uint32_t(count));
  write_be32(img, uint32_t(o.side));
  write_be32(img, uint32_t(o.side));
  write_be32(lab, 0x00000801u);
  write_be32(lab, uint32_t(count));

  for (int i = 0; i < count; ++i) {
    const int digit = i % 10;
    const std::vector<unsigned char> pix = render_synth_digit(digit, rng, o);
    img.write(reinterpret_cast<const char*>(pix.data()), std::streamsize(pix.size()));
    const unsigned char l = static_cast<unsigned char>(digit);
    lab.write(reinterpret_cast<const char*>(&l), 1);
  }
  check(bool(img) && bool(lab), "write_synth_idx: write failed in " + dir);
}

// Full train/test pair under `dir` using the conventional MNIST filenames.
inline void generate_synth_dataset(const std::string& dir, int train_count, int test_count,
                                   uint64_t seed, const SynthOptions& o = {}) {
  write_synth_idx(dir, "train-images-idx3-ubyte", "train-labels-idx1-ubyte", train_count, seed, o);
  write_synth_idx(dir, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", test_count, seed + 1, o);
}

}  // namespace dce
