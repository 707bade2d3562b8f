#pragma once

// Binary checkpoints: header (format version, precision, descriptor text,
// optional RLE mask) followed by named parameter blobs in little-endian
// IEEE-754. Byte layout documented in docs/checkpoint_format.md.

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "dce/arch.hpp"
#include "dce/channels.hpp"
#include "dce/model.hpp"

namespace dce {

namespace ckpt_detail {

inline void write_u32(std::ofstream& out, uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u8(std::ofstream& out, uint8_t v) { out.write(reinterpret_cast<const char*>(&v), 1); }

inline uint32_t read_u32(std::ifstream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) fail("checkpoint truncated: " + path);
  return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

inline uint8_t read_u8(std::ifstream& in, const std::string& path) {
  unsigned char b;
  in.read(reinterpret_cast<char*>(&b), 1);
  if (!in) fail("checkpoint truncated: " + path);
  return b;
}

template <typename T>
void write_blob(std::ofstream& out, const std::string& name, const std::vector<int>& shape,
                const std::vector<T>& data) {
  write_u32(out, uint32_t(name.size()));
  out.write(name.data(), std::streamsize(name.size()));
  write_u8(out, uint8_t(shape.size()));
  for (int d : shape) write_u32(out, uint32_t(d));
  // Little-endian host assumed; pinned in the format doc.
  out.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size() * sizeof(T)));
}

}  // namespace ckpt_detail

struct CheckpointBlob {
  std::vector<int> shape;
  std::vector<double> values;  // promoted to double on read (exact for f32)
};

struct CheckpointData {
  uint32_t version = 1;
  int precision_bytes = 4;
  ArchDescriptor desc;
  bool has_mask = false;
  std::vector<uint8_t> mask_bits;
  std::map<std::string, CheckpointBlob> blobs;
};

template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& model, const ChannelMask* mask) {
  using namespace ckpt_detail;
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot create checkpoint file: " + path);
  out.write("DCKP", 4);
  write_u32(out, 1);  // version
  write_u8(out, uint8_t(sizeof(T)));
  const std::string desc_text = descriptor_to_text(model.descriptor());
  write_u32(out, uint32_t(desc_text.size()));
  out.write(desc_text.data(), std::streamsize(desc_text.size()));
  write_u8(out, mask ? 1 : 0);
  if (mask) {
    write_u32(out, uint32_t(mask->size()));
    const std::vector<uint32_t> rle = rle_encode(mask->bits());
    write_u32(out, uint32_t(rle.size()));
    for (uint32_t v : rle) write_u32(out, v);
  }

  struct BlobRef {
    std::string name;
    std::vector<int> shape;
    const std::vector<T>* data;
  };
  std::vector<BlobRef> blobs;
  for (const auto& l : model.layers()) {
    if (l.kind == BlockKind::ConvUnit) {
      const auto& cu = l.conv;
      const std::string base = "conv" + std::to_string(cu.conv_ordinal);
      blobs.push_back({base + ".weight", cu.weight.shape(), &cu.weight.values()});
      if (cu.has_bias) blobs.push_back({base + ".bias", cu.bias.shape(), &cu.bias.values()});
      blobs.push_back({base + ".bn.gamma", cu.gamma.shape(), &cu.gamma.values()});
      blobs.push_back({base + ".bn.beta", cu.beta.shape(), &cu.beta.values()});
      blobs.push_back({base + ".bn.run_mean", {cu.c_out}, &cu.run_mean});
      blobs.push_back({base + ".bn.run_var", {cu.c_out}, &cu.run_var});
    } else if (l.kind == BlockKind::Linear) {
      blobs.push_back({"fc.weight", l.lin.weight.shape(), &l.lin.weight.values()});
      blobs.push_back({"fc.bias", l.lin.bias.shape(), &l.lin.bias.values()});
    }
  }
  write_u32(out, uint32_t(blobs.size()));
  for (const BlobRef& b : blobs) write_blob(out, b.name, b.shape, *b.data);
  check(bool(out), "checkpoint write failed: " + path);
}

inline CheckpointData load_checkpoint(const std::string& path) {
  using namespace ckpt_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open checkpoint file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "DCKP", 4) != 0)
    fail("not a checkpoint file (bad magic): " + path);
  CheckpointData data;
  data.version = read_u32(in, path);
  check(data.version == 1, strf("unsupported checkpoint version %u in %s", data.version, path.c_str()));
  data.precision_bytes = int(read_u8(in, path));
  check(data.precision_bytes == 4 || data.precision_bytes == 8,
        "checkpoint declares unknown precision: " + path);
  const uint32_t desc_len = read_u32(in, path);
  std::string desc_text(desc_len, '\0');
  in.read(desc_text.data(), desc_len);
  if (!in) fail("checkpoint truncated in descriptor: " + path);
  data.desc = descriptor_from_text(desc_text);
  if (read_u8(in, path)) {
    data.has_mask = true;
    const uint32_t nbits = read_u32(in, path);
    const uint32_t nrle = read_u32(in, path);
    std::vector<uint32_t> rle(nrle);
    for (auto& v : rle) v = read_u32(in, path);
    data.mask_bits = rle_decode(rle);
    check(data.mask_bits.size() == nbits, "checkpoint mask RLE decodes to wrong length: " + path);
  }
  const uint32_t n_blobs = read_u32(in, path);
  for (uint32_t i = 0; i < n_blobs; ++i) {
    const uint32_t name_len = read_u32(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const uint8_t ndim = read_u8(in, path);
    CheckpointBlob blob;
    size_t numel = 1;
    for (int d = 0; d < int(ndim); ++d) {
      blob.shape.push_back(int(read_u32(in, path)));
      numel *= size_t(blob.shape.back());
    }
    blob.values.resize(numel);
    if (data.precision_bytes == 4) {
      std::vector<float> raw(numel);
      in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(numel * 4));
      for (size_t j = 0; j < numel; ++j) blob.values[j] = double(raw[j]);
    } else {
      in.read(reinterpret_cast<char*>(blob.values.data()), std::streamsize(numel * 8));
    }
    if (!in) fail(strf("checkpoint truncated in blob '%s': %s", name.c_str(), path.c_str()));
    data.blobs[name] = std::move(blob);
  }
  return data;
}

template <typename T>
Model<T> model_from_checkpoint(const CheckpointData& data) {
  Model<T> model(data.desc, /*seed=*/0);
  auto fetch = [&](const std::string& name, size_t expect) -> const CheckpointBlob& {
    const auto it = data.blobs.find(name);
    check(it != data.blobs.end(), "checkpoint missing blob '" + name + "'");
    check(it->second.values.size() == expect,
          strf("checkpoint blob '%s' has %zu values, model expects %zu", name.c_str(),
               it->second.values.size(), expect));
    return it->second;
  };
  auto fill = [&](const std::string& name, std::vector<T>& dst) {
    const CheckpointBlob& b = fetch(name, dst.size());
    for (size_t i = 0; i < dst.size(); ++i) dst[i] = T(b.values[i]);
  };
  for (auto& l : model.layers()) {
    if (l.kind == BlockKind::ConvUnit) {
      auto& cu = l.conv;
      const std::string base = "conv" + std::to_string(cu.conv_ordinal);
      fill(base + ".weight", cu.weight.values());
      if (cu.has_bias) fill(base + ".bias", cu.bias.values());
      fill(base + ".bn.gamma", cu.gamma.values());
      fill(base + ".bn.beta", cu.beta.values());
      fill(base + ".bn.run_mean", cu.run_mean);
      fill(base + ".bn.run_var", cu.run_var);
    } else if (l.kind == BlockKind::Linear) {
      fill("fc.weight", l.lin.weight.values());
      fill("fc.bias", l.lin.bias.values());
    }
  }
  return model;
}

}  // namespace dce
