#pragma once

#include <array>
#include <sstream>
#include <string>
#include <vector>

#include "dce/channels.hpp"
#include "dce/common.hpp"

namespace dce {

enum class BlockKind { ConvUnit, MaxPool, AvgPool, Flatten, Linear };

// One block of a sequential architecture. ConvUnit means Conv -> BN -> ReLU
// -> channel gate; Linear is only ever the final classifier.
struct BlockSpec {
  BlockKind kind = BlockKind::ConvUnit;
  int channels = 0;  // ConvUnit output width
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  bool bias = false;

  static BlockSpec conv(int channels, int kernel = 3, int stride = 1, int pad = 1, bool bias = false) {
    return {BlockKind::ConvUnit, channels, kernel, stride, pad, bias};
  }
  static BlockSpec maxpool(int kernel = 2, int stride = 2) { return {BlockKind::MaxPool, 0, kernel, stride, 0, false}; }
  static BlockSpec avgpool(int kernel = 2, int stride = 2) { return {BlockKind::AvgPool, 0, kernel, stride, 0, false}; }
  static BlockSpec flatten() { return {BlockKind::Flatten, 0, 0, 1, 0, false}; }
  static BlockSpec linear() { return {BlockKind::Linear, 0, 0, 1, 0, true}; }
};

struct ArchDescriptor {
  std::string name;
  int in_channels = 1;
  int in_h = 0;
  int in_w = 0;
  int num_classes = 10;
  std::vector<BlockSpec> blocks;
};

// Channel/height/width tracked through the chain; Flatten collapses to
// (features, 1, 1).
using Shape3 = std::array<int, 3>;

// Validates the descriptor and returns the output shape after every block.
inline std::vector<Shape3> block_output_shapes(const ArchDescriptor& d) {
  check(d.in_channels > 0 && d.in_h > 0 && d.in_w > 0,
        strf("descriptor '%s': bad input shape %dx%dx%d", d.name.c_str(), d.in_channels, d.in_h, d.in_w));
  check(d.num_classes >= 2, strf("descriptor '%s': need >= 2 classes", d.name.c_str()));
  check(!d.blocks.empty(), strf("descriptor '%s': no blocks", d.name.c_str()));

  std::vector<Shape3> shapes;
  Shape3 cur{d.in_channels, d.in_h, d.in_w};
  bool flattened = false;
  int linear_count = 0;
  for (size_t i = 0; i < d.blocks.size(); ++i) {
    const BlockSpec& b = d.blocks[i];
    switch (b.kind) {
      case BlockKind::ConvUnit: {
        check(!flattened, strf("descriptor '%s': conv after flatten (block %zu)", d.name.c_str(), i));
        check(b.channels > 0 && b.kernel > 0 && b.stride > 0 && b.pad >= 0,
              strf("descriptor '%s': bad conv spec at block %zu", d.name.c_str(), i));
        const int ho = (cur[1] + 2 * b.pad - b.kernel) / b.stride + 1;
        const int wo = (cur[2] + 2 * b.pad - b.kernel) / b.stride + 1;
        check(ho >= 1 && wo >= 1,
              strf("descriptor '%s': conv at block %zu collapses %dx%d to nothing", d.name.c_str(), i,
                   cur[1], cur[2]));
        cur = {b.channels, ho, wo};
        break;
      }
      case BlockKind::MaxPool:
      case BlockKind::AvgPool: {
        check(!flattened, strf("descriptor '%s': pool after flatten (block %zu)", d.name.c_str(), i));
        check(b.kernel > 0 && b.stride > 0, strf("descriptor '%s': bad pool spec at block %zu", d.name.c_str(), i));
        check(cur[1] >= b.kernel && cur[2] >= b.kernel,
              strf("descriptor '%s': pool window %d exceeds %dx%d at block %zu", d.name.c_str(),
                   b.kernel, cur[1], cur[2], i));
        cur = {cur[0], (cur[1] - b.kernel) / b.stride + 1, (cur[2] - b.kernel) / b.stride + 1};
        break;
      }
      case BlockKind::Flatten:
        check(!flattened, strf("descriptor '%s': duplicate flatten at block %zu", d.name.c_str(), i));
        flattened = true;
        cur = {cur[0] * cur[1] * cur[2], 1, 1};
        break;
      case BlockKind::Linear:
        check(flattened, strf("descriptor '%s': linear before flatten at block %zu", d.name.c_str(), i));
        check(i + 1 == d.blocks.size(),
              strf("descriptor '%s': linear must be the final block, found at %zu", d.name.c_str(), i));
        ++linear_count;
        cur = {d.num_classes, 1, 1};
        break;
    }
    shapes.push_back(cur);
  }
  check(linear_count == 1,
        strf("descriptor '%s': exactly one final linear classifier required, found %d", d.name.c_str(),
             linear_count));
  return shapes;
}

inline std::vector<int> conv_widths(const ArchDescriptor& d) {
  std::vector<int> w;
  for (const BlockSpec& b : d.blocks)
    if (b.kind == BlockKind::ConvUnit) w.push_back(b.channels);
  return w;
}

inline ChannelRegistry make_registry(const ArchDescriptor& d) { return ChannelRegistry(conv_widths(d)); }

// ---------------------------------------------------------------------------
// Built-in architectures
// ---------------------------------------------------------------------------

// Two tiny conv units (8, 16 channels); for fast tests.
inline ArchDescriptor tiny_descriptor(int in_channels = 1, int in_h = 8, int in_w = 8, int classes = 10) {
  ArchDescriptor d;
  d.name = "tiny";
  d.in_channels = in_channels;
  d.in_h = in_h;
  d.in_w = in_w;
  d.num_classes = classes;
  d.blocks = {BlockSpec::conv(8), BlockSpec::avgpool(), BlockSpec::conv(16), BlockSpec::flatten(),
              BlockSpec::linear()};
  return d;
}

// Desk-scale 4-conv CNN (16,32,32,64) + linear head; minutes-scale runs.
inline ArchDescriptor desk_descriptor(int in_channels = 1, int in_h = 28, int in_w = 28, int classes = 10) {
  ArchDescriptor d;
  d.name = "desk";
  d.in_channels = in_channels;
  d.in_h = in_h;
  d.in_w = in_w;
  d.num_classes = classes;
  d.blocks = {BlockSpec::conv(16), BlockSpec::maxpool(), BlockSpec::conv(32), BlockSpec::maxpool(),
              BlockSpec::conv(32), BlockSpec::conv(64),  BlockSpec::flatten(), BlockSpec::linear()};
  return d;
}

// VGG-19 of type VGG-E with a single fully connected classifier (16 conv +
// 1 FC); conv layers carry no bias, batch norm everywhere, no dropout.
inline ArchDescriptor vgg19_descriptor(int classes = 10, int in_channels = 3, int in_h = 32, int in_w = 32) {
  ArchDescriptor d;
  d.name = "vgg19";
  d.in_channels = in_channels;
  d.in_h = in_h;
  d.in_w = in_w;
  d.num_classes = classes;
  const int plan[] = {64, 64, -1, 128, 128, -1, 256, 256, 256, 256, -1,
                      512, 512, 512, 512, -1, 512, 512, 512, 512, -1};
  for (int v : plan) {
    if (v < 0)
      d.blocks.push_back(BlockSpec::maxpool());
    else
      d.blocks.push_back(BlockSpec::conv(v));
  }
  d.blocks.push_back(BlockSpec::flatten());
  d.blocks.push_back(BlockSpec::linear());
  return d;
}

inline ArchDescriptor builtin_descriptor(const std::string& arch, int in_channels, int in_h, int in_w,
                                         int classes) {
  if (arch == "tiny") return tiny_descriptor(in_channels, in_h, in_w, classes);
  if (arch == "desk") return desk_descriptor(in_channels, in_h, in_w, classes);
  if (arch == "vgg19") return vgg19_descriptor(classes, in_channels, in_h, in_w);
  fail("unknown architecture id '" + arch + "' (expected tiny, desk or vgg19)");
}

// ---------------------------------------------------------------------------
// Text serialization (checkpoint headers and descriptor files)
// ---------------------------------------------------------------------------

inline std::string descriptor_to_text(const ArchDescriptor& d) {
  std::ostringstream os;
  os << "arch " << (d.name.empty() ? "custom" : d.name) << "\n";
  os << "input " << d.in_channels << "x" << d.in_h << "x" << d.in_w << "\n";
  os << "classes " << d.num_classes << "\n";
  for (const BlockSpec& b : d.blocks) {
    switch (b.kind) {
      case BlockKind::ConvUnit:
        os << "conv " << b.channels << " k" << b.kernel << " s" << b.stride << " p" << b.pad
           << (b.bias ? " bias" : "") << "\n";
        break;
      case BlockKind::MaxPool:
        os << "maxpool k" << b.kernel << " s" << b.stride << "\n";
        break;
      case BlockKind::AvgPool:
        os << "avgpool k" << b.kernel << " s" << b.stride << "\n";
        break;
      case BlockKind::Flatten:
        os << "flatten\n";
        break;
      case BlockKind::Linear:
        os << "linear\n";
        break;
    }
  }
  return os.str();
}

inline ArchDescriptor descriptor_from_text(const std::string& text) {
  ArchDescriptor d;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  auto parse_kv = [&](const std::string& tok, char key, const char* what) {
    if (tok.size() < 2 || tok[0] != key)
      fail(strf("descriptor line %d: expected %s like '%c<int>', got '%s'", lineno, what, key, tok.c_str()));
    return std::stoi(tok.substr(1));
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string head;
    if (!(ls >> head) || head.empty() || head[0] == '#') continue;
    if (head == "arch") {
      ls >> d.name;
    } else if (head == "input") {
      std::string spec;
      ls >> spec;
      if (std::sscanf(spec.c_str(), "%dx%dx%d", &d.in_channels, &d.in_h, &d.in_w) != 3)
        fail(strf("descriptor line %d: bad input shape '%s' (want CxHxW)", lineno, spec.c_str()));
    } else if (head == "classes") {
      if (!(ls >> d.num_classes)) fail(strf("descriptor line %d: bad class count", lineno));
    } else if (head == "conv") {
      BlockSpec b;
      b.kind = BlockKind::ConvUnit;
      std::string tok;
      if (!(ls >> b.channels)) fail(strf("descriptor line %d: conv needs a channel count", lineno));
      while (ls >> tok) {
        if (tok == "bias")
          b.bias = true;
        else if (tok[0] == 'k')
          b.kernel = parse_kv(tok, 'k', "kernel");
        else if (tok[0] == 's')
          b.stride = parse_kv(tok, 's', "stride");
        else if (tok[0] == 'p')
          b.pad = parse_kv(tok, 'p', "padding");
        else
          fail(strf("descriptor line %d: unknown conv attribute '%s'", lineno, tok.c_str()));
      }
      if (b.kernel == 0) fail(strf("descriptor line %d: conv needs k<kernel>", lineno));
      d.blocks.push_back(b);
    } else if (head == "maxpool" || head == "avgpool") {
      BlockSpec b;
      b.kind = head == "maxpool" ? BlockKind::MaxPool : BlockKind::AvgPool;
      b.kernel = 2;
      b.stride = 2;
      std::string tok;
      while (ls >> tok) {
        if (tok[0] == 'k')
          b.kernel = parse_kv(tok, 'k', "kernel");
        else if (tok[0] == 's')
          b.stride = parse_kv(tok, 's', "stride");
        else
          fail(strf("descriptor line %d: unknown pool attribute '%s'", lineno, tok.c_str()));
      }
      d.blocks.push_back(b);
    } else if (head == "flatten") {
      d.blocks.push_back(BlockSpec::flatten());
    } else if (head == "linear") {
      d.blocks.push_back(BlockSpec::linear());
    } else {
      fail(strf("descriptor line %d: unknown block '%s'", lineno, head.c_str()));
    }
  }
  block_output_shapes(d);  // full validation
  return d;
}

}  // namespace dce
