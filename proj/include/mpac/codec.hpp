#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "mpac/common.hpp"
#include "mpac/prob_net.hpp"
#include "mpac/sparse_tensor.hpp"

namespace mpac {

// Coding structure switches. cross_group splits each scale into the eight
// octant phases (enabling last-child inference per cube); cross_color
// conditions chroma on decoded luma; cc_sequential additionally conditions
// the second chroma channel on the first.
struct CodecMode {
  bool cross_group = true;
  bool cross_color = true;
  bool cc_sequential = false;
};

// Accepts "cs", "cs+cg", "cs+cc", "cs+cg+cc", optionally with "+seq".
CodecMode parse_mode(const std::string& s);
std::string mode_name(const CodecMode& m);

struct CodecConfig {
  CodecMode mode;
  int threads = 1;
  const ProbNet* net = nullptr;  // null -> analytic fallback predictor
  double fallback_b0 = 2.0;      // Laplace scale used by the fallback
};

// Identifies the fallback predictor in the bitstream header so decode
// refuses to run with mismatched probabilities.
u64 fallback_model_tag(double b0);

struct StreamStat {
  std::string name;
  u64 payload_bytes = 0;
  u64 symbols = 0;
  double est_bits = 0.0;        // model cross-entropy for the coded symbols
  double est_quant_bits = 0.0;  // same, under the quantized tables
};

struct CodecStats {
  u64 points = 0;
  int channels = 0;
  u64 total_bytes = 0;
  u64 header_bytes = 0;
  u64 geometry_mask_bytes = 0;
  u64 root_bits = 0;
  std::vector<StreamStat> streams;  // residue + attribute streams, file order

  u64 attr_payload_bits() const;
  u64 attr_bits() const { return attr_payload_bits() + root_bits; }
  u64 geom_bits() const { return geometry_mask_bytes * 8; }
  double est_attr_bits() const;
  double bpp() const { return points ? double(attr_bits()) / double(points) : 0.0; }
};

struct EncodeResult {
  std::vector<u8> bytes;
  CodecStats stats;
};

// Losslessly encodes a voxelized cloud (1 or 3 attribute channels; values
// must fit the coded range after the color transform). Three-channel input
// is coded in YCoCg space.
EncodeResult encode(const SparseTensor& cloud, const CodecConfig& cfg);

// Inverse of encode. The coding structure is read from the stream; cfg
// supplies the probability model, which must match the encoder's.
SparseTensor decode(std::span<const u8> bytes, const CodecConfig& cfg);

// Parsed header fields, for inspection tooling.
struct BitstreamInfo {
  int version = 0;
  CodecMode mode;
  int channels = 0;
  int colorspace = 0;  // 0 raw, 1 YCoCg
  int scales = 0;
  std::vector<u64> counts;  // occupied voxels per scale, root first
  std::vector<std::array<i16, 2>> ranges;
  u64 model_hash = 0;
};
BitstreamInfo inspect(std::span<const u8> bytes);

// Teacher-forced feature/target capture for the trainer. Uses the same
// per-scale state machine as the codec, so a sample's features are exactly
// the inputs the model would see when coding that group.
struct TrainSample {
  VariantKey key;
  ValueNorm norm;
  i16 lo = 0, hi = 0;
  int level = 0;     // scale index the sample came from
  u32 level_id = 0;  // index into TrainBatch::nbrs
  FeatureMatrix feats;
  std::vector<u32> coded_rows;
  std::vector<i32> coded_values;
};

struct TrainBatch {
  std::vector<NeighborList> nbrs;
  std::vector<TrainSample> samples;
};

TrainBatch collect_training_samples(const SparseTensor& cloud, const CodecConfig& cfg);

}  // namespace mpac
