#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "mpac/common.hpp"
#include "mpac/laplace.hpp"
#include "mpac/sparse_tensor.hpp"

namespace mpac {

// Which conditioning context a weight variant serves. Primary covers the
// luma/raw channel and any channel coded without references; the others add
// previously decoded channels as extra input features.
enum class CtxClass : u8 {
  kPrimary = 0,   // value + known mask
  kCoRef = 1,     // Co conditioned on decoded Y
  kCgRef = 2,     // Cg conditioned on decoded Y
  kCgRefSeq = 3,  // Cg conditioned on decoded Y and Co (sequential variant)
};

inline int ctx_input_channels(CtxClass c) {
  switch (c) {
    case CtxClass::kPrimary: return 2;
    case CtxClass::kCoRef: return 3;
    case CtxClass::kCgRef: return 3;
    case CtxClass::kCgRefSeq: return 4;
  }
  throw std::invalid_argument("ctx_input_channels: bad context");
}

inline constexpr int kNumStages = 8;   // one weight set per octant group stage
inline constexpr int kHiddenWidth = 16;
inline constexpr int kNumBlocks = 2;
// Fixed multiplier turning the head's softplus output into a Laplace scale
// in attribute units; shared by all channels so the scale head behaves the
// same regardless of per-channel value normalization.
inline constexpr double kBUnit = 128.0;

struct VariantKey {
  u8 stage = 0;  // 0..7
  CtxClass ctx = CtxClass::kPrimary;
  auto operator<=>(const VariantKey&) const = default;
};

// Maps a channel between attribute units and the network's normalized
// units: norm = (value - offset) / scale.
struct ValueNorm {
  double scale = 128.0;
  double offset = 128.0;
  double to_norm(double v) const { return (v - offset) / scale; }
  double to_value(double n) const { return n * scale + offset; }
};

// Row-major voxel feature matrix (rows = voxels of one level).
struct FeatureMatrix {
  int channels = 0;
  std::vector<double> data;
  std::size_t rows() const { return channels ? data.size() / std::size_t(channels) : 0; }
  double* row(std::size_t i) { return data.data() + i * channels; }
  const double* row(std::size_t i) const { return data.data() + i * channels; }
};

struct ConvLayer {
  int kernel = 1;  // 1 or 3
  int cin = 0;
  int cout = 0;
  std::vector<double> w;  // [slot][cin][cout]
  std::vector<double> bias;
  std::size_t param_count() const { return w.size() + bias.size(); }
};

// conv_in (1x1x1) -> blocks x { conv3, ReLU, conv3, add } -> head (1x1x1)
// emitting (mu_raw, b_raw) per voxel.
struct Variant {
  ConvLayer conv_in;
  struct Block {
    ConvLayer first, second;
  };
  std::vector<Block> blocks;
  ConvLayer head;
  std::size_t param_count() const;
  // Layers in serialization order: conv_in, blocks (first, second)..., head.
  std::vector<ConvLayer*> layers();
  std::vector<const ConvLayer*> layers() const;
};

// Activations kept by a forward pass so the backward pass can run.
struct ForwardTrace {
  std::vector<std::vector<double>> block_in;   // input to each block (and head input last)
  std::vector<std::vector<double>> pre_relu;   // first conv output per block
  std::vector<std::vector<double>> post_relu;  // ReLU output per block
  std::vector<double> mu_raw, b_raw;           // head outputs per voxel
};

// Gradients aligned with Variant::layers() order.
struct VariantGrads {
  std::vector<std::vector<double>> w;
  std::vector<std::vector<double>> bias;
  void init_like(const Variant& v);
  void add_scaled(const VariantGrads& other, double s);
  bool finite() const;
};

// The learned probability model: a small sparse-convolutional network per
// (group stage, conditioning context), shared across scales.
class ProbNet {
 public:
  // Fresh model: random trunk, zero head, so an untrained net reproduces
  // the analytic predictor (mu = current estimate, b = b0).
  static ProbNet make_default(u64 seed, double initial_b = 2.0);

  const Variant& variant(VariantKey k) const;
  Variant& variant_mut(VariantKey k);
  std::vector<VariantKey> keys() const;

  // Predicted per-voxel distributions in attribute units. Channel 0 of
  // feats must be the normalized current value estimate.
  LaplaceField forward(VariantKey k, const FeatureMatrix& feats, const NeighborList& nbr,
                       const ValueNorm& norm, int threads) const;

  // Forward keeping activations, then reverse-mode accumulation: d_mu/d_b
  // are dLoss/dmu_raw and dLoss/db_raw per voxel.
  ForwardTrace forward_trace(VariantKey k, const FeatureMatrix& feats, const NeighborList& nbr,
                             int threads) const;
  void backward(VariantKey k, const FeatureMatrix& feats, const NeighborList& nbr,
                const ForwardTrace& trace, std::span<const double> d_mu,
                std::span<const double> d_b, VariantGrads& grads, int threads) const;

  u64 content_hash() const { return hash_; }
  void save(const std::string& path) const;
  static ProbNet load(const std::string& path);
  std::vector<u8> serialize() const;
  static ProbNet deserialize(std::span<const u8> bytes);
  // Recomputes the content hash after direct weight edits.
  void rehash();

 private:
  std::map<VariantKey, Variant> variants_;
  u64 hash_ = 0;
};

// mu/b mapping shared by forward() and the trainer:
// mu = to_value(value_norm + mu_raw), b = softplus(b_raw) * kBUnit + b_min.
double softplus(double x);
double sigmoid(double x);
// Head bias that makes softplus(bias) * kBUnit + kMinScaleB == initial_b.
double initial_b_bias(double initial_b);

}  // namespace mpac
