#pragma once

#include <span>
#include <vector>

#include "mpac/common.hpp"

namespace mpac {

inline constexpr int kProbBits = 16;
inline constexpr u32 kProbScale = 1u << kProbBits;  // CDF total, always 2^16

// Cumulative frequency table quantized to kProbScale slots. cum has
// size()+1 entries, cum[0] == 0, cum[size()] == kProbScale, strictly
// increasing (every symbol keeps at least one slot).
struct QuantizedCdf {
  std::vector<u32> cum;
  int size() const { return int(cum.size()) - 1; }
  u32 freq(int s) const { return cum[s + 1] - cum[s]; }
  double cost_bits(int s) const;  // -log2(freq/kProbScale)
};

// Largest-remainder quantization of a probability vector (alphabet size
// 1..65536). Deterministic: ties break on symbol index.
QuantizedCdf quantize_cdf(std::span<const double> p);

// Slot count of symbol s in the closed-form uniform k-ary table (the first
// kProbScale % k symbols get one extra slot).
u32 uniform_freq(u32 k, u32 s);

// Carry-less range coder, 64-bit state, byte-wise renormalization. The wide
// state keeps the interval width far above the 16-bit table resolution, so
// the scaling step loses almost no precision, and the flush writes only the
// top 40 bits of a value aligned to 2^24 (the decoder supplies the missing
// low bytes, which are zero by construction). Total overhead per stream is
// under 40 bits beyond the table cost of the coded symbols.
class RangeEncoder {
 public:
  void encode(u32 cum, u32 freq);
  void encode_symbol(const QuantizedCdf& cdf, int s) { encode(cdf.cum[s], cdf.freq(s)); }
  // Uniform k-ary symbol; k == 1 emits nothing.
  void encode_uniform(u32 k, u32 value);
  // Flushes the state (5 bytes) and hands the buffer over; the encoder is
  // spent afterwards.
  std::vector<u8> finish();
  std::size_t bytes_written() const { return out_.size(); }

 private:
  void normalize();
  u64 low_ = 0;
  u64 range_ = ~u64{0};
  std::vector<u8> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const u8> in);
  int decode_symbol(const QuantizedCdf& cdf);
  u32 decode_uniform(u32 k);
  // Bytes consumed so far; equals the encoder's output size after the last
  // symbol, which lets callers reject trailing or missing bytes.
  std::size_t consumed() const { return pos_; }

 private:
  u8 next_byte();
  void update(u32 cum, u32 freq);
  void normalize();
  u64 low_ = 0;
  u64 range_ = ~u64{0};
  u64 code_ = 0;
  std::span<const u8> in_;
  std::size_t pos_ = 0;
  int zeros_fed_ = 0;
};

}  // namespace mpac
