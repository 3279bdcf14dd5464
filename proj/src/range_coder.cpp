#include "mpac/range_coder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mpac {

namespace {
// Emit a byte only when the interval agrees on its top byte; force the
// interval below this width before every coding step so the 16-bit scaling
// keeps at least 8 bits of headroom.
constexpr u64 kAgree = u64{1} << 56;
constexpr u64 kBot = u64{1} << 24;

// Uniform k-ary split of kProbScale: the first kProbScale % k symbols get
// one extra slot. Closed form, no table needed.
inline u32 uniform_cum(u32 k, u32 s) {
  u32 q = kProbScale / k, r = kProbScale % k;
  return s * q + std::min(s, r);
}

// The interval straddles a block boundary it cannot emit across; keep the
// larger side. Both coder halves apply this identically, so they stay in
// lockstep without any side channel.
inline void truncate_interval(u64& low, u64& range) {
  u64 cap = (u64{0} - low) & (kBot - 1);
  if (range - cap > cap) {
    low += cap;
    range -= cap;
  } else {
    range = cap;
  }
}
}  // namespace

u32 uniform_freq(u32 k, u32 s) { return kProbScale / k + (s < kProbScale % k ? 1 : 0); }

double QuantizedCdf::cost_bits(int s) const {
  return double(kProbBits) - std::log2(double(freq(s)));
}

QuantizedCdf quantize_cdf(std::span<const double> p) {
  const std::size_t n = p.size();
  if (n < 1 || n > kProbScale) throw std::invalid_argument("quantize_cdf: bad alphabet size");

  std::vector<u32> f(n);
  std::vector<double> rem(n);
  i64 total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double ideal = p[i] * double(kProbScale);
    if (!std::isfinite(ideal) || ideal < 0)
      throw std::invalid_argument("quantize_cdf: bad probability");
    double fl = std::floor(ideal);
    if (fl > double(kProbScale)) fl = double(kProbScale);
    f[i] = std::max<u32>(1, u32(fl));
    rem[i] = ideal - fl;
    total += f[i];
  }

  i64 delta = i64(kProbScale) - total;
  if (delta != 0) {
    std::vector<u32> order(n);
    std::iota(order.begin(), order.end(), 0u);
    if (delta > 0) {
      // Hand out the deficit, largest fractional remainders first.
      u32 each = u32(delta / i64(n));
      if (each) {
        for (auto& v : f) v += each;
        delta -= i64(each) * i64(n);
      }
      std::sort(order.begin(), order.end(), [&](u32 a, u32 b) {
        if (rem[a] != rem[b]) return rem[a] > rem[b];
        return a < b;
      });
      for (i64 i = 0; i < delta; ++i) f[order[i]] += 1;
    } else {
      // Take the surplus back, smallest remainders first, never below 1.
      std::sort(order.begin(), order.end(), [&](u32 a, u32 b) {
        if (rem[a] != rem[b]) return rem[a] < rem[b];
        return a < b;
      });
      i64 need = -delta;
      while (need > 0) {
        bool moved = false;
        for (u32 idx : order) {
          if (need == 0) break;
          if (f[idx] > 1) {
            i64 take = std::min<i64>(need, f[idx] - 1);
            f[idx] -= u32(take);
            need -= take;
            moved = true;
          }
        }
        if (!moved) throw std::invalid_argument("quantize_cdf: cannot fit alphabet");
      }
    }
  }

  QuantizedCdf cdf;
  cdf.cum.resize(n + 1);
  cdf.cum[0] = 0;
  for (std::size_t i = 0; i < n; ++i) cdf.cum[i + 1] = cdf.cum[i] + f[i];
  return cdf;
}

void RangeEncoder::normalize() {
  while ((low_ ^ (low_ + range_)) < kAgree ||
         (range_ < kBot && (truncate_interval(low_, range_), true))) {
    out_.push_back(u8(low_ >> 56));
    low_ <<= 8;
    range_ <<= 8;
  }
}

void RangeEncoder::encode(u32 cum, u32 freq) {
  range_ >>= kProbBits;
  low_ += cum * range_;
  range_ *= freq;
  normalize();
}

void RangeEncoder::encode_uniform(u32 k, u32 value) {
  if (k == 0 || value >= k) throw std::invalid_argument("encode_uniform: value out of range");
  if (k == 1) return;
  encode(uniform_cum(k, value), uniform_freq(k, value));
}

std::vector<u8> RangeEncoder::finish() {
  // normalize() leaves range_ >= 2^24, so the interval contains a multiple
  // of 2^24; picking it zeroes the low 24 bits, which the decoder supplies
  // itself. Only the top 40 bits need to be written.
  u64 v = low_ + ((u64{0} - low_) & (kBot - 1));
  for (int i = 0; i < 5; ++i) {
    out_.push_back(u8(v >> 56));
    v <<= 8;
  }
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const u8> in) : in_(in) {
  if (in_.size() < 5) throw CorruptStreamError("range decoder: truncated stream");
  for (int i = 0; i < 8; ++i) code_ = (code_ << 8) | next_byte();
}

u8 RangeDecoder::next_byte() {
  if (pos_ < in_.size()) return in_[pos_++];
  // The flush writes only the top 40 bits of the final 2^24-aligned value;
  // its last three bytes are zero and omitted. Needing a fourth means the
  // stream lost real bytes.
  if (++zeros_fed_ > 3) throw CorruptStreamError("range decoder: truncated stream");
  return 0;
}

void RangeDecoder::normalize() {
  while ((low_ ^ (low_ + range_)) < kAgree ||
         (range_ < kBot && (truncate_interval(low_, range_), true))) {
    code_ = (code_ << 8) | next_byte();
    low_ <<= 8;
    range_ <<= 8;
  }
}

void RangeDecoder::update(u32 cum, u32 freq) {
  low_ += cum * range_;  // range_ already holds range >> kProbBits here
  range_ *= freq;
  normalize();
}

int RangeDecoder::decode_symbol(const QuantizedCdf& cdf) {
  range_ >>= kProbBits;
  u64 target = (code_ - low_) / range_;
  if (target >= kProbScale) target = kProbScale - 1;
  auto it = std::upper_bound(cdf.cum.begin(), cdf.cum.end(), u32(target));
  int s = int(it - cdf.cum.begin()) - 1;
  update(cdf.cum[s], cdf.freq(s));
  return s;
}

u32 RangeDecoder::decode_uniform(u32 k) {
  if (k == 0) throw std::invalid_argument("decode_uniform: k must be positive");
  if (k == 1) return 0;
  range_ >>= kProbBits;
  u64 wide = (code_ - low_) / range_;
  u32 target = wide >= kProbScale ? kProbScale - 1 : u32(wide);
  u32 q = kProbScale / k, r = kProbScale % k;
  u32 s;
  if (target < r * (q + 1))
    s = target / (q + 1);
  else
    s = r + (target - r * (q + 1)) / q;
  update(uniform_cum(k, s), uniform_freq(k, s));
  return s;
}

}  // namespace mpac
