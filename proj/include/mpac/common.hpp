#pragma once

#include <cstdint>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>

namespace mpac {

using u8 = std::uint8_t;
using u16 = std::uint16_t;
using u32 = std::uint32_t;
using u64 = std::uint64_t;
using i16 = std::int16_t;
using i32 = std::int32_t;
using i64 = std::int64_t;

// Bitstream or input data is structurally invalid (bad magic, truncation,
// coder desync, malformed PLY). CLI maps this to exit code 2.
struct CorruptStreamError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller asked for something unsatisfiable (bad mode/channel combination,
// missing weights, value range overflow). CLI maps this to exit code 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A training step produced a non-finite loss; weights were left untouched.
struct TrainingDivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Floor division / floor modulo (b > 0). C++ '/' truncates toward zero,
// which is wrong for the negative sums chroma channels produce.
constexpr i64 floor_div(i64 a, i64 b) {
  i64 q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

constexpr i64 mod_floor(i64 a, i64 b) { return a - floor_div(a, b) * b; }

// round(a/b) with halves toward +infinity; exact in integers.
constexpr i64 round_half_up_div(i64 a, i64 b) { return floor_div(2 * a + b, 2 * b); }

// FNV-1a 64-bit; used for weight-file and bitstream model hashes.
constexpr u64 kFnvOffset = 0xcbf29ce484222325ull;
constexpr u64 kFnvPrime = 0x100000001b3ull;

inline u64 fnv1a64(std::span<const u8> bytes, u64 h = kFnvOffset) {
  for (u8 b : bytes) {
    h ^= b;
    h *= kFnvPrime;
  }
  return h;
}

}  // namespace mpac
