#pragma once

#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "mpac/common.hpp"

namespace mpac {

// Little-endian byte buffer writer.
class ByteWriter {
 public:
  void u8v(u8 v) { buf_.push_back(v); }
  void u16v(u16 v) { put(v, 2); }
  void u32v(u32 v) { put(v, 4); }
  void u64v(u64 v) { put(v, 8); }
  void i16v(i16 v) { put(u16(v), 2); }
  void f32v(float v) {
    u32 bits;
    std::memcpy(&bits, &v, 4);
    u32v(bits);
  }
  void varint(u64 v) {  // LEB128
    while (v >= 0x80) {
      buf_.push_back(u8(v) | 0x80);
      v >>= 7;
    }
    buf_.push_back(u8(v));
  }
  void bytes(std::span<const u8> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void raw(const void* p, std::size_t n) {
    const u8* s = static_cast<const u8*>(p);
    buf_.insert(buf_.end(), s, s + n);
  }
  std::size_t size() const { return buf_.size(); }
  const std::vector<u8>& data() const { return buf_; }
  std::vector<u8> take() { return std::move(buf_); }

 private:
  void put(u64 v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(u8(v >> (8 * i)));
  }
  std::vector<u8> buf_;
};

// Little-endian byte buffer reader; any read past the end throws
// CorruptStreamError.
class ByteReader {
 public:
  explicit ByteReader(std::span<const u8> b) : buf_(b) {}
  u8 u8v() { return take(1) ? u8(acc_) : 0; }
  u16 u16v() { return take(2) ? u16(acc_) : 0; }
  u32 u32v() { return take(4) ? u32(acc_) : 0; }
  u64 u64v() { return take(8) ? acc_ : 0; }
  i16 i16v() { return i16(u16v()); }
  float f32v() {
    u32 bits = u32v();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  u64 varint() {
    u64 v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      u8 b = u8v();
      v |= u64(b & 0x7F) << shift;
      if (!(b & 0x80)) return v;
    }
    throw CorruptStreamError("varint: too long");
  }
  std::span<const u8> bytes(std::size_t n) {
    need(n);
    auto s = buf_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return buf_.size() - pos_; }
  std::size_t consumed() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw CorruptStreamError("byte reader: truncated input");
  }
  bool take(std::size_t n) {
    need(n);
    acc_ = 0;
    for (std::size_t i = 0; i < n; ++i) acc_ |= u64(buf_[pos_ + i]) << (8 * i);
    pos_ += n;
    return true;
  }
  std::span<const u8> buf_;
  std::size_t pos_ = 0;
  u64 acc_ = 0;
};

}  // namespace mpac
