#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "mpac/common.hpp"

namespace mpac {

struct Voxel {
  std::array<u32, 3> coord{};
  std::vector<i32> attrs;  // one integer per channel
};

// Immutable-after-construction set of occupied voxels with per-voxel integer
// attributes, always held in canonical (ascending Morton key) order.
class SparseTensor {
 public:
  SparseTensor() = default;
  // Sorts into canonical order; rejects duplicate coordinates, out-of-range
  // coordinates, and attribute vectors of the wrong width.
  SparseTensor(int depth, int channels, std::vector<Voxel> voxels);

  // Fast path for callers that already hold canonically ordered data
  // (pyramid pooling, decoder reconstruction). Order is verified cheaply.
  static SparseTensor from_sorted(int depth, int channels, std::vector<std::array<u32, 3>> coords,
                                  std::vector<i32> attrs);

  int depth() const { return depth_; }
  int channels() const { return channels_; }
  std::size_t size() const { return coords_.size(); }
  bool empty() const { return coords_.empty(); }

  const std::array<u32, 3>& coord(std::size_t i) const { return coords_[i]; }
  u64 key(std::size_t i) const { return keys_[i]; }
  i32 attr(std::size_t i, int c) const { return attrs_[i * channels_ + c]; }
  std::span<const i32> attrs() const { return attrs_; }
  std::span<const std::array<u32, 3>> coords() const { return coords_; }
  std::span<const u64> keys() const { return keys_; }

  // Canonical index of a coordinate, if occupied.
  std::optional<u32> find(const std::array<u32, 3>& c) const;

 private:
  int depth_ = 0;
  int channels_ = 0;
  std::vector<std::array<u32, 3>> coords_;
  std::vector<u64> keys_;
  std::vector<i32> attrs_;  // size() * channels_, row-major
};

// Neighborhood gather for an odd cubic kernel (1, 3 or 5): for each voxel,
// the occupied kernel offsets and their canonical indices, in fixed slot
// order. CSR layout: entries for voxel i live in [offsets[i], offsets[i+1]).
struct NeighborList {
  int kernel = 1;
  std::vector<u32> offsets;  // size() + 1
  std::vector<u16> slots;    // linearized kernel offset per entry
  std::vector<u32> sources;  // canonical index of the neighbor per entry
  std::size_t entry_count() const { return slots.size(); }
};

NeighborList gather_neighbors(const SparseTensor& t, int kernel);

// Linear slot index of offset (dx,dy,dz) in a kernel^3 neighborhood.
inline int kernel_slot(int kernel, int dx, int dy, int dz) {
  int r = kernel / 2;
  return ((dx + r) * kernel + (dy + r)) * kernel + (dz + r);
}

// Slot of the mirrored offset (-dx,-dy,-dz); pairs forward/backward passes.
inline int mirror_slot(int kernel, int slot) { return kernel * kernel * kernel - 1 - slot; }

}  // namespace mpac
