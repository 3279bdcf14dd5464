#pragma once

#include <array>
#include <stdexcept>

#include "mpac/common.hpp"

namespace mpac {

// Z-order key with bit layout (x, y, z) per level, x highest:
// key bit 3i+2 = x bit i, 3i+1 = y bit i, 3i = z bit i.
// Sorting by this key is the canonical voxel order everywhere.
inline u64 morton_key(const std::array<u32, 3>& c, int depth) {
  if (depth < 0 || depth > 16) throw std::out_of_range("morton_key: depth out of range");
  u32 limit_mask = depth >= 32 ? 0xFFFFFFFFu : ~((1u << depth) - 1);
  for (int a = 0; a < 3; ++a)
    if (c[a] & limit_mask) throw std::out_of_range("morton_key: coordinate exceeds depth");
  u64 key = 0;
  for (int i = 0; i < depth; ++i) {
    key |= (u64)((c[0] >> i) & 1u) << (3 * i + 2);
    key |= (u64)((c[1] >> i) & 1u) << (3 * i + 1);
    key |= (u64)((c[2] >> i) & 1u) << (3 * i);
  }
  return key;
}

// Which child slot of its 2x2x2 parent cube a voxel occupies.
inline int octant_index(const std::array<u32, 3>& c) {
  return int(((c[0] & 1u) << 2) | ((c[1] & 1u) << 1) | (c[2] & 1u));
}

// Child coordinate from parent coordinate plus octant slot.
inline std::array<u32, 3> child_coord(const std::array<u32, 3>& parent, int octant) {
  return {(parent[0] << 1) | u32((octant >> 2) & 1), (parent[1] << 1) | u32((octant >> 1) & 1),
          (parent[2] << 1) | u32(octant & 1)};
}

}  // namespace mpac
