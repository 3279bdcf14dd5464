#include "mpac/sparse_tensor.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

#include "mpac/morton.hpp"

namespace mpac {

SparseTensor::SparseTensor(int depth, int channels, std::vector<Voxel> voxels)
    : depth_(depth), channels_(channels) {
  if (depth < 0 || depth > 16) throw std::invalid_argument("SparseTensor: depth must be in [0,16]");
  if (channels < 1) throw std::invalid_argument("SparseTensor: channels must be >= 1");

  std::vector<u64> keys(voxels.size());
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    if ((int)voxels[i].attrs.size() != channels)
      throw std::invalid_argument("SparseTensor: attribute width mismatch");
    keys[i] = morton_key(voxels[i].coord, depth);
  }

  std::vector<u32> order(voxels.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](u32 a, u32 b) { return keys[a] < keys[b]; });

  coords_.resize(voxels.size());
  keys_.resize(voxels.size());
  attrs_.resize(voxels.size() * channels);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Voxel& v = voxels[order[i]];
    coords_[i] = v.coord;
    keys_[i] = keys[order[i]];
    if (i > 0 && keys_[i] == keys_[i - 1])
      throw std::invalid_argument("SparseTensor: duplicate coordinate");
    std::copy(v.attrs.begin(), v.attrs.end(), attrs_.begin() + i * channels);
  }
}

SparseTensor SparseTensor::from_sorted(int depth, int channels,
                                       std::vector<std::array<u32, 3>> coords,
                                       std::vector<i32> attrs) {
  if (attrs.size() != coords.size() * std::size_t(channels))
    throw std::invalid_argument("SparseTensor: attribute width mismatch");
  SparseTensor t;
  t.depth_ = depth;
  t.channels_ = channels;
  t.keys_.resize(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i) {
    t.keys_[i] = morton_key(coords[i], depth);
    if (i > 0 && t.keys_[i] <= t.keys_[i - 1])
      throw std::invalid_argument("SparseTensor::from_sorted: input not strictly ascending");
  }
  t.coords_ = std::move(coords);
  t.attrs_ = std::move(attrs);
  return t;
}

std::optional<u32> SparseTensor::find(const std::array<u32, 3>& c) const {
  for (int a = 0; a < 3; ++a)
    if (depth_ < 32 && (c[a] >> depth_) != 0) return std::nullopt;
  u64 k = morton_key(c, depth_);
  auto it = std::lower_bound(keys_.begin(), keys_.end(), k);
  if (it == keys_.end() || *it != k) return std::nullopt;
  return u32(it - keys_.begin());
}

NeighborList gather_neighbors(const SparseTensor& t, int kernel) {
  if (kernel != 1 && kernel != 3 && kernel != 5)
    throw std::invalid_argument("gather_neighbors: kernel must be 1, 3 or 5");

  NeighborList nl;
  nl.kernel = kernel;
  nl.offsets.assign(t.size() + 1, 0);
  if (kernel == 1) {
    // Only the voxel itself.
    nl.slots.resize(t.size(), 0);
    nl.sources.resize(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      nl.offsets[i] = u32(i);
      nl.sources[i] = u32(i);
    }
    nl.offsets[t.size()] = u32(t.size());
    return nl;
  }

  std::unordered_map<u64, u32> index;
  index.reserve(t.size() * 2);
  for (std::size_t i = 0; i < t.size(); ++i) index.emplace(t.key(i), u32(i));

  const int r = kernel / 2;
  const i64 limit = i64(1) << t.depth();
  nl.slots.reserve(t.size() * 8);
  nl.sources.reserve(t.size() * 8);
  for (std::size_t i = 0; i < t.size(); ++i) {
    nl.offsets[i] = u32(nl.slots.size());
    const auto& c = t.coord(i);
    for (int dx = -r; dx <= r; ++dx) {
      i64 nx = i64(c[0]) + dx;
      if (nx < 0 || nx >= limit) continue;
      for (int dy = -r; dy <= r; ++dy) {
        i64 ny = i64(c[1]) + dy;
        if (ny < 0 || ny >= limit) continue;
        for (int dz = -r; dz <= r; ++dz) {
          i64 nz = i64(c[2]) + dz;
          if (nz < 0 || nz >= limit) continue;
          std::array<u32, 3> nc{u32(nx), u32(ny), u32(nz)};
          auto it = index.find(morton_key(nc, t.depth()));
          if (it == index.end()) continue;
          nl.slots.push_back(u16(kernel_slot(kernel, dx, dy, dz)));
          nl.sources.push_back(it->second);
        }
      }
    }
  }
  nl.offsets[t.size()] = u32(nl.slots.size());
  return nl;
}

}  // namespace mpac
