#include "mpac/voxelize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mpac/morton.hpp"

namespace mpac {

SparseTensor voxelize(const PlyCloud& cloud, int depth, bool mono) {
  if (depth < 1 || depth > 16) throw ConfigError("voxelize: depth must be in [1, 16]");
  if (cloud.xyz.empty()) throw ConfigError("voxelize: empty cloud");
  if (!cloud.has_rgb) throw ConfigError("voxelize: cloud has no color attributes");
  int channels = mono ? 1 : 3;
  double limit = double(u32(1) << depth);

  bool on_grid = true;
  for (const auto& p : cloud.xyz) {
    for (int a = 0; a < 3; ++a) {
      if (p[a] < 0 || p[a] >= limit || p[a] != std::floor(p[a])) {
        on_grid = false;
        break;
      }
    }
    if (!on_grid) break;
  }

  std::array<double, 3> mn{}, mx{};
  double extent = 0;
  if (!on_grid) {
    for (int a = 0; a < 3; ++a) {
      mn[a] = std::numeric_limits<double>::infinity();
      mx[a] = -std::numeric_limits<double>::infinity();
    }
    for (const auto& p : cloud.xyz)
      for (int a = 0; a < 3; ++a) {
        mn[a] = std::min(mn[a], p[a]);
        mx[a] = std::max(mx[a], p[a]);
      }
    for (int a = 0; a < 3; ++a) extent = std::max(extent, mx[a] - mn[a]);
  }
  double scale = extent > 0 ? (limit - 1.0) / extent : 0.0;
  u32 max_coord = (u32(1) << depth) - 1;

  struct Cell {
    u64 key;
    std::array<u32, 3> coord;
    std::array<i64, 4> sum;  // per-channel sums + count
  };
  std::vector<std::pair<u64, u32>> keyed(cloud.xyz.size());  // key -> point index
  std::vector<std::array<u32, 3>> coords(cloud.xyz.size());
  for (std::size_t i = 0; i < cloud.xyz.size(); ++i) {
    std::array<u32, 3> c;
    for (int a = 0; a < 3; ++a) {
      double v = on_grid ? cloud.xyz[i][a] : (cloud.xyz[i][a] - mn[a]) * scale;
      long r = std::lround(v);
      c[a] = u32(std::clamp<long>(r, 0, long(max_coord)));
    }
    coords[i] = c;
    keyed[i] = {morton_key(c, depth), u32(i)};
  }
  std::sort(keyed.begin(), keyed.end());

  std::vector<std::array<u32, 3>> out_coords;
  std::vector<i32> out_attrs;
  std::size_t i = 0;
  while (i < keyed.size()) {
    std::size_t j = i;
    std::array<i64, 3> sum{0, 0, 0};
    while (j < keyed.size() && keyed[j].first == keyed[i].first) {
      const auto& rgb = cloud.rgb[keyed[j].second];
      for (int c = 0; c < 3; ++c) sum[std::size_t(c)] += rgb[std::size_t(c)];
      ++j;
    }
    i64 count = i64(j - i);
    out_coords.push_back(coords[keyed[i].second]);
    for (int c = 0; c < channels; ++c)
      out_attrs.push_back(i32(round_half_up_div(sum[std::size_t(c)], count)));
    i = j;
  }
  return SparseTensor::from_sorted(depth, channels, std::move(out_coords), std::move(out_attrs));
}

}  // namespace mpac
