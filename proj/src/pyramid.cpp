#include "mpac/pyramid.hpp"

#include <stdexcept>

namespace mpac {

ScalePyramid build_pyramid(const SparseTensor& top) {
  if (top.empty()) throw std::invalid_argument("build_pyramid: empty input");
  if (top.depth() < 1) throw std::invalid_argument("build_pyramid: depth must be >= 1");

  const int C = top.channels();
  const int S = top.depth() + 1;
  ScalePyramid pyr;
  pyr.levels.resize(S);
  pyr.links.resize(S);
  pyr.levels[S - 1] = top;

  for (int j = S - 1; j >= 1; --j) {
    const SparseTensor& child = pyr.levels[j];
    LevelCubes link;
    std::vector<std::array<u32, 3>> pcoords;
    std::vector<i32> pattrs;

    std::size_t i = 0;
    while (i < child.size()) {
      u64 pkey = child.key(i) >> 3;
      PoolCube cube;
      cube.child_begin = u32(i);
      while (i < child.size() && (child.key(i) >> 3) == pkey) ++i;
      cube.child_end = u32(i);

      const auto& c0 = child.coord(cube.child_begin);
      pcoords.push_back({c0[0] >> 1, c0[1] >> 1, c0[2] >> 1});
      for (int c = 0; c < C; ++c) {
        i64 sum = 0;
        for (u32 m = cube.child_begin; m < cube.child_end; ++m) sum += child.attr(m, c);
        link.sums.push_back(sum);
        pattrs.push_back(i32(quantize_mean(sum, cube.k())));
      }
      link.cubes.push_back(cube);
    }

    pyr.levels[j - 1] = SparseTensor::from_sorted(j - 1, C, std::move(pcoords), std::move(pattrs));
    pyr.links[j] = std::move(link);
  }

  if (pyr.levels[0].size() != 1)
    throw std::logic_error("build_pyramid: root level did not collapse to one voxel");
  return pyr;
}

std::vector<Rational> unpool(const ScalePyramid& pyr, int level, int channel,
                             std::span<const i64> exact_sums) {
  if (level < 1 || level >= pyr.num_scales()) throw std::invalid_argument("unpool: bad level");
  const LevelCubes& link = pyr.links[level];
  const int C = pyr.levels[level].channels();
  if (exact_sums.size() != link.cubes.size() * std::size_t(C))
    throw std::invalid_argument("unpool: exact sums do not match cube count");

  std::vector<Rational> out(pyr.levels[level].size());
  for (std::size_t j = 0; j < link.cubes.size(); ++j) {
    const PoolCube& cube = link.cubes[j];
    Rational r{exact_sums[j * C + channel], cube.k()};
    for (u32 m = cube.child_begin; m < cube.child_end; ++m) out[m] = r;
  }
  return out;
}

}  // namespace mpac
