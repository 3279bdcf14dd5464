#include "mpac/grouping.hpp"

#include <stdexcept>

#include "mpac/morton.hpp"

namespace mpac {

GroupSchedule GroupSchedule::build(const SparseTensor& level) {
  GroupSchedule s;
  for (std::size_t i = 0; i < level.size(); ++i)
    s.members[octant_index(level.coord(i))].push_back(u32(i));
  return s;
}

u64 coded_symbol_count(const ScalePyramid& pyr, int level, bool cross_group) {
  if (level < 1 || level >= pyr.num_scales())
    throw std::invalid_argument("coded_symbol_count: bad level");
  const LevelCubes& link = pyr.links[level];
  u64 n = 0;
  for (const PoolCube& cube : link.cubes) {
    if (cross_group)
      n += u64(cube.k() - 1);
    else if (cube.k() > 1)
      n += u64(cube.k());
  }
  return n;
}

}  // namespace mpac
