#pragma once

#include <array>
#include <span>
#include <vector>

#include "mpac/common.hpp"
#include "mpac/pyramid.hpp"
#include "mpac/sparse_tensor.hpp"

namespace mpac {

// Octant groups are visited in ascending octant index. Children of one cube
// all sit in distinct octants, so each group touches a cube at most once and
// everything inside a group can run in parallel.
inline constexpr std::array<int, 8> kGroupOrder{0, 1, 2, 3, 4, 5, 6, 7};

// Voxel indices of one level partitioned by octant, each ascending.
struct GroupSchedule {
  std::array<std::vector<u32>, 8> members;
  static GroupSchedule build(const SparseTensor& level);
};

// Per-cube per-channel bookkeeping while a level is being coded.
struct CubeState {
  i64 exact_sum = 0;      // k * exact parent mean
  i64 processed_sum = 0;  // sum of children already coded or inferred
  u16 k = 0;
  u16 processed_count = 0;
  int remaining() const { return int(k) - int(processed_count); }
};

// Mean of the still-unprocessed children, exact. This is the refreshed
// estimate fed to the probability model after each group completes.
inline Rational update_value(const CubeState& s) {
  if (s.remaining() <= 0) throw std::invalid_argument("update_value: no children remaining");
  return {s.exact_sum - s.processed_sum, s.remaining()};
}

// Once k-1 children are known the last one is determined; it is never coded.
inline i64 infer_last_child(const CubeState& s) {
  if (s.remaining() != 1) throw std::invalid_argument("infer_last_child: needs exactly one left");
  return s.exact_sum - s.processed_sum;
}

// Number of entropy-coded attribute symbols per channel at `level`.
// Cross-group coding infers one child per cube; without it only k=1 cubes
// are inferred.
u64 coded_symbol_count(const ScalePyramid& pyr, int level, bool cross_group);

}  // namespace mpac
