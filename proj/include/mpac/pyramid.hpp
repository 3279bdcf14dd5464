#pragma once

#include <vector>

#include "mpac/common.hpp"
#include "mpac/sparse_tensor.hpp"

namespace mpac {

// Exact per-channel mean carried as an integer fraction so the
// reconstruction path never touches floating point.
struct Rational {
  i64 num = 0;
  i32 den = 1;
};

// One 2x2x2 pooling cube: parent voxel `index` at the coarser level owns the
// contiguous canonical range [child_begin, child_end) at the finer level.
struct PoolCube {
  u32 child_begin = 0;
  u32 child_end = 0;
  int k() const { return int(child_end - child_begin); }
};

// Cubes linking one finer level to its parents, in canonical parent order,
// plus the exact per-cube per-channel child sums.
struct LevelCubes {
  std::vector<PoolCube> cubes;
  std::vector<i64> sums;  // cubes.size() * channels, row-major
  i64 sum(std::size_t cube, int channels, int c) const { return sums[cube * channels + c]; }
};

// Average-pooling pyramid. levels[0] is the single-voxel root, levels back()
// the input. links[j] (j >= 1) maps levels[j] children to levels[j-1]
// parents; links[0] is empty.
struct ScalePyramid {
  std::vector<SparseTensor> levels;
  std::vector<LevelCubes> links;
  int num_scales() const { return int(levels.size()); }
};

// Quantized parent value: round-half-up of sum/k. Halves round toward
// +infinity so the value is exactly invertible from (q, sum mod k, k).
inline i64 quantize_mean(i64 sum, int k) { return round_half_up_div(sum, k); }

// Residue class transmitted per cube/channel; uniform over [0, k).
inline int pool_residue(i64 sum, int k) { return int(mod_floor(sum, k)); }
inline int residue_alphabet(int k) { return k; }

// Inverse of quantize_mean given the residue class: the rounding error
// sum - k*q lies in [-k/2, k/2), and each residue class mod k has exactly
// one representative there.
inline i64 reconstruct_sum(i64 q, int k, int residue) {
  i64 adjust = mod_floor(residue - k * q, k);  // == residue, kept explicit
  if (2 * adjust >= k) adjust -= k;
  return k * q + adjust;
}

// Pools the input down to a single root voxel. The input tensor must be
// non-empty with depth >= 1; the result has depth+1 levels.
ScalePyramid build_pyramid(const SparseTensor& top);

// Exact parent means broadcast to each child of level j (the decoder's
// initial estimate for every child). exact_sums must hold one value per
// (cube, channel) as in LevelCubes::sums.
std::vector<Rational> unpool(const ScalePyramid& pyr, int level, int channel,
                             std::span<const i64> exact_sums);

}  // namespace mpac
