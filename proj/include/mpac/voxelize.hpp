#pragma once

#include "mpac/ply_io.hpp"
#include "mpac/sparse_tensor.hpp"

namespace mpac {

// Maps a point cloud onto the 2^depth grid. Positions that are already
// non-negative integers inside the grid are used as-is; otherwise the cloud
// is shifted to the origin and scaled uniformly to fill the grid. Points
// landing on the same voxel are merged, averaging each attribute channel
// (ties round up). mono keeps only the red channel.
SparseTensor voxelize(const PlyCloud& cloud, int depth, bool mono = false);

}  // namespace mpac
