#pragma once

#include <string>
#include <vector>

#include "mpac/sparse_tensor.hpp"

namespace mpac {

// Simple RGB raster used as a projected texture source.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<u8> rgb;  // row-major, 3 bytes per pixel
};

// Reads PPM (P6 binary or P3 ascii, maxval 255).
Image read_ppm(const std::string& path);

// Deterministic synthetic clouds for tests and training.
//   shape:   sphere | box | torus | walk
//   texture: gradient | checker | noise | image (requires image)
struct SynthSpec {
  std::string shape = "sphere";
  std::string texture = "gradient";
  int depth = 8;
  std::size_t target_points = 2000;
  u64 seed = 1;
  bool mono = false;
  const Image* image = nullptr;
};

SparseTensor synth_cloud(const SynthSpec& spec);

}  // namespace mpac
