#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "mpac/common.hpp"

namespace mpac {

struct PlyCloud {
  std::vector<std::array<double, 3>> xyz;
  std::vector<std::array<u8, 3>> rgb;  // parallel to xyz when has_rgb
  bool has_rgb = false;
};

// Reads ascii or binary_little_endian PLY. Requires a vertex element with
// numeric x/y/z; red/green/blue uchar properties are picked up when present,
// other properties are skipped. Malformed input throws CorruptStreamError.
PlyCloud read_ply(const std::string& path);
PlyCloud parse_ply(std::span<const u8> bytes, const std::string& origin);

// Writes vertices as float x/y/z plus uchar red/green/blue.
void write_ply(const std::string& path, const PlyCloud& cloud, bool binary = true);

}  // namespace mpac
