#pragma once

#include <array>

#include "mpac/common.hpp"

namespace mpac {

// Reversible integer RGB <-> YCoCg transform (lifting form). For 8-bit RGB:
// Y in [0, 255], Co and Cg in [-255, 255]. Exactly invertible.
inline std::array<i32, 3> rgb_to_ycocg(i32 r, i32 g, i32 b) {
  i32 co = r - b;
  i32 t = b + (co >> 1);
  i32 cg = g - t;
  i32 y = t + (cg >> 1);
  return {y, co, cg};
}

inline std::array<i32, 3> ycocg_to_rgb(i32 y, i32 co, i32 cg) {
  i32 t = y - (cg >> 1);
  i32 g = cg + t;
  i32 b = t - (co >> 1);
  i32 r = b + co;
  return {r, g, b};
}

}  // namespace mpac
