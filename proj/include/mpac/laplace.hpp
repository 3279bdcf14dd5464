#pragma once

#include <span>
#include <vector>

#include "mpac/common.hpp"

namespace mpac {

// Probability floor per symbol and lower bound on the Laplace scale.
inline constexpr double kMinProb = 1.0 / 65536.0;
inline constexpr double kMinScaleB = 0.01;

struct LaplaceParams {
  double mu = 0.0;
  double b = 1.0;
};

// Per-voxel predicted distributions for one channel.
using LaplaceField = std::vector<LaplaceParams>;

// Discrete Laplace pmf over the integer alphabet [lo, hi]: each symbol x
// gets CDF(x+1/2) - CDF(x-1/2), the two tails are folded into lo and hi,
// every entry is floored at kMinProb, and the vector is renormalized.
// out.size() must be hi - lo + 1.
void laplace_pmf(double mu, double b, i32 lo, i32 hi, std::span<double> out);

// Single-symbol convenience wrapper over laplace_pmf.
double laplace_prob(double mu, double b, i32 x, i32 lo, i32 hi);

// -log2 of the (floored, renormalized) probability of x, with optional
// exact partial derivatives wrt mu and b. This is the per-symbol training
// loss and also what the encoder charges as its model estimate.
double laplace_nll_bits(double mu, double b, i32 x, i32 lo, i32 hi, double* dmu = nullptr,
                        double* db = nullptr);

// Total model bits for a batch of symbols under per-symbol parameters.
double estimate_bits(std::span<const LaplaceParams> params, std::span<const i32> values, i32 lo,
                     i32 hi);

}  // namespace mpac
