#include "mpac/laplace.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mpac {

namespace {

constexpr double kLn2 = 0.6931471805599453;

// Raw (unfloored) cell masses and optional derivatives. Interior cells are
// filled by geometric recurrences anchored next to mu, so the whole alphabet
// costs a handful of exp() calls; boundary cells fold in the tails.
void raw_cells(double mu, double b, i32 lo, i32 hi, double* p, double* dmu, double* db) {
  const int n = hi - lo + 1;
  const double inv_b = 1.0 / b;
  const double inv_b2 = inv_b * inv_b;
  const double d = std::exp(-inv_b);
  const double one_minus_d = -std::expm1(-inv_b);
  const double g1 = d * inv_b2 / one_minus_d;  // d(ln(1-d))/db, negated

  // Cells fully left of mu are 0..il, fully right are ir..n-1.
  double fl = std::floor(mu - 0.5) - double(lo);
  double fr = std::ceil(mu + 0.5) - double(lo);
  i64 il = fl < -1.0 ? -1 : (fl > double(n - 1) ? n - 1 : i64(fl));
  i64 ir = fr < 0.0 ? 0 : (fr > double(n) ? n : i64(fr));

  if (il >= 0) {
    double x = double(lo + il);
    double pl = 0.5 * one_minus_d * std::exp((x + 0.5 - mu) * inv_b);
    for (i64 i = il; i >= 0; --i, x -= 1.0) {
      p[i] = pl;
      if (dmu) {
        dmu[i] = -pl * inv_b;
        db[i] = pl * ((mu - x - 0.5) * inv_b2 - g1);
      }
      pl *= d;
    }
  }
  if (ir <= n - 1) {
    double x = double(lo + ir);
    double pr = 0.5 * one_minus_d * std::exp(-(x - 0.5 - mu) * inv_b);
    for (i64 i = ir; i <= n - 1; ++i, x += 1.0) {
      p[i] = pr;
      if (dmu) {
        dmu[i] = pr * inv_b;
        db[i] = pr * ((x - 0.5 - mu) * inv_b2 - g1);
      }
      pr *= d;
    }
  }
  for (i64 i = std::max<i64>(0, il + 1); i < std::min<i64>(n, ir); ++i) {
    // Cell straddling mu.
    double x = double(lo) + double(i);
    double al = mu - (x - 0.5), ar = (x + 0.5) - mu;
    double el = std::exp(-al * inv_b), er = std::exp(-ar * inv_b);
    p[i] = 1.0 - 0.5 * (el + er);
    if (dmu) {
      dmu[i] = 0.5 * inv_b * (el - er);
      db[i] = -0.5 * inv_b2 * (al * el + ar * er);
    }
  }

  // Boundary folds override whatever the runs produced there.
  {
    double a = double(lo) + 0.5 - mu;  // left tail: p = CDF(lo + 1/2)
    if (a < 0) {
      double e = 0.5 * std::exp(a * inv_b);
      p[0] = e;
      if (dmu) {
        dmu[0] = -e * inv_b;
        db[0] = -e * a * inv_b2;
      }
    } else {
      double e = 0.5 * std::exp(-a * inv_b);
      p[0] = 1.0 - e;
      if (dmu) {
        dmu[0] = -e * inv_b;
        db[0] = -e * a * inv_b2;
      }
    }
  }
  if (n > 1) {
    double a = mu - (double(hi) - 0.5);  // right tail: p = 1 - CDF(hi - 1/2)
    if (a < 0) {
      double e = 0.5 * std::exp(a * inv_b);
      p[n - 1] = e;
      if (dmu) {
        dmu[n - 1] = e * inv_b;
        db[n - 1] = -e * a * inv_b2;
      }
    } else {
      double e = 0.5 * std::exp(-a * inv_b);
      p[n - 1] = 1.0 - e;
      if (dmu) {
        dmu[n - 1] = e * inv_b;
        db[n - 1] = -e * a * inv_b2;
      }
    }
  }
}

void check_args(double mu, double b, i32 lo, i32 hi) {
  if (!(hi >= lo)) throw std::invalid_argument("laplace: hi must be >= lo");
  if (!std::isfinite(mu) || !std::isfinite(b) || b < kMinScaleB)
    throw std::invalid_argument("laplace: bad distribution parameters");
}

thread_local std::vector<double> tl_scratch;

}  // namespace

void laplace_pmf(double mu, double b, i32 lo, i32 hi, std::span<double> out) {
  check_args(mu, b, lo, hi);
  const std::size_t n = std::size_t(hi - lo + 1);
  if (out.size() != n) throw std::invalid_argument("laplace_pmf: wrong output size");
  if (n == 1) {
    out[0] = 1.0;
    return;
  }
  raw_cells(mu, b, lo, hi, out.data(), nullptr, nullptr);
  double z = 0.0;
  for (double& v : out) {
    v = std::max(v, kMinProb);
    z += v;
  }
  for (double& v : out) v /= z;
}

double laplace_prob(double mu, double b, i32 x, i32 lo, i32 hi) {
  if (x < lo || x > hi) throw std::invalid_argument("laplace_prob: symbol outside alphabet");
  tl_scratch.resize(std::size_t(hi - lo + 1));
  laplace_pmf(mu, b, lo, hi, tl_scratch);
  return tl_scratch[std::size_t(x - lo)];
}

double laplace_nll_bits(double mu, double b, i32 x, i32 lo, i32 hi, double* dmu, double* db) {
  check_args(mu, b, lo, hi);
  if (x < lo || x > hi) throw std::invalid_argument("laplace_nll_bits: symbol outside alphabet");
  const int n = hi - lo + 1;
  if (n == 1) {
    if (dmu) *dmu = 0.0;
    if (db) *db = 0.0;
    return 0.0;
  }
  const bool grads = dmu != nullptr;
  tl_scratch.resize(std::size_t(n) * (grads ? 3 : 1));
  double* p = tl_scratch.data();
  double* pm = grads ? p + n : nullptr;
  double* pb = grads ? pm + n : nullptr;
  raw_cells(mu, b, lo, hi, p, pm, pb);

  double z = 0.0, zm = 0.0, zb = 0.0;
  for (int i = 0; i < n; ++i) {
    if (p[i] > kMinProb) {
      z += p[i];
      if (grads) {
        zm += pm[i];
        zb += pb[i];
      }
    } else {
      z += kMinProb;  // floored cells contribute no gradient
    }
  }
  const int s = x - lo;
  const bool clipped = !(p[s] > kMinProb);
  const double ps = clipped ? kMinProb : p[s];
  if (grads) {
    double gm = zm / z - (clipped ? 0.0 : pm[s] / ps);
    double gb = zb / z - (clipped ? 0.0 : pb[s] / ps);
    *dmu = gm / kLn2;
    *db = gb / kLn2;
  }
  return (std::log(z) - std::log(ps)) / kLn2;
}

double estimate_bits(std::span<const LaplaceParams> params, std::span<const i32> values, i32 lo,
                     i32 hi) {
  if (params.size() != values.size()) throw std::invalid_argument("estimate_bits: size mismatch");
  double bits = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i)
    bits += laplace_nll_bits(params[i].mu, params[i].b, values[i], lo, hi);
  return bits;
}

}  // namespace mpac
