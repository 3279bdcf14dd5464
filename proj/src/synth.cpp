#include "mpac/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "mpac/morton.hpp"

namespace mpac {

namespace {

constexpr double kPi = 3.14159265358979323846;

class Rng {  // splitmix64
 public:
  explicit Rng(u64 seed) : state_(seed ? seed : 0x9E3779B97F4A7C15ull) {}
  u64 next() {
    u64 z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  double unit() { return double(next() >> 11) * 0x1.0p-53; }  // [0, 1)
  u32 below(u32 n) { return u32(next() % n); }

 private:
  u64 state_;
};

u64 coord_hash(u64 x, u64 y, u64 z, u64 seed) {
  u64 h = seed ^ 0xcbf29ce484222325ull;
  for (u64 v : {x, y, z}) {
    h ^= v + 0x9E3779B97F4A7C15ull;
    h *= 0x100000001b3ull;
    h ^= h >> 29;
  }
  return h;
}

// Value noise: trilinear interpolation of hashed lattice values.
double value_noise(double x, double y, double z, u64 seed) {
  double fx = std::floor(x), fy = std::floor(y), fz = std::floor(z);
  double tx = x - fx, ty = y - fy, tz = z - fz;
  auto lat = [&](int dx, int dy, int dz) {
    u64 h = coord_hash(u64(i64(fx) + dx), u64(i64(fy) + dy), u64(i64(fz) + dz), seed);
    return double(h >> 11) * 0x1.0p-53;
  };
  auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
  double c00 = lerp(lat(0, 0, 0), lat(1, 0, 0), tx);
  double c10 = lerp(lat(0, 1, 0), lat(1, 1, 0), tx);
  double c01 = lerp(lat(0, 0, 1), lat(1, 0, 1), tx);
  double c11 = lerp(lat(0, 1, 1), lat(1, 1, 1), tx);
  double c0 = lerp(c00, c10, ty);
  double c1 = lerp(c01, c11, ty);
  return lerp(c0, c1, tz);
}

// Triangle wave over [0, 255] with unit slope in t.
i32 tri_wave(double t) {
  double m = std::fmod(std::fabs(t), 510.0);
  double v = m <= 255.0 ? m : 510.0 - m;
  return i32(std::lround(v));
}

std::array<i32, 3> texture_color(const SynthSpec& spec, const std::array<u32, 3>& c) {
  double x = c[0], y = c[1], z = c[2];
  if (spec.texture == "gradient") {
    // smooth ramps: neighboring voxels differ by a few code values
    return {tri_wave(2.0 * x + y), tri_wave(2.0 * y + z), tri_wave(x + y + z)};
  }
  if (spec.texture == "checker") {
    u32 block = 4;
    bool on = ((c[0] / block) + (c[1] / block) + (c[2] / block)) & 1;
    return on ? std::array<i32, 3>{230, 40, 25} : std::array<i32, 3>{25, 210, 230};
  }
  if (spec.texture == "noise") {
    double s = 1.0 / 6.0;
    auto ch = [&](u64 salt) {
      return i32(std::lround(255.0 * value_noise(x * s, y * s, z * s, spec.seed ^ salt)));
    };
    return {ch(0x11), ch(0x22), ch(0x33)};
  }
  if (spec.texture == "image") {
    if (!spec.image || spec.image->width <= 0 || spec.image->height <= 0)
      throw ConfigError("synth: image texture requires an image");
    u32 side = u32(1) << spec.depth;
    int px = int(u64(c[0]) * u64(spec.image->width) / side);
    int py = int(u64(c[1]) * u64(spec.image->height) / side);
    px = std::clamp(px, 0, spec.image->width - 1);
    py = std::clamp(py, 0, spec.image->height - 1);
    std::size_t at = (std::size_t(py) * spec.image->width + px) * 3;
    return {spec.image->rgb[at], spec.image->rgb[at + 1], spec.image->rgb[at + 2]};
  }
  throw ConfigError("synth: unknown texture: " + spec.texture);
}

}  // namespace

Image read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open file: " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  auto token = [&]() -> std::string {
    while (pos < bytes.size()) {
      if (std::isspace(u8(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(u8(bytes[pos]))) ++pos;
    if (start == pos) throw CorruptStreamError("ppm " + path + ": unexpected end of file");
    return std::string(bytes.data() + start, pos - start);
  };
  std::string magic = token();
  if (magic != "P6" && magic != "P3") throw CorruptStreamError("ppm " + path + ": bad magic");
  Image img;
  try {
    img.width = std::stoi(token());
    img.height = std::stoi(token());
    int maxval = std::stoi(token());
    if (img.width <= 0 || img.height <= 0 || maxval != 255)
      throw CorruptStreamError("ppm " + path + ": unsupported dimensions or depth");
  } catch (const std::invalid_argument&) {
    throw CorruptStreamError("ppm " + path + ": malformed header");
  }
  std::size_t n = std::size_t(img.width) * img.height * 3;
  img.rgb.resize(n);
  if (magic == "P6") {
    ++pos;  // single whitespace after maxval
    if (bytes.size() - pos < n) throw CorruptStreamError("ppm " + path + ": truncated pixel data");
    std::copy_n(reinterpret_cast<const u8*>(bytes.data()) + pos, n, img.rgb.begin());
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      int v;
      try {
        v = std::stoi(token());
      } catch (const std::invalid_argument&) {
        throw CorruptStreamError("ppm " + path + ": bad pixel value");
      }
      if (v < 0 || v > 255) throw CorruptStreamError("ppm " + path + ": pixel out of range");
      img.rgb[i] = u8(v);
    }
  }
  return img;
}

SparseTensor synth_cloud(const SynthSpec& spec) {
  if (spec.depth < 2 || spec.depth > 16) throw ConfigError("synth: depth must be in [2, 16]");
  if (spec.target_points == 0) throw ConfigError("synth: need at least one point");
  Rng rng(spec.seed);
  u32 side = u32(1) << spec.depth;
  double half = side / 2.0;

  std::map<u64, std::array<u32, 3>> cells;
  auto add = [&](double x, double y, double z) {
    long lx = std::lround(x), ly = std::lround(y), lz = std::lround(z);
    if (lx < 0 || ly < 0 || lz < 0 || lx >= long(side) || ly >= long(side) || lz >= long(side))
      return;
    std::array<u32, 3> c{u32(lx), u32(ly), u32(lz)};
    cells.emplace(morton_key(c, spec.depth), c);
  };

  std::size_t budget = spec.target_points * 40 + 4096;
  if (spec.shape == "sphere") {
    double radius = half * 0.8;
    for (std::size_t it = 0; it < budget && cells.size() < spec.target_points; ++it) {
      double ct = 2.0 * rng.unit() - 1.0;
      double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
      double ph = 2.0 * kPi * rng.unit();
      add(half + radius * st * std::cos(ph), half + radius * st * std::sin(ph),
          half + radius * ct);
    }
  } else if (spec.shape == "box") {
    double lo = half * 0.25, hi = half * 1.75;
    for (std::size_t it = 0; it < budget && cells.size() < spec.target_points; ++it) {
      int face = int(rng.below(6));
      double u = lo + (hi - lo) * rng.unit();
      double v = lo + (hi - lo) * rng.unit();
      double w = (face & 1) ? hi : lo;
      switch (face / 2) {
        case 0: add(w, u, v); break;
        case 1: add(u, w, v); break;
        default: add(u, v, w); break;
      }
    }
  } else if (spec.shape == "torus") {
    double R = half * 0.6, r = half * 0.25;
    for (std::size_t it = 0; it < budget && cells.size() < spec.target_points; ++it) {
      double a = 2.0 * kPi * rng.unit();
      double b = 2.0 * kPi * rng.unit();
      double cx = (R + r * std::cos(b)) * std::cos(a);
      double cy = (R + r * std::cos(b)) * std::sin(a);
      add(half + cx, half + cy, half + r * std::sin(b));
    }
  } else if (spec.shape == "walk") {
    double px = half, py = half, pz = half;
    double vx = 1, vy = 0.3, vz = -0.5;
    for (std::size_t it = 0; it < budget && cells.size() < spec.target_points; ++it) {
      add(px, py, pz);
      vx += 0.4 * (rng.unit() - 0.5);
      vy += 0.4 * (rng.unit() - 0.5);
      vz += 0.4 * (rng.unit() - 0.5);
      double norm = std::sqrt(vx * vx + vy * vy + vz * vz);
      if (norm > 0) {
        vx /= norm;
        vy /= norm;
        vz /= norm;
      }
      px = std::clamp(px + vx, 1.0, double(side) - 2.0);
      py = std::clamp(py + vy, 1.0, double(side) - 2.0);
      pz = std::clamp(pz + vz, 1.0, double(side) - 2.0);
    }
  } else {
    throw ConfigError("synth: unknown shape: " + spec.shape);
  }
  if (cells.empty()) throw ConfigError("synth: produced no voxels");

  int channels = spec.mono ? 1 : 3;
  std::vector<std::array<u32, 3>> coords;
  std::vector<i32> attrs;
  coords.reserve(cells.size());
  for (const auto& [key, c] : cells) {
    coords.push_back(c);
    auto col = texture_color(spec, c);
    for (int ch = 0; ch < channels; ++ch) attrs.push_back(col[std::size_t(ch)]);
  }
  return SparseTensor::from_sorted(spec.depth, channels, std::move(coords), std::move(attrs));
}

}  // namespace mpac
