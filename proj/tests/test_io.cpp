#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>

#include "doctest.h"
#include "mpac/eval.hpp"
#include "mpac/ply_io.hpp"
#include "mpac/synth.hpp"
#include "mpac/voxelize.hpp"

using namespace mpac;

namespace {

std::vector<u8> to_bytes(const std::string& s) {
  return std::vector<u8>(s.begin(), s.end());
}

void append_f32(std::vector<u8>& out, float v) {
  u8 buf[4];
  std::memcpy(buf, &v, 4);
  out.insert(out.end(), buf, buf + 4);
}

void append_f64(std::vector<u8>& out, double v) {
  u8 buf[8];
  std::memcpy(buf, &v, 8);
  out.insert(out.end(), buf, buf + 8);
}

void write_file(const std::string& path, const std::vector<u8>& bytes) {
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("ascii ply with colors, comments and extra properties") {
  std::string text =
      "ply\n"
      "format ascii 1.0\n"
      "comment hand-made fixture\n"
      "element vertex 3\n"
      "property float x\n"
      "property float y\n"
      "property float z\n"
      "property uchar red\n"
      "property uchar green\n"
      "property uchar blue\n"
      "property float confidence\n"
      "end_header\n"
      "0 0 0 255 0 0 0.5\n"
      "1.5 0 2 0 255 0 0.25\n"
      "0 3 0 0 0 255 0.125\n";
  PlyCloud cloud = parse_ply(to_bytes(text), "fixture");
  REQUIRE(cloud.xyz.size() == 3);
  REQUIRE(cloud.has_rgb);
  CHECK(cloud.xyz[1] == std::array<double, 3>{1.5, 0.0, 2.0});
  CHECK(cloud.rgb[0] == std::array<u8, 3>{255, 0, 0});
  CHECK(cloud.rgb[2] == std::array<u8, 3>{0, 0, 255});
}

TEST_CASE("ascii ply without colors and with a leading element") {
  std::string text =
      "ply\n"
      "format ascii 1.0\n"
      "element camera 2\n"
      "property float focal\n"
      "element vertex 2\n"
      "property double x\n"
      "property double y\n"
      "property double z\n"
      "end_header\n"
      "1.0\n"
      "2.0\n"
      "0 0 1\n"
      "4 5 6\n";
  PlyCloud cloud = parse_ply(to_bytes(text), "fixture");
  REQUIRE(cloud.xyz.size() == 2);
  CHECK(!cloud.has_rgb);
  CHECK(cloud.xyz[0] == std::array<double, 3>{0, 0, 1});
  CHECK(cloud.xyz[1] == std::array<double, 3>{4, 5, 6});
}

TEST_CASE("binary little-endian ply with colors") {
  std::string header =
      "ply\n"
      "format binary_little_endian 1.0\n"
      "element vertex 2\n"
      "property float x\n"
      "property float y\n"
      "property float z\n"
      "property uchar red\n"
      "property uchar green\n"
      "property uchar blue\n"
      "end_header\n";
  std::vector<u8> bytes = to_bytes(header);
  append_f32(bytes, 1.0f);
  append_f32(bytes, 2.0f);
  append_f32(bytes, 3.0f);
  bytes.insert(bytes.end(), {10, 20, 30});
  append_f32(bytes, 4.0f);
  append_f32(bytes, 5.0f);
  append_f32(bytes, 6.0f);
  bytes.insert(bytes.end(), {40, 50, 60});

  PlyCloud cloud = parse_ply(bytes, "fixture");
  REQUIRE(cloud.xyz.size() == 2);
  REQUIRE(cloud.has_rgb);
  CHECK(cloud.xyz[0] == std::array<double, 3>{1, 2, 3});
  CHECK(cloud.rgb[1] == std::array<u8, 3>{40, 50, 60});
}

TEST_CASE("binary ply with double coordinates and interleaved extras") {
  std::string header =
      "ply\n"
      "format binary_little_endian 1.0\n"
      "element vertex 1\n"
      "property double x\n"
      "property int quality\n"
      "property double y\n"
      "property double z\n"
      "end_header\n";
  std::vector<u8> bytes = to_bytes(header);
  append_f64(bytes, 7.25);
  bytes.insert(bytes.end(), {1, 0, 0, 0});
  append_f64(bytes, -2.5);
  append_f64(bytes, 0.0);
  PlyCloud cloud = parse_ply(bytes, "fixture");
  REQUIRE(cloud.xyz.size() == 1);
  CHECK(cloud.xyz[0] == std::array<double, 3>{7.25, -2.5, 0.0});
}

TEST_CASE("malformed ply inputs all raise corrupt-stream errors") {
  auto bad = [](const std::string& text) {
    CHECK_THROWS_AS(parse_ply(std::vector<u8>(text.begin(), text.end()), "bad"),
                    CorruptStreamError);
  };
  bad("png\nformat ascii 1.0\nelement vertex 0\nend_header\n");
  bad("ply\nformat binary_big_endian 1.0\nelement vertex 0\n"
      "property float x\nproperty float y\nproperty float z\nend_header\n");
  bad("ply\nformat ascii 1.0\nend_header\n");  // no vertex element
  bad("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n"
      "property float y\nend_header\n1 2\n");  // missing z
  bad("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
      "property float z\nend_header\n1 2\n");  // short row
  bad("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
      "property float z\nend_header\n1 2 3\n");  // missing row
  bad("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
      "property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n"
      "end_header\n0 0 0 300 0 0\n");  // color out of range
  bad("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
      "property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n"
      "end_header\n0 0 0 1.5 0 0\n");  // fractional color
  bad("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
      "property float z\nend_header\n1 2 nope\n");  // unparsable number
  bad("ply\nformat ascii 1.0\nelement vertex 1\nproperty list uchar int vertex_indices\n"
      "property float x\nproperty float y\nproperty float z\nend_header\n0 1 2 3\n");
  bad("ply\nformat ascii 1.0\nelement face 1\nproperty list uchar int vertex_indices\n"
      "element vertex 1\nproperty float x\nproperty float y\nproperty float z\n");  // no end

  // Binary truncation: one byte short of the second vertex.
  std::string header =
      "ply\nformat binary_little_endian 1.0\nelement vertex 2\n"
      "property float x\nproperty float y\nproperty float z\nend_header\n";
  std::vector<u8> bytes = to_bytes(header);
  for (int i = 0; i < 6; ++i) append_f32(bytes, float(i));
  bytes.pop_back();
  CHECK_THROWS_AS(parse_ply(bytes, "bad"), CorruptStreamError);

  // Binary list element ahead of the vertex data cannot be skipped.
  std::string listheader =
      "ply\nformat binary_little_endian 1.0\nelement face 1\n"
      "property list uchar int vertex_indices\nelement vertex 1\n"
      "property float x\nproperty float y\nproperty float z\nend_header\n";
  std::vector<u8> lb = to_bytes(listheader);
  lb.insert(lb.end(), {1, 0, 0, 0, 0});
  append_f32(lb, 0.0f);
  append_f32(lb, 0.0f);
  append_f32(lb, 0.0f);
  CHECK_THROWS_AS(parse_ply(lb, "bad"), CorruptStreamError);
}

TEST_CASE("ply writer round trips through both formats") {
  PlyCloud cloud;
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    cloud.xyz.push_back({double(rng() % 512), double(rng() % 512), double(rng() % 512)});
    cloud.rgb.push_back({u8(rng() % 256), u8(rng() % 256), u8(rng() % 256)});
  }
  cloud.has_rgb = true;

  for (bool binary : {true, false}) {
    TempFile tmp(binary ? "io_test_bin.ply" : "io_test_ascii.ply");
    write_ply(tmp.path, cloud, binary);
    PlyCloud back = read_ply(tmp.path);
    REQUIRE(back.xyz.size() == cloud.xyz.size());
    REQUIRE(back.has_rgb);
    for (std::size_t i = 0; i < cloud.xyz.size(); ++i) {
      CHECK(back.xyz[i] == cloud.xyz[i]);  // small integers are exact in f32
      CHECK(back.rgb[i] == cloud.rgb[i]);
    }
  }
  CHECK_THROWS_AS(read_ply("does_not_exist_anywhere.ply"), ConfigError);
}

TEST_CASE("voxelize keeps on-grid points and merges duplicates") {
  PlyCloud cloud;
  cloud.xyz = {{3, 4, 5}, {0, 0, 0}, {3, 4, 5}, {7, 7, 7}};
  cloud.rgb = {{10, 100, 31}, {1, 2, 3}, {20, 101, 32}, {9, 9, 9}};
  cloud.has_rgb = true;
  SparseTensor t = voxelize(cloud, 3);
  REQUIRE(t.size() == 3);
  auto idx = t.find({3, 4, 5});
  REQUIRE(idx.has_value());
  CHECK(t.attr(*idx, 0) == 15);  // (10+20)/2
  CHECK(t.attr(*idx, 1) == 101); // 100.5 rounds up
  CHECK(t.attr(*idx, 2) == 32);  // 31.5 rounds up
  CHECK(t.find({0, 0, 0}).has_value());
  CHECK(t.find({7, 7, 7}).has_value());

  SparseTensor m = voxelize(cloud, 3, true);
  REQUIRE(m.channels() == 1);
  CHECK(m.attr(*m.find({3, 4, 5}), 0) == 15);
}

TEST_CASE("voxelize scales off-grid clouds onto the full grid") {
  PlyCloud cloud;
  cloud.xyz = {{-1.0, 0.0, 2.0}, {1.0, 0.5, 2.0}, {0.0, 0.25, 2.5}};
  cloud.rgb = {{1, 1, 1}, {2, 2, 2}, {3, 3, 3}};
  cloud.has_rgb = true;
  SparseTensor t = voxelize(cloud, 4);
  REQUIRE(t.size() == 3);
  // Largest extent (x: 2.0) maps to 15 grid steps; every axis shares the
  // scale 7.5 after shifting to its own minimum.
  CHECK(t.find({0, 0, 0}).has_value());   // (-1, 0, 2)
  CHECK(t.find({15, 4, 0}).has_value());  // (1, 0.5, 2): y 3.75 rounds to 4
  CHECK(t.find({8, 2, 4}).has_value());   // (0, 0.25, 2.5): x 7.5 rounds up

  PlyCloud colorless;
  colorless.xyz = {{0, 0, 0}};
  CHECK_THROWS_AS(voxelize(colorless, 4), ConfigError);
  CHECK_THROWS_AS(voxelize(cloud, 0), ConfigError);
  PlyCloud empty;
  empty.has_rgb = true;
  CHECK_THROWS_AS(voxelize(empty, 4), ConfigError);
}

TEST_CASE("synthetic clouds are deterministic and hit their size") {
  for (const char* shape : {"sphere", "box", "torus", "walk"}) {
    for (const char* texture : {"gradient", "checker", "noise"}) {
      SynthSpec spec;
      spec.shape = shape;
      spec.texture = texture;
      spec.depth = 6;
      spec.target_points = 1200;
      spec.seed = 11;
      SparseTensor a = synth_cloud(spec);
      SparseTensor b = synth_cloud(spec);
      CHECK(tensors_equal(a, b));
      CHECK(a.size() == 1200);
      CHECK(a.channels() == 3);
      spec.seed = 12;
      SparseTensor c = synth_cloud(spec);
      CHECK(!tensors_equal(a, c));
      spec.mono = true;
      CHECK(synth_cloud(spec).channels() == 1);
      spec.mono = false;
    }
  }
  CHECK_THROWS_AS(synth_cloud({.shape = "cube"}), ConfigError);
  CHECK_THROWS_AS(synth_cloud({.texture = "plaid"}), ConfigError);
  CHECK_THROWS_AS(synth_cloud({.texture = "image"}), ConfigError);  // image missing
  CHECK_THROWS_AS(synth_cloud({.depth = 1}), ConfigError);
  CHECK_THROWS_AS(synth_cloud({.target_points = 0}), ConfigError);
}

TEST_CASE("smooth textures pool better than hard edges") {
  // The gradient texture varies slowly, so parent means predict children
  // well; the checker texture alternates hard. Compression must reflect it.
  SynthSpec smooth{.shape = "sphere", .texture = "gradient", .depth = 6,
                   .target_points = 2000, .seed = 21};
  SynthSpec rough = smooth;
  rough.texture = "checker";
  CodecConfig cfg;
  cfg.mode = parse_mode("cs+cg+cc");
  auto es = encode(synth_cloud(smooth), cfg);
  auto er = encode(synth_cloud(rough), cfg);
  CHECK(es.stats.bpp() < er.stats.bpp());
}

TEST_CASE("ppm reader accepts both encodings and rejects damage") {
  std::vector<u8> p6 = to_bytes("P6\n# comment\n2 2\n255\n");
  for (int i = 0; i < 12; ++i) p6.push_back(u8(i * 20));
  TempFile f6("io_test.ppm");
  write_file(f6.path, p6);
  Image img = read_ppm(f6.path);
  CHECK(img.width == 2);
  CHECK(img.height == 2);
  REQUIRE(img.rgb.size() == 12);
  CHECK(img.rgb[5] == 100);

  TempFile f3("io_test_p3.ppm");
  write_file(f3.path, to_bytes("P3\n2 1\n255\n255 0 0  0 0 255\n"));
  Image img3 = read_ppm(f3.path);
  CHECK(img3.width == 2);
  CHECK(img3.height == 1);
  CHECK(img3.rgb[0] == 255);
  CHECK(img3.rgb[5] == 255);

  TempFile fbad("io_test_bad.ppm");
  write_file(fbad.path, to_bytes("P6\n2 2\n255\nshort"));
  CHECK_THROWS_AS(read_ppm(fbad.path), CorruptStreamError);
  write_file(fbad.path, to_bytes("P5\n2 2\n255\n"));
  CHECK_THROWS_AS(read_ppm(fbad.path), CorruptStreamError);
  write_file(fbad.path, to_bytes("P6\n2 2\n65535\n"));
  CHECK_THROWS_AS(read_ppm(fbad.path), CorruptStreamError);
  write_file(fbad.path, to_bytes("P3\n1 1\n255\n255 300 0\n"));
  CHECK_THROWS_AS(read_ppm(fbad.path), CorruptStreamError);
  CHECK_THROWS_AS(read_ppm("missing_image.ppm"), ConfigError);
}

TEST_CASE("image texture projects pixel colors onto the cloud") {
  Image img;
  img.width = 4;
  img.height = 4;
  img.rgb.resize(48);
  for (int i = 0; i < 48; ++i) img.rgb[i] = u8((i * 37) % 256);
  SynthSpec spec{.shape = "box", .texture = "image", .depth = 5,
                 .target_points = 600, .seed = 31, .mono = false, .image = &img};
  SparseTensor cloud = synth_cloud(spec);
  CHECK(cloud.size() == 600);
  CHECK(cloud.channels() == 3);
  // Every attribute must be a pixel byte copied from the source image.
  for (std::size_t i = 0; i < cloud.size(); ++i)
    for (int c = 0; c < 3; ++c) {
      CHECK(cloud.attr(i, c) >= 0);
      CHECK(cloud.attr(i, c) <= 255);
    }
  CodecConfig cfg;
  cfg.mode = parse_mode("cs+cg+cc");
  auto enc = encode(cloud, cfg);
  CHECK(tensors_equal(cloud, decode(enc.bytes, cfg)));
}

TEST_CASE("tensors_equal distinguishes every field") {
  std::vector<Voxel> vox{{{1, 2, 3}, {10}}, {{4, 5, 6}, {20}}};
  SparseTensor a(3, 1, vox);
  CHECK(tensors_equal(a, a));

  auto vox_attr = vox;
  vox_attr[1].attrs[0] = 21;
  CHECK(!tensors_equal(a, SparseTensor(3, 1, vox_attr)));

  auto vox_coord = vox;
  vox_coord[1].coord = {4, 5, 7};
  CHECK(!tensors_equal(a, SparseTensor(3, 1, vox_coord)));

  std::vector<Voxel> fewer{vox[0]};
  CHECK(!tensors_equal(a, SparseTensor(3, 1, fewer)));
  CHECK(!tensors_equal(a, SparseTensor(4, 1, vox)));
}
