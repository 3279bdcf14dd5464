#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>
#include <set>

#include "doctest.h"
#include "mpac/codec.hpp"
#include "mpac/eval.hpp"
#include "mpac/grouping.hpp"
#include "mpac/pyramid.hpp"
#include "mpac/synth.hpp"

using namespace mpac;

namespace {

SparseTensor random_cloud(int depth, std::size_t n, int channels, u64 seed, i32 lo = 0,
                          i32 hi = 255) {
  std::mt19937_64 rng(seed);
  u32 limit = 1u << depth;
  std::set<std::array<u32, 3>> used;
  std::vector<Voxel> out;
  while (out.size() < n) {
    std::array<u32, 3> c{u32(rng() % limit), u32(rng() % limit), u32(rng() % limit)};
    if (!used.insert(c).second) continue;
    Voxel v;
    v.coord = c;
    for (int ch = 0; ch < channels; ++ch)
      v.attrs.push_back(lo + i32(rng() % u64(hi - lo + 1)));
    out.push_back(std::move(v));
  }
  return SparseTensor(depth, channels, std::move(out));
}

void require_equal(const SparseTensor& a, const SparseTensor& b) {
  REQUIRE(tensors_equal(a, b));
}

}  // namespace

TEST_CASE("mode strings parse and print") {
  CHECK(!parse_mode("cs").cross_group);
  CHECK(!parse_mode("cs").cross_color);
  CHECK(parse_mode("cs+cg").cross_group);
  CHECK(!parse_mode("cs+cg").cross_color);
  CHECK(parse_mode("cs+cc").cross_color);
  CHECK(parse_mode("cs+cg+cc").cross_group);
  CHECK(parse_mode("cs+cg+cc").cross_color);
  CHECK(parse_mode("cs+cg+cc+seq").cc_sequential);
  CHECK(mode_name(parse_mode("cs+cg+cc+seq")) == "cs+cg+cc+seq");
  CHECK(mode_name(parse_mode("cs")) == "cs");
  CHECK(mode_name(parse_mode("cs+cc")) == "cs+cc");

  CHECK_THROWS_AS(parse_mode(""), ConfigError);
  CHECK_THROWS_AS(parse_mode("cg"), ConfigError);
  CHECK_THROWS_AS(parse_mode("cs+xx"), ConfigError);
  CHECK_THROWS_AS(parse_mode("cs+seq"), ConfigError);      // seq needs cc
  CHECK_THROWS_AS(parse_mode("cs+cg+seq"), ConfigError);   // still no cc
  CHECK_THROWS_AS(parse_mode("cs+cg+cc+"), ConfigError);
}

TEST_CASE("round trip across modes, channel counts and shapes") {
  std::vector<SparseTensor> clouds;
  clouds.push_back(random_cloud(6, 2000, 3, 1));
  clouds.push_back(random_cloud(4, 150, 1, 2));
  clouds.push_back(synth_cloud({.shape = "torus", .texture = "checker", .depth = 6,
                                .target_points = 1500, .seed = 3}));
  clouds.push_back(synth_cloud({.shape = "walk", .texture = "noise", .depth = 7,
                                .target_points = 900, .seed = 4, .mono = true}));

  for (const auto& cloud : clouds) {
    std::vector<std::string> modes = {"cs", "cs+cg"};
    if (cloud.channels() == 3) {
      modes.push_back("cs+cc");
      modes.push_back("cs+cg+cc");
      modes.push_back("cs+cg+cc+seq");
    }
    for (const auto& m : modes) {
      CodecConfig cfg;
      cfg.mode = parse_mode(m);
      cfg.threads = 2;
      auto enc = encode(cloud, cfg);
      CHECK(enc.stats.total_bytes == enc.bytes.size());
      CHECK(enc.stats.points == cloud.size());
      require_equal(cloud, decode(enc.bytes, cfg));
    }
  }
}

TEST_CASE("tiny clouds: one and two voxels") {
  std::vector<Voxel> one{{{3, 1, 2}, {200, 0, 255}}};
  SparseTensor t1(2, 3, one);
  CodecConfig cfg;
  cfg.mode = parse_mode("cs+cg+cc");
  auto enc = encode(t1, cfg);
  require_equal(t1, decode(enc.bytes, cfg));
  // A single voxel needs no coded attribute symbols at all: the root carries
  // the values and every level has one k=1 cube.
  CHECK(enc.stats.attr_payload_bits() == 0);

  std::vector<Voxel> two{{{0, 0, 0}, {1}}, {{1, 1, 1}, {2}}};
  SparseTensor t2(1, 1, two);
  for (const char* m : {"cs", "cs+cg"}) {
    cfg.mode = parse_mode(m);
    auto e2 = encode(t2, cfg);
    require_equal(t2, decode(e2.bytes, cfg));
  }
}

TEST_CASE("constant channels ride in the header for free") {
  auto coords_src = random_cloud(5, 700, 1, 9);
  std::vector<Voxel> vox;
  for (std::size_t i = 0; i < coords_src.size(); ++i)
    vox.push_back({coords_src.coord(i), {77, 77, 77}});
  SparseTensor cloud(5, 3, std::move(vox));
  CodecConfig cfg;
  cfg.mode = parse_mode("cs+cg+cc");
  auto enc = encode(cloud, cfg);
  CHECK(enc.stats.streams.empty());
  CHECK(enc.stats.attr_payload_bits() == 0);
  CHECK(enc.stats.attr_bits() == enc.stats.root_bits);
  require_equal(cloud, decode(enc.bytes, cfg));
}

TEST_CASE("mixed constant and varying channels") {
  auto coords_src = random_cloud(4, 300, 1, 10);
  std::vector<Voxel> vox;
  std::mt19937_64 rng(11);
  for (std::size_t i = 0; i < coords_src.size(); ++i)
    vox.push_back({coords_src.coord(i), {i32(rng() % 256), 120, i32(rng() % 256)}});
  SparseTensor cloud(4, 3, std::move(vox));
  for (const char* m : {"cs", "cs+cg", "cs+cg+cc", "cs+cg+cc+seq"}) {
    CodecConfig cfg;
    cfg.mode = parse_mode(m);
    auto enc = encode(cloud, cfg);
    require_equal(cloud, decode(enc.bytes, cfg));
  }
}

TEST_CASE("extreme attribute values survive the color transform") {
  std::vector<Voxel> vox{{{0, 0, 0}, {0, 0, 0}},    {{7, 7, 7}, {255, 255, 255}},
                         {{1, 2, 3}, {255, 0, 0}},  {{3, 2, 1}, {0, 255, 0}},
                         {{5, 5, 5}, {0, 0, 255}},  {{6, 1, 4}, {255, 0, 255}},
                         {{2, 6, 3}, {0, 255, 255}}, {{4, 4, 2}, {255, 255, 0}}};
  SparseTensor cloud(3, 3, std::move(vox));
  for (const char* m : {"cs", "cs+cg+cc", "cs+cg+cc+seq"}) {
    CodecConfig cfg;
    cfg.mode = parse_mode(m);
    auto enc = encode(cloud, cfg);
    require_equal(cloud, decode(enc.bytes, cfg));
  }
}

TEST_CASE("symbol accounting per scale and per channel") {
  auto cloud = random_cloud(5, 900, 3, 12);
  auto pyr = build_pyramid(cloud);

  for (bool cg : {false, true}) {
    CodecConfig cfg;
    cfg.mode = parse_mode(cg ? "cs+cg" : "cs");
    auto enc = encode(cloud, cfg);
    // Tally coded attribute symbols per level from the stream report.
    std::vector<u64> coded(pyr.num_scales(), 0);
    for (const auto& st : enc.stats.streams) {
      if (st.name.find("residue") != std::string::npos) continue;
      int level = std::stoi(st.name.substr(1, st.name.find('.') - 1));
      coded[level] += st.symbols;
    }
    for (int j = 1; j < pyr.num_scales(); ++j)
      CHECK(coded[j] == 3 * coded_symbol_count(pyr, j, cg));
  }
}

TEST_CASE("payload length brackets the probability-model estimate") {
  for (u64 seed : {20ull, 21ull}) {
    auto cloud = random_cloud(5, 800, 3, seed);
    CodecConfig cfg;
    cfg.mode = parse_mode("cs+cg+cc");
    auto enc = encode(cloud, cfg);
    double est_quant = 0, actual = 0;
    for (const auto& st : enc.stats.streams) {
      est_quant += st.est_quant_bits + 8.0;  // end marker is a coded symbol
      actual += double(st.payload_bytes) * 8.0;
      // Per stream: quantized table cost + 8-bit end marker + 32-bit flush
      // + byte rounding + per-symbol interval truncation bound the length,
      // and the payload can never beat its own coding tables.
      double hi = st.est_quant_bits + 8.0 + 40.0 + 0.0057 * double(st.symbols);
      CHECK(double(st.payload_bytes) * 8.0 <= hi);
      CHECK(double(st.payload_bytes) * 8.0 >= st.est_quant_bits + 8.0);
    }
    CHECK(actual <= est_quant + 40.0 * double(enc.stats.streams.size()));
    CHECK(actual >= est_quant);
    CHECK(actual == double(enc.stats.attr_payload_bits()));
  }
}

TEST_CASE("encode rejects unusable inputs") {
  CodecConfig cfg;
  cfg.mode = parse_mode("cs+cg");
  SparseTensor empty;
  CHECK_THROWS_AS(encode(empty, cfg), ConfigError);

  auto two_ch = random_cloud(3, 20, 2, 30);
  CHECK_THROWS_AS(encode(two_ch, cfg), ConfigError);

  std::vector<Voxel> root_only{{{0, 0, 0}, {5}}};
  SparseTensor depth0(0, 1, root_only);
  CHECK_THROWS_AS(encode(depth0, cfg), ConfigError);

  auto fine = random_cloud(3, 20, 1, 31);
  cfg.threads = 0;
  CHECK_THROWS_AS(encode(fine, cfg), ConfigError);
  cfg.threads = 1;

  // Values whose transform falls outside the coded alphabet.
  std::vector<Voxel> huge{{{0, 0, 0}, {30000}}, {{1, 1, 1}, {-30000}}};
  SparseTensor wide(1, 1, huge);
  CHECK_THROWS_AS(encode(wide, cfg), ConfigError);
}

TEST_CASE("decoder rejects truncation at every length") {
  auto cloud = random_cloud(4, 250, 3, 40);
  CodecConfig cfg;
  cfg.mode = parse_mode("cs+cg+cc");
  auto enc = encode(cloud, cfg);
  for (std::size_t len = 0; len < enc.bytes.size(); ++len) {
    std::span<const u8> cut(enc.bytes.data(), len);
    CHECK_THROWS_AS(decode(cut, cfg), CorruptStreamError);
  }
  // Trailing garbage is just as fatal.
  auto padded = enc.bytes;
  padded.push_back(0);
  CHECK_THROWS_AS(decode(padded, cfg), CorruptStreamError);
}

TEST_CASE("every flipped byte is rejected via the container checksum") {
  auto cloud = random_cloud(4, 300, 1, 41);
  CodecConfig cfg;
  cfg.mode = parse_mode("cs+cg");
  auto enc = encode(cloud, cfg);
  std::mt19937_64 rng(42);
  int detected = 0;
  for (int it = 0; it < 60; ++it) {
    auto bad = enc.bytes;
    bad[rng() % bad.size()] ^= u8(1 + rng() % 255);
    try {
      decode(bad, cfg);
    } catch (const CorruptStreamError&) {
      ++detected;
    }
  }
  CHECK(detected == 60);
  // Deterministic sweep over every byte position with a fixed flip.
  for (std::size_t pos = 0; pos < enc.bytes.size(); pos += 7) {
    auto bad = enc.bytes;
    bad[pos] ^= 0x40;
    CHECK_THROWS_AS(decode(bad, cfg), CorruptStreamError);
  }
}

TEST_CASE("decode refuses a mismatched probability model") {
  auto cloud = random_cloud(4, 200, 3, 50);
  CodecConfig fall2;
  fall2.mode = parse_mode("cs+cg+cc");
  fall2.fallback_b0 = 2.0;
  auto enc = encode(cloud, fall2);

  CodecConfig fall25 = fall2;
  fall25.fallback_b0 = 2.5;
  CHECK_THROWS_AS(decode(enc.bytes, fall25), ConfigError);

  ProbNet net = ProbNet::make_default(60, 2.0);
  CodecConfig with_net = fall2;
  with_net.net = &net;
  CHECK_THROWS_AS(decode(enc.bytes, with_net), ConfigError);

  auto enc_net = encode(cloud, with_net);
  CHECK_THROWS_AS(decode(enc_net.bytes, fall2), ConfigError);
  require_equal(cloud, decode(enc_net.bytes, with_net));
}

TEST_CASE("bitstream inspection reports the header fields") {
  auto cloud = random_cloud(5, 600, 3, 51);
  CodecConfig cfg;
  cfg.mode = parse_mode("cs+cg+cc+seq");
  cfg.fallback_b0 = 2.0;
  auto enc = encode(cloud, cfg);
  BitstreamInfo info = inspect(enc.bytes);
  CHECK(info.version == 1);
  CHECK(info.channels == 3);
  CHECK(info.colorspace == 1);
  CHECK(info.scales == 6);
  CHECK(info.mode.cross_group);
  CHECK(info.mode.cross_color);
  CHECK(info.mode.cc_sequential);
  CHECK(info.model_hash == fallback_model_tag(2.0));
  REQUIRE(info.counts.size() == 6);
  CHECK(info.counts.front() == 1);
  CHECK(info.counts.back() == cloud.size());
  for (std::size_t j = 1; j < info.counts.size(); ++j) {
    CHECK(info.counts[j] >= info.counts[j - 1]);
    CHECK(info.counts[j] <= 8 * info.counts[j - 1]);
  }
  REQUIRE(info.ranges.size() == 3);
  CHECK(info.ranges[0][0] <= info.ranges[0][1]);
}

TEST_CASE("color conditioning asks for nothing on single-channel input") {
  auto mono = random_cloud(4, 200, 1, 52);
  CodecConfig cfg;
  cfg.mode = parse_mode("cs+cg+cc+seq");
  auto enc = encode(mono, cfg);
  BitstreamInfo info = inspect(enc.bytes);
  CHECK(info.colorspace == 0);
  CHECK(!info.mode.cross_color);
  CHECK(!info.mode.cc_sequential);
  require_equal(mono, decode(enc.bytes, cfg));
}

TEST_CASE("identical bitstreams regardless of the thread count") {
  auto cloud = synth_cloud({.shape = "sphere", .texture = "noise", .depth = 6,
                            .target_points = 1800, .seed = 53});
  const ProbNet net = ProbNet::make_default(61, 2.0);
  for (const ProbNet* model : {static_cast<const ProbNet*>(nullptr), &net}) {
    CodecConfig a;
    a.mode = parse_mode("cs+cg+cc");
    a.net = model;
    CodecConfig b = a;
    a.threads = 1;
    b.threads = 4;
    auto ea = encode(cloud, a);
    auto eb = encode(cloud, b);
    CHECK(ea.bytes == eb.bytes);
    require_equal(cloud, decode(ea.bytes, b));
  }
}

TEST_CASE("evaluation helper reports lossless rows and csv") {
  auto cloud = synth_cloud({.shape = "box", .texture = "gradient", .depth = 5,
                            .target_points = 700, .seed = 54});
  CodecConfig cfg;
  cfg.mode = parse_mode("cs+cg");
  EvalRow row = evaluate_cloud("box", cloud, cfg);
  CHECK(row.lossless);
  CHECK(row.points == cloud.size());
  CHECK(row.bpp > 0.0);
  EvalReport report;
  report.rows.push_back(row);
  CHECK(report.all_lossless());
  std::string csv = format_csv(report);
  CHECK(csv.substr(0, csv.find('\n')) ==
        "cloud,mode,points,attr_bits,bpp,geom_bits,enc_ms,dec_ms");
  CHECK(csv.find("box,cs+cg,700,") != std::string::npos);
}

TEST_CASE("training sample capture matches the coded symbol counts") {
  auto cloud = random_cloud(4, 400, 3, 55);
  auto pyr = build_pyramid(cloud);
  CodecConfig cfg;
  cfg.mode = parse_mode("cs+cg+cc");
  TrainBatch batch = collect_training_samples(cloud, cfg);
  REQUIRE(!batch.nbrs.empty());

  std::vector<u64> covered(pyr.num_scales(), 0);
  for (const auto& s : batch.samples) {
    covered[s.level] += s.coded_rows.size();
    REQUIRE(s.level_id < batch.nbrs.size());
    CHECK(s.feats.rows() == pyr.levels[s.level].size());
  }
  for (int j = 1; j < pyr.num_scales(); ++j)
    CHECK(covered[j] == 3 * coded_symbol_count(pyr, j, true));
}
