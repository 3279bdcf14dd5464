#include "mpac/codec.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>
#include <sstream>

#include "mpac/bytes.hpp"
#include "mpac/grouping.hpp"
#include "mpac/laplace.hpp"
#include "mpac/morton.hpp"
#include "mpac/pyramid.hpp"
#include "mpac/range_coder.hpp"
#include "mpac/threading.hpp"
#include "mpac/ycocg.hpp"

namespace mpac {

namespace {

constexpr u8 kVersion = 1;
constexpr u8 kSentinel = 0xA5;
constexpr std::size_t kCdfChunk = 2048;
constexpr int kMaxAlphabet = 4096;

// Reflected CRC-32 (polynomial 0xEDB88320); a trailer over the whole
// container makes any byte flip or truncation detectable.
u32 crc32(std::span<const u8> data) {
  static const auto table = [] {
    std::array<u32, 256> t{};
    for (u32 i = 0; i < 256; ++i) {
      u32 c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  u32 c = 0xFFFFFFFFu;
  for (u8 b : data) c = table[(c ^ b) & 0xFFu] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

// Strips and verifies the 4-byte trailer, returning the container body.
std::span<const u8> checked_body(std::span<const u8> bytes) {
  if (bytes.size() < 5) throw CorruptStreamError("bitstream: truncated");
  std::span<const u8> body = bytes.first(bytes.size() - 4);
  const u8* t = bytes.data() + body.size();
  u32 stored = u32(t[0]) | u32(t[1]) << 8 | u32(t[2]) << 16 | u32(t[3]) << 24;
  if (crc32(body) != stored) throw CorruptStreamError("bitstream: checksum mismatch");
  return body;
}

struct ChannelPlan {
  ValueNorm norm;
  CtxClass ctx = CtxClass::kPrimary;
  i16 lo = 0, hi = 0;
  bool constant() const { return lo == hi; }
};

std::vector<ChannelPlan> make_plans(int channels, int colorspace, const CodecMode& mode,
                                    std::span<const std::array<i16, 2>> ranges) {
  std::vector<ChannelPlan> plans(channels);
  for (int c = 0; c < channels; ++c) {
    auto& p = plans[c];
    p.norm = (colorspace == 1 && c > 0) ? ValueNorm{256.0, 0.0} : ValueNorm{128.0, 128.0};
    p.ctx = CtxClass::kPrimary;
    if (colorspace == 1 && mode.cross_color && c > 0) {
      if (c == 1)
        p.ctx = CtxClass::kCoRef;
      else
        p.ctx = mode.cc_sequential ? CtxClass::kCgRefSeq : CtxClass::kCgRef;
    }
    p.lo = ranges[c][0];
    p.hi = ranges[c][1];
  }
  return plans;
}

struct LevelGeom {
  std::vector<PoolCube> cubes;
  std::vector<u32> cube_of;
  std::vector<std::vector<u32>> groups;  // one member list (plain) or eight (octant phases)
  NeighborList nbr;
};

LevelGeom build_level_geom(const SparseTensor& level, bool cross_group, bool want_nbr) {
  LevelGeom g;
  std::size_t n = level.size();
  g.cube_of.resize(n);
  std::size_t i = 0;
  u32 ci = 0;
  while (i < n) {
    u64 pk = level.key(i) >> 3;
    std::size_t j = i + 1;
    while (j < n && (level.key(j) >> 3) == pk) ++j;
    g.cubes.push_back(PoolCube{u32(i), u32(j)});
    for (std::size_t r = i; r < j; ++r) g.cube_of[r] = ci;
    ++ci;
    i = j;
  }
  if (cross_group) {
    auto sched = GroupSchedule::build(level);
    g.groups.assign(8, {});
    for (int k = 0; k < 8; ++k) g.groups[k] = std::move(sched.members[k]);
  } else {
    g.groups.assign(1, {});
    g.groups[0].resize(n);
    for (std::size_t r = 0; r < n; ++r) g.groups[0][r] = u32(r);
  }
  if (want_nbr) g.nbr = gather_neighbors(level, 3);
  return g;
}

using RefList = std::vector<std::pair<const std::vector<i32>*, ValueNorm>>;

// Per-group hook; the level driver owns state evolution, the sink only maps
// to-code rows to values (by entropy coding or by teacher forcing).
class GroupSink {
 public:
  virtual ~GroupSink() = default;
  virtual bool wants_probs() const = 0;
  virtual void on_inferred(u32 row, i32 value) { (void)row, (void)value; }
  virtual void code_group(int level_index, u32 level_id, int stage, const ChannelPlan& plan,
                          const FeatureMatrix& feats, const LaplaceField& probs,
                          std::span<const u32> rows, std::span<i32> out) = 0;
};

void write_stream(ByteWriter& w, const std::vector<u8>& payload) {
  w.u32v(u32(payload.size()));
  w.bytes(payload);
}

std::span<const u8> read_stream(ByteReader& r) {
  u32 len = r.u32v();
  return r.bytes(len);
}

// Builds quantized coding tables for rows[base..base+cnt) in parallel.
void build_group_cdfs(const LaplaceField& probs, std::span<const u32> rows, std::size_t base,
                      std::size_t cnt, i16 lo, i16 hi, int threads,
                      std::vector<QuantizedCdf>& cdfs) {
  std::size_t alpha = std::size_t(int(hi) - int(lo) + 1);
  parallel_for(cnt, threads, [&](std::size_t b, std::size_t e) {
    std::vector<double> pmf(alpha, 0.0);
    for (std::size_t i = b; i < e; ++i) {
      const auto& lp = probs[rows[base + i]];
      laplace_pmf(lp.mu, lp.b, lo, hi, pmf);
      cdfs[i] = quantize_cdf(pmf);
    }
  });
}

class EncodeSink : public GroupSink {
 public:
  EncodeSink(const std::vector<i32>* truth, int channel, ByteWriter* w, CodecStats* stats,
             int threads)
      : truth_(truth), channel_(channel), w_(w), stats_(stats), threads_(threads) {}
  bool wants_probs() const override { return true; }
  void on_inferred(u32 row, i32 value) override {
    assert((*truth_)[row] == value);
    (void)row, (void)value;
  }
  void code_group(int level_index, u32, int stage, const ChannelPlan& plan,
                  const FeatureMatrix&, const LaplaceField& probs, std::span<const u32> rows,
                  std::span<i32> out) override {
    RangeEncoder enc;
    enc.encode_uniform(256, kSentinel);
    StreamStat st;
    st.name = "L" + std::to_string(level_index) + ".c" + std::to_string(channel_) + ".g" +
              std::to_string(stage);
    st.symbols = rows.size();
    std::vector<QuantizedCdf> cdfs;
    std::vector<double> est;
    for (std::size_t base = 0; base < rows.size(); base += kCdfChunk) {
      std::size_t cnt = std::min(kCdfChunk, rows.size() - base);
      cdfs.assign(cnt, QuantizedCdf{});
      est.assign(cnt, 0.0);
      build_group_cdfs(probs, rows, base, cnt, plan.lo, plan.hi, threads_, cdfs);
      parallel_for(cnt, threads_, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
          const auto& lp = probs[rows[base + i]];
          est[i] = laplace_nll_bits(lp.mu, lp.b, (*truth_)[rows[base + i]], plan.lo, plan.hi);
        }
      });
      for (std::size_t i = 0; i < cnt; ++i) {
        i32 x = (*truth_)[rows[base + i]];
        int s = x - plan.lo;
        enc.encode_symbol(cdfs[i], s);
        st.est_quant_bits += cdfs[i].cost_bits(s);
        st.est_bits += est[i];
        out[base + i] = x;
      }
    }
    auto payload = enc.finish();
    st.payload_bytes = payload.size();
    write_stream(*w_, payload);
    stats_->streams.push_back(std::move(st));
  }

 private:
  const std::vector<i32>* truth_;
  int channel_;
  ByteWriter* w_;
  CodecStats* stats_;
  int threads_;
};

class DecodeSink : public GroupSink {
 public:
  DecodeSink(ByteReader* r, int threads) : r_(r), threads_(threads) {}
  bool wants_probs() const override { return true; }
  void code_group(int, u32, int, const ChannelPlan& plan, const FeatureMatrix&,
                  const LaplaceField& probs, std::span<const u32> rows,
                  std::span<i32> out) override {
    auto payload = read_stream(*r_);
    RangeDecoder dec(payload);
    if (dec.decode_uniform(256) != kSentinel)
      throw CorruptStreamError("attribute stream: sentinel mismatch");
    std::vector<QuantizedCdf> cdfs;
    for (std::size_t base = 0; base < rows.size(); base += kCdfChunk) {
      std::size_t cnt = std::min(kCdfChunk, rows.size() - base);
      cdfs.assign(cnt, QuantizedCdf{});
      build_group_cdfs(probs, rows, base, cnt, plan.lo, plan.hi, threads_, cdfs);
      for (std::size_t i = 0; i < cnt; ++i) out[base + i] = plan.lo + dec.decode_symbol(cdfs[i]);
    }
    if (dec.consumed() != payload.size())
      throw CorruptStreamError("attribute stream: length mismatch");
  }

 private:
  ByteReader* r_;
  int threads_;
};

class CollectSink : public GroupSink {
 public:
  CollectSink(const std::vector<i32>* truth, TrainBatch* batch) : truth_(truth), batch_(batch) {}
  bool wants_probs() const override { return false; }
  void code_group(int level_index, u32 level_id, int stage, const ChannelPlan& plan,
                  const FeatureMatrix& feats, const LaplaceField&, std::span<const u32> rows,
                  std::span<i32> out) override {
    TrainSample s;
    s.key = VariantKey{u8(stage), plan.ctx};
    s.norm = plan.norm;
    s.lo = plan.lo;
    s.hi = plan.hi;
    s.level = level_index;
    s.level_id = level_id;
    s.feats = feats;
    s.coded_rows.assign(rows.begin(), rows.end());
    s.coded_values.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      i32 x = (*truth_)[rows[i]];
      s.coded_values[i] = x;
      out[i] = x;
    }
    batch_->samples.push_back(std::move(s));
  }

 private:
  const std::vector<i32>* truth_;
  TrainBatch* batch_;
};

// Runs the per-scale, per-channel coding state machine: octant-phase (or
// single-phase) scheduling, last-child inference, estimate refreshes,
// context assembly, probability evaluation, and state updates. Encoder,
// decoder, and trainer all drive this same loop.
void process_channel(const SparseTensor& level, const LevelGeom& geom, int level_index,
                     u32 level_id, const CodecConfig& cfg, bool cross_group,
                     const ChannelPlan& plan, std::span<const i64> exact_sums, const RefList& refs,
                     GroupSink& sink, std::vector<i32>& out_values) {
  std::size_t n = level.size();
  std::vector<double> val(n);
  std::vector<u8> known(n, 0);
  std::vector<CubeState> cubes(geom.cubes.size());
  for (std::size_t c = 0; c < cubes.size(); ++c) {
    const auto& pc = geom.cubes[c];
    cubes[c] = CubeState{exact_sums[c], 0, u16(pc.k()), 0};
    double mean = double(exact_sums[c]) / double(pc.k());
    for (u32 r = pc.child_begin; r < pc.child_end; ++r) val[r] = mean;
  }
  int cin = ctx_input_channels(plan.ctx);
  if (int(refs.size()) != cin - 2) throw std::logic_error("reference channel count mismatch");

  std::vector<u32> code_rows;
  std::vector<i32> coded(n);
  for (std::size_t gi = 0; gi < geom.groups.size(); ++gi) {
    int stage = cross_group ? int(gi) : 0;
    code_rows.clear();
    for (u32 r : geom.groups[gi]) {
      auto& cs = cubes[geom.cube_of[r]];
      if (known[r]) continue;
      if (cs.remaining() == 1) {
        i64 x = cs.exact_sum - cs.processed_sum;
        if (x < plan.lo || x > plan.hi)
          throw CorruptStreamError("attribute stream: inferred value out of range");
        val[r] = double(x);
        known[r] = 1;
        cs.processed_sum += x;
        cs.processed_count += 1;
        sink.on_inferred(r, i32(x));
      } else {
        code_rows.push_back(r);
      }
    }
    if (code_rows.empty()) continue;

    for (std::size_t c = 0; c < cubes.size(); ++c) {
      const auto& cs = cubes[c];
      if (cs.remaining() == 0) continue;
      double upd = double(cs.exact_sum - cs.processed_sum) / double(cs.remaining());
      const auto& pc = geom.cubes[c];
      for (u32 r = pc.child_begin; r < pc.child_end; ++r)
        if (!known[r]) val[r] = upd;
    }
    FeatureMatrix feats;
    feats.channels = cin;
    feats.data.resize(n * std::size_t(cin));
    for (std::size_t r = 0; r < n; ++r) {
      double* row = feats.row(r);
      row[0] = plan.norm.to_norm(val[r]);
      row[1] = known[r] ? 1.0 : 0.0;
      for (std::size_t q = 0; q < refs.size(); ++q)
        row[2 + q] = refs[q].second.to_norm(double((*refs[q].first)[r]));
    }
    LaplaceField probs;
    if (sink.wants_probs()) {
      if (cfg.net) {
        probs = cfg.net->forward(VariantKey{u8(stage), plan.ctx}, feats, geom.nbr, plan.norm,
                                 cfg.threads);
      } else {
        probs.resize(n);
        for (std::size_t r = 0; r < n; ++r) probs[r] = LaplaceParams{val[r], cfg.fallback_b0};
      }
    }
    sink.code_group(level_index, level_id, stage, plan, feats, probs, code_rows,
                    std::span<i32>(coded.data(), code_rows.size()));
    for (std::size_t idx = 0; idx < code_rows.size(); ++idx) {
      u32 r = code_rows[idx];
      i32 x = coded[idx];
      if (x < plan.lo || x > plan.hi)
        throw CorruptStreamError("attribute stream: value out of range");
      val[r] = double(x);
      known[r] = 1;
      auto& cs = cubes[geom.cube_of[r]];
      cs.processed_sum += x;
      cs.processed_count += 1;
    }
  }
  out_values.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    if (!known[r]) throw std::logic_error("attribute coding left voxels unresolved");
    out_values[r] = i32(val[r]);
  }
}

RefList make_refs(const ChannelPlan& plan, const std::vector<ChannelPlan>& plans,
                  const std::vector<std::vector<i32>>& channel_values) {
  RefList refs;
  switch (plan.ctx) {
    case CtxClass::kPrimary: break;
    case CtxClass::kCoRef:
    case CtxClass::kCgRef:
      refs.emplace_back(&channel_values[0], plans[0].norm);
      break;
    case CtxClass::kCgRefSeq:
      refs.emplace_back(&channel_values[0], plans[0].norm);
      refs.emplace_back(&channel_values[1], plans[1].norm);
      break;
  }
  return refs;
}

u64 residue_symbol_count(const LevelGeom& geom, const std::vector<ChannelPlan>& plans) {
  u64 wide = 0;
  for (const auto& pc : geom.cubes)
    if (pc.k() > 1) ++wide;
  u64 coded_channels = 0;
  for (const auto& p : plans)
    if (!p.constant()) ++coded_channels;
  return wide * coded_channels;
}

void encode_residues(int level_index, const LevelGeom& geom, const std::vector<ChannelPlan>& plans,
                     const std::vector<std::vector<i64>>& sums, ByteWriter& w, CodecStats& stats) {
  if (residue_symbol_count(geom, plans) == 0) return;
  RangeEncoder enc;
  enc.encode_uniform(256, kSentinel);
  StreamStat st;
  st.name = "L" + std::to_string(level_index) + ".residue";
  for (std::size_t ci = 0; ci < geom.cubes.size(); ++ci) {
    u32 k = u32(geom.cubes[ci].k());
    if (k <= 1) continue;
    for (std::size_t c = 0; c < plans.size(); ++c) {
      if (plans[c].constant()) continue;
      u32 res = u32(mod_floor(sums[c][ci], i64(k)));
      enc.encode_uniform(k, res);
      st.symbols += 1;
      st.est_bits += std::log2(double(k));
      st.est_quant_bits += kProbBits - std::log2(double(uniform_freq(k, res)));
    }
  }
  auto payload = enc.finish();
  st.payload_bytes = payload.size();
  write_stream(w, payload);
  stats.streams.push_back(std::move(st));
}

std::vector<std::vector<i64>> decode_residues(const LevelGeom& geom,
                                              const std::vector<ChannelPlan>& plans,
                                              const std::vector<std::vector<i32>>& parent_values,
                                              ByteReader& r) {
  std::size_t channels = plans.size();
  std::vector<std::vector<i64>> sums(channels);
  for (auto& s : sums) s.resize(geom.cubes.size());
  bool has_stream = residue_symbol_count(geom, plans) > 0;
  std::span<const u8> payload;
  std::optional<RangeDecoder> dec;
  if (has_stream) {
    payload = read_stream(r);
    dec.emplace(payload);
    if (dec->decode_uniform(256) != kSentinel)
      throw CorruptStreamError("residue stream: sentinel mismatch");
  }
  for (std::size_t ci = 0; ci < geom.cubes.size(); ++ci) {
    u32 k = u32(geom.cubes[ci].k());
    for (std::size_t c = 0; c < channels; ++c) {
      i64 q = parent_values[c][ci];
      if (plans[c].constant()) {
        sums[c][ci] = i64(k) * plans[c].lo;
      } else if (k == 1) {
        sums[c][ci] = q;
      } else {
        u32 res = dec->decode_uniform(k);
        sums[c][ci] = reconstruct_sum(q, int(k), i64(res));
      }
    }
  }
  if (has_stream && dec->consumed() != payload.size())
    throw CorruptStreamError("residue stream: length mismatch");
  return sums;
}

std::vector<std::array<u32, 3>> copy_coords(std::span<const std::array<u32, 3>> s) {
  return {s.begin(), s.end()};
}

std::vector<i32> transform_colors(const SparseTensor& cloud, int colorspace) {
  std::size_t n = cloud.size();
  int ch = cloud.channels();
  std::vector<i32> tx(n * std::size_t(ch));
  for (std::size_t i = 0; i < n; ++i) {
    if (colorspace == 1) {
      auto v = rgb_to_ycocg(cloud.attr(i, 0), cloud.attr(i, 1), cloud.attr(i, 2));
      tx[i * 3] = v[0];
      tx[i * 3 + 1] = v[1];
      tx[i * 3 + 2] = v[2];
    } else {
      for (int c = 0; c < ch; ++c) tx[i * std::size_t(ch) + c] = cloud.attr(i, c);
    }
  }
  return tx;
}

struct HeaderFields {
  CodecMode mode;
  int channels = 0;
  int colorspace = 0;
  int scales = 0;
  std::vector<u64> counts;
  std::vector<std::array<i16, 2>> ranges;
  u64 model_hash = 0;
  std::vector<i32> root;
};

HeaderFields parse_header(ByteReader& r) {
  auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), "MPAC", 4) != 0)
    throw CorruptStreamError("bitstream: bad magic");
  if (r.u8v() != kVersion) throw CorruptStreamError("bitstream: unsupported version");
  u8 flags = r.u8v();
  if (flags & ~u8(0x07)) throw CorruptStreamError("bitstream: unknown flags");
  HeaderFields h;
  h.mode.cross_group = flags & 1;
  h.mode.cross_color = flags & 2;
  h.mode.cc_sequential = flags & 4;
  if (h.mode.cc_sequential && !h.mode.cross_color)
    throw CorruptStreamError("bitstream: inconsistent flags");
  h.channels = r.u8v();
  h.colorspace = r.u8v();
  if (h.channels != 1 && h.channels != 3) throw CorruptStreamError("bitstream: bad channel count");
  if (h.colorspace != (h.channels == 3 ? 1 : 0))
    throw CorruptStreamError("bitstream: bad colorspace");
  h.scales = r.u8v();
  if (h.scales < 2 || h.scales > 17) throw CorruptStreamError("bitstream: bad scale count");
  h.counts.resize(h.scales);
  for (auto& c : h.counts) c = r.varint();
  if (h.counts[0] != 1) throw CorruptStreamError("bitstream: root must hold one voxel");
  for (int j = 1; j < h.scales; ++j) {
    if (h.counts[j] < h.counts[j - 1] || h.counts[j] > h.counts[j - 1] * 8)
      throw CorruptStreamError("bitstream: implausible scale sizes");
  }
  h.ranges.resize(h.channels);
  for (auto& rg : h.ranges) {
    rg[0] = r.i16v();
    rg[1] = r.i16v();
    if (rg[0] > rg[1]) throw CorruptStreamError("bitstream: bad value range");
    if (int(rg[1]) - int(rg[0]) + 1 > kMaxAlphabet)
      throw CorruptStreamError("bitstream: value range too wide");
  }
  h.model_hash = r.u64v();
  h.root.resize(h.channels);
  for (int c = 0; c < h.channels; ++c) {
    i32 v = r.i16v();
    if (v < h.ranges[c][0] || v > h.ranges[c][1])
      throw CorruptStreamError("bitstream: root value out of range");
    h.root[c] = v;
  }
  return h;
}

}  // namespace

CodecMode parse_mode(const std::string& s) {
  CodecMode m{false, false, false};
  if (s.empty() || s.back() == '+')
    throw ConfigError("malformed mode string: \"" + s + "\"");
  std::stringstream ss(s);
  std::string tok;
  bool first = true;
  while (std::getline(ss, tok, '+')) {
    if (first) {
      if (tok != "cs") throw ConfigError("mode must start with \"cs\": " + s);
      first = false;
    } else if (tok == "cg" && !m.cross_group) {
      m.cross_group = true;
    } else if (tok == "cc" && !m.cross_color) {
      m.cross_color = true;
    } else if (tok == "seq" && !m.cc_sequential) {
      m.cc_sequential = true;
    } else {
      throw ConfigError("unknown or repeated mode component \"" + tok +
                        "\" in: " + s);
    }
  }
  if (m.cc_sequential && !m.cross_color)
    throw ConfigError("mode \"seq\" requires \"cc\": " + s);
  return m;
}

std::string mode_name(const CodecMode& m) {
  std::string s = "cs";
  if (m.cross_group) s += "+cg";
  if (m.cross_color) s += "+cc";
  if (m.cc_sequential) s += "+seq";
  return s;
}

u64 fallback_model_tag(double b0) {
  float f = float(b0);
  u32 bits;
  std::memcpy(&bits, &f, 4);
  return (u64(0xFA11BACCu) << 32) | bits;
}

u64 CodecStats::attr_payload_bits() const {
  u64 bits = 0;
  for (const auto& s : streams) bits += s.payload_bytes * 8;
  return bits;
}

double CodecStats::est_attr_bits() const {
  double bits = double(root_bits);
  for (const auto& s : streams) bits += s.est_bits;
  return bits;
}

EncodeResult encode(const SparseTensor& cloud, const CodecConfig& cfg) {
  int channels = cloud.channels();
  if (channels != 1 && channels != 3)
    throw ConfigError("codec supports 1 or 3 attribute channels");
  if (cloud.empty()) throw ConfigError("cannot encode an empty cloud");
  if (cloud.depth() < 1 || cloud.depth() > 16) throw ConfigError("tree depth must be in [1, 16]");
  if (cfg.threads < 1) throw ConfigError("thread count must be positive");

  int colorspace = channels == 3 ? 1 : 0;
  CodecMode mode = cfg.mode;
  mode.cross_color = mode.cross_color && colorspace == 1;
  mode.cc_sequential = mode.cc_sequential && mode.cross_color;

  std::vector<i32> tx = transform_colors(cloud, colorspace);
  std::vector<std::array<i16, 2>> ranges(channels);
  for (int c = 0; c < channels; ++c) {
    i32 lo = tx[c], hi = tx[c];
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      lo = std::min(lo, tx[i * std::size_t(channels) + c]);
      hi = std::max(hi, tx[i * std::size_t(channels) + c]);
    }
    if (lo < -32768 || hi > 32767) throw ConfigError("attribute values out of coded range");
    if (hi - lo + 1 > kMaxAlphabet) throw ConfigError("attribute value range too wide");
    ranges[c] = {i16(lo), i16(hi)};
  }
  std::vector<ChannelPlan> plans = make_plans(channels, colorspace, mode, ranges);

  SparseTensor top = SparseTensor::from_sorted(cloud.depth(), channels, copy_coords(cloud.coords()), tx);
  ScalePyramid pyr = build_pyramid(top);
  int scales = pyr.num_scales();

  CodecStats stats;
  stats.points = cloud.size();
  stats.channels = channels;
  stats.root_bits = u64(channels) * 16;

  ByteWriter w;
  w.raw("MPAC", 4);
  w.u8v(kVersion);
  u8 flags = (mode.cross_group ? 1 : 0) | (mode.cross_color ? 2 : 0) | (mode.cc_sequential ? 4 : 0);
  w.u8v(flags);
  w.u8v(u8(channels));
  w.u8v(u8(colorspace));
  w.u8v(u8(scales));
  for (int j = 0; j < scales; ++j) w.varint(pyr.levels[j].size());
  for (int c = 0; c < channels; ++c) {
    w.i16v(ranges[c][0]);
    w.i16v(ranges[c][1]);
  }
  u64 model_hash = cfg.net ? cfg.net->content_hash() : fallback_model_tag(cfg.fallback_b0);
  w.u64v(model_hash);
  for (int c = 0; c < channels; ++c) w.i16v(i16(pyr.levels[0].attr(0, c)));
  stats.header_bytes = w.size();

  std::vector<LevelGeom> geoms(scales);
  for (int j = 1; j < scales; ++j)
    geoms[j] = build_level_geom(pyr.levels[j], mode.cross_group, cfg.net != nullptr);

  u64 mask_bytes = 0;
  for (int j = 1; j < scales; ++j) mask_bytes += pyr.levels[j - 1].size();
  w.u32v(u32(mask_bytes));
  for (int j = 1; j < scales; ++j) {
    const auto& level = pyr.levels[j];
    for (const auto& pc : geoms[j].cubes) {
      u8 mask = 0;
      for (u32 r = pc.child_begin; r < pc.child_end; ++r)
        mask |= u8(1u << octant_index(level.coord(r)));
      w.u8v(mask);
    }
  }
  stats.geometry_mask_bytes = mask_bytes;

  for (int j = 1; j < scales; ++j) {
    const auto& level = pyr.levels[j];
    const auto& link = pyr.links[j];
    std::size_t n = level.size();
    std::vector<std::vector<i64>> sums(channels);
    for (int c = 0; c < channels; ++c) {
      sums[c].resize(link.cubes.size());
      for (std::size_t ci = 0; ci < link.cubes.size(); ++ci)
        sums[c][ci] = link.sum(ci, channels, c);
    }
    encode_residues(j, geoms[j], plans, sums, w, stats);

    std::vector<std::vector<i32>> channel_values(channels);
    for (int c = 0; c < channels; ++c) {
      channel_values[c].resize(n);
      for (std::size_t i = 0; i < n; ++i) channel_values[c][i] = level.attr(i, c);
    }
    for (int c = 0; c < channels; ++c) {
      if (plans[c].constant()) continue;
      RefList refs = make_refs(plans[c], plans, channel_values);
      EncodeSink sink(&channel_values[c], c, &w, &stats, cfg.threads);
      std::vector<i32> out;
      process_channel(level, geoms[j], j, u32(j - 1), cfg, mode.cross_group, plans[c], sums[c],
                      refs, sink, out);
    }
  }

  EncodeResult res;
  res.bytes = w.take();
  u32 crc = crc32(res.bytes);
  for (int i = 0; i < 4; ++i) res.bytes.push_back(u8(crc >> (8 * i)));
  stats.total_bytes = res.bytes.size();
  res.stats = std::move(stats);
  return res;
}

SparseTensor decode(std::span<const u8> bytes, const CodecConfig& cfg) {
  if (cfg.threads < 1) throw ConfigError("thread count must be positive");
  ByteReader r(checked_body(bytes));
  HeaderFields h = parse_header(r);
  u64 expected = cfg.net ? cfg.net->content_hash() : fallback_model_tag(cfg.fallback_b0);
  if (h.model_hash != expected)
    throw ConfigError("decode requires the probability model used by the encoder");

  std::vector<ChannelPlan> plans = make_plans(h.channels, h.colorspace, h.mode, h.ranges);
  int scales = h.scales;

  u32 mask_len = r.u32v();
  u64 expected_masks = 0;
  for (int j = 1; j < scales; ++j) expected_masks += h.counts[j - 1];
  if (mask_len != expected_masks) throw CorruptStreamError("bitstream: geometry size mismatch");

  std::vector<SparseTensor> levels;
  levels.reserve(scales);
  {
    std::vector<std::array<u32, 3>> root_coord{{0, 0, 0}};
    levels.push_back(SparseTensor::from_sorted(0, h.channels, root_coord,
                                               std::vector<i32>(h.channels, 0)));
  }
  for (int j = 1; j < scales; ++j) {
    auto masks = r.bytes(std::size_t(h.counts[j - 1]));
    std::vector<std::array<u32, 3>> coords;
    coords.reserve(std::size_t(h.counts[j]));
    for (std::size_t p = 0; p < masks.size(); ++p) {
      u8 m = masks[p];
      if (m == 0) throw CorruptStreamError("bitstream: empty occupancy mask");
      for (int o = 0; o < 8; ++o)
        if (m & (1u << o)) coords.push_back(child_coord(levels[j - 1].coord(p), o));
    }
    if (coords.size() != h.counts[j])
      throw CorruptStreamError("bitstream: occupancy does not match scale size");
    levels.push_back(SparseTensor::from_sorted(
        j, h.channels, std::move(coords), std::vector<i32>(h.counts[j] * h.channels, 0)));
  }

  std::vector<std::vector<i32>> parent_values(h.channels);
  for (int c = 0; c < h.channels; ++c) parent_values[c] = {h.root[c]};

  for (int j = 1; j < scales; ++j) {
    const auto& level = levels[j];
    LevelGeom geom = build_level_geom(level, h.mode.cross_group, cfg.net != nullptr);
    if (geom.cubes.size() != parent_values[0].size())
      throw CorruptStreamError("bitstream: parent/child structure mismatch");
    auto sums = decode_residues(geom, plans, parent_values, r);

    std::vector<std::vector<i32>> channel_values(h.channels);
    for (int c = 0; c < h.channels; ++c) {
      if (plans[c].constant()) {
        channel_values[c].assign(level.size(), plans[c].lo);
        continue;
      }
      RefList refs = make_refs(plans[c], plans, channel_values);
      DecodeSink sink(&r, cfg.threads);
      process_channel(level, geom, j, u32(j - 1), cfg, h.mode.cross_group, plans[c], sums[c],
                      refs, sink, channel_values[c]);
    }
    parent_values = std::move(channel_values);
  }
  if (r.remaining() != 0) throw CorruptStreamError("bitstream: trailing bytes");

  const auto& leaf = levels[scales - 1];
  std::size_t n = leaf.size();
  std::vector<i32> attrs(n * std::size_t(h.channels));
  for (std::size_t i = 0; i < n; ++i) {
    if (h.colorspace == 1) {
      auto v = ycocg_to_rgb(parent_values[0][i], parent_values[1][i], parent_values[2][i]);
      attrs[i * 3] = v[0];
      attrs[i * 3 + 1] = v[1];
      attrs[i * 3 + 2] = v[2];
    } else {
      for (int c = 0; c < h.channels; ++c) attrs[i * std::size_t(h.channels) + c] =
          parent_values[c][i];
    }
  }
  return SparseTensor::from_sorted(scales - 1, h.channels, copy_coords(leaf.coords()), std::move(attrs));
}

BitstreamInfo inspect(std::span<const u8> bytes) {
  ByteReader r(checked_body(bytes));
  HeaderFields h = parse_header(r);
  BitstreamInfo info;
  info.version = kVersion;
  info.mode = h.mode;
  info.channels = h.channels;
  info.colorspace = h.colorspace;
  info.scales = h.scales;
  info.counts = h.counts;
  info.ranges = h.ranges;
  info.model_hash = h.model_hash;
  return info;
}

TrainBatch collect_training_samples(const SparseTensor& cloud, const CodecConfig& cfg) {
  int channels = cloud.channels();
  if (channels != 1 && channels != 3)
    throw ConfigError("codec supports 1 or 3 attribute channels");
  if (cloud.empty()) throw ConfigError("cannot sample an empty cloud");

  int colorspace = channels == 3 ? 1 : 0;
  CodecMode mode = cfg.mode;
  mode.cross_color = mode.cross_color && colorspace == 1;
  mode.cc_sequential = mode.cc_sequential && mode.cross_color;

  std::vector<i32> tx = transform_colors(cloud, colorspace);
  std::vector<std::array<i16, 2>> ranges(channels);
  for (int c = 0; c < channels; ++c) {
    i32 lo = tx[c], hi = tx[c];
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      lo = std::min(lo, tx[i * std::size_t(channels) + c]);
      hi = std::max(hi, tx[i * std::size_t(channels) + c]);
    }
    ranges[c] = {i16(lo), i16(hi)};
  }
  std::vector<ChannelPlan> plans = make_plans(channels, colorspace, mode, ranges);

  SparseTensor top = SparseTensor::from_sorted(cloud.depth(), channels, copy_coords(cloud.coords()), tx);
  ScalePyramid pyr = build_pyramid(top);
  int scales = pyr.num_scales();

  TrainBatch batch;
  for (int j = 1; j < scales; ++j) {
    const auto& level = pyr.levels[j];
    const auto& link = pyr.links[j];
    LevelGeom geom = build_level_geom(level, mode.cross_group, false);
    batch.nbrs.push_back(gather_neighbors(level, 3));
    u32 level_id = u32(batch.nbrs.size() - 1);

    std::size_t n = level.size();
    std::vector<std::vector<i64>> sums(channels);
    for (int c = 0; c < channels; ++c) {
      sums[c].resize(link.cubes.size());
      for (std::size_t ci = 0; ci < link.cubes.size(); ++ci)
        sums[c][ci] = link.sum(ci, channels, c);
    }
    std::vector<std::vector<i32>> channel_values(channels);
    for (int c = 0; c < channels; ++c) {
      channel_values[c].resize(n);
      for (std::size_t i = 0; i < n; ++i) channel_values[c][i] = level.attr(i, c);
    }
    for (int c = 0; c < channels; ++c) {
      if (plans[c].constant()) continue;
      RefList refs = make_refs(plans[c], plans, channel_values);
      CollectSink sink(&channel_values[c], &batch);
      std::vector<i32> out;
      process_channel(level, geom, j, level_id, cfg, mode.cross_group, plans[c], sums[c], refs,
                      sink, out);
    }
  }
  return batch;
}

}  // namespace mpac
