#include "mpac/prob_net.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "mpac/bytes.hpp"
#include "mpac/threading.hpp"

namespace mpac {

double softplus(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double initial_b_bias(double initial_b) {
  double target = (initial_b - kMinScaleB) / kBUnit;
  if (target <= 0) throw ConfigError("initial Laplace scale too small");
  // softplus inverse: log(exp(y) - 1)
  return std::log(std::expm1(target));
}

std::vector<ConvLayer*> Variant::layers() {
  std::vector<ConvLayer*> out{&conv_in};
  for (auto& b : blocks) {
    out.push_back(&b.first);
    out.push_back(&b.second);
  }
  out.push_back(&head);
  return out;
}

std::vector<const ConvLayer*> Variant::layers() const {
  std::vector<const ConvLayer*> out{&conv_in};
  for (auto& b : blocks) {
    out.push_back(&b.first);
    out.push_back(&b.second);
  }
  out.push_back(&head);
  return out;
}

std::size_t Variant::param_count() const {
  std::size_t n = 0;
  for (const auto* l : layers()) n += l->param_count();
  return n;
}

void VariantGrads::init_like(const Variant& v) {
  auto ls = v.layers();
  w.assign(ls.size(), {});
  bias.assign(ls.size(), {});
  for (std::size_t i = 0; i < ls.size(); ++i) {
    w[i].assign(ls[i]->w.size(), 0.0);
    bias[i].assign(ls[i]->bias.size(), 0.0);
  }
}

void VariantGrads::add_scaled(const VariantGrads& other, double s) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    for (std::size_t j = 0; j < w[i].size(); ++j) w[i][j] += s * other.w[i][j];
    for (std::size_t j = 0; j < bias[i].size(); ++j) bias[i][j] += s * other.bias[i][j];
  }
}

bool VariantGrads::finite() const {
  for (const auto& v : w)
    for (double x : v)
      if (!std::isfinite(x)) return false;
  for (const auto& v : bias)
    for (double x : v)
      if (!std::isfinite(x)) return false;
  return true;
}

namespace {

// Deterministic standard normal from a 64-bit generator (Box-Muller),
// independent of the standard library's distribution implementation.
class NormalGen {
 public:
  explicit NormalGen(u64 seed) : state_(seed ? seed : 0x9E3779B97F4A7C15ull) {}
  double next() {
    if (have_) {
      have_ = false;
      return spare_;
    }
    double u1 = to_unit(next_u64());
    double u2 = to_unit(next_u64());
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_ = true;
    return r * std::cos(a);
  }

 private:
  u64 next_u64() {  // splitmix64
    u64 z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  static double to_unit(u64 x) {  // (0, 1]
    return (double(x >> 11) + 1.0) * 0x1.0p-53;
  }
  u64 state_;
  bool have_ = false;
  double spare_ = 0.0;
};

ConvLayer make_layer(int kernel, int cin, int cout, NormalGen* gen) {
  ConvLayer l;
  l.kernel = kernel;
  l.cin = cin;
  l.cout = cout;
  int slots = kernel * kernel * kernel;
  l.w.assign(std::size_t(slots) * cin * cout, 0.0);
  l.bias.assign(cout, 0.0);
  if (gen) {
    double std = std::sqrt(2.0 / (double(slots) * cin));
    for (auto& v : l.w) v = gen->next() * std;
  }
  return l;
}

inline std::size_t widx(const ConvLayer& l, int slot, int ci, int co) {
  return (std::size_t(slot) * l.cin + ci) * l.cout + co;
}

// out[i] = bias + sum over neighbor entries (slot, j) of W[slot]^T in[j].
void conv_forward(const ConvLayer& l, const NeighborList* nbr, std::span<const double> in,
                  std::span<double> out, std::size_t rows, int threads) {
  parallel_for(rows, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      double* o = out.data() + i * l.cout;
      for (int co = 0; co < l.cout; ++co) o[co] = l.bias[co];
      if (l.kernel == 1) {
        const double* x = in.data() + i * l.cin;
        for (int ci = 0; ci < l.cin; ++ci) {
          double v = x[ci];
          if (v == 0.0) continue;
          const double* wr = l.w.data() + std::size_t(ci) * l.cout;
          for (int co = 0; co < l.cout; ++co) o[co] += v * wr[co];
        }
      } else {
        for (u32 e = nbr->offsets[i]; e < nbr->offsets[i + 1]; ++e) {
          const double* x = in.data() + std::size_t(nbr->sources[e]) * l.cin;
          const double* wb = l.w.data() + std::size_t(nbr->slots[e]) * l.cin * l.cout;
          for (int ci = 0; ci < l.cin; ++ci) {
            double v = x[ci];
            if (v == 0.0) continue;
            const double* wr = wb + std::size_t(ci) * l.cout;
            for (int co = 0; co < l.cout; ++co) o[co] += v * wr[co];
          }
        }
      }
    }
  });
}

// d_in[j] += sum over targets i with j in their support of W[slot]^T d_out[i],
// found by scanning j's own neighbor row with mirrored slots.
void conv_input_grad(const ConvLayer& l, const NeighborList* nbr, std::span<const double> d_out,
                     std::span<double> d_in, std::size_t rows, int threads) {
  parallel_for(rows, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t j = begin; j < end; ++j) {
      double* g = d_in.data() + j * l.cin;
      if (l.kernel == 1) {
        const double* dy = d_out.data() + j * l.cout;
        for (int ci = 0; ci < l.cin; ++ci) {
          const double* wr = l.w.data() + std::size_t(ci) * l.cout;
          double acc = 0;
          for (int co = 0; co < l.cout; ++co) acc += wr[co] * dy[co];
          g[ci] += acc;
        }
      } else {
        for (u32 e = nbr->offsets[j]; e < nbr->offsets[j + 1]; ++e) {
          u16 ms = u16(mirror_slot(l.kernel, nbr->slots[e]));
          const double* dy = d_out.data() + std::size_t(nbr->sources[e]) * l.cout;
          const double* wb = l.w.data() + std::size_t(ms) * l.cin * l.cout;
          for (int ci = 0; ci < l.cin; ++ci) {
            const double* wr = wb + std::size_t(ci) * l.cout;
            double acc = 0;
            for (int co = 0; co < l.cout; ++co) acc += wr[co] * dy[co];
            g[ci] += acc;
          }
        }
      }
    }
  });
}

// Accumulates dW and dbias: per fixed piece of the voxel range into its own
// buffer, then a serial in-order reduction, so results do not depend on the
// thread count.
void conv_param_grad(const ConvLayer& l, const NeighborList* nbr, std::span<const double> in,
                     std::span<const double> d_out, std::size_t rows, std::vector<double>& gw,
                     std::vector<double>& gb, int threads) {
  std::vector<std::vector<double>> pw(kReducePieces), pb(kReducePieces);
  parallel_pieces(rows, threads, [&](int piece, std::size_t begin, std::size_t end) {
    if (begin >= end) return;
    auto& w = pw[piece];
    auto& b = pb[piece];
    w.assign(l.w.size(), 0.0);
    b.assign(l.bias.size(), 0.0);
    for (std::size_t i = begin; i < end; ++i) {
      const double* dy = d_out.data() + i * l.cout;
      for (int co = 0; co < l.cout; ++co) b[co] += dy[co];
      if (l.kernel == 1) {
        const double* x = in.data() + i * l.cin;
        for (int ci = 0; ci < l.cin; ++ci) {
          double v = x[ci];
          if (v == 0.0) continue;
          double* wr = w.data() + std::size_t(ci) * l.cout;
          for (int co = 0; co < l.cout; ++co) wr[co] += v * dy[co];
        }
      } else {
        for (u32 e = nbr->offsets[i]; e < nbr->offsets[i + 1]; ++e) {
          const double* x = in.data() + std::size_t(nbr->sources[e]) * l.cin;
          double* wb = w.data() + std::size_t(nbr->slots[e]) * l.cin * l.cout;
          for (int ci = 0; ci < l.cin; ++ci) {
            double v = x[ci];
            if (v == 0.0) continue;
            double* wr = wb + std::size_t(ci) * l.cout;
            for (int co = 0; co < l.cout; ++co) wr[co] += v * dy[co];
          }
        }
      }
    }
  });
  for (std::size_t p = 0; p < kReducePieces; ++p) {
    if (pw[p].empty()) continue;
    for (std::size_t j = 0; j < gw.size(); ++j) gw[j] += pw[p][j];
    for (std::size_t j = 0; j < gb.size(); ++j) gb[j] += pb[p][j];
  }
}

void relu_forward(std::span<const double> in, std::span<double> out, std::size_t n, int threads) {
  parallel_for(n, threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) out[i] = in[i] > 0 ? in[i] : 0.0;
  });
}

}  // namespace

ProbNet ProbNet::make_default(u64 seed, double initial_b) {
  ProbNet net;
  double head_b_bias = initial_b_bias(initial_b);
  for (int stage = 0; stage < kNumStages; ++stage) {
    for (int c = 0; c < 4; ++c) {
      CtxClass ctx = CtxClass(c);
      VariantKey key{u8(stage), ctx};
      NormalGen gen(seed * 0x100001b3ull + u64(stage) * 64 + u64(c) * 7 + 1);
      Variant v;
      v.conv_in = make_layer(1, ctx_input_channels(ctx), kHiddenWidth, &gen);
      v.blocks.resize(kNumBlocks);
      for (auto& b : v.blocks) {
        b.first = make_layer(3, kHiddenWidth, kHiddenWidth, &gen);
        b.second = make_layer(3, kHiddenWidth, kHiddenWidth, &gen);
      }
      // Zero head: the untrained model predicts mu = current estimate and
      // b = initial_b everywhere.
      v.head = make_layer(1, kHiddenWidth, 2, nullptr);
      v.head.bias[1] = head_b_bias;
      net.variants_.emplace(key, std::move(v));
    }
  }
  net.rehash();
  return net;
}

const Variant& ProbNet::variant(VariantKey k) const {
  auto it = variants_.find(k);
  if (it == variants_.end()) throw ConfigError("probability model: missing weight variant");
  return it->second;
}

Variant& ProbNet::variant_mut(VariantKey k) {
  auto it = variants_.find(k);
  if (it == variants_.end()) throw ConfigError("probability model: missing weight variant");
  return it->second;
}

std::vector<VariantKey> ProbNet::keys() const {
  std::vector<VariantKey> out;
  out.reserve(variants_.size());
  for (const auto& [k, v] : variants_) out.push_back(k);
  return out;
}

ForwardTrace ProbNet::forward_trace(VariantKey k, const FeatureMatrix& feats,
                                    const NeighborList& nbr, int threads) const {
  const Variant& v = variant(k);
  std::size_t rows = feats.rows();
  if (feats.channels != v.conv_in.cin)
    throw ConfigError("probability model: feature width mismatch");
  ForwardTrace tr;
  tr.block_in.resize(v.blocks.size() + 1);
  tr.pre_relu.resize(v.blocks.size());
  tr.post_relu.resize(v.blocks.size());

  tr.block_in[0].assign(rows * kHiddenWidth, 0.0);
  conv_forward(v.conv_in, nullptr, feats.data, tr.block_in[0], rows, threads);
  for (std::size_t bi = 0; bi < v.blocks.size(); ++bi) {
    const auto& blk = v.blocks[bi];
    tr.pre_relu[bi].assign(rows * kHiddenWidth, 0.0);
    conv_forward(blk.first, &nbr, tr.block_in[bi], tr.pre_relu[bi], rows, threads);
    tr.post_relu[bi].assign(rows * kHiddenWidth, 0.0);
    relu_forward(tr.pre_relu[bi], tr.post_relu[bi], rows * kHiddenWidth, threads);
    tr.block_in[bi + 1].assign(rows * kHiddenWidth, 0.0);
    conv_forward(blk.second, &nbr, tr.post_relu[bi], tr.block_in[bi + 1], rows, threads);
    auto& out = tr.block_in[bi + 1];
    const auto& skip = tr.block_in[bi];
    parallel_for(rows * kHiddenWidth, threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) out[i] += skip[i];
    });
  }
  std::vector<double> head_out(rows * 2, 0.0);
  conv_forward(v.head, nullptr, tr.block_in.back(), head_out, rows, threads);
  tr.mu_raw.resize(rows);
  tr.b_raw.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    tr.mu_raw[i] = head_out[i * 2];
    tr.b_raw[i] = head_out[i * 2 + 1];
  }
  return tr;
}

LaplaceField ProbNet::forward(VariantKey k, const FeatureMatrix& feats, const NeighborList& nbr,
                              const ValueNorm& norm, int threads) const {
  ForwardTrace tr = forward_trace(k, feats, nbr, threads);
  std::size_t rows = feats.rows();
  LaplaceField out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    double mu = norm.to_value(feats.row(i)[0] + tr.mu_raw[i]);
    double b = softplus(tr.b_raw[i]) * kBUnit + kMinScaleB;
    out[i] = {mu, b};
  }
  return out;
}

void ProbNet::backward(VariantKey k, const FeatureMatrix& feats, const NeighborList& nbr,
                       const ForwardTrace& trace, std::span<const double> d_mu,
                       std::span<const double> d_b, VariantGrads& grads, int threads) const {
  const Variant& v = variant(k);
  std::size_t rows = feats.rows();
  auto layers = v.layers();
  if (grads.w.size() != layers.size()) grads.init_like(v);

  std::vector<double> d_head(rows * 2);
  for (std::size_t i = 0; i < rows; ++i) {
    d_head[i * 2] = d_mu[i];
    d_head[i * 2 + 1] = d_b[i];
  }
  std::size_t head_idx = layers.size() - 1;
  conv_param_grad(v.head, nullptr, trace.block_in.back(), d_head, rows, grads.w[head_idx],
                  grads.bias[head_idx], threads);
  std::vector<double> d_h(rows * kHiddenWidth, 0.0);
  conv_input_grad(v.head, nullptr, d_head, d_h, rows, threads);

  for (int bi = int(v.blocks.size()) - 1; bi >= 0; --bi) {
    const auto& blk = v.blocks[bi];
    std::size_t idx_first = 1 + std::size_t(bi) * 2;
    std::size_t idx_second = idx_first + 1;
    conv_param_grad(blk.second, &nbr, trace.post_relu[bi], d_h, rows, grads.w[idx_second],
                    grads.bias[idx_second], threads);
    std::vector<double> d_post(rows * kHiddenWidth, 0.0);
    conv_input_grad(blk.second, &nbr, d_h, d_post, rows, threads);
    // ReLU gate
    const auto& pre = trace.pre_relu[bi];
    parallel_for(rows * kHiddenWidth, threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i)
        if (pre[i] <= 0) d_post[i] = 0.0;
    });
    conv_param_grad(blk.first, &nbr, trace.block_in[bi], d_post, rows, grads.w[idx_first],
                    grads.bias[idx_first], threads);
    std::vector<double> d_in(rows * kHiddenWidth, 0.0);
    conv_input_grad(blk.first, &nbr, d_post, d_in, rows, threads);
    // skip connection
    parallel_for(rows * kHiddenWidth, threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) d_in[i] += d_h[i];
    });
    d_h = std::move(d_in);
  }
  conv_param_grad(v.conv_in, nullptr, feats.data, d_h, rows, grads.w[0], grads.bias[0], threads);
}

std::vector<u8> ProbNet::serialize() const {
  ByteWriter w;
  w.raw("SAPW", 4);
  w.u8v(1);
  w.u16v(u16(variants_.size()));
  for (const auto& [key, v] : variants_) {
    auto ls = v.layers();
    w.u8v(key.stage);
    w.u8v(u8(key.ctx));
    w.u8v(u8(ls.size()));
    for (const auto* l : ls) {
      w.u8v(u8(l->kernel));
      w.u16v(u16(l->cin));
      w.u16v(u16(l->cout));
    }
  }
  for (const auto& [key, v] : variants_) {
    for (const auto* l : v.layers()) {
      for (double x : l->w) w.f32v(float(x));
      for (double x : l->bias) w.f32v(float(x));
    }
  }
  u64 h = fnv1a64(w.data());
  w.u64v(h);
  return w.take();
}

ProbNet ProbNet::deserialize(std::span<const u8> bytes) {
  if (bytes.size() < 15) throw CorruptStreamError("weight file: too short");
  u64 stored;
  {
    ByteReader tr(bytes.subspan(bytes.size() - 8));
    stored = tr.u64v();
  }
  if (fnv1a64(bytes.first(bytes.size() - 8)) != stored)
    throw CorruptStreamError("weight file: checksum mismatch");

  ByteReader r(bytes.first(bytes.size() - 8));
  u8 magic[4];
  auto m = r.bytes(4);
  std::copy(m.begin(), m.end(), magic);
  if (std::memcmp(magic, "SAPW", 4) != 0) throw CorruptStreamError("weight file: bad magic");
  if (r.u8v() != 1) throw CorruptStreamError("weight file: unsupported version");
  u16 count = r.u16v();
  ProbNet net;
  struct Shape {
    VariantKey key;
    std::vector<std::array<int, 3>> layer_dims;  // kernel, cin, cout
  };
  std::vector<Shape> shapes(count);
  for (auto& s : shapes) {
    s.key.stage = r.u8v();
    u8 ctx = r.u8v();
    if (s.key.stage >= kNumStages || ctx > 3)
      throw CorruptStreamError("weight file: bad variant key");
    s.key.ctx = CtxClass(ctx);
    u8 layer_count = r.u8v();
    s.layer_dims.resize(layer_count);
    for (auto& d : s.layer_dims) {
      d[0] = r.u8v();
      d[1] = r.u16v();
      d[2] = r.u16v();
      if ((d[0] != 1 && d[0] != 3) || d[1] < 1 || d[1] > 64 || d[2] < 1 || d[2] > 64)
        throw CorruptStreamError("weight file: bad layer shape");
    }
  }
  for (const auto& s : shapes) {
    if (s.layer_dims.size() != 2 * kNumBlocks + 2)
      throw CorruptStreamError("weight file: unexpected layer count");
    Variant v;
    v.blocks.resize(kNumBlocks);
    auto ls = v.layers();
    for (std::size_t i = 0; i < ls.size(); ++i) {
      auto d = s.layer_dims[i];
      *ls[i] = make_layer(d[0], d[1], d[2], nullptr);
      for (auto& x : ls[i]->w) {
        float f = r.f32v();
        if (!std::isfinite(f)) throw CorruptStreamError("weight file: non-finite weight");
        x = f;
      }
      for (auto& x : ls[i]->bias) {
        float f = r.f32v();
        if (!std::isfinite(f)) throw CorruptStreamError("weight file: non-finite bias");
        x = f;
      }
    }
    if (v.conv_in.cin != ctx_input_channels(s.key.ctx) || v.head.cout != 2)
      throw CorruptStreamError("weight file: shape does not match context");
    if (!net.variants_.emplace(s.key, std::move(v)).second)
      throw CorruptStreamError("weight file: duplicate variant");
  }
  if (r.remaining() != 0) throw CorruptStreamError("weight file: trailing bytes");
  net.hash_ = stored;
  return net;
}

void ProbNet::rehash() {
  // Round to storage precision first so in-memory inference matches a
  // save/load round trip bit for bit.
  for (auto& [key, v] : variants_) {
    for (auto* l : v.layers()) {
      for (auto& x : l->w) x = double(float(x));
      for (auto& x : l->bias) x = double(float(x));
    }
  }
  auto bytes = serialize();
  ByteReader tr(std::span<const u8>(bytes).subspan(bytes.size() - 8));
  hash_ = tr.u64v();
}

void ProbNet::save(const std::string& path) const {
  auto bytes = serialize();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot open weight file for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw ConfigError("failed writing weight file: " + path);
}

ProbNet ProbNet::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open weight file: " + path);
  std::vector<u8> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace mpac
