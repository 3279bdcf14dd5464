#include "mpac/train.hpp"

#include <algorithm>
#include <cmath>

#include "mpac/laplace.hpp"

namespace mpac {

namespace {

struct SampleLoss {
  double bits = 0;
  u64 symbols = 0;
};

// Per-voxel loss and the chain back to the head's raw outputs.
SampleLoss sample_gradients(const TrainSample& s, const ForwardTrace& trace,
                            std::vector<double>& d_mu_raw, std::vector<double>& d_b_raw) {
  std::size_t rows = s.feats.rows();
  d_mu_raw.assign(rows, 0.0);
  d_b_raw.assign(rows, 0.0);
  SampleLoss loss;
  for (std::size_t i = 0; i < s.coded_rows.size(); ++i) {
    u32 row = s.coded_rows[i];
    double mu = s.norm.to_value(s.feats.row(row)[0] + trace.mu_raw[row]);
    double b = softplus(trace.b_raw[row]) * kBUnit + kMinScaleB;
    if (!std::isfinite(mu) || !std::isfinite(b))
      throw TrainingDivergenceError("non-finite distribution parameters");
    double dmu = 0, db = 0;
    loss.bits += laplace_nll_bits(mu, b, s.coded_values[i], s.lo, s.hi, &dmu, &db);
    d_mu_raw[row] += dmu * s.norm.scale;
    d_b_raw[row] += db * sigmoid(trace.b_raw[row]) * kBUnit;
  }
  loss.symbols = s.coded_rows.size();
  return loss;
}

}  // namespace

double Trainer::train_step(const TrainBatch& batch, std::span<const std::size_t> sample_ids) {
  std::map<VariantKey, VariantGrads> grads;
  std::map<VariantKey, u64> symbols;
  double total_bits = 0;
  u64 total_symbols = 0;
  std::vector<double> d_mu_raw, d_b_raw;
  for (std::size_t id : sample_ids) {
    const TrainSample& s = batch.samples.at(id);
    if (s.coded_rows.empty()) continue;
    const NeighborList& nbr = batch.nbrs.at(s.level_id);
    ForwardTrace trace = net_->forward_trace(s.key, s.feats, nbr, cfg_.threads);
    SampleLoss loss = sample_gradients(s, trace, d_mu_raw, d_b_raw);
    total_bits += loss.bits;
    total_symbols += loss.symbols;
    symbols[s.key] += loss.symbols;
    net_->backward(s.key, s.feats, nbr, trace, d_mu_raw, d_b_raw, grads[s.key], cfg_.threads);
  }
  if (total_symbols == 0) return 0.0;
  if (!std::isfinite(total_bits)) throw TrainingDivergenceError("non-finite training loss");
  for (const auto& [key, g] : grads)
    if (!g.finite()) throw TrainingDivergenceError("non-finite gradients");

  for (auto& [key, g] : grads) {
    double inv = 1.0 / double(symbols[key]);
    Variant& v = net_->variant_mut(key);
    auto layers = v.layers();
    AdamState& st = state_[key];
    if (st.mw.size() != layers.size()) {
      st.mw.resize(layers.size());
      st.vw.resize(layers.size());
      st.mb.resize(layers.size());
      st.vb.resize(layers.size());
      for (std::size_t li = 0; li < layers.size(); ++li) {
        st.mw[li].assign(layers[li]->w.size(), 0.0);
        st.vw[li].assign(layers[li]->w.size(), 0.0);
        st.mb[li].assign(layers[li]->bias.size(), 0.0);
        st.vb[li].assign(layers[li]->bias.size(), 0.0);
      }
    }
    st.t += 1;
    double bc1 = 1.0 - std::pow(cfg_.beta1, double(st.t));
    double bc2 = 1.0 - std::pow(cfg_.beta2, double(st.t));
    auto adam = [&](double* p, double* m, double* vv, const double* grad, std::size_t n) {
      for (std::size_t i = 0; i < n; ++i) {
        double gi = grad[i] * inv;
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        vv[i] = cfg_.beta2 * vv[i] + (1.0 - cfg_.beta2) * gi * gi;
        double mhat = m[i] / bc1;
        double vhat = vv[i] / bc2;
        p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    };
    for (std::size_t li = 0; li < layers.size(); ++li) {
      adam(layers[li]->w.data(), st.mw[li].data(), st.vw[li].data(), g.w[li].data(),
           layers[li]->w.size());
      adam(layers[li]->bias.data(), st.mb[li].data(), st.vb[li].data(), g.bias[li].data(),
           layers[li]->bias.size());
    }
  }
  net_->rehash();
  return total_bits / double(total_symbols);
}

double Trainer::eval_bits(const TrainBatch& batch) const {
  double total_bits = 0;
  u64 total_symbols = 0;
  for (const TrainSample& s : batch.samples) {
    if (s.coded_rows.empty()) continue;
    ForwardTrace trace =
        net_->forward_trace(s.key, s.feats, batch.nbrs.at(s.level_id), cfg_.threads);
    for (std::size_t i = 0; i < s.coded_rows.size(); ++i) {
      u32 row = s.coded_rows[i];
      double mu = s.norm.to_value(s.feats.row(row)[0] + trace.mu_raw[row]);
      double b = softplus(trace.b_raw[row]) * kBUnit + kMinScaleB;
      if (!std::isfinite(mu) || !std::isfinite(b))
        throw TrainingDivergenceError("non-finite distribution parameters");
      total_bits += laplace_nll_bits(mu, b, s.coded_values[i], s.lo, s.hi);
      total_symbols += 1;
    }
  }
  return total_symbols ? total_bits / double(total_symbols) : 0.0;
}

std::vector<std::vector<std::size_t>> steps_by_level(const TrainBatch& batch) {
  std::map<int, std::vector<std::size_t>> by_level;
  for (std::size_t i = 0; i < batch.samples.size(); ++i)
    by_level[batch.samples[i].level].push_back(i);
  std::vector<std::vector<std::size_t>> steps;
  steps.reserve(by_level.size());
  for (auto& [level, ids] : by_level) steps.push_back(std::move(ids));
  return steps;
}

}  // namespace mpac
