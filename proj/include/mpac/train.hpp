#pragma once

#include <map>
#include <span>
#include <vector>

#include "mpac/codec.hpp"
#include "mpac/prob_net.hpp"

namespace mpac {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int threads = 1;
};

// Adam optimizer over the probability model, driven by teacher-forced
// samples. Gradients are averaged per coded symbol for each weight variant.
// A non-finite loss or gradient aborts the step before any weight changes.
class Trainer {
 public:
  Trainer(ProbNet* net, TrainConfig cfg) : net_(net), cfg_(cfg) {}

  // One optimization step over the given samples; returns mean bits per
  // coded symbol under the pre-step weights.
  double train_step(const TrainBatch& batch, std::span<const std::size_t> sample_ids);

  // Mean bits per coded symbol with the current weights, no update.
  double eval_bits(const TrainBatch& batch) const;

 private:
  struct AdamState {
    std::vector<std::vector<double>> mw, vw, mb, vb;
    u64 t = 0;
  };
  ProbNet* net_;
  TrainConfig cfg_;
  std::map<VariantKey, AdamState> state_;
};

// Sample index sets grouped by scale, in coarse-to-fine order: the natural
// unit for one optimization step (all groups/contexts of one scale pair).
std::vector<std::vector<std::size_t>> steps_by_level(const TrainBatch& batch);

}  // namespace mpac
