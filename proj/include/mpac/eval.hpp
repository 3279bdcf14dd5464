#pragma once

#include <string>
#include <vector>

#include "mpac/codec.hpp"
#include "mpac/sparse_tensor.hpp"

namespace mpac {

struct EvalRow {
  std::string cloud;
  std::string mode;
  u64 points = 0;
  u64 attr_bits = 0;
  double bpp = 0;
  u64 geom_bits = 0;
  double enc_ms = 0;
  double dec_ms = 0;
  bool lossless = false;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  bool all_lossless() const;
};

bool tensors_equal(const SparseTensor& a, const SparseTensor& b);

// Encodes, decodes, verifies the round trip exactly, and reports rates and
// timings for one cloud.
EvalRow evaluate_cloud(const std::string& name, const SparseTensor& cloud,
                       const CodecConfig& cfg);

std::string format_table(const EvalReport& report);
// Columns: cloud,mode,points,attr_bits,bpp,geom_bits,enc_ms,dec_ms
std::string format_csv(const EvalReport& report);

}  // namespace mpac
