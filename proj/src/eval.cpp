#include "mpac/eval.hpp"

#include <chrono>
#include <iomanip>
#include <sstream>

namespace mpac {

bool EvalReport::all_lossless() const {
  for (const auto& r : rows)
    if (!r.lossless) return false;
  return true;
}

bool tensors_equal(const SparseTensor& a, const SparseTensor& b) {
  if (a.depth() != b.depth() || a.channels() != b.channels() || a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.coord(i) != b.coord(i)) return false;
    for (int c = 0; c < a.channels(); ++c)
      if (a.attr(i, c) != b.attr(i, c)) return false;
  }
  return true;
}

EvalRow evaluate_cloud(const std::string& name, const SparseTensor& cloud,
                       const CodecConfig& cfg) {
  using clock = std::chrono::steady_clock;
  EvalRow row;
  row.cloud = name;
  row.mode = mode_name(cfg.mode);
  row.points = cloud.size();

  auto t0 = clock::now();
  EncodeResult enc = encode(cloud, cfg);
  auto t1 = clock::now();
  SparseTensor dec = decode(enc.bytes, cfg);
  auto t2 = clock::now();

  row.attr_bits = enc.stats.attr_bits();
  row.bpp = enc.stats.bpp();
  row.geom_bits = enc.stats.geom_bits();
  row.enc_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  row.dec_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
  row.lossless = tensors_equal(cloud, dec);
  return row;
}

std::string format_table(const EvalReport& report) {
  std::ostringstream os;
  os << std::left << std::setw(24) << "cloud" << std::setw(12) << "mode" << std::right
     << std::setw(9) << "points" << std::setw(12) << "attr_bits" << std::setw(9) << "bpp"
     << std::setw(12) << "geom_bits" << std::setw(10) << "enc_ms" << std::setw(10) << "dec_ms"
     << std::setw(10) << "lossless" << "\n";
  for (const auto& r : report.rows) {
    os << std::left << std::setw(24) << r.cloud << std::setw(12) << r.mode << std::right
       << std::setw(9) << r.points << std::setw(12) << r.attr_bits << std::setw(9) << std::fixed
       << std::setprecision(3) << r.bpp << std::setw(12) << r.geom_bits << std::setw(10)
       << std::setprecision(1) << r.enc_ms << std::setw(10) << r.dec_ms << std::setw(10)
       << (r.lossless ? "yes" : "NO") << "\n";
  }
  return os.str();
}

std::string format_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "cloud,mode,points,attr_bits,bpp,geom_bits,enc_ms,dec_ms\n";
  for (const auto& r : report.rows) {
    os << r.cloud << "," << r.mode << "," << r.points << "," << r.attr_bits << ","
       << std::fixed << std::setprecision(4) << r.bpp << "," << r.geom_bits << ","
       << std::setprecision(2) << r.enc_ms << "," << r.dec_ms << "\n";
  }
  return os.str();
}

}  // namespace mpac
