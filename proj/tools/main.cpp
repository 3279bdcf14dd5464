#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mpac/codec.hpp"
#include "mpac/eval.hpp"
#include "mpac/ply_io.hpp"
#include "mpac/prob_net.hpp"
#include "mpac/synth.hpp"
#include "mpac/train.hpp"
#include "mpac/voxelize.hpp"

namespace {

std::vector<mpac::u8> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw mpac::ConfigError("cannot open file: " + path);
  return std::vector<mpac::u8>((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<mpac::u8>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw mpac::ConfigError("cannot open file for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw mpac::ConfigError("failed writing file: " + path);
}

mpac::PlyCloud tensor_to_ply(const mpac::SparseTensor& t) {
  mpac::PlyCloud c;
  c.has_rgb = true;
  c.xyz.reserve(t.size());
  c.rgb.reserve(t.size());
  auto clamp_u8 = [](mpac::i32 v) {
    return mpac::u8(v < 0 ? 0 : (v > 255 ? 255 : v));
  };
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto& p = t.coord(i);
    c.xyz.push_back({double(p[0]), double(p[1]), double(p[2])});
    if (t.channels() == 3)
      c.rgb.push_back({clamp_u8(t.attr(i, 0)), clamp_u8(t.attr(i, 1)), clamp_u8(t.attr(i, 2))});
    else
      c.rgb.push_back({clamp_u8(t.attr(i, 0)), clamp_u8(t.attr(i, 0)), clamp_u8(t.attr(i, 0))});
  }
  return c;
}

struct ModelOpts {
  std::string weights;
  double b0 = 2.0;
};

void add_model_opts(CLI::App* cmd, ModelOpts& m) {
  cmd->add_option("--weights", m.weights, "probability model weight file (default: analytic)");
  cmd->add_option("--b0", m.b0, "Laplace scale of the analytic fallback")->check(CLI::PositiveNumber);
}

struct LoadedModel {
  std::optional<mpac::ProbNet> net;
  const mpac::ProbNet* ptr() const { return net ? &*net : nullptr; }
};

LoadedModel load_model(const ModelOpts& m) {
  LoadedModel lm;
  if (!m.weights.empty()) lm.net = mpac::ProbNet::load(m.weights);
  return lm;
}

void print_stats(const mpac::CodecStats& st, bool verbose) {
  std::cout << "points " << st.points << ", total " << st.total_bytes << " B, attr "
            << st.attr_bits() << " bits (" << std::fixed << std::setprecision(3) << st.bpp()
            << " bpp), geometry " << st.geom_bits() << " bits, header " << st.header_bytes
            << " B\n";
  if (!verbose) return;
  std::cout << std::left << std::setw(16) << "stream" << std::right << std::setw(10) << "symbols"
            << std::setw(12) << "bytes" << std::setw(12) << "est_bits" << std::setw(12)
            << "quant_bits" << "\n";
  for (const auto& s : st.streams) {
    std::cout << std::left << std::setw(16) << s.name << std::right << std::setw(10) << s.symbols
              << std::setw(12) << s.payload_bytes << std::setw(12) << std::setprecision(1)
              << std::fixed << s.est_bits << std::setw(12) << s.est_quant_bits << "\n";
  }
}

int run(int argc, char** argv) {
  CLI::App app{"multiscale lossless point-cloud attribute codec"};
  app.require_subcommand(1);

  // --- encode ---
  auto* enc_cmd = app.add_subcommand("encode", "compress a PLY cloud");
  std::string enc_in, enc_out, enc_mode = "cs+cg+cc";
  int enc_depth = 10, enc_threads = 1;
  bool enc_mono = false, enc_verbose = false;
  ModelOpts enc_model;
  enc_cmd->add_option("input", enc_in, "input .ply")->required();
  enc_cmd->add_option("output", enc_out, "output bitstream")->required();
  enc_cmd->add_option("--depth", enc_depth, "octree depth")->check(CLI::Range(1, 16));
  enc_cmd->add_option("--mode", enc_mode, "cs | cs+cg | cs+cc | cs+cg+cc [+seq]");
  enc_cmd->add_option("--threads", enc_threads, "worker threads")->check(CLI::PositiveNumber);
  enc_cmd->add_flag("--mono", enc_mono, "code a single luminance channel");
  enc_cmd->add_flag("--verbose", enc_verbose, "print per-stream table");
  add_model_opts(enc_cmd, enc_model);

  // --- decode ---
  auto* dec_cmd = app.add_subcommand("decode", "decompress a bitstream to PLY");
  std::string dec_in, dec_out;
  int dec_threads = 1;
  bool dec_ascii = false;
  ModelOpts dec_model;
  dec_cmd->add_option("input", dec_in, "input bitstream")->required();
  dec_cmd->add_option("output", dec_out, "output .ply")->required();
  dec_cmd->add_option("--threads", dec_threads, "worker threads")->check(CLI::PositiveNumber);
  dec_cmd->add_flag("--ascii", dec_ascii, "write ascii PLY");
  add_model_opts(dec_cmd, dec_model);

  // --- train ---
  auto* tr_cmd = app.add_subcommand("train", "fit the probability model");
  std::vector<std::string> tr_inputs;
  std::string tr_out = "weights.sapw", tr_mode = "cs+cg+cc";
  int tr_depth = 8, tr_threads = 1, tr_steps = 100, tr_synth = 8;
  std::size_t tr_points = 2000;
  double tr_lr = 1e-3, tr_b0 = 2.0;
  mpac::u64 tr_seed = 1;
  bool tr_mono = false;
  tr_cmd->add_option("--inputs", tr_inputs, "training .ply files (default: synthetic corpus)");
  tr_cmd->add_option("--out", tr_out, "weight file to write");
  tr_cmd->add_option("--mode", tr_mode, "coding mode to train for");
  tr_cmd->add_option("--depth", tr_depth, "octree depth")->check(CLI::Range(1, 16));
  tr_cmd->add_option("--steps", tr_steps, "optimization steps")->check(CLI::PositiveNumber);
  tr_cmd->add_option("--synth-count", tr_synth, "synthetic training clouds")
      ->check(CLI::PositiveNumber);
  tr_cmd->add_option("--points", tr_points, "points per synthetic cloud");
  tr_cmd->add_option("--lr", tr_lr, "learning rate")->check(CLI::PositiveNumber);
  tr_cmd->add_option("--seed", tr_seed, "seed for weights and synthetic data");
  tr_cmd->add_option("--b0", tr_b0, "initial Laplace scale")->check(CLI::PositiveNumber);
  tr_cmd->add_option("--threads", tr_threads, "worker threads")->check(CLI::PositiveNumber);
  tr_cmd->add_flag("--mono", tr_mono, "train on single-channel data");

  // --- eval ---
  auto* ev_cmd = app.add_subcommand("eval", "rate/timing report with round-trip check");
  std::vector<std::string> ev_inputs;
  std::string ev_modes = "cs,cs+cg,cs+cg+cc", ev_csv;
  int ev_depth = 10, ev_threads = 1;
  bool ev_mono = false;
  ModelOpts ev_model;
  ev_cmd->add_option("inputs", ev_inputs, "input .ply files")->required();
  ev_cmd->add_option("--modes", ev_modes, "comma-separated mode list");
  ev_cmd->add_option("--depth", ev_depth, "octree depth")->check(CLI::Range(1, 16));
  ev_cmd->add_option("--threads", ev_threads, "worker threads")->check(CLI::PositiveNumber);
  ev_cmd->add_option("--csv", ev_csv, "also write CSV to this path");
  ev_cmd->add_flag("--mono", ev_mono, "code a single luminance channel");
  add_model_opts(ev_cmd, ev_model);

  // --- synth ---
  auto* sy_cmd = app.add_subcommand("synth", "generate a synthetic test cloud");
  std::string sy_out, sy_shape = "sphere", sy_texture = "gradient", sy_image;
  int sy_depth = 8;
  std::size_t sy_points = 2000;
  mpac::u64 sy_seed = 1;
  bool sy_mono = false, sy_ascii = false;
  sy_cmd->add_option("output", sy_out, "output .ply")->required();
  sy_cmd->add_option("--shape", sy_shape, "sphere | box | torus | walk");
  sy_cmd->add_option("--texture", sy_texture, "gradient | checker | noise | image");
  sy_cmd->add_option("--image", sy_image, "PPM file for the image texture");
  sy_cmd->add_option("--depth", sy_depth, "octree depth")->check(CLI::Range(2, 16));
  sy_cmd->add_option("--points", sy_points, "approximate voxel count");
  sy_cmd->add_option("--seed", sy_seed, "random seed");
  sy_cmd->add_flag("--mono", sy_mono, "grayscale attributes");
  sy_cmd->add_flag("--ascii", sy_ascii, "write ascii PLY");

  // --- inspect ---
  auto* in_cmd = app.add_subcommand("inspect", "print bitstream header");
  std::string in_path;
  in_cmd->add_option("input", in_path, "input bitstream")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage errors exit 1, help exits 0
  }

  if (*enc_cmd) {
    auto ply = mpac::read_ply(enc_in);
    auto cloud = mpac::voxelize(ply, enc_depth, enc_mono);
    LoadedModel model = load_model(enc_model);
    mpac::CodecConfig cfg{mpac::parse_mode(enc_mode), enc_threads, model.ptr(), enc_model.b0};
    auto res = mpac::encode(cloud, cfg);
    write_file(enc_out, res.bytes);
    print_stats(res.stats, enc_verbose);
  } else if (*dec_cmd) {
    auto bytes = read_file(dec_in);
    LoadedModel model = load_model(dec_model);
    mpac::CodecConfig cfg{{}, dec_threads, model.ptr(), dec_model.b0};
    auto cloud = mpac::decode(bytes, cfg);
    mpac::write_ply(dec_out, tensor_to_ply(cloud), !dec_ascii);
    std::cout << "decoded " << cloud.size() << " points, " << cloud.channels() << " channel(s)\n";
  } else if (*tr_cmd) {
    std::vector<mpac::SparseTensor> clouds;
    if (!tr_inputs.empty()) {
      for (const auto& p : tr_inputs)
        clouds.push_back(mpac::voxelize(mpac::read_ply(p), tr_depth, tr_mono));
    } else {
      const char* shapes[] = {"sphere", "box", "torus", "walk"};
      const char* textures[] = {"gradient", "checker", "noise"};
      for (int i = 0; i < tr_synth; ++i) {
        mpac::SynthSpec spec;
        spec.shape = shapes[i % 4];
        spec.texture = textures[i % 3];
        spec.depth = tr_depth;
        spec.target_points = tr_points;
        spec.seed = tr_seed * 1000 + mpac::u64(i);
        spec.mono = tr_mono;
        clouds.push_back(mpac::synth_cloud(spec));
      }
    }
    mpac::CodecConfig cfg{mpac::parse_mode(tr_mode), tr_threads, nullptr, tr_b0};
    std::vector<mpac::TrainBatch> batches;
    std::vector<std::pair<std::size_t, std::vector<std::size_t>>> units;
    for (std::size_t b = 0; b < clouds.size(); ++b) {
      batches.push_back(mpac::collect_training_samples(clouds[b], cfg));
      for (auto& ids : mpac::steps_by_level(batches.back())) units.emplace_back(b, std::move(ids));
    }
    if (units.empty()) throw mpac::ConfigError("training corpus produced no samples");
    mpac::ProbNet net = mpac::ProbNet::make_default(tr_seed, tr_b0);
    mpac::TrainConfig tc;
    tc.lr = tr_lr;
    tc.threads = tr_threads;
    mpac::Trainer trainer(&net, tc);
    double first_loss = -1, loss = 0;
    for (int step = 0; step < tr_steps; ++step) {
      auto& [b, ids] = units[std::size_t(step) % units.size()];
      loss = trainer.train_step(batches[b], ids);
      if (first_loss < 0) first_loss = loss;
      if (step % 10 == 0 || step == tr_steps - 1)
        std::cout << "step " << step << ": " << std::fixed << std::setprecision(4) << loss
                  << " bits/symbol\n";
    }
    net.save(tr_out);
    std::cout << "saved " << tr_out << " (hash " << std::hex << net.content_hash() << std::dec
              << "), loss " << std::setprecision(4) << first_loss << " -> " << loss << "\n";
  } else if (*ev_cmd) {
    std::vector<mpac::CodecMode> modes;
    std::stringstream ms(ev_modes);
    std::string tok;
    while (std::getline(ms, tok, ',')) modes.push_back(mpac::parse_mode(tok));
    if (modes.empty()) throw mpac::ConfigError("no modes given");
    LoadedModel model = load_model(ev_model);
    mpac::EvalReport report;
    for (const auto& path : ev_inputs) {
      auto cloud = mpac::voxelize(mpac::read_ply(path), ev_depth, ev_mono);
      std::string name = path;
      if (auto slash = name.find_last_of('/'); slash != std::string::npos)
        name = name.substr(slash + 1);
      for (const auto& m : modes) {
        mpac::CodecConfig cfg{m, ev_threads, model.ptr(), ev_model.b0};
        report.rows.push_back(mpac::evaluate_cloud(name, cloud, cfg));
      }
    }
    std::cout << mpac::format_table(report);
    if (!ev_csv.empty()) {
      std::ofstream f(ev_csv, std::ios::trunc);
      if (!f) throw mpac::ConfigError("cannot open file for writing: " + ev_csv);
      f << mpac::format_csv(report);
    }
    if (!report.all_lossless())
      throw mpac::CorruptStreamError("round-trip mismatch in evaluation");
  } else if (*sy_cmd) {
    mpac::SynthSpec spec;
    spec.shape = sy_shape;
    spec.texture = sy_texture;
    spec.depth = sy_depth;
    spec.target_points = sy_points;
    spec.seed = sy_seed;
    spec.mono = sy_mono;
    mpac::Image img;
    if (!sy_image.empty()) {
      img = mpac::read_ppm(sy_image);
      spec.image = &img;
    }
    auto cloud = mpac::synth_cloud(spec);
    mpac::write_ply(sy_out, tensor_to_ply(cloud), !sy_ascii);
    std::cout << "wrote " << cloud.size() << " points to " << sy_out << "\n";
  } else if (*in_cmd) {
    auto info = mpac::inspect(read_file(in_path));
    std::cout << "mode " << mpac::mode_name(info.mode) << ", channels " << info.channels
              << ", colorspace " << (info.colorspace ? "ycocg" : "raw") << ", scales "
              << info.scales << "\n";
    std::cout << "voxels per scale:";
    for (auto c : info.counts) std::cout << " " << c;
    std::cout << "\nranges:";
    for (const auto& r : info.ranges) std::cout << " [" << r[0] << "," << r[1] << "]";
    std::cout << "\nmodel hash " << std::hex << info.model_hash << std::dec << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const mpac::CorruptStreamError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mpac::TrainingDivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const mpac::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
