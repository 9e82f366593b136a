#include "flythrough/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "flythrough/config.hpp"
#include "flythrough/dreamer.hpp"
#include "flythrough/eval.hpp"
#include "flythrough/io.hpp"
#include "flythrough/png_export.hpp"
#include "flythrough/synthdata.hpp"
#include "flythrough/training.hpp"

namespace flythrough {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

/// Invalid user input discovered after argument parsing.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void export_png(const RgbdImage& image, const fs::path& rgbd_path) {
  fs::path stem = rgbd_path;
  stem.replace_extension();
  write_rgb_png(image, stem.string() + ".png");
  write_disparity_png(image, stem.string() + "_disparity.png");
}

struct GenDataArgs {
  std::uint64_t seed = 0;
  int count = 0;
  int size = 32;
  double fov_lo = kTrainFovLo;
  double fov_hi = kTrainFovHi;
  std::string out;
  bool png = false;
};

int gen_data(const GenDataArgs& a, std::ostream& out) {
  if (a.count < 1) throw UsageError("--count must be >= 1");
  if (a.size < 8 || a.size % 4 != 0) throw UsageError("--size must be >= 8 and divisible by 4");
  if (!(a.fov_lo > 0.0 && a.fov_lo <= a.fov_hi && a.fov_hi < 180.0)) throw UsageError("invalid FoV range");
  fs::create_directories(a.out);
  DatasetManifest manifest;
  manifest.seed = a.seed;
  manifest.count = a.count;
  manifest.size = a.size;
  manifest.fov_lo = a.fov_lo;
  manifest.fov_hi = a.fov_hi;
  for (int i = 0; i < a.count; ++i) {
    const TerrainSample sample = make_terrain_sample(a.seed, static_cast<std::uint64_t>(i), a.size, a.fov_lo, a.fov_hi);
    const std::string name = sample_file_name(i);
    write_rgbd(sample.image, fs::path(a.out) / name);
    if (a.png) export_png(sample.image, fs::path(a.out) / name);
    manifest.files.push_back(name);
    manifest.fov_deg.push_back(sample.view.fov_deg);
  }
  write_text_file(fs::path(a.out) / "manifest.json", dump(manifest_to_json(manifest)));
  out << "wrote " << a.count << " samples to " << a.out << "\n";
  return kExitOk;
}

struct ConfigArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

Config resolve_config(const ConfigArgs& a) {
  std::vector<std::string> overrides = a.overrides;
  if (a.seed) overrides.push_back("seed=" + std::to_string(*a.seed));
  try {
    return load_config(a.config.empty() ? std::nullopt : std::optional<fs::path>(a.config), overrides);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

void check_hash(const DenoiserModel& model, const Config& config, bool force, std::ostream& err) {
  if (model.meta.config_hash == config_hash(config)) return;
  if (!force)
    throw UsageError("checkpoint config_hash does not match the current config; pass --force to use it anyway");
  err << "warning: checkpoint config_hash does not match the current config (--force given)\n";
}

struct TrainArgs {
  ConfigArgs config;
  std::string data;
  std::string out;
  std::string resume;
  std::optional<std::int64_t> max_steps;
  std::int64_t checkpoint_every = 1000;
  std::int64_t log_every = 100;
  bool force = false;
};

int train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  ConfigArgs ca = a.config;
  if (a.max_steps) ca.overrides.push_back("max_steps=" + std::to_string(*a.max_steps));
  const Config config = resolve_config(ca);
  const std::vector<RgbdImage> dataset = load_dataset(a.data);
  if (dataset.empty()) throw UsageError("dataset is empty");
  if (dataset.front().width != config.resolution)
    throw UsageError("dataset size " + std::to_string(dataset.front().width) + " does not match resolution " +
                     std::to_string(config.resolution));
  fs::create_directories(a.out);
  const fs::path final_path = fs::path(a.out) / "checkpoint.ddcp";

  DenoiserModel model(config.unet());
  AdamState optimizer;
  if (!a.resume.empty()) {
    LoadedCheckpoint loaded = read_checkpoint(a.resume);
    check_hash(loaded.model, config, a.force, err);
    if (loaded.model.config() != config.unet() || loaded.model.meta.timesteps != config.t_steps)
      throw UsageError("checkpoint architecture differs from the config");
    model = std::move(loaded.model);
    optimizer = std::move(loaded.optimizer);
    if (!loaded.has_optimizer) {
      optimizer.reset(model.net().parameters());
      optimizer.step = model.meta.step;
    }
  } else {
    Rng init_rng(config.seed, "init");
    model.init(init_rng);
    model.meta = ModelMeta{0, config.t_steps, config.resolution, config_hash(config)};
    optimizer.reset(model.net().parameters());
    write_checkpoint(model, fs::path(a.out) / "checkpoint_init.ddcp", &optimizer);
  }

  const fs::path loss_path = fs::path(a.out) / "loss.csv";
  const bool append = !a.resume.empty() && fs::exists(loss_path);
  std::ofstream loss_csv(loss_path, append ? std::ios::app : std::ios::trunc);
  if (!loss_csv) throw std::runtime_error("cannot write " + loss_path.string());
  if (!append) loss_csv << "step,loss\n";

  double window = 0.0;
  std::int64_t window_n = 0;
  auto on_step = [&](std::int64_t step, double loss) {
    char line[64];
    std::snprintf(line, sizeof(line), "%lld,%.9g\n", static_cast<long long>(step), loss);
    loss_csv << line;
    window += loss;
    ++window_n;
    if (a.log_every > 0 && step % a.log_every == 0) {
      err << "step " << step << " loss " << window / static_cast<double>(window_n) << "\n";
      window = 0.0;
      window_n = 0;
    }
    if (a.checkpoint_every > 0 && step % a.checkpoint_every == 0 && step < config.max_steps) {
      loss_csv.flush();
      write_checkpoint(model, final_path, &optimizer);
    }
  };
  train_until(model, optimizer, dataset, config.schedule(), config.optimizer(), config.guidance(),
              config.pair_sampler(), config.batch, config.max_steps, config.seed, on_step);
  write_checkpoint(model, final_path, &optimizer);
  out << "trained to step " << model.meta.step << "; checkpoint " << final_path.string() << "\n";
  return kExitOk;
}

struct ExtrapolateArgs {
  ConfigArgs config;
  std::string checkpoint;
  std::string input;
  int steps = 20;
  std::string mode = "full";
  std::string out;
  bool force = false;
  bool png = false;
};

int extrapolate(const ExtrapolateArgs& a, std::ostream& out, std::ostream& err) {
  const Config config = resolve_config(a.config);
  if (a.steps < 1) throw UsageError("--steps must be >= 1");
  DreamerMode mode;
  try {
    mode = parse_dreamer_mode(a.mode);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  LoadedCheckpoint loaded = read_checkpoint(a.checkpoint);
  check_hash(loaded.model, config, a.force, err);
  const RgbdImage input = read_rgbd(a.input);

  Rng rng(config.seed, "extrapolate");
  Sequence seq = extrapolate_sequence(input, CameraPose{}, a.steps, loaded.model, config.schedule(),
                                      config.guidance(), config.autocruise(), config.dreamer(mode), rng);
  seq.provenance.seed = config.seed;

  fs::create_directories(a.out);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const fs::path path = fs::path(a.out) / frame_file_name(static_cast<int>(i));
    write_rgbd(seq.frames[i], path);
    if (a.png) export_png(seq.frames[i], path);
  }
  write_text_file(fs::path(a.out) / "poses.json", dump(poses_to_json(seq.poses, config.fov_deg)));
  json prov = provenance_to_json(seq.provenance);
  prov["checkpoint_step"] = loaded.model.meta.step;
  prov["config_hash"] = config_hash(config);
  write_text_file(fs::path(a.out) / "provenance.json", dump(prov));
  out << "wrote " << seq.frames.size() << " frames to " << a.out << "\n";
  return kExitOk;
}

struct EvaluateArgs {
  std::string frames;
  std::string poses;
  std::string report;
  int stride = 1;
};

int evaluate(const EvaluateArgs& a, std::ostream& out) {
  if (a.stride < 1) throw UsageError("--stride must be >= 1");
  const std::vector<PoseRecord> records = read_poses(a.poses);
  if (records.size() < 2) throw UsageError("need at least two poses");
  std::vector<RgbdImage> frames;
  std::vector<CameraPose> poses;
  for (std::size_t i = 0; i < records.size(); ++i) {
    frames.push_back(read_rgbd(fs::path(a.frames) / frame_file_name(static_cast<int>(i))));
    poses.push_back(records[i].pose);
  }
  const Intrinsics K = intrinsics_from_fov(records.front().fov_deg, frames.front().width, frames.front().height);
  ConsistencyReport report = reprojection_consistency(frames, poses, K, a.stride);
  try {
    report.mesh_alignment_psnr_db = mesh_alignment_score(frames.front(), poses.front(), frames.back(), poses.back(), K);
  } catch (const MetricError&) {
    report.mesh_alignment_psnr_db.reset();
  }
  write_text_file(a.report, dump(report_to_json(report)));
  out << "pairs scored " << report.per_pair.size() << ", skipped " << report.skipped.size();
  if (report.mean_adjacent_psnr_db) out << ", mean PSNR " << *report.mean_adjacent_psnr_db << " dB";
  out << "\n";
  return kExitOk;
}

int inspect(const std::string& path, std::ostream& out) {
  const auto bytes = read_file_bytes(path);
  const CheckpointHeader header = decode_checkpoint_header(bytes);
  const LoadedCheckpoint loaded = decode_checkpoint(bytes);
  out << "step " << loaded.model.meta.step << "\n";
  out << "T " << loaded.model.meta.timesteps << "\n";
  out << "resolution " << loaded.model.meta.resolution << "\n";
  out << "config_hash " << loaded.model.meta.config_hash << "\n";
  out << "parameters " << loaded.model.net().parameters().total_size() << "\n";
  for (const auto& t : header.tensors) {
    out << t.name << " [";
    for (std::size_t i = 0; i < t.shape.size(); ++i) out << (i ? ", " : "") << t.shape[i];
    out << "]\n";
  }
  return kExitOk;
}

void add_config_options(CLI::App* cmd, ConfigArgs& a) {
  cmd->add_option("--config", a.config, "Config JSON file")->check(CLI::ExistingFile);
  cmd->add_option("--set", a.overrides, "Override a config key, key=value (repeatable)");
  cmd->add_option("--seed", a.seed, "Seed (overrides the config)");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Single-view scene extrapolation with conditional diffusion", "flythrough"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Render a procedural terrain RGBD dataset");
  gen_cmd->add_option("--seed", gen.seed, "Dataset seed");
  gen_cmd->add_option("--count", gen.count, "Number of samples")->required();
  gen_cmd->add_option("--size", gen.size, "Image width and height");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--fov-lo", gen.fov_lo, "Lower bound of the sampled FoV (degrees)");
  gen_cmd->add_option("--fov-hi", gen.fov_hi, "Upper bound of the sampled FoV (degrees)");
  gen_cmd->add_flag("--export-png", gen.png, "Also write PNG previews");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the denoiser on pseudo pairs");
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  add_config_options(train_cmd, tr.config);
  train_cmd->add_option("--max-steps", tr.max_steps, "Total optimizer steps (overrides the config)");
  train_cmd->add_option("--resume", tr.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "Steps between intermediate checkpoints");
  train_cmd->add_option("--log-every", tr.log_every, "Steps between progress lines");
  train_cmd->add_flag("--force", tr.force, "Accept a checkpoint whose config_hash differs");

  ExtrapolateArgs ex;
  auto* ex_cmd = app.add_subcommand("extrapolate", "Generate a fly-through from one RGBD frame");
  ex_cmd->add_option("--checkpoint", ex.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  ex_cmd->add_option("--input", ex.input, "Input .rgbd frame")->required()->check(CLI::ExistingFile);
  ex_cmd->add_option("--steps", ex.steps, "Number of frames including the input");
  ex_cmd->add_option("--mode", ex.mode, "full, no-anchor, no-lookahead or naive")
      ->check(CLI::IsMember({"full", "no-anchor", "no-lookahead", "naive"}));
  ex_cmd->add_option("--out", ex.out, "Output directory")->required();
  add_config_options(ex_cmd, ex.config);
  ex_cmd->add_flag("--force", ex.force, "Accept a checkpoint whose config_hash differs");
  ex_cmd->add_flag("--export-png", ex.png, "Also write PNG previews");

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Score reprojection consistency of a sequence");
  ev_cmd->add_option("--frames", ev.frames, "Directory of frame_%04d.rgbd")->required()->check(CLI::ExistingDirectory);
  ev_cmd->add_option("--poses", ev.poses, "poses.json")->required()->check(CLI::ExistingFile);
  ev_cmd->add_option("--report", ev.report, "Output report JSON")->required();
  ev_cmd->add_option("--stride", ev.stride, "Frame distance between compared pairs");

  std::string inspect_path;
  auto* in_cmd = app.add_subcommand("inspect", "Print checkpoint metadata and tensors");
  in_cmd->add_option("--checkpoint", inspect_path, "Model checkpoint")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return gen_data(gen, out);
    if (train_cmd->parsed()) return train(tr, out, err);
    if (ex_cmd->parsed()) return extrapolate(ex, out, err);
    if (ev_cmd->parsed()) return evaluate(ev, out);
    if (in_cmd->parsed()) return inspect(inspect_path, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"flythrough"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace flythrough
