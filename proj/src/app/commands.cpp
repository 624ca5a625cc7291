#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>

#include <CLI11.hpp>

#include "app.hpp"
#include "ordsr/rng.hpp"
#include "ordsr/trainer.hpp"

namespace ordsr::app {

namespace {

namespace fs = std::filesystem;

enum class Verbosity { Quiet, Info, Debug };

Verbosity verbosity() {
  const char* env = std::getenv("ORDSR_LOG");
  if (!env) return Verbosity::Info;
  const std::string v = env;
  if (v == "quiet" || v == "0") return Verbosity::Quiet;
  if (v == "debug" || v == "2") return Verbosity::Debug;
  return Verbosity::Info;
}

bool is_image(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".png" || ext == ".pgm" || ext == ".ppm";
}

std::vector<fs::path> image_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw UsageError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("bad JSON in " + path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  out << std::setw(2) << j << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

Checkpoint load_for_scale(const fs::path& ckpt, int scale) {
  Checkpoint c = load_checkpoint(ckpt);
  if (c.metadata.contains("scale") && c.metadata["scale"].get<int>() != scale) {
    throw UsageError("checkpoint was trained for scale " +
                     std::to_string(c.metadata["scale"].get<int>()) + ", not " +
                     std::to_string(scale));
  }
  return c;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

struct EvalRow {
  std::string image;
  QualityReport sr;
  QualityReport bicubic;
};

std::vector<EvalRow> evaluate_dir(const Network& net, const fs::path& hr_dir, int scale,
                                  bool ensemble, std::size_t crop) {
  std::vector<EvalRow> rows;
  for (const fs::path& file : image_files(hr_dir)) {
    const Plane hr = crop_to_multiple(read_luma(file), scale);
    const auto c = static_cast<std::size_t>(scale);
    const Plane lr = bicubic_resize(hr, hr.height() / c, hr.width() / c);
    const InferenceResult r = run_inference(net, gray_image(lr), scale, ensemble);
    rows.push_back({file.filename().string(), quality(r.luma, hr, crop),
                    quality(r.bicubic_luma, hr, crop)});
  }
  if (rows.empty()) throw UsageError("no images in " + hr_dir.string());
  return rows;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string config_file;
  std::string preset = "standard";
  std::vector<std::string> data_dirs;
  int synthetic = 0;
  std::string out_dir;
  std::optional<int> scale, seed_flag, epochs1, epochs2, batch, max_steps;
  std::optional<std::string> variant;
  std::optional<double> lr;
  std::optional<bool> augment;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  int preset_scale = a.scale.value_or(3);
  if (!a.scale && !a.config_file.empty()) {
    const auto j = read_json_file(a.config_file);
    if (j.contains("scale")) preset_scale = j["scale"].get<int>();
  }
  TrainConfig config = TrainConfig::preset(a.preset, preset_scale);
  if (!a.config_file.empty()) config = TrainConfig::from_json(read_json_file(a.config_file), config);
  nlohmann::json flags = nlohmann::json::object();
  if (a.scale) flags["scale"] = *a.scale;
  if (a.variant) flags["variant"] = *a.variant;
  if (a.seed_flag) flags["seed"] = *a.seed_flag;
  if (a.epochs1) flags["epochs_phase1"] = *a.epochs1;
  if (a.epochs2) flags["epochs_phase2"] = *a.epochs2;
  if (a.batch) flags["batch"] = *a.batch;
  if (a.max_steps) flags["max_steps_per_epoch"] = *a.max_steps;
  if (a.lr) flags["learning_rate"] = *a.lr;
  if (a.augment) flags["augment"] = *a.augment;
  config = TrainConfig::from_json(flags, config);
  config.validate();

  std::vector<Plane> images;
  for (const auto& dir : a.data_dirs) {
    for (const auto& f : image_files(dir)) images.push_back(read_luma(f));
  }
  for (int k = 0; k < a.synthetic; ++k) {
    images.push_back(synthetic_image(96, 96, derive_seed(config.seed, 0x5E0 + k)));
  }
  if (images.empty()) throw UsageError("no training images (use --data or --synthetic)");

  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  write_json_file(dir / "config.json", config.to_json());
  std::ofstream log(dir / "train_log.jsonl");
  TrainHooks hooks;
  hooks.log = &log;
  hooks.checkpoint_dir = dir;
  const Verbosity v = verbosity();
  hooks.on_epoch = [&](const EpochSummary& s) {
    if (v != Verbosity::Quiet) err << s.to_json().dump() << std::endl;
  };
  const TrainResult r = train(config, images, hooks);
  save_checkpoint(dir / "final.ckpt", r.network,
                  {{"config", config.to_json()}, {"scale", config.scale}});
  nlohmann::json summary = {{"checkpoint", (dir / "final.ckpt").string()},
                            {"steps", r.steps},
                            {"images", images.size()},
                            {"config", config.to_json()}};
  if (!r.epochs.empty()) summary["final_epoch"] = r.epochs.back().to_json();
  out << summary.dump() << std::endl;
  return kOk;
}

// --- infer / eval ----------------------------------------------------------

struct InferArgs {
  std::string ckpt, input, output, reference;
  int scale = 3;
  bool ensemble = false;
  int bit_depth = 8;
  std::optional<int> crop;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  const Checkpoint ck = load_for_scale(a.ckpt, a.scale);
  const Image input = read_image(a.input);
  const InferenceResult r = run_inference(ck.network, input, a.scale, a.ensemble);
  write_image(a.output, r.image, a.bit_depth);
  nlohmann::json row = {{"output", a.output}, {"metadata", r.metadata}};
  row["metadata"]["checkpoint"] = a.ckpt;
  if (!a.reference.empty()) {
    const Plane ref = read_luma(a.reference);
    if (!ref.same_dims(r.luma)) throw UsageError("reference dims differ from the output");
    const std::size_t crop = static_cast<std::size_t>(a.crop.value_or(a.scale));
    row["quality"] = quality(r.luma, ref, crop).to_json();
    row["bicubic_quality"] = quality(r.bicubic_luma, ref, crop).to_json();
  }
  out << row.dump() << std::endl;
  return kOk;
}

struct EvalArgs {
  std::string ckpt, hr_dir;
  int scale = 3;
  bool ensemble = false;
  std::optional<int> crop;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const Checkpoint ck = load_for_scale(a.ckpt, a.scale);
  const std::size_t crop = static_cast<std::size_t>(a.crop.value_or(a.scale));
  const auto rows = evaluate_dir(ck.network, a.hr_dir, a.scale, a.ensemble, crop);
  std::vector<double> p, s, bp, bs;
  for (const auto& r : rows) {
    out << nlohmann::json{{"image", r.image},
                          {"sr", r.sr.to_json()},
                          {"bicubic", r.bicubic.to_json()}}
               .dump()
        << '\n';
    p.push_back(r.sr.psnr);
    s.push_back(r.sr.ssim);
    bp.push_back(r.bicubic.psnr);
    bs.push_back(r.bicubic.ssim);
  }
  out << nlohmann::json{{"summary", true},
                        {"images", rows.size()},
                        {"scale", a.scale},
                        {"ensemble", a.ensemble},
                        {"crop", crop},
                        {"psnr", mean(p)},
                        {"ssim", mean(s)},
                        {"bicubic_psnr", mean(bp)},
                        {"bicubic_ssim", mean(bs)},
                        {"psnr_gain", mean(p) - mean(bp)}}
             .dump()
      << std::endl;
  return kOk;
}

// --- check -----------------------------------------------------------------

int cmd_check(const CheckOptions& options, std::ostream& out) {
  const auto entries = run_checks(options);
  bool ok = true;
  for (const auto& e : entries) {
    out << e.to_json().dump() << '\n';
    ok = ok && e.passed;
  }
  out << nlohmann::json{{"summary", true}, {"checks", entries.size()}, {"passed", ok}}.dump()
      << std::endl;
  return ok ? kOk : kCheckFailed;
}

// --- analyze ---------------------------------------------------------------

struct ProfileArgs {
  std::vector<std::string> inputs;
  int scale = 3;
  int stride = 2;
  int n = 8;
  std::string output;
};

int cmd_profile(const ProfileArgs& a, std::ostream& out) {
  if (a.n < 2 || a.stride < 1 || a.n % a.stride != 0) {
    throw UsageError("stride must divide the block size");
  }
  const FilterBank bank = dct_basis(a.n);
  std::ofstream file;
  std::ostream* dst = &out;
  if (!a.output.empty()) {
    file.open(a.output);
    if (!file) throw std::runtime_error("cannot write " + a.output);
    dst = &file;
  }
  *dst << "image,index,hr,degraded,log_gap,abs_gap\n" << std::setprecision(10);
  for (const auto& in : a.inputs) {
    const Plane hr = crop_to_multiple(read_luma(in), std::lcm(a.scale, a.stride));
    const Plane lr = degrade(hr, a.scale);
    const auto ph = spectrum_profile(hr, bank, a.stride);
    const auto pl = spectrum_profile(lr, bank, a.stride);
    const auto lg = spectrum_log_gap(ph, pl);
    const auto ag = spectrum_abs_gap(ph, pl);
    const std::string name = fs::path(in).filename().string();
    for (std::size_t i = 0; i < ph.size(); ++i) {
      *dst << name << ',' << i + 1 << ',' << ph[i] << ',' << pl[i] << ',' << lg[i] << ','
           << ag[i] << '\n';
    }
  }
  dst->flush();
  return kOk;
}

struct ParamsArgs {
  std::string ckpt;
  int height = 512;
  int width = 512;
  std::optional<int> stride;
  int bytes = 4;
};

int cmd_params(const ParamsArgs& a, std::ostream& out) {
  Architecture arch = a.ckpt.empty() ? Architecture::standard()
                                     : load_checkpoint(a.ckpt).network.architecture();
  if (a.stride) arch.stride = *a.stride;
  if (a.height < 1 || a.width < 1 || a.bytes < 1) throw UsageError("dims must be positive");
  const ParameterCount p = count_parameters(arch);
  const ParameterCount vdsr = vdsr_reference_parameters();
  const auto mem = activation_memory(arch, static_cast<std::size_t>(a.height),
                                     static_cast<std::size_t>(a.width),
                                     static_cast<std::size_t>(a.bytes));
  Architecture dense = arch;
  dense.stride = 1;
  const auto mem1 = activation_memory(dense, static_cast<std::size_t>(a.height),
                                      static_cast<std::size_t>(a.width),
                                      static_cast<std::size_t>(a.bytes));
  out << nlohmann::json{{"arch", arch.to_json()},
                        {"weights", p.weights},
                        {"biases", p.biases},
                        {"total", p.total()},
                        {"vdsr_weights", vdsr.weights},
                        {"vdsr_delta", vdsr.weights - p.weights},
                        {"height", a.height},
                        {"width", a.width},
                        {"bytes_per_value", a.bytes},
                        {"activation_memory_bytes", mem},
                        {"activation_memory_mib", static_cast<double>(mem) / (1 << 20)},
                        {"stride1_memory_bytes", mem1}}
             .dump()
      << std::endl;
  return kOk;
}

struct SweepArgs {
  std::vector<std::string> ckpts;
  std::string hr_dir;
  int scale = 3;
};

int cmd_tsweep(const SweepArgs& a, std::ostream& out) {
  std::map<int, std::vector<double>> by_t;
  for (const auto& path : a.ckpts) {
    const Checkpoint ck = load_for_scale(path, a.scale);
    const auto rows = evaluate_dir(ck.network, a.hr_dir, a.scale, false,
                                   static_cast<std::size_t>(a.scale));
    std::vector<double> p, b;
    for (const auto& r : rows) {
      p.push_back(r.sr.psnr);
      b.push_back(r.bicubic.psnr);
    }
    out << nlohmann::json{{"checkpoint", path},
                          {"threshold", ck.network.threshold},
                          {"psnr", mean(p)},
                          {"bicubic_psnr", mean(b)}}
               .dump()
        << '\n';
    by_t[ck.network.threshold].push_back(mean(p));
  }
  int best = by_t.begin()->first;
  for (const auto& [t, v] : by_t) {
    if (mean(v) > mean(by_t[best])) best = t;
  }
  out << nlohmann::json{{"summary", true}, {"best_threshold", best}}.dump() << std::endl;
  return kOk;
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Transform-domain super-resolution with a learnable DCT layer"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Two-phase training");
  train_cmd->add_option("--config", ta.config_file, "JSON config file")->check(CLI::ExistingFile);
  train_cmd->add_option("--preset", ta.preset, "Base preset: standard or desk")
      ->check(CLI::IsMember({"standard", "desk"}));
  train_cmd->add_option("--data", ta.data_dirs, "Directory of HR training images");
  train_cmd->add_option("--synthetic", ta.synthetic, "Number of synthetic images to add")
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--out", ta.out_dir, "Output directory")->required();
  train_cmd->add_option("--scale", ta.scale)->check(CLI::Range(2, 4));
  train_cmd->add_option("--variant", ta.variant, "ORDSR, DSR-OC, DSR-CC, DSR-UC, DCT-DSR, ORDSR-RI");
  train_cmd->add_option("--seed", ta.seed_flag);
  train_cmd->add_option("--epochs1", ta.epochs1);
  train_cmd->add_option("--epochs2", ta.epochs2);
  train_cmd->add_option("--batch", ta.batch);
  train_cmd->add_option("--max-steps", ta.max_steps, "Cap on steps per epoch");
  train_cmd->add_option("--lr", ta.lr);
  train_cmd->add_option("--augment", ta.augment);

  InferArgs ia;
  auto* infer_cmd = app.add_subcommand("infer", "Super-resolve one image");
  infer_cmd->add_option("--ckpt", ia.ckpt)->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--in", ia.input)->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--out", ia.output)->required();
  infer_cmd->add_option("--scale", ia.scale)->required()->check(CLI::Range(2, 4));
  infer_cmd->add_flag("--ensemble", ia.ensemble, "Geometric self-ensemble over 8 transforms");
  infer_cmd->add_option("--ref", ia.reference, "HR reference for a quality report")
      ->check(CLI::ExistingFile);
  infer_cmd->add_option("--crop", ia.crop, "Border crop for metrics (default: scale)");
  infer_cmd->add_option("--bit-depth", ia.bit_depth)->check(CLI::IsMember({8, 16}));

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM of a checkpoint against bicubic");
  eval_cmd->add_option("--ckpt", ea.ckpt)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--hr-dir", ea.hr_dir)->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--scale", ea.scale)->required()->check(CLI::Range(2, 4));
  eval_cmd->add_flag("--ensemble", ea.ensemble);
  eval_cmd->add_option("--crop", ea.crop);

  CheckOptions co;
  bool no_gradients = false;
  std::optional<std::string> bank_file;
  auto* check_cmd = app.add_subcommand("check", "Run the transform and gradient oracles");
  check_cmd->add_option("--n", co.n, "Block size")->check(CLI::Range(2, 16));
  check_cmd->add_option("--stride", co.strides, "Strides to test")->expected(1, -1);
  check_cmd->add_option("--images", co.images);
  check_cmd->add_option("--seed", co.seed);
  check_cmd->add_option("--bank", bank_file, "Filter bank file to verify")
      ->check(CLI::ExistingFile);
  check_cmd->add_flag("--no-gradients", no_gradients);

  auto* analyze_cmd = app.add_subcommand("analyze", "Spectrum, parameter and threshold reports");
  analyze_cmd->require_subcommand(1);
  ProfileArgs pa;
  auto* profile_cmd = analyze_cmd->add_subcommand("profile", "Coefficient profile CSV");
  profile_cmd->add_option("--in", pa.inputs)->required()->check(CLI::ExistingFile);
  profile_cmd->add_option("--scale", pa.scale)->check(CLI::Range(2, 4));
  profile_cmd->add_option("--stride", pa.stride);
  profile_cmd->add_option("--n", pa.n)->check(CLI::Range(2, 16));
  profile_cmd->add_option("--out", pa.output, "CSV file (default: stdout)");
  ParamsArgs pr;
  auto* params_cmd = analyze_cmd->add_subcommand("params", "Parameter count and memory");
  params_cmd->add_option("--ckpt", pr.ckpt)->check(CLI::ExistingFile);
  params_cmd->add_option("--height", pr.height);
  params_cmd->add_option("--width", pr.width);
  params_cmd->add_option("--stride", pr.stride);
  params_cmd->add_option("--bytes", pr.bytes, "Bytes per activation value");
  SweepArgs sa;
  auto* sweep_cmd = analyze_cmd->add_subcommand("tsweep", "PSNR per threshold");
  sweep_cmd->add_option("--ckpt", sa.ckpts)->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--hr-dir", sa.hr_dir)->required()->check(CLI::ExistingDirectory);
  sweep_cmd->add_option("--scale", sa.scale)->check(CLI::Range(2, 4));

  try {
    app.parse(argc, argv);
    if (*train_cmd) return cmd_train(ta, out, err);
    if (*infer_cmd) return cmd_infer(ia, out);
    if (*eval_cmd) return cmd_eval(ea, out);
    if (*check_cmd) {
      co.gradients = !no_gradients;
      if (bank_file) co.bank_file = *bank_file;
      return cmd_check(co, out);
    }
    if (*profile_cmd) return cmd_profile(pa, out);
    if (*params_cmd) return cmd_params(pr, out);
    if (*sweep_cmd) return cmd_tsweep(sa, out);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << std::endl;
    return kUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << std::endl;
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << std::endl;
    return kCheckFailed;
  }
  return kUsage;
}

}  // namespace ordsr::app
