#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ordsr/neural_net.hpp"
#include "ordsr/objective.hpp"
#include "ordsr/plane.hpp"

namespace ordsr {

// Default threshold for scale 2/3/4: 5/4/3.
int default_threshold(int scale);

struct TrainConfig {
  int scale = 3;
  Architecture arch;  // threshold follows the scale unless overridden
  Variant variant = Variant::Ordsr;

  double learning_rate = 1e-4;
  double lr_decay = 0.75;
  int lr_step_epochs = 30;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip = 0.5;
  ClipMode clip_mode = ClipMode::Elementwise;

  double gamma = 3.5;
  double lambda = 0.75;
  double sigma = 1e-4;

  int batch = 128;
  int patch = 40;
  int overlap = 10;
  int epochs_phase1 = 80;
  int epochs_phase2 = 80;
  // 0 runs the full ceil(patches / batch) steps per epoch.
  int max_steps_per_epoch = 0;
  bool augment = true;
  std::uint64_t seed = 1;

  static TrainConfig standard(int scale = 3);
  // D = 5, 16 filters, 20 epochs per phase, no augmentation.
  static TrainConfig desk(int scale = 3);
  static TrainConfig preset(const std::string& name, int scale = 3);

  // Throws std::invalid_argument on inconsistent values.
  void validate() const;
  nlohmann::json to_json() const;
  // Keys absent from `j` keep the values of `base`.
  static TrainConfig from_json(const nlohmann::json& j, const TrainConfig& base);
  static TrainConfig from_json(const nlohmann::json& j);
};

struct PatchPair {
  Plane lr;
  Plane hr;
};

// Identity, rotations by 45..315 degrees, horizontal and vertical flips and
// rescales by 0.7, 0.8, 0.9 (13 images, in that order).
std::vector<Plane> augment(const Plane& image);

Plane rotate90(const Plane& img);  // clockwise: (r, c) -> (c, H - 1 - r)
Plane flip_horizontal(const Plane& img);
Plane flip_vertical(const Plane& img);
// Clockwise rotation about the centre with bicubic sampling, cropped to the
// largest axis-aligned rectangle that holds only interpolated pixels.
Plane rotate_valid(const Plane& img, double degrees);

Plane crop_to_multiple(const Plane& img, int multiple);
// Crop to multiples of c, bicubic shrink by c, bicubic enlarge back.
Plane degrade(const Plane& hr, int scale);

// Top-left anchors along one axis: stride size - overlap, last anchor on the
// edge.
std::vector<std::size_t> patch_anchors(std::size_t length, std::size_t size,
                                       std::size_t overlap);
std::vector<PatchPair> extract_patches(const Plane& lr, const Plane& hr, int size = 40,
                                       int overlap = 10);

// All training pairs of a set of HR images under `config`.
std::vector<PatchPair> build_patch_set(std::span<const Plane> images,
                                       const TrainConfig& config);

// Learning rate for a zero-based epoch within a phase.
double learning_rate(const TrainConfig& config, int epoch);

// Adam moments for one parameter block list.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_network(const Network& net, bool include_bank, double beta1 = 0.9,
                               double beta2 = 0.999, double epsilon = 1e-8);
};

// One Adam update of a flat block; `step` is the already incremented count.
void adam_update(std::span<double> params, std::span<const double> grads,
                 std::vector<double>& m, std::vector<double>& v, std::int64_t step,
                 double lr, double beta1, double beta2, double epsilon);

// Applies `grads` (already clipped) to every trainable block of `net`.
void adam_step(Network& net, const GradientSet& grads, AdamState& state, double lr);

struct EpochSummary {
  int phase = 1;
  int epoch = 0;
  int steps = 0;
  double learning_rate = 0.0;
  LossBreakdown mean_loss;
  double gram_off_diagonal = 0.0;
  double complexity = 0.0;
  double max_applied_gradient = 0.0;

  nlohmann::json to_json() const;
};

struct TrainHooks {
  std::ostream* log = nullptr;            // one JSON row per step
  std::filesystem::path checkpoint_dir;   // empty: no checkpoints
  std::function<void(const EpochSummary&)> on_epoch;
};

struct TrainResult {
  Network network;
  std::vector<EpochSummary> epochs;
  double initial_gram_off_diagonal = 0.0;
  double initial_complexity = 0.0;
  std::int64_t steps = 0;
};

// Two-phase training: the CNN alone with the transform frozen at its
// initial value, then everything with the variant's penalties.
TrainResult train(const TrainConfig& config, std::span<const Plane> images,
                  const TrainHooks& hooks = {});

// Same, from a prepared patch list.
TrainResult train_on_patches(const TrainConfig& config, std::span<const PatchPair> patches,
                             const TrainHooks& hooks = {});

// Smooth shapes, edges and texture in [0, 1] for data-free runs.
Plane synthetic_image(std::size_t height, std::size_t width, std::uint64_t seed);

}  // namespace ordsr
