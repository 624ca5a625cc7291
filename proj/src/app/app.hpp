#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ordsr/image_io.hpp"
#include "ordsr/imaging.hpp"
#include "ordsr/neural_net.hpp"

namespace ordsr::app {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsage = 2 };

// Thrown for bad command-line input; maps to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Reflect-pads `x` so the transform fits (dims >= n, multiples of the stride,
// plus `margin` on every side), runs the network and crops back.
Plane infer_luma(const Network& net, const Plane& x, std::size_t margin);

// Average over the eight flips/rotations of the input, each mapped back.
Plane self_ensemble(const Network& net, const Plane& x, std::size_t margin);

struct InferenceResult {
  Image image;
  Plane bicubic_luma;  // step 1 output, for reference
  Plane luma;          // restored luma
  nlohmann::json metadata;
};

// Bicubic enlargement by `scale`, luma restoration, chroma enlarged only.
InferenceResult run_inference(const Network& net, const Image& input, int scale,
                              bool ensemble);

struct CheckEntry {
  std::string name;
  bool passed = false;
  double max_deviation = 0.0;
  double tolerance = 0.0;
  nlohmann::json detail;

  nlohmann::json to_json() const;
};

struct CheckOptions {
  int n = 8;
  std::vector<int> strides{2, 4, 8};
  int images = 10;
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> bank_file;
  bool gradients = true;
};

// Transform oracles, reconstruction, basis checks and a gradient check.
std::vector<CheckEntry> run_checks(const CheckOptions& options);

// Entry point of the `ordsr` tool.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace ordsr::app
