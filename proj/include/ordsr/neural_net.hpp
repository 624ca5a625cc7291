#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ordsr/cdct_layer.hpp"
#include "ordsr/plane.hpp"
#include "ordsr/tensor.hpp"
#include "ordsr/transform_core.hpp"

namespace ordsr {

enum class Activation { ReLU, None };

// m filters of shape c x k x k (weights dims {m, c, k, k}) plus m biases.
struct ConvLayer {
  Tensor weights;
  std::vector<double> biases;
  Activation activation = Activation::ReLU;

  ConvLayer() = default;
  ConvLayer(std::size_t out_channels, std::size_t in_channels,
            std::size_t kernel, Activation act);

  std::size_t out_channels() const { return weights.dim(0); }
  std::size_t in_channels() const { return weights.dim(1); }
  std::size_t kernel() const { return weights.dim(2); }
};

// Penalty/trainability combinations plus the randomly initialised variant.
enum class Variant { Ordsr, DsrOc, DsrCc, DsrUc, DctDsr, OrdsrRi };

const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct VariantFlags {
  bool cdct_trainable = true;
  bool orthogonality = true;     // gamma active
  bool complexity = true;        // lambda active
  bool random_init = false;
};

VariantFlags variant_flags(Variant v);

// Layer shapes of the D-layer residual CNN around the transform layer.
struct Architecture {
  int n = 8;
  int stride = 2;
  int threshold = 4;
  int depth = 15;
  int filters = 64;
  int first_kernel = 5;
  int kernel = 3;
  bool final_relu = true;

  static Architecture standard() { return {}; }
  nlohmann::json to_json() const;
  static Architecture from_json(const nlohmann::json& j);
};

struct Network {
  FilterBank bank;
  std::vector<ConvLayer> layers;
  int threshold = 4;
  int stride = 2;
  Variant variant = Variant::Ordsr;
  bool cdct_trainable = true;
  double gamma = 3.5;
  double lambda = 0.75;
  bool final_relu = true;

  int n() const { return bank.n(); }
  // Throws std::invalid_argument when the layer chain is inconsistent.
  void validate() const;
  Architecture architecture() const;
};

// DCT (or random, for OrdsrRi) bank, Xavier-initialised CNN, zero biases.
Network build_network(const Architecture& arch, Variant variant,
                      std::uint64_t seed, double gamma = 3.5,
                      double lambda = 0.75);

// Same shapes with every CNN weight and bias zero and a DCT bank.
Network zero_network(const Architecture& arch);

// Same-padded convolution; bias per output channel, then the activation.
Tensor conv2d_same(const Tensor& input, const ConvLayer& layer);

struct ConvBackward {
  Tensor d_weights;
  std::vector<double> d_biases;
  Tensor d_input;  // empty unless requested
};

// Adjoint of the pre-activation conv given d(loss)/d(preact).
ConvBackward conv2d_same_backward(const Tensor& input, const ConvLayer& layer,
                                  const Tensor& d_preact, bool input_grad);

// Intermediate values of one forward pass, kept for backpropagation.
struct ForwardTrace {
  DctCube cube;                   // transform of the input
  std::vector<Tensor> preact;     // a_l * W_l + b_l, per layer
  std::vector<Tensor> act;        // layer outputs (after ReLU if any)
  DctCube sr_cube;                // {f_low, restored f_high}
  Plane output;
};

// Restored high maps {m, h, w} = act(z_{D-1} * W_D + b_D) + f_high.
Tensor cnn_forward(const CubeSplit& split, const Network& net);

ForwardTrace trace_forward(const Network& net, const Plane& x);

// F(x): transform, split, CNN, merge, inverse transform.
Plane network_forward(const Network& net, const Plane& x);

// Uniform in +-sqrt(6 / (fan_in + fan_out)). Dims {m, c, k, k} use
// fan_in = c k^2 and fan_out = m k^2; dims {out, in} use in/out.
Tensor xavier_init(const std::vector<std::size_t>& dims, std::uint64_t seed);

struct ParameterCount {
  std::int64_t weights = 0;
  std::int64_t biases = 0;
  std::int64_t total() const { return weights + biases; }
  bool operator==(const ParameterCount&) const = default;
};

ParameterCount count_parameters(const Network& net);
ParameterCount count_parameters(const Architecture& arch);

// Twenty 3x3 layers: 1 -> 64, eighteen 64 -> 64, 64 -> 1.
ParameterCount vdsr_reference_parameters();

// Peak single-layer activation footprint when only one layer's maps are
// resident: max(n^2, widest layer) maps of ceil(h/S) x ceil(w/S) values.
std::int64_t activation_memory(const Architecture& arch, std::size_t height,
                               std::size_t width,
                               std::size_t bytes_per_value = sizeof(float));
std::int64_t activation_memory(const Network& net, std::size_t height,
                               std::size_t width,
                               std::size_t bytes_per_value = sizeof(float));

// Checkpoint container: "ORDSRCKP", u32 version, u64 header length, JSON
// header, then bank filters, and per layer weights then biases, all f64 LE.
struct Checkpoint {
  Network network;
  nlohmann::json metadata;  // free-form (training config, scale, ...)
};

void save_checkpoint(const std::filesystem::path& path, const Network& net,
                     const nlohmann::json& metadata = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ordsr
