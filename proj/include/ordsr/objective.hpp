#pragma once

#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "ordsr/neural_net.hpp"
#include "ordsr/plane.hpp"
#include "ordsr/tensor.hpp"

namespace ordsr {

// Raw (unweighted) terms of the regularised loss, each carrying its 1/2, and
// the weighted total mse + sigma*wd + gamma*orth + lambda*comp.
struct LossBreakdown {
  double mse = 0.0;
  double weight_decay = 0.0;
  double orthogonality = 0.0;
  double complexity = 0.0;
  double total = 0.0;
  double sigma = 0.0;
  double gamma = 0.0;
  double lambda = 0.0;

  nlohmann::json to_json() const;
};

// Mirrors the trainable parameters of a Network. d_cdct is present iff the
// transform layer is trainable.
struct GradientSet {
  std::vector<Tensor> d_weights;
  std::vector<std::vector<double>> d_biases;
  std::optional<std::vector<Plane>> d_cdct;

  static GradientSet zeros_like(const Network& net);

  void add(const GradientSet& other);
  void scale(double factor);
  double max_abs() const;
  std::size_t size() const;
};

struct Evaluation {
  LossBreakdown loss;
  GradientSet gradients;
};

// One training pair; both planes outlive the view.
struct PairView {
  const Plane* input = nullptr;
  const Plane* target = nullptr;
};

double mse_term(const Plane& output, const Plane& target);
double weight_decay_term(const Network& net);
// 1/2 sum over ordered pairs i != j of (w_i . w_j)^2.
double orthogonality_term(const FilterBank& bank);
// 1/2 sum_t (var(w_t) - var(w_t^dct))^2.
double complexity_term(const FilterBank& bank);

// d var(w) / d w^a for every entry of w.
Plane variance_gradient(const Plane& filter);
std::vector<Plane> orthogonality_gradient(const FilterBank& bank);
std::vector<Plane> complexity_gradient(const FilterBank& bank);

LossBreakdown loss(const Network& net, const Plane& x, const Plane& y,
                   double sigma);
GradientSet gradients(const Network& net, const Plane& x, const Plane& y,
                      double sigma);
Evaluation evaluate(const Network& net, const Plane& x, const Plane& y,
                    double sigma);

// The data term is averaged over the batch; weight decay and the transform
// penalties enter once.
Evaluation evaluate_batch(const Network& net, std::span<const PairView> batch,
                          double sigma);

enum class ParamKind { Weight, Bias, Cdct };

// layer: CNN layer (Weight/Bias) or filter index (Cdct); index: flat entry.
struct ParamCoordinate {
  ParamKind kind = ParamKind::Weight;
  std::size_t layer = 0;
  std::size_t index = 0;
};

double& parameter_at(Network& net, const ParamCoordinate& c);
double gradient_at(const GradientSet& g, const ParamCoordinate& c);

struct FiniteDifference {
  double value = 0.0;
  // Some ReLU changed state between the perturbed evaluations, so the loss
  // is not smooth along this coordinate at this step size.
  bool crosses_kink = false;
};

// Central difference (L(theta + h e_k) - L(theta - h e_k)) / 2h of the total
// loss.
FiniteDifference finite_diff_oracle(const Network& net, const Plane& x,
                                    const Plane& y, const ParamCoordinate& c,
                                    double h, double sigma);

struct GradientCheck {
  double max_rel_error = 0.0;  // max |g - fd| / max(1, |fd|) over smooth coords
  std::size_t checked = 0;
  std::size_t kinks = 0;
  ParamCoordinate worst;
};

// Compares every parameter's analytic gradient with the central difference.
GradientCheck gradient_check(const Network& net, const Plane& x, const Plane& y,
                             double sigma, double h = 1e-5);

enum class ClipMode { Elementwise, GlobalNorm };

GradientSet gradient_clip(const GradientSet& g, double clip,
                          ClipMode mode = ClipMode::Elementwise);

}  // namespace ordsr
