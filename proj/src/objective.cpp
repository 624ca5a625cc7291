#include "ordsr/objective.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ordsr {

namespace {

const std::vector<double>& dct_variances(int n) {
  // cached per block size; the reference never changes
  static thread_local std::vector<std::vector<double>> cache(65);
  auto& v = cache.at(static_cast<std::size_t>(n));
  if (v.empty()) {
    const FilterBank ref = dct_basis(n);
    for (const auto& f : ref.filters()) v.push_back(filter_variance(f.values));
  }
  return v;
}

void require_pair(const Plane& x, const Plane& y) {
  if (!x.same_dims(y)) throw std::invalid_argument("input and target dims differ");
}

template <typename Fn>
void for_each_value(GradientSet& g, Fn fn) {
  for (auto& t : g.d_weights) for (double& v : t.values()) fn(v);
  for (auto& b : g.d_biases) for (double& v : b) fn(v);
  if (g.d_cdct) {
    for (auto& p : *g.d_cdct) for (double& v : p.values()) fn(v);
  }
}

void mask_relu(Tensor& d, const Tensor& preact) {
  for (std::size_t e = 0; e < d.size(); ++e) {
    if (!(preact[e] > 0.0)) d[e] = 0.0;
  }
}

// Data-term gradient of one sample: 1/2 ||F(x) - y||^2.
GradientSet mse_gradients(const Network& net, const ForwardTrace& t,
                          const Plane& x, const Plane& y) {
  GradientSet g = GradientSet::zeros_like(net);
  const bool bank_grad = net.cdct_trainable;

  Plane d_out(y.height(), y.width());
  for (std::size_t e = 0; e < d_out.size(); ++e) {
    d_out.values()[e] = t.output.values()[e] - y.values()[e];
  }

  // Inverse transform: d/dcube = rho * forward(d_out); filters see both uses.
  DctCube d_sr = cdct_forward(d_out, net.bank, net.stride);
  const double rho = overlap_weight(net.n(), net.stride);
  for (double& v : d_sr.data) v *= rho;
  if (bank_grad) {
    *g.d_cdct = cdct_inverse_filter_gradient(t.sr_cube, d_out);
  }

  // The cube enters directly (low maps, residual high maps) and via the CNN.
  DctCube d_cube = d_sr;
  const std::size_t high_offset =
      static_cast<std::size_t>(net.threshold) * d_sr.map_size();

  const std::size_t depth = net.layers.size();
  Tensor dz({t.preact.back().dims()});
  std::copy(d_sr.data.begin() + static_cast<std::ptrdiff_t>(high_offset), d_sr.data.end(),
            dz.data());
  if (net.layers.back().activation == Activation::ReLU) mask_relu(dz, t.preact.back());

  const Tensor cube_tensor({t.cube.map_count(), t.cube.map_height, t.cube.map_width},
                           t.cube.data);
  for (std::size_t l = depth; l-- > 0;) {
    const Tensor& input = l == 0 ? cube_tensor : t.act[l - 1];
    const bool need_input = l > 0 || bank_grad;
    ConvBackward back = conv2d_same_backward(input, net.layers[l], dz, need_input);
    g.d_weights[l] = std::move(back.d_weights);
    g.d_biases[l] = std::move(back.d_biases);
    if (l > 0) {
      dz = std::move(back.d_input);
      if (net.layers[l - 1].activation == Activation::ReLU) mask_relu(dz, t.preact[l - 1]);
    } else if (bank_grad) {
      for (std::size_t e = 0; e < d_cube.data.size(); ++e) {
        d_cube.data[e] += back.d_input[e];
      }
    }
  }

  if (bank_grad) {
    const auto fwd = cdct_forward_filter_gradient(x, d_cube);
    for (std::size_t i = 0; i < fwd.size(); ++i) {
      auto dst = (*g.d_cdct)[i].values();
      const auto src = fwd[i].values();
      for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += src[e];
    }
  }
  return g;
}

// Adds sigma*W and the weighted transform-penalty gradients.
void add_regularizer_gradients(const Network& net, double sigma, GradientSet& g) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto w = net.layers[l].weights.values();
    auto d = g.d_weights[l].values();
    for (std::size_t e = 0; e < d.size(); ++e) d[e] += sigma * w[e];
  }
  if (!g.d_cdct) return;
  auto add_scaled = [&](const std::vector<Plane>& src, double scale) {
    for (std::size_t i = 0; i < src.size(); ++i) {
      auto dst = (*g.d_cdct)[i].values();
      const auto s = src[i].values();
      for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += scale * s[e];
    }
  };
  if (net.gamma != 0.0) add_scaled(orthogonality_gradient(net.bank), net.gamma);
  if (net.lambda != 0.0) add_scaled(complexity_gradient(net.bank), net.lambda);
}

LossBreakdown regularizer_breakdown(const Network& net, double sigma, double mse) {
  LossBreakdown b;
  b.mse = mse;
  b.weight_decay = weight_decay_term(net);
  b.orthogonality = orthogonality_term(net.bank);
  b.complexity = complexity_term(net.bank);
  b.sigma = sigma;
  b.gamma = net.gamma;
  b.lambda = net.lambda;
  b.total = b.mse + sigma * b.weight_decay + b.gamma * b.orthogonality +
            b.lambda * b.complexity;
  return b;
}

std::vector<bool> relu_pattern(const ForwardTrace& t) {
  std::vector<bool> pattern;
  for (const auto& z : t.preact) {
    for (double v : z.values()) pattern.push_back(v > 0.0);
  }
  return pattern;
}

}  // namespace

nlohmann::json LossBreakdown::to_json() const {
  return {{"mse", mse},         {"weight_decay", weight_decay},
          {"orthogonality", orthogonality}, {"complexity", complexity},
          {"total", total},     {"sigma", sigma},
          {"gamma", gamma},     {"lambda", lambda}};
}

GradientSet GradientSet::zeros_like(const Network& net) {
  GradientSet g;
  for (const auto& l : net.layers) {
    g.d_weights.emplace_back(l.weights.dims());
    g.d_biases.emplace_back(l.biases.size(), 0.0);
  }
  if (net.cdct_trainable) {
    std::vector<Plane> bank;
    for (std::size_t i = 0; i < net.bank.count(); ++i) {
      bank.emplace_back(static_cast<std::size_t>(net.n()), static_cast<std::size_t>(net.n()));
    }
    g.d_cdct = std::move(bank);
  }
  return g;
}

void GradientSet::add(const GradientSet& other) {
  if (other.d_weights.size() != d_weights.size() ||
      other.d_cdct.has_value() != d_cdct.has_value()) {
    throw std::invalid_argument("gradient sets have different structure");
  }
  for (std::size_t l = 0; l < d_weights.size(); ++l) {
    auto dst = d_weights[l].values();
    const auto src = other.d_weights[l].values();
    for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += src[e];
    for (std::size_t e = 0; e < d_biases[l].size(); ++e) {
      d_biases[l][e] += other.d_biases[l][e];
    }
  }
  if (d_cdct) {
    for (std::size_t i = 0; i < d_cdct->size(); ++i) {
      auto dst = (*d_cdct)[i].values();
      const auto src = (*other.d_cdct)[i].values();
      for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += src[e];
    }
  }
}

void GradientSet::scale(double factor) {
  for_each_value(*this, [factor](double& v) { v *= factor; });
}

double GradientSet::max_abs() const {
  double m = 0.0;
  for_each_value(const_cast<GradientSet&>(*this),
                 [&m](double& v) { m = std::max(m, std::abs(v)); });
  return m;
}

std::size_t GradientSet::size() const {
  std::size_t n = 0;
  for_each_value(const_cast<GradientSet&>(*this), [&n](double&) { ++n; });
  return n;
}

double mse_term(const Plane& output, const Plane& target) {
  require_pair(output, target);
  double s = 0.0;
  for (std::size_t e = 0; e < output.size(); ++e) {
    const double d = output.values()[e] - target.values()[e];
    s += d * d;
  }
  return 0.5 * s;
}

double weight_decay_term(const Network& net) {
  double s = 0.0;
  for (const auto& l : net.layers) {
    for (double v : l.weights.values()) s += v * v;
  }
  return 0.5 * s;
}

double orthogonality_term(const FilterBank& bank) {
  return 0.5 * gram_off_diagonal_energy(bank);
}

double complexity_term(const FilterBank& bank) {
  const auto& ref = dct_variances(bank.n());
  double s = 0.0;
  for (std::size_t t = 0; t < bank.count(); ++t) {
    const double d = filter_variance(bank[t].values) - ref[t];
    s += d * d;
  }
  return 0.5 * s;
}

Plane variance_gradient(const Plane& filter) {
  const double count = static_cast<double>(filter.size());
  double sum = 0.0;
  for (double v : filter.values()) sum += v;
  const double mean = sum / count;
  double centered = 0.0;  // identically zero, kept to mirror the closed form
  for (double v : filter.values()) centered += v - mean;
  Plane g(filter.height(), filter.width());
  const double scale = 2.0 / (count * (count - 1.0));
  for (std::size_t e = 0; e < filter.size(); ++e) {
    g.values()[e] = scale * (count * filter.values()[e] - sum - centered);
  }
  return g;
}

std::vector<Plane> orthogonality_gradient(const FilterBank& bank) {
  // d/dw_i of 1/2 sum_{ordered i != j} G_ij^2 = 2 sum_{j != i} G_ij w_j
  const Plane gram = gram_matrix(bank);
  std::vector<Plane> out;
  for (std::size_t i = 0; i < bank.count(); ++i) {
    Plane g(static_cast<std::size_t>(bank.n()), static_cast<std::size_t>(bank.n()));
    for (std::size_t j = 0; j < bank.count(); ++j) {
      if (j == i) continue;
      const double coeff = 2.0 * gram(i, j);
      const auto wj = bank[j].values.values();
      for (std::size_t e = 0; e < wj.size(); ++e) g.values()[e] += coeff * wj[e];
    }
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<Plane> complexity_gradient(const FilterBank& bank) {
  const auto& ref = dct_variances(bank.n());
  std::vector<Plane> out;
  for (std::size_t t = 0; t < bank.count(); ++t) {
    const double gap = filter_variance(bank[t].values) - ref[t];
    Plane g = variance_gradient(bank[t].values);
    for (double& v : g.values()) v *= gap;
    out.push_back(std::move(g));
  }
  return out;
}

LossBreakdown loss(const Network& net, const Plane& x, const Plane& y,
                   double sigma) {
  require_pair(x, y);
  const Plane out = network_forward(net, x);
  return regularizer_breakdown(net, sigma, mse_term(out, y));
}

GradientSet gradients(const Network& net, const Plane& x, const Plane& y,
                      double sigma) {
  return evaluate(net, x, y, sigma).gradients;
}

Evaluation evaluate(const Network& net, const Plane& x, const Plane& y,
                    double sigma) {
  const PairView pair{&x, &y};
  return evaluate_batch(net, std::span<const PairView>(&pair, 1), sigma);
}

Evaluation evaluate_batch(const Network& net, std::span<const PairView> batch,
                          double sigma) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  net.validate();
  GradientSet total = GradientSet::zeros_like(net);
  double mse = 0.0;
  // Fixed sample order keeps the reduction bitwise reproducible.
  for (const auto& pair : batch) {
    require_pair(*pair.input, *pair.target);
    const ForwardTrace t = trace_forward(net, *pair.input);
    mse += mse_term(t.output, *pair.target);
    total.add(mse_gradients(net, t, *pair.input, *pair.target));
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  total.scale(inv);
  add_regularizer_gradients(net, sigma, total);
  return {regularizer_breakdown(net, sigma, mse * inv), std::move(total)};
}

double& parameter_at(Network& net, const ParamCoordinate& c) {
  switch (c.kind) {
    case ParamKind::Weight: return net.layers.at(c.layer).weights.values()[c.index];
    case ParamKind::Bias: return net.layers.at(c.layer).biases.at(c.index);
    case ParamKind::Cdct: return net.bank[c.layer].values.values()[c.index];
  }
  throw std::invalid_argument("bad parameter kind");
}

double gradient_at(const GradientSet& g, const ParamCoordinate& c) {
  switch (c.kind) {
    case ParamKind::Weight: return g.d_weights.at(c.layer)[c.index];
    case ParamKind::Bias: return g.d_biases.at(c.layer).at(c.index);
    case ParamKind::Cdct:
      if (!g.d_cdct) throw std::invalid_argument("transform layer is frozen");
      return g.d_cdct->at(c.layer).values()[c.index];
  }
  throw std::invalid_argument("bad parameter kind");
}

FiniteDifference finite_diff_oracle(const Network& net, const Plane& x,
                                    const Plane& y, const ParamCoordinate& c,
                                    double h, double sigma) {
  if (!(h > 0.0)) throw std::invalid_argument("step h must be positive");
  Network probe = net;
  double& p = parameter_at(probe, c);
  const double original = p;

  p = original + h;
  const ForwardTrace plus = trace_forward(probe, x);
  const double lp = regularizer_breakdown(probe, sigma, mse_term(plus.output, y)).total;
  p = original - h;
  const ForwardTrace minus = trace_forward(probe, x);
  const double lm = regularizer_breakdown(probe, sigma, mse_term(minus.output, y)).total;

  FiniteDifference fd;
  fd.value = (lp - lm) / (2.0 * h);
  const auto pp = relu_pattern(plus);
  fd.crosses_kink = pp != relu_pattern(minus) || pp != relu_pattern(trace_forward(net, x));
  return fd;
}

GradientCheck gradient_check(const Network& net, const Plane& x, const Plane& y,
                             double sigma, double h) {
  const GradientSet g = gradients(net, x, y, sigma);
  GradientCheck report;
  auto visit = [&](ParamKind kind, std::size_t layer, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      const ParamCoordinate c{kind, layer, i};
      const FiniteDifference fd = finite_diff_oracle(net, x, y, c, h, sigma);
      if (fd.crosses_kink) {
        ++report.kinks;
        continue;
      }
      ++report.checked;
      const double rel =
          std::abs(gradient_at(g, c) - fd.value) / std::max(1.0, std::abs(fd.value));
      if (rel > report.max_rel_error || report.checked == 1) {
        report.max_rel_error = std::max(report.max_rel_error, rel);
        if (rel >= report.max_rel_error) report.worst = c;
      }
    }
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    visit(ParamKind::Weight, l, net.layers[l].weights.size());
    visit(ParamKind::Bias, l, net.layers[l].biases.size());
  }
  if (net.cdct_trainable) {
    for (std::size_t i = 0; i < net.bank.count(); ++i) {
      visit(ParamKind::Cdct, i, net.bank.filter_size());
    }
  }
  return report;
}

GradientSet gradient_clip(const GradientSet& g, double clip, ClipMode mode) {
  if (!(clip > 0.0)) throw std::invalid_argument("clip value must be positive");
  GradientSet out = g;
  if (mode == ClipMode::Elementwise) {
    for_each_value(out, [clip](double& v) { v = std::clamp(v, -clip, clip); });
  } else {
    double sq = 0.0;
    for_each_value(out, [&sq](double& v) { sq += v * v; });
    const double norm = std::sqrt(sq);
    if (norm > clip) out.scale(clip / norm);
  }
  return out;
}

}  // namespace ordsr
