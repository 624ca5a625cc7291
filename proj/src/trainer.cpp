#include "ordsr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ordsr/imaging.hpp"
#include "ordsr/rng.hpp"

namespace ordsr {

namespace {

constexpr std::uint64_t kSamplingStream = 0x5A4D;

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

// Largest axis-aligned rectangle inside a w x h rectangle rotated by `angle`.
std::pair<double, double> inscribed_rect(double w, double h, double angle) {
  const bool wide = w >= h;
  const double longer = wide ? w : h;
  const double shorter = wide ? h : w;
  const double s = std::abs(std::sin(angle));
  const double c = std::abs(std::cos(angle));
  if (shorter <= 2.0 * s * c * longer || std::abs(s - c) < 1e-10) {
    const double x = 0.5 * shorter;
    return wide ? std::pair{x / s, x / c} : std::pair{x / c, x / s};
  }
  const double cos2 = c * c - s * s;
  return {(w * c - h * s) / cos2, (h * c - w * s) / cos2};
}

struct Phase {
  int number;
  int epochs;
  bool bank_trainable;
  double gamma;
  double lambda;
};

std::vector<Phase> phases_for(const TrainConfig& config) {
  const VariantFlags flags = variant_flags(config.variant);
  const double gamma = flags.orthogonality ? config.gamma : 0.0;
  const double lambda = flags.complexity ? config.lambda : 0.0;
  if (flags.random_init) {
    // no DCT starting point to pretrain around
    return {{2, config.epochs_phase1 + config.epochs_phase2, true, gamma, lambda}};
  }
  return {{1, config.epochs_phase1, false, 0.0, 0.0},
          {2, config.epochs_phase2, flags.cdct_trainable, gamma, lambda}};
}

void accumulate(LossBreakdown& sum, const LossBreakdown& b) {
  sum.mse += b.mse;
  sum.weight_decay += b.weight_decay;
  sum.orthogonality += b.orthogonality;
  sum.complexity += b.complexity;
  sum.total += b.total;
  sum.sigma = b.sigma;
  sum.gamma = b.gamma;
  sum.lambda = b.lambda;
}

void scale_breakdown(LossBreakdown& b, double f) {
  b.mse *= f;
  b.weight_decay *= f;
  b.orthogonality *= f;
  b.complexity *= f;
  b.total *= f;
}

}  // namespace

int default_threshold(int scale) {
  switch (scale) {
    case 2: return 5;
    case 3: return 4;
    case 4: return 3;
  }
  throw std::invalid_argument("scale must be 2, 3 or 4");
}

TrainConfig TrainConfig::standard(int scale) {
  TrainConfig c;
  c.scale = scale;
  c.arch.threshold = default_threshold(scale);
  return c;
}

TrainConfig TrainConfig::desk(int scale) {
  TrainConfig c = standard(scale);
  c.arch.depth = 5;
  c.arch.filters = 16;
  c.epochs_phase1 = 20;
  c.epochs_phase2 = 20;
  c.batch = 16;
  c.augment = false;
  return c;
}

TrainConfig TrainConfig::preset(const std::string& name, int scale) {
  if (name == "standard") return standard(scale);
  if (name == "desk") return desk(scale);
  throw std::invalid_argument("unknown preset: " + name);
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  };
  require(scale >= 2 && scale <= 4, "scale must be 2, 3 or 4");
  require(arch.n >= 2, "block size must be >= 2");
  require(arch.stride >= 1 && arch.n % arch.stride == 0, "stride must divide the block size");
  require(arch.threshold >= 0 && arch.threshold <= arch.n * arch.n,
          "threshold must lie in [0, n^2]");
  require(arch.depth >= 1 && arch.filters >= 1, "depth and filters must be positive");
  require(arch.first_kernel % 2 == 1 && arch.kernel % 2 == 1, "kernels must be odd");
  require(learning_rate > 0 && lr_decay > 0 && lr_step_epochs >= 1, "bad learning-rate schedule");
  require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && epsilon > 0, "bad Adam constants");
  require(clip > 0, "clip must be positive");
  require(gamma >= 0 && lambda >= 0 && sigma >= 0, "penalty weights must be non-negative");
  require(batch >= 1, "batch must be positive");
  require(patch >= arch.n && patch % arch.stride == 0,
          "patch must be >= n and a multiple of the stride");
  require(overlap >= 0 && overlap < patch, "overlap must lie in [0, patch)");
  require(epochs_phase1 >= 0 && epochs_phase2 >= 0 && epochs_phase1 + epochs_phase2 >= 1,
          "at least one epoch is required");
  require(max_steps_per_epoch >= 0, "max_steps_per_epoch must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"scale", scale},
          {"arch", arch.to_json()},
          {"variant", to_string(variant)},
          {"learning_rate", learning_rate},
          {"lr_decay", lr_decay},
          {"lr_step_epochs", lr_step_epochs},
          {"beta1", beta1},
          {"beta2", beta2},
          {"epsilon", epsilon},
          {"clip", clip},
          {"clip_mode", clip_mode == ClipMode::Elementwise ? "elementwise" : "global_norm"},
          {"gamma", gamma},
          {"lambda", lambda},
          {"sigma", sigma},
          {"batch", batch},
          {"patch", patch},
          {"overlap", overlap},
          {"epochs_phase1", epochs_phase1},
          {"epochs_phase2", epochs_phase2},
          {"max_steps_per_epoch", max_steps_per_epoch},
          {"augment", augment},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, const TrainConfig& base) {
  TrainConfig c = base;
  const int old_scale = c.scale;
  read_key(j, "scale", c.scale);
  if (c.scale != old_scale) c.arch.threshold = default_threshold(c.scale);
  if (j.contains("arch")) {
    nlohmann::json merged = c.arch.to_json();
    merged.update(j.at("arch"));
    c.arch = Architecture::from_json(merged);
  }
  if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
  read_key(j, "learning_rate", c.learning_rate);
  read_key(j, "lr_decay", c.lr_decay);
  read_key(j, "lr_step_epochs", c.lr_step_epochs);
  read_key(j, "beta1", c.beta1);
  read_key(j, "beta2", c.beta2);
  read_key(j, "epsilon", c.epsilon);
  read_key(j, "clip", c.clip);
  if (j.contains("clip_mode")) {
    const auto mode = j.at("clip_mode").get<std::string>();
    if (mode == "elementwise") {
      c.clip_mode = ClipMode::Elementwise;
    } else if (mode == "global_norm") {
      c.clip_mode = ClipMode::GlobalNorm;
    } else {
      throw std::invalid_argument("clip_mode must be elementwise or global_norm");
    }
  }
  read_key(j, "gamma", c.gamma);
  read_key(j, "lambda", c.lambda);
  read_key(j, "sigma", c.sigma);
  read_key(j, "batch", c.batch);
  read_key(j, "patch", c.patch);
  read_key(j, "overlap", c.overlap);
  read_key(j, "epochs_phase1", c.epochs_phase1);
  read_key(j, "epochs_phase2", c.epochs_phase2);
  read_key(j, "max_steps_per_epoch", c.max_steps_per_epoch);
  read_key(j, "augment", c.augment);
  read_key(j, "seed", c.seed);
  return c;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  return from_json(j, TrainConfig{});
}

Plane rotate90(const Plane& img) {
  const std::size_t h = img.height(), w = img.width();
  Plane out(w, h);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) out(c, h - 1 - r) = img(r, c);
  }
  return out;
}

Plane flip_horizontal(const Plane& img) {
  Plane out(img.height(), img.width());
  for (std::size_t r = 0; r < img.height(); ++r) {
    for (std::size_t c = 0; c < img.width(); ++c) out(r, img.width() - 1 - c) = img(r, c);
  }
  return out;
}

Plane flip_vertical(const Plane& img) {
  Plane out(img.height(), img.width());
  for (std::size_t r = 0; r < img.height(); ++r) {
    for (std::size_t c = 0; c < img.width(); ++c) out(img.height() - 1 - r, c) = img(r, c);
  }
  return out;
}

Plane rotate_valid(const Plane& img, double degrees) {
  const double turns = degrees / 90.0;
  if (std::abs(turns - std::round(turns)) < 1e-12) {
    Plane out = img;
    const long quarter = ((std::lround(turns) % 4) + 4) % 4;
    for (long q = 0; q < quarter; ++q) out = rotate90(out);
    return out;
  }
  const double a = degrees * std::numbers::pi / 180.0;
  const double span_h = static_cast<double>(img.height()) - 1.0;
  const double span_w = static_cast<double>(img.width()) - 1.0;
  const auto [rw, rh] = inscribed_rect(span_w, span_h, a);
  const auto out_w = static_cast<std::size_t>(std::floor(rw + 1e-9)) + 1;
  const auto out_h = static_cast<std::size_t>(std::floor(rh + 1e-9)) + 1;
  const double cr = 0.5 * span_h, cc = 0.5 * span_w;
  const double or_ = 0.5 * static_cast<double>(out_h - 1);
  const double oc = 0.5 * static_cast<double>(out_w - 1);
  const double ca = std::cos(a), sa = std::sin(a);
  Plane out(out_h, out_w);
  for (std::size_t r = 0; r < out_h; ++r) {
    for (std::size_t c = 0; c < out_w; ++c) {
      const double dr = static_cast<double>(r) - or_;
      const double dc = static_cast<double>(c) - oc;
      const double sr = std::clamp(cr + dr * ca - dc * sa, 0.0, span_h);
      const double sc = std::clamp(cc + dr * sa + dc * ca, 0.0, span_w);
      out(r, c) = sample_bicubic(img, sr, sc);
    }
  }
  return out;
}

std::vector<Plane> augment(const Plane& image) {
  std::vector<Plane> out;
  out.push_back(image);
  for (int deg = 45; deg < 360; deg += 45) out.push_back(rotate_valid(image, deg));
  out.push_back(flip_horizontal(image));
  out.push_back(flip_vertical(image));
  for (double f : {0.7, 0.8, 0.9}) out.push_back(bicubic_scale(image, f));
  return out;
}

Plane crop_to_multiple(const Plane& img, int multiple) {
  if (multiple < 1) throw std::invalid_argument("crop multiple must be positive");
  const auto m = static_cast<std::size_t>(multiple);
  const std::size_t h = img.height() / m * m, w = img.width() / m * m;
  if (h == 0 || w == 0) throw std::invalid_argument("image smaller than the crop multiple");
  if (h == img.height() && w == img.width()) return img;
  Plane out(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    std::copy(img.row(r), img.row(r) + w, out.row(r));
  }
  return out;
}

Plane degrade(const Plane& hr, int scale) {
  const Plane cropped = crop_to_multiple(hr, scale);
  const auto s = static_cast<std::size_t>(scale);
  const Plane small = bicubic_resize(cropped, cropped.height() / s, cropped.width() / s);
  return bicubic_resize(small, cropped.height(), cropped.width());
}

std::vector<std::size_t> patch_anchors(std::size_t length, std::size_t size,
                                       std::size_t overlap) {
  if (length < size || size == 0) return {};
  const std::size_t stride = size - overlap;
  std::vector<std::size_t> anchors;
  for (std::size_t a = 0; a + size <= length; a += stride) anchors.push_back(a);
  if (anchors.back() + size < length) anchors.push_back(length - size);
  return anchors;
}

std::vector<PatchPair> extract_patches(const Plane& lr, const Plane& hr, int size,
                                       int overlap) {
  if (!lr.same_dims(hr)) throw std::invalid_argument("lr and hr dims differ");
  if (size <= 0 || overlap < 0 || overlap >= size) {
    throw std::invalid_argument("need 0 <= overlap < size");
  }
  const auto p = static_cast<std::size_t>(size);
  const auto rows = patch_anchors(hr.height(), p, static_cast<std::size_t>(overlap));
  const auto cols = patch_anchors(hr.width(), p, static_cast<std::size_t>(overlap));
  std::vector<PatchPair> out;
  for (std::size_t r0 : rows) {
    for (std::size_t c0 : cols) {
      PatchPair pair{Plane(p, p), Plane(p, p)};
      for (std::size_t r = 0; r < p; ++r) {
        std::copy(lr.row(r0 + r) + c0, lr.row(r0 + r) + c0 + p, pair.lr.row(r));
        std::copy(hr.row(r0 + r) + c0, hr.row(r0 + r) + c0 + p, pair.hr.row(r));
      }
      out.push_back(std::move(pair));
    }
  }
  return out;
}

std::vector<PatchPair> build_patch_set(std::span<const Plane> images,
                                       const TrainConfig& config) {
  std::vector<PatchPair> patches;
  for (const Plane& image : images) {
    const std::vector<Plane> variants =
        config.augment ? augment(image) : std::vector<Plane>{image};
    for (const Plane& v : variants) {
      if (v.height() < static_cast<std::size_t>(config.scale) ||
          v.width() < static_cast<std::size_t>(config.scale)) {
        continue;
      }
      const Plane hr = crop_to_multiple(v, config.scale);
      const Plane lr = degrade(hr, config.scale);
      auto p = extract_patches(lr, hr, config.patch, config.overlap);
      std::move(p.begin(), p.end(), std::back_inserter(patches));
    }
  }
  return patches;
}

double learning_rate(const TrainConfig& config, int epoch) {
  return config.learning_rate * std::pow(config.lr_decay, epoch / config.lr_step_epochs);
}

AdamState AdamState::for_network(const Network& net, bool include_bank, double beta1,
                                 double beta2, double epsilon) {
  AdamState s;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  for (const auto& l : net.layers) {
    s.m.emplace_back(l.weights.size(), 0.0);
    s.m.emplace_back(l.biases.size(), 0.0);
  }
  if (include_bank) {
    for (std::size_t i = 0; i < net.bank.count(); ++i) s.m.emplace_back(net.bank.filter_size(), 0.0);
  }
  s.v = s.m;
  return s;
}

void adam_update(std::span<double> params, std::span<const double> grads,
                 std::vector<double>& m, std::vector<double>& v, std::int64_t step,
                 double lr, double beta1, double beta2, double epsilon) {
  if (params.size() != grads.size() || m.size() != params.size() || v.size() != params.size()) {
    throw std::invalid_argument("Adam block sizes differ");
  }
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t e = 0; e < params.size(); ++e) {
    m[e] = beta1 * m[e] + (1.0 - beta1) * grads[e];
    v[e] = beta2 * v[e] + (1.0 - beta2) * grads[e] * grads[e];
    params[e] -= lr * (m[e] / c1) / (std::sqrt(v[e] / c2) + epsilon);
  }
}

void adam_step(Network& net, const GradientSet& grads, AdamState& state, double lr) {
  const std::size_t cnn_blocks = 2 * net.layers.size();
  const bool bank = grads.d_cdct.has_value();
  const std::size_t expected = cnn_blocks + (bank ? net.bank.count() : 0);
  if (state.m.size() != expected || grads.d_weights.size() != net.layers.size()) {
    throw std::invalid_argument("gradient set does not match optimizer state");
  }
  ++state.step;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    adam_update(net.layers[l].weights.values(), grads.d_weights[l].values(), state.m[2 * l],
                state.v[2 * l], state.step, lr, state.beta1, state.beta2, state.epsilon);
    adam_update(net.layers[l].biases, grads.d_biases[l], state.m[2 * l + 1],
                state.v[2 * l + 1], state.step, lr, state.beta1, state.beta2, state.epsilon);
  }
  if (bank) {
    for (std::size_t i = 0; i < net.bank.count(); ++i) {
      adam_update(net.bank[i].values.values(), (*grads.d_cdct)[i].values(),
                  state.m[cnn_blocks + i], state.v[cnn_blocks + i], state.step, lr,
                  state.beta1, state.beta2, state.epsilon);
    }
    net.bank.set_tag(FilterTag::Learned);
  }
}

nlohmann::json EpochSummary::to_json() const {
  return {{"phase", phase},
          {"epoch", epoch},
          {"steps", steps},
          {"lr", learning_rate},
          {"loss", mean_loss.to_json()},
          {"gram_off_diagonal", gram_off_diagonal},
          {"complexity", complexity},
          {"max_applied_gradient", max_applied_gradient}};
}

TrainResult train(const TrainConfig& config, std::span<const Plane> images,
                  const TrainHooks& hooks) {
  if (images.empty()) throw std::invalid_argument("training set is empty");
  config.validate();
  const auto patches = build_patch_set(images, config);
  return train_on_patches(config, patches, hooks);
}

TrainResult train_on_patches(const TrainConfig& config, std::span<const PatchPair> patches,
                             const TrainHooks& hooks) {
  config.validate();
  if (patches.empty()) throw std::invalid_argument("no training patches");

  TrainResult result;
  Network& net = result.network;
  net = build_network(config.arch, config.variant, config.seed, config.gamma, config.lambda);
  result.initial_gram_off_diagonal = gram_off_diagonal_energy(net.bank);
  result.initial_complexity = 2.0 * complexity_term(net.bank);

  Rng rng(derive_seed(config.seed, kSamplingStream));
  const auto batch = static_cast<std::size_t>(config.batch);
  int steps_per_epoch = static_cast<int>((patches.size() + batch - 1) / batch);
  if (config.max_steps_per_epoch > 0) {
    steps_per_epoch = std::min(steps_per_epoch, config.max_steps_per_epoch);
  }
  if (!hooks.checkpoint_dir.empty()) std::filesystem::create_directories(hooks.checkpoint_dir);

  std::vector<PairView> views(batch);
  AdamState adam = AdamState::for_network(net, false, config.beta1, config.beta2, config.epsilon);
  for (const Phase& phase : phases_for(config)) {
    net.cdct_trainable = phase.bank_trainable;
    net.gamma = phase.gamma;
    net.lambda = phase.lambda;
    if (phase.bank_trainable && adam.m.size() == 2 * net.layers.size()) {
      // CNN moments carry over; the newly trainable filters start from zero
      const AdamState full = AdamState::for_network(net, true);
      for (std::size_t b = adam.m.size(); b < full.m.size(); ++b) {
        adam.m.push_back(full.m[b]);
        adam.v.push_back(full.v[b]);
      }
    }
    for (int epoch = 0; epoch < phase.epochs; ++epoch) {
      EpochSummary summary;
      summary.phase = phase.number;
      summary.epoch = epoch;
      summary.learning_rate = learning_rate(config, epoch);
      for (int s = 0; s < steps_per_epoch; ++s) {
        for (auto& v : views) {
          const PatchPair& p = patches[rng.below(patches.size())];
          v = {&p.lr, &p.hr};
        }
        const Evaluation eval = evaluate_batch(net, views, config.sigma);
        if (!std::isfinite(eval.loss.total)) {
          if (!hooks.checkpoint_dir.empty()) {
            save_checkpoint(hooks.checkpoint_dir / "nan_abort.ckpt", net,
                            {{"config", config.to_json()}, {"phase", phase.number},
                             {"epoch", epoch}, {"step", result.steps}});
          }
          throw std::runtime_error("loss became non-finite at step " +
                                   std::to_string(result.steps));
        }
        const GradientSet clipped = gradient_clip(eval.gradients, config.clip, config.clip_mode);
        summary.max_applied_gradient = std::max(summary.max_applied_gradient, clipped.max_abs());
        adam_step(net, clipped, adam, summary.learning_rate);
        accumulate(summary.mean_loss, eval.loss);
        ++summary.steps;
        ++result.steps;
        if (hooks.log) {
          nlohmann::json row = eval.loss.to_json();
          row["step"] = result.steps;
          row["phase"] = phase.number;
          row["epoch"] = epoch;
          row["lr"] = summary.learning_rate;
          *hooks.log << row.dump() << '\n';
        }
      }
      scale_breakdown(summary.mean_loss, 1.0 / summary.steps);
      summary.gram_off_diagonal = gram_off_diagonal_energy(net.bank);
      summary.complexity = 2.0 * complexity_term(net.bank);
      if (!hooks.checkpoint_dir.empty()) {
        save_checkpoint(hooks.checkpoint_dir / "last.ckpt", net,
                        {{"config", config.to_json()}, {"scale", config.scale},
                         {"phase", phase.number}, {"epoch", epoch}});
      }
      if (hooks.on_epoch) hooks.on_epoch(summary);
      result.epochs.push_back(summary);
    }
  }
  // the returned network carries the variant's own flags
  const VariantFlags flags = variant_flags(config.variant);
  net.cdct_trainable = flags.cdct_trainable;
  net.gamma = flags.orthogonality ? config.gamma : 0.0;
  net.lambda = flags.complexity ? config.lambda : 0.0;
  return result;
}

Plane synthetic_image(std::size_t height, std::size_t width, std::uint64_t seed) {
  Rng rng(seed);
  Plane img(height, width);
  const double h = static_cast<double>(height), w = static_cast<double>(width);
  const double gr = rng.uniform(-0.3, 0.3), gc = rng.uniform(-0.3, 0.3);
  const double base = rng.uniform(0.3, 0.7);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      img(r, c) = base + gr * (static_cast<double>(r) / h - 0.5) +
                  gc * (static_cast<double>(c) / w - 0.5);
    }
  }
  // soft-edged discs and boxes
  const int shapes = 6 + static_cast<int>(rng.below(6));
  for (int s = 0; s < shapes; ++s) {
    const double cy = rng.uniform(0.0, h), cx = rng.uniform(0.0, w);
    const double radius = rng.uniform(0.05, 0.3) * std::min(h, w);
    const double level = rng.uniform(0.0, 1.0);
    const bool disc = rng.uniform() < 0.5;
    for (std::size_t r = 0; r < height; ++r) {
      for (std::size_t c = 0; c < width; ++c) {
        const double dy = static_cast<double>(r) - cy, dx = static_cast<double>(c) - cx;
        const double d = disc ? std::hypot(dy, dx) - radius
                              : std::max(std::abs(dy), std::abs(dx)) - radius;
        const double alpha = 1.0 / (1.0 + std::exp(2.0 * d));
        img(r, c) = (1.0 - alpha) * img(r, c) + alpha * level;
      }
    }
  }
  // oriented sinusoidal texture
  const double fy = rng.uniform(0.1, 0.9), fx = rng.uniform(0.1, 0.9);
  const double amp = rng.uniform(0.02, 0.08);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      img(r, c) += amp * std::sin(fy * static_cast<double>(r) + fx * static_cast<double>(c));
      img(r, c) = std::clamp(img(r, c), 0.0, 1.0);
    }
  }
  return img;
}

}  // namespace ordsr
