// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "app.hpp"
#include "ordsr/cdct_layer.hpp"
#include "ordsr/objective.hpp"
#include "ordsr/rng.hpp"
#include "ordsr/trainer.hpp"

namespace fs = std::filesystem;
using namespace ordsr;

namespace {

struct Verdict {
  bool passed = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

Plane random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  Plane p(h, w);
  for (double& v : p.values()) v = rng.uniform();
  return p;
}

double max_diff(const Plane& a, const Plane& b) {
  double m = 0.0;
  for (std::size_t e = 0; e < a.size(); ++e) {
    m = std::max(m, std::abs(a.values()[e] - b.values()[e]));
  }
  return m;
}

double max_diff(const DctCube& a, const DctCube& b) {
  double m = 0.0;
  if (a.data.size() != b.data.size()) return INFINITY;
  for (std::size_t e = 0; e < a.data.size(); ++e) m = std::max(m, std::abs(a.data[e] - b.data[e]));
  return m;
}

std::vector<Plane> load_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<Plane> out;
  for (const auto& f : files) out.push_back(read_luma(f));
  return out;
}

const fs::path kData = ORDSR_TEST_DATA_DIR;
constexpr std::array<int, 3> kStrides{2, 4, 8};

// 1. Forward transform against the block-DCT oracle.
Verdict oracle_equivalence() {
  const FilterBank dct = dct_basis(8);
  double worst = 0.0;
  for (int s : kStrides) {
    for (int k = 0; k < 50; ++k) {
      const Plane x = random_image(32, 32, derive_seed(101, 100 * s + k));
      worst = std::max(worst, max_diff(cdct_forward(x, dct, s), block_dct_oracle(x, s, 8)));
    }
  }
  return {worst < 1e-10, "max_abs_diff=" + fmt(worst) + " (limit 1e-10)"};
}

// 2. inverse(forward(x)) == x for the DCT and a random orthonormal bank.
Verdict perfect_reconstruction() {
  const FilterBank dct = dct_basis(8);
  const FilterBank ortho = random_orthonormal_bank(8, 2024);
  double worst_dct = 0.0, worst_ortho = 0.0;
  for (int s : kStrides) {
    for (int k = 0; k < 50; ++k) {
      const Plane x = random_image(32, 32, derive_seed(202, 100 * s + k));
      worst_dct = std::max(worst_dct, max_diff(cdct_inverse(cdct_forward(x, dct, s), dct), x));
      worst_ortho =
          std::max(worst_ortho, max_diff(cdct_inverse(cdct_forward(x, ortho, s), ortho), x));
    }
  }
  const double worst = std::max(worst_dct, worst_ortho);
  return {worst < 1e-9,
          "max_abs_err dct=" + fmt(worst_dct) + " orthonormal=" + fmt(worst_ortho) +
              " (limit 1e-9)"};
}

// 3. Analytic gradients of all four loss terms against central differences.
Verdict gradient_correctness() {
  Architecture a;
  a.n = 4;
  a.stride = 2;
  a.threshold = 3;
  a.depth = 3;
  a.filters = 4;
  a.first_kernel = 3;
  a.kernel = 3;
  double worst = 0.0;
  std::size_t checked = 0, kinks = 0;
  constexpr int kSeeds = 20;
  for (int seed = 0; seed < kSeeds; ++seed) {
    Network net = build_network(a, Variant::Ordsr, static_cast<std::uint64_t>(seed));
    // move off the DCT point so the bank penalties have non-zero gradients
    Rng rng(derive_seed(seed, 77));
    for (std::size_t i = 0; i < net.bank.count(); ++i) {
      for (double& w : net.bank[i].values.values()) w += 0.05 * rng.uniform(-1.0, 1.0);
    }
    for (auto& l : net.layers) {
      for (double& b : l.biases) b = 0.05 * rng.uniform(-1.0, 1.0);
    }
    const Plane x = random_image(12, 12, derive_seed(seed, 1));
    const Plane y = random_image(12, 12, derive_seed(seed, 2));
    const GradientCheck r = gradient_check(net, x, y, 1e-2);
    worst = std::max(worst, r.max_rel_error);
    checked += r.checked;
    kinks += r.kinks;
  }
  return {worst < 1e-6, "max_rel_err=" + fmt(worst) + " (limit 1e-6) seeds=" +
                            std::to_string(kSeeds) + " coords=" + std::to_string(checked) +
                            " kinks_excluded=" + std::to_string(kinks)};
}

// 4. Gram identity, zig-zag bijection and filter-variance hand cases.
Verdict basis_validity() {
  const FilterBank dct = dct_basis(8);
  const Plane g = gram_matrix(dct);
  double gram = 0.0;
  for (std::size_t i = 0; i < 64; ++i) {
    for (std::size_t j = 0; j < 64; ++j) {
      gram = std::max(gram, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
    }
  }
  bool bijection = true;
  for (int n = 2; n <= 16; ++n) {
    const ZigZag zz(n);
    std::vector<int> hits(static_cast<std::size_t>(n * n), 0);
    for (int k1 = 0; k1 < n; ++k1) {
      for (int k2 = 0; k2 < n; ++k2) {
        const int i = zz.index(k1, k2);
        if (i < 1 || i > n * n || zz.position(i) != BasisIndex2D{k1, k2}) bijection = false;
        else ++hits[static_cast<std::size_t>(i - 1)];
      }
    }
    for (int h : hits) bijection = bijection && h == 1;
  }
  Plane pm(2, 2);
  pm(0, 0) = 1;
  pm(0, 1) = -1;
  pm(1, 0) = 1;
  pm(1, 1) = -1;
  const double dc_var = filter_variance(dct[0].values);
  const double pm_var = filter_variance(pm);
  const bool variance_ok = dc_var == 0.0 && pm_var == 4.0 / 3.0;
  return {gram <= 1e-12 && bijection && variance_ok,
          "gram_max_dev=" + fmt(gram) + " (limit 1e-12) zigzag_bijection=" +
              (bijection ? "yes" : "no") + " var(DC)=" + fmt(dc_var) +
              " var(2x2)=" + fmt(pm_var) + " (want 0 and 4/3 exactly)"};
}

// 5. Closed-form parameter and activation-memory arithmetic.
Verdict parameter_memory() {
  const Architecture arch = Architecture::standard();
  const ParameterCount p = count_parameters(arch);
  const std::int64_t delta = vdsr_reference_parameters().weights - p.weights;
  const std::int64_t mem = activation_memory(arch, 512, 512, 4);
  constexpr std::int64_t kMiB4 = 4 * 1024 * 1024;
  return {p.weights == 620288 && delta == 44416 && mem == kMiB4,
          "weights=" + std::to_string(p.weights) + " (want 620288) vdsr_delta=" +
              std::to_string(delta) + " (want 44416) activation_bytes=" + std::to_string(mem) +
              " (want " + std::to_string(kMiB4) + ")"};
}

TrainConfig desk_config() {
  TrainConfig c = TrainConfig::desk(3);
  c.seed = 7;
  return c;
}

TrainResult quiet_train(const TrainConfig& c, const std::vector<Plane>& images) {
  return train(c, images, TrainHooks{});
}

// 6. Orthogonality and complexity penalties move the bank the right way.
Verdict regularizer_efficacy(const std::vector<Plane>& images) {
  TrainConfig c = desk_config();
  c.epochs_phase1 = 5;
  c.epochs_phase2 = 10;
  double energy[3];
  const Variant variants[3] = {Variant::Ordsr, Variant::DsrCc, Variant::DsrUc};
  for (int k = 0; k < 3; ++k) {
    c.variant = variants[k];
    energy[k] = gram_off_diagonal_energy(quiet_train(c, images).network.bank);
  }
  c.variant = Variant::OrdsrRi;
  const TrainResult ri = quiet_train(c, images);
  const double comp_final = 2.0 * complexity_term(ri.network.bank);
  const bool ok = energy[0] < energy[1] && energy[0] < energy[2] && c.lambda > 0 &&
                  comp_final < ri.initial_complexity;
  return {ok, "gram_off_diag ORDSR=" + fmt(energy[0], 6) + " DSR-CC=" + fmt(energy[1], 6) +
                  " DSR-UC=" + fmt(energy[2], 6) + " complexity(ORDSR-RI) initial=" +
                  fmt(ri.initial_complexity, 8) + " final=" + fmt(comp_final, 8) +
                  " lambda=" + fmt(c.lambda) + " epochs=" + std::to_string(c.epochs_phase1) +
                  "+" + std::to_string(c.epochs_phase2)};
}

// 7. Desk-preset checkpoint beats bicubic on held-out images.
Verdict desk_gain(const std::vector<Plane>& images, std::string& info) {
  const TrainResult r = quiet_train(desk_config(), images);
  const std::vector<Plane> holdout = load_dir(kData / "holdout");
  double gain = 0.0, ens_gain = 0.0;
  for (const Plane& raw : holdout) {
    const Plane hr = crop_to_multiple(raw, 3);
    const Plane lr = bicubic_resize(hr, hr.height() / 3, hr.width() / 3);
    const auto single = app::run_inference(r.network, gray_image(lr), 3, false);
    const auto ens = app::run_inference(r.network, gray_image(lr), 3, true);
    const double base = psnr(single.bicubic_luma, hr, 3);
    gain += psnr(single.luma, hr, 3) - base;
    ens_gain += psnr(ens.luma, hr, 3) - base;
  }
  gain /= static_cast<double>(holdout.size());
  ens_gain /= static_cast<double>(holdout.size());
  info = "self-ensemble gain " + fmt(ens_gain) + " dB vs single " + fmt(gain) +
         " dB (no-harm bound: >= single - 0.05)";
  return {gain >= 0.2, "mean_gain=" + fmt(gain) + " dB (want >= 0.2) train_images=" +
                           std::to_string(images.size()) + " holdout_images=" +
                           std::to_string(holdout.size()) + " steps=" + std::to_string(r.steps)};
}

// 8. Zero-weight network reproduces its bicubic input exactly.
Verdict residual_identity() {
  const Network net = zero_network(Architecture::standard());
  double worst = 0.0;
  std::size_t differing = 0, total = 0;
  for (auto [h, w] : {std::pair{32, 32}, std::pair{21, 27}}) {
    const Plane lr = random_image(static_cast<std::size_t>(h), static_cast<std::size_t>(w),
                                  derive_seed(808, h));
    const auto r = app::run_inference(net, gray_image(lr), 3, false);
    for (std::size_t e = 0; e < r.luma.size(); ++e) {
      const double d = std::abs(r.luma.values()[e] - r.bicubic_luma.values()[e]);
      if (r.luma.values()[e] != r.bicubic_luma.values()[e]) ++differing;
      worst = std::max(worst, d);
      ++total;
    }
  }
  return {differing == 0, "differing_pixels=" + std::to_string(differing) + "/" +
                              std::to_string(total) + " max_abs_diff=" + fmt(worst) +
                              " (want bitwise equal)"};
}

// 9. Gap between HR and degraded profiles grows with cube index.
Verdict spectrum_profile_claim(std::string& info) {
  const FilterBank dct = dct_basis(8);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(kData / "holdout")) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  double lowest = 1.0;
  std::string per_image;
  double abs_sum = 0.0;
  for (const auto& f : files) {
    const Plane hr = crop_to_multiple(read_luma(f), 6);
    const Plane lr = degrade(hr, 3);
    const auto ph = spectrum_profile(hr, dct, 2);
    const auto pl = spectrum_profile(lr, dct, 2);
    const double rho = index_rank_correlation(spectrum_log_gap(ph, pl));
    abs_sum += index_rank_correlation(spectrum_abs_gap(ph, pl));
    lowest = std::min(lowest, rho);
    per_image += " " + f.stem().string() + "=" + fmt(rho);
  }
  info = "absolute-gap spearman mean " + fmt(abs_sum / static_cast<double>(files.size())) +
         " (log-ratio gap is the asserted quantity)";
  return {files.size() >= 3 && lowest > 0.5,
          "min_spearman=" + fmt(lowest) + " (want > 0.5)" + per_image};
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// 10. Identical config and seed give identical checkpoints.
Verdict reproducibility(const std::vector<Plane>& images) {
  TrainConfig c = desk_config();
  c.epochs_phase1 = 2;
  c.epochs_phase2 = 2;
  const fs::path a = fs::temp_directory_path() / "ordsr_acceptance_a.ckpt";
  const fs::path b = fs::temp_directory_path() / "ordsr_acceptance_b.ckpt";
  save_checkpoint(a, quiet_train(c, images).network, {{"config", c.to_json()}});
  save_checkpoint(b, quiet_train(c, images).network, {{"config", c.to_json()}});
  const std::string ba = file_bytes(a), bb = file_bytes(b);
  fs::remove(a);
  fs::remove(b);
  return {!ba.empty() && ba == bb,
          "checkpoint_bytes=" + std::to_string(ba.size()) + " identical=" +
              (ba == bb ? "yes" : "no")};
}

struct Criterion {
  int id;
  std::string name;
  double limit_seconds;  // 0: no runtime limit
  std::function<Verdict(std::string&)> run;
};

}  // namespace

int main() {
  const std::vector<Plane> train_images = load_dir(kData / "train");
  const std::vector<Criterion> criteria = {
      {1, "transform oracle equivalence", 10, [](std::string&) { return oracle_equivalence(); }},
      {2, "perfect reconstruction", 10, [](std::string&) { return perfect_reconstruction(); }},
      {3, "gradient correctness", 120, [](std::string&) { return gradient_correctness(); }},
      {4, "basis validity", 0, [](std::string&) { return basis_validity(); }},
      {5, "parameter and memory arithmetic", 0, [](std::string&) { return parameter_memory(); }},
      {6, "regularizer efficacy", 600,
       [&](std::string&) { return regularizer_efficacy(train_images); }},
      {7, "desk-scale SR gain", 1800,
       [&](std::string& info) { return desk_gain(train_images, info); }},
      {8, "residual identity", 0, [](std::string&) { return residual_identity(); }},
      {9, "spectrum profile", 60, [](std::string& info) { return spectrum_profile_claim(info); }},
      {10, "reproducibility", 0, [&](std::string&) { return reproducibility(train_images); }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    std::string info;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run(info);
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.limit_seconds == 0 || secs < c.limit_seconds;
    const bool passed = v.passed && in_time;
    failures += passed ? 0 : 1;
    std::cout << "criterion " << c.id << " " << (passed ? "PASS" : "FAIL") << " " << c.name
              << ": " << v.detail << " runtime=" << fmt(secs) << "s";
    if (c.limit_seconds > 0) std::cout << " (limit " << fmt(c.limit_seconds) << "s)";
    std::cout << std::endl;
    if (!info.empty()) std::cout << "  info: " << info << std::endl;
  }
  std::cout << (failures == 0 ? "ALL CRITERIA PASS" : std::to_string(failures) +
                                                          " CRITERIA FAIL")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
