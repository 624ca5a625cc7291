#include <algorithm>
#include <cmath>
#include <set>

#include "app.hpp"
#include "ordsr/cdct_layer.hpp"
#include "ordsr/objective.hpp"
#include "ordsr/rng.hpp"

namespace ordsr::app {

namespace {

Plane random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  Plane p(h, w);
  for (double& v : p.values()) v = rng.uniform();
  return p;
}

double max_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t e = 0; e < a.size(); ++e) m = std::max(m, std::abs(a[e] - b[e]));
  return m;
}

CheckEntry entry(std::string name, double deviation, double tolerance,
                 nlohmann::json detail = nlohmann::json::object()) {
  CheckEntry e;
  e.name = std::move(name);
  e.max_deviation = deviation;
  e.tolerance = tolerance;
  e.passed = std::isfinite(deviation) && deviation <= tolerance;
  e.detail = std::move(detail);
  return e;
}

CheckEntry gram_check(const FilterBank& bank) {
  const Plane g = gram_matrix(bank);
  double worst = 0.0;
  double worst_row = -1.0;
  std::size_t worst_index = 0;
  for (std::size_t i = 0; i < bank.count(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < bank.count(); ++j) {
      const double d = std::abs(g(i, j) - (i == j ? 1.0 : 0.0));
      worst = std::max(worst, d);
      row += d;
    }
    // a corrupted filter disturbs its whole row, the others only one column
    if (row > worst_row) {
      worst_row = row;
      worst_index = i;
    }
  }
  // 1-based filter index, matching the zig-zag numbering
  return entry("basis_gram", worst, 1e-12, {{"worst_filter", worst_index + 1}});
}

}  // namespace

nlohmann::json CheckEntry::to_json() const {
  return {{"check", name},
          {"passed", passed},
          {"max_deviation", max_deviation},
          {"tolerance", tolerance},
          {"detail", detail}};
}

std::vector<CheckEntry> run_checks(const CheckOptions& options) {
  FilterBank bank = options.bank_file ? load_filter_bank(*options.bank_file)
                                      : dct_basis(options.n);
  const int n = bank.n();
  for (int s : options.strides) {
    if (s < 1 || n % s != 0) {
      throw UsageError("stride " + std::to_string(s) + " does not divide block size " +
                       std::to_string(n));
    }
  }
  if (options.images < 1) throw UsageError("need at least one test image");

  std::vector<CheckEntry> out;

  // zig-zag bijection over the supported block sizes
  double zig_failures = 0;
  for (int m = 2; m <= 16; ++m) {
    const ZigZag zz(m);
    std::set<int> seen;
    for (int k1 = 0; k1 < m; ++k1) {
      for (int k2 = 0; k2 < m; ++k2) {
        const int i = zz.index(k1, k2);
        seen.insert(i);
        if (zz.position(i) != BasisIndex2D{k1, k2}) ++zig_failures;
      }
    }
    if (seen.size() != static_cast<std::size_t>(m * m)) ++zig_failures;
  }
  out.push_back(entry("zigzag_bijection", zig_failures, 0.0));

  Plane dc(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
  for (double& v : dc.values()) v = 1.0 / n;
  Plane pm(2, 2);
  pm(0, 0) = 1; pm(0, 1) = -1; pm(1, 0) = 1; pm(1, 1) = -1;
  out.push_back(entry("filter_variance",
                      std::max(std::abs(filter_variance(dc)),
                               std::abs(filter_variance(pm) - 4.0 / 3.0)),
                      0.0));

  out.push_back(gram_check(bank));

  const auto side = static_cast<std::size_t>(std::max(32, 2 * n));
  const FilterBank dct = dct_basis(n);
  const FilterBank ortho = random_orthonormal_bank(n, derive_seed(options.seed, 0x0A7));
  for (int s : options.strides) {
    double oracle = 0.0, round_dct = 0.0, round_ortho = 0.0, round_bank = 0.0, adjoint = 0.0;
    for (int k = 0; k < options.images; ++k) {
      const Plane x = random_image(side, side, derive_seed(options.seed, 1000 * s + k));
      const DctCube cube = cdct_forward(x, dct, s);
      oracle = std::max(oracle, max_diff(cube.data, block_dct_oracle(x, s, n).data));
      round_dct = std::max(round_dct, max_diff(cdct_inverse(cube, dct).values(), x.values()));
      round_ortho = std::max(
          round_ortho, max_diff(cdct_inverse(cdct_forward(x, ortho, s), ortho).values(), x.values()));
      if (options.bank_file) {
        round_bank = std::max(
            round_bank, max_diff(cdct_inverse(cdct_forward(x, bank, s), bank).values(), x.values()));
      }
      DctCube f = cube;
      Rng rng(derive_seed(options.seed, 7000 + k));
      for (double& v : f.data) v = rng.uniform(-1.0, 1.0);
      double lhs = 0.0, rhs = 0.0;
      for (std::size_t e = 0; e < f.data.size(); ++e) lhs += cube.data[e] * f.data[e];
      const Plane back = cdct_inverse_unweighted(f, dct);
      for (std::size_t e = 0; e < x.size(); ++e) rhs += x.values()[e] * back.values()[e];
      adjoint = std::max(adjoint, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
    }
    const nlohmann::json where = {{"stride", s}, {"images", options.images}, {"size", side}};
    out.push_back(entry("forward_matches_block_dct", oracle, 1e-10, where));
    out.push_back(entry("reconstruction_dct", round_dct, 1e-10, where));
    out.push_back(entry("reconstruction_orthonormal", round_ortho, 1e-9, where));
    if (options.bank_file) out.push_back(entry("reconstruction_bank", round_bank, 1e-9, where));
    out.push_back(entry("inverse_is_adjoint", adjoint, 1e-10, where));
  }

  if (options.gradients) {
    Architecture arch;
    arch.n = 4; arch.stride = 2; arch.threshold = 3; arch.depth = 3; arch.filters = 4;
    arch.first_kernel = 3; arch.kernel = 3;
    Network net = build_network(arch, Variant::Ordsr, options.seed);
    Rng rng(derive_seed(options.seed, 0x6AD));
    for (std::size_t i = 0; i < net.bank.count(); ++i) {
      for (double& w : net.bank[i].values.values()) w += 0.05 * rng.uniform(-1.0, 1.0);
    }
    for (auto& l : net.layers) {
      for (double& b : l.biases) b = 0.05 * rng.uniform(-1.0, 1.0);
    }
    const Plane x = random_image(12, 12, derive_seed(options.seed, 0x71));
    const Plane y = random_image(12, 12, derive_seed(options.seed, 0x72));
    const GradientCheck g = gradient_check(net, x, y, 1e-3);
    out.push_back(entry("gradients_vs_finite_differences", g.max_rel_error, 1e-6,
                        {{"checked", g.checked}, {"kinks", g.kinks}}));
  }
  return out;
}

}  // namespace ordsr::app
