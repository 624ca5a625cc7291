#include <gtest/gtest.h>

#include <cmath>

#include "ordsr/objective.hpp"
#include "test_util.hpp"

namespace ordsr {
namespace {

using testing::random_plane;

Architecture tiny_arch() {
  Architecture a;
  a.n = 4; a.stride = 2; a.threshold = 3; a.depth = 3; a.filters = 4;
  a.first_kernel = 3; a.kernel = 3;
  return a;
}

// Tiny net away from every stationary point: perturbed bank, random biases.
Network tiny_net(Variant v, std::uint64_t seed) {
  Network net = build_network(tiny_arch(), v, seed);
  Rng rng(seed + 1000);
  for (std::size_t i = 0; i < net.bank.count(); ++i) {
    for (double& w : net.bank[i].values.values()) w += 0.05 * rng.uniform(-1.0, 1.0);
  }
  for (auto& l : net.layers) {
    for (double& b : l.biases) b = 0.05 * rng.uniform(-1.0, 1.0);
  }
  return net;
}

TEST(Loss, VanishesAtDctPointWithIdentityTarget) {
  const Network net = zero_network(Architecture::standard());
  const Plane x = random_plane(16, 16, 1);
  const LossBreakdown b = loss(net, x, x, 1e-4);
  EXPECT_LT(b.mse, 1e-24);
  EXPECT_LT(b.orthogonality, 1e-24);
  EXPECT_LT(b.complexity, 1e-24);
  EXPECT_EQ(b.weight_decay, 0.0);
  EXPECT_LT(b.total, 1e-24);
}

TEST(Loss, ScaledBankPenalties) {
  Network net = zero_network(Architecture::standard());
  net.bank = dct_basis(8).scaled(2.0);
  net.gamma = 3.5; net.lambda = 0.75; net.cdct_trainable = true;
  const Plane x = random_plane(16, 16, 1);
  const LossBreakdown b = loss(net, x, x, 1e-4);
  EXPECT_LT(b.orthogonality, 1e-20);
  double expected = 0.0;
  const FilterBank reference = dct_basis(8);
  for (const auto& f : reference.filters()) {
    const double v = filter_variance(f.values);
    expected += 0.5 * 9.0 * v * v;
  }
  EXPECT_NEAR(b.complexity, expected, 1e-15);
}

TEST(Loss, OrderedPairOrthogonality) {
  // 1x2 "filters" are not a square bank, so embed [1,0] as a 2x2 filter.
  std::vector<Filter> filters(4, Filter{Plane(2, 2), FilterTag::Learned});
  filters[0].values(0, 0) = 1.0;
  filters[1].values(0, 0) = 1.0;
  const FilterBank bank(2, filters);
  EXPECT_DOUBLE_EQ(orthogonality_term(bank), 1.0);
}

TEST(Loss, TotalIsWeightedSum) {
  const Network net = tiny_net(Variant::Ordsr, 3);
  const LossBreakdown b =
      loss(net, random_plane(12, 12, 1), random_plane(12, 12, 2), 1e-3);
  EXPECT_NEAR(b.total,
              b.mse + b.sigma * b.weight_decay + b.gamma * b.orthogonality +
                  b.lambda * b.complexity,
              1e-15 * std::abs(b.total));
  EXPECT_GT(b.weight_decay, 0.0);
  EXPECT_GT(b.orthogonality, 0.0);
  EXPECT_GT(b.complexity, 0.0);
}

TEST(Loss, RejectsMismatchedDims) {
  const Network net = tiny_net(Variant::Ordsr, 1);
  EXPECT_THROW(loss(net, random_plane(12, 12, 1), random_plane(12, 16, 1), 0.0),
               std::invalid_argument);
}

TEST(VarianceGradient, HandCase) {
  Plane f(2, 2);
  f(0, 0) = 1; f(0, 1) = 2; f(1, 0) = 3; f(1, 1) = 4;
  const Plane g = variance_gradient(f);
  EXPECT_DOUBLE_EQ(g(0, 0), -1.0);
  // finite difference of the variance itself
  const double h = 1e-6;
  for (std::size_t e = 0; e < 4; ++e) {
    Plane p = f, m = f;
    p.values()[e] += h;
    m.values()[e] -= h;
    EXPECT_NEAR(g.values()[e], (filter_variance(p) - filter_variance(m)) / (2 * h), 1e-8);
  }
}

TEST(VarianceGradient, SumsToZero) {
  const Plane g = variance_gradient(random_plane(8, 8, 5));
  double s = 0.0;
  for (double v : g.values()) s += v;
  EXPECT_NEAR(s, 0.0, 1e-14);
}

TEST(Regularizers, ComplexityIsPermutationInvariant) {
  FilterBank bank = random_bank(4, 2);
  const double before = complexity_term(bank);
  auto vals = bank[5].values.values();
  std::reverse(vals.begin(), vals.end());
  EXPECT_NEAR(complexity_term(bank), before, 1e-16);
}

TEST(Regularizers, OrthogonalityGradientVanishesOnOrthogonalBanks) {
  for (const FilterBank& bank :
       {dct_basis(4), random_orthonormal_bank(4, 3), dct_basis(4).scaled(3.0)}) {
    for (const Plane& g : orthogonality_gradient(bank)) {
      for (double v : g.values()) EXPECT_NEAR(v, 0.0, 1e-12);
    }
  }
}

TEST(Gradients, StationaryAtDctPoint) {
  Network net = zero_network(tiny_arch());
  net.cdct_trainable = true;
  net.gamma = 3.5;
  net.lambda = 0.75;
  const Plane x = random_plane(12, 12, 4);
  const GradientSet g = gradients(net, x, x, 1e-4);
  ASSERT_TRUE(g.d_cdct.has_value());
  EXPECT_LT(g.max_abs(), 1e-12);
}

TEST(Gradients, FrozenBankHasNoTransformGradient) {
  const Network net = tiny_net(Variant::DctDsr, 2);
  const GradientSet g =
      gradients(net, random_plane(12, 12, 1), random_plane(12, 12, 2), 1e-4);
  EXPECT_FALSE(g.d_cdct.has_value());
  EXPECT_EQ(net.gamma, 0.0);
  EXPECT_EQ(net.lambda, 0.0);
}

TEST(Gradients, MatchFiniteDifferencesAllTerms) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Network net = tiny_net(Variant::Ordsr, seed);
    const Plane x = random_plane(12, 12, 10 + seed);
    const Plane y = random_plane(12, 12, 20 + seed);
    const GradientCheck r = gradient_check(net, x, y, 1e-2);
    EXPECT_LT(r.max_rel_error, 1e-6) << "seed " << seed;
    EXPECT_GT(r.checked, 1000u);
  }
}

TEST(Gradients, MatchFiniteDifferencesEachTermAlone) {
  const Plane x = random_plane(12, 12, 31);
  const Plane y = random_plane(12, 12, 32);
  struct Case { double sigma, gamma, lambda; };
  for (const Case c : {Case{0, 0, 0}, Case{0.5, 0, 0}, Case{0, 3.5, 0}, Case{0, 0, 0.75}}) {
    Network net = tiny_net(Variant::Ordsr, 7);
    net.gamma = c.gamma;
    net.lambda = c.lambda;
    const GradientCheck r = gradient_check(net, x, y, c.sigma);
    EXPECT_LT(r.max_rel_error, 1e-6) << c.sigma << " " << c.gamma << " " << c.lambda;
  }
}

TEST(Gradients, NoFinalRelu) {
  Architecture a = tiny_arch();
  a.final_relu = false;
  Network net = build_network(a, Variant::DsrUc, 2);
  const GradientCheck r =
      gradient_check(net, random_plane(12, 12, 1), random_plane(12, 12, 2), 1e-3);
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Gradients, BatchAveragesDataTerm) {
  const Network net = tiny_net(Variant::Ordsr, 5);
  const Plane x1 = random_plane(12, 12, 1), y1 = random_plane(12, 12, 2);
  const Plane x2 = random_plane(12, 12, 3), y2 = random_plane(12, 12, 4);
  const PairView batch[] = {{&x1, &y1}, {&x2, &y2}};
  const Evaluation e = evaluate_batch(net, batch, 1e-3);
  const Evaluation e1 = evaluate(net, x1, y1, 1e-3);
  const Evaluation e2 = evaluate(net, x2, y2, 1e-3);
  EXPECT_NEAR(e.loss.mse, 0.5 * (e1.loss.mse + e2.loss.mse), 1e-14);
  EXPECT_NEAR(e.gradients.d_biases[0][1],
              0.5 * (e1.gradients.d_biases[0][1] + e2.gradients.d_biases[0][1]), 1e-14);
}

TEST(FiniteDiff, RichardsonStableOnBias) {
  const Network net = tiny_net(Variant::Ordsr, 8);
  const Plane x = random_plane(12, 12, 1), y = random_plane(12, 12, 2);
  const ParamCoordinate c{ParamKind::Bias, 2, 1};
  const auto a = finite_diff_oracle(net, x, y, c, 1e-4, 1e-4);
  const auto b = finite_diff_oracle(net, x, y, c, 1e-5, 1e-4);
  ASSERT_FALSE(a.crosses_kink);
  EXPECT_NEAR(a.value, b.value, 1e-7 * std::max(1.0, std::abs(b.value)));
  EXPECT_EQ(finite_diff_oracle(net, x, y, c, 1e-5, 1e-4).value, b.value);
}

TEST(FiniteDiff, FlagsKinks) {
  // A bias sitting exactly where one of its pre-activations is zero.
  Network net = tiny_net(Variant::Ordsr, 9);
  const Plane x = random_plane(12, 12, 1), y = random_plane(12, 12, 2);
  const ForwardTrace t = trace_forward(net, x);
  net.layers[0].biases[0] -= t.preact[0][5];
  const auto fd = finite_diff_oracle(net, x, y, {ParamKind::Bias, 0, 0}, 1e-5, 0.0);
  EXPECT_TRUE(fd.crosses_kink);
}

TEST(FiniteDiff, UnusedPenaltyContributesNothing) {
  Network net = tiny_net(Variant::Ordsr, 10);
  net.gamma = 0.0;
  net.lambda = 0.0;
  const Plane x = random_plane(12, 12, 1);
  Network probe = net;
  const double base = loss(probe, x, x, 0.0).orthogonality * probe.gamma;
  parameter_at(probe, {ParamKind::Cdct, 3, 2}) += 1e-3;
  EXPECT_EQ(loss(probe, x, x, 0.0).orthogonality * probe.gamma, base);
}

TEST(Clip, Elementwise) {
  GradientSet g = GradientSet::zeros_like(tiny_net(Variant::Ordsr, 1));
  g.d_biases[0] = {0.9, -0.9, 0.2, -0.3};
  const GradientSet c = gradient_clip(g, 0.5);
  EXPECT_EQ(c.d_biases[0], (std::vector<double>{0.5, -0.5, 0.2, -0.3}));
  EXPECT_LE(c.max_abs(), 0.5);
  EXPECT_THROW(gradient_clip(g, 0.0), std::invalid_argument);
}

TEST(Clip, GlobalNorm) {
  GradientSet g = GradientSet::zeros_like(tiny_net(Variant::Ordsr, 1));
  g.d_biases[0] = {3.0, 4.0, 0.0, 0.0};
  const GradientSet c = gradient_clip(g, 1.0, ClipMode::GlobalNorm);
  EXPECT_NEAR(c.d_biases[0][0], 0.6, 1e-15);
  EXPECT_NEAR(c.d_biases[0][1], 0.8, 1e-15);
}

}  // namespace
}  // namespace ordsr
