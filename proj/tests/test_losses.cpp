#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "posegrid/losses.hpp"
#include "support.hpp"

using namespace posegrid;
using namespace testing_support;

namespace {

// InfoNCE straight from the definition, no max shift.
double oracle_infonce(const std::vector<double>& s, std::size_t n, double tau, bool include_positive) {
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double denom = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      if (include_positive || k != i) denom += std::exp(s[i * n + k] / tau);
    loss -= std::log(std::exp(s[i * n + i] / tau) / denom);
  }
  return loss;
}

struct Batch {
  std::vector<FeatureGrid> q, t;
  std::vector<BinaryMask> m;
};

Batch random_batch(std::mt19937_64& rng, std::size_t n, std::size_t h, std::size_t w, std::size_t c) {
  Batch b;
  for (std::size_t i = 0; i < n; ++i) {
    b.q.push_back(random_grid(rng, h, w, c));
    b.t.push_back(random_grid(rng, h, w, c));
    b.m.push_back(random_mask(rng, h, w));
  }
  return b;
}

// Loss of a batch whose raw values are given as one flat vector
// (queries first, then templates), via the naive similarity oracle.
double batch_loss_oracle(const Batch& shape, const std::vector<double>& x, double tau) {
  const std::size_t n = shape.q.size();
  const std::size_t per = shape.q[0].data().size();
  auto grid = [&](std::size_t which) {
    const auto& ref = shape.q[0];
    return FeatureGrid(ref.height(), ref.width(), ref.channels(),
                       std::vector<double>(x.begin() + which * per, x.begin() + (which + 1) * per));
  };
  std::vector<double> s(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) s[i * n + k] = oracle_similarity(grid(i), grid(n + k), shape.m[k], false, 0);
  return oracle_infonce(s, n, tau, true);
}

std::vector<double> flatten(const Batch& b) {
  std::vector<double> x;
  for (const auto& g : b.q) x.insert(x.end(), g.data().begin(), g.data().end());
  for (const auto& g : b.t) x.insert(x.end(), g.data().begin(), g.data().end());
  return x;
}

std::vector<double> flatten(const FeatureGradients& g) {
  std::vector<double> x;
  for (const auto& q : g.query_grads) x.insert(x.end(), q.data().begin(), q.data().end());
  for (const auto& t : g.template_grads) x.insert(x.end(), t.data().begin(), t.data().end());
  return x;
}

}  // namespace

TEST(PositivePair, Threshold) {
  const Viewpoint a({0.0, 0.0, 1.0});
  auto at = [](double deg) {
    const double r = deg * std::numbers::pi / 180.0;
    return Viewpoint({std::sin(r), 0.0, std::cos(r)});
  };
  EXPECT_TRUE(is_positive_pair({1, a}, {1, at(3.0)}));
  EXPECT_FALSE(is_positive_pair({1, a}, {1, at(5.0)}));
  EXPECT_TRUE(is_positive_pair({1, a}, {1, at(4.999)}));
  EXPECT_FALSE(is_positive_pair({1, a}, {2, a}));
}

TEST(InfoNce, Examples) {
  EXPECT_NEAR(infonce_loss(SimMatrix(4, std::vector<double>(16, 0.3))), 4.0 * std::log(4.0), 1e-12);
  const SimMatrix eye(2, {1.0, 0.0, 0.0, 1.0});
  EXPECT_NEAR(infonce_loss(eye, 0.1), 2.0 * std::log1p(std::exp(-10.0)), 1e-12);
  EXPECT_NEAR(infonce_loss(eye, 0.1, InfoNceDenominator::negatives_only), -20.0, 1e-12);
}

TEST(InfoNce, Errors) {
  EXPECT_ERRC(infonce_loss(SimMatrix(2), 0.0), Errc::parameter);
  EXPECT_ERRC(infonce_loss(SimMatrix(1), 0.1), Errc::batch_size);
  EXPECT_ERRC(infonce_grad_sim(SimMatrix(1), 0.1), Errc::batch_size);
  EXPECT_ERRC(SimMatrix(2, {0.0, std::numeric_limits<double>::infinity(), 0.0, 0.0}), Errc::validation);
}

TEST(InfoNce, MatchesOracleNonNegativeAndRowShiftInvariant) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + trial % 6;
    std::vector<double> v(n * n);
    for (double& x : v) x = u(rng);
    const SimMatrix s(n, v);
    const double loss = infonce_loss(s, 0.1);
    EXPECT_NEAR(loss, oracle_infonce(v, n, 0.1, true), 1e-9);
    EXPECT_NEAR(infonce_loss(s, 0.1, InfoNceDenominator::negatives_only), oracle_infonce(v, n, 0.1, false), 1e-9);
    EXPECT_GE(loss, 0.0);
    std::vector<double> shifted = v;
    for (std::size_t k = 0; k < n; ++k) shifted[k] += 3.0;
    EXPECT_NEAR(infonce_loss(SimMatrix(n, shifted), 0.1), loss, 1e-9);
  }
}

TEST(InfoNce, VanishingNegativeLeavesLossUnchanged) {
  const SimMatrix small(2, {0.9, 0.1, 0.2, 0.8});
  // Third pair whose cross similarities are so negative exp underflows.
  const SimMatrix big(3, {0.9, 0.1, -1e4, 0.2, 0.8, -1e4, -1e4, -1e4, 1e4});
  EXPECT_NEAR(infonce_loss(big, 0.1), infonce_loss(small, 0.1), 1e-9);
}

TEST(InfoNceGrad, Examples) {
  const SimMatrix g = infonce_grad_sim(SimMatrix(2, std::vector<double>(4, 0.7)), 0.1);
  EXPECT_NEAR(g(0, 0), -5.0, 1e-12);
  EXPECT_NEAR(g(0, 1), 5.0, 1e-12);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(25);
  for (double& x : v) x = u(rng);
  const SimMatrix r = infonce_grad_sim(SimMatrix(5, v), 0.1);
  for (std::size_t i = 0; i < 5; ++i) {
    double row = 0.0;
    for (std::size_t k = 0; k < 5; ++k) row += r(i, k);
    EXPECT_NEAR(row, 0.0, 1e-12);
  }
}

TEST(InfoNceGrad, MatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto mode : {InfoNceDenominator::all, InfoNceDenominator::negatives_only}) {
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t n = 2 + trial % 3;
      std::vector<double> v(n * n);
      for (double& x : v) x = u(rng);
      const SimMatrix g = infonce_grad_sim(SimMatrix(n, v), 0.1, mode);
      const auto fd = central_difference(
          [&](const std::vector<double>& x) { return oracle_infonce(x, n, 0.1, mode == InfoNceDenominator::all); },
          v);
      EXPECT_LT(max_relative_error({g.values().begin(), g.values().end()}, fd), 1e-4);
    }
  }
}

TEST(LossGradFeatures, MatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Batch b = random_batch(rng, 2 + trial % 3, 3, 3, 4);
    const FeatureGradients g = loss_grad_features(b.q, b.t, b.m, 0.1);
    const auto fd = central_difference([&](const std::vector<double>& x) { return batch_loss_oracle(b, x, 0.1); },
                                       flatten(b));
    EXPECT_LT(max_relative_error(flatten(g), fd), 1e-4);
    EXPECT_NEAR(g.loss, batch_loss_oracle(b, flatten(b), 0.1), 1e-9);
    EXPECT_FALSE(g.zero_cell_encountered);
  }
}

TEST(LossGradFeatures, ZeroOutsideMasksAndOrthogonalToCells) {
  std::mt19937_64 rng(5);
  Batch b = random_batch(rng, 3, 4, 4, 3);
  // Cell 0 outside every mask.
  for (auto& m : b.m) {
    m.set(0, false);
    if (m.popcount() == 0) m.set(5, true);
  }
  const FeatureGradients g = loss_grad_features(b.q, b.t, b.m, 0.1);
  for (const auto& grads : {g.query_grads, g.template_grads})
    for (const auto& grid : grads)
      for (double x : grid.cell(0)) EXPECT_EQ(x, 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t l = 0; l < 16; ++l) {
      double d = 0.0;
      for (std::size_t k = 0; k < 3; ++k) d += g.query_grads[i].cell(l)[k] * b.q[i].cell(l)[k];
      EXPECT_NEAR(d, 0.0, 1e-6);
    }
  }
}

TEST(LossGradFeatures, ZeroCellInMaskFlagged) {
  std::mt19937_64 rng(6);
  Batch b = random_batch(rng, 2, 2, 2, 3);
  b.m[0] = BinaryMask::full(2, 2);
  for (double& x : b.t[0].cell(1)) x = 0.0;
  const FeatureGradients g = loss_grad_features(b.q, b.t, b.m, 0.1);
  EXPECT_TRUE(g.zero_cell_encountered);
  for (double x : g.template_grads[0].cell(1)) EXPECT_EQ(x, 0.0);
}

TEST(LossGradFeatures, Errors) {
  std::mt19937_64 rng(7);
  Batch b = random_batch(rng, 2, 2, 2, 3);
  b.m[1] = BinaryMask(2, 2);
  EXPECT_ERRC(loss_grad_features(b.q, b.t, b.m), Errc::empty_mask);
  b.m.pop_back();
  EXPECT_ERRC(loss_grad_features(b.q, b.t, b.m), Errc::batch_size);
}

TEST(Triplet, Examples) {
  EXPECT_NEAR(triplet_loss(0.0, 1e12, 0.01), 0.0, 1e-9);
  EXPECT_EQ(triplet_loss(0.0, 0.7, 0.01, TripletForm::as_printed), 1.0);
  EXPECT_NEAR(triplet_loss(1.0, 1.0, kHarnessMargin), 1.0 - 1.0 / 1.01, 1e-12);
  EXPECT_ERRC(triplet_loss(-1.0, 1.0, 0.01), Errc::parameter);
  EXPECT_ERRC(triplet_loss(1.0, 1.0, 0.0), Errc::parameter);
}

TEST(Pairwise, Sums) {
  EXPECT_EQ(pairwise_loss({}), 0.0);
  const std::vector<double> two{0.5, 0.25};
  EXPECT_EQ(pairwise_loss(two), 0.75);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  std::vector<double> v(100);
  double sum = 0.0;
  for (double& x : v) sum += (x = u(rng));
  EXPECT_NEAR(pairwise_loss(v), sum, 1e-12);
  const std::vector<double> bad{0.1, -0.1};
  EXPECT_ERRC(pairwise_loss(bad), Errc::parameter);
}

TEST(SimilarityMatrix, MatchesOracle) {
  std::mt19937_64 rng(9);
  const Batch b = random_batch(rng, 3, 4, 4, 5);
  const SimMatrix s = similarity_matrix(b.q, b.t, b.m);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(s(i, k), oracle_similarity(b.q[i], b.t[k], b.m[k], false, 0), 1e-9);
}
